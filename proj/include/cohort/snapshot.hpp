#pragma once

// Binary index snapshot. All integers little-endian.
//
//   magic        4 bytes  "CRIX"
//   version      u32      kSnapshotVersion
//   sections     u32 count, then per section:
//                  str doc_id, str person_id, str section_id, str heading, str body,
//                  i32 encounter_date (days since 1970-01-01),
//                  u32 text_len, u32 concept_len,
//                  u32 mention count, then per mention:
//                    str concept_id, str matched_text, u32 start, u32 end,
//                    u8 modifier bits, u8 mention type
//   patients     u32 count, then per patient (ascending person_id):
//                  str person_id, i32 birth_date, u8 gender,
//                  u32 event count, then per event: str concept_id, i32 event_date
//                  u32 section count, then u32 handles
//   text         u32 term count, then per term (ascending): str term,
//                  u32 posting count, then per posting: u32 section, u32 tf
//   concepts     u32 concept count, then per concept (ascending): str concept_id,
//                  u32 posting count, then per posting:
//                    u32 section, u32 affirmed_tf, u32 total_tf, u8 modifier bits
//   stats        u32 total_sections, u64 total_text_len, u64 total_concept_len,
//                f64 avg_text_len, f64 avg_concept_len (IEEE-754 bits as u64)
//
// str is a u32 byte length followed by the UTF-8 bytes.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "errors.hpp"
#include "index.hpp"

namespace cohort {

inline constexpr char kSnapshotMagic[4] = {'C', 'R', 'I', 'X'};
inline constexpr std::uint32_t kSnapshotVersion = 1;

namespace detail {

class ByteWriter {
public:
    void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i)
            u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i)
            u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void str(std::string_view s) {
        u32(static_cast<std::uint32_t>(s.size()));
        out_.append(s);
    }
    void raw(const char* p, std::size_t n) { out_.append(p, n); }

    std::string take() { return std::move(out_); }

private:
    std::string out_;
};

class ByteReader {
public:
    explicit ByteReader(std::string_view in) : in_(in) {}

    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(in_[pos_++]);
    }
    std::uint32_t u32() {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(u8()) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(u8()) << (8 * i);
        return v;
    }
    std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str() {
        auto n = u32();
        need(n);
        std::string s(in_.substr(pos_, n));
        pos_ += n;
        return s;
    }
    /// Element count, bounded by the bytes left so corrupt input cannot
    /// trigger huge allocations.
    std::uint32_t count(std::size_t min_element_bytes) {
        auto n = u32();
        if (min_element_bytes && n > (in_.size() - pos_) / min_element_bytes)
            throw ParseError("snapshot: element count exceeds file size");
        return n;
    }
    bool done() const { return pos_ == in_.size(); }

private:
    void need(std::size_t n) const {
        if (in_.size() - pos_ < n)
            throw ParseError("snapshot: unexpected end of data");
    }

    std::string_view in_;
    std::size_t pos_ = 0;
};

} // namespace detail

inline std::string serialize_index(const CohortIndex& ix) {
    detail::ByteWriter w;
    w.raw(kSnapshotMagic, 4);
    w.u32(kSnapshotVersion);

    w.u32(static_cast<std::uint32_t>(ix.sections().size()));
    for (const auto& s : ix.sections()) {
        w.str(s.doc_id);
        w.str(s.person_id);
        w.str(s.section_id);
        w.str(s.heading);
        w.str(s.body);
        w.i32(s.encounter_date.days_since_epoch());
        w.u32(s.text_len);
        w.u32(s.concept_len);
        w.u32(static_cast<std::uint32_t>(s.mentions.size()));
        for (const auto& m : s.mentions) {
            w.str(m.concept_id);
            w.str(m.matched_text);
            w.u32(static_cast<std::uint32_t>(m.start));
            w.u32(static_cast<std::uint32_t>(m.end));
            w.u8(m.modifiers.bits());
            w.u8(static_cast<std::uint8_t>(m.mention_type));
        }
    }

    w.u32(static_cast<std::uint32_t>(ix.patients().size()));
    for (const auto& [id, p] : ix.patients()) {
        w.str(p.person_id);
        w.i32(p.birth_date.days_since_epoch());
        w.u8(static_cast<std::uint8_t>(p.gender));
        w.u32(static_cast<std::uint32_t>(p.events.size()));
        for (const auto& e : p.events) {
            w.str(e.concept_id);
            w.i32(e.event_date.days_since_epoch());
        }
        w.u32(static_cast<std::uint32_t>(p.sections.size()));
        for (auto h : p.sections)
            w.u32(h);
    }

    w.u32(static_cast<std::uint32_t>(ix.text_postings().size()));
    for (const auto& [term, list] : ix.text_postings()) {
        w.str(term);
        w.u32(static_cast<std::uint32_t>(list.size()));
        for (const auto& p : list) {
            w.u32(p.section);
            w.u32(p.tf);
        }
    }

    w.u32(static_cast<std::uint32_t>(ix.concept_postings().size()));
    for (const auto& [id, list] : ix.concept_postings()) {
        w.str(id);
        w.u32(static_cast<std::uint32_t>(list.size()));
        for (const auto& p : list) {
            w.u32(p.section);
            w.u32(p.affirmed_tf);
            w.u32(p.total_tf);
            w.u8(p.modifier_bits);
        }
    }

    const auto& st = ix.stats();
    w.u32(st.total_sections);
    w.u64(st.total_text_len);
    w.u64(st.total_concept_len);
    w.f64(st.avg_text_len);
    w.f64(st.avg_concept_len);
    return w.take();
}

class SnapshotReader {
public:
    static CohortIndex read(std::string_view bytes) {
        detail::ByteReader r(bytes);
        if (bytes.size() < 8 || std::memcmp(bytes.data(), kSnapshotMagic, 4) != 0)
            throw ParseError("snapshot: bad magic");
        for (int i = 0; i < 4; ++i)
            r.u8();
        auto version = r.u32();
        if (version != kSnapshotVersion)
            throw ParseError("snapshot: unsupported format version " + std::to_string(version));

        CohortIndex ix;
        auto n_sections = r.count(36);
        ix.sections_.reserve(n_sections);
        for (std::uint32_t i = 0; i < n_sections; ++i) {
            SectionEntry s;
            s.doc_id = r.str();
            s.person_id = r.str();
            s.section_id = r.str();
            s.heading = r.str();
            s.body = r.str();
            s.encounter_date = Date(r.i32());
            s.text_len = r.u32();
            s.concept_len = r.u32();
            auto n_mentions = r.count(18);
            for (std::uint32_t k = 0; k < n_mentions; ++k) {
                ConceptMention m;
                m.concept_id = r.str();
                m.matched_text = r.str();
                m.start = r.u32();
                m.end = r.u32();
                m.modifiers = TermModifiers::from_bits(r.u8());
                auto type = r.u8();
                if (type > static_cast<std::uint8_t>(MentionType::Medication))
                    throw ParseError("snapshot: bad mention type");
                m.mention_type = static_cast<MentionType>(type);
                s.mentions.push_back(std::move(m));
            }
            ix.sections_.push_back(std::move(s));
        }

        auto n_patients = r.count(17);
        for (std::uint32_t i = 0; i < n_patients; ++i) {
            PatientEntry p;
            p.person_id = r.str();
            p.birth_date = Date(r.i32());
            auto g = r.u8();
            if (g > static_cast<std::uint8_t>(Gender::Other))
                throw ParseError("snapshot: bad gender");
            p.gender = static_cast<Gender>(g);
            auto n_events = r.count(8);
            for (std::uint32_t k = 0; k < n_events; ++k) {
                StructuredEvent e;
                e.concept_id = r.str();
                e.event_date = Date(r.i32());
                p.events.push_back(std::move(e));
            }
            auto n_handles = r.count(4);
            for (std::uint32_t k = 0; k < n_handles; ++k) {
                auto h = r.u32();
                if (h >= n_sections)
                    throw ParseError("snapshot: section handle out of range");
                p.sections.push_back(h);
            }
            auto id = p.person_id;
            ix.patients_.emplace(std::move(id), std::move(p));
        }

        auto n_terms = r.count(8);
        for (std::uint32_t i = 0; i < n_terms; ++i) {
            auto term = r.str();
            auto& list = ix.text_[term];
            auto n = r.count(8);
            for (std::uint32_t k = 0; k < n; ++k) {
                TextPosting p;
                p.section = r.u32();
                p.tf = r.u32();
                if (p.section >= n_sections)
                    throw ParseError("snapshot: section handle out of range");
                list.push_back(p);
            }
        }

        auto n_concepts = r.count(8);
        for (std::uint32_t i = 0; i < n_concepts; ++i) {
            auto id = r.str();
            auto& list = ix.concepts_[id];
            auto n = r.count(13);
            for (std::uint32_t k = 0; k < n; ++k) {
                ConceptPosting p;
                p.section = r.u32();
                p.affirmed_tf = r.u32();
                p.total_tf = r.u32();
                p.modifier_bits = r.u8();
                if (p.section >= n_sections)
                    throw ParseError("snapshot: section handle out of range");
                list.push_back(p);
            }
        }

        ix.stats_.total_sections = r.u32();
        ix.stats_.total_text_len = r.u64();
        ix.stats_.total_concept_len = r.u64();
        ix.stats_.avg_text_len = r.f64();
        ix.stats_.avg_concept_len = r.f64();
        if (!r.done())
            throw ParseError("snapshot: trailing bytes");
        if (ix.stats_.total_sections != ix.sections_.size())
            throw ParseError("snapshot: section count does not match stats");
        return ix;
    }
};

inline CohortIndex deserialize_index(std::string_view bytes) { return SnapshotReader::read(bytes); }

inline void save_snapshot(const CohortIndex& ix, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw ParseError("cannot write " + path.string());
    auto bytes = serialize_index(ix);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline CohortIndex load_snapshot(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ParseError("cannot open " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_index(bytes);
}

} // namespace cohort
