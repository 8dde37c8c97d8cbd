#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "tokenize.hpp"

namespace cohort {

enum class Domain { Condition, Procedure, Measurement, Drug, Observation, Person };
enum class SourceVocabulary { ICD9, ICD10, CPT, LOCAL_LAB, DRUG_NAME };
enum class MentionType { SignSymptom, DiseaseDisorder, Procedure, Lab, VitalSigns, Medication };

inline constexpr std::array<std::pair<Domain, std::string_view>, 6> kDomainNames{{
    {Domain::Condition, "Condition"},
    {Domain::Procedure, "Procedure"},
    {Domain::Measurement, "Measurement"},
    {Domain::Drug, "Drug"},
    {Domain::Observation, "Observation"},
    {Domain::Person, "Person"},
}};

inline constexpr std::array<std::pair<SourceVocabulary, std::string_view>, 5> kSourceVocabularyNames{{
    {SourceVocabulary::ICD9, "ICD9"},
    {SourceVocabulary::ICD10, "ICD10"},
    {SourceVocabulary::CPT, "CPT"},
    {SourceVocabulary::LOCAL_LAB, "LOCAL_LAB"},
    {SourceVocabulary::DRUG_NAME, "DRUG_NAME"},
}};

inline constexpr std::array<std::pair<MentionType, std::string_view>, 6> kMentionTypeNames{{
    {MentionType::SignSymptom, "SignSymptom"},
    {MentionType::DiseaseDisorder, "DiseaseDisorder"},
    {MentionType::Procedure, "Procedure"},
    {MentionType::Lab, "Lab"},
    {MentionType::VitalSigns, "VitalSigns"},
    {MentionType::Medication, "Medication"},
}};

namespace detail {

template <typename E, std::size_t N>
std::string_view enum_name(const std::array<std::pair<E, std::string_view>, N>& table, E value) {
    for (const auto& [e, name] : table)
        if (e == value)
            return name;
    return "?";
}

template <typename E, std::size_t N>
std::optional<E> enum_parse(const std::array<std::pair<E, std::string_view>, N>& table,
                            std::string_view text) {
    for (const auto& [e, name] : table)
        if (name == text)
            return e;
    return std::nullopt;
}

} // namespace detail

inline std::string_view to_string(Domain d) { return detail::enum_name(kDomainNames, d); }
inline std::string_view to_string(SourceVocabulary v) { return detail::enum_name(kSourceVocabularyNames, v); }
inline std::string_view to_string(MentionType t) { return detail::enum_name(kMentionTypeNames, t); }

inline std::optional<Domain> parse_domain(std::string_view s) { return detail::enum_parse(kDomainNames, s); }
inline std::optional<SourceVocabulary> parse_source_vocabulary(std::string_view s) {
    return detail::enum_parse(kSourceVocabularyNames, s);
}
inline std::optional<MentionType> parse_mention_type(std::string_view s) {
    return detail::enum_parse(kMentionTypeNames, s);
}

/// NLP mention type to CDM table, as used when loading extracted concepts.
constexpr Domain cdm_domain(MentionType t) {
    switch (t) {
    case MentionType::SignSymptom:
    case MentionType::DiseaseDisorder:
        return Domain::Condition;
    case MentionType::Procedure:
        return Domain::Procedure;
    case MentionType::Lab:
    case MentionType::VitalSigns:
        return Domain::Measurement;
    case MentionType::Medication:
        return Domain::Drug;
    }
    return Domain::Condition;
}

/// Mention type assigned to a text match of a concept. Person concepts are
/// never matched in text.
constexpr std::optional<MentionType> mention_type_for(Domain d) {
    switch (d) {
    case Domain::Condition:
        return MentionType::DiseaseDisorder;
    case Domain::Observation:
        return MentionType::SignSymptom;
    case Domain::Procedure:
        return MentionType::Procedure;
    case Domain::Measurement:
        return MentionType::Lab;
    case Domain::Drug:
        return MentionType::Medication;
    case Domain::Person:
        return std::nullopt;
    }
    return std::nullopt;
}

struct Concept {
    std::string concept_id;
    Domain domain = Domain::Condition;
    std::string preferred_name;
    std::optional<std::string> cui;
    std::vector<std::string> synonyms;
    std::vector<std::string> parent_ids;

    bool operator==(const Concept&) const = default;
};

struct CodeMapping {
    SourceVocabulary source_vocabulary = SourceVocabulary::ICD9;
    std::string source_code;
    std::string concept_id;

    bool operator==(const CodeMapping&) const = default;
};

/// Immutable concept vocabulary with source-code mappings and the phrase
/// dictionary used by the text matcher.
class Vocabulary {
public:
    Vocabulary() = default;

    /// Validates every invariant; throws ValidationError on the first violation.
    static Vocabulary build(std::vector<Concept> concepts, std::vector<CodeMapping> mappings) {
        Vocabulary v;
        std::sort(concepts.begin(), concepts.end(),
                  [](const Concept& a, const Concept& b) { return a.concept_id < b.concept_id; });
        for (std::size_t i = 0; i < concepts.size(); ++i) {
            const auto& c = concepts[i];
            if (c.concept_id.empty())
                throw ValidationError("empty concept_id");
            if (c.preferred_name.empty())
                throw ValidationError("concept " + c.concept_id + " has an empty preferred_name");
            if (!v.by_id_.emplace(c.concept_id, i).second)
                throw ValidationError("duplicate concept_id " + c.concept_id);
            std::set<std::string> folded;
            for (const auto& s : c.synonyms)
                if (!folded.insert(to_lower(s)).second)
                    throw ValidationError("concept " + c.concept_id + " has duplicate synonym '" + s + "'");
        }
        v.concepts_ = std::move(concepts);
        v.children_.resize(v.concepts_.size());
        for (std::size_t i = 0; i < v.concepts_.size(); ++i) {
            for (const auto& p : v.concepts_[i].parent_ids) {
                auto it = v.by_id_.find(p);
                if (it == v.by_id_.end())
                    throw ValidationError("concept " + v.concepts_[i].concept_id + " has unknown parent " + p);
                v.children_[it->second].push_back(i);
            }
        }
        v.check_acyclic();

        std::sort(mappings.begin(), mappings.end(), [](const CodeMapping& a, const CodeMapping& b) {
            return std::tie(a.source_vocabulary, a.source_code) < std::tie(b.source_vocabulary, b.source_code);
        });
        for (const auto& m : mappings) {
            if (!v.by_id_.count(m.concept_id))
                throw ValidationError("code mapping " + std::string(to_string(m.source_vocabulary)) + ":" +
                                      m.source_code + " refers to unknown concept " + m.concept_id);
            if (!v.codes_.emplace(code_key(m.source_vocabulary, m.source_code), m.concept_id).second)
                throw ValidationError("duplicate code mapping " + std::string(to_string(m.source_vocabulary)) +
                                      ":" + m.source_code);
        }
        v.mappings_ = std::move(mappings);

        for (const auto& c : v.concepts_) {
            if (!mention_type_for(c.domain))
                continue;
            auto add = [&](const std::string& text) {
                auto phrase = normalize_phrase(text);
                if (phrase.empty())
                    return;
                // Concepts are visited in id order, so the smallest id keeps a shared phrase.
                if (v.phrases_.emplace(phrase, c.concept_id).second) {
                    auto n = static_cast<std::size_t>(std::count(phrase.begin(), phrase.end(), ' ')) + 1;
                    v.max_phrase_tokens_ = std::max(v.max_phrase_tokens_, n);
                }
            };
            add(c.preferred_name);
            for (const auto& s : c.synonyms)
                add(s);
        }
        return v;
    }

    std::size_t size() const { return concepts_.size(); }
    bool empty() const { return concepts_.empty(); }
    const std::vector<Concept>& concepts() const { return concepts_; }
    const std::vector<CodeMapping>& mappings() const { return mappings_; }

    bool contains(std::string_view id) const { return by_id_.count(std::string(id)) != 0; }

    const Concept* find(std::string_view id) const {
        auto it = by_id_.find(std::string(id));
        return it == by_id_.end() ? nullptr : &concepts_[it->second];
    }

    const Concept& at(std::string_view id) const {
        if (const auto* c = find(id))
            return *c;
        throw LookupError("unknown concept_id " + std::string(id));
    }

    /// Exact match for codes; case-insensitive for drug names. Never guesses.
    std::optional<std::string> map_code(SourceVocabulary sv, std::string_view code) const {
        auto it = codes_.find(code_key(sv, code));
        if (it == codes_.end())
            return std::nullopt;
        return it->second;
    }

    /// Source codes mapped onto `id`, in (vocabulary, code) order.
    std::vector<CodeMapping> codes_for(std::string_view id) const {
        std::vector<CodeMapping> out;
        for (const auto& m : mappings_)
            if (m.concept_id == id)
                out.push_back(m);
        return out;
    }

    /// `id` and all of its transitive descendants.
    std::set<std::string> expand(std::string_view id) const {
        auto it = by_id_.find(std::string(id));
        if (it == by_id_.end())
            throw LookupError("unknown concept_id " + std::string(id));
        std::set<std::string> out;
        std::vector<std::size_t> stack{it->second};
        while (!stack.empty()) {
            auto i = stack.back();
            stack.pop_back();
            if (!out.insert(concepts_[i].concept_id).second)
                continue;
            for (auto child : children_[i])
                stack.push_back(child);
        }
        return out;
    }

    /// Concept for a normalized (space-joined token) phrase, or nullptr.
    const std::string* match_phrase(const std::string& normalized) const {
        auto it = phrases_.find(normalized);
        return it == phrases_.end() ? nullptr : &it->second;
    }

    std::size_t max_phrase_tokens() const { return max_phrase_tokens_; }

    /// Case-insensitive substring search over ids, names and synonyms.
    /// Prefix hits on the preferred name rank first.
    std::vector<const Concept*> search(std::string_view query, std::size_t limit) const {
        auto q = to_lower(query);
        std::vector<std::pair<int, const Concept*>> hits;
        if (q.empty())
            return {};
        for (const auto& c : concepts_) {
            auto name = to_lower(c.preferred_name);
            int rank = -1;
            if (c.concept_id == query || name.rfind(q, 0) == 0)
                rank = 0;
            else if (name.find(q) != std::string::npos)
                rank = 1;
            else
                for (const auto& s : c.synonyms)
                    if (to_lower(s).find(q) != std::string::npos) {
                        rank = 2;
                        break;
                    }
            if (rank >= 0)
                hits.emplace_back(rank, &c);
        }
        std::stable_sort(hits.begin(), hits.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
        std::vector<const Concept*> out;
        for (const auto& h : hits) {
            if (out.size() == limit)
                break;
            out.push_back(h.second);
        }
        return out;
    }

    bool operator==(const Vocabulary& o) const {
        return concepts_ == o.concepts_ && mappings_ == o.mappings_;
    }

private:
    static std::string code_key(SourceVocabulary sv, std::string_view code) {
        std::string key(to_string(sv));
        key.push_back('\t');
        key += sv == SourceVocabulary::DRUG_NAME ? to_lower(code) : std::string(code);
        return key;
    }

    void check_acyclic() const {
        enum : char { kWhite, kGrey, kBlack };
        std::vector<char> color(concepts_.size(), kWhite);
        // Iterative DFS along parent edges.
        for (std::size_t root = 0; root < concepts_.size(); ++root) {
            if (color[root] != kWhite)
                continue;
            std::vector<std::pair<std::size_t, std::size_t>> stack{{root, 0}};
            color[root] = kGrey;
            while (!stack.empty()) {
                auto& [node, next] = stack.back();
                const auto& parents = concepts_[node].parent_ids;
                if (next == parents.size()) {
                    color[node] = kBlack;
                    stack.pop_back();
                    continue;
                }
                auto p = by_id_.at(parents[next++]);
                if (color[p] == kGrey)
                    throw ValidationError("concept hierarchy has a cycle through " + concepts_[p].concept_id);
                if (color[p] == kWhite) {
                    color[p] = kGrey;
                    stack.emplace_back(p, 0);
                }
            }
        }
    }

    std::vector<Concept> concepts_;
    std::map<std::string, std::size_t> by_id_;
    std::vector<std::vector<std::size_t>> children_;
    std::vector<CodeMapping> mappings_;
    std::unordered_map<std::string, std::string> codes_;
    std::unordered_map<std::string, std::string> phrases_;
    std::size_t max_phrase_tokens_ = 0;
};

inline std::optional<std::string> map_code(const Vocabulary& vocab, SourceVocabulary sv, std::string_view code) {
    return vocab.map_code(sv, code);
}

inline std::set<std::string> expand_concept(const Vocabulary& vocab, std::string_view id) {
    return vocab.expand(id);
}

namespace detail {

inline std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        auto pos = s.find(sep, start);
        out.emplace_back(s.substr(start, pos == std::string_view::npos ? s.npos : pos - start));
        if (pos == std::string_view::npos)
            return out;
        start = pos + 1;
    }
}

inline std::vector<std::string> split_nonempty(std::string_view s, char sep) {
    std::vector<std::string> out;
    for (auto& part : split(s, sep))
        if (!part.empty())
            out.push_back(std::move(part));
    return out;
}

inline void strip_cr(std::string& line) {
    if (!line.empty() && line.back() == '\r')
        line.pop_back();
}

/// Reads a headed TSV file; `row` receives (1-based line number, fields).
template <typename RowFn>
void read_tsv(const std::filesystem::path& path, std::size_t columns, std::string_view first_column, RowFn row) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ParseError("cannot open " + path.string());
    std::string line;
    std::size_t line_no = 0;
    bool header = true;
    while (std::getline(in, line)) {
        ++line_no;
        strip_cr(line);
        if (header) {
            auto cols = split(line, '\t');
            if (cols.size() != columns || cols[0] != first_column)
                throw ParseError(path.filename().string() + ": unexpected header", line_no);
            header = false;
            continue;
        }
        if (line.empty())
            continue;
        auto fields = split(line, '\t');
        if (fields.size() != columns)
            throw ParseError(path.filename().string() + ": expected " + std::to_string(columns) + " columns, got " +
                                 std::to_string(fields.size()),
                             line_no);
        row(line_no, std::move(fields));
    }
    if (header)
        throw ParseError(path.filename().string() + ": missing header row", line_no);
}

} // namespace detail

inline std::vector<Concept> read_concepts_tsv(const std::filesystem::path& path) {
    std::vector<Concept> out;
    detail::read_tsv(path, 6, "concept_id", [&](std::size_t line, std::vector<std::string> f) {
        Concept c;
        c.concept_id = f[0];
        auto d = parse_domain(f[1]);
        if (!d)
            throw ParseError("unknown domain '" + f[1] + "'", line);
        if (c.concept_id.empty())
            throw ParseError("empty concept_id", line);
        c.domain = *d;
        c.preferred_name = f[2];
        if (!f[3].empty())
            c.cui = f[3];
        c.synonyms = detail::split_nonempty(f[4], '|');
        c.parent_ids = detail::split_nonempty(f[5], '|');
        out.push_back(std::move(c));
    });
    return out;
}

inline std::vector<CodeMapping> read_code_mappings_tsv(const std::filesystem::path& path) {
    std::vector<CodeMapping> out;
    detail::read_tsv(path, 3, "source_vocabulary", [&](std::size_t line, std::vector<std::string> f) {
        auto sv = parse_source_vocabulary(f[0]);
        if (!sv)
            throw ParseError("unknown source vocabulary '" + f[0] + "'", line);
        if (f[1].empty() || f[2].empty())
            throw ParseError("empty source_code or concept_id", line);
        out.push_back({*sv, f[1], f[2]});
    });
    return out;
}

inline constexpr std::string_view kConceptsFile = "concepts.tsv";
inline constexpr std::string_view kCodeMappingsFile = "code_mappings.tsv";

/// Loads `concepts.tsv` and, when present next to it, `code_mappings.tsv`.
/// `path` may name the directory or the concepts file itself.
inline Vocabulary load_vocabulary(const std::filesystem::path& path) {
    namespace fs = std::filesystem;
    fs::path concepts = fs::is_directory(path) ? path / kConceptsFile : path;
    fs::path mappings = concepts.parent_path() / kCodeMappingsFile;
    if (!fs::exists(concepts))
        throw ParseError("vocabulary file not found: " + concepts.string());
    std::vector<CodeMapping> rows;
    if (fs::exists(mappings) && fs::absolute(mappings) != fs::absolute(concepts))
        rows = read_code_mappings_tsv(mappings);
    return Vocabulary::build(read_concepts_tsv(concepts), std::move(rows));
}

inline Vocabulary load_vocabulary(const std::filesystem::path& concepts_path,
                                  const std::filesystem::path& mappings_path) {
    return Vocabulary::build(read_concepts_tsv(concepts_path), read_code_mappings_tsv(mappings_path));
}

} // namespace cohort
