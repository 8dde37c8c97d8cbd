#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <tuple>
#include <string>
#include <string_view>
#include <vector>

#include "corpus.hpp"
#include "date.hpp"
#include "errors.hpp"
#include "textnlp.hpp"
#include "tokenize.hpp"

namespace cohort {

enum class Field { Text, Concept };

using SectionHandle = std::uint32_t;

/// One indexed section. Body and mentions are kept so evidence can be shown
/// from the index alone.
struct SectionEntry {
    std::string doc_id;
    std::string person_id;
    std::string section_id;
    std::string heading;
    std::string body;
    Date encounter_date;
    std::uint32_t text_len = 0;    ///< token count of body
    std::uint32_t concept_len = 0; ///< mention count, any modifiers
    std::vector<ConceptMention> mentions;

    bool operator==(const SectionEntry&) const = default;
};

struct TextPosting {
    SectionHandle section = 0;
    std::uint32_t tf = 0;

    bool operator==(const TextPosting&) const = default;
};

struct ConceptPosting {
    SectionHandle section = 0;
    std::uint32_t affirmed_tf = 0; ///< mentions with negated=false and experiencer=Patient
    std::uint32_t total_tf = 0;    ///< mentions with any modifiers
    std::uint8_t modifier_bits = 0; ///< OR of TermModifiers::bits() over the section's mentions

    bool operator==(const ConceptPosting&) const = default;
};

struct StructuredEvent {
    std::string concept_id;
    Date event_date;

    bool operator==(const StructuredEvent&) const = default;
};

struct PatientEntry {
    std::string person_id;
    Date birth_date;
    Gender gender = Gender::Other;
    std::vector<StructuredEvent> events; ///< resolved records only, sorted by (concept, date)
    std::vector<SectionHandle> sections; ///< ascending

    bool operator==(const PatientEntry&) const = default;
};

struct FieldStats {
    std::uint32_t total_sections = 0;
    std::uint64_t total_text_len = 0;
    std::uint64_t total_concept_len = 0;
    double avg_text_len = 0.0;
    double avg_concept_len = 0.0;

    bool operator==(const FieldStats&) const = default;
};

/// Restricts which structured events count. Unset bounds always pass.
struct EventFilter {
    std::optional<AgeRange> age_at_event;
    std::optional<Date> not_before;
    std::optional<Date> not_after;

    bool accepts(Date event, Date birth) const {
        if (age_at_event && !age_at_event->contains(age_in_years(birth, event)))
            return false;
        if (not_before && event < *not_before)
            return false;
        if (not_after && event > *not_after)
            return false;
        return true;
    }
};

/// Immutable patient -> section index with a text field and a concept field.
class CohortIndex {
public:
    const std::vector<SectionEntry>& sections() const { return sections_; }
    const SectionEntry& section(SectionHandle h) const { return sections_.at(h); }
    const std::map<std::string, PatientEntry>& patients() const { return patients_; }
    const FieldStats& stats() const { return stats_; }
    const std::map<std::string, std::vector<TextPosting>>& text_postings() const { return text_; }
    const std::map<std::string, std::vector<ConceptPosting>>& concept_postings() const { return concepts_; }

    const PatientEntry* patient(std::string_view id) const {
        auto it = patients_.find(std::string(id));
        return it == patients_.end() ? nullptr : &it->second;
    }

    std::span<const TextPosting> text_postings(std::string_view term) const {
        auto it = text_.find(std::string(term));
        return it == text_.end() ? std::span<const TextPosting>{} : std::span<const TextPosting>(it->second);
    }

    std::span<const ConceptPosting> concept_postings(std::string_view concept_id) const {
        auto it = concepts_.find(std::string(concept_id));
        return it == concepts_.end() ? std::span<const ConceptPosting>{}
                                     : std::span<const ConceptPosting>(it->second);
    }

    /// Sections with a positive count; for Concept only affirmed mentions count.
    std::size_t doc_frequency(Field field, std::string_view term) const {
        if (field == Field::Text)
            return text_postings(term).size();
        std::size_t n = 0;
        for (const auto& p : concept_postings(term))
            n += p.affirmed_tf > 0;
        return n;
    }

    /// Raw term count for Text, affirmed mention count for Concept.
    std::uint32_t term_frequency(Field field, std::string_view term, SectionHandle h) const {
        if (field == Field::Text) {
            auto list = text_postings(term);
            auto it = std::lower_bound(list.begin(), list.end(), h,
                                       [](const TextPosting& p, SectionHandle s) { return p.section < s; });
            return it != list.end() && it->section == h ? it->tf : 0;
        }
        auto list = concept_postings(term);
        auto it = std::lower_bound(list.begin(), list.end(), h,
                                   [](const ConceptPosting& p, SectionHandle s) { return p.section < s; });
        return it != list.end() && it->section == h ? it->affirmed_tf : 0;
    }

    std::uint32_t field_length(Field field, SectionHandle h) const {
        const auto& s = sections_.at(h);
        return field == Field::Text ? s.text_len : s.concept_len;
    }

    double average_length(Field field) const {
        return field == Field::Text ? stats_.avg_text_len : stats_.avg_concept_len;
    }

    std::vector<SectionHandle> sections_of_patient(std::string_view person_id) const {
        const auto* p = patient(person_id);
        return p ? p->sections : std::vector<SectionHandle>{};
    }

    /// True iff the patient has a resolved record whose concept is in
    /// `concept_ids` and whose date passes `filter`.
    template <typename ConceptRange>
    bool has_structured_concept(std::string_view person_id, const ConceptRange& concept_ids,
                                const EventFilter& filter = {}) const {
        const auto* p = patient(person_id);
        if (!p)
            return false;
        for (const auto& id : concept_ids) {
            auto lo = std::lower_bound(p->events.begin(), p->events.end(), id,
                                       [](const StructuredEvent& e, const auto& key) { return e.concept_id < key; });
            for (auto it = lo; it != p->events.end() && it->concept_id == id; ++it)
                if (filter.accepts(it->event_date, p->birth_date))
                    return true;
        }
        return false;
    }

    bool operator==(const CohortIndex&) const = default;

private:
    friend CohortIndex build_index(const Corpus&);
    friend class SnapshotReader;

    void finish_stats() {
        stats_.total_sections = static_cast<std::uint32_t>(sections_.size());
        stats_.total_text_len = 0;
        stats_.total_concept_len = 0;
        for (const auto& s : sections_) {
            stats_.total_text_len += s.text_len;
            stats_.total_concept_len += s.concept_len;
        }
        auto n = static_cast<double>(sections_.size());
        stats_.avg_text_len = n > 0 ? static_cast<double>(stats_.total_text_len) / n : 0.0;
        stats_.avg_concept_len = n > 0 ? static_cast<double>(stats_.total_concept_len) / n : 0.0;
    }

    std::vector<SectionEntry> sections_;
    std::map<std::string, PatientEntry> patients_;
    std::map<std::string, std::vector<TextPosting>> text_;
    std::map<std::string, std::vector<ConceptPosting>> concepts_;
    FieldStats stats_;
};

inline std::size_t doc_frequency(const CohortIndex& index, Field field, std::string_view term) {
    return index.doc_frequency(field, term);
}

inline std::vector<SectionHandle> sections_of_patient(const CohortIndex& index, std::string_view person_id) {
    return index.sections_of_patient(person_id);
}

template <typename ConceptRange>
bool has_structured_concept(const CohortIndex& index, std::string_view person_id, const ConceptRange& concept_ids,
                            const EventFilter& filter = {}) {
    return index.has_structured_concept(person_id, concept_ids, filter);
}

/// Sections are numbered in corpus document order; documents of unknown
/// persons or repeated doc_ids are rejected.
inline CohortIndex build_index(const Corpus& corpus) {
    CohortIndex ix;
    for (const auto& p : corpus.persons) {
        PatientEntry e;
        e.person_id = p.person_id;
        e.birth_date = p.birth_date;
        e.gender = p.gender;
        if (!ix.patients_.emplace(p.person_id, std::move(e)).second)
            throw ValidationError("duplicate person_id " + p.person_id);
    }
    for (const auto& r : corpus.records) {
        auto it = ix.patients_.find(r.person_id);
        if (it == ix.patients_.end())
            throw ValidationError("record refers to unknown person_id " + r.person_id);
        if (r.concept_id)
            it->second.events.push_back({*r.concept_id, r.event_date});
    }
    for (auto& [id, p] : ix.patients_)
        std::sort(p.events.begin(), p.events.end(), [](const StructuredEvent& a, const StructuredEvent& b) {
            return std::tie(a.concept_id, a.event_date) < std::tie(b.concept_id, b.event_date);
        });

    std::set<std::string> doc_ids;
    for (const auto& d : corpus.documents) {
        if (!doc_ids.insert(d.doc_id).second)
            throw ValidationError("duplicate doc_id " + d.doc_id);
        auto owner = ix.patients_.find(d.person_id);
        if (owner == ix.patients_.end())
            throw ValidationError("document " + d.doc_id + " refers to unknown person_id " + d.person_id);
        for (std::size_t i = 0; i < d.sections.size(); ++i) {
            const auto& s = d.sections[i];
            auto handle = static_cast<SectionHandle>(ix.sections_.size());
            SectionEntry e;
            e.doc_id = d.doc_id;
            e.person_id = d.person_id;
            e.section_id = s.section_id;
            e.heading = s.heading;
            e.body = s.body;
            e.encounter_date = d.encounter_date;
            e.mentions = i < d.mentions.size() ? d.mentions[i] : std::vector<ConceptMention>{};

            std::map<std::string, std::uint32_t> tf;
            auto tokens = tokenize(s.body);
            for (const auto& t : tokens)
                ++tf[t.text];
            e.text_len = static_cast<std::uint32_t>(tokens.size());
            for (const auto& [term, n] : tf)
                ix.text_[term].push_back({handle, n});

            std::map<std::string, ConceptPosting> cp;
            for (const auto& m : e.mentions) {
                auto& p = cp[m.concept_id];
                p.section = handle;
                ++p.total_tf;
                p.affirmed_tf += m.modifiers.affirmed() ? 1 : 0;
                p.modifier_bits |= m.modifiers.bits();
            }
            e.concept_len = static_cast<std::uint32_t>(e.mentions.size());
            for (const auto& [id, p] : cp)
                ix.concepts_[id].push_back(p);

            owner->second.sections.push_back(handle);
            ix.sections_.push_back(std::move(e));
        }
    }
    ix.finish_stats();
    return ix;
}

} // namespace cohort
