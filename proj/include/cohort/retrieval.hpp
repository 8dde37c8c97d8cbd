#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "index.hpp"
#include "prng.hpp"
#include "query.hpp"
#include "tokenize.hpp"
#include "vocabulary.hpp"

namespace cohort {

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

/// A query that failed validate_query; the violations travel with it.
class InvalidQueryError : public ValidationError {
public:
    explicit InvalidQueryError(std::vector<Violation> violations)
        : ValidationError(describe(violations)), violations_(std::move(violations)) {}

    const std::vector<Violation>& violations() const { return violations_; }

private:
    static std::string describe(const std::vector<Violation>& v) {
        std::string s = "invalid query:";
        for (const auto& x : v)
            s += " " + x.code + (x.field_path.empty() ? "" : "@" + x.field_path);
        return s;
    }

    std::vector<Violation> violations_;
};

inline void require_valid(const CohortQuery& q, const Vocabulary& vocab) {
    auto v = validate_query(q, vocab);
    if (!v.empty())
        throw InvalidQueryError(std::move(v));
}

enum class SearchSystem { Structured, Unstructured, Combined };

inline std::string_view to_string(SearchSystem s) {
    switch (s) {
    case SearchSystem::Structured:
        return "structured";
    case SearchSystem::Unstructured:
        return "unstructured";
    case SearchSystem::Combined:
        return "combined";
    }
    return "?";
}

inline std::optional<SearchSystem> parse_system(std::string_view s) {
    if (s == "structured")
        return SearchSystem::Structured;
    if (s == "unstructured")
        return SearchSystem::Unstructured;
    if (s == "combined")
        return SearchSystem::Combined;
    return std::nullopt;
}

inline constexpr std::array<SearchSystem, 3> kAllSystems{SearchSystem::Structured, SearchSystem::Unstructured,
                                                         SearchSystem::Combined};

// ---------------------------------------------------------------------------
// BM25

namespace detail {

inline double bm25_idf(std::size_t n, std::size_t df) {
    auto N = static_cast<double>(n);
    auto d = static_cast<double>(df);
    return std::log(1.0 + (N - d + 0.5) / (d + 0.5));
}

inline double bm25_tf(double tf, double len, double avglen, const Bm25Params& p) {
    double norm = avglen > 0 ? 1.0 - p.b + p.b * len / avglen : 1.0;
    return tf * (p.k1 + 1.0) / (tf + p.k1 * norm);
}

} // namespace detail

/// Okapi BM25 of one section against the distinct terms of `terms`.
inline double bm25(const CohortIndex& index, Field field, std::span<const std::string> terms, SectionHandle section,
                   const Bm25Params& params = {}) {
    std::set<std::string_view> distinct(terms.begin(), terms.end());
    const auto n = index.stats().total_sections;
    const auto len = static_cast<double>(index.field_length(field, section));
    const auto avglen = index.average_length(field);
    double total = 0.0;
    for (auto t : distinct) {
        auto tf = index.term_frequency(field, t, section);
        if (tf == 0)
            continue;
        total += detail::bm25_idf(n, index.doc_frequency(field, t)) *
                 detail::bm25_tf(static_cast<double>(tf), len, avglen, params);
    }
    return total;
}

inline double bm25(const CohortIndex& index, Field field, const std::vector<std::string>& terms,
                   SectionHandle section, const Bm25Params& params = {}) {
    return bm25(index, field, std::span<const std::string>(terms), section, params);
}

// ---------------------------------------------------------------------------
// Scored results

struct EvidenceSpan {
    enum class Kind { Concept, Term };

    Kind kind = Kind::Term;
    std::string key; ///< concept_id or text term
    std::size_t start = 0; ///< byte offsets into the section body
    std::size_t end = 0;
    std::uint8_t modifier_bits = 0; ///< concept spans only

    bool operator==(const EvidenceSpan&) const = default;
};

struct ScoredSection {
    SectionHandle section = 0;
    std::string doc_id;
    std::string person_id;
    double score = 0.0;
    std::map<std::string, double> concept_scores; ///< s(d,o) for every Should/Must concept
    double text_score = 0.0;                      ///< s(d,q)
    std::vector<EvidenceSpan> evidence;

    /// alpha * mean(concept_scores) + beta * text_score; the stored score is
    /// computed by this same expression.
    double recompose(const Weights& w) const {
        double concept_term = 0.0;
        if (!concept_scores.empty()) {
            double sum = 0.0;
            for (const auto& [id, s] : concept_scores)
                sum += s;
            concept_term = sum / static_cast<double>(concept_scores.size());
        }
        return w.alpha * concept_term + w.beta * text_score;
    }

    bool operator==(const ScoredSection&) const = default;
};

struct ScoredPatient {
    std::string person_id;
    double score = 0.0;
    std::vector<ScoredSection> sections; ///< the top-K sections used, best first
    std::size_t rank = 0;

    bool operator==(const ScoredPatient&) const = default;
};

/// Mean of the largest min(k, n) scores; 0 for an empty list.
inline double score_patient(std::vector<double> scores, std::size_t k) {
    if (scores.empty() || k == 0)
        return 0.0;
    std::sort(scores.begin(), scores.end(), std::greater<>());
    auto m = std::min(k, scores.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < m; ++i)
        sum += scores[i];
    return sum / static_cast<double>(m);
}

inline double score_patient(const std::vector<ScoredSection>& sections, std::size_t k) {
    std::vector<double> scores;
    scores.reserve(sections.size());
    for (const auto& s : sections)
        scores.push_back(s.score);
    return score_patient(std::move(scores), k);
}

/// Per-query precomputation: idf values and posting spans for the concept
/// and text terms, so each section is scored with binary searches only.
class SectionScorer {
public:
    SectionScorer(const CohortIndex& index, const CohortQuery& q, const Bm25Params& params = {})
        : index_(index), weights_(q.weights), params_(params) {
        const auto n = index.stats().total_sections;
        for (const auto& c : q.concepts) {
            if (c.clause == Clause::MustNot)
                continue;
            concepts_.push_back({c.concept_id, detail::bm25_idf(n, index.doc_frequency(Field::Concept, c.concept_id)),
                                 index.concept_postings(c.concept_id)});
        }
        std::set<std::string> distinct;
        for (const auto& t : tokenize(q.raw_text))
            distinct.insert(t.text);
        for (const auto& t : distinct) {
            auto postings = index.text_postings(t);
            if (!postings.empty())
                terms_.push_back({t, detail::bm25_idf(n, postings.size()), postings});
        }
        for (const auto& c : q.concepts)
            query_concepts_.insert(c.concept_id);
        query_terms_ = std::move(distinct);
    }

    /// Score and breakdown only; see evidence() for spans.
    ScoredSection score(SectionHandle h) const {
        const auto& entry = index_.section(h);
        ScoredSection s;
        s.section = h;
        s.doc_id = entry.doc_id;
        s.person_id = entry.person_id;

        const double clen = entry.concept_len;
        const double cavg = index_.average_length(Field::Concept);
        for (const auto& c : concepts_) {
            double v = 0.0;
            auto it = std::lower_bound(c.postings.begin(), c.postings.end(), h,
                                       [](const ConceptPosting& p, SectionHandle x) { return p.section < x; });
            if (it != c.postings.end() && it->section == h && it->affirmed_tf > 0)
                v = c.idf * detail::bm25_tf(it->affirmed_tf, clen, cavg, params_);
            s.concept_scores[c.id] = v;
        }

        const double tlen = entry.text_len;
        const double tavg = index_.average_length(Field::Text);
        double text = 0.0;
        for (const auto& t : terms_) {
            auto it = std::lower_bound(t.postings.begin(), t.postings.end(), h,
                                       [](const TextPosting& p, SectionHandle x) { return p.section < x; });
            if (it != t.postings.end() && it->section == h)
                text += t.idf * detail::bm25_tf(it->tf, tlen, tavg, params_);
        }
        s.text_score = text;
        s.score = s.recompose(weights_);
        return s;
    }

    /// Spans of query-concept mentions and query-term tokens in the body.
    std::vector<EvidenceSpan> evidence(SectionHandle h) const {
        const auto& entry = index_.section(h);
        std::vector<EvidenceSpan> out;
        for (const auto& m : entry.mentions)
            if (query_concepts_.count(m.concept_id))
                out.push_back({EvidenceSpan::Kind::Concept, m.concept_id, m.start, m.end, m.modifiers.bits()});
        for (const auto& t : tokenize(entry.body))
            if (query_terms_.count(t.text))
                out.push_back({EvidenceSpan::Kind::Term, t.text, t.start, t.end, 0});
        std::stable_sort(out.begin(), out.end(), [](const EvidenceSpan& a, const EvidenceSpan& b) {
            return std::tie(a.start, a.end) < std::tie(b.start, b.end);
        });
        return out;
    }

private:
    struct ConceptTerm {
        std::string id;
        double idf;
        std::span<const ConceptPosting> postings;
    };
    struct TextTerm {
        std::string term;
        double idf;
        std::span<const TextPosting> postings;
    };

    const CohortIndex& index_;
    Weights weights_;
    Bm25Params params_;
    std::vector<ConceptTerm> concepts_;
    std::vector<TextTerm> terms_;
    std::set<std::string> query_concepts_;
    std::set<std::string> query_terms_;
};

inline ScoredSection score_section(const CohortIndex& index, const CohortQuery& q, SectionHandle section,
                                   const Bm25Params& params = {}) {
    SectionScorer scorer(index, q, params);
    auto s = scorer.score(section);
    s.evidence = scorer.evidence(section);
    return s;
}

// ---------------------------------------------------------------------------
// Phase 1: candidate filtering

inline bool passes_demographics(const PatientEntry& p, const CohortQuery& q) {
    if (!q.demographics)
        return true;
    if (q.demographics->gender && p.gender != *q.demographics->gender)
        return false;
    if (q.demographics->age_at_query) {
        if (!q.as_of_date)
            throw ValidationError("age_at_query requires as_of_date");
        if (!q.demographics->age_at_query->contains(age_in_years(p.birth_date, *q.as_of_date)))
            return false;
    }
    return true;
}

inline bool passes_structured_filters(const CohortIndex& index, const PatientEntry& p, const CohortQuery& q) {
    for (const auto& f : q.structured_filters) {
        EventFilter ef;
        ef.age_at_event = f.age_at_event;
        bool hit = index.has_structured_concept(p.person_id, f.concept_ids, ef);
        if (f.clause == Clause::Must && !hit)
            return false;
        if (f.clause == Clause::MustNot && hit)
            return false;
    }
    return true;
}

/// Persons with at least one affirmed mention of a must_not query concept.
inline std::set<std::string> persons_with_excluded_mentions(const CohortIndex& index, const CohortQuery& q) {
    std::set<std::string> out;
    for (const auto& c : q.concepts) {
        if (c.clause != Clause::MustNot)
            continue;
        for (const auto& p : index.concept_postings(c.concept_id))
            if (p.affirmed_tf > 0)
                out.insert(index.section(p.section).person_id);
    }
    return out;
}

namespace detail {

inline std::set<std::string> candidates(const CohortIndex& index, const CohortQuery& q, bool use_structured) {
    auto excluded = persons_with_excluded_mentions(index, q);
    std::set<std::string> out;
    for (const auto& [id, p] : index.patients()) {
        if (excluded.count(id) || !passes_demographics(p, q))
            continue;
        if (use_structured && !passes_structured_filters(index, p, q))
            continue;
        out.insert(id);
    }
    return out;
}

} // namespace detail

/// Demographics, every must filter, no must_not filter, and no affirmed
/// mention of a must_not concept.
inline std::set<std::string> filter_patients(const CohortIndex& index, const CohortQuery& q) {
    return detail::candidates(index, q, true);
}

// ---------------------------------------------------------------------------
// Phase 2: ranking

namespace detail {

inline std::vector<ScoredPatient> rank(const CohortIndex& index, const CohortQuery& q,
                                       const std::set<std::string>& candidates, std::size_t limit,
                                       const Bm25Params& params) {
    SectionScorer scorer(index, q, params);
    std::vector<std::string> must;
    for (const auto& c : q.concepts)
        if (c.clause == Clause::Must)
            must.push_back(c.concept_id);
    const auto k = static_cast<std::size_t>(q.top_k_docs);

    std::vector<ScoredPatient> out;
    for (const auto& id : candidates) {
        std::vector<ScoredSection> scored;
        for (auto h : index.patient(id)->sections)
            scored.push_back(scorer.score(h));

        bool ok = true;
        for (const auto& m : must) {
            bool any = std::any_of(scored.begin(), scored.end(),
                                   [&](const ScoredSection& s) { return s.concept_scores.at(m) > 0; });
            ok = ok && any;
        }
        if (!ok)
            continue;

        std::stable_sort(scored.begin(), scored.end(),
                         [](const ScoredSection& a, const ScoredSection& b) { return a.score > b.score; });
        scored.resize(std::min(k, scored.size()));
        double sum = 0.0;
        for (const auto& s : scored)
            sum += s.score;
        ScoredPatient p;
        p.person_id = id;
        p.score = scored.empty() ? 0.0 : sum / static_cast<double>(scored.size());
        p.sections = std::move(scored);
        out.push_back(std::move(p));
    }

    std::sort(out.begin(), out.end(), [](const ScoredPatient& a, const ScoredPatient& b) {
        if (a.score != b.score)
            return a.score > b.score;
        return a.person_id < b.person_id;
    });
    if (out.size() > limit)
        out.resize(limit);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i].rank = i + 1;
        for (auto& s : out[i].sections)
            s.evidence = scorer.evidence(s.section);
    }
    return out;
}

} // namespace detail

/// Two-phase search: filter_patients, then rank by the mean of each
/// patient's top_k_docs section scores.
inline std::vector<ScoredPatient> search(const CohortIndex& index, const Vocabulary& vocab, const CohortQuery& q,
                                         std::size_t limit, const Bm25Params& params = {}) {
    require_valid(q, vocab);
    return detail::rank(index, q, filter_patients(index, q), limit, params);
}

/// Ranking with structured filters ignored; demographics and must_not
/// concept exclusion still apply.
inline std::vector<ScoredPatient> unstructured_only_search(const CohortIndex& index, const Vocabulary& vocab,
                                                           const CohortQuery& q, std::size_t limit,
                                                           const Bm25Params& params = {}) {
    require_valid(q, vocab);
    return detail::rank(index, q, detail::candidates(index, q, false), limit, params);
}

/// Seeded uniform sample of the filtered set, in draw order. The set is
/// taken in ascending person_id order before sampling.
inline std::vector<std::string> structured_only_search(const CohortIndex& index, const Vocabulary& vocab,
                                                       const CohortQuery& q, std::size_t sample_n,
                                                       std::uint64_t seed) {
    require_valid(q, vocab);
    auto set = filter_patients(index, q);
    return sample_without_replacement(std::vector<std::string>(set.begin(), set.end()), sample_n, seed);
}

/// Person ids returned by `system`, in result order.
inline std::vector<std::string> run_system(SearchSystem system, const CohortIndex& index, const Vocabulary& vocab,
                                           const CohortQuery& q, std::size_t n, std::uint64_t seed) {
    if (system == SearchSystem::Structured)
        return structured_only_search(index, vocab, q, n, seed);
    auto ranked = system == SearchSystem::Combined ? search(index, vocab, q, n) : unstructured_only_search(index, vocab, q, n);
    std::vector<std::string> ids;
    for (const auto& p : ranked)
        ids.push_back(p.person_id);
    return ids;
}

} // namespace cohort
