#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "corpus.hpp"
#include "date.hpp"
#include "errors.hpp"
#include "textnlp.hpp"
#include "tokenize.hpp"
#include "vocabulary.hpp"

namespace cohort {

enum class Clause { Should, Must, MustNot };

inline std::string_view to_string(Clause c) {
    switch (c) {
    case Clause::Should:
        return "should";
    case Clause::Must:
        return "must";
    case Clause::MustNot:
        return "must_not";
    }
    return "?";
}

inline std::optional<Clause> parse_clause(std::string_view s) {
    if (s == "should")
        return Clause::Should;
    if (s == "must")
        return Clause::Must;
    if (s == "must_not")
        return Clause::MustNot;
    return std::nullopt;
}

struct SourceSpan {
    std::size_t start = 0;
    std::size_t end = 0;

    bool operator==(const SourceSpan&) const = default;
};

struct QueryConcept {
    std::string concept_id;
    Clause clause = Clause::Should;
    std::optional<SourceSpan> source_span; ///< byte span in raw_text

    bool operator==(const QueryConcept&) const = default;
};

/// A patient satisfies the filter when any listed concept appears in their
/// structured records (within `age_at_event` when given).
struct StructuredFilter {
    Domain domain = Domain::Condition;
    std::vector<std::string> concept_ids;
    Clause clause = Clause::Must; ///< Must or MustNot
    std::optional<AgeRange> age_at_event;

    bool operator==(const StructuredFilter&) const = default;
};

struct Demographics {
    std::optional<AgeRange> age_at_query;
    std::optional<Gender> gender;

    bool operator==(const Demographics&) const = default;
};

struct Weights {
    double alpha = 1.0; ///< concept term
    double beta = 1.0;  ///< full-text term

    bool operator==(const Weights&) const = default;
};

inline constexpr int kQueryFormatVersion = 1;

struct CohortQuery {
    int format_version = kQueryFormatVersion;
    std::string query_id;
    std::string raw_text;
    std::optional<Demographics> demographics;
    std::optional<Date> as_of_date;
    std::vector<StructuredFilter> structured_filters;
    std::vector<QueryConcept> concepts;
    Weights weights;
    std::int64_t top_k_docs = 100;

    /// Number of concepts that contribute to the concept term (Should + Must).
    std::size_t scoring_concept_count() const {
        std::size_t m = 0;
        for (const auto& c : concepts)
            m += c.clause != Clause::MustNot;
        return m;
    }

    bool operator==(const CohortQuery&) const = default;
};

struct Violation {
    std::string code;
    std::string field_path;
    std::string message;

    bool operator==(const Violation&) const = default;
};

inline std::vector<Violation> validate_query(const CohortQuery& q, const Vocabulary& vocab) {
    std::vector<Violation> out;
    auto add = [&](std::string code, std::string path, std::string message) {
        out.push_back({std::move(code), std::move(path), std::move(message)});
    };
    auto check_range = [&](const AgeRange& r, const std::string& path) {
        if (r.min_years < 0 || r.max_years < 0)
            add("NEGATIVE_BOUND", path, "age bounds must be non-negative");
        if (r.min_years > r.max_years)
            add("BOUNDS_INVERTED", path, "minimum exceeds maximum");
    };

    if (q.format_version != kQueryFormatVersion)
        add("UNSUPPORTED_VERSION", "format_version", "format_version must be 1");
    if (q.scoring_concept_count() == 0 && tokenize(q.raw_text).empty())
        add("EMPTY_QUERY", "concepts", "query needs a scoring concept or non-empty raw_text");
    if (q.demographics && q.demographics->age_at_query) {
        check_range(*q.demographics->age_at_query, "demographics.age_at_query");
        if (!q.as_of_date)
            add("MISSING_AS_OF_DATE", "as_of_date", "age_at_query requires as_of_date");
    }

    for (std::size_t i = 0; i < q.structured_filters.size(); ++i) {
        const auto& f = q.structured_filters[i];
        auto path = "structured_filters[" + std::to_string(i) + "]";
        if (f.clause == Clause::Should)
            add("INVALID_CLAUSE", path + ".clause", "structured filters are must or must_not");
        if (f.domain == Domain::Observation || f.domain == Domain::Person)
            add("INVALID_DOMAIN", path + ".domain", "structured records have no such domain");
        if (f.concept_ids.empty())
            add("EMPTY_CONCEPT_SET", path + ".concept_ids", "filter needs at least one concept");
        for (const auto& id : f.concept_ids) {
            const auto* c = vocab.find(id);
            if (!c)
                add("UNKNOWN_CONCEPT", path, "unknown concept_id " + id);
            else if (c->domain != f.domain)
                add("DOMAIN_MISMATCH", path, "concept " + id + " is not in domain " + std::string(to_string(f.domain)));
        }
        if (f.age_at_event)
            check_range(*f.age_at_event, path + ".age_at_event");
    }

    std::set<std::string> seen;
    for (std::size_t i = 0; i < q.concepts.size(); ++i) {
        const auto& c = q.concepts[i];
        auto path = "concepts[" + std::to_string(i) + "]";
        if (!vocab.contains(c.concept_id))
            add("UNKNOWN_CONCEPT", path, "unknown concept_id " + c.concept_id);
        if (!seen.insert(c.concept_id).second)
            add("DUPLICATE_CONCEPT", path, "concept " + c.concept_id + " listed twice");
        if (c.source_span && (c.source_span->start >= c.source_span->end || c.source_span->end > q.raw_text.size()))
            add("BAD_SPAN", path + ".source_span", "span outside raw_text");
    }

    for (auto [w, name] : {std::pair{q.weights.alpha, "weights.alpha"}, std::pair{q.weights.beta, "weights.beta"}}) {
        if (!std::isfinite(w))
            add("NON_FINITE_WEIGHT", name, "weight must be finite");
        else if (w < 0)
            add("NEGATIVE_WEIGHT", name, "weight must be >= 0");
    }
    if (q.top_k_docs < 1)
        add("INVALID_TOP_K", "top_k_docs", "top_k_docs must be >= 1");
    return out;
}

// ---------------------------------------------------------------------------
// Query document (JSON)

namespace detail {

using nlohmann::json;

inline void reject_unknown(const json& j, const std::string& path, std::initializer_list<std::string_view> known) {
    if (!j.is_object())
        throw ParseError("expected an object at " + (path.empty() ? std::string("<root>") : path), 0, path);
    for (const auto& [k, v] : j.items()) {
        bool ok = false;
        for (auto name : known)
            ok |= name == k;
        if (!ok) {
            auto p = path.empty() ? k : path + "." + k;
            throw ParseError("unknown field " + p, 0, p);
        }
    }
}

inline std::string join_path(const std::string& base, std::string_view key) {
    return base.empty() ? std::string(key) : base + "." + std::string(key);
}

inline std::int64_t expect_int(const json& j, const std::string& path) {
    if (!j.is_number_integer())
        throw ParseError("expected an integer at " + path, 0, path);
    return j.get<std::int64_t>();
}

inline int expect_small_int(const json& j, const std::string& path) {
    auto v = expect_int(j, path);
    if (v < INT32_MIN || v > INT32_MAX)
        throw ParseError("integer out of range at " + path, 0, path);
    return static_cast<int>(v);
}

inline std::string expect_string(const json& j, const std::string& path) {
    if (!j.is_string())
        throw ParseError("expected a string at " + path, 0, path);
    return j.get<std::string>();
}

inline double expect_number(const json& j, const std::string& path) {
    if (!j.is_number())
        throw ParseError("expected a number at " + path, 0, path);
    return j.get<double>();
}

inline AgeRange expect_range(const json& j, const std::string& path) {
    if (!j.is_array() || j.size() != 2)
        throw ParseError("expected [min, max] at " + path, 0, path);
    return {expect_small_int(j[0], path + "[0]"), expect_small_int(j[1], path + "[1]")};
}

inline json range_json(const AgeRange& r) { return json::array({r.min_years, r.max_years}); }

} // namespace detail

inline nlohmann::json to_json(const CohortQuery& q) {
    using nlohmann::json;
    json j;
    j["format_version"] = q.format_version;
    j["query_id"] = q.query_id;
    j["raw_text"] = q.raw_text;
    if (q.demographics) {
        json d = json::object();
        if (q.demographics->age_at_query)
            d["age_at_query"] = detail::range_json(*q.demographics->age_at_query);
        if (q.demographics->gender)
            d["gender"] = to_string(*q.demographics->gender);
        j["demographics"] = d;
    }
    if (q.as_of_date)
        j["as_of_date"] = q.as_of_date->str();
    j["structured_filters"] = json::array();
    for (const auto& f : q.structured_filters) {
        json fj{{"domain", to_string(f.domain)}, {"concept_ids", f.concept_ids}, {"clause", to_string(f.clause)}};
        if (f.age_at_event)
            fj["age_at_event"] = detail::range_json(*f.age_at_event);
        j["structured_filters"].push_back(std::move(fj));
    }
    j["concepts"] = json::array();
    for (const auto& c : q.concepts) {
        json cj{{"concept_id", c.concept_id}, {"clause", to_string(c.clause)}};
        if (c.source_span)
            cj["source_span"] = json::array({c.source_span->start, c.source_span->end});
        j["concepts"].push_back(std::move(cj));
    }
    j["weights"] = {{"alpha", q.weights.alpha}, {"beta", q.weights.beta}};
    j["top_k_docs"] = q.top_k_docs;
    return j;
}

/// Strict schema: unknown keys and wrong types throw ParseError carrying the
/// offending field path. Missing optional keys take their defaults.
inline CohortQuery query_from_json(const nlohmann::json& j) {
    using detail::expect_string;
    using detail::join_path;
    detail::reject_unknown(j, "",
                           {"format_version", "query_id", "raw_text", "demographics", "as_of_date",
                            "structured_filters", "concepts", "weights", "top_k_docs"});
    CohortQuery q;
    if (j.contains("format_version")) {
        q.format_version = detail::expect_small_int(j["format_version"], "format_version");
        if (q.format_version != kQueryFormatVersion)
            throw ParseError("unsupported format_version " + std::to_string(q.format_version), 0, "format_version");
    }
    if (j.contains("query_id"))
        q.query_id = expect_string(j["query_id"], "query_id");
    if (j.contains("raw_text"))
        q.raw_text = expect_string(j["raw_text"], "raw_text");
    if (j.contains("demographics") && !j["demographics"].is_null()) {
        const auto& d = j["demographics"];
        detail::reject_unknown(d, "demographics", {"age_at_query", "gender"});
        Demographics demo;
        if (d.contains("age_at_query") && !d["age_at_query"].is_null())
            demo.age_at_query = detail::expect_range(d["age_at_query"], "demographics.age_at_query");
        if (d.contains("gender") && !d["gender"].is_null()) {
            auto g = parse_gender(expect_string(d["gender"], "demographics.gender"));
            if (!g)
                throw ParseError("gender must be F, M or Other", 0, "demographics.gender");
            demo.gender = g;
        }
        q.demographics = demo;
    }
    if (j.contains("as_of_date") && !j["as_of_date"].is_null()) {
        try {
            q.as_of_date = Date::parse(expect_string(j["as_of_date"], "as_of_date"));
        } catch (const ParseError& e) {
            throw ParseError(e.what(), 0, "as_of_date");
        }
    }
    if (j.contains("structured_filters")) {
        const auto& arr = j["structured_filters"];
        if (!arr.is_array())
            throw ParseError("expected an array at structured_filters", 0, "structured_filters");
        for (std::size_t i = 0; i < arr.size(); ++i) {
            auto path = "structured_filters[" + std::to_string(i) + "]";
            const auto& fj = arr[i];
            detail::reject_unknown(fj, path, {"domain", "concept_ids", "clause", "age_at_event"});
            StructuredFilter f;
            for (auto key : {"domain", "concept_ids", "clause"})
                if (!fj.contains(key))
                    throw ParseError("missing field " + join_path(path, key), 0, join_path(path, key));
            auto d = parse_domain(expect_string(fj["domain"], join_path(path, "domain")));
            if (!d)
                throw ParseError("unknown domain at " + join_path(path, "domain"), 0, join_path(path, "domain"));
            f.domain = *d;
            const auto& ids = fj["concept_ids"];
            if (!ids.is_array())
                throw ParseError("expected an array at " + join_path(path, "concept_ids"), 0,
                                 join_path(path, "concept_ids"));
            for (std::size_t k = 0; k < ids.size(); ++k)
                f.concept_ids.push_back(
                    expect_string(ids[k], join_path(path, "concept_ids") + "[" + std::to_string(k) + "]"));
            auto clause = parse_clause(expect_string(fj["clause"], join_path(path, "clause")));
            if (!clause || *clause == Clause::Should)
                throw ParseError("clause must be \"must\" or \"must_not\" at " + join_path(path, "clause"), 0,
                                 join_path(path, "clause"));
            f.clause = *clause;
            if (fj.contains("age_at_event") && !fj["age_at_event"].is_null())
                f.age_at_event = detail::expect_range(fj["age_at_event"], join_path(path, "age_at_event"));
            q.structured_filters.push_back(std::move(f));
        }
    }
    if (j.contains("concepts")) {
        const auto& arr = j["concepts"];
        if (!arr.is_array())
            throw ParseError("expected an array at concepts", 0, "concepts");
        for (std::size_t i = 0; i < arr.size(); ++i) {
            auto path = "concepts[" + std::to_string(i) + "]";
            const auto& cj = arr[i];
            detail::reject_unknown(cj, path, {"concept_id", "clause", "source_span"});
            if (!cj.contains("concept_id"))
                throw ParseError("missing field " + join_path(path, "concept_id"), 0, join_path(path, "concept_id"));
            QueryConcept c;
            c.concept_id = expect_string(cj["concept_id"], join_path(path, "concept_id"));
            if (cj.contains("clause")) {
                auto clause = parse_clause(expect_string(cj["clause"], join_path(path, "clause")));
                if (!clause)
                    throw ParseError("clause must be \"should\", \"must\" or \"must_not\" at " +
                                         join_path(path, "clause"),
                                     0, join_path(path, "clause"));
                c.clause = *clause;
            }
            if (cj.contains("source_span") && !cj["source_span"].is_null()) {
                auto sp = join_path(path, "source_span");
                const auto& s = cj["source_span"];
                if (!s.is_array() || s.size() != 2 || !s[0].is_number_unsigned() || !s[1].is_number_unsigned())
                    throw ParseError("expected [start, end] at " + sp, 0, sp);
                c.source_span = SourceSpan{s[0].get<std::size_t>(), s[1].get<std::size_t>()};
            }
            q.concepts.push_back(std::move(c));
        }
    }
    if (j.contains("weights")) {
        const auto& w = j["weights"];
        detail::reject_unknown(w, "weights", {"alpha", "beta"});
        if (w.contains("alpha"))
            q.weights.alpha = detail::expect_number(w["alpha"], "weights.alpha");
        if (w.contains("beta"))
            q.weights.beta = detail::expect_number(w["beta"], "weights.beta");
    }
    if (j.contains("top_k_docs"))
        q.top_k_docs = detail::expect_int(j["top_k_docs"], "top_k_docs");
    return q;
}

inline std::string serialize_query(const CohortQuery& q) { return to_json(q).dump(2) + "\n"; }

inline CohortQuery deserialize_query(std::string_view bytes) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(bytes);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("query document is not valid JSON: ") + e.what());
    }
    return query_from_json(j);
}

// ---------------------------------------------------------------------------
// Text -> query model

struct ParseOptions {
    std::optional<Date> as_of_date; ///< defaults to today's UTC date
    std::optional<std::string> query_id; ///< defaults to a hash of the text
    const TriggerLexicon* lexicon = nullptr;
};

inline constexpr AgeRange kAdultAges{18, 120};
inline constexpr AgeRange kChildAges{0, 17};

/// Age bounds stated in the text: "N-M years old" wins over "adults"/"children".
inline std::optional<AgeRange> detect_age_bounds(std::string_view text) {
    static const std::regex range_re(R"((\d{1,3})\s*(?:-|to)\s*(\d{1,3})\s*(?:years?|yrs?)[\s-]*(?:old|of age))",
                                     std::regex::icase);
    std::string s(text);
    std::smatch m;
    if (std::regex_search(s, m, range_re))
        return AgeRange{std::stoi(m[1].str()), std::stoi(m[2].str())};
    for (const auto& t : tokenize(text)) {
        if (t.text == "adult" || t.text == "adults")
            return kAdultAges;
        if (t.text == "child" || t.text == "children" || t.text == "pediatric")
            return kChildAges;
    }
    return std::nullopt;
}

inline std::string default_query_id(std::string_view text) {
    std::uint32_t h = 2166136261u;
    for (unsigned char c : text) {
        h ^= c;
        h *= 16777619u;
    }
    char buf[16];
    std::snprintf(buf, sizeof buf, "q%08x", h);
    return buf;
}

/// Runs the indexing NLP over a free-text criterion and drafts the query:
/// affirmed mentions become should concepts, negated ones must_not; condition,
/// procedure and drug mentions also seed draft structured filters, one per
/// (domain, clause) in order of first appearance, each concept expanded to
/// its descendants. Throws ParseError when the
/// text has no tokens at all.
inline CohortQuery parse_query(std::string_view text, const Vocabulary& vocab, const ParseOptions& opts = {}) {
    if (tokenize(text).empty())
        throw ParseError("empty query: no concepts and no text", 0, "raw_text");
    const auto& lexicon = opts.lexicon ? *opts.lexicon : TriggerLexicon::defaults();

    CohortQuery q;
    q.raw_text = std::string(text);
    q.query_id = opts.query_id ? *opts.query_id : default_query_id(text);
    q.as_of_date = opts.as_of_date ? *opts.as_of_date : today_utc();
    if (auto ages = detect_age_bounds(text))
        q.demographics = Demographics{ages, std::nullopt};

    std::set<std::string> seen;
    for (const auto& m : extract_mentions(text, vocab, lexicon)) {
        if (!seen.insert(m.concept_id).second)
            continue;
        auto clause = m.modifiers.negated ? Clause::MustNot : Clause::Should;
        q.concepts.push_back({m.concept_id, clause, SourceSpan{m.start, m.end}});

        auto domain = vocab.at(m.concept_id).domain;
        if (domain != Domain::Condition && domain != Domain::Procedure && domain != Domain::Drug)
            continue;
        auto filter_clause = clause == Clause::MustNot ? Clause::MustNot : Clause::Must;
        StructuredFilter* target = nullptr;
        for (auto& f : q.structured_filters)
            if (f.domain == domain && f.clause == filter_clause)
                target = &f;
        if (!target) {
            q.structured_filters.push_back({domain, {}, filter_clause, std::nullopt});
            target = &q.structured_filters.back();
        }
        // a draft filter on a parent concept should also catch records coded
        // to its descendants
        for (const auto& id : vocab.expand(m.concept_id))
            if (std::find(target->concept_ids.begin(), target->concept_ids.end(), id) == target->concept_ids.end())
                target->concept_ids.push_back(id);
    }
    return q;
}

} // namespace cohort
