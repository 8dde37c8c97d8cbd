#pragma once

// Transport-independent request handling for the HTTP API. Each endpoint
// composes module operations; handle() maps (method, path, params, body) to
// a status code and a JSON body. http.hpp binds it to a socket server.

#include <cstdint>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "date.hpp"
#include "errors.hpp"
#include "evaluation.hpp"
#include "index.hpp"
#include "judgments.hpp"
#include "query.hpp"
#include "retrieval.hpp"
#include "textnlp.hpp"
#include "vocabulary.hpp"

namespace cohort {

struct HttpResponse {
    int status = 200;
    nlohmann::json body;
};

struct ServiceOptions {
    std::optional<Date> as_of_date; ///< default for /api/parse; today when unset
    std::size_t default_limit = 5;
    std::uint64_t default_seed = 0;
};

inline nlohmann::json to_json(const EvidenceSpan& e) {
    nlohmann::json j{{"kind", e.kind == EvidenceSpan::Kind::Concept ? "concept" : "term"},
                     {"key", e.key},
                     {"start", e.start},
                     {"end", e.end}};
    if (e.kind == EvidenceSpan::Kind::Concept) {
        auto m = TermModifiers::from_bits(e.modifier_bits);
        j["modifiers"] = {{"negated", m.negated},
                          {"experiencer", to_string(m.experiencer)},
                          {"status", to_string(m.status)},
                          {"certainty", to_string(m.certainty)}};
    }
    return j;
}

inline nlohmann::json to_json(const ScoredSection& s, const CohortIndex& index) {
    const auto& e = index.section(s.section);
    nlohmann::json spans = nlohmann::json::array();
    for (const auto& x : s.evidence)
        spans.push_back(to_json(x));
    return {{"doc_id", s.doc_id},         {"section_id", e.section_id}, {"heading", e.heading},
            {"score", s.score},           {"concept_scores", s.concept_scores},
            {"text_score", s.text_score}, {"evidence", spans}};
}

inline nlohmann::json to_json(const ScoredPatient& p, const CohortIndex& index) {
    nlohmann::json sections = nlohmann::json::array();
    for (const auto& s : p.sections)
        sections.push_back(to_json(s, index));
    return {{"rank", p.rank}, {"person_id", p.person_id}, {"score", p.score}, {"sections", sections}};
}

class Service {
public:
    using Params = std::map<std::string, std::string>;

    Service(const CohortIndex& index, const Vocabulary& vocab, JudgmentStore& store, ServiceOptions options = {})
        : index_(index), vocab_(vocab), store_(store), options_(std::move(options)) {}

    HttpResponse handle(std::string_view method, std::string_view path, const Params& params,
                        std::string_view body) const {
        try {
            return route(method, path, params, body);
        } catch (const InvalidQueryError& e) {
            nlohmann::json v = nlohmann::json::array();
            for (const auto& x : e.violations())
                v.push_back({{"code", x.code}, {"field_path", x.field_path}, {"message", x.message}});
            auto first = e.violations().empty() ? std::string() : e.violations().front().field_path;
            return {422, {{"code", "INVALID_QUERY"}, {"message", e.what()}, {"field_path", first}, {"violations", v}}};
        } catch (const ParseError& e) {
            return error(400, "PARSE_ERROR", e.what(), e.field_path());
        } catch (const LookupError& e) {
            return error(404, "NOT_FOUND", e.what());
        } catch (const ValidationError& e) {
            return error(422, "VALIDATION_ERROR", e.what());
        } catch (const std::exception& e) {
            return error(500, "INTERNAL", e.what());
        }
    }

    static HttpResponse error(int status, std::string code, std::string message, std::string field_path = {}) {
        nlohmann::json j{{"code", std::move(code)}, {"message", std::move(message)}};
        if (!field_path.empty())
            j["field_path"] = std::move(field_path);
        return {status, std::move(j)};
    }

private:
    HttpResponse route(std::string_view method, std::string_view path, const Params& params,
                       std::string_view body) const {
        static const std::regex evidence_re(R"(^/api/patients/([^/]+)/evidence$)");
        std::string p(path);
        std::smatch m;
        bool get = method == "GET";
        bool post = method == "POST";

        if (p == "/api/parse")
            return post ? parse(body) : not_allowed();
        if (p == "/api/validate")
            return post ? validate(body) : not_allowed();
        if (p == "/api/search")
            return post ? search_endpoint(body) : not_allowed();
        if (p == "/api/judgments")
            return post ? judge(body) : not_allowed();
        if (p == "/api/metrics/p-at-5")
            return get ? metrics(params) : not_allowed();
        if (p == "/api/vocabulary/search")
            return get ? vocabulary_search(params) : not_allowed();
        if (std::regex_match(p, m, evidence_re))
            return get ? evidence(m[1].str(), params) : not_allowed();
        return error(404, "NOT_FOUND", "no route for " + p);
    }

    static HttpResponse not_allowed() { return error(405, "METHOD_NOT_ALLOWED", "method not allowed"); }

    static nlohmann::json parse_body(std::string_view body, std::initializer_list<std::string_view> known) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(body);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(std::string("request body is not valid JSON: ") + e.what());
        }
        detail::reject_unknown(j, "", known);
        return j;
    }

    static CohortQuery query_field(const nlohmann::json& j) {
        if (!j.contains("query"))
            throw ParseError("missing field query", 0, "query");
        try {
            return query_from_json(j["query"]);
        } catch (const ParseError& e) {
            throw ParseError(e.what(), 0, e.field_path().empty() ? "query" : "query." + e.field_path());
        }
    }

    HttpResponse parse(std::string_view body) const {
        auto j = parse_body(body, {"text", "as_of_date", "query_id"});
        if (!j.contains("text"))
            throw ParseError("missing field text", 0, "text");
        ParseOptions opts;
        opts.as_of_date = options_.as_of_date;
        if (j.contains("as_of_date"))
            opts.as_of_date = Date::parse(detail::expect_string(j["as_of_date"], "as_of_date"));
        if (j.contains("query_id"))
            opts.query_id = detail::expect_string(j["query_id"], "query_id");
        auto q = parse_query(detail::expect_string(j["text"], "text"), vocab_, opts);
        return {200, to_json(q)};
    }

    HttpResponse validate(std::string_view body) const {
        auto j = parse_body(body, {"query"});
        auto v = validate_query(query_field(j), vocab_);
        nlohmann::json out = nlohmann::json::array();
        for (const auto& x : v)
            out.push_back({{"code", x.code}, {"field_path", x.field_path}, {"message", x.message}});
        return {200, {{"valid", v.empty()}, {"violations", out}}};
    }

    HttpResponse search_endpoint(std::string_view body) const {
        auto j = parse_body(body, {"query", "limit", "system", "seed"});
        auto q = query_field(j);
        std::size_t limit = options_.default_limit;
        if (j.contains("limit")) {
            auto l = detail::expect_int(j["limit"], "limit");
            if (l < 1)
                throw ParseError("limit must be >= 1", 0, "limit");
            limit = static_cast<std::size_t>(l);
        }
        auto system = SearchSystem::Combined;
        if (j.contains("system")) {
            auto s = parse_system(detail::expect_string(j["system"], "system"));
            if (!s)
                throw ParseError("system must be structured, unstructured or combined", 0, "system");
            system = *s;
        }
        std::uint64_t seed = options_.default_seed;
        if (j.contains("seed")) {
            if (!j["seed"].is_number_unsigned())
                throw ParseError("seed must be a non-negative integer", 0, "seed");
            seed = j["seed"].get<std::uint64_t>();
        }

        nlohmann::json results = nlohmann::json::array();
        std::vector<std::string> ranked;
        if (system == SearchSystem::Structured) {
            ranked = structured_only_search(index_, vocab_, q, limit, seed);
            for (std::size_t i = 0; i < ranked.size(); ++i)
                results.push_back({{"rank", i + 1}, {"person_id", ranked[i]}});
        } else {
            auto hits = system == SearchSystem::Combined ? search(index_, vocab_, q, limit)
                                                         : unstructured_only_search(index_, vocab_, q, limit);
            for (const auto& h : hits) {
                ranked.push_back(h.person_id);
                results.push_back(to_json(h, index_));
            }
        }
        store_.record_run({q.query_id, system, ranked, q});
        return {200,
                {{"query", to_json(q)}, {"system", to_string(system)}, {"limit", limit}, {"results", results}}};
    }

    HttpResponse judge(std::string_view body) const {
        auto j = parse_body(body, {"query_id", "person_id", "grade"});
        for (auto key : {"query_id", "person_id", "grade"})
            if (!j.contains(key))
                throw ParseError(std::string("missing field ") + key, 0, key);
        Judgment x;
        x.query_id = detail::expect_string(j["query_id"], "query_id");
        x.person_id = detail::expect_string(j["person_id"], "person_id");
        auto g = parse_grade(detail::expect_string(j["grade"], "grade"));
        if (!g)
            throw ParseError("grade must be DR, PR or NR", 0, "grade");
        x.grade = *g;
        if (!index_.patient(x.person_id))
            throw LookupError("unknown person_id " + x.person_id);
        store_.put(x);
        return {201,
                {{"query_id", x.query_id},
                 {"person_id", x.person_id},
                 {"grade", to_string(x.grade)},
                 {"source", to_string(x.source)}}};
    }

    HttpResponse metrics(const Params& params) const {
        auto qit = params.find("query_id");
        if (qit == params.end() || qit->second.empty())
            throw ParseError("missing parameter query_id", 0, "query_id");
        auto system = SearchSystem::Combined;
        if (auto s = params.find("system"); s != params.end()) {
            auto parsed = parse_system(s->second);
            if (!parsed)
                throw ParseError("system must be structured, unstructured or combined", 0, "system");
            system = *parsed;
        }
        auto run = store_.graded(qit->second, system);
        if (!run)
            throw LookupError("no " + std::string(to_string(system)) + " run recorded for " + qit->second);
        nlohmann::json grades = nlohmann::json::array();
        for (const auto& g : run->grades)
            grades.push_back(g ? nlohmann::json(std::string(to_string(*g))) : nlohmann::json(nullptr));
        return {200,
                {{"query_id", run->query_id},
                 {"system", to_string(system)},
                 {"p_at_5", p_at_k(*run, 5)},
                 {"ranked", run->ranked},
                 {"grades", grades},
                 {"unjudged", run->unjudged(5)}}};
    }

    HttpResponse vocabulary_search(const Params& params) const {
        auto qit = params.find("q");
        std::string q = qit == params.end() ? "" : qit->second;
        std::size_t limit = 20;
        if (auto l = params.find("limit"); l != params.end()) {
            try {
                limit = static_cast<std::size_t>(std::stoul(l->second));
            } catch (const std::exception&) {
                throw ParseError("limit must be a non-negative integer", 0, "limit");
            }
        }
        nlohmann::json out = nlohmann::json::array();
        for (const auto* c : vocab_.search(q, limit))
            out.push_back({{"concept_id", c->concept_id},
                           {"domain", to_string(c->domain)},
                           {"preferred_name", c->preferred_name},
                           {"synonyms", c->synonyms}});
        return {200, {{"concepts", out}}};
    }

    /// Sections of the patient grouped by document; scored and highlighted
    /// when query_id names a query that has been searched.
    HttpResponse evidence(const std::string& person_id, const Params& params) const {
        const auto* patient = index_.patient(person_id);
        if (!patient)
            throw LookupError("unknown person_id " + person_id);
        std::optional<CohortQuery> q;
        if (auto it = params.find("query_id"); it != params.end() && !it->second.empty()) {
            q = store_.latest_query(it->second);
            if (!q)
                throw LookupError("no search recorded for query_id " + it->second);
        }
        std::optional<SectionScorer> scorer;
        if (q)
            scorer.emplace(index_, *q);

        nlohmann::json docs = nlohmann::json::array();
        for (auto h : patient->sections) {
            const auto& e = index_.section(h);
            if (docs.empty() || docs.back()["doc_id"] != e.doc_id)
                docs.push_back({{"doc_id", e.doc_id},
                                {"encounter_date", e.encounter_date.str()},
                                {"sections", nlohmann::json::array()}});
            nlohmann::json s{{"section_id", e.section_id}, {"heading", e.heading}, {"body", e.body}};
            if (scorer) {
                auto scored = scorer->score(h);
                scored.evidence = scorer->evidence(h);
                auto full = to_json(scored, index_);
                s["score"] = full["score"];
                s["concept_scores"] = full["concept_scores"];
                s["text_score"] = full["text_score"];
                s["highlights"] = full["evidence"];
            } else {
                s["highlights"] = nlohmann::json::array();
            }
            docs.back()["sections"].push_back(std::move(s));
        }
        nlohmann::json out{{"person_id", person_id}, {"documents", docs}};
        if (q)
            out["query_id"] = q->query_id;
        return {200, out};
    }

    const CohortIndex& index_;
    const Vocabulary& vocab_;
    JudgmentStore& store_;
    ServiceOptions options_;
};

} // namespace cohort
