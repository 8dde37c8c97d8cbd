#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "corpus.hpp"
#include "errors.hpp"
#include "index.hpp"
#include "query.hpp"
#include "retrieval.hpp"
#include "vocabulary.hpp"

namespace cohort {

enum class JudgmentSource { Human, Planted };

inline std::string_view to_string(JudgmentSource s) { return s == JudgmentSource::Human ? "human" : "planted"; }

struct Judgment {
    std::string query_id;
    std::string person_id;
    Grade grade = Grade::NR;
    JudgmentSource source = JudgmentSource::Human;

    bool operator==(const Judgment&) const = default;
};

/// A system's result list for one query with grades resolved against a set
/// of judgments. Unjudged entries hold nullopt and score as NR.
struct GradedRun {
    std::string query_id;
    SearchSystem system = SearchSystem::Combined;
    std::vector<std::string> ranked;
    std::vector<std::optional<Grade>> grades;

    /// Number of unjudged entries among the first k.
    std::size_t unjudged(std::size_t k) const {
        std::size_t n = 0;
        for (std::size_t i = 0; i < std::min(k, grades.size()); ++i)
            n += !grades[i].has_value();
        return n;
    }

    bool operator==(const GradedRun&) const = default;
};

/// Lookup from (query_id, person_id) to grade.
using GradeTable = std::map<std::pair<std::string, std::string>, Grade>;

inline GradeTable grade_table(const std::vector<GroundTruth>& truth) {
    GradeTable t;
    for (const auto& g : truth)
        t[{g.query_id, g.person_id}] = g.grade;
    return t;
}

inline GradedRun grade_run(std::string query_id, SearchSystem system, std::vector<std::string> ranked,
                           const GradeTable& grades) {
    std::set<std::string> seen;
    for (const auto& id : ranked)
        if (!seen.insert(id).second)
            throw ValidationError("ranked list repeats person_id " + id);
    GradedRun run{std::move(query_id), system, std::move(ranked), {}};
    for (const auto& id : run.ranked) {
        auto it = grades.find({run.query_id, id});
        run.grades.push_back(it == grades.end() ? std::nullopt : std::optional<Grade>(it->second));
    }
    return run;
}

/// Graded mass of the first min(k, n) grades divided by k.
inline double p_at_k(std::span<const std::optional<Grade>> grades, std::size_t k) {
    if (k == 0)
        throw ValidationError("k must be >= 1");
    double sum = 0.0;
    for (std::size_t i = 0; i < std::min(k, grades.size()); ++i)
        sum += grades[i] ? grade_score(*grades[i]) : 0.0;
    return sum / static_cast<double>(k);
}

inline double p_at_k(const std::vector<Grade>& grades, std::size_t k) {
    std::vector<std::optional<Grade>> g(grades.begin(), grades.end());
    return p_at_k(std::span<const std::optional<Grade>>(g), k);
}

inline double p_at_k(const GradedRun& run, std::size_t k) {
    return p_at_k(std::span<const std::optional<Grade>>(run.grades), k);
}

/// Arithmetic mean of per-query precision values.
inline double mean_precision(std::span<const double> values) {
    if (values.empty())
        throw ValidationError("cannot average an empty list of runs");
    double sum = 0.0;
    for (double v : values)
        sum += v;
    return sum / static_cast<double>(values.size());
}

inline double mean_precision(const std::vector<double>& values) {
    return mean_precision(std::span<const double>(values));
}

inline double average_p_at_k(const std::vector<GradedRun>& runs, std::size_t k) {
    std::vector<double> v;
    for (const auto& r : runs)
        v.push_back(p_at_k(r, k));
    return mean_precision(v);
}

// ---------------------------------------------------------------------------
// Benchmark

struct BenchmarkRow {
    std::string query_id;
    std::map<SearchSystem, GradedRun> runs;
};

struct BenchmarkReport {
    std::uint64_t corpus_seed = 0;
    std::uint64_t sample_seed = 0;
    std::size_t k = 5;
    std::vector<BenchmarkRow> rows; ///< ordered by query_id
    std::map<SearchSystem, double> averages;

    double p(const std::string& query_id, SearchSystem s) const {
        for (const auto& r : rows)
            if (r.query_id == query_id)
                return p_at_k(r.runs.at(s), k);
        throw LookupError("no benchmark row for " + query_id);
    }
};

struct BenchmarkOptions {
    std::size_t k = 5;
    std::uint64_t sample_seed = 0;
    std::uint64_t corpus_seed = 0; ///< recorded in the report only
};

/// Runs the three systems on each query, grades the top k against `truth`.
/// Each query needs at least one truth row.
inline BenchmarkReport run_benchmark(const CohortIndex& index, const Vocabulary& vocab,
                                     const std::vector<CohortQuery>& queries, const std::vector<GroundTruth>& truth,
                                     const BenchmarkOptions& opts) {
    if (queries.empty())
        throw ValidationError("benchmark needs at least one query");
    auto table = grade_table(truth);
    std::set<std::string> covered;
    for (const auto& t : truth)
        covered.insert(t.query_id);

    std::vector<const CohortQuery*> ordered;
    for (const auto& q : queries) {
        if (!covered.count(q.query_id))
            throw ValidationError("no ground truth for query " + q.query_id);
        ordered.push_back(&q);
    }
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const CohortQuery* a, const CohortQuery* b) { return a->query_id < b->query_id; });

    BenchmarkReport report;
    report.k = opts.k;
    report.corpus_seed = opts.corpus_seed;
    report.sample_seed = opts.sample_seed;
    for (const auto* q : ordered) {
        BenchmarkRow row;
        row.query_id = q->query_id;
        for (auto system : kAllSystems)
            row.runs[system] =
                grade_run(q->query_id, system, run_system(system, index, vocab, *q, opts.k, opts.sample_seed), table);
        report.rows.push_back(std::move(row));
    }
    for (auto system : kAllSystems) {
        std::vector<double> v;
        for (const auto& r : report.rows)
            v.push_back(p_at_k(r.runs.at(system), opts.k));
        report.averages[system] = mean_precision(v);
    }
    return report;
}

namespace detail {

/// Report numbers are rounded to four decimals so 0.9 prints as 0.9.
inline double round4(double v) { return std::round(v * 10000.0) / 10000.0; }

} // namespace detail

inline nlohmann::json to_json(const BenchmarkReport& r) {
    using nlohmann::json;
    json j;
    j["corpus_seed"] = r.corpus_seed;
    j["sample_seed"] = r.sample_seed;
    j["k"] = r.k;
    j["queries"] = json::array();
    for (const auto& row : r.rows) {
        json systems = json::object();
        for (const auto& [system, run] : row.runs) {
            json grades = json::array();
            for (const auto& g : run.grades)
                grades.push_back(g ? json(std::string(to_string(*g))) : json(nullptr));
            systems[std::string(to_string(system))] = {{"p_at_k", detail::round4(p_at_k(run, r.k))},
                                                       {"ranked", run.ranked},
                                                       {"grades", grades},
                                                       {"unjudged", run.unjudged(r.k)}};
        }
        j["queries"].push_back({{"query_id", row.query_id}, {"systems", systems}});
    }
    json avg = json::object();
    for (const auto& [system, v] : r.averages)
        avg[std::string(to_string(system))] = detail::round4(v);
    j["averages"] = avg;
    return j;
}

/// Plain-text comparison table: one row per query plus an Average row.
inline std::string format_table(const BenchmarkReport& r) {
    std::string out;
    char buf[128];
    std::snprintf(buf, sizeof buf, "%-10s %12s %14s %10s\n", "Query", "Structured", "Unstructured", "Combined");
    out += buf;
    auto line = [&](const std::string& label, double s, double u, double c) {
        std::snprintf(buf, sizeof buf, "%-10s %12.2f %14.2f %10.2f\n", label.c_str(), s, u, c);
        out += buf;
    };
    for (const auto& row : r.rows)
        line(row.query_id, p_at_k(row.runs.at(SearchSystem::Structured), r.k),
             p_at_k(row.runs.at(SearchSystem::Unstructured), r.k), p_at_k(row.runs.at(SearchSystem::Combined), r.k));
    line("Average", r.averages.at(SearchSystem::Structured), r.averages.at(SearchSystem::Unstructured),
         r.averages.at(SearchSystem::Combined));
    return out;
}

} // namespace cohort
