#pragma once

// Append-only JSON-Lines log of relevance judgments and executed runs.
//
//   {"type":"judgment","query_id":..,"person_id":..,"grade":"DR"|"PR"|"NR","source":"human"|"planted"}
//   {"type":"run","query_id":..,"system":"combined"|..,"ranked":[..],"query":{query document}}
//
// Replaying the log front to back rebuilds the in-memory state; a later line
// for the same key replaces an earlier one.

#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "corpus.hpp"
#include "errors.hpp"
#include "evaluation.hpp"
#include "query.hpp"
#include "retrieval.hpp"

namespace cohort {

struct RecordedRun {
    std::string query_id;
    SearchSystem system = SearchSystem::Combined;
    std::vector<std::string> ranked;
    CohortQuery query;

    bool operator==(const RecordedRun&) const = default;
};

class JudgmentStore {
public:
    /// In-memory store; nothing is persisted.
    JudgmentStore() = default;

    /// Replays `path` if it exists and appends new lines to it.
    explicit JudgmentStore(std::filesystem::path path) : path_(std::move(path)) {
        std::ifstream in(path_);
        if (!in)
            return;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty())
                continue;
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(line);
            } catch (const nlohmann::json::parse_error& e) {
                throw ParseError(std::string("judgment log: ") + e.what(), line_no);
            }
            try {
                apply(j);
            } catch (const ParseError& e) {
                throw ParseError(std::string("judgment log: ") + e.what(), line_no, e.field_path());
            }
        }
    }

    JudgmentStore(const JudgmentStore&) = delete;
    JudgmentStore& operator=(const JudgmentStore&) = delete;

    void put(const Judgment& j) {
        std::lock_guard lock(mutex_);
        write(judgment_json(j));
        judgments_[{j.query_id, j.person_id}] = j;
    }

    void record_run(const RecordedRun& run) {
        std::lock_guard lock(mutex_);
        write(run_json(run));
        runs_[{run.query_id, run.system}] = run;
        latest_query_[run.query_id] = run.query;
    }

    std::optional<Judgment> judgment(const std::string& query_id, const std::string& person_id) const {
        std::lock_guard lock(mutex_);
        auto it = judgments_.find({query_id, person_id});
        return it == judgments_.end() ? std::nullopt : std::optional<Judgment>(it->second);
    }

    std::vector<Judgment> judgments() const {
        std::lock_guard lock(mutex_);
        std::vector<Judgment> out;
        for (const auto& [k, v] : judgments_)
            out.push_back(v);
        return out;
    }

    std::optional<RecordedRun> run(const std::string& query_id, SearchSystem system) const {
        std::lock_guard lock(mutex_);
        auto it = runs_.find({query_id, system});
        return it == runs_.end() ? std::nullopt : std::optional<RecordedRun>(it->second);
    }

    /// Query document of the most recent run for `query_id`, any system.
    std::optional<CohortQuery> latest_query(const std::string& query_id) const {
        std::lock_guard lock(mutex_);
        auto it = latest_query_.find(query_id);
        return it == latest_query_.end() ? std::nullopt : std::optional<CohortQuery>(it->second);
    }

    GradeTable grades() const {
        std::lock_guard lock(mutex_);
        GradeTable t;
        for (const auto& [k, v] : judgments_)
            t[k] = v.grade;
        return t;
    }

    /// The latest run for (query_id, system), graded by current judgments.
    std::optional<GradedRun> graded(const std::string& query_id, SearchSystem system) const {
        auto r = run(query_id, system);
        if (!r)
            return std::nullopt;
        return grade_run(query_id, system, r->ranked, grades());
    }

    const std::filesystem::path& path() const { return path_; }

private:
    static nlohmann::json judgment_json(const Judgment& j) {
        return {{"type", "judgment"},
                {"query_id", j.query_id},
                {"person_id", j.person_id},
                {"grade", to_string(j.grade)},
                {"source", to_string(j.source)}};
    }

    static nlohmann::json run_json(const RecordedRun& r) {
        return {{"type", "run"},
                {"query_id", r.query_id},
                {"system", to_string(r.system)},
                {"ranked", r.ranked},
                {"query", to_json(r.query)}};
    }

    void write(const nlohmann::json& j) {
        if (path_.empty())
            return;
        if (!out_.is_open()) {
            out_.open(path_, std::ios::app | std::ios::binary);
            if (!out_)
                throw ParseError("cannot append to " + path_.string());
        }
        out_ << j.dump() << '\n';
        out_.flush();
    }

    void apply(const nlohmann::json& j) {
        auto str = [&](const char* key) {
            if (!j.is_object() || !j.contains(key) || !j[key].is_string())
                throw ParseError(std::string("missing string field ") + key, 0, key);
            return j[key].get<std::string>();
        };
        auto type = str("type");
        if (type == "judgment") {
            detail::reject_unknown(j, "", {"type", "query_id", "person_id", "grade", "source"});
            Judgment x;
            x.query_id = str("query_id");
            x.person_id = str("person_id");
            auto g = parse_grade(str("grade"));
            if (!g)
                throw ParseError("grade must be DR, PR or NR", 0, "grade");
            x.grade = *g;
            auto src = str("source");
            if (src != "human" && src != "planted")
                throw ParseError("source must be human or planted", 0, "source");
            x.source = src == "human" ? JudgmentSource::Human : JudgmentSource::Planted;
            judgments_[{x.query_id, x.person_id}] = x;
        } else if (type == "run") {
            detail::reject_unknown(j, "", {"type", "query_id", "system", "ranked", "query"});
            RecordedRun r;
            r.query_id = str("query_id");
            auto s = parse_system(str("system"));
            if (!s)
                throw ParseError("unknown system", 0, "system");
            r.system = *s;
            if (!j.contains("ranked") || !j["ranked"].is_array())
                throw ParseError("ranked must be an array", 0, "ranked");
            for (const auto& id : j["ranked"]) {
                if (!id.is_string())
                    throw ParseError("ranked entries must be strings", 0, "ranked");
                r.ranked.push_back(id.get<std::string>());
            }
            if (!j.contains("query"))
                throw ParseError("missing query", 0, "query");
            r.query = query_from_json(j["query"]);
            latest_query_[r.query_id] = r.query;
            runs_[{r.query_id, r.system}] = std::move(r);
        } else {
            throw ParseError("unknown line type '" + type + "'", 0, "type");
        }
    }

    std::filesystem::path path_;
    std::ofstream out_;
    mutable std::mutex mutex_;
    std::map<std::pair<std::string, std::string>, Judgment> judgments_;
    std::map<std::pair<std::string, SearchSystem>, RecordedRun> runs_;
    std::map<std::string, CohortQuery> latest_query_;
};

} // namespace cohort
