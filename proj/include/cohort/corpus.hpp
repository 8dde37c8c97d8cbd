#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "date.hpp"
#include "errors.hpp"
#include "textnlp.hpp"
#include "vocabulary.hpp"

namespace cohort {

enum class Gender { F, M, Other };

inline std::string_view to_string(Gender g) {
    switch (g) {
    case Gender::F:
        return "F";
    case Gender::M:
        return "M";
    case Gender::Other:
        return "Other";
    }
    return "?";
}

inline std::optional<Gender> parse_gender(std::string_view s) {
    if (s == "F")
        return Gender::F;
    if (s == "M")
        return Gender::M;
    if (s == "Other")
        return Gender::Other;
    return std::nullopt;
}

/// Relevance grades and their fixed scores 1 / 0.5 / 0.
enum class Grade { DR, PR, NR };

inline constexpr double grade_score(Grade g) {
    switch (g) {
    case Grade::DR:
        return 1.0;
    case Grade::PR:
        return 0.5;
    case Grade::NR:
        return 0.0;
    }
    return 0.0;
}

inline std::string_view to_string(Grade g) {
    switch (g) {
    case Grade::DR:
        return "DR";
    case Grade::PR:
        return "PR";
    case Grade::NR:
        return "NR";
    }
    return "?";
}

inline std::optional<Grade> parse_grade(std::string_view s) {
    if (s == "DR")
        return Grade::DR;
    if (s == "PR")
        return Grade::PR;
    if (s == "NR")
        return Grade::NR;
    return std::nullopt;
}

struct Person {
    std::string person_id;
    Date birth_date;
    Gender gender = Gender::Other;

    bool operator==(const Person&) const = default;
};

struct StructuredRecord {
    std::string person_id;
    Domain domain = Domain::Condition;
    SourceVocabulary source_vocabulary = SourceVocabulary::ICD9;
    std::string source_code;
    std::optional<std::string> concept_id; ///< filled by ETL, absent when unmapped
    Date event_date;
    std::optional<double> value; ///< Measurement only
    std::optional<std::string> unit;

    bool operator==(const StructuredRecord&) const = default;
};

struct ClinicalDocument {
    std::string doc_id;
    std::string person_id;
    Date encounter_date;
    std::string text;
    std::vector<SectionText> sections;                 // derived
    std::vector<std::vector<ConceptMention>> mentions; // derived, parallel to sections

    bool operator==(const ClinicalDocument&) const = default;
};

struct GroundTruth {
    std::string query_id;
    std::string person_id;
    Grade grade = Grade::NR;

    bool operator==(const GroundTruth&) const = default;
};

struct LoadReport {
    std::size_t persons = 0;
    std::size_t records = 0;
    std::size_t documents = 0;
    std::size_t sections = 0;
    std::size_t mentions = 0;
    std::size_t unmapped_records = 0;

    bool operator==(const LoadReport&) const = default;
};

struct Corpus {
    std::vector<Person> persons;
    std::vector<StructuredRecord> records;
    std::vector<ClinicalDocument> documents;
    LoadReport report;

    const Person* find_person(std::string_view id) const {
        for (const auto& p : persons)
            if (p.person_id == id)
                return &p;
        return nullptr;
    }

    bool operator==(const Corpus&) const = default;
};

/// Runs sectioning and mention extraction on `text`.
inline ClinicalDocument make_document(std::string doc_id, std::string person_id, Date encounter_date, std::string text,
                                      const Vocabulary& vocab,
                                      const TriggerLexicon& lexicon = TriggerLexicon::defaults()) {
    ClinicalDocument d{std::move(doc_id), std::move(person_id), encounter_date, std::move(text), {}, {}};
    d.sections = split_sections(d.text);
    d.mentions.reserve(d.sections.size());
    for (const auto& s : d.sections)
        d.mentions.push_back(extract_mentions(s, vocab, lexicon));
    return d;
}

/// Validates cross-references, resolves record codes through the vocabulary
/// and derives document sections/mentions. Unmapped codes are kept with an
/// absent concept_id and counted in the report.
inline Corpus assemble_corpus(std::vector<Person> persons, std::vector<StructuredRecord> records,
                              std::vector<ClinicalDocument> documents, const Vocabulary& vocab,
                              const TriggerLexicon& lexicon = TriggerLexicon::defaults()) {
    Corpus c;
    std::map<std::string, Date> birth;
    for (const auto& p : persons)
        if (!birth.emplace(p.person_id, p.birth_date).second)
            throw ValidationError("duplicate person_id " + p.person_id);
    for (auto& r : records) {
        auto it = birth.find(r.person_id);
        if (it == birth.end())
            throw ValidationError("record refers to unknown person_id " + r.person_id);
        if (r.event_date < it->second)
            throw ValidationError("record for " + r.person_id + " dated before birth");
        r.concept_id = vocab.map_code(r.source_vocabulary, r.source_code);
        if (!r.concept_id)
            ++c.report.unmapped_records;
    }
    std::set<std::string> doc_ids;
    for (auto& d : documents) {
        auto it = birth.find(d.person_id);
        if (it == birth.end())
            throw ValidationError("document " + d.doc_id + " refers to unknown person_id " + d.person_id);
        if (d.encounter_date < it->second)
            throw ValidationError("document " + d.doc_id + " dated before birth");
        if (!doc_ids.insert(d.doc_id).second)
            throw ValidationError("duplicate doc_id " + d.doc_id);
        d = make_document(std::move(d.doc_id), std::move(d.person_id), d.encounter_date, std::move(d.text), vocab,
                          lexicon);
        c.report.sections += d.sections.size();
        for (const auto& m : d.mentions)
            c.report.mentions += m.size();
    }
    c.report.persons = persons.size();
    c.report.records = records.size();
    c.report.documents = documents.size();
    c.persons = std::move(persons);
    c.records = std::move(records);
    c.documents = std::move(documents);
    return c;
}

namespace detail {

using nlohmann::json;

inline void require_keys(const json& j, std::initializer_list<std::string_view> required,
                         std::initializer_list<std::string_view> optional, std::size_t line) {
    if (!j.is_object())
        throw ParseError("expected a JSON object", line);
    for (auto k : required)
        if (!j.contains(std::string(k)))
            throw ParseError("missing field '" + std::string(k) + "'", line, std::string(k));
    for (const auto& [k, v] : j.items()) {
        bool known = false;
        for (auto r : required)
            known |= r == k;
        for (auto o : optional)
            known |= o == k;
        if (!known)
            throw ParseError("unknown field '" + k + "'", line, k);
    }
}

inline std::string get_string(const json& j, const char* key, std::size_t line) {
    const auto& v = j.at(key);
    if (!v.is_string())
        throw ParseError(std::string("field '") + key + "' must be a string", line, key);
    return v.get<std::string>();
}

inline Date get_date(const json& j, const char* key, std::size_t line) {
    try {
        return Date::parse(get_string(j, key, line));
    } catch (const ParseError& e) {
        if (e.line())
            throw;
        throw ParseError(e.what(), line, key);
    }
}

/// Calls `fn(line_no, json)` for every non-blank line.
template <typename Fn>
void read_jsonl(const std::filesystem::path& path, Fn fn) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ParseError("cannot open " + path.string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        strip_cr(line);
        if (line.find_first_not_of(" \t") == std::string::npos)
            continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(path.filename().string() + ": " + e.what(), line_no);
        }
        fn(line_no, j);
    }
}

} // namespace detail

inline Person person_from_json(const nlohmann::json& j, std::size_t line = 0) {
    detail::require_keys(j, {"person_id", "birth_date", "gender"}, {}, line);
    Person p;
    p.person_id = detail::get_string(j, "person_id", line);
    p.birth_date = detail::get_date(j, "birth_date", line);
    auto g = parse_gender(detail::get_string(j, "gender", line));
    if (!g)
        throw ParseError("gender must be F, M or Other", line, "gender");
    p.gender = *g;
    return p;
}

inline nlohmann::json to_json(const Person& p) {
    return {{"person_id", p.person_id}, {"birth_date", p.birth_date.str()}, {"gender", to_string(p.gender)}};
}

inline StructuredRecord record_from_json(const nlohmann::json& j, std::size_t line = 0) {
    detail::require_keys(j, {"person_id", "domain", "source_vocabulary", "source_code", "event_date"},
                         {"value", "unit"}, line);
    StructuredRecord r;
    r.person_id = detail::get_string(j, "person_id", line);
    auto d = parse_domain(detail::get_string(j, "domain", line));
    if (!d || *d == Domain::Observation || *d == Domain::Person)
        throw ParseError("domain must be Condition, Procedure, Measurement or Drug", line, "domain");
    r.domain = *d;
    auto sv = parse_source_vocabulary(detail::get_string(j, "source_vocabulary", line));
    if (!sv)
        throw ParseError("unknown source_vocabulary", line, "source_vocabulary");
    r.source_vocabulary = *sv;
    r.source_code = detail::get_string(j, "source_code", line);
    r.event_date = detail::get_date(j, "event_date", line);
    if (j.contains("value")) {
        if (!j["value"].is_number())
            throw ParseError("value must be a number", line, "value");
        r.value = j["value"].get<double>();
    }
    if (j.contains("unit"))
        r.unit = detail::get_string(j, "unit", line);
    return r;
}

inline nlohmann::json to_json(const StructuredRecord& r) {
    nlohmann::json j{{"person_id", r.person_id},
                     {"domain", to_string(r.domain)},
                     {"source_vocabulary", to_string(r.source_vocabulary)},
                     {"source_code", r.source_code},
                     {"event_date", r.event_date.str()}};
    if (r.value)
        j["value"] = *r.value;
    if (r.unit)
        j["unit"] = *r.unit;
    return j;
}

inline ClinicalDocument document_from_json(const nlohmann::json& j, std::size_t line = 0) {
    detail::require_keys(j, {"doc_id", "person_id", "encounter_date", "text"}, {}, line);
    ClinicalDocument d;
    d.doc_id = detail::get_string(j, "doc_id", line);
    d.person_id = detail::get_string(j, "person_id", line);
    d.encounter_date = detail::get_date(j, "encounter_date", line);
    d.text = detail::get_string(j, "text", line);
    return d;
}

inline nlohmann::json to_json(const ClinicalDocument& d) {
    return {{"doc_id", d.doc_id},
            {"person_id", d.person_id},
            {"encounter_date", d.encounter_date.str()},
            {"text", d.text}};
}

inline GroundTruth truth_from_json(const nlohmann::json& j, std::size_t line = 0) {
    detail::require_keys(j, {"query_id", "person_id", "grade"}, {}, line);
    GroundTruth t;
    t.query_id = detail::get_string(j, "query_id", line);
    t.person_id = detail::get_string(j, "person_id", line);
    auto g = parse_grade(detail::get_string(j, "grade", line));
    if (!g)
        throw ParseError("grade must be DR, PR or NR", line, "grade");
    t.grade = *g;
    return t;
}

inline nlohmann::json to_json(const GroundTruth& t) {
    return {{"query_id", t.query_id}, {"person_id", t.person_id}, {"grade", to_string(t.grade)}};
}

inline constexpr std::string_view kPersonsFile = "persons.jsonl";
inline constexpr std::string_view kRecordsFile = "records.jsonl";
inline constexpr std::string_view kDocumentsFile = "documents.jsonl";
inline constexpr std::string_view kTruthFile = "truth.jsonl";

inline Corpus load_corpus(const std::filesystem::path& persons_path, const std::filesystem::path& records_path,
                          const std::filesystem::path& documents_path, const Vocabulary& vocab,
                          const TriggerLexicon& lexicon = TriggerLexicon::defaults()) {
    std::vector<Person> persons;
    std::vector<StructuredRecord> records;
    std::vector<ClinicalDocument> documents;
    detail::read_jsonl(persons_path, [&](std::size_t line, const nlohmann::json& j) {
        persons.push_back(person_from_json(j, line));
    });
    detail::read_jsonl(records_path, [&](std::size_t line, const nlohmann::json& j) {
        records.push_back(record_from_json(j, line));
    });
    detail::read_jsonl(documents_path, [&](std::size_t line, const nlohmann::json& j) {
        documents.push_back(document_from_json(j, line));
    });
    return assemble_corpus(std::move(persons), std::move(records), std::move(documents), vocab, lexicon);
}

/// Loads persons/records/documents.jsonl from a corpus directory.
inline Corpus load_corpus(const std::filesystem::path& dir, const Vocabulary& vocab,
                          const TriggerLexicon& lexicon = TriggerLexicon::defaults()) {
    return load_corpus(dir / kPersonsFile, dir / kRecordsFile, dir / kDocumentsFile, vocab, lexicon);
}

namespace detail {

template <typename Range>
void write_jsonl(const std::filesystem::path& path, const Range& items) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw ParseError("cannot write " + path.string());
    for (const auto& item : items)
        out << to_json(item).dump() << '\n';
}

} // namespace detail

inline void write_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    detail::write_jsonl(dir / kPersonsFile, corpus.persons);
    detail::write_jsonl(dir / kRecordsFile, corpus.records);
    detail::write_jsonl(dir / kDocumentsFile, corpus.documents);
}

inline std::vector<GroundTruth> load_ground_truth(const std::filesystem::path& path) {
    std::vector<GroundTruth> out;
    std::set<std::pair<std::string, std::string>> seen;
    detail::read_jsonl(path, [&](std::size_t line, const nlohmann::json& j) {
        auto t = truth_from_json(j, line);
        if (!seen.emplace(t.query_id, t.person_id).second)
            throw ValidationError("duplicate ground truth for (" + t.query_id + ", " + t.person_id + ") at line " +
                                  std::to_string(line));
        out.push_back(std::move(t));
    });
    return out;
}

inline void write_ground_truth(const std::vector<GroundTruth>& truth, const std::filesystem::path& path) {
    detail::write_jsonl(path, truth);
}

} // namespace cohort
