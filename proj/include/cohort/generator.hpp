#pragma once

// Seeded synthetic corpus with planted relevance grades for the five bundled
// query templates q1..q5. Every random choice is drawn from one SplitMix64
// stream in a fixed order, so (spec, seed) determines the output exactly.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "corpus.hpp"
#include "date.hpp"
#include "errors.hpp"
#include "prng.hpp"
#include "vocabulary.hpp"

namespace cohort {

struct ArchetypeCounts {
    std::size_t dr = 0;              ///< code + affirmed text
    std::size_t pr = 0;              ///< partial criteria
    std::size_t structured_trap = 0; ///< code + negated or family text
    std::size_t text_only = 0;       ///< affirmed text, no code

    bool operator==(const ArchetypeCounts&) const = default;
};

struct GeneratorSpec {
    Date reference_date = Date::from_ymd(2020, 1, 1);
    std::size_t background = 0;
    std::map<std::string, ArchetypeCounts> queries;

    bool operator==(const GeneratorSpec&) const = default;
};

inline const std::vector<std::string>& generator_templates() {
    static const std::vector<std::string> ids{"q1", "q2", "q3", "q4", "q5"};
    return ids;
}

inline GeneratorSpec generator_spec_from_json(const nlohmann::json& j) {
    auto fail = [](const std::string& msg) -> void { throw ConfigError("generator spec: " + msg); };
    if (!j.is_object())
        fail("expected an object");
    GeneratorSpec s;
    for (const auto& [k, v] : j.items()) {
        if (k == "reference_date") {
            if (!v.is_string())
                fail("reference_date must be a string");
            s.reference_date = Date::parse(v.get<std::string>());
        } else if (k == "background") {
            if (!v.is_number_unsigned())
                fail("background must be a non-negative integer");
            s.background = v.get<std::size_t>();
        } else if (k == "queries") {
            if (!v.is_object())
                fail("queries must be an object");
            for (const auto& [qid, counts] : v.items()) {
                const auto& known = generator_templates();
                if (std::find(known.begin(), known.end(), qid) == known.end())
                    fail("unknown query template '" + qid + "'");
                if (!counts.is_object())
                    fail("counts for " + qid + " must be an object");
                ArchetypeCounts c;
                for (const auto& [name, n] : counts.items()) {
                    if (!n.is_number_unsigned())
                        fail(qid + "." + name + " must be a non-negative integer");
                    auto value = n.get<std::size_t>();
                    if (name == "dr")
                        c.dr = value;
                    else if (name == "pr")
                        c.pr = value;
                    else if (name == "structured_trap")
                        c.structured_trap = value;
                    else if (name == "text_only")
                        c.text_only = value;
                    else
                        fail("unknown archetype '" + name + "' for " + qid);
                }
                s.queries[qid] = c;
            }
        } else {
            fail("unknown field '" + k + "'");
        }
    }
    return s;
}

inline GeneratorSpec load_generator_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open generator spec " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("generator spec is not valid JSON: " + std::string(e.what()));
    }
    return generator_spec_from_json(j);
}

struct GeneratedCorpus {
    Corpus corpus;
    std::vector<GroundTruth> truth; ///< every person x every spec query, sorted by (query_id, person_id)
};

namespace gen {

enum class Archetype { DR, PR, Trap, TextOnly, Background };

struct PlannedRecord {
    Domain domain;
    SourceVocabulary vocabulary;
    std::string code;
    std::optional<int> at_age; ///< otherwise a date in the years before the reference date
    std::optional<double> value;
    std::optional<std::string> unit;
};

struct PatientPlan {
    std::string query_id; ///< empty for background
    Archetype archetype = Archetype::Background;
    Grade grade = Grade::NR;
    int age = 40; ///< whole years at the reference date
    Gender gender = Gender::F;
    std::vector<PlannedRecord> records;
    std::vector<std::string> sentences; ///< planted clinical sentences
};

inline const std::vector<std::string>& fillers() {
    static const std::vector<std::string> f{
        "Vital signs are within normal limits.",
        "Patient reports good appetite and sleep.",
        "Follow up in three months.",
        "Continue current medications.",
        "Lungs are clear to auscultation.",
        "Heart rate and rhythm are regular.",
        "Patient was counseled on diet and exercise.",
        "Return precautions were reviewed.",
        "Labs will be repeated at the next visit.",
        "Weight is stable since the last visit.",
        "Skin is warm and dry.",
        "Patient lives at home and is independent.",
        "Immunizations are up to date.",
        "Questions were answered to satisfaction.",
        "Medication list was reconciled today.",
        "Patient is alert and oriented.",
    };
    return f;
}

struct Distractor {
    std::string sentence;
    Domain domain;
    SourceVocabulary vocabulary;
    std::string code; ///< empty when the condition is only mentioned in notes
};

inline const std::vector<Distractor>& adult_distractors() {
    static const std::vector<Distractor> d{
        {"Hypertension is well controlled.", Domain::Condition, SourceVocabulary::ICD10, "I10"},
        {"Type 2 diabetes managed with metformin.", Domain::Condition, SourceVocabulary::ICD10, "E11.9"},
        {"Hyperlipidemia on atorvastatin.", Domain::Condition, SourceVocabulary::ICD9, "272.4"},
        {"Asthma uses albuterol as needed.", Domain::Condition, SourceVocabulary::ICD10, "J45.909"},
        {"GERD symptoms improved on omeprazole.", Domain::Condition, SourceVocabulary::ICD10, "K21.9"},
        {"Osteoarthritis of the knee is stable.", Domain::Condition, SourceVocabulary::ICD9, "715.90"},
        {"Hypothyroidism treated with levothyroxine.", Domain::Condition, SourceVocabulary::ICD10, "E03.9"},
        {"Atrial fibrillation in sinus rhythm today.", Domain::Condition, SourceVocabulary::ICD9, "427.31"},
        {"Depression managed with sertraline.", Domain::Condition, SourceVocabulary::ICD10, "F32.9"},
        {"Chronic kidney disease stage three.", Domain::Condition, SourceVocabulary::ICD10, "N18.3"},
        {"Migraine headaches are less frequent.", Domain::Condition, SourceVocabulary::ICD9, ""},
        {"Low back pain after lifting.", Domain::Condition, SourceVocabulary::ICD10, ""},
    };
    return d;
}

inline const std::vector<Distractor>& child_distractors() {
    static const std::vector<Distractor> d{
        {"Asthma uses albuterol as needed.", Domain::Condition, SourceVocabulary::ICD10, "J45.909"},
        {"Eczema treated with moisturizers.", Domain::Condition, SourceVocabulary::ICD9, ""},
        {"Recent ear infection has resolved.", Domain::Condition, SourceVocabulary::ICD10, ""},
        {"Allergic rhinitis during spring.", Domain::Condition, SourceVocabulary::ICD10, ""},
    };
    return d;
}

inline const std::vector<std::string>& family_history_lines() {
    static const std::vector<std::string> f{
        "Mother had Crohn's disease.",
        "Father has rheumatoid arthritis.",
        "Sister has epilepsy.",
        "Family history of hereditary hemorrhagic telangiectasia.",
    };
    return f;
}

inline PlannedRecord icd(std::string code, std::optional<int> at_age = std::nullopt) {
    // ICD-9 diagnosis codes are numeric, ICD-10 codes start with a letter.
    auto sv = std::isdigit(static_cast<unsigned char>(code[0])) ? SourceVocabulary::ICD9 : SourceVocabulary::ICD10;
    return {Domain::Condition, sv, std::move(code), at_age, std::nullopt, std::nullopt};
}

inline PlannedRecord drug(std::string name) {
    return {Domain::Drug, SourceVocabulary::DRUG_NAME, std::move(name), std::nullopt, std::nullopt, std::nullopt};
}

inline PlannedRecord cpt(std::string code) {
    return {Domain::Procedure, SourceVocabulary::CPT, std::move(code), std::nullopt, std::nullopt, std::nullopt};
}

inline PlannedRecord lab(std::string code, double value, std::string unit) {
    return {Domain::Measurement, SourceVocabulary::LOCAL_LAB, std::move(code), std::nullopt, value, std::move(unit)};
}

template <typename T>
const T& pick(SplitMix64& rng, const std::vector<T>& v) {
    return v[rng.below(v.size())];
}

/// Fills `p` for one archetype of one query. `variant` alternates the two
/// partial-relevance kinds: even is text-positive but fails a structured
/// rule, odd carries the codes with weak text.
inline void plan_q1(PatientPlan& p, std::size_t variant, SplitMix64& rng) {
    bool crohn = rng.chance(1, 2);
    std::string disease = crohn ? "Crohn's disease" : "ulcerative colitis";
    std::string code = crohn ? pick(rng, std::vector<std::string>{"555.9", "K50.90"})
                             : pick(rng, std::vector<std::string>{"556.9", "K51.90"});
    p.age = static_cast<int>(rng.between(22, 78));
    auto affirmed = [&] {
        p.sentences = {"Known " + disease + " followed by gastroenterology.",
                       disease + " with intermittent flares, managed with mesalamine.",
                       "Inflammatory bowel disease activity is mild.", "Colonoscopy confirmed " + disease + "."};
    };
    switch (p.archetype) {
    case Archetype::DR:
        p.records = {icd(code), drug("mesalamine"), lab("CRP", static_cast<double>(rng.between(5, 40)), "mg/L")};
        affirmed();
        break;
    case Archetype::TextOnly:
        p.records = {drug("mesalamine")};
        affirmed();
        break;
    case Archetype::PR:
        if (variant % 2 == 0) {
            p.records = {icd(code), cpt(pick(rng, std::vector<std::string>{"44140", "44150", "44120"}))};
            p.sentences = {disease + " with intermittent flares.", "Inflammatory bowel disease activity is mild.",
                           "Colectomy performed two years ago.", "Recovery from colectomy was uneventful."};
        } else {
            p.records = {icd(code)};
            p.sentences = {"Chronic diarrhea and abdominal pain.", "Referred to gastroenterology clinic.",
                           "Stool studies are pending."};
        }
        break;
    case Archetype::Trap:
        p.records = {icd(code)};
        p.sentences = {"No evidence of inflammatory bowel disease on colonoscopy.",
                       "Biopsy negative for " + disease + ".", "Symptoms attributed to irritable bowel syndrome.",
                       "Mother had " + disease + "."};
        break;
    case Archetype::Background:
        break;
    }
}

inline void plan_q2(PatientPlan& p, std::size_t variant, SplitMix64& rng) {
    std::string code = pick(rng, std::vector<std::string>{"448.0", "I78.0"});
    p.age = static_cast<int>(rng.between(22, 90));
    auto affirmed = [&] {
        p.sentences = {"Hereditary hemorrhagic telangiectasia with recurrent epistaxis.",
                       "HHT confirmed by genetic testing.", "Osler Weber Rendu syndrome followed in clinic.",
                       "Iron deficiency anemia secondary to HHT."};
    };
    switch (p.archetype) {
    case Archetype::DR:
        p.records = {icd(code), lab("HGB", static_cast<double>(rng.between(8, 12)), "g/dL")};
        affirmed();
        break;
    case Archetype::TextOnly:
        affirmed();
        break;
    case Archetype::PR:
        if (variant % 2 == 0) {
            p.sentences = {"Suspected hereditary hemorrhagic telangiectasia, workup pending.",
                           "Recurrent epistaxis this winter.", "Genetic testing for HHT was ordered."};
        } else {
            p.records = {icd(code)};
            p.sentences = {"Recurrent epistaxis, cauterized in clinic.", "Telangiectasia noted on the lips."};
        }
        break;
    case Archetype::Trap:
        p.records = {icd(code)};
        p.sentences = {"Genetic testing negative for hereditary hemorrhagic telangiectasia.",
                       "Epistaxis attributed to dry air.", "Mother has HHT.",
                       "No evidence of hereditary hemorrhagic telangiectasia on exam."};
        break;
    case Archetype::Background:
        break;
    }
}

inline void plan_q3(PatientPlan& p, std::size_t variant, SplitMix64& rng) {
    std::string code = pick(rng, std::vector<std::string>{"345.40", "345.41", "G40.209", "G40.109"});
    auto onset = static_cast<int>(rng.between(1, 3));
    p.age = static_cast<int>(rng.between(5, 16));
    auto affirmed = [&] {
        p.sentences = {"Localization related epilepsy with complex partial seizures since early childhood.",
                       "Focal epilepsy controlled on levetiracetam.", "Seen in neurology clinic for follow up.",
                       "Complex partial seizures are less frequent."};
    };
    switch (p.archetype) {
    case Archetype::DR:
        p.records = {icd(code, onset), drug("levetiracetam"), cpt("95816")};
        affirmed();
        break;
    case Archetype::TextOnly:
        p.records = {drug("levetiracetam")};
        affirmed();
        break;
    case Archetype::PR:
        if (variant % 2 == 0) {
            p.age = static_cast<int>(rng.between(10, 16));
            p.records = {icd(code, static_cast<int>(rng.between(5, 8))), drug("levetiracetam")};
            affirmed();
        } else {
            p.records = {icd(code, onset)};
            p.sentences = {"Seizure disorder, stable.", "Developmental delay noted by school."};
        }
        break;
    case Archetype::Trap:
        p.records = {icd(code, onset)};
        p.sentences = {"EEG was negative for focal epilepsy.", "No complex partial seizures reported.",
                       "Events attributed to febrile seizures.", "Brother has epilepsy."};
        break;
    case Archetype::Background:
        break;
    }
}

inline void plan_q4(PatientPlan& p, std::size_t variant, SplitMix64& rng) {
    std::string code = pick(rng, std::vector<std::string>{"714.0", "M06.9", "M05.79"});
    p.age = static_cast<int>(rng.between(25, 68));
    auto affirmed = [&] {
        p.sentences = {"Rheumatoid arthritis on weekly methotrexate.",
                       "Methotrexate dose increased to twenty milligrams.", "Rheumatoid arthritis with morning stiffness.",
                       "Followed in rheumatology clinic."};
    };
    switch (p.archetype) {
    case Archetype::DR:
        p.records = {icd(code), drug(pick(rng, std::vector<std::string>{"methotrexate", "trexall"})), drug("folic acid")};
        affirmed();
        break;
    case Archetype::TextOnly:
        affirmed();
        break;
    case Archetype::PR:
        if (variant % 2 == 0) {
            auto bio = pick(rng, std::vector<std::string>{"adalimumab", "etanercept", "infliximab", "abatacept"});
            p.records = {icd(code), drug("methotrexate"), drug(bio)};
            p.sentences = {"Rheumatoid arthritis on weekly methotrexate.",
                           "Rheumatoid arthritis with morning stiffness.", "Started " + bio + " last year."};
        } else {
            p.records = {icd(code), drug("methotrexate")};
            p.sentences = {"Joint pain in both hands.", "Continues current regimen."};
        }
        break;
    case Archetype::Trap:
        p.records = {icd(code), drug("methotrexate")};
        p.sentences = {"Serology negative for rheumatoid arthritis.", "Patient denies methotrexate use.",
                       "Joint pain attributed to osteoarthritis.", "Sister has rheumatoid arthritis."};
        break;
    case Archetype::Background:
        break;
    }
}

inline void plan_q5(PatientPlan& p, std::size_t variant, SplitMix64& rng) {
    static const std::vector<std::string> ace{"lisinopril", "enalapril", "ramipril", "benazepril", "captopril",
                                              "quinapril", "fosinopril", "zestril"};
    auto med = pick(rng, ace);
    p.age = static_cast<int>(rng.between(30, 85));
    auto affirmed = [&] {
        p.sentences = {"Dry cough after starting " + med + ".", "Cough attributed to ACE inhibitor therapy.",
                       "Hypertension treated with " + med + ".", "Persistent cough at night."};
    };
    switch (p.archetype) {
    case Archetype::DR:
        p.records = {drug(med), icd("I10")};
        affirmed();
        break;
    case Archetype::TextOnly:
        p.records = {icd("I10")};
        affirmed();
        break;
    case Archetype::PR:
        if (variant % 2 == 0) {
            p.sentences = {"Cough due to viral bronchitis.", "Cough is improving."};
        } else {
            p.records = {drug(med), icd("I10")};
            p.sentences = {"Hypertension treated with " + med + ".", "Blood pressure at goal."};
        }
        break;
    case Archetype::Trap:
        p.records = {drug(med), icd("I10")};
        p.sentences = {"No cough.", "Hypertension treated with " + med + ".", "Denies cough or angioedema.",
                       "Tolerating ACE inhibitor well."};
        break;
    case Archetype::Background:
        break;
    }
}

inline void plan_background(PatientPlan& p, SplitMix64& rng) {
    bool child = rng.chance(15, 100);
    p.age = child ? static_cast<int>(rng.between(2, 17)) : static_cast<int>(rng.between(18, 89));
    const auto& pool = child ? child_distractors() : adult_distractors();
    auto n = rng.between(1, 3);
    for (std::int64_t i = 0; i < n; ++i) {
        const auto& d = pick(rng, pool);
        if (!d.code.empty())
            p.records.push_back({d.domain, d.vocabulary, d.code, std::nullopt, std::nullopt, std::nullopt});
        p.sentences.push_back(d.sentence);
    }
    if (!child && rng.chance(1, 10))
        p.sentences.push_back(pick(rng, family_history_lines()));
}

/// Date that is exactly `years` whole years (by anniversary) after `birth`,
/// offset a random number of days into that year.
inline Date at_age(Date birth, int years, SplitMix64& rng) {
    auto d = birth.plus_days(static_cast<std::int32_t>(years * 365.25) + 10 + static_cast<std::int32_t>(rng.below(330)));
    return d;
}

inline constexpr const char* kHeadings[3] = {"Subjective", "Assessment", "Plan"};
inline constexpr std::size_t kSentencesPerSection = 3;
inline constexpr std::size_t kSlots[6] = {0, 1, 3, 4, 2, 5};

} // namespace gen

/// Builds persons, records, documents and complete ground truth. Throws
/// ConfigError for a query id outside the bundled templates.
inline GeneratedCorpus generate_synthetic_corpus(const GeneratorSpec& spec, std::uint64_t seed,
                                                 const Vocabulary& vocab) {
    using namespace gen;
    static const std::map<std::string, std::function<void(PatientPlan&, std::size_t, SplitMix64&)>> planners{
        {"q1", plan_q1}, {"q2", plan_q2}, {"q3", plan_q3}, {"q4", plan_q4}, {"q5", plan_q5}};

    SplitMix64 rng(seed);
    std::vector<PatientPlan> plans;
    for (const auto& [qid, counts] : spec.queries) {
        auto planner = planners.find(qid);
        if (planner == planners.end())
            throw ConfigError("unknown query template '" + qid + "'");
        auto add = [&](Archetype a, Grade g, std::size_t n) {
            for (std::size_t i = 0; i < n; ++i) {
                PatientPlan p;
                p.query_id = qid;
                p.archetype = a;
                p.grade = g;
                planner->second(p, i, rng);
                plans.push_back(std::move(p));
            }
        };
        add(Archetype::DR, Grade::DR, counts.dr);
        add(Archetype::PR, Grade::PR, counts.pr);
        add(Archetype::Trap, Grade::NR, counts.structured_trap);
        add(Archetype::TextOnly, Grade::DR, counts.text_only);
    }
    for (std::size_t i = 0; i < spec.background; ++i) {
        PatientPlan p;
        plan_background(p, rng);
        plans.push_back(std::move(p));
    }
    rng.shuffle(plans);

    std::vector<Person> persons;
    std::vector<StructuredRecord> records;
    std::vector<ClinicalDocument> documents;
    std::vector<GroundTruth> truth;
    const auto ref = spec.reference_date;
    const auto& filler = fillers();

    for (std::size_t idx = 0; idx < plans.size(); ++idx) {
        auto& p = plans[idx];
        char id_buf[16];
        std::snprintf(id_buf, sizeof id_buf, "P%05zu", idx + 1);
        std::string pid = id_buf;
        p.gender = rng.chance(1, 2) ? Gender::F : Gender::M;
        auto birth = ref.plus_days(-(static_cast<std::int32_t>(p.age * 365.25) + 10 +
                                     static_cast<std::int32_t>(rng.below(330))));
        persons.push_back({pid, birth, p.gender});

        for (const auto& r : p.records) {
            Date when = r.at_age ? at_age(birth, *r.at_age, rng)
                                 : ref.plus_days(-static_cast<std::int32_t>(30 + rng.below(1400)));
            if (when < birth)
                when = birth.plus_days(1);
            StructuredRecord rec;
            rec.person_id = pid;
            rec.domain = r.domain;
            rec.source_vocabulary = r.vocabulary;
            rec.source_code = r.code;
            rec.event_date = when;
            rec.value = r.value;
            rec.unit = r.unit;
            records.push_back(std::move(rec));
        }

        // Six sections over two documents, three sentences each; planted
        // sentences take slots in kSlots order at a random position.
        std::vector<std::vector<std::string>> sections(6);
        for (std::size_t i = 0; i < p.sentences.size(); ++i)
            sections[kSlots[i % 6]].push_back(p.sentences[i]);
        for (auto& s : sections) {
            while (s.size() < kSentencesPerSection) {
                auto candidate = filler[rng.below(filler.size())];
                if (std::find(s.begin(), s.end(), candidate) == s.end())
                    s.insert(s.begin() + static_cast<std::ptrdiff_t>(rng.below(s.size() + 1)), candidate);
            }
        }
        Date encounters[2] = {ref.plus_days(-static_cast<std::int32_t>(400 + rng.below(300))),
                              ref.plus_days(-static_cast<std::int32_t>(30 + rng.below(300)))};
        for (int d = 0; d < 2; ++d) {
            std::string text;
            for (int h = 0; h < 3; ++h) {
                text += kHeadings[h];
                text += ":";
                for (const auto& sentence : sections[static_cast<std::size_t>(d * 3 + h)])
                    text += " " + sentence;
                text += "\n";
            }
            auto when = encounters[d] < birth ? birth.plus_days(1) : encounters[d];
            documents.push_back({pid + "-N" + std::to_string(d + 1), pid, when, std::move(text), {}, {}});
        }

        for (const auto& [qid, counts] : spec.queries)
            truth.push_back({qid, pid, p.query_id == qid ? p.grade : Grade::NR});
    }

    std::sort(truth.begin(), truth.end(), [](const GroundTruth& a, const GroundTruth& b) {
        return std::tie(a.query_id, a.person_id) < std::tie(b.query_id, b.person_id);
    });
    GeneratedCorpus out;
    out.corpus = assemble_corpus(std::move(persons), std::move(records), std::move(documents), vocab);
    out.truth = std::move(truth);
    return out;
}

} // namespace cohort
