#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include "cohort/vocabulary.hpp"

namespace fs = std::filesystem;
using namespace cohort;

namespace {

const fs::path kFixtures = COHORT_TEST_FIXTURES;

const Vocabulary& small() {
    static const Vocabulary v = load_vocabulary(kFixtures / "vocab_small");
    return v;
}

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("cohort_vocab_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

void write(const fs::path& p, const std::string& body) {
    std::ofstream(p) << body;
}

const char* kHeader = "concept_id\tdomain\tpreferred_name\tcui\tsynonyms\tparent_ids\n";

// Closure by repeated scanning of parent lists, independent of the child index.
std::set<std::string> closure(const Vocabulary& v, const std::string& root) {
    std::set<std::string> out{root};
    for (bool grew = true; grew;) {
        grew = false;
        for (const auto& c : v.concepts())
            if (!out.count(c.concept_id))
                for (const auto& p : c.parent_ids)
                    if (out.count(p)) {
                        out.insert(c.concept_id);
                        grew = true;
                        break;
                    }
    }
    return out;
}

} // namespace

TEST(Vocabulary, LoadsFixture) {
    const auto& v = small();
    EXPECT_EQ(v.size(), 40u);
    EXPECT_EQ(v.mappings().size(), 34u);
    const auto& crohn = v.at("C1004");
    EXPECT_EQ(crohn.domain, Domain::Condition);
    EXPECT_EQ(crohn.preferred_name, "Crohn's disease");
    EXPECT_EQ(crohn.cui, "CUI01004");
    EXPECT_EQ(crohn.synonyms.size(), 3u);
    EXPECT_EQ(crohn.parent_ids, std::vector<std::string>{"C1002"});
}

TEST(Vocabulary, ConceptsAreSortedById) {
    const auto& cs = small().concepts();
    for (std::size_t i = 1; i < cs.size(); ++i)
        EXPECT_LT(cs[i - 1].concept_id, cs[i].concept_id);
}

TEST(Vocabulary, MapCode) {
    const auto& v = small();
    EXPECT_EQ(v.map_code(SourceVocabulary::ICD9, "555.9"), "C1004");
    EXPECT_EQ(v.map_code(SourceVocabulary::ICD10, "K50.90"), "C1004");
    EXPECT_EQ(v.map_code(SourceVocabulary::LOCAL_LAB, "HGB"), "C3001");
    EXPECT_EQ(v.map_code(SourceVocabulary::CPT, "44140"), "C2002");
    EXPECT_EQ(v.map_code(SourceVocabulary::ICD9, "555.99"), std::nullopt);
    EXPECT_EQ(v.map_code(SourceVocabulary::ICD10, "555.9"), std::nullopt); // right code, wrong vocabulary
    EXPECT_EQ(v.map_code(SourceVocabulary::ICD9, "555"), std::nullopt);   // no prefix guessing
}

TEST(Vocabulary, DrugNamesFoldCase) {
    const auto& v = small();
    EXPECT_EQ(v.map_code(SourceVocabulary::DRUG_NAME, "Benazepril"), "C4002");
    EXPECT_EQ(v.map_code(SourceVocabulary::DRUG_NAME, "CAPOTEN"), "C4003");
    EXPECT_EQ(v.map_code(SourceVocabulary::LOCAL_LAB, "hgb"), std::nullopt);
}

TEST(Vocabulary, ExpandLeaf) {
    EXPECT_EQ(small().expand("C1003"), std::set<std::string>{"C1003"});
}

TEST(Vocabulary, ExpandIbd) {
    std::set<std::string> want{"C1002", "C1003", "C1004", "C1005"};
    EXPECT_EQ(small().expand("C1002"), want);
}

TEST(Vocabulary, ExpandThreeLevels) {
    auto got = small().expand("C1001");
    std::set<std::string> want{"C1001", "C1002", "C1003", "C1004", "C1005", "C1006",
                               "C1007", "C1008", "C1010", "C1011"};
    EXPECT_EQ(got, want);
}

TEST(Vocabulary, ExpandMatchesBruteForceClosure) {
    const auto& v = small();
    for (const auto& c : v.concepts())
        EXPECT_EQ(v.expand(c.concept_id), closure(v, c.concept_id)) << c.concept_id;
}

TEST(Vocabulary, ExpandIsMonotoneAlongParents) {
    const auto& v = small();
    for (const auto& c : v.concepts())
        for (const auto& p : c.parent_ids) {
            auto parent = v.expand(p);
            for (const auto& d : v.expand(c.concept_id))
                EXPECT_TRUE(parent.count(d)) << p << " should contain " << d;
        }
}

TEST(Vocabulary, ExpandUnknownThrows) {
    EXPECT_THROW(small().expand("C9999"), LookupError);
    EXPECT_THROW(small().at("C9999"), LookupError);
}

TEST(Vocabulary, ExpandDiamond) {
    auto v = Vocabulary::build({{"A", Domain::Condition, "a", {}, {}, {}},
                                {"B", Domain::Condition, "b", {}, {}, {"A"}},
                                {"C", Domain::Condition, "c", {}, {}, {"A"}},
                                {"D", Domain::Condition, "d", {}, {}, {"B", "C"}}},
                               {});
    EXPECT_EQ(v.expand("A"), (std::set<std::string>{"A", "B", "C", "D"}));
    EXPECT_EQ(v.expand("C"), (std::set<std::string>{"C", "D"}));
}

TEST(Vocabulary, MappingsRoundTrip) {
    const auto& v = small();
    for (const auto& m : v.mappings()) {
        EXPECT_EQ(v.map_code(m.source_vocabulary, m.source_code), m.concept_id);
        auto back = v.codes_for(m.concept_id);
        EXPECT_NE(std::find(back.begin(), back.end(), m), back.end());
    }
}

TEST(Vocabulary, LoadIsDeterministic) {
    auto a = load_vocabulary(kFixtures / "vocab_small");
    auto b = load_vocabulary(kFixtures / "vocab_small" / "concepts.tsv");
    EXPECT_EQ(a.concepts(), b.concepts());
    EXPECT_EQ(a.mappings(), b.mappings());
}

TEST(Vocabulary, ShuffledInputGivesSameVocabulary) {
    auto concepts = read_concepts_tsv(kFixtures / "vocab_small" / "concepts.tsv");
    auto mappings = read_code_mappings_tsv(kFixtures / "vocab_small" / "code_mappings.tsv");
    auto ref = Vocabulary::build(concepts, mappings);
    std::mt19937 rng(3);
    for (int i = 0; i < 5; ++i) {
        std::shuffle(concepts.begin(), concepts.end(), rng);
        std::shuffle(mappings.begin(), mappings.end(), rng);
        auto v = Vocabulary::build(concepts, mappings);
        EXPECT_EQ(v.concepts(), ref.concepts());
        EXPECT_EQ(v.mappings(), ref.mappings());
    }
}

TEST(Vocabulary, HeaderOnlyFileIsEmpty) {
    auto dir = scratch("header_only");
    write(dir / "concepts.tsv", kHeader);
    auto v = load_vocabulary(dir);
    EXPECT_TRUE(v.empty());
    EXPECT_TRUE(v.mappings().empty());
}

TEST(Vocabulary, DuplicateIdRejected) {
    EXPECT_THROW(Vocabulary::build({{"A", Domain::Condition, "a", {}, {}, {}},
                                    {"A", Domain::Condition, "other", {}, {}, {}}},
                                   {}),
                 ValidationError);
}

TEST(Vocabulary, DanglingParentRejected) {
    EXPECT_THROW(Vocabulary::build({{"A", Domain::Condition, "a", {}, {}, {"Z"}}}, {}), ValidationError);
}

TEST(Vocabulary, CycleRejected) {
    EXPECT_THROW(Vocabulary::build({{"A", Domain::Condition, "a", {}, {}, {"C"}},
                                    {"B", Domain::Condition, "b", {}, {}, {"A"}},
                                    {"C", Domain::Condition, "c", {}, {}, {"B"}}},
                                   {}),
                 ValidationError);
    EXPECT_THROW(Vocabulary::build({{"A", Domain::Condition, "a", {}, {}, {"A"}}}, {}), ValidationError);
}

TEST(Vocabulary, MappingToUnknownConceptRejected) {
    EXPECT_THROW(Vocabulary::build({{"A", Domain::Condition, "a", {}, {}, {}}},
                                   {{SourceVocabulary::ICD9, "1.0", "B"}}),
                 ValidationError);
}

TEST(Vocabulary, DuplicateCodeRejected) {
    EXPECT_THROW(Vocabulary::build({{"A", Domain::Condition, "a", {}, {}, {}},
                                    {"B", Domain::Condition, "b", {}, {}, {}}},
                                   {{SourceVocabulary::ICD9, "1.0", "A"}, {SourceVocabulary::ICD9, "1.0", "B"}}),
                 ValidationError);
}

TEST(Vocabulary, DuplicateSynonymRejected) {
    EXPECT_THROW(Vocabulary::build({{"A", Domain::Condition, "a", {}, {"x", "X"}, {}}}, {}), ValidationError);
}

TEST(Vocabulary, MalformedRowReportsLine) {
    auto dir = scratch("bad_row");
    write(dir / "concepts.tsv", std::string(kHeader) + "A\tCondition\ta\t\t\t\nB\tCondition\tb\n");
    try {
        load_vocabulary(dir);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 3u);
    }
}

TEST(Vocabulary, UnknownDomainRejected) {
    auto dir = scratch("bad_domain");
    write(dir / "concepts.tsv", std::string(kHeader) + "A\tDisease\ta\t\t\t\n");
    EXPECT_THROW(load_vocabulary(dir), ParseError);
}

TEST(Vocabulary, MissingFileRejected) {
    EXPECT_THROW(load_vocabulary(kFixtures / "no_such_vocab"), ParseError);
}

TEST(Vocabulary, PhraseDictionary) {
    const auto& v = small();
    ASSERT_NE(v.match_phrase("crohn s disease"), nullptr);
    EXPECT_EQ(*v.match_phrase("crohn s disease"), "C1004");
    ASSERT_NE(v.match_phrase("ibd"), nullptr);
    EXPECT_EQ(*v.match_phrase("ibd"), "C1002");
    EXPECT_EQ(v.match_phrase("Crohn's disease"), nullptr); // callers normalize first
}

TEST(Vocabulary, SearchRanksPrefixFirst) {
    auto hits = small().search("crohn", 10);
    ASSERT_GE(hits.size(), 2u);
    EXPECT_EQ(hits[0]->concept_id, "C1004");
    EXPECT_EQ(hits[1]->concept_id, "C1005");
    EXPECT_TRUE(small().search("", 10).empty());
    EXPECT_EQ(small().search("seizure", 2).size(), 2u);
}

TEST(Vocabulary, EnumNamesRoundTrip) {
    for (auto [d, name] : kDomainNames)
        EXPECT_EQ(parse_domain(name), d);
    for (auto [s, name] : kSourceVocabularyNames)
        EXPECT_EQ(parse_source_vocabulary(name), s);
    EXPECT_EQ(parse_domain("condition"), std::nullopt);
}
