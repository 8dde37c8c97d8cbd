#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "cohort/index.hpp"
#include "cohort/snapshot.hpp"
#include "../support/oracle.hpp"
#include "../support/random_corpus.hpp"

namespace fs = std::filesystem;
using namespace cohort;

namespace {

const Vocabulary& small() {
    static const Vocabulary v = load_vocabulary(fs::path(COHORT_TEST_FIXTURES) / "vocab_small");
    return v;
}

const Corpus& fixture() {
    static const Corpus c = load_corpus(fs::path(COHORT_TEST_FIXTURES) / "corpus_small", small());
    return c;
}

} // namespace

TEST(Index, SectionsOfPatientFollowCorpusOrder) {
    auto ix = build_index(fixture());
    EXPECT_EQ(ix.stats().total_sections, fixture().report.sections);
    std::vector<SectionHandle> want;
    SectionHandle h = 0;
    for (const auto& d : fixture().documents)
        for (std::size_t i = 0; i < d.sections.size(); ++i, ++h)
            if (d.person_id == "S01")
                want.push_back(h);
    EXPECT_EQ(ix.sections_of_patient("S01"), want);
    EXPECT_EQ(ix.section(want.at(0)).heading, "HISTORY");
    EXPECT_TRUE(ix.sections_of_patient("nobody").empty());
}

TEST(Index, SectionsPartitionByPatient) {
    for (std::uint64_t seed = 1; seed <= 30; ++seed) {
        auto ix = build_index(testsupport::random_corpus(seed));
        std::vector<int> seen(ix.sections().size(), 0);
        for (const auto& [id, p] : ix.patients())
            for (auto h : ix.sections_of_patient(id)) {
                ASSERT_LT(h, seen.size());
                ++seen[h];
                EXPECT_EQ(ix.section(h).person_id, id);
            }
        for (int n : seen)
            EXPECT_EQ(n, 1);
    }
}

TEST(Index, EmptyCorpus) {
    auto ix = build_index(Corpus{});
    EXPECT_EQ(ix.stats(), FieldStats{});
    EXPECT_EQ(ix.average_length(Field::Text), 0.0);
    EXPECT_TRUE(ix.text_postings("cough").empty());
    EXPECT_EQ(ix.doc_frequency(Field::Concept, "C1060"), 0u);
}

TEST(Index, NegatedMentionCountsTowardTotalOnly) {
    auto ix = build_index(fixture());
    auto s01 = ix.sections_of_patient("S01").at(0);
    auto list = ix.concept_postings("C1060");
    auto it = std::find_if(list.begin(), list.end(), [&](const ConceptPosting& p) { return p.section == s01; });
    ASSERT_NE(it, list.end());
    EXPECT_EQ(it->total_tf, 1u);
    EXPECT_EQ(it->affirmed_tf, 0u);
    EXPECT_TRUE(it->modifier_bits & 1);
    EXPECT_EQ(ix.term_frequency(Field::Concept, "C1060", s01), 0u);
    EXPECT_EQ(ix.term_frequency(Field::Concept, "C1004", s01), 1u);
    EXPECT_EQ(ix.field_length(Field::Concept, s01), 2u);
}

TEST(Index, DocFrequency) {
    auto ix = build_index(fixture());
    auto all = oracle::flatten(fixture());
    for (std::string term : {"cough", "disease", "crohn", "no", "zzz"}) {
        std::size_t df = 0;
        for (const auto& s : all)
            df += oracle::text_tf(s, term) > 0;
        EXPECT_EQ(ix.doc_frequency(Field::Text, term), df) << term;
    }
    for (std::string id : {"C1004", "C1060", "C1021", "C9999"}) {
        std::size_t df = 0;
        for (const auto& s : all)
            df += oracle::concept_tf(s, id) > 0;
        EXPECT_EQ(ix.doc_frequency(Field::Concept, id), df) << id;
    }
}

TEST(Index, MatchesBruteForceCounts) {
    for (std::uint64_t seed = 1; seed <= 60; ++seed) {
        auto corpus = testsupport::random_corpus(seed);
        auto ix = build_index(corpus);
        auto all = oracle::flatten(corpus);
        ASSERT_EQ(all.size(), ix.sections().size());
        auto st = oracle::stats(all);
        EXPECT_DOUBLE_EQ(ix.average_length(Field::Text), st.avg_text);
        EXPECT_DOUBLE_EQ(ix.average_length(Field::Concept), st.avg_concept);

        std::set<std::string> terms;
        for (const auto& s : all)
            terms.insert(s.tokens.begin(), s.tokens.end());
        EXPECT_EQ(ix.text_postings().size(), terms.size());
        for (const auto& t : terms)
            for (SectionHandle h = 0; h < all.size(); ++h)
                ASSERT_EQ(ix.term_frequency(Field::Text, t, h), oracle::text_tf(all[h], t)) << seed << " " << t;
        for (const auto& c : testsupport::tiny_vocab().concepts())
            for (SectionHandle h = 0; h < all.size(); ++h) {
                ASSERT_EQ(ix.term_frequency(Field::Concept, c.concept_id, h), oracle::concept_tf(all[h], c.concept_id));
                EXPECT_EQ(ix.field_length(Field::Concept, h), all[h].mentions.size());
                EXPECT_EQ(ix.field_length(Field::Text, h), all[h].tokens.size());
            }
    }
}

TEST(Index, PostingsAreSortedBySection) {
    auto ix = build_index(testsupport::random_corpus(5));
    for (const auto& [t, list] : ix.text_postings())
        for (std::size_t i = 1; i < list.size(); ++i)
            EXPECT_LT(list[i - 1].section, list[i].section);
    for (const auto& [t, list] : ix.concept_postings())
        for (std::size_t i = 1; i < list.size(); ++i)
            EXPECT_LT(list[i - 1].section, list[i].section);
}

TEST(Index, HasStructuredConcept) {
    std::vector<Person> ps{{"A", Date::from_ymd(2010, 6, 15), Gender::F}};
    std::vector<StructuredRecord> rs{
        {"A", Domain::Condition, SourceVocabulary::ICD9, "555.9", {}, Date::from_ymd(2013, 6, 14), {}, {}},
        {"A", Domain::Condition, SourceVocabulary::ICD9, "999.9", {}, Date::from_ymd(2011, 1, 1), {}, {}}};
    auto ix = build_index(assemble_corpus(ps, rs, {}, small()));
    std::vector<std::string> crohn{"C1004"}, ibd{"C1002"}, none;
    EXPECT_TRUE(ix.has_structured_concept("A", crohn));
    EXPECT_FALSE(ix.has_structured_concept("A", ibd)); // no expansion at lookup
    EXPECT_FALSE(ix.has_structured_concept("A", none));
    EXPECT_FALSE(ix.has_structured_concept("B", crohn));

    EventFilter under4;
    under4.age_at_event = AgeRange{0, 3};
    EXPECT_TRUE(ix.has_structured_concept("A", crohn, under4)); // a day short of the third birthday
    EventFilter from3;
    from3.age_at_event = AgeRange{3, 10};
    EXPECT_FALSE(ix.has_structured_concept("A", crohn, from3));
    EventFilter after;
    after.not_before = Date::from_ymd(2013, 6, 15);
    EXPECT_FALSE(ix.has_structured_concept("A", crohn, after));
}

TEST(Index, UnmappedRecordsAreNotEvents) {
    auto ix = build_index(fixture());
    const auto* p = ix.patient("S03");
    ASSERT_NE(p, nullptr);
    std::size_t mapped = 0;
    for (const auto& r : fixture().records)
        mapped += r.person_id == "S03" && r.concept_id;
    EXPECT_EQ(p->events.size(), mapped);
}

TEST(Index, RejectsDanglingDocuments) {
    Corpus c;
    c.persons.push_back({"A", Date::from_ymd(2000, 1, 1), Gender::M});
    c.documents.push_back({"D", "B", Date::from_ymd(2001, 1, 1), "x", {}, {}});
    EXPECT_THROW(build_index(c), ValidationError);
}

TEST(Snapshot, RoundTrip) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        auto ix = build_index(testsupport::random_corpus(seed));
        auto bytes = serialize_index(ix);
        auto back = deserialize_index(bytes);
        EXPECT_EQ(back, ix);
        EXPECT_EQ(serialize_index(back), bytes);
    }
    auto ix = build_index(fixture());
    auto path = fs::temp_directory_path() / "cohort_ix.snap";
    save_snapshot(ix, path);
    EXPECT_EQ(load_snapshot(path), ix);
}

TEST(Snapshot, RejectsCorruptInput) {
    auto bytes = serialize_index(build_index(fixture()));
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    EXPECT_THROW(deserialize_index(bad_magic), ParseError);
    auto bad_version = bytes;
    bad_version[4] = 9;
    EXPECT_THROW(deserialize_index(bad_version), ParseError);
    EXPECT_THROW(deserialize_index(bytes.substr(0, bytes.size() / 2)), ParseError);
    EXPECT_THROW(deserialize_index(bytes + "x"), ParseError);
    EXPECT_THROW(deserialize_index(""), ParseError);
    EXPECT_THROW(load_snapshot(fs::temp_directory_path() / "no_such.snap"), ParseError);
}
