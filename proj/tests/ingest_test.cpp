#include <algorithm>
#include <random>

#include <gtest/gtest.h>

#include "medtax/ingest.hpp"
#include "test_util.hpp"

using namespace medtax;

namespace {

std::string doc_line(const std::string &id, const std::string &user, const std::string &forum, const std::string &t) {
    return R"({"doc_id":")" + id + R"(","user_id":")" + user + R"(","forum":")" + forum +
           R"(","kind":"comment","text":")" + t + "\"}\n";
}

Lexicon lexicon(std::initializer_list<const char *> phrases) {
    Lexicon lex("test");
    for (const auto *p : phrases)
        lex.add(p);
    return lex;
}

Document doc(const std::string &t) { return {"d", "u", "f", DocumentKind::comment, t}; }

} // namespace

TEST(LoadDocuments, ThreeValidLinesInOrder) {
    testutil::TempDir dir("docs");
    auto p = dir.write("d.jsonl", doc_line("1", "a", "x", "one") + doc_line("2", "b", "x", "two") +
                                      doc_line("3", "a", "y", "three"));
    LoadReport rep;
    auto docs = load_documents(p, Strictness::lenient, &rep);
    ASSERT_EQ(docs.size(), 3u);
    EXPECT_EQ(docs[0].doc_id, "1");
    EXPECT_EQ(docs[2].text, "three");
    EXPECT_EQ(rep.skipped, 0u);
}

TEST(LoadDocuments, MalformedLineSkippedWithLineNumber) {
    testutil::TempDir dir("docs");
    auto p = dir.write("d.jsonl", doc_line("1", "a", "x", "one") + "{not json\n" + doc_line("2", "b", "x", "two"));
    LoadReport rep;
    auto docs = load_documents(p, Strictness::lenient, &rep);
    EXPECT_EQ(docs.size(), 2u);
    ASSERT_EQ(rep.warnings.size(), 1u);
    EXPECT_NE(rep.warnings[0].find(":2:"), std::string::npos);
    EXPECT_THROW(load_documents(p, Strictness::strict), ValidationError);
}

TEST(LoadDocuments, EmptyFileAndMissingFile) {
    testutil::TempDir dir("docs");
    LoadReport rep;
    EXPECT_TRUE(load_documents(dir.write("e.jsonl", ""), Strictness::lenient, &rep).empty());
    EXPECT_TRUE(rep.warnings.empty());
    EXPECT_THROW(load_documents(dir / "nope.jsonl"), ValidationError);
}

TEST(LoadDocuments, RejectsDuplicateIdsBlankTextAndBadKind) {
    testutil::TempDir dir("docs");
    auto p = dir.write("d.jsonl", doc_line("1", "a", "x", "one") + doc_line("1", "b", "x", "dup") +
                                      doc_line("2", "b", "x", "   ") +
                                      R"({"doc_id":"3","user_id":"a","kind":"blog","text":"t"})" "\n");
    LoadReport rep;
    auto docs = load_documents(p, Strictness::lenient, &rep);
    EXPECT_EQ(docs.size(), 1u);
    EXPECT_EQ(rep.skipped, 3u);
}

TEST(LoadMentions, DeduplicatesAndAcceptsMissingLocation) {
    testutil::TempDir dir("mentions");
    auto p = dir.write("m.jsonl", R"({"doc_id":"1","user_id":"a","location":"CA","conditions":["Pain","pain ","flu"]})"
                                  "\n"
                                  R"({"doc_id":"2","user_id":"b","conditions":["cough"]})"
                                  "\n");
    auto recs = load_mentions(p);
    ASSERT_EQ(recs.size(), 2u);
    EXPECT_EQ(recs[0].conditions, (std::vector<std::string>{"flu", "pain"}));
    EXPECT_EQ(recs[0].location, std::optional<std::string>("CA"));
    EXPECT_FALSE(recs[1].location.has_value());
}

TEST(LoadMentions, RoundTripsThroughJsonl) {
    testutil::TempDir dir("mentions");
    MentionRecord m;
    m.doc_id = "7";
    m.user_id = "u";
    m.location = "TX";
    m.conditions = {"a b", "c"};
    m.forum = "f";
    m.kind = DocumentKind::tweet;
    auto p = dir.write("m.jsonl", write_mentions_jsonl({m, MentionRecord{"8", "v", std::nullopt, {}, "", std::nullopt}}));
    auto back = load_mentions(p, Strictness::strict);
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[0].conditions, m.conditions);
    EXPECT_EQ(back[0].location, m.location);
    EXPECT_EQ(back[0].kind, m.kind);
    EXPECT_FALSE(back[1].location);
}

TEST(Dictionary, LongestMatchWins) {
    auto lex = lexicon({"anxiety", "panic attack", "panic"});
    EXPECT_EQ(extract_mentions_dictionary(doc("my anxiety and panic attack"), lex).conditions,
              (std::vector<std::string>{"anxiety", "panic attack"}));
}

TEST(Dictionary, CaseFoldAndTokenBoundaries) {
    auto lex = lexicon({"pain"});
    EXPECT_EQ(extract_mentions_dictionary(doc("PAIN!!"), lex).conditions, (std::vector<std::string>{"pain"}));
    EXPECT_TRUE(extract_mentions_dictionary(doc("painting class"), lex).conditions.empty());
}

TEST(Dictionary, InvariantToCaseAndWhitespace) {
    auto lex = lexicon({"chronic back pain", "back pain", "fever"});
    auto a = extract_mentions_dictionary(doc("Chronic back pain with fever"), lex).conditions;
    auto b = extract_mentions_dictionary(doc("CHRONIC    back\tpain   with FEVER"), lex).conditions;
    EXPECT_EQ(a, b);
    EXPECT_EQ(a, (std::vector<std::string>{"chronic back pain", "fever"}));
}

TEST(Dictionary, EmptyLexiconIsAnError) {
    Lexicon empty;
    EXPECT_THROW(extract_mentions_dictionary(doc("x"), empty), ValidationError);
}

TEST(Lexicon, RejectsDuplicatesAfterNormalization) {
    Lexicon lex;
    EXPECT_TRUE(lex.add("Panic Attack", "mental"));
    EXPECT_FALSE(lex.add("panic   attack"));
    EXPECT_FALSE(lex.add("  "));
    EXPECT_EQ(lex.size(), 1u);
    EXPECT_EQ(lex.by_category().count("mental"), 1u);
}

TEST(LoadLexicon, OptionalCategoryColumn) {
    testutil::TempDir dir("lex");
    auto lex = load_lexicon(dir.write("l.tsv", "# header\nFlu\tinfection\ncough\n\n"));
    EXPECT_EQ(lex.size(), 2u);
    EXPECT_EQ(lex.entries().at("flu"), "infection");
    EXPECT_EQ(lex.entries().at("cough"), "");
}

TEST(FilterForums, DropsBlockedPreservesOrder) {
    std::vector<Document> docs;
    for (int i = 0; i < 10; ++i)
        docs.push_back({std::to_string(i), "u", i % 3 == 0 && i > 0 ? "Blocked" : "ok", DocumentKind::comment, "t"});
    std::size_t dropped = 0;
    auto kept = filter_forums(docs, normalize_blocklist({"blocked"}), &dropped);
    EXPECT_EQ(kept.size(), 7u);
    EXPECT_EQ(dropped, 3u);
    EXPECT_TRUE(std::is_sorted(kept.begin(), kept.end(),
                               [](const Document &a, const Document &b) { return std::stoi(a.doc_id) < std::stoi(b.doc_id); }));
    EXPECT_EQ(filter_forums(docs, {}).size(), 10u);
    EXPECT_TRUE(filter_forums(docs, normalize_blocklist({"ok", "blocked"})).empty());
}

TEST(InferLocations, ThresholdAndMultiStateRules) {
    ForumStateMap map{{"texas", "TX"}, {"austin", "TX"}, {"ohio", "OH"}};
    std::vector<ActivityRecord> acts{
        {"six", "texas", 4},   {"six", "austin", 2},  {"six", "askdocs", 30}, // 6 in TX
        {"two", "texas", 5},   {"two", "ohio", 5},                             // two states
        {"four", "ohio", 4},                                                   // below threshold
    };
    auto loc = infer_user_locations(acts, map);
    EXPECT_EQ(loc, (std::map<std::string, std::string>{{"six", "TX"}}));

    auto shuffled = acts;
    std::mt19937_64 rng(1);
    for (int i = 0; i < 20; ++i) {
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        EXPECT_EQ(infer_user_locations(shuffled, map), loc);
    }
}

TEST(InferLocations, ActivitiesCountDocumentsPerForum) {
    std::vector<Document> docs;
    for (int i = 0; i < 5; ++i)
        docs.push_back({std::to_string(i), "u", "Ohio", DocumentKind::comment, "t"});
    auto acts = activities_from_documents(docs);
    ASSERT_EQ(acts.size(), 1u);
    EXPECT_EQ(acts[0].contribution_count, 5);
    EXPECT_EQ(infer_user_locations(acts, {{"ohio", "OH"}}).at("u"), "OH");
}

TEST(ForumStateMap, ConflictingMappingIsAnError) {
    testutil::TempDir dir("fm");
    EXPECT_THROW(load_forum_state_map(dir.write("m.tsv", "a\tX\nA\tY\n")), ValidationError);
    EXPECT_EQ(load_forum_state_map(dir.write("ok.tsv", "a\tX\nA\tX\n")).size(), 1u);
}

TEST(Representativeness, EqualRatiosGiveNoOutliers) {
    std::vector<LocationStats> s;
    for (int i = 0; i < 5; ++i)
        s.push_back({"L" + std::to_string(i), 10, 1000});
    EXPECT_TRUE(representativeness_outliers(s).empty());
}

TEST(Representativeness, ExtremeRatioFlagged) {
    // Oracle: ratios {1,1,1,1,1,100}: mean 17.5, population SD = 99 * sqrt(5) / 6 ~ 36.89;
    // |100 - 17.5| = 82.5 > 73.79.
    std::vector<LocationStats> s;
    for (int i = 0; i < 5; ++i)
        s.push_back({"L" + std::to_string(i), 1, 1});
    s.push_back({"X", 100, 1});
    EXPECT_EQ(representativeness_outliers(s), std::set<std::string>{"X"});
}

TEST(Representativeness, ExactlyTwoSigmaIsRetained) {
    // {1,1,1,1,100}: mean 20.8, SD 39.6, deviation 79.2 = exactly 2 SD.
    std::vector<LocationStats> s;
    for (int i = 0; i < 4; ++i)
        s.push_back({"L" + std::to_string(i), 1, 1});
    s.push_back({"X", 100, 1});
    EXPECT_TRUE(representativeness_outliers(s).empty());
    EXPECT_THROW(representativeness_outliers({s[0], s[1]}), ValidationError);
}

TEST(Agreement, SpecExamples) {
    EXPECT_DOUBLE_EQ(annotation_agreement({"pain", "flu"}, {"pain", "flu"}, MatchMode::strict), 1.0);
    EXPECT_DOUBLE_EQ(annotation_agreement({"pain"}, {"strong pain"}, MatchMode::strict), 0.0);
    EXPECT_DOUBLE_EQ(annotation_agreement({"pain"}, {"strong pain"}, MatchMode::relaxed), 1.0);
    EXPECT_DOUBLE_EQ(annotation_agreement({"a", "b", "c"}, {"a"}, MatchMode::strict), 1.0 / 3.0);
    EXPECT_DOUBLE_EQ(annotation_agreement({}, {}, MatchMode::strict), 1.0);
    EXPECT_DOUBLE_EQ(annotation_agreement({"a"}, {}, MatchMode::relaxed), 0.0);
}

TEST(Agreement, RelaxedIsTokenContainment) {
    EXPECT_DOUBLE_EQ(annotation_agreement({"pain"}, {"painting"}, MatchMode::relaxed), 0.0);
    EXPECT_DOUBLE_EQ(annotation_agreement({"Back  Pain"}, {"lower back pain"}, MatchMode::relaxed), 1.0);
}

TEST(Agreement, OneToOneMatching) {
    // "pain" may match only one of the two expert entities.
    EXPECT_DOUBLE_EQ(annotation_agreement({"pain"}, {"back pain", "chest pain"}, MatchMode::relaxed), 0.5);
}

TEST(Agreement, SymmetricAndRelaxedDominates) {
    std::mt19937_64 rng(11);
    const std::vector<std::string> vocab{"pain", "back pain", "strong pain", "flu", "fever", "high fever", "cough"};
    std::uniform_int_distribution<std::size_t> len(0, 4), pick(0, vocab.size() - 1);
    for (int i = 0; i < 300; ++i) {
        std::vector<std::string> a, b;
        for (auto k = len(rng); k > 0; --k)
            a.push_back(vocab[pick(rng)]);
        for (auto k = len(rng); k > 0; --k)
            b.push_back(vocab[pick(rng)]);
        for (auto mode : {MatchMode::strict, MatchMode::relaxed})
            EXPECT_DOUBLE_EQ(annotation_agreement(a, b, mode), annotation_agreement(b, a, mode));
        EXPECT_GE(annotation_agreement(a, b, MatchMode::relaxed), annotation_agreement(a, b, MatchMode::strict));
    }
}
