#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>

#include "m2snet/qa_data.hpp"
#include "testutil.hpp"

using m2s::DatasetSplit;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
    const std::string path = testing::TempDir() + name;
    std::ofstream out(path);
    out << content;
    return path;
}

const char* kTinySplit =
    "# tiny split\n"
    "q1\t1\tWhen did Amtrak begin operations?\tAmtrak began operations in 1971.\n"
    "q1\t0\tWhen did Amtrak begin operations?\tThe weather was cold.\n"
    "q2\t0\tWho wrote the book?\tNobody knows the answer.\n"
    "q2\t1\tWho wrote the book?\tThe book was written by her.\n"
    "q3\t1\tAll positive question?\tYes it is.\n"
    "q3\t1\tAll positive question?\tIndeed it is.\n";

}  // namespace

TEST(ParseSplitTest, GroupsRowsByQuestion) {
    const std::string path = write_temp("tiny.tsv", kTinySplit);
    DatasetSplit split = m2s::parse_split(path, "tiny");
    ASSERT_EQ(split.questions.size(), 3u);
    EXPECT_EQ(split.questions[0].qid, "q1");
    EXPECT_EQ(split.questions[0].candidates.size(), 2u);
    EXPECT_EQ(split.questions[0].candidates[0].label, 1);
    EXPECT_EQ(split.questions[0].question_tokens,
              (std::vector<std::string>{"when", "did", "amtrak", "begin", "operations"}));
    EXPECT_EQ(split.pair_count(), 6);
    EXPECT_EQ(split.positive_count(), 4);
}

TEST(ParseSplitTest, EmptyFileGivesEmptySplit) {
    const std::string path = write_temp("empty.tsv", "");
    DatasetSplit split = m2s::parse_split(path, "empty");
    EXPECT_TRUE(split.questions.empty());
    EXPECT_EQ(split.pair_count(), 0);
}

TEST(ParseSplitTest, MalformedRowNamesLine) {
    const std::string path = write_temp("bad_row.tsv", "q1\t1\tonly three fields\n");
    try {
        m2s::parse_split(path, "bad");
        FAIL() << "expected ParseError";
    } catch (const m2s::ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("line 1"), std::string::npos);
    }
}

TEST(ParseSplitTest, UnknownLabelRejected) {
    const std::string path = write_temp("bad_label.tsv", "q1\t2\tquestion text\tanswer text\n");
    EXPECT_THROW(m2s::parse_split(path, "bad"), m2s::ParseError);
}

TEST(FilterDegenerateTest, DropsSingleSignQuestions) {
    const std::string path = write_temp("tiny2.tsv", kTinySplit);
    DatasetSplit split = m2s::parse_split(path, "tiny");
    DatasetSplit filtered = m2s::filter_degenerate(split);
    ASSERT_EQ(filtered.questions.size(), 2u);  // q3 is all-positive
    EXPECT_EQ(filtered.questions[0].qid, "q1");
    EXPECT_EQ(filtered.questions[1].qid, "q2");
}

TEST(FilterDegenerateTest, KeepsMixedAndIsIdempotent) {
    DatasetSplit split;
    split.name = "s";
    m2s::RawQuestion mixed;
    mixed.qid = "a";
    mixed.candidates = {{0, {"x"}}, {1, {"y"}}};
    m2s::RawQuestion all_neg;
    all_neg.qid = "b";
    all_neg.candidates = {{0, {"x"}}, {0, {"y"}}};
    split.questions = {mixed, all_neg};
    DatasetSplit once = m2s::filter_degenerate(split);
    ASSERT_EQ(once.questions.size(), 1u);
    EXPECT_EQ(once.questions[0].qid, "a");
    DatasetSplit twice = m2s::filter_degenerate(once);
    EXPECT_EQ(twice.questions.size(), once.questions.size());
}

TEST(BuildIdfTest, TokenInEveryDocumentScoresZero) {
    DatasetSplit split;
    m2s::RawQuestion q;
    q.qid = "q";
    q.candidates = {{1, {"shared", "one"}}, {0, {"shared", "two"}}, {0, {"shared", "three"}}};
    split.questions = {q};
    m2s::IdfTable idf = m2s::build_idf(split);
    EXPECT_EQ(idf.document_count, 3);
    EXPECT_DOUBLE_EQ(idf.idf("shared"), 0.0);
    EXPECT_NEAR(idf.idf("one"), std::log(3.0), 1e-12);
}

TEST(BuildIdfTest, RareTokenMatchesFormula) {
    DatasetSplit split;
    m2s::RawQuestion q;
    q.qid = "q";
    for (int i = 0; i < 10; ++i) {
        m2s::RawCandidate c;
        c.label = i % 2;
        c.answer_tokens = {"common"};
        if (i == 0) c.answer_tokens.push_back("rare");
        q.candidates.push_back(c);
    }
    split.questions = {q};
    m2s::IdfTable idf = m2s::build_idf(split);
    EXPECT_NEAR(idf.idf("rare"), std::log(10.0), 1e-12);  // ln 10 ~ 2.302585
    EXPECT_NEAR(idf.idf("rare"), 2.302585, 1e-6);
    // unseen tokens take the maximum observed idf
    EXPECT_DOUBLE_EQ(idf.idf("never-seen"), idf.idf("rare"));
}

TEST(BuildIdfTest, HandComputedThreeDocumentCorpus) {
    // docs: {red, fish}, {blue, fish}, {green}
    DatasetSplit split;
    m2s::RawQuestion q;
    q.qid = "q";
    q.candidates = {{1, {"red", "fish"}}, {0, {"blue", "fish"}}, {0, {"green"}}};
    split.questions = {q};
    m2s::IdfTable idf = m2s::build_idf(split);
    EXPECT_NEAR(idf.idf("fish"), std::log(3.0 / 2.0), 1e-12);
    EXPECT_NEAR(idf.idf("red"), std::log(3.0), 1e-12);
    EXPECT_NEAR(idf.idf("blue"), std::log(3.0), 1e-12);
    EXPECT_NEAR(idf.idf("green"), std::log(3.0), 1e-12);
}

TEST(OverlapFeaturesTest, IdenticalAndDisjoint) {
    m2s::IdfTable idf;
    idf.max_idf = 1.0;
    const std::vector<std::string> s1 = {"a", "b", "c"};
    const std::vector<std::string> s2 = {"x", "y"};
    auto same = m2s::overlap_features(s1, s1, idf);
    EXPECT_DOUBLE_EQ(same[0], 1.0);
    EXPECT_DOUBLE_EQ(same[1], 1.0);
    auto disjoint = m2s::overlap_features(s1, s2, idf);
    EXPECT_DOUBLE_EQ(disjoint[0], 0.0);
    EXPECT_DOUBLE_EQ(disjoint[1], 0.0);
}

TEST(OverlapFeaturesTest, HandTracedExample) {
    m2s::IdfTable idf;
    idf.max_idf = 1.0;  // uniform weight for every token
    auto feats = m2s::overlap_features({"when", "did", "amtrak"}, {"amtrak", "profit"}, idf);
    EXPECT_NEAR(feats[0], 1.0 / 3.0, 1e-12);
    EXPECT_NEAR(feats[1], 1.0 / 3.0, 1e-12);
}

TEST(OverlapFeaturesTest, EmptyQuestionGivesZeros) {
    m2s::IdfTable idf;
    auto feats = m2s::overlap_features({}, {"a"}, idf);
    EXPECT_DOUBLE_EQ(feats[0], 0.0);
    EXPECT_DOUBLE_EQ(feats[1], 0.0);
}

TEST(OverlapFeaturesTest, DuplicateTokensCountOnce) {
    m2s::IdfTable idf;
    idf.max_idf = 2.0;
    auto feats = m2s::overlap_features({"a", "a", "b"}, {"a", "a", "a"}, idf);
    EXPECT_DOUBLE_EQ(feats[0], 0.5);  // unique q = {a, b}, shared = {a}
    EXPECT_DOUBLE_EQ(feats[1], 0.5);
}

TEST(MakeBatchesTest, TrainDropsShortTail) {
    testutil::ToyCorpus toy = testutil::make_toy_corpus();
    m2s::PreparedSplit prepared = m2s::prepare_split(toy.split, toy.table, toy.idf, 12, 12);
    std::vector<const m2s::QAInstance*> instances = m2s::flatten_instances(prepared);
    instances.resize(10);
    auto train_batches = m2s::make_batches(instances, 4, 123, m2s::BatchMode::kTrain);
    ASSERT_EQ(train_batches.size(), 2u);
    EXPECT_EQ(train_batches[0].size(), 4u);
    EXPECT_EQ(train_batches[1].size(), 4u);
    auto eval_batches = m2s::make_batches(instances, 4, 123, m2s::BatchMode::kEval);
    ASSERT_EQ(eval_batches.size(), 3u);
    EXPECT_EQ(eval_batches[2].size(), 2u);
}

TEST(MakeBatchesTest, SameSeedSameOrder) {
    testutil::ToyCorpus toy = testutil::make_toy_corpus();
    m2s::PreparedSplit prepared = m2s::prepare_split(toy.split, toy.table, toy.idf, 12, 12);
    std::vector<const m2s::QAInstance*> instances = m2s::flatten_instances(prepared);
    auto a = m2s::make_batches(instances, 5, 77, m2s::BatchMode::kTrain);
    auto b = m2s::make_batches(instances, 5, 77, m2s::BatchMode::kTrain);
    ASSERT_EQ(a.size(), b.size());
    for (size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
    auto c = m2s::make_batches(instances, 5, 78, m2s::BatchMode::kTrain);
    EXPECT_NE(a[0], c[0]);  // different seed reorders (overwhelmingly likely)
}

TEST(MakeBatchesTest, BatchOfOneRejected) {
    std::vector<const m2s::QAInstance*> instances;
    EXPECT_THROW(m2s::make_batches(instances, 1, 1, m2s::BatchMode::kTrain), m2s::ConfigError);
}

TEST(PrepareSplitTest, InstancesCarryFeaturesAndIds) {
    testutil::ToyCorpus toy = testutil::make_toy_corpus();
    m2s::PreparedSplit prepared = m2s::prepare_split(toy.split, toy.table, toy.idf, 12, 12);
    ASSERT_EQ(prepared.size(), 4u);
    for (const auto& q : prepared) {
        ASSERT_EQ(q.candidates.size(), 5u);
        for (size_t ci = 0; ci < q.candidates.size(); ++ci) {
            const m2s::QAInstance& inst = q.candidates[ci];
            EXPECT_EQ(inst.cand_id, q.qid + "_" + std::to_string(ci));
            EXPECT_EQ(static_cast<int>(inst.question.ids.size()), 12);
            EXPECT_EQ(static_cast<int>(inst.answer.ids.size()), 12);
            EXPECT_GE(inst.overlap_feats[0], 0.0);
            EXPECT_LE(inst.overlap_feats[0], 1.0);
            EXPECT_GE(inst.overlap_feats[1], 0.0);
            if (inst.label == 1) {
                EXPECT_DOUBLE_EQ(inst.overlap_feats[0], 1.0);  // positives repeat the question
            } else {
                EXPECT_DOUBLE_EQ(inst.overlap_feats[0], 0.0);
            }
        }
    }
}

TEST(OverlapFeaturesTest, AsymmetricWhenUniqueCountsDiffer) {
    // the formula normalizes by |unique(q)|, so swapping q and a changes it
    m2s::IdfTable idf;
    idf.max_idf = 1.0;
    const std::vector<std::string> q = {"a", "b", "c", "d"};
    const std::vector<std::string> a = {"a", "b"};
    EXPECT_DOUBLE_EQ(m2s::overlap_features(q, a, idf)[0], 0.5);
    EXPECT_DOUBLE_EQ(m2s::overlap_features(a, q, idf)[0], 1.0);
}

// Published-table ingestion check; needs the converted TREC-QA splits.
TEST(ExternalDataTest, ReproducesPublishedSplitStatistics) {
    const char* dir = std::getenv("M2SNET_TRECQA_DIR");
    if (!dir) GTEST_SKIP() << "M2SNET_TRECQA_DIR not set";
    struct Expected {
        const char* file;
        bool filter;
        long questions;
        long pairs;
        double pct;
    };
    const Expected table[] = {
        {"train-all.tsv", false, 1229, 53417, 12.0},
        {"train.tsv", false, 94, 4718, 7.4},
        {"dev.tsv", true, 65, 1117, 18.4},
        {"test.tsv", true, 68, 1442, 17.2},
    };
    for (const Expected& row : table) {
        DatasetSplit split = m2s::parse_split(std::string(dir) + "/" + row.file, row.file);
        if (row.filter) split = m2s::filter_degenerate(split);
        const m2s::SplitStats stats = m2s::split_stats(split);
        EXPECT_EQ(stats.questions, row.questions) << row.file;
        EXPECT_EQ(stats.pairs, row.pairs) << row.file;
        EXPECT_NEAR(std::round(stats.positive_pct * 10.0) / 10.0, row.pct, 1e-9) << row.file;
    }
}

TEST(SplitStatsTest, CountsAndPercentages) {
    const std::string path = write_temp("tiny3.tsv", kTinySplit);
    DatasetSplit split = m2s::parse_split(path, "tiny");
    m2s::SplitStats stats = m2s::split_stats(split);
    EXPECT_EQ(stats.questions, 3);
    EXPECT_EQ(stats.pairs, 6);
    EXPECT_NEAR(stats.positive_pct, 100.0 * 4 / 6, 1e-9);
}
