#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "m2snet/ranker_eval.hpp"
#include "m2snet/rng.hpp"

using m2s::EvalReport;
using m2s::RankedCandidate;
using m2s::RankedQuestion;
using m2s::RankedRun;

namespace {

RankedQuestion question_from(const std::string& qid, const std::vector<double>& scores,
                             const std::vector<int>& labels) {
    RankedQuestion q;
    q.qid = qid;
    for (size_t i = 0; i < scores.size(); ++i) {
        q.candidates.push_back({qid + "_" + std::to_string(i), scores[i], labels[i]});
    }
    return q;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    EXPECT_TRUE(in.good()) << "missing file " << path;
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

}  // namespace

TEST(AveragePrecisionTest, SpecValues) {
    EXPECT_DOUBLE_EQ(m2s::average_precision({1}), 1.0);
    EXPECT_DOUBLE_EQ(m2s::average_precision({0, 1, 0, 1}), 0.5);
    EXPECT_DOUBLE_EQ(m2s::average_precision({1, 1, 1, 0, 0}), 1.0);
    EXPECT_THROW(m2s::average_precision({0, 0}), m2s::MetricError);
}

TEST(ReciprocalRankTest, SpecValues) {
    EXPECT_DOUBLE_EQ(m2s::reciprocal_rank({1, 0, 0}), 1.0);
    EXPECT_DOUBLE_EQ(m2s::reciprocal_rank({0, 0, 1}), 1.0 / 3.0);
    EXPECT_THROW(m2s::reciprocal_rank({0}), m2s::MetricError);
}

TEST(EvaluateTest, SingleQuestionPerfect) {
    RankedRun run;
    run.questions.push_back(question_from("q1", {0.9, 0.1}, {1, 0}));
    EvalReport report = m2s::evaluate(run);
    EXPECT_DOUBLE_EQ(report.map, 1.0);
    EXPECT_DOUBLE_EQ(report.mrr, 1.0);
}

TEST(EvaluateTest, MeansOverQuestions) {
    RankedRun run;
    run.questions.push_back(question_from("q1", {0.9, 0.1}, {1, 0}));        // AP 1.0
    run.questions.push_back(question_from("q2", {0.9, 0.5, 0.1}, {0, 1, 0}));  // AP 0.5
    EvalReport report = m2s::evaluate(run);
    EXPECT_DOUBLE_EQ(report.map, 0.75);
    EXPECT_DOUBLE_EQ(report.mrr, 0.75);
}

TEST(EvaluateTest, QuestionWithoutPositivesExcludedAndListed) {
    RankedRun run;
    run.questions.push_back(question_from("good", {0.9, 0.1}, {1, 0}));
    run.questions.push_back(question_from("hopeless", {0.9, 0.1}, {0, 0}));
    EvalReport report = m2s::evaluate(run);
    EXPECT_EQ(report.per_question.size(), 1u);
    ASSERT_EQ(report.skipped.size(), 1u);
    EXPECT_EQ(report.skipped[0], "hopeless");
    const std::string text = m2s::format_report(report);
    EXPECT_NE(text.find("hopeless"), std::string::npos);
}

TEST(EvaluateTest, RanksByScoreWithIdTieBreak) {
    RankedRun run;
    RankedQuestion q;
    q.qid = "q";
    q.candidates = {{"q_b", 0.5, 0}, {"q_a", 0.5, 1}, {"q_c", 0.9, 0}};
    run.questions.push_back(q);
    EvalReport report = m2s::evaluate(run);
    // order: q_c (0.9), then tie at 0.5 broken by id ascending: q_a before q_b
    EXPECT_DOUBLE_EQ(report.per_question[0].average_precision, 0.5);
    EXPECT_TRUE(report.had_ties);
    EXPECT_NE(m2s::format_report(report).find("tied scores"), std::string::npos);
}

TEST(EvaluateTest, ScoreShiftInvariance) {
    m2s::Rng rng(17);
    RankedRun run, shifted;
    for (int qi = 0; qi < 5; ++qi) {
        std::vector<double> scores;
        std::vector<int> labels;
        for (int ci = 0; ci < 8; ++ci) {
            scores.push_back(rng.uniform());
            labels.push_back(ci == 0 ? 1 : static_cast<int>(rng.next_u64() % 2));
        }
        run.questions.push_back(question_from("q" + std::to_string(qi), scores, labels));
        for (double& s : scores) s += 123.456;
        shifted.questions.push_back(question_from("q" + std::to_string(qi), scores, labels));
    }
    EvalReport a = m2s::evaluate(run);
    EvalReport b = m2s::evaluate(shifted);
    EXPECT_DOUBLE_EQ(a.map, b.map);
    EXPECT_DOUBLE_EQ(a.mrr, b.mrr);
}

TEST(EvaluateTest, PromotingAPositiveNeverHurtsAp) {
    m2s::Rng rng(19);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<int> labels(10, 0);
        for (int i = 0; i < 10; ++i) labels[static_cast<size_t>(i)] = rng.next_u64() % 3 == 0;
        labels[9] = 1;  // ensure a positive exists
        // find a positive that can move up
        int pos = -1;
        for (int i = 9; i >= 1; --i) {
            if (labels[static_cast<size_t>(i)] == 1 && labels[static_cast<size_t>(i - 1)] == 0) {
                pos = i;
                break;
            }
        }
        if (pos < 0) continue;
        const double before = m2s::average_precision(labels);
        std::swap(labels[static_cast<size_t>(pos)], labels[static_cast<size_t>(pos - 1)]);
        EXPECT_GE(m2s::average_precision(labels), before);
    }
}

TEST(EmitRunFileTest, FormatAndRoundTrip) {
    RankedRun run;
    run.run_id = "m2snet";
    run.questions.push_back(question_from("q1", {0.9, 0.1}, {1, 0}));
    const std::string path = testing::TempDir() + "emit_run.txt";
    m2s::emit_run_file(run, path);
    EXPECT_EQ(slurp(path),
              "q1 Q0 q1_0 1 0.900000 m2snet\n"
              "q1 Q0 q1_1 2 0.100000 m2snet\n");

    // re-parse and confirm the ranking is unchanged
    std::ifstream in(path);
    std::string qid, q0, docid, runid;
    int rank;
    double score;
    std::vector<std::string> docids;
    while (in >> qid >> q0 >> docid >> rank >> score >> runid) docids.push_back(docid);
    EXPECT_EQ(docids, (std::vector<std::string>{"q1_0", "q1_1"}));
}

TEST(EmitQrelsTest, FourColumnFormat) {
    RankedRun run;
    run.questions.push_back(question_from("q1", {0.9, 0.1}, {1, 0}));
    const std::string path = testing::TempDir() + "emit_qrels.txt";
    m2s::emit_qrels(run, path);
    EXPECT_EQ(slurp(path), "q1 0 q1_0 1\nq1 0 q1_1 0\n");
}

TEST(EmitRunFileTest, UnwritablePath) {
    RankedRun run;
    run.questions.push_back(question_from("q1", {0.9}, {1}));
    EXPECT_THROW(m2s::emit_run_file(run, "/nonexistent-dir/run.txt"), m2s::IoError);
}

// Fixtures generated offline against the official scorer's documented
// semantics; see scripts/make_trec_fixtures.py.
class TrecFixtureTest : public ::testing::Test {
protected:
    static RankedRun load_case(const std::string& path) {
        std::ifstream in(path);
        EXPECT_TRUE(in.good()) << "missing fixture " << path;
        RankedRun run;
        run.run_id = "m2snet";
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::istringstream row(line);
            std::string qid, docid;
            double score;
            int label;
            row >> qid >> docid >> score >> label;
            if (run.questions.empty() || run.questions.back().qid != qid) {
                RankedQuestion q;
                q.qid = qid;
                run.questions.push_back(q);
            }
            run.questions.back().candidates.push_back({docid, score, label});
        }
        return run;
    }
};

TEST_F(TrecFixtureTest, MatchesOfficialScorerToFourDecimals) {
    const std::string dir = std::string(M2SNET_FIXTURE_DIR) + "/trec/";
    std::ifstream expected(dir + "expected.tsv");
    ASSERT_TRUE(expected.good()) << "missing " << dir << "expected.tsv";
    std::string name;
    double exp_map, exp_mrr;
    int cases = 0;
    while (expected >> name >> exp_map >> exp_mrr) {
        RankedRun run = load_case(dir + name + ".tsv");
        EvalReport report = m2s::evaluate(run);
        EXPECT_NEAR(report.map, exp_map, 5e-5) << name;
        EXPECT_NEAR(report.mrr, exp_mrr, 5e-5) << name;

        const std::string emitted = testing::TempDir() + name + ".run";
        m2s::emit_run_file(run, emitted);
        EXPECT_EQ(slurp(emitted), slurp(dir + name + ".run")) << name;
        ++cases;
    }
    EXPECT_EQ(cases, 10);
}
