#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "m2snet/checkpoint.hpp"
#include "m2snet/config.hpp"
#include "m2snet/matchnet.hpp"
#include "testutil.hpp"

using m2s::ModelParams;
using m2s::NetConfig;
using m2s::Rng;
using m2s::ad::Graph;
using m2s::ad::Mode;

namespace {

struct ToyModel {
    testutil::ToyCorpus corpus;
    NetConfig cfg;
    ModelParams params;
    m2s::PreparedSplit prepared;
};

ToyModel make_toy_model(uint64_t seed = 9) {
    ToyModel toy{testutil::make_toy_corpus(), testutil::toy_net_config(), {}, {}};
    Rng rng(seed);
    toy.params = ModelParams::init(toy.cfg, toy.corpus.table, rng);
    toy.prepared = m2s::prepare_split(toy.corpus.split, toy.corpus.table, toy.corpus.idf,
                                      toy.cfg.question_len, toy.cfg.answer_len);
    return toy;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

}  // namespace

TEST(NetConfigTest, ShapeInconsistentConfigRejectedAtBuildTime) {
    NetConfig cfg = testutil::toy_net_config();
    cfg.layers[0].kernel_h = 13;  // larger than the 12x12 map
    EXPECT_THROW(cfg.validate(), m2s::ConfigError);

    NetConfig pool_too_big = testutil::toy_net_config();
    pool_too_big.layers[0].pool_h = 11;
    EXPECT_THROW(pool_too_big.validate(), m2s::ConfigError);

    NetConfig three_layers = testutil::toy_net_config();
    three_layers.layers.push_back(three_layers.layers[1]);
    EXPECT_THROW(three_layers.validate(), m2s::ConfigError);

    NetConfig multi_modal_cosine = testutil::toy_net_config();
    multi_modal_cosine.measurement = m2s::Measurement::kCosine;
    multi_modal_cosine.modalities = 2;
    EXPECT_THROW(multi_modal_cosine.validate(), m2s::ConfigError);
}

TEST(NetConfigTest, ShallowAndDeepDefaultsValidate) {
    for (bool deep : {false, true}) {
        NetConfig cfg = NetConfig::defaults(m2s::Measurement::kMetric, 4, deep);
        cfg.validate();
        EXPECT_EQ(cfg.layers.size(), deep ? 2u : 1u);
    }
}

TEST(NetConfigTest, DefaultGeometryTraces40x40) {
    NetConfig cfg = NetConfig::defaults(m2s::Measurement::kMetric, 4, true);
    auto chain = cfg.trace_shapes();
    ASSERT_EQ(chain.size(), 2u);
    // 40x40 -> conv3x3 -> 38x38 -> pool2x2/2 -> 19x19 -> conv3x3 -> 17x17 -> global -> 1x1
    EXPECT_EQ(chain[0].height, 19);
    EXPECT_EQ(chain[0].width, 19);
    EXPECT_EQ(chain[1].height, 1);
    EXPECT_EQ(chain[1].width, 1);
    EXPECT_EQ(cfg.flattened_size(), 100);
}

TEST(ModelParamsTest, ParameterCountIsPureFunctionOfConfig) {
    ToyModel a = make_toy_model(1);
    ToyModel b = make_toy_model(2);
    EXPECT_EQ(m2s::parameter_count(a.params), m2s::parameter_count(b.params));
    const auto named = m2s::trainable_params(a.params);
    // embeddings, U, B, 2x(filters,bias,gamma,beta), head weight+bias
    EXPECT_EQ(named.size(), 13u);
}

TEST(ForwardTest, ZeroHeadGivesHalf) {
    ToyModel toy = make_toy_model();
    std::fill(toy.params.head_weight.data.begin(), toy.params.head_weight.data.end(), 0.0);
    toy.params.head_bias.data[0] = 0.0;
    const double p = m2s::forward(toy.prepared[0].candidates[0], toy.params, toy.cfg);
    EXPECT_DOUBLE_EQ(p, 0.5);
}

TEST(ForwardTest, ProbabilityInUnitInterval) {
    ToyModel toy = make_toy_model();
    for (const auto& q : toy.prepared) {
        for (const auto& cand : q.candidates) {
            const double p = m2s::forward(cand, toy.params, toy.cfg);
            EXPECT_GT(p, 0.0);
            EXPECT_LT(p, 1.0);
        }
    }
}

TEST(ForwardTest, IdenticalPairUnderCosineHasUnitDiagonal) {
    ToyModel toy = make_toy_model();
    NetConfig cfg = toy.cfg;
    cfg.measurement = m2s::Measurement::kCosine;
    cfg.modalities = 1;
    Rng rng(3);
    ModelParams params = ModelParams::init(cfg, toy.corpus.table, rng);

    m2s::QAInstance inst = toy.prepared[0].candidates[0];
    inst.answer = inst.question;  // identical sentences
    Graph g;
    auto handles = m2s::build_forward(g, {&inst}, params, cfg, Mode::kInference, nullptr);
    const m2s::ad::Tensor& sim = g.value(handles.similarity);
    for (int i = 0; i < inst.question.original_len && i < cfg.question_len; ++i) {
        EXPECT_NEAR(sim.at(0, 0, i, i), 1.0, 1e-12);
    }
}

TEST(ForwardTest, GoldenProbabilityRegressionPin) {
    // regression pin recorded from the first verified run of this config
    ToyModel toy = make_toy_model(2024);
    m2s::QAInstance inst = toy.prepared[1].candidates[2];
    const double p = m2s::forward(inst, toy.params, toy.cfg);
    EXPECT_NEAR(p, 0.50019200197044311, 1e-15);
}

TEST(ForwardTest, InferenceIgnoresDropoutSeed) {
    ToyModel toy = make_toy_model();
    NetConfig cfg = toy.cfg;
    cfg.dropout_rate = 0.5;
    const m2s::QAInstance& inst = toy.prepared[0].candidates[0];
    const double p1 = m2s::forward(inst, toy.params, cfg);
    const double p2 = m2s::forward(inst, toy.params, cfg);
    EXPECT_DOUBLE_EQ(p1, p2);

    Graph g;
    Rng rng_a(1);
    auto h = m2s::build_forward(g, {&inst}, toy.params, cfg, Mode::kInference, &rng_a);
    EXPECT_DOUBLE_EQ(g.value(h.probs).data[0], p1);
}

TEST(ScoreCandidatesTest, MatchesIndependentForwardCalls) {
    ToyModel toy = make_toy_model();
    const auto& cands = toy.prepared[2].candidates;
    const std::vector<double> batched = m2s::score_candidates(cands, toy.params, toy.cfg);
    ASSERT_EQ(batched.size(), cands.size());
    for (size_t i = 0; i < cands.size(); ++i) {
        EXPECT_DOUBLE_EQ(batched[i], m2s::forward(cands[i], toy.params, toy.cfg));
    }
}

TEST(ScoreCandidatesTest, EmptyAndSingletonAndDuplicate) {
    ToyModel toy = make_toy_model();
    EXPECT_TRUE(m2s::score_candidates({}, toy.params, toy.cfg).empty());

    std::vector<m2s::QAInstance> one = {toy.prepared[0].candidates[0]};
    const auto single = m2s::score_candidates(one, toy.params, toy.cfg);
    ASSERT_EQ(single.size(), 1u);
    EXPECT_DOUBLE_EQ(single[0], m2s::forward(one[0], toy.params, toy.cfg));

    std::vector<m2s::QAInstance> dup = {one[0], one[0]};
    const auto both = m2s::score_candidates(dup, toy.params, toy.cfg);
    EXPECT_DOUBLE_EQ(both[0], both[1]);
}

TEST(ScoreCandidatesTest, PermutationPermutesScores) {
    ToyModel toy = make_toy_model();
    std::vector<m2s::QAInstance> cands = toy.prepared[3].candidates;
    const auto scores = m2s::score_candidates(cands, toy.params, toy.cfg);
    std::vector<m2s::QAInstance> reversed(cands.rbegin(), cands.rend());
    const auto reversed_scores = m2s::score_candidates(reversed, toy.params, toy.cfg);
    for (size_t i = 0; i < cands.size(); ++i) {
        EXPECT_DOUBLE_EQ(scores[i], reversed_scores[cands.size() - 1 - i]);
    }
}

TEST(CheckpointTest, SaveLoadSaveIsByteIdentical) {
    ToyModel toy = make_toy_model();
    const std::string first = testing::TempDir() + "ckpt_a.bin";
    const std::string second = testing::TempDir() + "ckpt_b.bin";
    const std::string echo = m2s::render_net_config(toy.cfg);
    m2s::save_checkpoint(first, toy.params, toy.corpus.idf, echo);
    m2s::LoadedCheckpoint loaded = m2s::load_checkpoint(first);
    m2s::save_checkpoint(second, loaded.params, loaded.idf, loaded.config_echo);
    EXPECT_EQ(slurp(first), slurp(second));
}

TEST(CheckpointTest, LoadedModelScoresIdentically) {
    ToyModel toy = make_toy_model();
    const std::string path = testing::TempDir() + "ckpt_scores.bin";
    m2s::save_checkpoint(path, toy.params, toy.corpus.idf, m2s::render_net_config(toy.cfg));
    m2s::LoadedCheckpoint loaded = m2s::load_checkpoint(path);
    for (const auto& q : toy.prepared) {
        for (const auto& cand : q.candidates) {
            EXPECT_DOUBLE_EQ(m2s::forward(cand, loaded.params, loaded.net),
                             m2s::forward(cand, toy.params, toy.cfg));
        }
    }
    EXPECT_EQ(loaded.idf.document_count, toy.corpus.idf.document_count);
    EXPECT_DOUBLE_EQ(loaded.idf.idf("alpha"), toy.corpus.idf.idf("alpha"));
}

TEST(CheckpointTest, CorruptFileRejected) {
    const std::string path = testing::TempDir() + "ckpt_corrupt.bin";
    {
        std::ofstream out(path, std::ios::binary);
        out << "M2SCKPT1 but then garbage";
    }
    EXPECT_THROW(m2s::load_checkpoint(path), m2s::ParseError);
    EXPECT_THROW(m2s::load_checkpoint("/nonexistent/ckpt.bin"), m2s::IoError);
}

TEST(ConfigRoundTripTest, RenderedNetConfigParsesBack) {
    NetConfig cfg = testutil::toy_net_config();
    const std::string text = m2s::render_net_config(cfg);
    const m2s::ConfigFile file = m2s::ConfigFile::parse(text);
    NetConfig back = m2s::net_config_from(file);
    EXPECT_EQ(back.measurement, cfg.measurement);
    EXPECT_EQ(back.modalities, cfg.modalities);
    EXPECT_EQ(back.question_len, cfg.question_len);
    EXPECT_EQ(back.layers.size(), cfg.layers.size());
    EXPECT_EQ(back.layers[0].filters, cfg.layers[0].filters);
    EXPECT_EQ(back.layers[0].pool_stride_h, cfg.layers[0].pool_stride_h);
    EXPECT_EQ(back.layers[1].global_pool, cfg.layers[1].global_pool);
    EXPECT_DOUBLE_EQ(back.dropout_rate, cfg.dropout_rate);
}

TEST(ConfigFileTest, ParseErrorsCarryLineNumbers) {
    EXPECT_THROW(m2s::ConfigFile::parse("[net\nmeasurement = metric\n"), m2s::ConfigError);
    try {
        m2s::ConfigFile::parse("[net]\nmeasurement metric\n");
        FAIL() << "expected ConfigError";
    } catch (const m2s::ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    }
}
