#pragma once

#include <string>
#include <utility>
#include <vector>

#include "m2snet/embeddings.hpp"
#include "m2snet/graph.hpp"
#include "m2snet/ops.hpp"
#include "m2snet/qa_data.hpp"
#include "m2snet/similarity.hpp"

namespace m2s {

struct ConvLayerSpec {
    int filters = 100;
    int kernel_h = 3;
    int kernel_w = 3;
    bool global_pool = false;  // pool the whole remaining map to 1x1
    int pool_h = 2;
    int pool_w = 2;
    int pool_stride_h = 2;
    int pool_stride_w = 2;
};

/// Network geometry. One conv layer is the shallow variant, two the deep
/// one; every narrow convolution and pool must leave positive extents.
struct NetConfig {
    Measurement measurement = Measurement::kMetric;
    int modalities = 1;  // similarity channels k; fixed at 1 for euclidean/cosine
    std::vector<ConvLayerSpec> layers;
    double dropout_rate = 0.5;
    int question_len = 40;
    int answer_len = 40;
    int embedding_dim = 50;
    int overlap_feature_count = 2;
    double bn_eps = 1e-5;
    double bn_momentum = 0.9;

    static NetConfig defaults(Measurement measurement, int modalities, bool deep) {
        NetConfig cfg;
        cfg.measurement = measurement;
        cfg.modalities = measurement == Measurement::kMetric ? modalities : 1;
        ConvLayerSpec first;
        cfg.layers.push_back(first);
        if (deep) {
            ConvLayerSpec second;
            second.global_pool = true;
            cfg.layers.push_back(second);
        } else {
            cfg.layers.back().global_pool = true;
        }
        return cfg;
    }

    /// Spatial extents after each conv+pool block.
    struct Extents {
        int channels;
        int height;
        int width;
    };

    std::vector<Extents> trace_shapes() const {
        std::vector<Extents> chain;
        Extents cur{modalities, question_len, answer_len};
        for (size_t li = 0; li < layers.size(); ++li) {
            const ConvLayerSpec& l = layers[li];
            if (l.kernel_h > cur.height || l.kernel_w > cur.width) {
                throw ConfigError("net config: layer " + std::to_string(li + 1) + " kernel " +
                                  std::to_string(l.kernel_h) + "x" + std::to_string(l.kernel_w) +
                                  " exceeds map " + std::to_string(cur.height) + "x" +
                                  std::to_string(cur.width));
            }
            cur = {l.filters, cur.height - l.kernel_h + 1, cur.width - l.kernel_w + 1};
            if (l.global_pool) {
                cur.height = 1;
                cur.width = 1;
            } else {
                if (l.pool_h > cur.height || l.pool_w > cur.width) {
                    throw ConfigError("net config: layer " + std::to_string(li + 1) + " pool " +
                                      std::to_string(l.pool_h) + "x" + std::to_string(l.pool_w) +
                                      " exceeds map " + std::to_string(cur.height) + "x" +
                                      std::to_string(cur.width));
                }
                if (l.pool_stride_h < 1 || l.pool_stride_w < 1) {
                    throw ConfigError("net config: pool stride must be positive");
                }
                cur.height = (cur.height - l.pool_h) / l.pool_stride_h + 1;
                cur.width = (cur.width - l.pool_w) / l.pool_stride_w + 1;
            }
            if (cur.height < 1 || cur.width < 1) {
                throw ConfigError("net config: layer " + std::to_string(li + 1) +
                                  " leaves a non-positive map");
            }
            chain.push_back(cur);
        }
        return chain;
    }

    int flattened_size() const {
        const Extents last = trace_shapes().back();
        return last.channels * last.height * last.width;
    }

    void validate() const {
        if (layers.empty() || layers.size() > 2) {
            throw ConfigError("net config: expected 1 (shallow) or 2 (deep) conv layers, got " +
                              std::to_string(layers.size()));
        }
        if (measurement != Measurement::kMetric && modalities != 1) {
            throw ConfigError("net config: euclidean/cosine measurements are single-modality");
        }
        if (modalities < 1) throw ConfigError("net config: modality count must be >= 1");
        if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
            throw ConfigError("net config: dropout rate must lie in [0, 1)");
        }
        if (question_len < 1 || answer_len < 1) {
            throw ConfigError("net config: sequence lengths must be positive");
        }
        if (embedding_dim < 1) throw ConfigError("net config: embedding dim must be positive");
        trace_shapes();
    }
};

struct ConvLayerParams {
    ad::Tensor filters;  // [n x c x h x w]
    ad::Tensor bias;     // [n]
    ad::Tensor bn_gamma;
    ad::Tensor bn_beta;
    ad::BnRunningStats bn_running;
};

/// Every tensor the model owns: embedding table, metric parameters, conv
/// stacks with their normalization state, and the affine head.
struct ModelParams {
    EmbeddingTable embeddings;
    MetricParams metric;  // modalities == 0 for euclidean/cosine
    std::vector<ConvLayerParams> conv;
    ad::Tensor head_weight;  // [1 x (flattened + overlap features)]
    ad::Tensor head_bias;    // [1]

    static ModelParams init(const NetConfig& cfg, EmbeddingTable embeddings, Rng& rng) {
        cfg.validate();
        if (embeddings.dim != cfg.embedding_dim) {
            throw ConfigError("model init: embedding table dim " + std::to_string(embeddings.dim) +
                              " does not match config dim " + std::to_string(cfg.embedding_dim));
        }
        ModelParams p;
        p.embeddings = std::move(embeddings);
        if (cfg.measurement == Measurement::kMetric) {
            p.metric = MetricParams::init(cfg.modalities, cfg.embedding_dim, cfg.question_len,
                                          cfg.answer_len, rng);
        }
        int in_channels = cfg.modalities;
        for (const ConvLayerSpec& l : cfg.layers) {
            ConvLayerParams layer;
            const double stddev =
                std::sqrt(2.0 / (in_channels * l.kernel_h * l.kernel_w + l.filters));
            layer.filters = ad::Tensor::gaussian({l.filters, in_channels, l.kernel_h, l.kernel_w},
                                                 rng, 0.0, stddev);
            layer.bias = ad::Tensor::zeros({l.filters});
            layer.bn_gamma = ad::Tensor::full({l.filters}, 1.0);
            layer.bn_beta = ad::Tensor::zeros({l.filters});
            layer.bn_running.mean = ad::Tensor::zeros({l.filters});
            layer.bn_running.var = ad::Tensor::full({l.filters}, 1.0);
            p.conv.push_back(std::move(layer));
            in_channels = l.filters;
        }
        const int head_in = cfg.flattened_size() + cfg.overlap_feature_count;
        p.head_weight = ad::Tensor::gaussian({1, head_in}, rng, 0.0, std::sqrt(1.0 / head_in));
        p.head_bias = ad::Tensor::zeros({1});
        return p;
    }
};

struct NamedParam {
    std::string name;
    ad::Tensor* tensor;
};

/// Trainable tensors in a stable order. Running statistics are state, not
/// parameters, and are excluded.
inline std::vector<NamedParam> trainable_params(ModelParams& params) {
    std::vector<NamedParam> out;
    out.push_back({"embeddings", &params.embeddings.matrix});
    if (params.metric.modalities > 0) {
        out.push_back({"metric.U", &params.metric.u});
        out.push_back({"metric.B", &params.metric.bias});
    }
    for (size_t li = 0; li < params.conv.size(); ++li) {
        const std::string prefix = "conv" + std::to_string(li + 1);
        out.push_back({prefix + ".filters", &params.conv[li].filters});
        out.push_back({prefix + ".bias", &params.conv[li].bias});
        out.push_back({prefix + ".bn.gamma", &params.conv[li].bn_gamma});
        out.push_back({prefix + ".bn.beta", &params.conv[li].bn_beta});
    }
    out.push_back({"head.weight", &params.head_weight});
    out.push_back({"head.bias", &params.head_bias});
    return out;
}

inline std::vector<NamedParam> all_tensors(ModelParams& params) {
    std::vector<NamedParam> out = trainable_params(params);
    for (size_t li = 0; li < params.conv.size(); ++li) {
        const std::string prefix = "conv" + std::to_string(li + 1);
        out.push_back({prefix + ".bn.running_mean", &params.conv[li].bn_running.mean});
        out.push_back({prefix + ".bn.running_var", &params.conv[li].bn_running.var});
    }
    return out;
}

inline long parameter_count(ModelParams& params) {
    long n = 0;
    for (const NamedParam& p : trainable_params(params)) n += p.tensor->numel();
    return n;
}

/// Handles into a built batch graph: the probability node plus the leaves
/// backward() writes through.
struct ForwardHandles {
    int probs = -1;           // [B x 1]
    int similarity = -1;      // stacked [B x k x L1 x L2]
};

/// Assemble the forward pass for a batch of instances on the given graph:
/// per-pair similarity tensor, conv/BN/tanh/pool blocks, dropout after the
/// first block in train mode, flatten, overlap features, affine head,
/// logistic squash.
inline ForwardHandles build_forward(ad::Graph& g, const std::vector<const QAInstance*>& batch,
                                    ModelParams& params, const NetConfig& cfg, ad::Mode mode,
                                    Rng* rng) {
    if (batch.empty()) throw DimensionError("build_forward: empty batch");
    if (mode == ad::Mode::kTrain && cfg.dropout_rate > 0.0 && !rng) {
        throw StateError("build_forward: train mode requires a random source for dropout");
    }
    const int w_leaf = g.leaf(params.embeddings.matrix);
    int u_leaf = -1, b_leaf = -1;
    if (cfg.measurement == Measurement::kMetric) {
        if (params.metric.modalities != cfg.modalities) {
            throw ConfigError("build_forward: model has " +
                              std::to_string(params.metric.modalities) +
                              " metric modalities, config wants " + std::to_string(cfg.modalities));
        }
        u_leaf = g.leaf(params.metric.u);
        b_leaf = g.leaf(params.metric.bias);
    }

    std::vector<int> sims;
    sims.reserve(batch.size());
    for (const QAInstance* inst : batch) {
        const int q = ad::gather_rows(g, w_leaf, inst->question.ids);
        const int a = ad::gather_rows(g, w_leaf, inst->answer.ids);
        switch (cfg.measurement) {
            case Measurement::kMetric:
                sims.push_back(ad::metric_similarity(g, q, a, u_leaf, b_leaf));
                break;
            case Measurement::kCosine:
                sims.push_back(ad::cosine_similarity(g, q, a));
                break;
            case Measurement::kEuclidean:
                sims.push_back(ad::euclidean_similarity(g, q, a));
                break;
        }
    }
    const int similarity = ad::stack_batch(g, sims);

    int x = similarity;
    for (size_t li = 0; li < cfg.layers.size(); ++li) {
        const ConvLayerSpec& spec = cfg.layers[li];
        ConvLayerParams& layer = params.conv[li];
        x = ad::conv2d(g, x, g.leaf(layer.filters), g.leaf(layer.bias));
        x = ad::batch_norm(g, x, g.leaf(layer.bn_gamma), g.leaf(layer.bn_beta), &layer.bn_running,
                           cfg.bn_eps, cfg.bn_momentum, mode);
        x = ad::tanh_activation(g, x);
        const ad::Tensor& shape = g.value(x);
        if (spec.global_pool) {
            x = ad::avg_pool2d(g, x, shape.dim(2), shape.dim(3), 1, 1);
        } else {
            x = ad::avg_pool2d(g, x, spec.pool_h, spec.pool_w, spec.pool_stride_h,
                               spec.pool_stride_w);
        }
        if (li == 0 && mode == ad::Mode::kTrain && cfg.dropout_rate > 0.0) {
            x = ad::dropout_mask(g, x, cfg.dropout_rate, *rng, mode);
        }
    }

    const int flat = ad::flatten(g, x);
    ad::Tensor feats = ad::Tensor::zeros(
        {static_cast<int>(batch.size()), cfg.overlap_feature_count});
    for (size_t bi = 0; bi < batch.size(); ++bi) {
        for (int fi = 0; fi < cfg.overlap_feature_count && fi < 2; ++fi) {
            feats.at(static_cast<int>(bi), fi) = batch[bi]->overlap_feats[static_cast<size_t>(fi)];
        }
    }
    const int with_feats = ad::concat_cols(g, flat, g.constant(std::move(feats), "overlap"));
    const int logits = ad::affine(g, with_feats, g.leaf(params.head_weight), g.leaf(params.head_bias));
    ForwardHandles handles;
    handles.probs = ad::logistic(g, logits);
    handles.similarity = similarity;
    return handles;
}

/// Single-pair probability, inference mode.
inline double forward(const QAInstance& instance, ModelParams& params, const NetConfig& cfg) {
    ad::Graph g;
    const std::vector<const QAInstance*> batch{&instance};
    ForwardHandles h = build_forward(g, batch, params, cfg, ad::Mode::kInference, nullptr);
    return g.value(h.probs).data[0];
}

/// Probabilities for one question's candidates, in candidate order; equal
/// to independent forward() calls. Long candidate lists are scored in
/// chunks to bound the per-graph activation memory; inference results are
/// independent of the chunking.
inline std::vector<double> score_candidates(const std::vector<QAInstance>& candidates,
                                            ModelParams& params, const NetConfig& cfg) {
    constexpr size_t kChunk = 16;
    std::vector<double> scores;
    scores.reserve(candidates.size());
    for (size_t start = 0; start < candidates.size(); start += kChunk) {
        const size_t end = std::min(candidates.size(), start + kChunk);
        ad::Graph g;
        std::vector<const QAInstance*> batch;
        batch.reserve(end - start);
        for (size_t i = start; i < end; ++i) batch.push_back(&candidates[i]);
        ForwardHandles h = build_forward(g, batch, params, cfg, ad::Mode::kInference, nullptr);
        const ad::Tensor& probs = g.value(h.probs);
        scores.insert(scores.end(), probs.data.begin(), probs.data.end());
    }
    return scores;
}

}  // namespace m2s
