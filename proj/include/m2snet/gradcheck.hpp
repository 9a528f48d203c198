#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "m2snet/matchnet.hpp"
#include "m2snet/trainer.hpp"

namespace m2s {

struct GradCheckGroup {
    std::string group;
    double max_rel_err = 0.0;
    long checked = 0;
};

namespace detail {

inline double rel_error(double analytic, double numeric) {
    const double aa = std::fabs(analytic), an = std::fabs(numeric);
    if (aa < 1e-7 && an < 1e-7) return 0.0;
    return std::fabs(analytic - numeric) / std::max(aa, an);
}

}  // namespace detail

/// Central finite differences over every trainable tensor of a tiny
/// end-to-end model (d=5, L1=L2=7, two conv blocks). The loss closure is
/// rebuilt per evaluation with the same dropout stream, so the loss is a
/// deterministic function of the parameters. The padding embedding row is
/// not a parameter and is excluded.
inline std::vector<GradCheckGroup> run_gradcheck(Measurement measurement, uint64_t seed,
                                                 bool corrupt_backward = false) {
    Rng rng(seed);

    NetConfig cfg;
    cfg.measurement = measurement;
    cfg.modalities = measurement == Measurement::kMetric ? 2 : 1;
    cfg.embedding_dim = 5;
    cfg.question_len = 7;
    cfg.answer_len = 7;
    cfg.dropout_rate = 0.25;
    ConvLayerSpec first;
    first.filters = 2;
    first.kernel_h = 2;
    first.kernel_w = 2;
    first.pool_h = 2;
    first.pool_w = 2;
    first.pool_stride_h = 2;
    first.pool_stride_w = 2;
    ConvLayerSpec second;
    second.filters = 2;
    second.kernel_h = 2;
    second.kernel_w = 2;
    second.global_pool = true;
    cfg.layers = {first, second};
    cfg.validate();

    const int vocab = 9;
    std::vector<std::string> tokens;
    std::vector<std::vector<double>> vectors;
    for (int t = 0; t < vocab; ++t) {
        tokens.push_back("tok" + std::to_string(t));
        std::vector<double> v(static_cast<size_t>(cfg.embedding_dim));
        for (double& x : v) x = rng.gaussian(0.0, 0.5);
        vectors.push_back(std::move(v));
    }
    ModelParams params =
        ModelParams::init(cfg, EmbeddingTable::build(cfg.embedding_dim, tokens, vectors), rng);

    std::vector<QAInstance> batch(3);
    std::vector<double> labels;
    for (size_t bi = 0; bi < batch.size(); ++bi) {
        QAInstance& inst = batch[bi];
        inst.qid = "g" + std::to_string(bi);
        inst.label = bi % 2 == 0 ? 1 : 0;
        labels.push_back(static_cast<double>(inst.label));
        inst.overlap_feats = {rng.uniform(), rng.uniform()};
        inst.question.original_len = cfg.question_len - 1;
        inst.answer.original_len = cfg.answer_len;
        for (int i = 0; i < cfg.question_len; ++i) {
            inst.question.ids.push_back(
                i + 1 < cfg.question_len ? 2 + static_cast<int>(rng.next_u64() % vocab)
                                         : EmbeddingTable::kPadIndex);
        }
        for (int i = 0; i < cfg.answer_len; ++i) {
            inst.answer.ids.push_back(2 + static_cast<int>(rng.next_u64() % vocab));
        }
    }
    std::vector<const QAInstance*> batch_ptrs;
    for (const QAInstance& inst : batch) batch_ptrs.push_back(&inst);

    const double lambda = 5e-4;
    const auto eval_loss = [&]() {
        Rng dropout_rng(seed + 17);
        ad::Graph g;
        ForwardHandles h = build_forward(g, batch_ptrs, params, cfg, ad::Mode::kTrain, &dropout_rng);
        int loss = ad::bce_loss(g, h.probs, labels, 1e-7);
        if (params.metric.modalities > 0) {
            loss = ad::add_scalars(g, loss,
                                   ad::frobenius_penalty(g, g.leaf(params.metric.u), lambda));
        }
        return std::pair<ad::Graph, int>(std::move(g), loss);
    };

    for (const NamedParam& p : trainable_params(params)) p.tensor->zero_grad();
    {
        auto [g, loss] = eval_loss();
        g.backward(loss);
    }
    std::vector<NamedParam> named = trainable_params(params);
    std::vector<std::vector<double>> analytic;
    for (const NamedParam& p : named) analytic.push_back(p.tensor->grad);
    if (corrupt_backward) {
        for (size_t gi = 0; gi < named.size(); ++gi) {
            if (named[gi].name == "conv1.filters") {
                for (double& v : analytic[gi]) v *= 1.01;
            }
        }
    }

    const double h = 1e-5;
    std::vector<GradCheckGroup> report;
    for (size_t gi = 0; gi < named.size(); ++gi) {
        GradCheckGroup group;
        group.group = named[gi].name;
        ad::Tensor& t = *named[gi].tensor;
        const bool is_embeddings = named[gi].name == "embeddings";
        const size_t start = is_embeddings ? static_cast<size_t>(t.dim(1)) : 0;  // skip pad row
        for (size_t i = start; i < t.data.size(); ++i) {
            const double saved = t.data[i];
            t.data[i] = saved + h;
            const double up = [&] {
                auto [g, loss] = eval_loss();
                return g.value(loss).data[0];
            }();
            t.data[i] = saved - h;
            const double down = [&] {
                auto [g, loss] = eval_loss();
                return g.value(loss).data[0];
            }();
            t.data[i] = saved;
            const double numeric = (up - down) / (2.0 * h);
            group.max_rel_err =
                std::max(group.max_rel_err, detail::rel_error(analytic[gi][i], numeric));
            ++group.checked;
        }
        report.push_back(group);
    }
    for (const NamedParam& p : named) p.tensor->zero_grad();
    return report;
}

}  // namespace m2s
