#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "m2snet/matchnet.hpp"
#include "m2snet/parallel.hpp"
#include "m2snet/qa_data.hpp"
#include "m2snet/ranker_eval.hpp"

namespace m2s {

struct TrainConfig {
    double lambda = 5e-4;  // Frobenius weight on the metric matrices
    int batch_size = 50;
    int max_epochs = 50;
    int patience = 5;
    double rho = 0.95;
    double eps = 1e-6;
    uint64_t seed = 42;
    double prob_clip = 1e-7;

    void validate() const {
        if (lambda < 0.0) throw ConfigError("train config: lambda must be >= 0");
        if (batch_size < 2) throw ConfigError("train config: batch size must be >= 2");
        if (max_epochs < 1) throw ConfigError("train config: max epochs must be >= 1");
        if (patience < 1) throw ConfigError("train config: patience must be >= 1");
        if (rho <= 0.0 || rho >= 1.0) throw ConfigError("train config: rho must lie in (0, 1)");
        if (eps <= 0.0) throw ConfigError("train config: eps must be positive");
        if (prob_clip <= 0.0 || prob_clip >= 0.5) {
            throw ConfigError("train config: probability clip must lie in (0, 0.5)");
        }
    }
};

/// Mean cross-entropy of clipped probabilities against binary labels plus
/// the Frobenius penalty of the metric matrices.
inline double cross_entropy_loss(const std::vector<double>& probs,
                                 const std::vector<double>& labels, const MetricParams& params,
                                 double lambda, double clip = 1e-7) {
    if (probs.size() != labels.size()) {
        throw DimensionError("cross_entropy_loss: " + std::to_string(probs.size()) +
                             " probabilities vs " + std::to_string(labels.size()) + " labels");
    }
    double acc = 0.0;
    for (size_t i = 0; i < probs.size(); ++i) {
        const double p = std::min(std::max(probs[i], clip), 1.0 - clip);
        acc -= labels[i] * std::log(p) + (1.0 - labels[i]) * std::log(1.0 - p);
    }
    double loss = acc / static_cast<double>(probs.size());
    if (params.modalities > 0) loss += frobenius_penalty(params, lambda);
    return loss;
}

/// AdaDelta with decayed accumulators of squared gradients and squared
/// updates; no learning rate. Reads each parameter's grad buffer.
class AdaDelta {
public:
    AdaDelta(double rho, double eps) : rho_(rho), eps_(eps) {}

    void step(const std::vector<NamedParam>& params) {
        for (const NamedParam& p : params) {
            ad::Tensor& t = *p.tensor;
            if (t.grad.empty()) continue;
            State& s = state_[p.tensor];
            if (s.acc_grad.size() != t.data.size()) {
                s.acc_grad.assign(t.data.size(), 0.0);
                s.acc_update.assign(t.data.size(), 0.0);
            }
            for (size_t i = 0; i < t.data.size(); ++i) {
                const double g = t.grad[i];
                s.acc_grad[i] = rho_ * s.acc_grad[i] + (1.0 - rho_) * g * g;
                const double dx =
                    -std::sqrt((s.acc_update[i] + eps_) / (s.acc_grad[i] + eps_)) * g;
                s.acc_update[i] = rho_ * s.acc_update[i] + (1.0 - rho_) * dx * dx;
                t.data[i] += dx;
            }
        }
    }

private:
    struct State {
        std::vector<double> acc_grad;
        std::vector<double> acc_update;
    };

    double rho_;
    double eps_;
    std::unordered_map<ad::Tensor*, State> state_;
};

/// Patience bookkeeping over a maximized validation metric: stop after
/// `patience` consecutive epochs without strict improvement.
class EarlyStopper {
public:
    explicit EarlyStopper(int patience) : patience_(patience) {}

    /// Returns true when the observation improves on the best so far.
    bool observe(double metric) {
        ++epoch_;
        if (metric > best_) {
            best_ = metric;
            best_epoch_ = epoch_;
            stall_ = 0;
            return true;
        }
        ++stall_;
        return false;
    }

    bool should_stop() const { return stall_ >= patience_; }
    int best_epoch() const { return best_epoch_; }
    double best() const { return best_; }

private:
    int patience_;
    double best_ = -std::numeric_limits<double>::infinity();
    int stall_ = 0;
    int epoch_ = 0;
    int best_epoch_ = 0;
};

/// Score every candidate of every question with the frozen model; questions
/// fan out across workers, each building its own graph.
inline RankedRun run_from_split(const PreparedSplit& split, ModelParams& params,
                                const NetConfig& cfg, const std::string& run_id = "m2snet") {
    RankedRun run;
    run.run_id = run_id;
    run.questions.resize(split.size());
    parallel_for(static_cast<long>(split.size()), [&](long qi) {
        const PreparedQuestion& q = split[static_cast<size_t>(qi)];
        RankedQuestion out;
        out.qid = q.qid;
        const std::vector<double> scores = score_candidates(q.candidates, params, cfg);
        for (size_t ci = 0; ci < q.candidates.size(); ++ci) {
            out.candidates.push_back(
                {q.candidates[ci].cand_id, scores[ci], q.candidates[ci].label});
        }
        run.questions[static_cast<size_t>(qi)] = std::move(out);
    });
    return run;
}

struct EpochLog {
    int epoch = 0;
    double train_loss = 0.0;
    double dev_map = 0.0;
    double dev_mrr = 0.0;
    double seconds = 0.0;
};

struct TrainResult {
    ModelParams best_params;
    std::vector<EpochLog> log;
    int best_epoch = 0;
    double best_map = 0.0;
    double best_mrr = 0.0;
    bool stopped_early = false;
};

/// One line per epoch, tab separated: epoch, train loss, dev MAP, dev MRR,
/// seconds.
inline std::string format_train_log(const std::vector<EpochLog>& log) {
    std::ostringstream out;
    for (const EpochLog& e : log) {
        char line[160];
        std::snprintf(line, sizeof(line), "%d\t%.12g\t%.6f\t%.6f\t%.2f\n", e.epoch, e.train_loss,
                      e.dev_map, e.dev_mrr, e.seconds);
        out << line;
    }
    return out.str();
}

namespace detail {

inline uint64_t mix_seed(uint64_t seed, uint64_t a, uint64_t b) {
    uint64_t h = seed;
    h ^= a + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    h ^= b + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    return h;
}

inline void check_gradients_finite(const std::vector<NamedParam>& params) {
    for (const NamedParam& p : params) {
        if (!p.tensor->grad_finite()) {
            throw NumericError("training aborted: non-finite gradient in parameter " + p.name);
        }
    }
}

}  // namespace detail

/// Pointwise rank training: per batch, forward, cross-entropy plus
/// Frobenius penalty, backward, AdaDelta. After each epoch dev MAP decides
/// early stopping; the best checkpoint is returned.
inline TrainResult train(const PreparedSplit& train_split, const PreparedSplit& dev_split,
                         ModelParams params, const NetConfig& net_cfg, const TrainConfig& cfg,
                         std::ostream* progress = nullptr) {
    cfg.validate();
    net_cfg.validate();
    if (train_split.empty()) throw ConfigError("train: empty training split");
    if (dev_split.empty()) throw ConfigError("train: empty dev split");

    const std::vector<const QAInstance*> instances = flatten_instances(train_split);
    if (static_cast<int>(instances.size()) < cfg.batch_size) {
        throw ConfigError("train: " + std::to_string(instances.size()) +
                          " training instances cannot fill one batch of " +
                          std::to_string(cfg.batch_size));
    }

    AdaDelta optimizer(cfg.rho, cfg.eps);
    EarlyStopper stopper(cfg.patience);
    TrainResult result;
    result.best_params = params;

    const std::vector<NamedParam> named = trainable_params(params);
    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const auto tic = std::chrono::steady_clock::now();
        const auto batches = make_batches(instances, cfg.batch_size,
                                          detail::mix_seed(cfg.seed, static_cast<uint64_t>(epoch), 0),
                                          BatchMode::kTrain);
        double loss_sum = 0.0;
        for (size_t bi = 0; bi < batches.size(); ++bi) {
            Rng dropout_rng(detail::mix_seed(cfg.seed, static_cast<uint64_t>(epoch), bi + 1));
            ad::Graph g;
            ForwardHandles h =
                build_forward(g, batches[bi], params, net_cfg, ad::Mode::kTrain, &dropout_rng);
            std::vector<double> labels;
            labels.reserve(batches[bi].size());
            for (const QAInstance* inst : batches[bi]) {
                labels.push_back(static_cast<double>(inst->label));
            }
            int loss = ad::bce_loss(g, h.probs, labels, cfg.prob_clip);
            if (params.metric.modalities > 0) {
                // U leaf already exists in this graph; a fresh leaf keeps
                // the penalty's gradient path separate but sums correctly.
                loss = ad::add_scalars(g, loss,
                                       ad::frobenius_penalty(g, g.leaf(params.metric.u), cfg.lambda));
            }
            const double loss_value = g.value(loss).data[0];
            if (!std::isfinite(loss_value)) {
                throw NumericError("training aborted: non-finite loss at epoch " +
                                   std::to_string(epoch));
            }
            loss_sum += loss_value;
            g.backward(loss);
            detail::check_gradients_finite(named);
            // Padding embedding stays frozen at zero.
            for (int s = 0; s < params.embeddings.dim; ++s) {
                params.embeddings.matrix.grad[static_cast<size_t>(s)] = 0.0;
            }
            optimizer.step(named);
            for (const NamedParam& p : named) p.tensor->zero_grad();
        }

        const RankedRun dev_run = run_from_split(dev_split, params, net_cfg);
        const EvalReport dev_report = evaluate(dev_run);
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - tic).count();

        EpochLog entry;
        entry.epoch = epoch;
        entry.train_loss = batches.empty() ? 0.0 : loss_sum / static_cast<double>(batches.size());
        entry.dev_map = dev_report.map;
        entry.dev_mrr = dev_report.mrr;
        entry.seconds = seconds;
        result.log.push_back(entry);
        if (progress) {
            char line[160];
            std::snprintf(line, sizeof(line), "epoch %d\tloss %.6f\tdev MAP %.4f\tdev MRR %.4f\n",
                          epoch, entry.train_loss, entry.dev_map, entry.dev_mrr);
            (*progress) << line << std::flush;
        }

        if (stopper.observe(dev_report.map)) {
            result.best_params = params;
            result.best_map = dev_report.map;
            result.best_mrr = dev_report.mrr;
            result.best_epoch = epoch;
        }
        if (stopper.should_stop()) {
            result.stopped_early = true;
            break;
        }
    }
    return result;
}

}  // namespace m2s
