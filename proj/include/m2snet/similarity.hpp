#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "m2snet/graph.hpp"
#include "m2snet/ops.hpp"
#include "m2snet/rng.hpp"

namespace m2s {

enum class Measurement { kEuclidean, kCosine, kMetric };

inline const char* measurement_name(Measurement m) {
    switch (m) {
        case Measurement::kEuclidean: return "euclidean";
        case Measurement::kCosine: return "cosine";
        case Measurement::kMetric: return "metric";
    }
    return "?";
}

inline Measurement parse_measurement(const std::string& s) {
    if (s == "euclidean" || s == "euc") return Measurement::kEuclidean;
    if (s == "cosine" || s == "cos") return Measurement::kCosine;
    if (s == "metric") return Measurement::kMetric;
    throw ConfigError("unknown measurement '" + s + "' (expected euclidean|cosine|metric)");
}

/// Learnable bilinear metric: one d x d matrix U and one L1 x L2 bias matrix
/// B per modality, stored stacked as [k x d x d] and [k x L1 x L2].
struct MetricParams {
    int modalities = 0;
    ad::Tensor u;     // [k x d x d]
    ad::Tensor bias;  // [k x L1 x L2]

    /// U starts as identity plus small gaussian noise so training begins
    /// near plain dot-product similarity; B starts at zero.
    static MetricParams init(int modalities, int dim, int len1, int len2, Rng& rng,
                             double noise = 0.01) {
        if (modalities < 1) throw ConfigError("metric: modality count must be >= 1");
        MetricParams p;
        p.modalities = modalities;
        p.u = ad::Tensor::zeros({modalities, dim, dim});
        for (int m = 0; m < modalities; ++m) {
            for (int r = 0; r < dim; ++r) {
                for (int s = 0; s < dim; ++s) {
                    p.u.at(m, r, s) = (r == s ? 1.0 : 0.0) + rng.gaussian(0.0, noise);
                }
            }
        }
        p.bias = ad::Tensor::zeros({modalities, len1, len2});
        return p;
    }
};

namespace ad {

/// m[k,i,j] = q_i . U^k a_j + b[k,i,j] for shaped embeddings q [L1 x d] and
/// a [L2 x d]. Differentiable in q, a, U and b.
inline int metric_similarity(Graph& g, int q_id, int a_id, int u_id, int bias_id) {
    const Tensor& q = g.value(q_id);
    const Tensor& a = g.value(a_id);
    const Tensor& u = g.value(u_id);
    const Tensor& bias = g.value(bias_id);
    detail::require_rank(q, 2, "metric_similarity", "question embeddings");
    detail::require_rank(a, 2, "metric_similarity", "answer embeddings");
    detail::require_rank(u, 3, "metric_similarity", "metric U");
    detail::require_rank(bias, 3, "metric_similarity", "metric bias");
    const int len1 = q.dim(0), len2 = a.dim(0), dim = q.dim(1), k = u.dim(0);
    if (a.dim(1) != dim) {
        throw DimensionError("metric_similarity: embedding dims disagree (" + std::to_string(dim) +
                             " vs " + std::to_string(a.dim(1)) + ")");
    }
    if (u.dim(1) != dim || u.dim(2) != dim) {
        throw DimensionError("metric_similarity: U is " + u.shape_str() +
                             " but embeddings have dim " + std::to_string(dim));
    }
    if (bias.dim(0) != k || bias.dim(1) != len1 || bias.dim(2) != len2) {
        throw DimensionError("metric_similarity: bias is " + bias.shape_str() + ", expected [" +
                             std::to_string(k) + "x" + std::to_string(len1) + "x" +
                             std::to_string(len2) + "]");
    }

    Tensor out_t = Tensor::zeros({k, len1, len2});
    std::vector<double> qu(static_cast<size_t>(len1) * dim);  // Q . U^m, reused per modality
    for (int m = 0; m < k; ++m) {
        const double* um = u.data.data() + static_cast<size_t>(m) * dim * dim;
        for (int i = 0; i < len1; ++i) {
            for (int s = 0; s < dim; ++s) {
                double acc = 0.0;
                for (int r = 0; r < dim; ++r) {
                    acc += q.data[static_cast<size_t>(i) * dim + r] *
                           um[static_cast<size_t>(r) * dim + s];
                }
                qu[static_cast<size_t>(i) * dim + s] = acc;
            }
        }
        for (int i = 0; i < len1; ++i) {
            for (int j = 0; j < len2; ++j) {
                double acc = bias.at(m, i, j);
                for (int s = 0; s < dim; ++s) {
                    acc += qu[static_cast<size_t>(i) * dim + s] *
                           a.data[static_cast<size_t>(j) * dim + s];
                }
                out_t.at(m, i, j) = acc;
            }
        }
    }

    int out = g.add_node(std::move(out_t), {q_id, a_id, u_id, bias_id}, "metric_similarity");
    g.set_backward(out, [=](Graph& gg) {
        const Tensor& qv = gg.value(q_id);
        const Tensor& av = gg.value(a_id);
        const Tensor& uv = gg.value(u_id);
        const std::vector<double>& go = gg.grad(out);
        std::vector<double>& gq = gg.grad(q_id);
        std::vector<double>& ga = gg.grad(a_id);
        std::vector<double>& gu = gg.grad(u_id);
        std::vector<double>& gb = gg.grad(bias_id);
        for (size_t i = 0; i < go.size(); ++i) gb[i] += go[i];
        std::vector<double> qu(static_cast<size_t>(len1) * dim);
        std::vector<double> ua(static_cast<size_t>(len2) * dim);  // A . (U^m)^T
        for (int m = 0; m < k; ++m) {
            const double* um = uv.data.data() + static_cast<size_t>(m) * dim * dim;
            const double* gm = go.data() + static_cast<size_t>(m) * len1 * len2;
            for (int i = 0; i < len1; ++i) {
                for (int s = 0; s < dim; ++s) {
                    double acc = 0.0;
                    for (int r = 0; r < dim; ++r) {
                        acc += qv.data[static_cast<size_t>(i) * dim + r] *
                               um[static_cast<size_t>(r) * dim + s];
                    }
                    qu[static_cast<size_t>(i) * dim + s] = acc;
                }
            }
            for (int j = 0; j < len2; ++j) {
                for (int r = 0; r < dim; ++r) {
                    double acc = 0.0;
                    for (int s = 0; s < dim; ++s) {
                        acc += av.data[static_cast<size_t>(j) * dim + s] *
                               um[static_cast<size_t>(r) * dim + s];
                    }
                    ua[static_cast<size_t>(j) * dim + r] = acc;
                }
            }
            double* gum = gu.data() + static_cast<size_t>(m) * dim * dim;
            for (int i = 0; i < len1; ++i) {
                for (int j = 0; j < len2; ++j) {
                    const double gout = gm[static_cast<size_t>(i) * len2 + j];
                    if (gout == 0.0) continue;
                    for (int r = 0; r < dim; ++r) {
                        gq[static_cast<size_t>(i) * dim + r] +=
                            gout * ua[static_cast<size_t>(j) * dim + r];
                    }
                    for (int s = 0; s < dim; ++s) {
                        ga[static_cast<size_t>(j) * dim + s] +=
                            gout * qu[static_cast<size_t>(i) * dim + s];
                    }
                    const double* qr = qv.data.data() + static_cast<size_t>(i) * dim;
                    const double* ar = av.data.data() + static_cast<size_t>(j) * dim;
                    for (int r = 0; r < dim; ++r) {
                        const double gq_r = gout * qr[r];
                        for (int s = 0; s < dim; ++s) {
                            gum[static_cast<size_t>(r) * dim + s] += gq_r * ar[s];
                        }
                    }
                }
            }
        }
    });
    return out;
}

/// m[0,i,j] = 1 / (1 + ||q_i - a_j||); entries lie in (0, 1].
inline int euclidean_similarity(Graph& g, int q_id, int a_id) {
    const Tensor& q = g.value(q_id);
    const Tensor& a = g.value(a_id);
    detail::require_rank(q, 2, "euclidean_similarity", "question embeddings");
    detail::require_rank(a, 2, "euclidean_similarity", "answer embeddings");
    const int len1 = q.dim(0), len2 = a.dim(0), dim = q.dim(1);
    if (a.dim(1) != dim) {
        throw DimensionError("euclidean_similarity: embedding dims disagree (" +
                             std::to_string(dim) + " vs " + std::to_string(a.dim(1)) + ")");
    }
    Tensor out_t = Tensor::zeros({1, len1, len2});
    for (int i = 0; i < len1; ++i) {
        for (int j = 0; j < len2; ++j) {
            double sq = 0.0;
            for (int s = 0; s < dim; ++s) {
                const double d = q.at(i, s) - a.at(j, s);
                sq += d * d;
            }
            out_t.at(0, i, j) = 1.0 / (1.0 + std::sqrt(sq));
        }
    }
    int out = g.add_node(std::move(out_t), {q_id, a_id}, "euclidean_similarity");
    g.set_backward(out, [=](Graph& gg) {
        const Tensor& qv = gg.value(q_id);
        const Tensor& av = gg.value(a_id);
        const std::vector<double>& go = gg.grad(out);
        std::vector<double>& gq = gg.grad(q_id);
        std::vector<double>& ga = gg.grad(a_id);
        for (int i = 0; i < len1; ++i) {
            for (int j = 0; j < len2; ++j) {
                const double gout = go[static_cast<size_t>(i) * len2 + j];
                if (gout == 0.0) continue;
                double sq = 0.0;
                for (int s = 0; s < dim; ++s) {
                    const double d = qv.at(i, s) - av.at(j, s);
                    sq += d * d;
                }
                const double r = std::sqrt(sq);
                if (r == 0.0) continue;  // kink of the norm; zero subgradient
                const double denom = 1.0 + r;
                const double coef = -gout / (r * denom * denom);
                for (int s = 0; s < dim; ++s) {
                    const double d = qv.at(i, s) - av.at(j, s);
                    gq[static_cast<size_t>(i) * dim + s] += coef * d;
                    ga[static_cast<size_t>(j) * dim + s] -= coef * d;
                }
            }
        }
    });
    return out;
}

/// m[0,i,j] = q_i . a_j / (||q_i|| ||a_j||); pairs involving a zero-norm
/// vector (padding rows) yield 0 with zero gradient.
inline int cosine_similarity(Graph& g, int q_id, int a_id) {
    const Tensor& q = g.value(q_id);
    const Tensor& a = g.value(a_id);
    detail::require_rank(q, 2, "cosine_similarity", "question embeddings");
    detail::require_rank(a, 2, "cosine_similarity", "answer embeddings");
    const int len1 = q.dim(0), len2 = a.dim(0), dim = q.dim(1);
    if (a.dim(1) != dim) {
        throw DimensionError("cosine_similarity: embedding dims disagree (" + std::to_string(dim) +
                             " vs " + std::to_string(a.dim(1)) + ")");
    }
    Tensor out_t = Tensor::zeros({1, len1, len2});
    for (int i = 0; i < len1; ++i) {
        for (int j = 0; j < len2; ++j) {
            double dot = 0.0, nq = 0.0, na = 0.0;
            for (int s = 0; s < dim; ++s) {
                dot += q.at(i, s) * a.at(j, s);
                nq += q.at(i, s) * q.at(i, s);
                na += a.at(j, s) * a.at(j, s);
            }
            out_t.at(0, i, j) = (nq == 0.0 || na == 0.0)
                                    ? 0.0
                                    : dot / (std::sqrt(nq) * std::sqrt(na));
        }
    }
    int out = g.add_node(std::move(out_t), {q_id, a_id}, "cosine_similarity");
    g.set_backward(out, [=](Graph& gg) {
        const Tensor& qv = gg.value(q_id);
        const Tensor& av = gg.value(a_id);
        const std::vector<double>& go = gg.grad(out);
        std::vector<double>& gq = gg.grad(q_id);
        std::vector<double>& ga = gg.grad(a_id);
        for (int i = 0; i < len1; ++i) {
            for (int j = 0; j < len2; ++j) {
                const double gout = go[static_cast<size_t>(i) * len2 + j];
                if (gout == 0.0) continue;
                double dot = 0.0, nq2 = 0.0, na2 = 0.0;
                for (int s = 0; s < dim; ++s) {
                    dot += qv.at(i, s) * av.at(j, s);
                    nq2 += qv.at(i, s) * qv.at(i, s);
                    na2 += av.at(j, s) * av.at(j, s);
                }
                if (nq2 == 0.0 || na2 == 0.0) continue;
                const double nq = std::sqrt(nq2), na = std::sqrt(na2);
                const double cos = dot / (nq * na);
                for (int s = 0; s < dim; ++s) {
                    gq[static_cast<size_t>(i) * dim + s] +=
                        gout * (av.at(j, s) / (nq * na) - cos * qv.at(i, s) / nq2);
                    ga[static_cast<size_t>(j) * dim + s] +=
                        gout * (qv.at(i, s) / (nq * na) - cos * av.at(j, s) / na2);
                }
            }
        }
    });
    return out;
}

/// (lambda/2) * sum over modalities of ||U^k||_F^2; the gradient pushed into
/// U is exactly lambda * U.
inline int frobenius_penalty(Graph& g, int u_id, double lambda) {
    if (lambda < 0.0) throw ConfigError("frobenius penalty: lambda must be non-negative");
    const Tensor& u = g.value(u_id);
    double acc = 0.0;
    for (double v : u.data) acc += v * v;
    int out = g.add_node(Tensor({1}, {0.5 * lambda * acc}), {u_id}, "frobenius");
    g.set_backward(out, [=](Graph& gg) {
        const Tensor& uv = gg.value(u_id);
        const double go = gg.grad(out)[0];
        std::vector<double>& gu = gg.grad(u_id);
        for (size_t i = 0; i < gu.size(); ++i) gu[i] += go * (lambda * uv.data[i]);
    });
    return out;
}

}  // namespace ad

/// Penalty value without a graph, for loss reporting and tests.
inline double frobenius_penalty(const MetricParams& params, double lambda) {
    if (lambda < 0.0) throw ConfigError("frobenius penalty: lambda must be non-negative");
    double acc = 0.0;
    for (double v : params.u.data) acc += v * v;
    return 0.5 * lambda * acc;
}

}  // namespace m2s
