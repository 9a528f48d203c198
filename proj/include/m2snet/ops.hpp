#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "m2snet/graph.hpp"
#include "m2snet/rng.hpp"

namespace m2s::ad {

namespace detail {

inline void require_rank(const Tensor& t, int rank, const char* op, const char* what) {
    if (t.rank() != rank) {
        throw DimensionError(std::string(op) + ": " + what + " must have rank " +
                             std::to_string(rank) + ", got shape " + t.shape_str());
    }
}

struct Chw {
    int batch;
    int channels;
    int height;
    int width;
    bool batched;
};

inline Chw unpack_chw(const Tensor& t, const char* op) {
    if (t.rank() == 3) return {1, t.dim(0), t.dim(1), t.dim(2), false};
    if (t.rank() == 4) return {t.dim(0), t.dim(1), t.dim(2), t.dim(3), true};
    throw DimensionError(std::string(op) + ": input must have rank 3 or 4, got shape " +
                         t.shape_str());
}

}  // namespace detail

/// Narrow (valid) correlation with stride 1. input [c x H x W] or
/// [B x c x H x W], filters [n x c x h x w], bias [n]; output spatial
/// extents shrink to H-h+1 by W-w+1.
inline int conv2d(Graph& g, int input_id, int filter_id, int bias_id) {
    const Tensor& x = g.value(input_id);
    const Tensor& f = g.value(filter_id);
    const Tensor& b = g.value(bias_id);
    detail::Chw in = detail::unpack_chw(x, "conv2d");
    detail::require_rank(f, 4, "conv2d", "filters");
    detail::require_rank(b, 1, "conv2d", "bias");
    const int n = f.dim(0), fc = f.dim(1), kh = f.dim(2), kw = f.dim(3);
    if (fc != in.channels) {
        throw DimensionError("conv2d: filter channel axis (axis 1, extent " + std::to_string(fc) +
                             ") does not match input channel axis (extent " +
                             std::to_string(in.channels) + ")");
    }
    if (b.dim(0) != n) {
        throw DimensionError("conv2d: bias axis 0 (extent " + std::to_string(b.dim(0)) +
                             ") does not match filter count " + std::to_string(n));
    }
    if (kh > in.height || kw > in.width) {
        throw DegenerateInputError("conv2d: kernel " + std::to_string(kh) + "x" +
                                   std::to_string(kw) + " exceeds input " +
                                   std::to_string(in.height) + "x" + std::to_string(in.width));
    }
    const int oh = in.height - kh + 1;
    const int ow = in.width - kw + 1;

    Tensor y = in.batched ? Tensor::zeros({in.batch, n, oh, ow}) : Tensor::zeros({n, oh, ow});
    const double* xd = x.data.data();
    const double* fd = f.data.data();
    double* yd = y.data.data();
    const size_t x_c = static_cast<size_t>(in.height) * in.width;
    const size_t x_b = x_c * in.channels;
    const size_t f_c = static_cast<size_t>(kh) * kw;
    const size_t f_o = f_c * in.channels;
    const size_t y_o = static_cast<size_t>(oh) * ow;
    const size_t y_b = y_o * n;
    for (int bi = 0; bi < in.batch; ++bi) {
        for (int o = 0; o < n; ++o) {
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox) {
                    double acc = b.data[static_cast<size_t>(o)];
                    for (int ci = 0; ci < in.channels; ++ci) {
                        const double* xrow = xd + bi * x_b + ci * x_c +
                                             static_cast<size_t>(oy) * in.width + ox;
                        const double* frow = fd + o * f_o + ci * f_c;
                        for (int dy = 0; dy < kh; ++dy) {
                            for (int dx = 0; dx < kw; ++dx) {
                                acc += xrow[static_cast<size_t>(dy) * in.width + dx] *
                                       frow[static_cast<size_t>(dy) * kw + dx];
                            }
                        }
                    }
                    yd[bi * y_b + o * y_o + static_cast<size_t>(oy) * ow + ox] = acc;
                }
            }
        }
    }

    int out = g.add_node(std::move(y), {input_id, filter_id, bias_id}, "conv2d");
    g.set_backward(out, [=](Graph& gg) {
        const Tensor& xv = gg.value(input_id);
        const Tensor& fv = gg.value(filter_id);
        const std::vector<double>& go = gg.grad(out);
        std::vector<double>& gx = gg.grad(input_id);
        std::vector<double>& gf = gg.grad(filter_id);
        std::vector<double>& gb = gg.grad(bias_id);
        for (int bi = 0; bi < in.batch; ++bi) {
            for (int o = 0; o < n; ++o) {
                for (int oy = 0; oy < oh; ++oy) {
                    for (int ox = 0; ox < ow; ++ox) {
                        const double gout =
                            go[bi * y_b + o * y_o + static_cast<size_t>(oy) * ow + ox];
                        gb[static_cast<size_t>(o)] += gout;
                        for (int ci = 0; ci < in.channels; ++ci) {
                            const size_t xoff =
                                bi * x_b + ci * x_c + static_cast<size_t>(oy) * in.width + ox;
                            const size_t foff = o * f_o + ci * f_c;
                            for (int dy = 0; dy < kh; ++dy) {
                                for (int dx = 0; dx < kw; ++dx) {
                                    const size_t xi = xoff + static_cast<size_t>(dy) * in.width + dx;
                                    const size_t fi = foff + static_cast<size_t>(dy) * kw + dx;
                                    gx[xi] += gout * fv.data[fi];
                                    gf[fi] += gout * xv.data[xi];
                                }
                            }
                        }
                    }
                }
            }
        }
    });
    return out;
}

/// Average pooling. Output extent per axis is floor((extent-window)/stride)+1.
inline int avg_pool2d(Graph& g, int input_id, int win_h, int win_w, int stride_h, int stride_w) {
    const Tensor& x = g.value(input_id);
    detail::Chw in = detail::unpack_chw(x, "avg_pool2d");
    if (stride_h < 1 || stride_w < 1) {
        throw ConfigError("avg_pool2d: stride must be positive");
    }
    if (win_h < 1 || win_w < 1 || win_h > in.height || win_w > in.width) {
        throw DegenerateInputError("avg_pool2d: window " + std::to_string(win_h) + "x" +
                                   std::to_string(win_w) + " does not fit input " +
                                   std::to_string(in.height) + "x" + std::to_string(in.width));
    }
    const int oh = (in.height - win_h) / stride_h + 1;
    const int ow = (in.width - win_w) / stride_w + 1;
    const double inv_area = 1.0 / (static_cast<double>(win_h) * win_w);

    Tensor y = in.batched ? Tensor::zeros({in.batch, in.channels, oh, ow})
                          : Tensor::zeros({in.channels, oh, ow});
    const size_t x_c = static_cast<size_t>(in.height) * in.width;
    const size_t y_c = static_cast<size_t>(oh) * ow;
    const int planes = in.batch * in.channels;
    for (int p = 0; p < planes; ++p) {
        const double* xp = x.data.data() + p * x_c;
        double* yp = y.data.data() + p * y_c;
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                double acc = 0.0;
                for (int dy = 0; dy < win_h; ++dy) {
                    for (int dx = 0; dx < win_w; ++dx) {
                        acc += xp[static_cast<size_t>(oy * stride_h + dy) * in.width +
                                  (ox * stride_w + dx)];
                    }
                }
                yp[static_cast<size_t>(oy) * ow + ox] = acc * inv_area;
            }
        }
    }

    int out = g.add_node(std::move(y), {input_id}, "avg_pool2d");
    g.set_backward(out, [=](Graph& gg) {
        const std::vector<double>& go = gg.grad(out);
        std::vector<double>& gx = gg.grad(input_id);
        for (int p = 0; p < planes; ++p) {
            const double* gop = go.data() + p * y_c;
            double* gxp = gx.data() + p * x_c;
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox) {
                    const double share = gop[static_cast<size_t>(oy) * ow + ox] * inv_area;
                    for (int dy = 0; dy < win_h; ++dy) {
                        for (int dx = 0; dx < win_w; ++dx) {
                            gxp[static_cast<size_t>(oy * stride_h + dy) * in.width +
                                (ox * stride_w + dx)] += share;
                        }
                    }
                }
            }
        }
    });
    return out;
}

inline int tanh_activation(Graph& g, int input_id) {
    Tensor y = g.value(input_id);
    for (double& v : y.data) v = std::tanh(v);
    int out = g.add_node(std::move(y), {input_id}, "tanh");
    g.set_backward(out, [=](Graph& gg) {
        const Tensor& yv = gg.value(out);
        const std::vector<double>& go = gg.grad(out);
        std::vector<double>& gx = gg.grad(input_id);
        for (size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * (1.0 - yv.data[i] * yv.data[i]);
    });
    return out;
}

inline int logistic(Graph& g, int input_id) {
    Tensor y = g.value(input_id);
    for (double& v : y.data) v = 1.0 / (1.0 + std::exp(-v));
    int out = g.add_node(std::move(y), {input_id}, "logistic");
    g.set_backward(out, [=](Graph& gg) {
        const Tensor& yv = gg.value(out);
        const std::vector<double>& go = gg.grad(out);
        std::vector<double>& gx = gg.grad(input_id);
        for (size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * yv.data[i] * (1.0 - yv.data[i]);
    });
    return out;
}

/// weight [p x m] applied to input [m] or [B x m]: y = input . weight^T + bias.
inline int affine(Graph& g, int input_id, int weight_id, int bias_id) {
    const Tensor& x = g.value(input_id);
    const Tensor& w = g.value(weight_id);
    const Tensor& b = g.value(bias_id);
    detail::require_rank(w, 2, "affine", "weight");
    detail::require_rank(b, 1, "affine", "bias");
    const bool batched = x.rank() == 2;
    if (!batched && x.rank() != 1) {
        throw DimensionError("affine: input must have rank 1 or 2, got shape " + x.shape_str());
    }
    const int batch = batched ? x.dim(0) : 1;
    const int m = batched ? x.dim(1) : x.dim(0);
    const int p = w.dim(0);
    if (w.dim(1) != m) {
        throw DimensionError("affine: weight axis 1 (extent " + std::to_string(w.dim(1)) +
                             ") does not match input feature axis (extent " + std::to_string(m) +
                             ")");
    }
    if (b.dim(0) != p) {
        throw DimensionError("affine: bias axis 0 (extent " + std::to_string(b.dim(0)) +
                             ") does not match weight axis 0 (extent " + std::to_string(p) + ")");
    }

    Tensor y = batched ? Tensor::zeros({batch, p}) : Tensor::zeros({p});
    for (int bi = 0; bi < batch; ++bi) {
        const double* xr = x.data.data() + static_cast<size_t>(bi) * m;
        double* yr = y.data.data() + static_cast<size_t>(bi) * p;
        for (int o = 0; o < p; ++o) {
            const double* wr = w.data.data() + static_cast<size_t>(o) * m;
            double acc = b.data[static_cast<size_t>(o)];
            for (int i = 0; i < m; ++i) acc += wr[i] * xr[i];
            yr[o] = acc;
        }
    }

    int out = g.add_node(std::move(y), {input_id, weight_id, bias_id}, "affine");
    g.set_backward(out, [=](Graph& gg) {
        const Tensor& xv = gg.value(input_id);
        const Tensor& wv = gg.value(weight_id);
        const std::vector<double>& go = gg.grad(out);
        std::vector<double>& gx = gg.grad(input_id);
        std::vector<double>& gw = gg.grad(weight_id);
        std::vector<double>& gb = gg.grad(bias_id);
        for (int bi = 0; bi < batch; ++bi) {
            const double* xr = xv.data.data() + static_cast<size_t>(bi) * m;
            const double* gor = go.data() + static_cast<size_t>(bi) * p;
            double* gxr = gx.data() + static_cast<size_t>(bi) * m;
            for (int o = 0; o < p; ++o) {
                const double gout = gor[o];
                gb[static_cast<size_t>(o)] += gout;
                const double* wr = wv.data.data() + static_cast<size_t>(o) * m;
                double* gwr = gw.data() + static_cast<size_t>(o) * m;
                for (int i = 0; i < m; ++i) {
                    gxr[i] += gout * wr[i];
                    gwr[i] += gout * xr[i];
                }
            }
        }
    });
    return out;
}

/// Running statistics owned by the model, updated by train-mode forward.
struct BnRunningStats {
    Tensor mean;
    Tensor var;
};

/// Per-channel batch normalization over batch and spatial axes of a
/// [B x c x H x W] input. Train mode standardizes with batch statistics and
/// updates the running averages in place; inference mode uses the running
/// averages only.
inline int batch_norm(Graph& g, int input_id, int gamma_id, int beta_id, BnRunningStats* running,
                      double eps, double momentum, Mode mode) {
    const Tensor& x = g.value(input_id);
    detail::require_rank(x, 4, "batch_norm", "input");
    const Tensor& gamma = g.value(gamma_id);
    const Tensor& beta = g.value(beta_id);
    const int batch = x.dim(0), channels = x.dim(1), height = x.dim(2), width = x.dim(3);
    if (gamma.numel() != channels || beta.numel() != channels) {
        throw DimensionError("batch_norm: gamma/beta must have one entry per channel (" +
                             std::to_string(channels) + ")");
    }
    if (mode == Mode::kTrain && batch < 2) {
        throw ConfigError("batch_norm: train mode requires batch size >= 2, got " +
                          std::to_string(batch));
    }
    const size_t plane = static_cast<size_t>(height) * width;
    const size_t sample = plane * channels;
    const double count = static_cast<double>(batch) * plane;

    std::vector<double> mean(static_cast<size_t>(channels), 0.0);
    std::vector<double> var(static_cast<size_t>(channels), 0.0);
    if (mode == Mode::kTrain) {
        for (int ci = 0; ci < channels; ++ci) {
            double acc = 0.0;
            for (int bi = 0; bi < batch; ++bi) {
                const double* xp = x.data.data() + bi * sample + ci * plane;
                for (size_t i = 0; i < plane; ++i) acc += xp[i];
            }
            mean[static_cast<size_t>(ci)] = acc / count;
            double sq = 0.0;
            for (int bi = 0; bi < batch; ++bi) {
                const double* xp = x.data.data() + bi * sample + ci * plane;
                for (size_t i = 0; i < plane; ++i) {
                    const double d = xp[i] - mean[static_cast<size_t>(ci)];
                    sq += d * d;
                }
            }
            var[static_cast<size_t>(ci)] = sq / count;
        }
        if (running) {
            for (int ci = 0; ci < channels; ++ci) {
                running->mean.data[static_cast<size_t>(ci)] =
                    momentum * running->mean.data[static_cast<size_t>(ci)] +
                    (1.0 - momentum) * mean[static_cast<size_t>(ci)];
                running->var.data[static_cast<size_t>(ci)] =
                    momentum * running->var.data[static_cast<size_t>(ci)] +
                    (1.0 - momentum) * var[static_cast<size_t>(ci)];
            }
        }
    } else {
        if (!running) throw StateError("batch_norm: inference mode requires running statistics");
        for (int ci = 0; ci < channels; ++ci) {
            mean[static_cast<size_t>(ci)] = running->mean.data[static_cast<size_t>(ci)];
            var[static_cast<size_t>(ci)] = running->var.data[static_cast<size_t>(ci)];
        }
    }

    std::vector<double> inv_std(static_cast<size_t>(channels));
    for (int ci = 0; ci < channels; ++ci) {
        inv_std[static_cast<size_t>(ci)] = 1.0 / std::sqrt(var[static_cast<size_t>(ci)] + eps);
    }

    Tensor y = Tensor::zeros(x.shape);
    for (int bi = 0; bi < batch; ++bi) {
        for (int ci = 0; ci < channels; ++ci) {
            const double* xp = x.data.data() + bi * sample + ci * plane;
            double* yp = y.data.data() + bi * sample + ci * plane;
            const double m = mean[static_cast<size_t>(ci)];
            const double s = inv_std[static_cast<size_t>(ci)];
            const double gsc = gamma.data[static_cast<size_t>(ci)];
            const double bsh = beta.data[static_cast<size_t>(ci)];
            for (size_t i = 0; i < plane; ++i) yp[i] = gsc * (xp[i] - m) * s + bsh;
        }
    }

    int out = g.add_node(std::move(y), {input_id, gamma_id, beta_id}, "batch_norm");
    const bool train = mode == Mode::kTrain;
    g.set_backward(out, [=](Graph& gg) {
        const Tensor& xv = gg.value(input_id);
        const Tensor& gv = gg.value(gamma_id);
        const std::vector<double>& go = gg.grad(out);
        std::vector<double>& gx = gg.grad(input_id);
        std::vector<double>& ggamma = gg.grad(gamma_id);
        std::vector<double>& gbeta = gg.grad(beta_id);
        for (int ci = 0; ci < channels; ++ci) {
            const double m = mean[static_cast<size_t>(ci)];
            const double s = inv_std[static_cast<size_t>(ci)];
            const double gsc = gv.data[static_cast<size_t>(ci)];
            double sum_go = 0.0;
            double sum_go_xhat = 0.0;
            for (int bi = 0; bi < batch; ++bi) {
                const size_t off = bi * sample + ci * plane;
                for (size_t i = 0; i < plane; ++i) {
                    const double xhat = (xv.data[off + i] - m) * s;
                    sum_go += go[off + i];
                    sum_go_xhat += go[off + i] * xhat;
                }
            }
            ggamma[static_cast<size_t>(ci)] += sum_go_xhat;
            gbeta[static_cast<size_t>(ci)] += sum_go;
            for (int bi = 0; bi < batch; ++bi) {
                const size_t off = bi * sample + ci * plane;
                for (size_t i = 0; i < plane; ++i) {
                    const double xhat = (xv.data[off + i] - m) * s;
                    if (train) {
                        gx[off + i] += gsc * s / count *
                                       (count * go[off + i] - sum_go - xhat * sum_go_xhat);
                    } else {
                        gx[off + i] += gsc * s * go[off + i];
                    }
                }
            }
        }
    });
    return out;
}

/// Inverted dropout: train mode zeroes elements with probability `rate` and
/// scales survivors by 1/(1-rate); inference mode is the identity (the
/// input node is returned unchanged).
inline int dropout_mask(Graph& g, int input_id, double rate, Rng& rng, Mode mode) {
    if (rate < 0.0 || rate >= 1.0) {
        throw ConfigError("dropout: rate must lie in [0, 1), got " + std::to_string(rate));
    }
    if (mode == Mode::kInference || rate == 0.0) return input_id;
    const Tensor& x = g.value(input_id);
    const double scale = 1.0 / (1.0 - rate);
    std::vector<double> mask(x.data.size());
    for (double& m : mask) m = rng.uniform() >= rate ? scale : 0.0;

    Tensor y = x;
    for (size_t i = 0; i < y.data.size(); ++i) y.data[i] *= mask[i];
    int out = g.add_node(std::move(y), {input_id}, "dropout");
    g.set_backward(out, [=, mask = std::move(mask)](Graph& gg) {
        const std::vector<double>& go = gg.grad(out);
        std::vector<double>& gx = gg.grad(input_id);
        for (size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * mask[i];
    });
    return out;
}

/// Select rows of a [V x d] table; duplicate ids accumulate gradient.
inline int gather_rows(Graph& g, int table_id, const std::vector<int>& ids) {
    const Tensor& table = g.value(table_id);
    detail::require_rank(table, 2, "gather_rows", "table");
    const int rows = table.dim(0), width = table.dim(1);
    Tensor y = Tensor::zeros({static_cast<int>(ids.size()), width});
    for (size_t r = 0; r < ids.size(); ++r) {
        const int id = ids[r];
        if (id < 0 || id >= rows) {
            throw DimensionError("gather_rows: id " + std::to_string(id) + " outside table of " +
                                 std::to_string(rows) + " rows");
        }
        for (int i = 0; i < width; ++i) {
            y.data[r * width + i] = table.data[static_cast<size_t>(id) * width + i];
        }
    }
    int out = g.add_node(std::move(y), {table_id}, "gather_rows");
    g.set_backward(out, [=](Graph& gg) {
        const std::vector<double>& go = gg.grad(out);
        std::vector<double>& gt = gg.grad(table_id);
        for (size_t r = 0; r < ids.size(); ++r) {
            for (int i = 0; i < width; ++i) {
                gt[static_cast<size_t>(ids[r]) * width + i] += go[r * width + i];
            }
        }
    });
    return out;
}

/// Stack equal-shape rank-3 tensors into one [B x c x H x W] batch.
inline int stack_batch(Graph& g, const std::vector<int>& item_ids) {
    if (item_ids.empty()) throw DimensionError("stack_batch: empty batch");
    const Tensor& first = g.value(item_ids[0]);
    detail::require_rank(first, 3, "stack_batch", "items");
    for (int id : item_ids) {
        if (g.value(id).shape != first.shape) {
            throw DimensionError("stack_batch: mismatched item shapes " + first.shape_str() +
                                 " vs " + g.value(id).shape_str());
        }
    }
    const size_t item = first.data.size();
    Tensor y = Tensor::zeros(
        {static_cast<int>(item_ids.size()), first.dim(0), first.dim(1), first.dim(2)});
    for (size_t bi = 0; bi < item_ids.size(); ++bi) {
        const Tensor& t = g.value(item_ids[bi]);
        std::copy(t.data.begin(), t.data.end(), y.data.begin() + bi * item);
    }
    int out = g.add_node(std::move(y), item_ids, "stack_batch");
    g.set_backward(out, [=](Graph& gg) {
        const std::vector<double>& go = gg.grad(out);
        for (size_t bi = 0; bi < item_ids.size(); ++bi) {
            std::vector<double>& gi = gg.grad(item_ids[bi]);
            for (size_t i = 0; i < item; ++i) gi[i] += go[bi * item + i];
        }
    });
    return out;
}

/// [B x c x H x W] -> [B x cHW], or rank-3 -> rank-1.
inline int flatten(Graph& g, int input_id) {
    const Tensor& x = g.value(input_id);
    Tensor y = x;
    if (x.rank() == 4) {
        y.shape = {x.dim(0), x.dim(1) * x.dim(2) * x.dim(3)};
    } else if (x.rank() == 3) {
        y.shape = {x.dim(0) * x.dim(1) * x.dim(2)};
    } else {
        throw DimensionError("flatten: input must have rank 3 or 4, got shape " + x.shape_str());
    }
    int out = g.add_node(std::move(y), {input_id}, "flatten");
    g.set_backward(out, [=](Graph& gg) {
        const std::vector<double>& go = gg.grad(out);
        std::vector<double>& gx = gg.grad(input_id);
        for (size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
    });
    return out;
}

/// Column-wise concatenation of two [B x m] tensors.
inline int concat_cols(Graph& g, int a_id, int b_id) {
    const Tensor& a = g.value(a_id);
    const Tensor& b = g.value(b_id);
    detail::require_rank(a, 2, "concat_cols", "left input");
    detail::require_rank(b, 2, "concat_cols", "right input");
    if (a.dim(0) != b.dim(0)) {
        throw DimensionError("concat_cols: batch axes disagree (" + std::to_string(a.dim(0)) +
                             " vs " + std::to_string(b.dim(0)) + ")");
    }
    const int batch = a.dim(0), ma = a.dim(1), mb = b.dim(1);
    Tensor y = Tensor::zeros({batch, ma + mb});
    for (int bi = 0; bi < batch; ++bi) {
        for (int i = 0; i < ma; ++i) y.at(bi, i) = a.at(bi, i);
        for (int i = 0; i < mb; ++i) y.at(bi, ma + i) = b.at(bi, i);
    }
    int out = g.add_node(std::move(y), {a_id, b_id}, "concat_cols");
    g.set_backward(out, [=](Graph& gg) {
        const std::vector<double>& go = gg.grad(out);
        std::vector<double>& ga = gg.grad(a_id);
        std::vector<double>& gb = gg.grad(b_id);
        const size_t stride = static_cast<size_t>(ma + mb);
        for (int bi = 0; bi < batch; ++bi) {
            for (int i = 0; i < ma; ++i) ga[static_cast<size_t>(bi) * ma + i] += go[bi * stride + i];
            for (int i = 0; i < mb; ++i) {
                gb[static_cast<size_t>(bi) * mb + i] += go[bi * stride + ma + i];
            }
        }
    });
    return out;
}

inline int sum_all(Graph& g, int input_id) {
    const Tensor& x = g.value(input_id);
    double acc = 0.0;
    for (double v : x.data) acc += v;
    int out = g.add_node(Tensor({1}, {acc}), {input_id}, "sum");
    g.set_backward(out, [=](Graph& gg) {
        const double go = gg.grad(out)[0];
        std::vector<double>& gx = gg.grad(input_id);
        for (double& v : gx) v += go;
    });
    return out;
}

inline int add_scalars(Graph& g, int a_id, int b_id) {
    const Tensor& a = g.value(a_id);
    const Tensor& b = g.value(b_id);
    if (a.numel() != 1 || b.numel() != 1) {
        throw DimensionError("add_scalars: both inputs must be scalars");
    }
    int out = g.add_node(Tensor({1}, {a.data[0] + b.data[0]}), {a_id, b_id}, "add");
    g.set_backward(out, [=](Graph& gg) {
        const double go = gg.grad(out)[0];
        gg.grad(a_id)[0] += go;
        gg.grad(b_id)[0] += go;
    });
    return out;
}

/// Mean binary cross-entropy over a batch of probabilities against 0/1
/// labels. Probabilities are clipped to [clip, 1-clip] before the log; the
/// gradient is zero where the clip binds.
inline int bce_loss(Graph& g, int probs_id, const std::vector<double>& labels, double clip) {
    const Tensor& p = g.value(probs_id);
    if (p.numel() != static_cast<long>(labels.size())) {
        throw DimensionError("bce_loss: " + std::to_string(p.numel()) + " probabilities vs " +
                             std::to_string(labels.size()) + " labels");
    }
    const size_t n = labels.size();
    const double inv_n = 1.0 / static_cast<double>(n);
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double pc = std::min(std::max(p.data[i], clip), 1.0 - clip);
        acc -= labels[i] * std::log(pc) + (1.0 - labels[i]) * std::log(1.0 - pc);
    }
    int out = g.add_node(Tensor({1}, {acc * inv_n}), {probs_id}, "bce_loss");
    g.set_backward(out, [=](Graph& gg) {
        const Tensor& pv = gg.value(probs_id);
        const double go = gg.grad(out)[0];
        std::vector<double>& gp = gg.grad(probs_id);
        for (size_t i = 0; i < n; ++i) {
            if (pv.data[i] <= clip || pv.data[i] >= 1.0 - clip) continue;
            gp[i] += go * (pv.data[i] - labels[i]) * inv_n / (pv.data[i] * (1.0 - pv.data[i]));
        }
    });
    return out;
}

}  // namespace m2s::ad
