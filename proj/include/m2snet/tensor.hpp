#pragma once

#include <cmath>
#include <cstddef>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "m2snet/errors.hpp"
#include "m2snet/rng.hpp"

namespace m2s::ad {

/// Dense row-major tensor of 64-bit reals with an optional gradient buffer
/// of identical shape. Value semantics; copying copies the data.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty, or exactly data.size() elements

    Tensor() = default;

    Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        if (numel_of(shape) != static_cast<long>(data.size())) {
            throw DimensionError("tensor: data length " + std::to_string(data.size()) +
                                 " does not match shape " + shape_string(shape));
        }
    }

    static long numel_of(const std::vector<int>& s) {
        long n = 1;
        for (int extent : s) {
            if (extent <= 0) {
                throw DimensionError("tensor: non-positive extent in shape " + shape_string(s));
            }
            n *= extent;
        }
        return n;
    }

    static Tensor zeros(std::vector<int> s) {
        long n = numel_of(s);
        return Tensor(std::move(s), std::vector<double>(static_cast<size_t>(n), 0.0));
    }

    static Tensor full(std::vector<int> s, double value) {
        long n = numel_of(s);
        return Tensor(std::move(s), std::vector<double>(static_cast<size_t>(n), value));
    }

    static Tensor gaussian(std::vector<int> s, Rng& rng, double mean = 0.0, double stddev = 1.0) {
        Tensor t = zeros(std::move(s));
        for (double& v : t.data) v = rng.gaussian(mean, stddev);
        return t;
    }

    long numel() const { return static_cast<long>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    int dim(int axis) const { return shape[static_cast<size_t>(axis)]; }

    double& operator[](size_t i) { return data[i]; }
    double operator[](size_t i) const { return data[i]; }

    double& at(int i, int j) { return data[static_cast<size_t>(i) * shape[1] + j]; }
    double at(int i, int j) const { return data[static_cast<size_t>(i) * shape[1] + j]; }
    double& at(int i, int j, int k) {
        return data[(static_cast<size_t>(i) * shape[1] + j) * shape[2] + k];
    }
    double at(int i, int j, int k) const {
        return data[(static_cast<size_t>(i) * shape[1] + j) * shape[2] + k];
    }
    double& at(int i, int j, int k, int l) {
        return data[((static_cast<size_t>(i) * shape[1] + j) * shape[2] + k) * shape[3] + l];
    }
    double at(int i, int j, int k, int l) const {
        return data[((static_cast<size_t>(i) * shape[1] + j) * shape[2] + k) * shape[3] + l];
    }

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }

    void zero_grad() {
        if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
    }

    bool all_finite() const {
        for (double v : data) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    bool grad_finite() const {
        for (double v : grad) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    static std::string shape_string(const std::vector<int>& s) {
        std::ostringstream out;
        out << "[";
        for (size_t i = 0; i < s.size(); ++i) out << (i ? "x" : "") << s[i];
        out << "]";
        return out.str();
    }

    std::string shape_str() const { return shape_string(shape); }
};

}  // namespace m2s::ad
