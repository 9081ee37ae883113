#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "vmct/errors.hpp"

namespace vmct {

// Rank-4 activation tensor, dims (n, c, h, w), values row-major in that
// order. grad is either empty or the same length as values.
template <typename T>
struct Tensor4T {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<T> values;
    std::vector<T> grad;

    Tensor4T() = default;
    Tensor4T(int n_, int c_, int h_, int w_, T fill = T(0))
        : n(n_), c(c_), h(h_), w(w_), values(static_cast<std::size_t>(n_) * c_ * h_ * w_, fill) {
        if (n_ < 0 || c_ < 0 || h_ < 0 || w_ < 0) throw ShapeError("Tensor4: negative dim");
    }

    std::size_t size() const { return values.size(); }
    std::size_t plane() const { return static_cast<std::size_t>(h) * w; }

    T& at(int in, int ic, int ih, int iw) {
        return values[((static_cast<std::size_t>(in) * c + ic) * h + ih) * w + iw];
    }
    T at(int in, int ic, int ih, int iw) const {
        return values[((static_cast<std::size_t>(in) * c + ic) * h + ih) * w + iw];
    }

    T* channel(int in, int ic) { return values.data() + (static_cast<std::size_t>(in) * c + ic) * plane(); }
    const T* channel(int in, int ic) const {
        return values.data() + (static_cast<std::size_t>(in) * c + ic) * plane();
    }

    bool same_shape(const Tensor4T& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }

    void ensure_grad() {
        if (grad.size() != values.size()) grad.assign(values.size(), T(0));
    }

    bool all_finite() const {
        for (const T v : values)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }
};

// Named trainable array with gradient accumulator and Adam state. Gradient
// and optimizer slots are allocated lazily on first use.
template <typename T>
struct ParamArrayT {
    std::string name;
    std::vector<int> dims;
    std::vector<T> values;
    std::vector<T> grad;
    std::vector<T> adam_m;
    std::vector<T> adam_v;

    ParamArrayT() = default;
    ParamArrayT(std::string name_, std::vector<int> dims_) : name(std::move(name_)), dims(std::move(dims_)) {
        if (name.empty()) throw ArgumentError("ParamArray: empty name");
        std::size_t total = 1;
        for (int d : dims) {
            if (d <= 0) throw ShapeError("ParamArray " + name + ": non-positive dim");
            total *= static_cast<std::size_t>(d);
        }
        values.assign(total, T(0));
    }

    std::size_t size() const { return values.size(); }
    int dim(std::size_t i) const { return dims.at(i); }

    void ensure_grad() {
        if (grad.size() != values.size()) grad.assign(values.size(), T(0));
    }
    void zero_grad() {
        if (!grad.empty()) std::fill(grad.begin(), grad.end(), T(0));
    }
};

// One vector of length d per batch item (GAP outputs, MLP activations,
// priors, PCVs). Row-major (n, d).
template <typename T>
struct BatchVecT {
    int n = 0, d = 0;
    std::vector<T> values;

    BatchVecT() = default;
    BatchVecT(int n_, int d_, T fill = T(0))
        : n(n_), d(d_), values(static_cast<std::size_t>(n_) * d_, fill) {}

    T* row(int i) { return values.data() + static_cast<std::size_t>(i) * d; }
    const T* row(int i) const { return values.data() + static_cast<std::size_t>(i) * d; }
    T& at(int i, int j) { return values[static_cast<std::size_t>(i) * d + j]; }
    T at(int i, int j) const { return values[static_cast<std::size_t>(i) * d + j]; }
};

using Tensor4 = Tensor4T<float>;
using ParamArray = ParamArrayT<float>;
using BatchVec = BatchVecT<float>;

}  // namespace vmct
