#pragma once

// Differentiable primitives. Every op comes as forward plus an explicit
// backward that accumulates into ParamArray::grad and returns the input
// gradient. All loops run in a fixed order, so results are bit-identical
// run to run; reductions accumulate in double.
//
// 3x3/1x1 stride-1 convolutions are lowered to one GEMM per kernel tap on a
// zero-padded per-item buffer instead of im2col: the tall-skinny im2col
// panels run at a fraction of peak on this OpenBLAS build, the per-tap
// square-ish GEMMs do not.

#include <algorithm>
#include <cstring>
#include <vector>

#include "vmct/blas.hpp"
#include "vmct/errors.hpp"
#include "vmct/tensor.hpp"

namespace vmct {

namespace detail {

// Padded per-item plane set: c channels of (h+2p)x(w+2p), each followed by
// `slack` zero elements so shifted flat views never read or write a
// neighbouring channel's data.
template <typename T>
struct PadPlanes {
    int c = 0, hp = 0, wp = 0, slack = 0;
    std::vector<T> buf;

    void reset(int c_, int hp_, int wp_, int slack_) {
        c = c_;
        hp = hp_;
        wp = wp_;
        slack = slack_;
        buf.assign(static_cast<std::size_t>(c) * stride() , T(0));
    }
    std::size_t stride() const { return static_cast<std::size_t>(hp) * wp + slack; }
    T* plane(int ci) { return buf.data() + static_cast<std::size_t>(ci) * stride(); }
    const T* plane(int ci) const { return buf.data() + static_cast<std::size_t>(ci) * stride(); }
};

template <typename T>
void pack_tap_weights(const ParamArrayT<T>& w, int c_out, int c_in, int k, std::vector<T>& taps) {
    // taps[(ky*k+kx)] is a row-major (c_out x c_in) matrix.
    taps.assign(static_cast<std::size_t>(k) * k * c_out * c_in, T(0));
    for (int co = 0; co < c_out; ++co)
        for (int ci = 0; ci < c_in; ++ci)
            for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx)
                    taps[(static_cast<std::size_t>(ky) * k + kx) * c_out * c_in +
                         static_cast<std::size_t>(co) * c_in + ci] =
                        w.values[((static_cast<std::size_t>(co) * c_in + ci) * k + ky) * k + kx];
}

}  // namespace detail

// ---------------------------------------------------------------------------
// conv2d
// ---------------------------------------------------------------------------

template <typename T>
void conv2d_check(const Tensor4T<T>& x, const ParamArrayT<T>& w, const ParamArrayT<T>& b,
                  int stride, int pad) {
    if (w.dims.size() != 4) throw ShapeError("conv2d: weight must be rank 4");
    if (w.dim(2) != w.dim(3)) throw ShapeError("conv2d: kernel must be square");
    if (x.c != w.dim(1))
        throw ShapeError("conv2d: input channels " + std::to_string(x.c) + " != weight c_in " +
                         std::to_string(w.dim(1)));
    if (b.dims.size() != 1 || b.dim(0) != w.dim(0)) throw ShapeError("conv2d: bias/c_out mismatch");
    if (stride <= 0) throw ArgumentError("conv2d: stride must be positive");
    if (pad < 0) throw ArgumentError("conv2d: negative padding");
    const int k = w.dim(2);
    if (x.h + 2 * pad < k || x.w + 2 * pad < k) throw ShapeError("conv2d: kernel larger than input");
}

template <typename T>
Tensor4T<T> conv2d(const Tensor4T<T>& x, const ParamArrayT<T>& w, const ParamArrayT<T>& b,
                   int stride, int pad) {
    conv2d_check(x, w, b, stride, pad);
    const int c_out = w.dim(0), c_in = w.dim(1), k = w.dim(2);
    const int ho = (x.h + 2 * pad - k) / stride + 1;
    const int wo = (x.w + 2 * pad - k) / stride + 1;
    Tensor4T<T> y(x.n, c_out, ho, wo);

    if (stride == 1) {
        const int hp = x.h + 2 * pad, wp = x.w + 2 * pad, slack = k - 1;
        const std::size_t npix = static_cast<std::size_t>(ho) * wp;
        std::vector<T> taps;
        detail::pack_tap_weights(w, c_out, c_in, k, taps);
        detail::PadPlanes<T> xp;
        std::vector<T> cbuf;
        for (int in = 0; in < x.n; ++in) {
            xp.reset(c_in, hp, wp, slack);
            for (int ci = 0; ci < c_in; ++ci) {
                T* dst = xp.plane(ci) + static_cast<std::size_t>(pad) * wp + pad;
                const T* src = x.channel(in, ci);
                for (int r = 0; r < x.h; ++r)
                    std::memcpy(dst + static_cast<std::size_t>(r) * wp,
                                src + static_cast<std::size_t>(r) * x.w, sizeof(T) * x.w);
            }
            cbuf.assign(static_cast<std::size_t>(c_out) * npix, T(0));
            for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx) {
                    const T* a = taps.data() + (static_cast<std::size_t>(ky) * k + kx) * c_out * c_in;
                    const T* bm = xp.plane(0) + static_cast<std::size_t>(ky) * wp + kx;
                    gemm(false, false, c_out, static_cast<int>(npix), c_in, T(1), a, c_in, bm,
                         static_cast<int>(xp.stride()), (ky == 0 && kx == 0) ? T(0) : T(1),
                         cbuf.data(), static_cast<int>(npix));
                }
            for (int co = 0; co < c_out; ++co) {
                const T bias = b.values[co];
                T* dst = y.channel(in, co);
                const T* src = cbuf.data() + static_cast<std::size_t>(co) * npix;
                for (int r = 0; r < ho; ++r)
                    for (int c = 0; c < wo; ++c)
                        dst[static_cast<std::size_t>(r) * wo + c] =
                            src[static_cast<std::size_t>(r) * wp + c] + bias;
            }
        }
        return y;
    }

    // Generic strided path (not used by the network; kept for contract coverage).
    for (int in = 0; in < x.n; ++in)
        for (int co = 0; co < c_out; ++co)
            for (int r = 0; r < ho; ++r)
                for (int c = 0; c < wo; ++c) {
                    double acc = static_cast<double>(b.values[co]);
                    for (int ci = 0; ci < c_in; ++ci)
                        for (int ky = 0; ky < k; ++ky) {
                            const int ih = r * stride + ky - pad;
                            if (ih < 0 || ih >= x.h) continue;
                            for (int kx = 0; kx < k; ++kx) {
                                const int iw = c * stride + kx - pad;
                                if (iw < 0 || iw >= x.w) continue;
                                acc += static_cast<double>(x.at(in, ci, ih, iw)) *
                                       w.values[((static_cast<std::size_t>(co) * c_in + ci) * k + ky) * k + kx];
                            }
                        }
                    y.at(in, co, r, c) = static_cast<T>(acc);
                }
    return y;
}

// Accumulates into w.grad / b.grad, returns dL/dx.
template <typename T>
Tensor4T<T> conv2d_backward(const Tensor4T<T>& grad_out, const Tensor4T<T>& x,
                            ParamArrayT<T>& w, ParamArrayT<T>& b, int stride, int pad) {
    conv2d_check(x, w, b, stride, pad);
    const int c_out = w.dim(0), c_in = w.dim(1), k = w.dim(2);
    const int ho = (x.h + 2 * pad - k) / stride + 1;
    const int wo = (x.w + 2 * pad - k) / stride + 1;
    if (grad_out.n != x.n || grad_out.c != c_out || grad_out.h != ho || grad_out.w != wo)
        throw ShapeError("conv2d_backward: grad_out shape mismatch");
    w.ensure_grad();
    b.ensure_grad();
    Tensor4T<T> dx(x.n, x.c, x.h, x.w);

    // Bias: plain sum over the dense upstream gradient.
    for (int in = 0; in < x.n; ++in)
        for (int co = 0; co < c_out; ++co) {
            double acc = 0.0;
            const T* g = grad_out.channel(in, co);
            for (std::size_t i = 0; i < grad_out.plane(); ++i) acc += static_cast<double>(g[i]);
            b.grad[co] += static_cast<T>(acc);
        }

    if (stride == 1) {
        const int hp = x.h + 2 * pad, wp = x.w + 2 * pad, slack = k - 1;
        const std::size_t npix = static_cast<std::size_t>(ho) * wp;
        std::vector<T> taps;
        detail::pack_tap_weights(w, c_out, c_in, k, taps);
        std::vector<T> dtaps(taps.size(), T(0));
        detail::PadPlanes<T> xp, dxp;
        std::vector<T> gbuf;
        for (int in = 0; in < x.n; ++in) {
            xp.reset(c_in, hp, wp, slack);
            for (int ci = 0; ci < c_in; ++ci) {
                T* dst = xp.plane(ci) + static_cast<std::size_t>(pad) * wp + pad;
                const T* src = x.channel(in, ci);
                for (int r = 0; r < x.h; ++r)
                    std::memcpy(dst + static_cast<std::size_t>(r) * wp,
                                src + static_cast<std::size_t>(r) * x.w, sizeof(T) * x.w);
            }
            // Upstream gradient in padded-row layout; junk columns stay zero.
            gbuf.assign(static_cast<std::size_t>(c_out) * npix, T(0));
            for (int co = 0; co < c_out; ++co) {
                const T* src = grad_out.channel(in, co);
                T* dst = gbuf.data() + static_cast<std::size_t>(co) * npix;
                for (int r = 0; r < ho; ++r)
                    std::memcpy(dst + static_cast<std::size_t>(r) * wp,
                                src + static_cast<std::size_t>(r) * wo, sizeof(T) * wo);
            }
            dxp.reset(c_in, hp, wp, slack);
            for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx) {
                    const std::size_t tap = static_cast<std::size_t>(ky) * k + kx;
                    const std::size_t off = static_cast<std::size_t>(ky) * wp + kx;
                    // dW_tap += g . x_shifted^T
                    gemm(false, true, c_out, c_in, static_cast<int>(npix), T(1), gbuf.data(),
                         static_cast<int>(npix), xp.plane(0) + off, static_cast<int>(xp.stride()),
                         T(1), dtaps.data() + tap * c_out * c_in, c_in);
                    // dx_shifted += W_tap^T . g
                    gemm(true, false, c_in, static_cast<int>(npix), c_out, T(1),
                         taps.data() + tap * c_out * c_in, c_in, gbuf.data(),
                         static_cast<int>(npix), T(1), dxp.plane(0) + off,
                         static_cast<int>(dxp.stride()));
                }
            for (int ci = 0; ci < c_in; ++ci) {
                const T* src = dxp.plane(ci) + static_cast<std::size_t>(pad) * wp + pad;
                T* dst = dx.channel(in, ci);
                for (int r = 0; r < x.h; ++r)
                    for (int c = 0; c < x.w; ++c)
                        dst[static_cast<std::size_t>(r) * x.w + c] +=
                            src[static_cast<std::size_t>(r) * wp + c];
            }
        }
        for (int co = 0; co < c_out; ++co)
            for (int ci = 0; ci < c_in; ++ci)
                for (int ky = 0; ky < k; ++ky)
                    for (int kx = 0; kx < k; ++kx)
                        w.grad[((static_cast<std::size_t>(co) * c_in + ci) * k + ky) * k + kx] +=
                            dtaps[(static_cast<std::size_t>(ky) * k + kx) * c_out * c_in +
                                  static_cast<std::size_t>(co) * c_in + ci];
        return dx;
    }

    for (int in = 0; in < x.n; ++in)
        for (int co = 0; co < c_out; ++co)
            for (int r = 0; r < ho; ++r)
                for (int c = 0; c < wo; ++c) {
                    const T g = grad_out.at(in, co, r, c);
                    if (g == T(0)) continue;
                    for (int ci = 0; ci < c_in; ++ci)
                        for (int ky = 0; ky < k; ++ky) {
                            const int ih = r * stride + ky - pad;
                            if (ih < 0 || ih >= x.h) continue;
                            for (int kx = 0; kx < k; ++kx) {
                                const int iw = c * stride + kx - pad;
                                if (iw < 0 || iw >= x.w) continue;
                                const std::size_t wi =
                                    ((static_cast<std::size_t>(co) * c_in + ci) * k + ky) * k + kx;
                                w.grad[wi] += g * x.at(in, ci, ih, iw);
                                dx.at(in, ci, ih, iw) += g * w.values[wi];
                            }
                        }
                }
    return dx;
}

// ---------------------------------------------------------------------------
// conv_transpose2d (kernel 2x2, stride 2, no padding; weight [c_in,c_out,2,2])
// ---------------------------------------------------------------------------

template <typename T>
void conv_transpose2d_check(const Tensor4T<T>& x, const ParamArrayT<T>& w, const ParamArrayT<T>& b) {
    if (w.dims.size() != 4 || w.dim(2) != 2 || w.dim(3) != 2)
        throw ShapeError("conv_transpose2d: weight must be [c_in,c_out,2,2]");
    if (x.c != w.dim(0)) throw ShapeError("conv_transpose2d: channel mismatch");
    if (b.dims.size() != 1 || b.dim(0) != w.dim(1))
        throw ShapeError("conv_transpose2d: bias/c_out mismatch");
}

template <typename T>
Tensor4T<T> conv_transpose2d(const Tensor4T<T>& x, const ParamArrayT<T>& w, const ParamArrayT<T>& b) {
    conv_transpose2d_check(x, w, b);
    const int c_in = w.dim(0), c_out = w.dim(1);
    Tensor4T<T> y(x.n, c_out, 2 * x.h, 2 * x.w);
    const std::size_t npix = x.plane();

    // taps[t][co][ci]
    std::vector<T> taps(static_cast<std::size_t>(4) * c_out * c_in);
    for (int ci = 0; ci < c_in; ++ci)
        for (int co = 0; co < c_out; ++co)
            for (int t = 0; t < 4; ++t)
                taps[static_cast<std::size_t>(t) * c_out * c_in + static_cast<std::size_t>(co) * c_in + ci] =
                    w.values[(static_cast<std::size_t>(ci) * c_out + co) * 4 + t];

    std::vector<T> obuf(static_cast<std::size_t>(c_out) * npix);
    for (int in = 0; in < x.n; ++in) {
        for (int t = 0; t < 4; ++t) {
            const int ky = t / 2, kx = t % 2;
            gemm(false, false, c_out, static_cast<int>(npix), c_in, T(1),
                 taps.data() + static_cast<std::size_t>(t) * c_out * c_in, c_in, x.channel(in, 0),
                 static_cast<int>(npix), T(0), obuf.data(), static_cast<int>(npix));
            for (int co = 0; co < c_out; ++co) {
                const T* src = obuf.data() + static_cast<std::size_t>(co) * npix;
                T* dst = y.channel(in, co);
                for (int r = 0; r < x.h; ++r)
                    for (int c = 0; c < x.w; ++c)
                        dst[(static_cast<std::size_t>(2 * r + ky)) * y.w + 2 * c + kx] =
                            src[static_cast<std::size_t>(r) * x.w + c];
            }
        }
        for (int co = 0; co < c_out; ++co) {
            T* dst = y.channel(in, co);
            const T bias = b.values[co];
            for (std::size_t i = 0; i < y.plane(); ++i) dst[i] += bias;
        }
    }
    return y;
}

template <typename T>
Tensor4T<T> conv_transpose2d_backward(const Tensor4T<T>& grad_out, const Tensor4T<T>& x,
                                      ParamArrayT<T>& w, ParamArrayT<T>& b) {
    conv_transpose2d_check(x, w, b);
    const int c_in = w.dim(0), c_out = w.dim(1);
    if (grad_out.n != x.n || grad_out.c != c_out || grad_out.h != 2 * x.h || grad_out.w != 2 * x.w)
        throw ShapeError("conv_transpose2d_backward: grad_out shape mismatch");
    w.ensure_grad();
    b.ensure_grad();
    Tensor4T<T> dx(x.n, x.c, x.h, x.w);
    const std::size_t npix = x.plane();

    std::vector<T> taps(static_cast<std::size_t>(4) * c_in * c_out);  // taps[t][ci][co]
    for (int ci = 0; ci < c_in; ++ci)
        for (int co = 0; co < c_out; ++co)
            for (int t = 0; t < 4; ++t)
                taps[static_cast<std::size_t>(t) * c_in * c_out + static_cast<std::size_t>(ci) * c_out + co] =
                    w.values[(static_cast<std::size_t>(ci) * c_out + co) * 4 + t];
    std::vector<T> dtaps(taps.size(), T(0));

    std::vector<T> gbuf(static_cast<std::size_t>(c_out) * npix);
    for (int in = 0; in < x.n; ++in) {
        for (int co = 0; co < c_out; ++co) {
            double acc = 0.0;
            const T* g = grad_out.channel(in, co);
            for (std::size_t i = 0; i < grad_out.plane(); ++i) acc += static_cast<double>(g[i]);
            b.grad[co] += static_cast<T>(acc);
        }
        for (int t = 0; t < 4; ++t) {
            const int ky = t / 2, kx = t % 2;
            for (int co = 0; co < c_out; ++co) {
                const T* src = grad_out.channel(in, co);
                T* dst = gbuf.data() + static_cast<std::size_t>(co) * npix;
                for (int r = 0; r < x.h; ++r)
                    for (int c = 0; c < x.w; ++c)
                        dst[static_cast<std::size_t>(r) * x.w + c] =
                            src[(static_cast<std::size_t>(2 * r + ky)) * grad_out.w + 2 * c + kx];
            }
            // dx += W_t . g_t
            gemm(false, false, c_in, static_cast<int>(npix), c_out, T(1),
                 taps.data() + static_cast<std::size_t>(t) * c_in * c_out, c_out, gbuf.data(),
                 static_cast<int>(npix), T(1), dx.channel(in, 0), static_cast<int>(npix));
            // dW_t += x . g_t^T
            gemm(false, true, c_in, c_out, static_cast<int>(npix), T(1), x.channel(in, 0),
                 static_cast<int>(npix), gbuf.data(), static_cast<int>(npix), T(1),
                 dtaps.data() + static_cast<std::size_t>(t) * c_in * c_out, c_out);
        }
    }
    for (int ci = 0; ci < c_in; ++ci)
        for (int co = 0; co < c_out; ++co)
            for (int t = 0; t < 4; ++t)
                w.grad[(static_cast<std::size_t>(ci) * c_out + co) * 4 + t] +=
                    dtaps[static_cast<std::size_t>(t) * c_in * c_out + static_cast<std::size_t>(ci) * c_out + co];
    return dx;
}

// ---------------------------------------------------------------------------
// batch normalization
// ---------------------------------------------------------------------------

template <typename T>
struct BnStateT {
    std::vector<T> running_mean;  // initialized to 0
    std::vector<T> running_var;   // initialized to 1

    explicit BnStateT(int channels = 0)
        : running_mean(channels, T(0)), running_var(channels, T(1)) {}
};

template <typename T>
struct BnCacheT {
    Tensor4T<T> xhat;
    std::vector<T> inv_std;  // per channel
    bool train = true;       // whether batch statistics were part of the graph
};

enum class BnMode { Train, Eval };

inline constexpr double kBnEps = 1e-5;
inline constexpr double kBnMomentum = 0.1;

template <typename T>
void batchnorm2d_check(const Tensor4T<T>& x, const ParamArrayT<T>& gamma, const ParamArrayT<T>& beta,
                       const BnStateT<T>& state) {
    if (gamma.size() != static_cast<std::size_t>(x.c) || beta.size() != static_cast<std::size_t>(x.c))
        throw ShapeError("batchnorm2d: gamma/beta length != channels");
    if (state.running_mean.size() != static_cast<std::size_t>(x.c))
        throw ShapeError("batchnorm2d: state size mismatch");
}

// In train mode: normalizes with biased batch statistics, updates running
// stats (momentum 0.1), and fills `cache` for the backward pass when given.
// Running stats are stored biased as well, so a long run of identical
// batches makes eval converge to train outputs exactly.
template <typename T>
Tensor4T<T> batchnorm2d(const Tensor4T<T>& x, const ParamArrayT<T>& gamma, const ParamArrayT<T>& beta,
                        BnStateT<T>& state, BnMode mode, BnCacheT<T>* cache = nullptr) {
    batchnorm2d_check(x, gamma, beta, state);
    Tensor4T<T> y(x.n, x.c, x.h, x.w);
    const std::size_t plane = x.plane();
    const std::size_t count = static_cast<std::size_t>(x.n) * plane;

    if (mode == BnMode::Train) {
        if (count < 2) throw ArgumentError("batchnorm2d: train mode needs n*h*w >= 2");
        if (cache != nullptr) {
            cache->xhat = Tensor4T<T>(x.n, x.c, x.h, x.w);
            cache->inv_std.assign(x.c, T(0));
            cache->train = true;
        }
        for (int ch = 0; ch < x.c; ++ch) {
            double sum = 0.0, sumsq = 0.0;
            for (int in = 0; in < x.n; ++in) {
                const T* p = x.channel(in, ch);
                for (std::size_t i = 0; i < plane; ++i) {
                    const double v = static_cast<double>(p[i]);
                    sum += v;
                    sumsq += v * v;
                }
            }
            const double mean = sum / static_cast<double>(count);
            double var = sumsq / static_cast<double>(count) - mean * mean;
            if (var < 0.0) var = 0.0;
            const double inv = 1.0 / std::sqrt(var + kBnEps);
            const double g = static_cast<double>(gamma.values[ch]);
            const double bt = static_cast<double>(beta.values[ch]);
            for (int in = 0; in < x.n; ++in) {
                const T* p = x.channel(in, ch);
                T* q = y.channel(in, ch);
                T* xh = cache != nullptr ? cache->xhat.channel(in, ch) : nullptr;
                for (std::size_t i = 0; i < plane; ++i) {
                    const double hatv = (static_cast<double>(p[i]) - mean) * inv;
                    if (xh != nullptr) xh[i] = static_cast<T>(hatv);
                    q[i] = static_cast<T>(g * hatv + bt);
                }
            }
            if (cache != nullptr) cache->inv_std[ch] = static_cast<T>(inv);
            state.running_mean[ch] =
                static_cast<T>((1.0 - kBnMomentum) * static_cast<double>(state.running_mean[ch]) +
                               kBnMomentum * mean);
            state.running_var[ch] =
                static_cast<T>((1.0 - kBnMomentum) * static_cast<double>(state.running_var[ch]) +
                               kBnMomentum * var);
        }
        return y;
    }

    if (cache != nullptr) {
        cache->xhat = Tensor4T<T>(x.n, x.c, x.h, x.w);
        cache->inv_std.assign(x.c, T(0));
        cache->train = false;
    }
    for (int ch = 0; ch < x.c; ++ch) {
        const double mean = static_cast<double>(state.running_mean[ch]);
        const double inv = 1.0 / std::sqrt(static_cast<double>(state.running_var[ch]) + kBnEps);
        const double g = static_cast<double>(gamma.values[ch]) * inv;
        const double bt = static_cast<double>(beta.values[ch]) - g * mean;
        if (cache != nullptr) cache->inv_std[ch] = static_cast<T>(inv);
        for (int in = 0; in < x.n; ++in) {
            const T* p = x.channel(in, ch);
            T* q = y.channel(in, ch);
            T* xh = cache != nullptr ? cache->xhat.channel(in, ch) : nullptr;
            for (std::size_t i = 0; i < plane; ++i) {
                if (xh != nullptr) xh[i] = static_cast<T>((static_cast<double>(p[i]) - mean) * inv);
                q[i] = static_cast<T>(g * static_cast<double>(p[i]) + bt);
            }
        }
    }
    return y;
}

// Backward through a cached batchnorm2d call. In train mode the batch
// statistics are part of the graph; in eval mode the running stats are
// constants and the map is a per-channel affine transform.
template <typename T>
Tensor4T<T> batchnorm2d_backward(const Tensor4T<T>& grad_out, const BnCacheT<T>& cache,
                                 ParamArrayT<T>& gamma, ParamArrayT<T>& beta) {
    const Tensor4T<T>& xhat = cache.xhat;
    if (!grad_out.same_shape(xhat)) throw ShapeError("batchnorm2d_backward: shape mismatch");
    gamma.ensure_grad();
    beta.ensure_grad();
    Tensor4T<T> dx(xhat.n, xhat.c, xhat.h, xhat.w);
    const std::size_t plane = xhat.plane();
    const double count = static_cast<double>(xhat.n) * static_cast<double>(plane);

    if (!cache.train) {
        for (int ch = 0; ch < xhat.c; ++ch) {
            double sum_dy = 0.0, sum_dy_xhat = 0.0;
            const double k1 = static_cast<double>(gamma.values[ch]) * static_cast<double>(cache.inv_std[ch]);
            for (int in = 0; in < xhat.n; ++in) {
                const T* g = grad_out.channel(in, ch);
                const T* xh = xhat.channel(in, ch);
                T* d = dx.channel(in, ch);
                for (std::size_t i = 0; i < plane; ++i) {
                    sum_dy += static_cast<double>(g[i]);
                    sum_dy_xhat += static_cast<double>(g[i]) * static_cast<double>(xh[i]);
                    d[i] = static_cast<T>(k1 * static_cast<double>(g[i]));
                }
            }
            beta.grad[ch] += static_cast<T>(sum_dy);
            gamma.grad[ch] += static_cast<T>(sum_dy_xhat);
        }
        return dx;
    }

    for (int ch = 0; ch < xhat.c; ++ch) {
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (int in = 0; in < xhat.n; ++in) {
            const T* g = grad_out.channel(in, ch);
            const T* xh = xhat.channel(in, ch);
            for (std::size_t i = 0; i < plane; ++i) {
                sum_dy += static_cast<double>(g[i]);
                sum_dy_xhat += static_cast<double>(g[i]) * static_cast<double>(xh[i]);
            }
        }
        beta.grad[ch] += static_cast<T>(sum_dy);
        gamma.grad[ch] += static_cast<T>(sum_dy_xhat);
        const double gm = static_cast<double>(gamma.values[ch]);
        const double inv = static_cast<double>(cache.inv_std[ch]);
        const double k1 = gm * inv;
        const double mean_dy = sum_dy / count;
        const double mean_dy_xhat = sum_dy_xhat / count;
        for (int in = 0; in < xhat.n; ++in) {
            const T* g = grad_out.channel(in, ch);
            const T* xh = xhat.channel(in, ch);
            T* d = dx.channel(in, ch);
            for (std::size_t i = 0; i < plane; ++i)
                d[i] = static_cast<T>(k1 * (static_cast<double>(g[i]) - mean_dy -
                                            static_cast<double>(xh[i]) * mean_dy_xhat));
        }
    }
    return dx;
}

// ---------------------------------------------------------------------------
// relu
// ---------------------------------------------------------------------------

template <typename T>
Tensor4T<T> relu(const Tensor4T<T>& x) {
    Tensor4T<T> y(x.n, x.c, x.h, x.w);
    for (std::size_t i = 0; i < x.size(); ++i) y.values[i] = x.values[i] > T(0) ? x.values[i] : T(0);
    return y;
}

// Uses the forward output: y > 0 iff x > 0, and the subgradient at 0 is 0.
template <typename T>
Tensor4T<T> relu_backward(const Tensor4T<T>& grad_out, const Tensor4T<T>& y) {
    if (!grad_out.same_shape(y)) throw ShapeError("relu_backward: shape mismatch");
    Tensor4T<T> dx(y.n, y.c, y.h, y.w);
    for (std::size_t i = 0; i < y.size(); ++i)
        dx.values[i] = y.values[i] > T(0) ? grad_out.values[i] : T(0);
    return dx;
}

template <typename T>
void relu_inplace(BatchVecT<T>& v) {
    for (T& x : v.values)
        if (x < T(0)) x = T(0);
}

template <typename T>
BatchVecT<T> vec_relu(const BatchVecT<T>& x) {
    BatchVecT<T> y(x.n, x.d);
    for (std::size_t i = 0; i < x.values.size(); ++i)
        y.values[i] = x.values[i] > T(0) ? x.values[i] : T(0);
    return y;
}

template <typename T>
BatchVecT<T> vec_relu_backward(const BatchVecT<T>& grad_out, const BatchVecT<T>& y) {
    BatchVecT<T> dx(y.n, y.d);
    for (std::size_t i = 0; i < y.values.size(); ++i)
        dx.values[i] = y.values[i] > T(0) ? grad_out.values[i] : T(0);
    return dx;
}

// ---------------------------------------------------------------------------
// maxpool2d (2x2, stride 2)
// ---------------------------------------------------------------------------

struct PoolCache {
    std::vector<std::uint32_t> argmax;  // flat index into the input plane, per output element
};

template <typename T>
Tensor4T<T> maxpool2d(const Tensor4T<T>& x, PoolCache* cache = nullptr) {
    if (x.h % 2 != 0 || x.w % 2 != 0) throw ShapeError("maxpool2d: h and w must be even");
    Tensor4T<T> y(x.n, x.c, x.h / 2, x.w / 2);
    if (cache != nullptr) cache->argmax.assign(y.size(), 0);
    std::size_t oi = 0;
    for (int in = 0; in < x.n; ++in)
        for (int ch = 0; ch < x.c; ++ch) {
            const T* p = x.channel(in, ch);
            T* q = y.channel(in, ch);
            for (int r = 0; r < y.h; ++r)
                for (int c = 0; c < y.w; ++c, ++oi) {
                    // Ties resolve to the first index in row-major scan order.
                    std::uint32_t best = static_cast<std::uint32_t>(2 * r * x.w + 2 * c);
                    T bv = p[best];
                    const std::uint32_t idx[3] = {static_cast<std::uint32_t>(2 * r * x.w + 2 * c + 1),
                                                  static_cast<std::uint32_t>((2 * r + 1) * x.w + 2 * c),
                                                  static_cast<std::uint32_t>((2 * r + 1) * x.w + 2 * c + 1)};
                    for (std::uint32_t i : idx)
                        if (p[i] > bv) {
                            bv = p[i];
                            best = i;
                        }
                    q[static_cast<std::size_t>(r) * y.w + c] = bv;
                    if (cache != nullptr) cache->argmax[oi] = best;
                }
        }
    return y;
}

template <typename T>
Tensor4T<T> maxpool2d_backward(const Tensor4T<T>& grad_out, const PoolCache& cache, int in_h, int in_w) {
    if (cache.argmax.size() != grad_out.size()) throw ShapeError("maxpool2d_backward: cache mismatch");
    Tensor4T<T> dx(grad_out.n, grad_out.c, in_h, in_w);
    std::size_t oi = 0;
    for (int in = 0; in < grad_out.n; ++in)
        for (int ch = 0; ch < grad_out.c; ++ch) {
            const T* g = grad_out.channel(in, ch);
            T* d = dx.channel(in, ch);
            for (std::size_t i = 0; i < grad_out.plane(); ++i, ++oi) d[cache.argmax[oi]] += g[i];
        }
    return dx;
}

// ---------------------------------------------------------------------------
// global average pooling
// ---------------------------------------------------------------------------

template <typename T>
BatchVecT<T> global_avg_pool(const Tensor4T<T>& x) {
    if (x.plane() == 0) throw ShapeError("global_avg_pool: empty spatial dims");
    BatchVecT<T> y(x.n, x.c);
    for (int in = 0; in < x.n; ++in)
        for (int ch = 0; ch < x.c; ++ch) {
            double acc = 0.0;
            const T* p = x.channel(in, ch);
            for (std::size_t i = 0; i < x.plane(); ++i) acc += static_cast<double>(p[i]);
            y.at(in, ch) = static_cast<T>(acc / static_cast<double>(x.plane()));
        }
    return y;
}

template <typename T>
Tensor4T<T> global_avg_pool_backward(const BatchVecT<T>& grad_out, int h, int w) {
    Tensor4T<T> dx(grad_out.n, grad_out.d, h, w);
    const T scale = T(1) / static_cast<T>(static_cast<std::size_t>(h) * w);
    for (int in = 0; in < grad_out.n; ++in)
        for (int ch = 0; ch < grad_out.d; ++ch) {
            const T g = grad_out.at(in, ch) * scale;
            T* d = dx.channel(in, ch);
            for (std::size_t i = 0; i < dx.plane(); ++i) d[i] = g;
        }
    return dx;
}

// ---------------------------------------------------------------------------
// linear
// ---------------------------------------------------------------------------

template <typename T>
void linear_check(const BatchVecT<T>& x, const ParamArrayT<T>& w, const ParamArrayT<T>& b) {
    if (w.dims.size() != 2) throw ShapeError("linear: weight must be rank 2");
    if (x.d != w.dim(1)) throw ShapeError("linear: input dim " + std::to_string(x.d) +
                                          " != weight d_in " + std::to_string(w.dim(1)));
    if (b.dims.size() != 1 || b.dim(0) != w.dim(0)) throw ShapeError("linear: bias/d_out mismatch");
}

template <typename T>
BatchVecT<T> linear(const BatchVecT<T>& x, const ParamArrayT<T>& w, const ParamArrayT<T>& b) {
    linear_check(x, w, b);
    const int d_out = w.dim(0), d_in = w.dim(1);
    BatchVecT<T> y(x.n, d_out);
    if (x.n > 0)
        gemm(false, true, x.n, d_out, d_in, T(1), x.values.data(), d_in, w.values.data(), d_in,
             T(0), y.values.data(), d_out);
    for (int in = 0; in < x.n; ++in)
        for (int j = 0; j < d_out; ++j) y.at(in, j) += b.values[j];
    return y;
}

template <typename T>
BatchVecT<T> linear_backward(const BatchVecT<T>& grad_out, const BatchVecT<T>& x, ParamArrayT<T>& w,
                             ParamArrayT<T>& b) {
    linear_check(x, w, b);
    const int d_out = w.dim(0), d_in = w.dim(1);
    if (grad_out.n != x.n || grad_out.d != d_out) throw ShapeError("linear_backward: shape mismatch");
    w.ensure_grad();
    b.ensure_grad();
    BatchVecT<T> dx(x.n, d_in);
    if (x.n > 0) {
        gemm(true, false, d_out, d_in, x.n, T(1), grad_out.values.data(), d_out, x.values.data(),
             d_in, T(1), w.grad.data(), d_in);
        gemm(false, false, x.n, d_in, d_out, T(1), grad_out.values.data(), d_out, w.values.data(),
             d_in, T(0), dx.values.data(), d_in);
    }
    for (int j = 0; j < d_out; ++j) {
        double acc = 0.0;
        for (int in = 0; in < x.n; ++in) acc += static_cast<double>(grad_out.at(in, j));
        b.grad[j] += static_cast<T>(acc);
    }
    return dx;
}

// ---------------------------------------------------------------------------
// concatenation
// ---------------------------------------------------------------------------

template <typename T>
Tensor4T<T> concat_channels(const Tensor4T<T>& a, const Tensor4T<T>& b) {
    if (a.n != b.n || a.h != b.h || a.w != b.w)
        throw ShapeError("concat_channels: batch/spatial dims must match");
    Tensor4T<T> y(a.n, a.c + b.c, a.h, a.w);
    for (int in = 0; in < a.n; ++in) {
        std::memcpy(y.channel(in, 0), a.channel(in, 0), sizeof(T) * a.plane() * a.c);
        std::memcpy(y.channel(in, a.c), b.channel(in, 0), sizeof(T) * b.plane() * b.c);
    }
    return y;
}

template <typename T>
std::pair<Tensor4T<T>, Tensor4T<T>> concat_channels_backward(const Tensor4T<T>& grad_out, int c_a) {
    if (c_a <= 0 || c_a >= grad_out.c) throw ShapeError("concat_channels_backward: bad split");
    Tensor4T<T> da(grad_out.n, c_a, grad_out.h, grad_out.w);
    Tensor4T<T> db(grad_out.n, grad_out.c - c_a, grad_out.h, grad_out.w);
    for (int in = 0; in < grad_out.n; ++in) {
        std::memcpy(da.channel(in, 0), grad_out.channel(in, 0), sizeof(T) * grad_out.plane() * c_a);
        std::memcpy(db.channel(in, 0), grad_out.channel(in, c_a),
                    sizeof(T) * grad_out.plane() * (grad_out.c - c_a));
    }
    return {std::move(da), std::move(db)};
}

template <typename T>
BatchVecT<T> concat_vecs(const BatchVecT<T>& a, const BatchVecT<T>& b) {
    if (a.n != b.n) throw ShapeError("concat_vecs: batch mismatch");
    BatchVecT<T> y(a.n, a.d + b.d);
    for (int in = 0; in < a.n; ++in) {
        std::memcpy(y.row(in), a.row(in), sizeof(T) * a.d);
        std::memcpy(y.row(in) + a.d, b.row(in), sizeof(T) * b.d);
    }
    return y;
}

template <typename T>
std::pair<BatchVecT<T>, BatchVecT<T>> concat_vecs_backward(const BatchVecT<T>& grad_out, int d_a) {
    BatchVecT<T> da(grad_out.n, d_a), db(grad_out.n, grad_out.d - d_a);
    for (int in = 0; in < grad_out.n; ++in) {
        std::memcpy(da.row(in), grad_out.row(in), sizeof(T) * d_a);
        std::memcpy(db.row(in), grad_out.row(in) + d_a, sizeof(T) * (grad_out.d - d_a));
    }
    return {std::move(da), std::move(db)};
}

// ---------------------------------------------------------------------------
// channel-wise scaling (FiLM-style modulation)
// ---------------------------------------------------------------------------

template <typename T>
Tensor4T<T> channel_scale(const Tensor4T<T>& x, const BatchVecT<T>& scale) {
    if (scale.n != x.n || scale.d != x.c) throw ShapeError("channel_scale: scale length != channels");
    Tensor4T<T> y(x.n, x.c, x.h, x.w);
    for (int in = 0; in < x.n; ++in)
        for (int ch = 0; ch < x.c; ++ch) {
            const T s = scale.at(in, ch);
            const T* p = x.channel(in, ch);
            T* q = y.channel(in, ch);
            for (std::size_t i = 0; i < x.plane(); ++i) q[i] = p[i] * s;
        }
    return y;
}

template <typename T>
std::pair<Tensor4T<T>, BatchVecT<T>> channel_scale_backward(const Tensor4T<T>& grad_out,
                                                            const Tensor4T<T>& x,
                                                            const BatchVecT<T>& scale) {
    if (!grad_out.same_shape(x)) throw ShapeError("channel_scale_backward: shape mismatch");
    Tensor4T<T> dx(x.n, x.c, x.h, x.w);
    BatchVecT<T> ds(scale.n, scale.d);
    for (int in = 0; in < x.n; ++in)
        for (int ch = 0; ch < x.c; ++ch) {
            const T s = scale.at(in, ch);
            const T* g = grad_out.channel(in, ch);
            const T* p = x.channel(in, ch);
            T* d = dx.channel(in, ch);
            double acc = 0.0;
            for (std::size_t i = 0; i < x.plane(); ++i) {
                d[i] = g[i] * s;
                acc += static_cast<double>(g[i]) * static_cast<double>(p[i]);
            }
            ds.at(in, ch) = static_cast<T>(acc);
        }
    return {std::move(dx), std::move(ds)};
}

}  // namespace vmct
