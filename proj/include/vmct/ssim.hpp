#pragma once

// SSIM with the reference formulation: 11x11 Gaussian window (sigma 1.5),
// K1=0.01, K2=0.03, valid-window positions only, mean over positions.
// Internals run in double regardless of the stored value type. The gradient
// is analytic: per window position p the derivative w.r.t. pixel i inside it
// is w_i * (A_p + B_p*y_i + G_p*x_i), so dx is three "full" convolutions of
// the coefficient fields with the (separable, symmetric) window.

#include <array>
#include <cmath>
#include <vector>

#include "vmct/errors.hpp"

namespace vmct {

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;

inline const std::array<double, kSsimWindow>& ssim_window_1d() {
    static const std::array<double, kSsimWindow> g = [] {
        std::array<double, kSsimWindow> k{};
        double sum = 0.0;
        for (int i = 0; i < kSsimWindow; ++i) {
            const double d = i - (kSsimWindow - 1) / 2.0;
            k[i] = std::exp(-(d * d) / (2.0 * kSsimSigma * kSsimSigma));
            sum += k[i];
        }
        for (double& v : k) v /= sum;
        return k;
    }();
    return g;
}

namespace ssim_detail {

// Valid-mode separable correlation with the window: (h,w) -> (h-10, w-10).
inline void filter_valid(const std::vector<double>& in, int h, int w, std::vector<double>& tmp,
                         std::vector<double>& out) {
    const auto& g = ssim_window_1d();
    const int wv = w - kSsimWindow + 1, hv = h - kSsimWindow + 1;
    tmp.assign(static_cast<std::size_t>(h) * wv, 0.0);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < wv; ++c) {
            double acc = 0.0;
            const double* row = in.data() + static_cast<std::size_t>(r) * w + c;
            for (int v = 0; v < kSsimWindow; ++v) acc += g[v] * row[v];
            tmp[static_cast<std::size_t>(r) * wv + c] = acc;
        }
    out.assign(static_cast<std::size_t>(hv) * wv, 0.0);
    for (int r = 0; r < hv; ++r)
        for (int c = 0; c < wv; ++c) {
            double acc = 0.0;
            for (int u = 0; u < kSsimWindow; ++u)
                acc += g[u] * tmp[static_cast<std::size_t>(r + u) * wv + c];
            out[static_cast<std::size_t>(r) * wv + c] = acc;
        }
}

// "Full" convolution scattering a (hv,wv) coefficient field back over the
// pixels it was computed from: (hv,wv) -> (h,w). Window is symmetric, so
// convolution and correlation coincide.
inline void scatter_full(const std::vector<double>& in, int hv, int wv, std::vector<double>& tmp,
                         std::vector<double>& out) {
    const auto& g = ssim_window_1d();
    const int h = hv + kSsimWindow - 1, w = wv + kSsimWindow - 1;
    tmp.assign(static_cast<std::size_t>(hv) * w, 0.0);
    for (int r = 0; r < hv; ++r)
        for (int c = 0; c < w; ++c) {
            double acc = 0.0;
            for (int v = 0; v < kSsimWindow; ++v) {
                const int s = c - v;
                if (s >= 0 && s < wv) acc += g[v] * in[static_cast<std::size_t>(r) * wv + s];
            }
            tmp[static_cast<std::size_t>(r) * w + c] = acc;
        }
    out.assign(static_cast<std::size_t>(h) * w, 0.0);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            double acc = 0.0;
            for (int u = 0; u < kSsimWindow; ++u) {
                const int s = r - u;
                if (s >= 0 && s < hv) acc += g[u] * tmp[static_cast<std::size_t>(s) * w + c];
            }
            out[static_cast<std::size_t>(r) * w + c] = acc;
        }
}

struct Fields {
    int hv = 0, wv = 0;
    std::vector<double> mu_x, mu_y, sxx, syy, sxy;
};

template <typename T>
void window_stats(const T* x, const T* y, int h, int w, Fields& f) {
    if (h < kSsimWindow || w < kSsimWindow)
        throw ArgumentError("ssim: image smaller than the 11x11 window");
    const std::size_t size = static_cast<std::size_t>(h) * w;
    std::vector<double> fx(size), fy(size), fprod(size), tmp;
    for (std::size_t i = 0; i < size; ++i) {
        fx[i] = static_cast<double>(x[i]);
        fy[i] = static_cast<double>(y[i]);
    }
    f.hv = h - kSsimWindow + 1;
    f.wv = w - kSsimWindow + 1;
    filter_valid(fx, h, w, tmp, f.mu_x);
    filter_valid(fy, h, w, tmp, f.mu_y);
    for (std::size_t i = 0; i < size; ++i) fprod[i] = fx[i] * fx[i];
    filter_valid(fprod, h, w, tmp, f.sxx);
    for (std::size_t i = 0; i < size; ++i) fprod[i] = fy[i] * fy[i];
    filter_valid(fprod, h, w, tmp, f.syy);
    for (std::size_t i = 0; i < size; ++i) fprod[i] = fx[i] * fy[i];
    filter_valid(fprod, h, w, tmp, f.sxy);
}

}  // namespace ssim_detail

// Mean local SSIM of two h*w planes with dynamic range L.
template <typename T>
double ssim_plane(const T* x, const T* y, int h, int w, double L) {
    if (L <= 0.0) throw ArgumentError("ssim: dynamic range must be positive");
    ssim_detail::Fields f;
    ssim_detail::window_stats(x, y, h, w, f);
    const double c1 = (kSsimK1 * L) * (kSsimK1 * L);
    const double c2 = (kSsimK2 * L) * (kSsimK2 * L);
    double total = 0.0;
    const std::size_t count = f.mu_x.size();
    for (std::size_t i = 0; i < count; ++i) {
        const double mx = f.mu_x[i], my = f.mu_y[i];
        const double vx = f.sxx[i] - mx * mx;
        const double vy = f.syy[i] - my * my;
        const double cv = f.sxy[i] - mx * my;
        const double n1 = 2.0 * mx * my + c1, d1 = mx * mx + my * my + c1;
        const double n2 = 2.0 * cv + c2, d2 = vx + vy + c2;
        total += (n1 * n2) / (d1 * d2);
    }
    return total / static_cast<double>(count);
}

// Returns SSIM and accumulates scale * dSSIM/dx into dx_accum (length h*w).
template <typename T>
double ssim_plane_grad(const T* x, const T* y, int h, int w, double L, double scale, T* dx_accum) {
    if (L <= 0.0) throw ArgumentError("ssim: dynamic range must be positive");
    ssim_detail::Fields f;
    ssim_detail::window_stats(x, y, h, w, f);
    const double c1 = (kSsimK1 * L) * (kSsimK1 * L);
    const double c2 = (kSsimK2 * L) * (kSsimK2 * L);
    const std::size_t count = f.mu_x.size();
    std::vector<double> fa(count), fb(count), fg(count);
    double total = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        const double mx = f.mu_x[i], my = f.mu_y[i];
        const double vx = f.sxx[i] - mx * mx;
        const double vy = f.syy[i] - my * my;
        const double cv = f.sxy[i] - mx * my;
        const double n1 = 2.0 * mx * my + c1, d1 = mx * mx + my * my + c1;
        const double n2 = 2.0 * cv + c2, d2 = vx + vy + c2;
        const double s = (n1 * n2) / (d1 * d2);
        total += s;
        fg[i] = -2.0 * s / d2;
        fb[i] = 2.0 * n1 / (d1 * d2);
        fa[i] = 2.0 * my * n2 / (d1 * d2) - 2.0 * mx * s / d1 + 2.0 * s * mx / d2 -
                2.0 * n1 * my / (d1 * d2);
    }
    std::vector<double> tmp, sa, sb, sg;
    ssim_detail::scatter_full(fa, f.hv, f.wv, tmp, sa);
    ssim_detail::scatter_full(fb, f.hv, f.wv, tmp, sb);
    ssim_detail::scatter_full(fg, f.hv, f.wv, tmp, sg);
    const double norm = scale / static_cast<double>(count);
    const std::size_t size = static_cast<std::size_t>(h) * w;
    for (std::size_t i = 0; i < size; ++i)
        dx_accum[i] += static_cast<T>(norm * (sa[i] + sb[i] * static_cast<double>(y[i]) +
                                              sg[i] * static_cast<double>(x[i])));
    return total / static_cast<double>(count);
}

}  // namespace vmct
