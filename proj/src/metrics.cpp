#include "vmct/metrics.hpp"

#include <cmath>

#include "vmct/errors.hpp"

namespace vmct {

namespace {

void check_metric_inputs(const ImageF& pred, const ImageF& target, const MaskF& mask) {
    if (!pred.same_shape(target)) throw ShapeError("metrics: pred/target dims differ");
    if (mask.h != pred.h || mask.w != pred.w) throw ShapeError("metrics: mask dims differ");
    if (mask.count() == 0) throw ArgumentError("metrics: empty mask");
}

}  // namespace

double mae_hu(const ImageF& pred, const ImageF& target, const MaskF& mask) {
    check_metric_inputs(pred, target, mask);
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        if (mask.v[i] != 0) {
            acc += std::abs(static_cast<double>(pred.v[i]) - static_cast<double>(target.v[i]));
            ++n;
        }
    return acc / static_cast<double>(n);
}

double rmse_hu(const ImageF& pred, const ImageF& target, const MaskF& mask) {
    check_metric_inputs(pred, target, mask);
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        if (mask.v[i] != 0) {
            const double d = static_cast<double>(pred.v[i]) - static_cast<double>(target.v[i]);
            acc += d * d;
            ++n;
        }
    return std::sqrt(acc / static_cast<double>(n));
}

double ssim(const ImageF& pred, const ImageF& target, double dynamic_range) {
    if (!pred.same_shape(target)) throw ShapeError("ssim: pred/target dims differ");
    return ssim_plane(pred.v.data(), target.v.data(), pred.h, pred.w, dynamic_range);
}

MeanStd mean_std(const std::vector<double>& xs) {
    MeanStd out;
    if (xs.empty()) return out;
    double sum = 0.0;
    for (double x : xs) sum += x;
    out.mean = sum / static_cast<double>(xs.size());
    double sq = 0.0;
    for (double x : xs) sq += (x - out.mean) * (x - out.mean);
    out.std = xs.size() > 1 ? std::sqrt(sq / static_cast<double>(xs.size())) : 0.0;
    return out;
}

std::uint16_t apply_window_px(float hu, const DisplayWindow& win) {
    if (win.ww <= 0.0f) throw ArgumentError("apply_window: window width must be positive");
    const double lo = static_cast<double>(win.wl) - static_cast<double>(win.ww) / 2.0;
    double t = (static_cast<double>(hu) - lo) / static_cast<double>(win.ww);
    t = t < 0.0 ? 0.0 : (t > 1.0 ? 1.0 : t);
    return static_cast<std::uint16_t>(std::lround(t * 65535.0));
}

std::vector<std::uint16_t> apply_window(const ImageF& img, const DisplayWindow& win) {
    std::vector<std::uint16_t> out(img.size());
    for (std::size_t i = 0; i < img.size(); ++i) out[i] = apply_window_px(img.v[i], win);
    return out;
}

}  // namespace vmct
