#pragma once

// Training loss: L = MAE(pred, target) + ssim_weight * (1 - SSIM(pred, target))
// on normalized [0,1] intensities with dynamic range 1.0. MAE averages over
// every element; SSIM averages the per-plane score over (n, c).

#include <cmath>

#include "vmct/errors.hpp"
#include "vmct/ssim.hpp"
#include "vmct/tensor.hpp"

namespace vmct {

template <typename T>
struct LossResult {
    double loss = 0.0;
    double mae = 0.0;
    double ssim = 0.0;
    Tensor4T<T> grad;  // dL/dpred, filled when requested
};

template <typename T>
LossResult<T> combined_loss(const Tensor4T<T>& pred, const Tensor4T<T>& target, double ssim_weight,
                            bool with_grad = true, double dynamic_range = 1.0) {
    if (!pred.same_shape(target)) throw ShapeError("combined_loss: pred/target dims differ");
    if (pred.size() == 0) throw ArgumentError("combined_loss: empty tensors");
    if (ssim_weight < 0.0) throw ArgumentError("combined_loss: negative ssim weight");

    LossResult<T> out;
    if (with_grad) out.grad = Tensor4T<T>(pred.n, pred.c, pred.h, pred.w);

    double mae_acc = 0.0;
    const double inv_count = 1.0 / static_cast<double>(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = static_cast<double>(pred.values[i]) - static_cast<double>(target.values[i]);
        mae_acc += std::abs(d);
        if (with_grad) out.grad.values[i] = static_cast<T>((d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) * inv_count);
    }
    out.mae = mae_acc * inv_count;

    const int planes = pred.n * pred.c;
    const double plane_scale = -ssim_weight / static_cast<double>(planes);  // d(w*(1-ssim))/dssim
    double ssim_acc = 0.0;
    for (int in = 0; in < pred.n; ++in)
        for (int ch = 0; ch < pred.c; ++ch) {
            if (with_grad && ssim_weight > 0.0)
                ssim_acc += ssim_plane_grad(pred.channel(in, ch), target.channel(in, ch), pred.h,
                                            pred.w, dynamic_range, plane_scale,
                                            out.grad.channel(in, ch));
            else
                ssim_acc += ssim_plane(pred.channel(in, ch), target.channel(in, ch), pred.h, pred.w,
                                       dynamic_range);
        }
    out.ssim = ssim_acc / static_cast<double>(planes);
    out.loss = out.mae + ssim_weight * (1.0 - out.ssim);
    if (!std::isfinite(out.loss)) throw NumericError("combined_loss: non-finite loss");
    return out;
}

}  // namespace vmct
