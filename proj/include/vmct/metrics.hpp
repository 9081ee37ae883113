#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vmct/image.hpp"
#include "vmct/phase.hpp"
#include "vmct/ssim.hpp"

namespace vmct {

// Display window: level/width in HU.
struct DisplayWindow {
    float wl = 0.0f;
    float ww = 400.0f;
};

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
};

// One row of the per-phase metric table (mean +/- std over samples).
struct MetricRow {
    ContrastPhase phase = ContrastPhase::Angio;
    MeanStd mae_hu, rmse_hu, ssim;
    int n_samples = 0;
};

// Mean absolute / root-mean-square error over masked pixels, in HU.
double mae_hu(const ImageF& pred, const ImageF& target, const MaskF& mask);
double rmse_hu(const ImageF& pred, const ImageF& target, const MaskF& mask);

// Mean local SSIM (see ssim.hpp for the pinned formulation).
double ssim(const ImageF& pred, const ImageF& target, double dynamic_range);

MeanStd mean_std(const std::vector<double>& xs);

// Linear window/level mapping to 16-bit display intensities.
std::uint16_t apply_window_px(float hu, const DisplayWindow& win);
std::vector<std::uint16_t> apply_window(const ImageF& img, const DisplayWindow& win);

}  // namespace vmct
