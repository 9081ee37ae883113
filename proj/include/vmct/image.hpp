#pragma once

#include <algorithm>
#include <vector>

#include "vmct/errors.hpp"

namespace vmct {

// Single 2-D image, row-major. HU-domain or normalized depending on context.
struct ImageF {
    int h = 0, w = 0;
    std::vector<float> v;

    ImageF() = default;
    ImageF(int h_, int w_, float fill = 0.0f)
        : h(h_), w(w_), v(static_cast<std::size_t>(h_) * w_, fill) {
        if (h_ <= 0 || w_ <= 0) throw ShapeError("ImageF: non-positive dims");
    }

    std::size_t size() const { return v.size(); }
    float& at(int r, int c) { return v[static_cast<std::size_t>(r) * w + c]; }
    float at(int r, int c) const { return v[static_cast<std::size_t>(r) * w + c]; }
    bool same_shape(const ImageF& o) const { return h == o.h && w == o.w; }
};

// Boolean pixel mask with the same layout.
struct MaskF {
    int h = 0, w = 0;
    std::vector<std::uint8_t> v;

    MaskF() = default;
    MaskF(int h_, int w_, bool fill = false)
        : h(h_), w(w_), v(static_cast<std::size_t>(h_) * w_, fill ? 1 : 0) {}

    bool at(int r, int c) const { return v[static_cast<std::size_t>(r) * w + c] != 0; }
    void set(int r, int c, bool b) { v[static_cast<std::size_t>(r) * w + c] = b ? 1 : 0; }
    std::size_t count() const {
        std::size_t n = 0;
        for (auto b : v) n += b;
        return n;
    }
};

inline constexpr float kHuMin = -1024.0f;
inline constexpr float kHuMax = 3071.0f;
inline constexpr float kHuRange = 3072.0f;

// Maps [-1024, 2048] HU onto [0,1], clamped outside.
inline float normalize_hu(float hu) {
    return std::clamp((hu + 1024.0f) / kHuRange, 0.0f, 1.0f);
}

// Exact inverse of normalize_hu on [-1024, 2048].
inline float denormalize_hu(float x) { return x * kHuRange - 1024.0f; }

}  // namespace vmct
