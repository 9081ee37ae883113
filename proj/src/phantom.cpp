#include "vmct/phantom.hpp"

#include <algorithm>
#include <cmath>

#include "vmct/errors.hpp"
#include "vmct/rng.hpp"

namespace vmct {

float material_base_hu70(Material m) {
    switch (m) {
        case Material::Air: return -1000.0f;
        case Material::Fat: return -100.0f;
        case Material::SoftTissue: return 40.0f;
        case Material::Liver: return 55.0f;
        case Material::Bone: return 700.0f;
        case Material::VesselLumen:
        case Material::Lesion:
        case Material::RenalParenchyma: return 40.0f;  // soft-tissue base
    }
    throw ArgumentError("material_base_hu70: invalid material");
}

float material_base_hu50(Material m) {
    switch (m) {
        case Material::Air: return -1000.0f;
        case Material::Fat: return -110.0f;
        case Material::SoftTissue: return 45.0f;
        case Material::Liver: return 60.0f;
        case Material::Bone: return 1100.0f;
        case Material::VesselLumen:
        case Material::Lesion:
        case Material::RenalParenchyma: return 45.0f;
    }
    throw ArgumentError("material_base_hu50: invalid material");
}

float enhancement_multiplier(RegionKind region, ContrastPhase phase) {
    // Rows: Angio, Arterial, Portal, Delayed.
    static constexpr float kTable[4][4] = {
        /* Vessel */ {1.0f, 0.9f, 0.35f, 0.15f},
        /* Liver  */ {0.05f, 0.3f, 1.0f, 0.5f},
        /* Lesion */ {0.1f, 0.8f, 0.6f, 0.45f},
        /* Renal  */ {0.1f, 0.6f, 0.8f, 0.7f},
    };
    return kTable[static_cast<int>(region)][static_cast<int>(phase)];
}

namespace {

struct Ellipse {
    double cx, cy, a, b;

    bool contains(double x, double y, double scale = 1.0) const {
        const double dx = (x - cx) / (a * scale);
        const double dy = (y - cy) / (b * scale);
        return dx * dx + dy * dy <= 1.0;
    }
};

// Uniform point inside the scaled ellipse via rejection from its bbox.
void sample_inside(Rng& rng, const Ellipse& e, double scale, double& x, double& y) {
    for (int tries = 0; tries < 10000; ++tries) {
        x = rng.uniform(e.cx - e.a * scale, e.cx + e.a * scale);
        y = rng.uniform(e.cy - e.b * scale, e.cy + e.b * scale);
        if (e.contains(x, y, scale)) return;
    }
    throw ContractError("phantom: ellipse rejection sampling failed");
}

struct Scene {
    std::vector<Material>& mat;
    ImageF& conc;
    int size;

    void paint_ellipse(const Ellipse& e, Material m, float c, bool only_over_liver = false) {
        const int r0 = std::max(0, static_cast<int>(std::floor(e.cy - e.b)));
        const int r1 = std::min(size - 1, static_cast<int>(std::ceil(e.cy + e.b)));
        const int c0 = std::max(0, static_cast<int>(std::floor(e.cx - e.a)));
        const int c1 = std::min(size - 1, static_cast<int>(std::ceil(e.cx + e.a)));
        for (int r = r0; r <= r1; ++r)
            for (int cc = c0; cc <= c1; ++cc) {
                if (!e.contains(cc + 0.5, r + 0.5)) continue;
                auto& cell = mat[static_cast<std::size_t>(r) * size + cc];
                if (only_over_liver && cell != Material::Liver) continue;
                cell = m;
                conc.at(r, cc) = c;
            }
    }
};

}  // namespace

MaskF body_mask(const PhantomSample& sample) {
    MaskF m(sample.img70.h, sample.img70.w);
    for (std::size_t i = 0; i < sample.material_map.size(); ++i)
        m.v[i] = sample.material_map[i] != Material::Air ? 1 : 0;
    return m;
}

MaskF body_mask_from_hu(const ImageF& img70_hu) {
    MaskF m(img70_hu.h, img70_hu.w);
    for (std::size_t i = 0; i < img70_hu.v.size(); ++i)
        m.v[i] = img70_hu.v[i] > kBodyMaskThresholdHu ? 1 : 0;
    return m;
}

PhantomSample make_phantom(std::uint64_t seed, ContrastPhase phase, int size, bool noise) {
    if (size < 64 || size % 16 != 0)
        throw ArgumentError("make_phantom: size must be >= 64 and divisible by 16");

    PhantomSample s;
    s.phase = phase;
    s.seed = seed;
    s.img70 = ImageF(size, size, material_base_hu70(Material::Air));
    s.img50 = ImageF(size, size, material_base_hu50(Material::Air));
    s.iodine_map = ImageF(size, size, 0.0f);
    s.material_map.assign(static_cast<std::size_t>(size) * size, Material::Air);

    Rng rng(seed);
    const double fs = static_cast<double>(size);
    Scene scene{s.material_map, s.iodine_map, size};

    // Body: soft tissue with a subcutaneous fat rim.
    Ellipse body{fs * (0.5 + rng.uniform(-0.03, 0.03)), fs * (0.5 + rng.uniform(-0.03, 0.03)),
                 fs * rng.uniform(0.36, 0.45), fs * rng.uniform(0.30, 0.40)};
    scene.paint_ellipse(body, Material::Fat, 0.0f);
    scene.paint_ellipse({body.cx, body.cy, body.a * 0.90, body.b * 0.90}, Material::SoftTissue, 0.0f);

    // Liver ellipses.
    const float c_liver = kPeakLiver * enhancement_multiplier(RegionKind::Liver, phase);
    std::vector<Ellipse> livers;
    const int n_liver = static_cast<int>(rng.uniform_int(1, 3));
    for (int i = 0; i < n_liver; ++i) {
        double x, y;
        sample_inside(rng, body, 0.55, x, y);
        livers.push_back({x, y, fs * rng.uniform(0.10, 0.20), fs * rng.uniform(0.08, 0.16)});
        scene.paint_ellipse(livers.back(), Material::Liver, c_liver);
    }

    // Vessel lumens.
    const float c_vessel = kPeakVessel * enhancement_multiplier(RegionKind::Vessel, phase);
    const int n_vessel = static_cast<int>(rng.uniform_int(2, 6));
    for (int i = 0; i < n_vessel; ++i) {
        double x, y;
        sample_inside(rng, body, 0.75, x, y);
        const double r = fs * rng.uniform(0.015, 0.045);
        scene.paint_ellipse({x, y, r, r}, Material::VesselLumen, c_vessel);
    }

    // Lesions, confined to liver pixels.
    const float c_lesion = kPeakLesion * enhancement_multiplier(RegionKind::Lesion, phase);
    const int n_lesion = static_cast<int>(rng.uniform_int(0, 3));
    for (int i = 0; i < n_lesion && !livers.empty(); ++i) {
        const Ellipse& host = livers[static_cast<std::size_t>(rng.uniform_int(0, n_liver - 1))];
        const double ang = rng.uniform(0.0, 6.283185307179586);
        const double rad = 0.7 * std::sqrt(rng.uniform());
        const double x = host.cx + rad * host.a * std::cos(ang);
        const double y = host.cy + rad * host.b * std::sin(ang);
        const double r = fs * rng.uniform(0.012, 0.030);
        scene.paint_ellipse({x, y, r, r}, Material::Lesion, c_lesion, /*only_over_liver=*/true);
    }

    // Renal parenchyma.
    const float c_renal = kPeakRenal * enhancement_multiplier(RegionKind::Renal, phase);
    const int n_renal = static_cast<int>(rng.uniform_int(0, 2));
    for (int i = 0; i < n_renal; ++i) {
        double x, y;
        sample_inside(rng, body, 0.65, x, y);
        scene.paint_ellipse({x, y, fs * rng.uniform(0.05, 0.09), fs * rng.uniform(0.04, 0.07)},
                            Material::RenalParenchyma, c_renal);
    }

    // Bone.
    const int n_bone = static_cast<int>(rng.uniform_int(1, 3));
    for (int i = 0; i < n_bone; ++i) {
        double x, y;
        sample_inside(rng, body, 0.8, x, y);
        const double r = fs * rng.uniform(0.02, 0.05);
        scene.paint_ellipse({x, y, r, r}, Material::Bone, 0.0f);
    }

    // Rasterize HU at both energies; noise fields are drawn per energy in a
    // fixed order so the sample is bit-reproducible.
    for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c) {
            const Material m = s.material_at(r, c);
            const float conc = s.iodine_map.at(r, c);
            s.img70.at(r, c) = material_base_hu70(m) + kIodineK70 * conc;
            s.img50.at(r, c) = material_base_hu50(m) + kIodineK50 * conc;
        }
    if (noise) {
        for (std::size_t i = 0; i < s.img70.v.size(); ++i)
            s.img70.v[i] += static_cast<float>(rng.normal(0.0, kNoiseSigma70));
        for (std::size_t i = 0; i < s.img50.v.size(); ++i)
            s.img50.v[i] += static_cast<float>(rng.normal(0.0, kNoiseSigma50));
    }
    for (auto& v : s.img70.v) v = std::clamp(v, kHuMin, kHuMax);
    for (auto& v : s.img50.v) v = std::clamp(v, kHuMin, kHuMax);
    return s;
}

}  // namespace vmct
