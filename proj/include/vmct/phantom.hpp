#pragma once

// Synthetic dual-energy abdominal phantom: an elliptical soft-tissue body
// with a fat rim, liver/renal ellipses, bone and vessel disks, and lesions
// inside the liver. Iodinated regions enhance per the phase-dependent
// profile; HU(E) = base_E(material) + k_E * C(x).

#include <cstdint>
#include <vector>

#include "vmct/image.hpp"
#include "vmct/phase.hpp"

namespace vmct {

enum class Material : std::uint8_t {
    Air = 0,
    Fat,
    SoftTissue,
    Liver,
    Bone,
    VesselLumen,
    Lesion,
    RenalParenchyma,
};

// Iodine-free base HU of a material at 70 / 50 keV.
float material_base_hu70(Material m);
float material_base_hu50(Material m);

// Iodine HU coefficients (HU per mg/mL).
inline constexpr float kIodineK70 = 25.0f;
inline constexpr float kIodineK50 = 55.0f;

// Peak iodine concentration of a region kind, mg/mL.
inline constexpr float kPeakVessel = 12.0f;
inline constexpr float kPeakLiver = 3.0f;
inline constexpr float kPeakLesion = 6.0f;
inline constexpr float kPeakRenal = 8.0f;

// Additive Gaussian noise (when enabled).
inline constexpr float kNoiseSigma70 = 8.0f;
inline constexpr float kNoiseSigma50 = 15.0f;

enum class RegionKind { Vessel = 0, Liver, Lesion, Renal };

// Phase-dependent multiplier in [0,1] applied to a region's peak
// concentration.
float enhancement_multiplier(RegionKind region, ContrastPhase phase);

struct PhantomSample {
    ImageF img70, img50;      // HU
    ImageF iodine_map;        // mg/mL, >= 0
    std::vector<Material> material_map;
    ContrastPhase phase = ContrastPhase::Angio;
    std::uint64_t seed = 0;

    Material material_at(int r, int c) const {
        return material_map[static_cast<std::size_t>(r) * img70.w + c];
    }
};

// Body mask: everything that is not background air.
MaskF body_mask(const PhantomSample& sample);

// Mask recovered from a 70 keV HU image alone (used where only images are
// available, e.g. metric masking of predictions). Matches body_mask exactly
// on noise-free phantoms: all body materials sit far above the threshold.
inline constexpr float kBodyMaskThresholdHu = -500.0f;
MaskF body_mask_from_hu(const ImageF& img70_hu);

// Deterministic per (seed, phase, size). size >= 64 and divisible by 16.
PhantomSample make_phantom(std::uint64_t seed, ContrastPhase phase, int size, bool noise = true);

}  // namespace vmct
