#pragma once

// Patch dataset pipeline: phantom generation, 60%-in-body patch extraction,
// directory persistence (paired VMCT files + JSON manifest), and stratified
// train/val splits.

#include <cstdint>
#include <string>
#include <vector>

#include "vmct/phantom.hpp"

namespace vmct {

struct PatchPair {
    int id = 0;
    ContrastPhase phase = ContrastPhase::Angio;
    std::uint64_t seed = 0;  // seed of the source phantom
    ImageF img70, img50;     // HU
};

struct Dataset {
    int patch = 0;
    bool noise = false;
    std::uint64_t seed = 0;
    std::vector<PatchPair> items;

    std::vector<std::size_t> indices_of_phase(ContrastPhase p) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < items.size(); ++i)
            if (items[i].phase == p) out.push_back(i);
        return out;
    }
    std::vector<ContrastPhase> phases_present() const {
        std::vector<ContrastPhase> out;
        for (int c = 0; c < kNumPhases; ++c)
            if (!indices_of_phase(static_cast<ContrastPhase>(c)).empty())
                out.push_back(static_cast<ContrastPhase>(c));
        return out;
    }
};

struct DataConfig {
    int n_per_phase = 500;
    int patch = 128;
    int phantom_size = 256;
    int phantoms_per_phase = 8;
    bool noise = false;
    std::vector<ContrastPhase> phases = {ContrastPhase::Angio, ContrastPhase::Arterial,
                                         ContrastPhase::Portal, ContrastPhase::Delayed};

    void validate() const;
};

inline constexpr double kPatchBodyFraction = 0.60;
inline constexpr int kPatchMaxAttempts = 1000;
inline constexpr int kGeneratorVersion = 1;

// Uniform random patch corners, accepted when >= 60% of the patch lies in
// the body mask; the same crop is applied to both energies.
std::vector<PatchPair> extract_patches(const std::vector<PhantomSample>& samples, int n_per_phase,
                                       int patch, std::uint64_t seed);

// Full generation pipeline for a config (phantoms then patches).
Dataset generate_dataset(const DataConfig& cfg, std::uint64_t seed);

// Directory layout: manifest.json + per-patch "<stem>_70kev.vmct" /
// "<stem>_50kev.vmct" pairs.
void save_dataset(const std::string& dir, const Dataset& ds);
Dataset load_dataset(const std::string& dir);

// Seed-stratified split: per phase, a deterministic shuffle puts the first
// (1 - val_fraction) share into train.
struct SplitIndices {
    std::vector<std::size_t> train, val;
};
SplitIndices split_train_val(const Dataset& ds, double val_fraction, std::uint64_t seed);

}  // namespace vmct
