#pragma once

#include <array>
#include <string>

#include "vmct/tensor.hpp"

namespace vmct {

// Contrast phases with canonical codes 0..3. The codes appear in VMCT file
// headers and CLI flags and must never be reordered.
enum class ContrastPhase : int { Angio = 0, Arterial = 1, Portal = 2, Delayed = 3 };

inline constexpr int kNumPhases = 4;
inline constexpr int kPriorDim = 128;
inline constexpr double kTimelineSeconds = 320.0;  // 128 bins x 2.5 s

// Acquisition window [start, end] in seconds post injection.
struct PhaseWindow {
    double start;
    double end;
};

PhaseWindow phase_window(ContrastPhase phase);

ContrastPhase phase_from_code(int code);
int phase_code(ContrastPhase phase);

// Lower-case canonical names used by CLI flags and reports.
std::string phase_name(ContrastPhase phase);
ContrastPhase phase_from_name(const std::string& name);

// 128-long binary prior; the non-zero entries form one contiguous run that
// uniquely identifies the phase.
struct PhasePrior {
    std::array<float, kPriorDim> values{};
    ContrastPhase phase = ContrastPhase::Angio;
};

// Bin i covers [2.5*i, 2.5*(i+1)) on a 0-320 s axis; an entry is 1 exactly
// when the open bin interval intersects the open phase window.
PhasePrior encode_phase(ContrastPhase phase);

// Prior rows for a batch of phase labels (network input form).
template <typename T>
BatchVecT<T> prior_batch(const std::vector<ContrastPhase>& phases) {
    BatchVecT<T> out(static_cast<int>(phases.size()), kPriorDim);
    for (std::size_t i = 0; i < phases.size(); ++i) {
        const PhasePrior p = encode_phase(phases[i]);
        for (int j = 0; j < kPriorDim; ++j) out.at(static_cast<int>(i), j) = static_cast<T>(p.values[j]);
    }
    return out;
}

}  // namespace vmct
