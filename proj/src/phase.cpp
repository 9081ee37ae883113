#include "vmct/phase.hpp"

#include "vmct/errors.hpp"

namespace vmct {

PhaseWindow phase_window(ContrastPhase phase) {
    switch (phase) {
        case ContrastPhase::Angio: return {15.0, 20.0};
        case ContrastPhase::Arterial: return {25.0, 35.0};
        case ContrastPhase::Portal: return {60.0, 90.0};
        case ContrastPhase::Delayed: return {180.0, 300.0};
    }
    throw ArgumentError("phase_window: invalid phase");
}

ContrastPhase phase_from_code(int code) {
    if (code < 0 || code >= kNumPhases)
        throw ArgumentError("phase_from_code: code " + std::to_string(code) + " not in 0..3");
    return static_cast<ContrastPhase>(code);
}

int phase_code(ContrastPhase phase) { return static_cast<int>(phase); }

std::string phase_name(ContrastPhase phase) {
    switch (phase) {
        case ContrastPhase::Angio: return "angio";
        case ContrastPhase::Arterial: return "arterial";
        case ContrastPhase::Portal: return "portal";
        case ContrastPhase::Delayed: return "delayed";
    }
    throw ArgumentError("phase_name: invalid phase");
}

ContrastPhase phase_from_name(const std::string& name) {
    for (int c = 0; c < kNumPhases; ++c) {
        const ContrastPhase p = static_cast<ContrastPhase>(c);
        if (phase_name(p) == name) return p;
    }
    throw ArgumentError("unknown phase name '" + name + "' (expected angio|arterial|portal|delayed)");
}

PhasePrior encode_phase(ContrastPhase phase) {
    const PhaseWindow win = phase_window(phase);
    const double bin = kTimelineSeconds / kPriorDim;
    PhasePrior prior;
    prior.phase = phase;
    for (int i = 0; i < kPriorDim; ++i) {
        const double lo = bin * i;
        const double hi = bin * (i + 1);
        // Open-interval intersection: (lo,hi) and (start,end) overlap iff
        // lo < end and start < hi.
        prior.values[i] = (lo < win.end && win.start < hi) ? 1.0f : 0.0f;
    }
    return prior;
}

}  // namespace vmct
