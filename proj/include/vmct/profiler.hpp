#pragma once

// Parameter / MAC / memory / latency accounting for a built model. MAC
// totals are closed-form functions of the architecture and input dims;
// peak activation memory is an analytic liveness estimate over the forward
// schedule, and inference time is the only measured quantity.

#include <cstddef>
#include <string>
#include <vector>

#include "vmct/json_util.hpp"
#include "vmct/network.hpp"

namespace vmct {

// One leaf layer (conv / transpose / linear / bn / gap) of the breakdown.
struct LayerProfile {
    std::string name;
    std::string kind;
    std::size_t params = 0;
    std::size_t macs = 0;  // at the profiled input dims, batch 1
};

// Trainable parameter count (BN running stats excluded).
std::size_t count_params(UnifiedModel& model);

// Multiply-accumulate count for one h x w image. Convs: k^2*c_in*c_out per
// output pixel; transpose convs likewise per output pixel (the profiler-tool
// convention the reported figures follow); linear: d_in*d_out; GAP: c*h*w;
// BN/ReLU/pool excluded. Unified adds the PCM GAP+MLP terms once per image.
std::size_t count_macs(UnifiedModel& model, int h, int w);

// Per-layer rows; params sum to count_params and macs to count_macs.
std::vector<LayerProfile> profile_layers(UnifiedModel& model, int h, int w);

struct PeakEstimate {
    std::size_t bytes = 0;
    std::string at_op;  // schedule step attaining the peak
};

// Max live activation bytes (4 per value) over a topologically ordered
// forward schedule at the given batch size.
PeakEstimate estimate_peak_activation_bytes(UnifiedModel& model, int h, int w, int batch);

struct TimingResult {
    double mean_ms = 0.0;
    double std_ms = 0.0;
    int n_runs = 0;
    std::string hardware;
};

// Wall-clock forward latency after warmup; requires n_runs >= 3.
TimingResult time_inference(UnifiedModel& model, int h, int w, int n_warmup, int n_runs);

struct ProfileReport {
    std::string mode;
    std::size_t params = 0;
    std::size_t model_size_bytes = 0;
    int mac_h = 0, mac_w = 0;
    std::size_t macs = 0;
    int batch = 1;
    std::size_t peak_activation_bytes = 0;
    std::string peak_at_op;
    double mean_inference_ms = -1.0;  // < 0 when timing was skipped
    double std_inference_ms = 0.0;
    int n_runs = 0;
    std::string hardware;
    std::vector<LayerProfile> layers;
};

ProfileReport profile_model(UnifiedModel& model, int size, int batch = 1, int n_warmup = 2,
                            int n_runs = 10, bool with_timing = true);

Json profile_report_to_json(const ProfileReport& report);

// Aligned-text table (Parameters / Model Size / MACs / Peak Memory est. /
// Inference Time rows). With `baseline`, adds an absolute+percent overhead
// column computed against it.
std::string profile_report_text(const ProfileReport& report,
                                const ProfileReport* baseline = nullptr);

}  // namespace vmct
