#pragma once

// Training loop and per-phase evaluation. fit() runs seeded mini-batch Adam
// with the exponential epoch schedule and writes periodic/best/final
// checkpoints; evaluate() produces the per-phase HU metric table.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "vmct/dataset.hpp"
#include "vmct/json_util.hpp"
#include "vmct/metrics.hpp"
#include "vmct/network.hpp"

namespace vmct {

struct TrainConfig {
    int epochs = 50;
    int batch_size = 16;
    double lr0 = 1e-3;
    double gamma = 0.99;
    int decay_every = 3;
    double ssim_weight = 0.05;
    double val_fraction = 0.2;
    int checkpoint_every = 10;
    std::uint64_t seed = 0;
    ModelMode mode = ModelMode::Unified;
    std::vector<ContrastPhase> phases = {ContrastPhase::Angio, ContrastPhase::Arterial,
                                         ContrastPhase::Portal, ContrastPhase::Delayed};

    void validate() const;
};

// lr0 * gamma^floor(epoch / decay_every); non-increasing in epoch.
double lr_at(int epoch, const TrainConfig& cfg);

struct EpochStats {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double train_mae_hu = 0.0;  // loss-domain MAE over all pixels, scaled to HU
    double val_loss = 0.0;
    double val_mae_hu = 0.0;
    double seconds = 0.0;
};

struct TrainReport {
    std::vector<EpochStats> epochs;
    double wall_seconds = 0.0;
    int best_epoch = -1;  // epoch with lowest val MAE
    double best_val_mae_hu = 0.0;
    std::string best_checkpoint;
    std::string final_checkpoint;
};

Json train_report_to_json(const TrainReport& report);

// Trains `model` in place on the samples of `ds` whose phase is in
// cfg.phases. A per-phase 20% (cfg.val_fraction) split is held out for
// validation; when the split is empty the train set doubles as the
// validation set. Progress lines go to `log` (tab-separated, one per epoch).
// Checkpoints land in out_dir: ckpt_epoch_NNN.vmck every cfg.checkpoint_every
// epochs, best.vmck at each new lowest val MAE, final.vmck at the end.
// `start_epoch` > 0 resumes the schedule mid-way (same shuffles and lr as a
// continuous run) for a model restored from a checkpoint.
TrainReport fit(UnifiedModel& model, const Dataset& ds, const TrainConfig& cfg,
                const std::string& out_dir, std::ostream* log = nullptr, int start_epoch = 0);

// Per-phase metric table: MAE/RMSE in HU inside the body mask recovered from
// the 70 keV input, SSIM on normalized intensities (L = 1). Rows appear in
// phase-code order for phases present in `ds`; absent phases are noted on
// `warn` and omitted.
std::vector<MetricRow> evaluate(UnifiedModel& model, const Dataset& ds,
                                std::ostream* warn = nullptr);

Json metric_rows_to_json(const std::vector<MetricRow>& rows);
std::string metric_rows_text(const std::vector<MetricRow>& rows);

}  // namespace vmct
