#include "vmct/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <ostream>
#include <sstream>

#include "vmct/adam.hpp"
#include "vmct/checkpoint.hpp"
#include "vmct/errors.hpp"
#include "vmct/loss.hpp"
#include "vmct/rng.hpp"

namespace fs = std::filesystem;

namespace vmct {

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("train: epochs must be positive");
    if (batch_size < 1) throw ConfigError("train: batch_size must be positive");
    if (!(lr0 > 0.0)) throw ConfigError("train: lr0 must be > 0");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("train: gamma must be in (0,1]");
    if (decay_every < 1) throw ConfigError("train: decay_every must be positive");
    if (ssim_weight < 0.0) throw ConfigError("train: ssim_weight must be >= 0");
    if (val_fraction < 0.0 || val_fraction >= 1.0)
        throw ConfigError("train: val_fraction must be in [0,1)");
    if (checkpoint_every < 1) throw ConfigError("train: checkpoint_every must be positive");
    if (phases.empty()) throw ConfigError("train: no phases selected");
}

double lr_at(int epoch, const TrainConfig& cfg) {
    if (epoch < 0) throw ArgumentError("lr_at: negative epoch");
    return cfg.lr0 * std::pow(cfg.gamma, static_cast<double>(epoch / cfg.decay_every));
}

namespace {

bool phase_selected(const TrainConfig& cfg, ContrastPhase p) {
    return std::find(cfg.phases.begin(), cfg.phases.end(), p) != cfg.phases.end();
}

// Normalized input/target tensors plus phase labels for a batch of items.
struct Batch {
    Tensor4 x, y;
    std::vector<ContrastPhase> phases;
};

Batch make_batch(const Dataset& ds, const std::vector<std::size_t>& idx, std::size_t begin,
                 std::size_t end) {
    const int n = static_cast<int>(end - begin);
    const ImageF& first = ds.items[idx[begin]].img70;
    Batch b;
    b.x = Tensor4(n, 1, first.h, first.w);
    b.y = Tensor4(n, 1, first.h, first.w);
    for (std::size_t k = begin; k < end; ++k) {
        const PatchPair& item = ds.items[idx[k]];
        if (!item.img70.same_shape(first))
            throw ArgumentError("fit: dataset patches have mixed dims");
        float* xr = b.x.channel(static_cast<int>(k - begin), 0);
        float* yr = b.y.channel(static_cast<int>(k - begin), 0);
        for (std::size_t i = 0; i < item.img70.size(); ++i) {
            xr[i] = normalize_hu(item.img70.v[i]);
            yr[i] = normalize_hu(item.img50.v[i]);
        }
        b.phases.push_back(item.phase);
    }
    return b;
}

struct PassStats {
    double loss = 0.0;
    double mae = 0.0;  // normalized
};

// Forward + loss over a list of items in eval mode (no gradients).
PassStats eval_pass(UnifiedModel& model, const Dataset& ds, const std::vector<std::size_t>& idx,
                    const TrainConfig& cfg) {
    PassStats acc;
    std::size_t done = 0;
    const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
    while (done < idx.size()) {
        const std::size_t end = std::min(idx.size(), done + bs);
        Batch b = make_batch(ds, idx, done, end);
        BatchVec prior;
        const BatchVec* prior_ptr = nullptr;
        if (model.unified()) {
            prior = prior_batch<float>(b.phases);
            prior_ptr = &prior;
        }
        Tensor4 pred = model_forward(model, b.x, prior_ptr, BnMode::Eval);
        LossResult<float> l = combined_loss(pred, b.y, cfg.ssim_weight, /*with_grad=*/false);
        const double n = static_cast<double>(end - done);
        acc.loss += l.loss * n;
        acc.mae += l.mae * n;
        done = end;
    }
    const double total = static_cast<double>(idx.size());
    acc.loss /= total;
    acc.mae /= total;
    return acc;
}

std::string ckpt_name(int epoch) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "ckpt_epoch_%03d.vmck", epoch);
    return buf;
}

}  // namespace

TrainReport fit(UnifiedModel& model, const Dataset& ds, const TrainConfig& cfg,
                const std::string& out_dir, std::ostream* log, int start_epoch) {
    cfg.validate();
    if (ds.items.empty()) throw ArgumentError("fit: empty dataset");
    if (start_epoch < 0 || start_epoch >= cfg.epochs)
        throw ArgumentError("fit: start_epoch out of range");
    fs::create_directories(out_dir);

    SplitIndices split = split_train_val(ds, cfg.val_fraction, cfg.seed);
    auto keep = [&](std::vector<std::size_t>& v) {
        std::erase_if(v, [&](std::size_t i) { return !phase_selected(cfg, ds.items[i].phase); });
    };
    keep(split.train);
    keep(split.val);
    if (split.train.empty()) throw ArgumentError("fit: no training samples for selected phases");
    const std::vector<std::size_t>& val_idx = split.val.empty() ? split.train : split.val;

    Adam adam;
    std::vector<ParamArray*> params = model.params();

    TrainReport report;
    report.best_val_mae_hu = std::numeric_limits<double>::infinity();
    const auto t_start = std::chrono::steady_clock::now();
    if (log != nullptr)
        (*log) << "# epoch\tlr\ttrain_loss\ttrain_mae_hu\tval_loss\tval_mae_hu\tseconds\n";

    for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
        const auto t_epoch = std::chrono::steady_clock::now();
        const double lr = lr_at(epoch, cfg);
        adam.cfg.lr = lr;

        std::vector<std::size_t> order = split.train;
        Rng shuffle_rng(mix_seed(cfg.seed, 0xEB0C0000ull + static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(order);

        PassStats train_acc;
        std::size_t done = 0;
        int batch_index = 0;
        while (done < order.size()) {
            const std::size_t end =
                std::min(order.size(), done + static_cast<std::size_t>(cfg.batch_size));
            try {
                Batch b = make_batch(ds, order, done, end);
                BatchVec prior;
                const BatchVec* prior_ptr = nullptr;
                if (model.unified()) {
                    prior = prior_batch<float>(b.phases);
                    prior_ptr = &prior;
                }
                ForwardCache cache;
                Tensor4 pred = model_forward(model, b.x, prior_ptr, BnMode::Train, &cache);
                LossResult<float> l = combined_loss(pred, b.y, cfg.ssim_weight, /*with_grad=*/true);
                model.zero_grads();
                model_backward(model, l.grad, cache);
                adam.step(params);
                const double n = static_cast<double>(end - done);
                train_acc.loss += l.loss * n;
                train_acc.mae += l.mae * n;
            } catch (const NumericError& e) {
                std::ostringstream msg;
                msg << e.what() << " (epoch " << epoch << ", batch " << batch_index << ", lr "
                    << lr << ")";
                throw NumericError(msg.str());
            }
            done = end;
            ++batch_index;
        }
        train_acc.loss /= static_cast<double>(order.size());
        train_acc.mae /= static_cast<double>(order.size());

        const PassStats val_acc = eval_pass(model, ds, val_idx, cfg);

        EpochStats es;
        es.epoch = epoch;
        es.lr = lr;
        es.train_loss = train_acc.loss;
        es.train_mae_hu = train_acc.mae * kHuRange;
        es.val_loss = val_acc.loss;
        es.val_mae_hu = val_acc.mae * kHuRange;
        es.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_epoch).count();
        report.epochs.push_back(es);

        if (log != nullptr) {
            char line[256];
            std::snprintf(line, sizeof(line), "%d\t%.8e\t%.6f\t%.3f\t%.6f\t%.3f\t%.2f\n", epoch,
                          es.lr, es.train_loss, es.train_mae_hu, es.val_loss, es.val_mae_hu,
                          es.seconds);
            (*log) << line << std::flush;
        }

        if ((epoch + 1) % cfg.checkpoint_every == 0)
            save_checkpoint(model, (fs::path(out_dir) / ckpt_name(epoch)).string());
        if (es.val_mae_hu < report.best_val_mae_hu) {
            report.best_val_mae_hu = es.val_mae_hu;
            report.best_epoch = epoch;
            report.best_checkpoint = (fs::path(out_dir) / "best.vmck").string();
            save_checkpoint(model, report.best_checkpoint);
        }
    }

    report.final_checkpoint = (fs::path(out_dir) / "final.vmck").string();
    save_checkpoint(model, report.final_checkpoint);
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return report;
}

Json train_report_to_json(const TrainReport& report) {
    Json j;
    j["wall_seconds"] = report.wall_seconds;
    j["best_epoch"] = report.best_epoch;
    j["best_val_mae_hu"] = report.best_val_mae_hu;
    j["best_checkpoint"] = report.best_checkpoint;
    j["final_checkpoint"] = report.final_checkpoint;
    Json rows = Json::array();
    for (const EpochStats& e : report.epochs) {
        Json r;
        r["epoch"] = e.epoch;
        r["lr"] = e.lr;
        r["train_loss"] = e.train_loss;
        r["train_mae_hu"] = e.train_mae_hu;
        r["val_loss"] = e.val_loss;
        r["val_mae_hu"] = e.val_mae_hu;
        r["seconds"] = e.seconds;
        rows.push_back(std::move(r));
    }
    j["epochs"] = std::move(rows);
    return j;
}

std::vector<MetricRow> evaluate(UnifiedModel& model, const Dataset& ds, std::ostream* warn) {
    if (ds.items.empty()) throw ArgumentError("evaluate: empty dataset");

    std::array<std::vector<double>, kNumPhases> maes, rmses, ssims;
    std::size_t done = 0;
    const std::size_t bs = 16;
    while (done < ds.items.size()) {
        std::size_t end = std::min(ds.items.size(), done + bs);
        // Keep dims uniform within the forward batch.
        for (std::size_t k = done + 1; k < end; ++k)
            if (!ds.items[k].img70.same_shape(ds.items[done].img70)) {
                end = k;
                break;
            }

        const int n = static_cast<int>(end - done);
        const ImageF& first = ds.items[done].img70;
        Tensor4 x(n, 1, first.h, first.w);
        std::vector<ContrastPhase> phases;
        for (std::size_t k = done; k < end; ++k) {
            float* xr = x.channel(static_cast<int>(k - done), 0);
            for (std::size_t i = 0; i < ds.items[k].img70.size(); ++i)
                xr[i] = normalize_hu(ds.items[k].img70.v[i]);
            phases.push_back(ds.items[k].phase);
        }
        BatchVec prior;
        const BatchVec* prior_ptr = nullptr;
        if (model.unified()) {
            prior = prior_batch<float>(phases);
            prior_ptr = &prior;
        }
        Tensor4 pred = model_forward(model, x, prior_ptr, BnMode::Eval);

        for (std::size_t k = done; k < end; ++k) {
            const PatchPair& item = ds.items[k];
            const float* pr = pred.channel(static_cast<int>(k - done), 0);
            ImageF pred_hu(item.img70.h, item.img70.w);
            ImageF pred_norm(item.img70.h, item.img70.w);
            ImageF tgt_norm(item.img70.h, item.img70.w);
            for (std::size_t i = 0; i < pred_hu.size(); ++i) {
                pred_norm.v[i] = pr[i];
                pred_hu.v[i] = denormalize_hu(pr[i]);
                tgt_norm.v[i] = normalize_hu(item.img50.v[i]);
            }
            const MaskF mask = body_mask_from_hu(item.img70);
            const int pc = phase_code(item.phase);
            maes[pc].push_back(mae_hu(pred_hu, item.img50, mask));
            rmses[pc].push_back(rmse_hu(pred_hu, item.img50, mask));
            ssims[pc].push_back(ssim(pred_norm, tgt_norm, 1.0));
        }
        done = end;
    }

    std::vector<MetricRow> rows;
    for (int pc = 0; pc < kNumPhases; ++pc) {
        if (maes[pc].empty()) {
            if (warn != nullptr)
                (*warn) << "warning: phase '" << phase_name(phase_from_code(pc))
                        << "' absent from dataset; row omitted\n";
            continue;
        }
        MetricRow row;
        row.phase = phase_from_code(pc);
        row.mae_hu = mean_std(maes[pc]);
        row.rmse_hu = mean_std(rmses[pc]);
        row.ssim = mean_std(ssims[pc]);
        row.n_samples = static_cast<int>(maes[pc].size());
        rows.push_back(row);
    }
    return rows;
}

Json metric_rows_to_json(const std::vector<MetricRow>& rows) {
    Json arr = Json::array();
    for (const MetricRow& r : rows) {
        Json j;
        j["phase"] = phase_name(r.phase);
        j["n_samples"] = r.n_samples;
        j["mae_hu"] = {{"mean", r.mae_hu.mean}, {"std", r.mae_hu.std}};
        j["rmse_hu"] = {{"mean", r.rmse_hu.mean}, {"std", r.rmse_hu.std}};
        j["ssim"] = {{"mean", r.ssim.mean}, {"std", r.ssim.std}};
        arr.push_back(std::move(j));
    }
    Json out;
    out["rows"] = std::move(arr);
    return out;
}

std::string metric_rows_text(const std::vector<MetricRow>& rows) {
    char line[256];
    std::string out;
    std::snprintf(line, sizeof(line), "%-10s %8s  %-16s %-16s %-16s\n", "Phase", "N", "MAE (HU)",
                  "RMSE (HU)", "SSIM");
    out += line;
    out += std::string(70, '-') + "\n";
    for (const MetricRow& r : rows) {
        char mae[32], rmse[32], ss[32];
        std::snprintf(mae, sizeof(mae), "%.2f +/- %.2f", r.mae_hu.mean, r.mae_hu.std);
        std::snprintf(rmse, sizeof(rmse), "%.2f +/- %.2f", r.rmse_hu.mean, r.rmse_hu.std);
        std::snprintf(ss, sizeof(ss), "%.4f +/- %.4f", r.ssim.mean, r.ssim.std);
        std::snprintf(line, sizeof(line), "%-10s %8d  %-16s %-16s %-16s\n",
                      phase_name(r.phase).c_str(), r.n_samples, mae, rmse, ss);
        out += line;
    }
    return out;
}

}  // namespace vmct
