// vmct: command-line front end for the dual-energy conversion bench.
// Subcommands: gen-data, train, infer, eval, profile, analyze-pcv.
//
// Exit codes: 0 success; 2 configuration/usage errors; 3 data/format/IO
// errors; 4 numeric failures (NaN/Inf).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vmct/analysis.hpp"
#include "vmct/blas.hpp"
#include "vmct/checkpoint.hpp"
#include "vmct/config.hpp"
#include "vmct/dataset.hpp"
#include "vmct/errors.hpp"
#include "vmct/imagefmt.hpp"
#include "vmct/profiler.hpp"
#include "vmct/train.hpp"

namespace fs = std::filesystem;
using namespace vmct;

namespace {

// Sidecar JSON describing the run, written next to each command's outputs so
// a results directory is self-describing.
void write_sidecar(const fs::path& path, Json j) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write '" + path.string() + "'");
    f << j.dump(2) << "\n";
    f.flush();
    if (!f) throw IoError("write failed for '" + path.string() + "'");
}

fs::path sidecar_for(const fs::path& out_file) {
    fs::path p = out_file;
    p.replace_extension(".resolved.json");
    return p;
}

void write_json_file(const fs::path& path, const Json& j) { write_sidecar(path, j); }

Json model_json(UnifiedModel& model) {
    Json j;
    j["mode"] = mode_name(model.mode);
    j["arch"] = arch_to_json(model.cfg);
    return j;
}

// Symmetric (edge-inclusive) reflection index into [0, n).
int reflect_index(int i, int n) {
    while (i < 0 || i >= n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - 1 - i;
    }
    return i;
}

ImageF pad_to_multiple16(const ImageF& img, int& out_h, int& out_w) {
    out_h = (img.h + 15) / 16 * 16;
    out_w = (img.w + 15) / 16 * 16;
    if (out_h == img.h && out_w == img.w) return img;
    ImageF padded(out_h, out_w);
    for (int r = 0; r < out_h; ++r)
        for (int c = 0; c < out_w; ++c)
            padded.at(r, c) = img.at(reflect_index(r, img.h), reflect_index(c, img.w));
    return padded;
}

// ---------------------------------------------------------------------------
// gen-data
// ---------------------------------------------------------------------------

struct GenDataArgs {
    std::string config, out, phases, noise;
    bool force = false;
};

void run_gen_data(const GenDataArgs& a) {
    RunConfig rc = load_run_config(a.config);
    if (!a.phases.empty()) rc.data.phases = parse_phase_list(a.phases);
    if (!a.noise.empty()) {
        if (a.noise == "on")
            rc.data.noise = true;
        else if (a.noise == "off")
            rc.data.noise = false;
        else
            throw ConfigError("--noise must be 'on' or 'off'");
    }
    rc.data.validate();
    if (fs::exists(a.out) && !fs::is_empty(a.out) && !a.force)
        throw ArgumentError("output directory '" + a.out + "' is not empty (use --force)");

    const Dataset ds = generate_dataset(rc.data, rc.seeds.data);
    save_dataset(a.out, ds);
    save_run_config((fs::path(a.out) / "config.resolved.json").string(), rc);
    std::cout << "wrote " << ds.items.size() << " patch pairs (" << rc.data.phases.size()
              << " phases x " << rc.data.n_per_phase << ", " << ds.patch << "x" << ds.patch
              << ", noise " << (ds.noise ? "on" : "off") << ") to " << a.out << "\n";
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
    std::string config, data, out, mode, phase, resume_from;
    int resume_epoch = 0;
};

void run_train(const TrainArgs& a) {
    RunConfig rc = load_run_config(a.config);
    if (!a.mode.empty()) rc.train.mode = mode_from_name(a.mode);
    if (!a.phase.empty()) rc.train.phases = {phase_from_name(a.phase)};
    if (rc.train.mode == ModelMode::Standalone && rc.train.phases.size() != 1)
        throw ConfigError("standalone training requires --phase (exactly one phase)");
    if (!a.resume_from.empty() && a.resume_epoch < 0)
        throw ConfigError("--resume-epoch must be >= 0");

    const Dataset ds = load_dataset(a.data);
    UnifiedModel model = a.resume_from.empty()
                             ? build_model<float>(rc.arch, rc.train.mode, rc.seeds.init)
                             : load_checkpoint(a.resume_from);
    if (!a.resume_from.empty()) {
        if (!(model.cfg == rc.arch))
            throw ConfigError("checkpoint architecture differs from --config arch");
        if (model.mode != rc.train.mode)
            throw ConfigError("checkpoint mode differs from requested training mode");
    }

    fs::create_directories(a.out);
    save_run_config((fs::path(a.out) / "config.resolved.json").string(), rc);
    const TrainReport report = fit(model, ds, rc.train, a.out, &std::cout,
                                   a.resume_from.empty() ? 0 : a.resume_epoch);
    write_json_file(fs::path(a.out) / "train_report.json", train_report_to_json(report));
    std::cout << "best epoch " << report.best_epoch << " (val MAE "
              << report.best_val_mae_hu << " HU), final checkpoint " << report.final_checkpoint
              << "\n";
}

// ---------------------------------------------------------------------------
// infer
// ---------------------------------------------------------------------------

struct InferArgs {
    std::string model, in, out, phase;
    std::vector<double> export_pgm;  // WL WW when present
};

void run_infer(const InferArgs& a) {
    UnifiedModel model = load_checkpoint(a.model);
    const VmctImage input = read_vmct(a.in);

    ContrastPhase phase = ContrastPhase::Angio;
    bool have_phase = false;
    if (model.unified()) {
        if (!a.phase.empty()) {
            phase = phase_from_name(a.phase);
        } else if (input.phase_code >= 0) {
            phase = phase_from_code(input.phase_code);
        } else {
            throw ConfigError(
                "unified checkpoint needs a phase: pass --phase or use an input file whose "
                "header carries one");
        }
        have_phase = true;
    } else if (!a.phase.empty()) {
        std::cerr << "warning: standalone checkpoint ignores --phase\n";
    }

    VmctImage output;
    output.phase_code = have_phase ? phase_code(phase) : input.phase_code;
    BatchVec prior;
    const BatchVec* prior_ptr = nullptr;
    if (model.unified()) {
        prior = prior_batch<float>({phase});
        prior_ptr = &prior;
    }
    for (const ImageF& slice : input.slices) {
        int ph = 0, pw = 0;
        const ImageF padded = pad_to_multiple16(slice, ph, pw);
        Tensor4 x(1, 1, ph, pw);
        for (std::size_t i = 0; i < padded.size(); ++i) x.values[i] = normalize_hu(padded.v[i]);
        const Tensor4 y = model_forward(model, x, prior_ptr, BnMode::Eval);
        ImageF out_slice(slice.h, slice.w);
        for (int r = 0; r < slice.h; ++r)
            for (int c = 0; c < slice.w; ++c)
                out_slice.at(r, c) = denormalize_hu(y.values[static_cast<std::size_t>(r) * pw + c]);
        output.slices.push_back(std::move(out_slice));
    }
    write_vmct(a.out, output);

    if (!a.export_pgm.empty()) {
        DisplayWindow win;
        win.wl = static_cast<float>(a.export_pgm[0]);
        win.ww = static_cast<float>(a.export_pgm[1]);
        for (std::size_t s = 0; s < output.slices.size(); ++s) {
            fs::path p(a.out);
            p.replace_extension("");
            std::string stem = p.string();
            if (output.slices.size() > 1) {
                char suffix[16];
                std::snprintf(suffix, sizeof(suffix), "_slice%02zu", s);
                stem += suffix;
            }
            export_pgm16(stem + ".pgm", output.slices[s], win);
        }
    }

    Json j;
    j["command"] = "infer";
    j["model"] = a.model;
    j["input"] = a.in;
    j["output"] = a.out;
    j["phase"] = have_phase ? Json(phase_name(phase)) : Json(nullptr);
    j["model_info"] = model_json(model);
    write_sidecar(sidecar_for(a.out), std::move(j));
    std::cout << "wrote " << output.slices.size() << " slice(s) to " << a.out << "\n";
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
    std::string model, data, out;
};

void run_eval(const EvalArgs& a) {
    UnifiedModel model = load_checkpoint(a.model);
    const Dataset ds = load_dataset(a.data);
    const std::vector<MetricRow> rows = evaluate(model, ds, &std::cerr);

    Json j = metric_rows_to_json(rows);
    j["model"] = a.model;
    j["data"] = a.data;
    j["model_info"] = model_json(model);
    write_json_file(a.out, j);

    Json side;
    side["command"] = "eval";
    side["model"] = a.model;
    side["data"] = a.data;
    side["model_info"] = model_json(model);
    write_sidecar(sidecar_for(a.out), std::move(side));
    std::cout << metric_rows_text(rows);
}

// ---------------------------------------------------------------------------
// profile
// ---------------------------------------------------------------------------

struct ProfileArgs {
    std::string model, out, compare;
    int size = 512;
    int batch = 1;
    int warmup = 2;
    int runs = 10;
    bool no_timing = false;
};

void run_profile(const ProfileArgs& a) {
    UnifiedModel model = load_checkpoint(a.model);
    const ProfileReport rep =
        profile_model(model, a.size, a.batch, a.warmup, a.runs, !a.no_timing);

    Json j;
    j["report"] = profile_report_to_json(rep);
    if (!a.compare.empty()) {
        UnifiedModel base_model = load_checkpoint(a.compare);
        const ProfileReport base =
            profile_model(base_model, a.size, a.batch, a.warmup, a.runs, !a.no_timing);
        j["baseline"] = profile_report_to_json(base);
        std::cout << profile_report_text(rep, &base);
    } else {
        std::cout << profile_report_text(rep);
    }
    write_json_file(a.out, j);

    Json side;
    side["command"] = "profile";
    side["model"] = a.model;
    side["compare"] = a.compare.empty() ? Json(nullptr) : Json(a.compare);
    side["size"] = a.size;
    side["batch"] = a.batch;
    side["model_info"] = model_json(model);
    write_sidecar(sidecar_for(a.out), std::move(side));
}

// ---------------------------------------------------------------------------
// analyze-pcv
// ---------------------------------------------------------------------------

struct AnalyzePcvArgs {
    std::string model, data, out;
};

void run_analyze_pcv(const AnalyzePcvArgs& a) {
    UnifiedModel model = load_checkpoint(a.model);
    const Dataset ds = load_dataset(a.data);
    const std::vector<PcvRecord> records = extract_pcvs(model, ds);

    const double sil = pcv_silhouette(records);
    if (sil <= 0.0)
        std::cerr << "warning: phase clusters are degenerate or unseparated (silhouette <= 0)\n";
    const PcaResult pca = pca_project(records, 2);
    if (pca.rank_deficient)
        std::cerr << "warning: PCV covariance is rank-deficient; " << pca.n_components
                  << " component(s) returned\n";

    fs::create_directories(a.out);
    write_pcv_csv((fs::path(a.out) / "pcvs.csv").string(), records);
    write_projection_csv((fs::path(a.out) / "projection.csv").string(), records, pca);
    write_json_file(fs::path(a.out) / "analysis.json", pcv_analysis_json(records, sil, pca));

    Json side;
    side["command"] = "analyze-pcv";
    side["model"] = a.model;
    side["data"] = a.data;
    side["model_info"] = model_json(model);
    write_sidecar(fs::path(a.out) / "config.resolved.json", std::move(side));

    char buf[64];
    std::snprintf(buf, sizeof(buf), "silhouette: %.4f\n", sil);
    std::cout << buf;
}

}  // namespace

int main(int argc, char** argv) {
    blas_bootstrap(argc, argv);

    CLI::App app{"vmct: phase-conditioned 70->50 keV conversion bench"};
    app.require_subcommand(1);

    GenDataArgs gen;
    auto* cmd_gen = app.add_subcommand("gen-data", "Generate a synthetic patch dataset");
    cmd_gen->add_option("--config", gen.config, "Run config JSON")->required();
    cmd_gen->add_option("--out", gen.out, "Output dataset directory")->required();
    cmd_gen->add_option("--phases", gen.phases, "Comma-separated phase names");
    cmd_gen->add_option("--noise", gen.noise, "Override noise: on|off");
    cmd_gen->add_flag("--force", gen.force, "Write into a non-empty directory");
    cmd_gen->callback([&] { run_gen_data(gen); });

    TrainArgs tr;
    auto* cmd_train = app.add_subcommand("train", "Train a model on a dataset directory");
    cmd_train->add_option("--config", tr.config, "Run config JSON")->required();
    cmd_train->add_option("--data", tr.data, "Dataset directory (gen-data output)")->required();
    cmd_train->add_option("--out", tr.out, "Output run directory")->required();
    cmd_train->add_option("--mode", tr.mode, "unified|standalone (overrides config)");
    cmd_train->add_option("--phase", tr.phase, "Single training phase (required for standalone)");
    cmd_train->add_option("--resume-from", tr.resume_from, "Checkpoint to resume from");
    cmd_train->add_option("--resume-epoch", tr.resume_epoch,
                          "Epoch the resumed checkpoint was saved at");
    cmd_train->callback([&] { run_train(tr); });

    InferArgs inf;
    auto* cmd_infer = app.add_subcommand("infer", "Convert a 70 keV VMCT file to 50 keV");
    cmd_infer->add_option("--model", inf.model, "Checkpoint (.vmck)")->required();
    cmd_infer->add_option("--in", inf.in, "Input .vmct file")->required();
    cmd_infer->add_option("--out", inf.out, "Output .vmct file")->required();
    cmd_infer->add_option("--phase", inf.phase, "Contrast phase (overrides file header)");
    cmd_infer->add_option("--export-pgm", inf.export_pgm, "Also write PGM16 with window WL WW")
        ->expected(2);
    cmd_infer->callback([&] { run_infer(inf); });

    EvalArgs ev;
    auto* cmd_eval = app.add_subcommand("eval", "Per-phase metric table for a dataset");
    cmd_eval->add_option("--model", ev.model, "Checkpoint (.vmck)")->required();
    cmd_eval->add_option("--data", ev.data, "Dataset directory")->required();
    cmd_eval->add_option("--out", ev.out, "Report JSON path")->required();
    cmd_eval->callback([&] { run_eval(ev); });

    ProfileArgs pr;
    auto* cmd_profile = app.add_subcommand("profile", "Parameter/MAC/memory/latency report");
    cmd_profile->add_option("--model", pr.model, "Checkpoint (.vmck)")->required();
    cmd_profile->add_option("--out", pr.out, "Report JSON path")->required();
    cmd_profile->add_option("--size", pr.size, "Input side length (multiple of 16)");
    cmd_profile->add_option("--batch", pr.batch, "Batch size for the memory estimate");
    cmd_profile->add_option("--compare", pr.compare, "Baseline checkpoint for overhead column");
    cmd_profile->add_option("--warmup", pr.warmup, "Warmup runs before timing");
    cmd_profile->add_option("--runs", pr.runs, "Timed runs (>= 3)");
    cmd_profile->add_flag("--no-timing", pr.no_timing, "Skip wall-clock timing");
    cmd_profile->callback([&] { run_profile(pr); });

    AnalyzePcvArgs an;
    auto* cmd_an = app.add_subcommand("analyze-pcv", "Extract and analyze PCVs");
    cmd_an->add_option("--model", an.model, "Unified checkpoint (.vmck)")->required();
    cmd_an->add_option("--data", an.data, "Dataset directory")->required();
    cmd_an->add_option("--out", an.out, "Output directory")->required();
    cmd_an->callback([&] { run_analyze_pcv(an); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 4;
    } catch (const FormatError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return 3;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 3;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
