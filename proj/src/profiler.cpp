#include "vmct/profiler.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include "vmct/checkpoint.hpp"
#include "vmct/errors.hpp"
#include "vmct/rng.hpp"

namespace vmct {

namespace {

void check_profile_dims(int h, int w) {
    if (h < 16 || w < 16 || h % 16 != 0 || w % 16 != 0)
        throw ArgumentError("profiler: h and w must be positive multiples of 16");
}

std::size_t conv_macs(const ParamArray& w, std::size_t h_out, std::size_t w_out) {
    const std::size_t c_out = static_cast<std::size_t>(w.dim(0));
    const std::size_t c_in = static_cast<std::size_t>(w.dim(1));
    const std::size_t k = static_cast<std::size_t>(w.dim(2));
    return k * k * c_in * c_out * h_out * w_out;
}

std::size_t linear_macs(const ParamArray& w) {
    return static_cast<std::size_t>(w.dim(0)) * static_cast<std::size_t>(w.dim(1));
}

}  // namespace

std::vector<LayerProfile> profile_layers(UnifiedModel& model, int h, int w) {
    check_profile_dims(h, w);
    std::vector<LayerProfile> rows;
    auto push = [&](const std::string& name, const std::string& kind, std::size_t params,
                    std::size_t macs) { rows.push_back({name, kind, params, macs}); };
    auto conv_row = [&](ConvLayer& c, std::size_t hs, std::size_t ws) {
        push(c.w.name.substr(0, c.w.name.size() - 7 /* ".weight" */), "conv",
             c.w.size() + c.b.size(), conv_macs(c.w, hs, ws));
    };
    auto bn_row = [&](BnLayer& bn) {
        push(bn.name, "bn", bn.gamma.size() + bn.beta.size(), 0);
    };
    auto dc_rows = [&](DoubleConv& d, std::size_t hs, std::size_t ws) {
        conv_row(d.conv1, hs, ws);
        bn_row(d.bn1);
        conv_row(d.conv2, hs, ws);
        bn_row(d.bn2);
    };

    for (int lvl = 0; lvl < 4; ++lvl)
        dc_rows(model.enc[lvl], static_cast<std::size_t>(h) >> lvl,
                static_cast<std::size_t>(w) >> lvl);
    dc_rows(model.bottleneck, static_cast<std::size_t>(h) >> 4, static_cast<std::size_t>(w) >> 4);
    for (int lvl = 3; lvl >= 0; --lvl) {
        const std::size_t hs = static_cast<std::size_t>(h) >> lvl;
        const std::size_t ws = static_cast<std::size_t>(w) >> lvl;
        // Transpose conv counted per output pixel, like same-padded convs.
        const ParamArray& uw = model.dec[lvl].up.w;
        push(uw.name.substr(0, uw.name.size() - 7), "conv_transpose",
             uw.size() + model.dec[lvl].up.b.size(),
             4 * static_cast<std::size_t>(uw.dim(0)) * static_cast<std::size_t>(uw.dim(1)) * hs *
                 ws);
        dc_rows(model.dec[lvl].dc, hs, ws);
    }
    conv_row(model.out, static_cast<std::size_t>(h), static_cast<std::size_t>(w));

    for (int lvl = 0; lvl < static_cast<int>(model.pcm.size()); ++lvl) {
        const std::string base = "pcm" + std::to_string(lvl + 1);
        const std::size_t c = static_cast<std::size_t>(model.cfg.level_channels(lvl));
        push(base + ".gap", "gap", 0,
             c * (static_cast<std::size_t>(h) >> lvl) * (static_cast<std::size_t>(w) >> lvl));
        PcmLevel& p = model.pcm[lvl];
        for (Mlp2* m : {&p.peb, &p.feat, &p.fuse})
            for (LinearLayer* fc : {&m->fc1, &m->fc2})
                push(fc->w.name.substr(0, fc->w.name.size() - 7), "linear",
                     fc->w.size() + fc->b.size(), linear_macs(fc->w));
    }
    return rows;
}

std::size_t count_params(UnifiedModel& model) { return model.param_count(); }

std::size_t count_macs(UnifiedModel& model, int h, int w) {
    std::size_t total = 0;
    for (const LayerProfile& r : profile_layers(model, h, w)) total += r.macs;
    return total;
}

// ---------------------------------------------------------------------------
// Peak activation estimate: liveness over the forward schedule
// ---------------------------------------------------------------------------

namespace {

struct SimTensor {
    std::string name;
    std::size_t values = 0;
    int created = -1;  // -1: network input, live from the start
    int last_use = -1;
};

struct SimOp {
    std::string name;
    int output = -1;
};

class ScheduleSim {
public:
    int input(const std::string& name, std::size_t values) {
        tensors_.push_back({name, values, -1, -1});
        return static_cast<int>(tensors_.size()) - 1;
    }

    int op(const std::string& name, std::initializer_list<int> inputs, std::size_t out_values) {
        const int op_index = static_cast<int>(ops_.size());
        for (int t : inputs) tensors_[static_cast<std::size_t>(t)].last_use = op_index;
        tensors_.push_back({name + ".out", out_values, op_index, op_index});
        const int out_id = static_cast<int>(tensors_.size()) - 1;
        ops_.push_back({name, out_id});
        return out_id;
    }

    // Max over ops of the bytes live while that op runs.
    PeakEstimate peak(std::size_t bytes_per_value) const {
        PeakEstimate best;
        for (int i = 0; i < static_cast<int>(ops_.size()); ++i) {
            std::size_t live = 0;
            for (const SimTensor& t : tensors_)
                if (t.created <= i && i <= std::max(t.last_use, t.created)) live += t.values;
            const std::size_t bytes = live * bytes_per_value;
            if (bytes > best.bytes) {
                best.bytes = bytes;
                best.at_op = ops_[static_cast<std::size_t>(i)].name;
            }
        }
        return best;
    }

private:
    std::vector<SimTensor> tensors_;
    std::vector<SimOp> ops_;
};

}  // namespace

PeakEstimate estimate_peak_activation_bytes(UnifiedModel& model, int h, int w, int batch) {
    check_profile_dims(h, w);
    if (batch < 1) throw ArgumentError("profiler: batch must be positive");
    const ArchConfig& cfg = model.cfg;
    const std::size_t b = static_cast<std::size_t>(batch);
    auto plane = [&](int lvl) {
        return b * (static_cast<std::size_t>(h) >> lvl) * (static_cast<std::size_t>(w) >> lvl);
    };

    ScheduleSim sim;
    int x = sim.input("input", b * static_cast<std::size_t>(cfg.in_channels) *
                                   static_cast<std::size_t>(h) * static_cast<std::size_t>(w));
    auto dc = [&](const std::string& name, int in, std::size_t c, std::size_t s) {
        int t = sim.op(name + ".conv1", {in}, c * s);
        t = sim.op(name + ".bn1", {t}, c * s);
        t = sim.op(name + ".relu1", {t}, c * s);
        t = sim.op(name + ".conv2", {t}, c * s);
        t = sim.op(name + ".bn2", {t}, c * s);
        return sim.op(name + ".relu2", {t}, c * s);
    };

    std::array<int, 4> skips{};
    int cur = x;
    for (int lvl = 0; lvl < 4; ++lvl) {
        const std::size_t c = static_cast<std::size_t>(cfg.level_channels(lvl));
        skips[lvl] = dc("ecm.enc" + std::to_string(lvl + 1), cur, c, plane(lvl));
        cur = sim.op("ecm.pool" + std::to_string(lvl + 1), {skips[lvl]}, c * plane(lvl + 1));
    }
    cur = dc("ecm.bottleneck", cur, static_cast<std::size_t>(cfg.bottleneck_channels), plane(4));

    std::array<int, 4> pcv{-1, -1, -1, -1};
    if (model.unified()) {
        const int prior = sim.input("prior", b * static_cast<std::size_t>(cfg.prior_dim));
        for (int lvl = 0; lvl < 4; ++lvl) {
            const std::string base = "pcm" + std::to_string(lvl + 1);
            const std::size_t c = static_cast<std::size_t>(cfg.level_channels(lvl));
            const std::size_t hidden = static_cast<std::size_t>(cfg.pcm_hidden);
            const std::size_t embed = static_cast<std::size_t>(cfg.embed_dim);
            int gap = sim.op(base + ".gap", {skips[lvl]}, b * c);
            int e = sim.op(base + ".peb.fc1", {prior}, b * hidden);
            e = sim.op(base + ".peb.fc2", {e}, b * embed);
            int fv = sim.op(base + ".feat.fc1", {gap}, b * hidden);
            fv = sim.op(base + ".feat.fc2", {fv}, b * embed);
            int cat = sim.op(base + ".concat", {e, fv}, 2 * b * embed);
            int v = sim.op(base + ".fuse.fc1", {cat}, b * hidden);
            pcv[lvl] = sim.op(base + ".fuse.fc2", {v}, b * c);
        }
    }

    for (int lvl = 3; lvl >= 0; --lvl) {
        const std::string base = "ecm.dec" + std::to_string(lvl + 1);
        const std::size_t c = static_cast<std::size_t>(cfg.level_channels(lvl));
        int u = sim.op(base + ".up", {cur}, c * plane(lvl));
        int cat = sim.op(base + ".concat", {u, skips[lvl]}, 2 * c * plane(lvl));
        cur = dc(base, cat, c, plane(lvl));
        if (model.unified()) cur = sim.op(base + ".scale", {cur, pcv[lvl]}, c * plane(lvl));
    }
    sim.op("ecm.out", {cur}, b * static_cast<std::size_t>(cfg.out_channels) *
                                 static_cast<std::size_t>(h) * static_cast<std::size_t>(w));
    return sim.peak(4);
}

// ---------------------------------------------------------------------------
// Timing
// ---------------------------------------------------------------------------

namespace {

std::string hardware_descriptor() {
    std::string name = "unknown-cpu";
    std::ifstream f("/proc/cpuinfo");
    std::string line;
    while (std::getline(f, line)) {
        const auto pos = line.find("model name");
        if (pos == std::string::npos) continue;
        const auto colon = line.find(':');
        if (colon == std::string::npos) continue;
        name = line.substr(colon + 1);
        const auto first = name.find_first_not_of(" \t");
        if (first != std::string::npos) name = name.substr(first);
        break;
    }
    std::ostringstream out;
    out << name << " (" << std::thread::hardware_concurrency() << " hw threads)";
    return out.str();
}

}  // namespace

TimingResult time_inference(UnifiedModel& model, int h, int w, int n_warmup, int n_runs) {
    check_profile_dims(h, w);
    if (n_runs < 3) throw ArgumentError("time_inference: n_runs must be >= 3");
    if (n_warmup < 0) throw ArgumentError("time_inference: negative n_warmup");

    Tensor4 x(1, model.cfg.in_channels, h, w);
    Rng rng(0x7157u);
    for (auto& v : x.values) v = static_cast<float>(rng.uniform());
    BatchVec prior;
    const BatchVec* prior_ptr = nullptr;
    if (model.unified()) {
        prior = prior_batch<float>({ContrastPhase::Portal});
        prior_ptr = &prior;
    }

    for (int i = 0; i < n_warmup; ++i) (void)model_forward(model, x, prior_ptr, BnMode::Eval);

    std::vector<double> ms;
    ms.reserve(static_cast<std::size_t>(n_runs));
    for (int i = 0; i < n_runs; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        (void)model_forward(model, x, prior_ptr, BnMode::Eval);
        const auto t1 = std::chrono::steady_clock::now();
        ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    double mean = 0.0;
    for (double v : ms) mean += v;
    mean /= static_cast<double>(n_runs);
    double var = 0.0;
    for (double v : ms) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n_runs);

    TimingResult r;
    r.mean_ms = mean;
    r.std_ms = std::sqrt(var);
    r.n_runs = n_runs;
    r.hardware = hardware_descriptor();
    return r;
}

// ---------------------------------------------------------------------------
// Report assembly
// ---------------------------------------------------------------------------

ProfileReport profile_model(UnifiedModel& model, int size, int batch, int n_warmup, int n_runs,
                            bool with_timing) {
    ProfileReport rep;
    rep.mode = mode_name(model.mode);
    rep.layers = profile_layers(model, size, size);
    for (const LayerProfile& r : rep.layers) {
        rep.params += r.params;
        rep.macs += r.macs;
    }
    rep.model_size_bytes = checkpoint_byte_size(model);
    rep.mac_h = rep.mac_w = size;
    rep.batch = batch;
    const PeakEstimate peak = estimate_peak_activation_bytes(model, size, size, batch);
    rep.peak_activation_bytes = peak.bytes;
    rep.peak_at_op = peak.at_op;
    if (with_timing) {
        const TimingResult t = time_inference(model, size, size, n_warmup, n_runs);
        rep.mean_inference_ms = t.mean_ms;
        rep.std_inference_ms = t.std_ms;
        rep.n_runs = t.n_runs;
        rep.hardware = t.hardware;
    }
    return rep;
}

Json profile_report_to_json(const ProfileReport& report) {
    Json j;
    j["mode"] = report.mode;
    j["params"] = report.params;
    j["model_size_bytes"] = report.model_size_bytes;
    j["macs"] = report.macs;
    j["macs_input"] = {{"h", report.mac_h}, {"w", report.mac_w}};
    j["flops_2x_macs"] = 2 * report.macs;
    j["batch"] = report.batch;
    j["peak_activation_bytes_estimate"] = report.peak_activation_bytes;
    j["peak_at_op"] = report.peak_at_op;
    if (report.mean_inference_ms >= 0.0) {
        j["inference_ms"] = {{"mean", report.mean_inference_ms},
                             {"std", report.std_inference_ms},
                             {"n_runs", report.n_runs}};
        j["hardware"] = report.hardware;
    }
    Json layers = Json::array();
    for (const LayerProfile& r : report.layers) {
        Json row;
        row["name"] = r.name;
        row["kind"] = r.kind;
        row["params"] = r.params;
        row["macs"] = r.macs;
        layers.push_back(std::move(row));
    }
    j["layers"] = std::move(layers);
    return j;
}

namespace {

std::string commas(std::size_t v) {
    std::string digits = std::to_string(v);
    std::string out;
    const int n = static_cast<int>(digits.size());
    for (int i = 0; i < n; ++i) {
        if (i > 0 && (n - i) % 3 == 0) out += ',';
        out += digits[static_cast<std::size_t>(i)];
    }
    return out;
}

std::string fixed(double v, int prec) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
    return buf;
}

std::string pct(double part, double whole) {
    if (whole == 0.0) return "n/a";
    return fixed(100.0 * part / whole, 2) + "%";
}

}  // namespace

std::string profile_report_text(const ProfileReport& report, const ProfileReport* baseline) {
    std::ostringstream out;
    auto row = [&](const std::string& metric, const std::string& a, const std::string& b,
                   const std::string& over) {
        char line[256];
        if (baseline != nullptr)
            std::snprintf(line, sizeof(line), "%-28s %-20s %-20s %s\n", metric.c_str(), a.c_str(),
                          b.c_str(), over.c_str());
        else
            std::snprintf(line, sizeof(line), "%-28s %s\n", metric.c_str(), a.c_str());
        out << line;
    };

    row("Metric", report.mode, baseline != nullptr ? baseline->mode : "",
        baseline != nullptr ? "Overhead" : "");
    out << std::string(baseline != nullptr ? 78 : 50, '-') << "\n";

    const double mb = 1e6;
    row("Parameters", commas(report.params),
        baseline != nullptr ? commas(baseline->params) : "",
        baseline != nullptr
            ? commas(report.params - std::min(report.params, baseline->params)) + " (" +
                  pct(static_cast<double>(report.params) - static_cast<double>(baseline->params),
                      static_cast<double>(baseline->params)) +
                  ")"
            : "");
    row("Model size (MB)", fixed(static_cast<double>(report.model_size_bytes) / mb, 2),
        baseline != nullptr ? fixed(static_cast<double>(baseline->model_size_bytes) / mb, 2) : "",
        baseline != nullptr
            ? fixed((static_cast<double>(report.model_size_bytes) -
                     static_cast<double>(baseline->model_size_bytes)) /
                        mb,
                    2) +
                  " (" +
                  pct(static_cast<double>(report.model_size_bytes) -
                          static_cast<double>(baseline->model_size_bytes),
                      static_cast<double>(baseline->model_size_bytes)) +
                  ")"
            : "");
    const std::string mac_metric =
        "MACs @ " + std::to_string(report.mac_h) + "x" + std::to_string(report.mac_w) + " (G)";
    row(mac_metric, fixed(static_cast<double>(report.macs) / 1e9, 3),
        baseline != nullptr ? fixed(static_cast<double>(baseline->macs) / 1e9, 3) : "",
        baseline != nullptr
            ? fixed((static_cast<double>(report.macs) - static_cast<double>(baseline->macs)) / 1e9,
                    3) +
                  " (" +
                  pct(static_cast<double>(report.macs) - static_cast<double>(baseline->macs),
                      static_cast<double>(baseline->macs)) +
                  ")"
            : "");
    row("Peak activations est. (MB)",
        fixed(static_cast<double>(report.peak_activation_bytes) / mb, 2),
        baseline != nullptr
            ? fixed(static_cast<double>(baseline->peak_activation_bytes) / mb, 2)
            : "",
        baseline != nullptr
            ? pct(static_cast<double>(report.peak_activation_bytes) -
                      static_cast<double>(baseline->peak_activation_bytes),
                  static_cast<double>(baseline->peak_activation_bytes))
            : "");
    if (report.mean_inference_ms >= 0.0) {
        std::string over;
        if (baseline != nullptr && baseline->mean_inference_ms > 0.0)
            over = "ratio " + fixed(report.mean_inference_ms / baseline->mean_inference_ms, 3);
        row("Inference time (ms)",
            fixed(report.mean_inference_ms, 2) + " +/- " + fixed(report.std_inference_ms, 2),
            baseline != nullptr && baseline->mean_inference_ms >= 0.0
                ? fixed(baseline->mean_inference_ms, 2) + " +/- " +
                      fixed(baseline->std_inference_ms, 2)
                : "",
            over);
        out << "hardware: " << report.hardware << "\n";
    }
    out << "peak at: " << report.peak_at_op << " (batch " << report.batch << ")\n";
    return out.str();
}

}  // namespace vmct
