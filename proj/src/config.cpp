#include "vmct/config.hpp"

#include <fstream>

#include "vmct/errors.hpp"

namespace vmct {

void ProfileConfig::validate() const {
    if (size < 16 || size % 16 != 0)
        throw ConfigError("profile: size must be a positive multiple of 16");
    if (batch < 1) throw ConfigError("profile: batch must be positive");
    if (n_warmup < 0) throw ConfigError("profile: n_warmup must be >= 0");
    if (n_runs < 3) throw ConfigError("profile: n_runs must be >= 3");
}

void RunConfig::validate() const {
    arch.validate();
    train.validate();
    data.validate();
    profile.validate();
}

std::vector<ContrastPhase> parse_phase_list(const std::string& csv) {
    std::vector<ContrastPhase> out;
    std::string token;
    auto flush = [&]() {
        if (token.empty()) return;
        const ContrastPhase p = phase_from_name(token);
        for (ContrastPhase q : out)
            if (q == p) throw ConfigError("duplicate phase '" + token + "'");
        out.push_back(p);
        token.clear();
    };
    for (char c : csv) {
        if (c == ',')
            flush();
        else if (c != ' ')
            token += c;
    }
    flush();
    if (out.empty()) throw ConfigError("empty phase list");
    return out;
}

Json phases_to_json(const std::vector<ContrastPhase>& phases) {
    Json arr = Json::array();
    for (ContrastPhase p : phases) arr.push_back(phase_name(p));
    return arr;
}

std::vector<ContrastPhase> phases_from_json(const Json& j, const std::string& ctx) {
    if (!j.is_array()) throw ConfigError(ctx + ": phases must be an array of names");
    std::vector<ContrastPhase> out;
    for (const Json& e : j) {
        if (!e.is_string()) throw ConfigError(ctx + ": phase entries must be strings");
        const ContrastPhase p = phase_from_name(e.get<std::string>());
        for (ContrastPhase q : out)
            if (q == p) throw ConfigError(ctx + ": duplicate phase '" + e.get<std::string>() + "'");
        out.push_back(p);
    }
    if (out.empty()) throw ConfigError(ctx + ": empty phase list");
    return out;
}

namespace {

Json train_to_json(const TrainConfig& t) {
    Json j;
    j["epochs"] = t.epochs;
    j["batch_size"] = t.batch_size;
    j["lr0"] = t.lr0;
    j["gamma"] = t.gamma;
    j["decay_every"] = t.decay_every;
    j["ssim_weight"] = t.ssim_weight;
    j["val_fraction"] = t.val_fraction;
    j["checkpoint_every"] = t.checkpoint_every;
    j["mode"] = mode_name(t.mode);
    j["phases"] = phases_to_json(t.phases);
    return j;
}

TrainConfig train_from_json(const Json& j) {
    check_keys(j, "train",
               {"epochs", "batch_size", "lr0", "gamma", "decay_every", "ssim_weight",
                "val_fraction", "checkpoint_every", "mode", "phases"});
    TrainConfig t;
    read_field(j, "train", "epochs", t.epochs);
    read_field(j, "train", "batch_size", t.batch_size);
    read_field(j, "train", "lr0", t.lr0);
    read_field(j, "train", "gamma", t.gamma);
    read_field(j, "train", "decay_every", t.decay_every);
    read_field(j, "train", "ssim_weight", t.ssim_weight);
    read_field(j, "train", "val_fraction", t.val_fraction);
    read_field(j, "train", "checkpoint_every", t.checkpoint_every);
    if (j.contains("mode")) t.mode = mode_from_name(j.at("mode").get<std::string>());
    if (j.contains("phases")) t.phases = phases_from_json(j.at("phases"), "train");
    return t;
}

Json data_to_json(const DataConfig& d) {
    Json j;
    j["n_per_phase"] = d.n_per_phase;
    j["patch"] = d.patch;
    j["phantom_size"] = d.phantom_size;
    j["phantoms_per_phase"] = d.phantoms_per_phase;
    j["noise"] = d.noise;
    j["phases"] = phases_to_json(d.phases);
    return j;
}

DataConfig data_from_json(const Json& j) {
    check_keys(j, "data",
               {"n_per_phase", "patch", "phantom_size", "phantoms_per_phase", "noise", "phases"});
    DataConfig d;
    read_field(j, "data", "n_per_phase", d.n_per_phase);
    read_field(j, "data", "patch", d.patch);
    read_field(j, "data", "phantom_size", d.phantom_size);
    read_field(j, "data", "phantoms_per_phase", d.phantoms_per_phase);
    read_field(j, "data", "noise", d.noise);
    if (j.contains("phases")) d.phases = phases_from_json(j.at("phases"), "data");
    return d;
}

Json profile_to_json(const ProfileConfig& p) {
    Json j;
    j["size"] = p.size;
    j["batch"] = p.batch;
    j["n_warmup"] = p.n_warmup;
    j["n_runs"] = p.n_runs;
    return j;
}

ProfileConfig profile_from_json(const Json& j) {
    check_keys(j, "profile", {"size", "batch", "n_warmup", "n_runs"});
    ProfileConfig p;
    read_field(j, "profile", "size", p.size);
    read_field(j, "profile", "batch", p.batch);
    read_field(j, "profile", "n_warmup", p.n_warmup);
    read_field(j, "profile", "n_runs", p.n_runs);
    return p;
}

Json seeds_to_json(const Seeds& s) {
    Json j;
    j["data"] = s.data;
    j["init"] = s.init;
    j["train"] = s.train;
    return j;
}

Seeds seeds_from_json(const Json& j) {
    check_keys(j, "seeds", {"data", "init", "train"});
    Seeds s;
    read_field(j, "seeds", "data", s.data);
    read_field(j, "seeds", "init", s.init);
    read_field(j, "seeds", "train", s.train);
    return s;
}

}  // namespace

Json run_config_to_json(const RunConfig& cfg) {
    Json j;
    j["arch"] = arch_to_json(cfg.arch);
    j["train"] = train_to_json(cfg.train);
    j["data"] = data_to_json(cfg.data);
    j["profile"] = profile_to_json(cfg.profile);
    j["seeds"] = seeds_to_json(cfg.seeds);
    return j;
}

RunConfig run_config_from_json(const Json& j) {
    check_keys(j, "config", {"arch", "train", "data", "profile", "seeds"});
    RunConfig cfg;
    if (j.contains("arch")) cfg.arch = arch_from_json(j.at("arch"));
    if (j.contains("train")) cfg.train = train_from_json(j.at("train"));
    if (j.contains("data")) cfg.data = data_from_json(j.at("data"));
    if (j.contains("profile")) cfg.profile = profile_from_json(j.at("profile"));
    if (j.contains("seeds")) cfg.seeds = seeds_from_json(j.at("seeds"));
    cfg.train.seed = cfg.seeds.train;
    cfg.validate();
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config '" + path + "'");
    Json j;
    try {
        j = Json::parse(f);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path + ": bad JSON: " + e.what());
    }
    return run_config_from_json(j);
}

void save_run_config(const std::string& path, const RunConfig& cfg) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write config '" + path + "'");
    f << run_config_to_json(cfg).dump(2) << "\n";
    f.flush();
    if (!f) throw IoError("config write failed for '" + path + "'");
}

}  // namespace vmct
