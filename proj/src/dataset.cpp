#include "vmct/dataset.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "vmct/errors.hpp"
#include "vmct/imagefmt.hpp"
#include "vmct/json_util.hpp"
#include "vmct/rng.hpp"

namespace fs = std::filesystem;

namespace vmct {

void DataConfig::validate() const {
    if (n_per_phase < 1) throw ConfigError("data: n_per_phase must be positive");
    if (patch < 16) throw ConfigError("data: patch must be >= 16");
    if (phantom_size < 64 || phantom_size % 16 != 0)
        throw ConfigError("data: phantom_size must be >= 64 and divisible by 16");
    if (patch > phantom_size) throw ConfigError("data: patch larger than phantom_size");
    if (phantoms_per_phase < 1) throw ConfigError("data: phantoms_per_phase must be positive");
    if (phases.empty()) throw ConfigError("data: no phases selected");
}

std::vector<PatchPair> extract_patches(const std::vector<PhantomSample>& samples, int n_per_phase,
                                       int patch, std::uint64_t seed) {
    if (samples.empty()) throw ArgumentError("extract_patches: no samples");
    for (const PhantomSample& s : samples)
        if (patch > s.img70.h || patch > s.img70.w)
            throw ArgumentError("extract_patches: patch larger than source image");

    std::vector<PatchPair> out;
    int next_id = 0;
    for (int pc = 0; pc < kNumPhases; ++pc) {
        const ContrastPhase phase = static_cast<ContrastPhase>(pc);
        std::vector<const PhantomSample*> pool;
        for (const PhantomSample& s : samples)
            if (s.phase == phase) pool.push_back(&s);
        if (pool.empty()) continue;

        Rng rng(mix_seed(seed, 0x9A7C0000ull + static_cast<std::uint64_t>(pc)));
        const std::size_t need_body =
            static_cast<std::size_t>(kPatchBodyFraction * patch * patch);
        for (int i = 0; i < n_per_phase; ++i) {
            const PhantomSample& src = *pool[static_cast<std::size_t>(rng.uniform_int(
                0, static_cast<std::int64_t>(pool.size()) - 1))];
            const MaskF mask = body_mask(src);
            bool placed = false;
            for (int attempt = 0; attempt < kPatchMaxAttempts && !placed; ++attempt) {
                const int r0 = static_cast<int>(rng.uniform_int(0, src.img70.h - patch));
                const int c0 = static_cast<int>(rng.uniform_int(0, src.img70.w - patch));
                std::size_t inside = 0;
                for (int r = 0; r < patch; ++r)
                    for (int c = 0; c < patch; ++c) inside += mask.at(r0 + r, c0 + c) ? 1 : 0;
                if (inside < need_body) continue;
                PatchPair pp;
                pp.id = next_id++;
                pp.phase = phase;
                pp.seed = src.seed;
                pp.img70 = ImageF(patch, patch);
                pp.img50 = ImageF(patch, patch);
                for (int r = 0; r < patch; ++r)
                    for (int c = 0; c < patch; ++c) {
                        pp.img70.at(r, c) = src.img70.at(r0 + r, c0 + c);
                        pp.img50.at(r, c) = src.img50.at(r0 + r, c0 + c);
                    }
                out.push_back(std::move(pp));
                placed = true;
            }
            if (!placed)
                throw DataError("extract_patches: no valid patch after " +
                                std::to_string(kPatchMaxAttempts) + " attempts (phase " +
                                phase_name(phase) + ")");
        }
    }
    return out;
}

Dataset generate_dataset(const DataConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    std::vector<PhantomSample> phantoms;
    for (ContrastPhase phase : cfg.phases) {
        const auto pc = static_cast<std::uint64_t>(phase_code(phase));
        for (int j = 0; j < cfg.phantoms_per_phase; ++j)
            phantoms.push_back(make_phantom(mix_seed(seed, pc * 0x10000ull + static_cast<std::uint64_t>(j)),
                                            phase, cfg.phantom_size, cfg.noise));
    }
    Dataset ds;
    ds.patch = cfg.patch;
    ds.noise = cfg.noise;
    ds.seed = seed;
    ds.items = extract_patches(phantoms, cfg.n_per_phase, cfg.patch, seed);
    return ds;
}

namespace {

std::string patch_stem(int id) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "patch_%05d", id);
    return buf;
}

}  // namespace

void save_dataset(const std::string& dir, const Dataset& ds) {
    fs::create_directories(dir);
    Json manifest;
    manifest["format"] = "vmct-dataset";
    manifest["version"] = 1;
    manifest["generator_version"] = kGeneratorVersion;
    manifest["patch"] = ds.patch;
    manifest["noise"] = ds.noise;
    manifest["seed"] = ds.seed;
    Json entries = Json::array();
    for (const PatchPair& p : ds.items) {
        const std::string stem = patch_stem(p.id);
        const std::string in_name = stem + "_70kev.vmct";
        const std::string tgt_name = stem + "_50kev.vmct";
        write_vmct((fs::path(dir) / in_name).string(), p.img70, phase_code(p.phase));
        write_vmct((fs::path(dir) / tgt_name).string(), p.img50, phase_code(p.phase));
        Json e;
        e["id"] = p.id;
        e["phase"] = phase_code(p.phase);
        e["phase_name"] = phase_name(p.phase);
        e["seed"] = p.seed;
        e["input"] = in_name;
        e["target"] = tgt_name;
        entries.push_back(std::move(e));
    }
    manifest["entries"] = std::move(entries);
    std::ofstream f(fs::path(dir) / "manifest.json", std::ios::trunc);
    if (!f) throw IoError("cannot write manifest in '" + dir + "'");
    f << manifest.dump(2) << "\n";
    f.flush();
    if (!f) throw IoError("manifest write failed in '" + dir + "'");
}

Dataset load_dataset(const std::string& dir) {
    const fs::path mpath = fs::path(dir) / "manifest.json";
    std::ifstream f(mpath);
    if (!f) throw IoError("cannot open manifest '" + mpath.string() + "'");
    Json manifest;
    try {
        manifest = Json::parse(f);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(mpath.string() + ": bad JSON: " + e.what());
    }
    try {
        check_keys(manifest, "manifest",
                   {"format", "version", "generator_version", "patch", "noise", "seed", "entries"});
    } catch (const ConfigError& e) {
        throw FormatError(mpath.string() + ": " + e.what());
    }
    for (const char* key : {"format", "version", "patch", "entries"})
        if (!manifest.contains(key))
            throw FormatError(mpath.string() + ": missing key '" + std::string(key) + "'");
    if (manifest.at("format").get<std::string>() != "vmct-dataset")
        throw FormatError(mpath.string() + ": not a vmct-dataset manifest");
    if (manifest.at("version").get<int>() != 1)
        throw FormatError(mpath.string() + ": unsupported manifest version");

    Dataset ds;
    ds.patch = manifest.at("patch").get<int>();
    if (manifest.contains("noise")) ds.noise = manifest.at("noise").get<bool>();
    if (manifest.contains("seed")) ds.seed = manifest.at("seed").get<std::uint64_t>();
    for (const Json& e : manifest.at("entries")) {
        try {
            check_keys(e, "manifest entry", {"id", "phase", "phase_name", "seed", "input", "target"});
        } catch (const ConfigError& err) {
            throw FormatError(mpath.string() + ": " + err.what());
        }
        PatchPair p;
        p.id = e.at("id").get<int>();
        p.phase = phase_from_code(e.at("phase").get<int>());
        if (e.contains("seed")) p.seed = e.at("seed").get<std::uint64_t>();
        const VmctImage in = read_vmct((fs::path(dir) / e.at("input").get<std::string>()).string());
        const VmctImage tgt = read_vmct((fs::path(dir) / e.at("target").get<std::string>()).string());
        if (in.slices.size() != 1 || tgt.slices.size() != 1)
            throw FormatError("dataset entry " + std::to_string(p.id) + ": expected single-slice files");
        if (in.phase_code != phase_code(p.phase) || tgt.phase_code != phase_code(p.phase))
            throw FormatError("dataset entry " + std::to_string(p.id) +
                              ": file phase code disagrees with manifest");
        p.img70 = in.slices[0];
        p.img50 = tgt.slices[0];
        if (!p.img70.same_shape(p.img50))
            throw FormatError("dataset entry " + std::to_string(p.id) + ": image dims differ");
        ds.items.push_back(std::move(p));
    }
    return ds;
}

SplitIndices split_train_val(const Dataset& ds, double val_fraction, std::uint64_t seed) {
    if (val_fraction < 0.0 || val_fraction >= 1.0)
        throw ArgumentError("split_train_val: val_fraction must be in [0,1)");
    SplitIndices out;
    for (int pc = 0; pc < kNumPhases; ++pc) {
        std::vector<std::size_t> idx = ds.indices_of_phase(static_cast<ContrastPhase>(pc));
        if (idx.empty()) continue;
        Rng rng(mix_seed(seed, 0x57170000ull + static_cast<std::uint64_t>(pc)));
        rng.shuffle(idx);
        const std::size_t n_val = static_cast<std::size_t>(val_fraction * static_cast<double>(idx.size()));
        for (std::size_t i = 0; i < idx.size(); ++i)
            (i < idx.size() - n_val ? out.train : out.val).push_back(idx[i]);
    }
    return out;
}

}  // namespace vmct
