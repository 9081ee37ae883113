// End-to-end CLI tests: every case shells out to the real `vmct` binary and
// checks exit codes (0 ok, 2 config/usage, 3 data/format/io, 4 numeric),
// stream output, and the artifacts each subcommand leaves behind. Fixtures
// (tiny checkpoints, a small two-phase dataset) are built in-process with the
// library so the subprocess runs stay cheap.

#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>

#include <vmct/checkpoint.hpp>
#include <vmct/config.hpp>
#include <vmct/dataset.hpp>
#include <vmct/errors.hpp>
#include <vmct/imagefmt.hpp>
#include <vmct/rng.hpp>

using namespace vmct;
namespace fs = std::filesystem;

namespace {

bool has(const std::string& s, const char* needle) { return s.find(needle) != std::string::npos; }

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

fs::path scratch_root() {
    static const fs::path root = [] {
        const fs::path r = fs::temp_directory_path() / "vmct_cli_tests";
        fs::remove_all(r);  // stale state breaks the overwrite-refusal checks
        fs::create_directories(r);
        return r;
    }();
    return root;
}

fs::path temp_dir(const char* leaf) {
    const fs::path dir = scratch_root() / leaf;
    fs::create_directories(dir);
    return dir;
}

struct CliResult {
    int code = -1;
    std::string out, err;
};

CliResult run_cli(const std::string& args) {
    static int counter = 0;
    const fs::path dir = temp_dir("streams");
    const fs::path out = dir / (std::to_string(counter) + ".out");
    const fs::path err = dir / (std::to_string(counter) + ".err");
    ++counter;
    const std::string cmd =
        std::string(VMCT_CLI_PATH) + " " + args + " >" + out.string() + " 2>" + err.string();
    const int raw = std::system(cmd.c_str());
    CliResult r;
    r.code = (raw != -1 && WIFEXITED(raw)) ? WEXITSTATUS(raw) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
}

ArchConfig tiny_arch() {
    ArchConfig a;
    a.base_channels = 4;
    a.bottleneck_channels = 24;
    a.pcm_hidden = 10;
    a.prior_dim = kPriorDim;  // prior_batch always emits kPriorDim-long vectors
    a.embed_dim = 8;
    return a;
}

// Collapse the network to a constant function: with "ecm.out" weights zeroed
// and its bias at 0.5, every output pixel is denormalize_hu(0.5) = 512 HU.
void make_constant(UnifiedModel& m) {
    for (ParamArray* p : m.params()) {
        if (p->name == "ecm.out.weight") std::fill(p->values.begin(), p->values.end(), 0.0f);
        if (p->name == "ecm.out.bias") std::fill(p->values.begin(), p->values.end(), 0.5f);
    }
}

const std::string& unified_ckpt() {
    static const std::string path = [] {
        UnifiedModel m = build_model<float>(tiny_arch(), ModelMode::Unified, 151);
        make_constant(m);
        const fs::path p = temp_dir("fixtures") / "unified.vmck";
        save_checkpoint(m, p.string());
        return p.string();
    }();
    return path;
}

const std::string& standalone_ckpt() {
    static const std::string path = [] {
        UnifiedModel m = build_model<float>(tiny_arch(), ModelMode::Standalone, 152);
        make_constant(m);
        const fs::path p = temp_dir("fixtures") / "standalone.vmck";
        save_checkpoint(m, p.string());
        return p.string();
    }();
    return path;
}

// Unified model whose PCM fusion layer is perturbed so PCVs vary by input.
const std::string& perturbed_ckpt() {
    static const std::string path = [] {
        UnifiedModel m = build_model<float>(tiny_arch(), ModelMode::Unified, 153);
        Rng rng(154);
        for (ParamArray* p : m.params())
            if (p->name.find("fuse.fc2") != std::string::npos)
                for (auto& v : p->values) v += static_cast<float>(rng.uniform(-0.2, 0.2));
        const fs::path p = temp_dir("fixtures") / "unified_perturbed.vmck";
        save_checkpoint(m, p.string());
        return p.string();
    }();
    return path;
}

DataConfig small_data() {
    DataConfig d;
    d.n_per_phase = 3;
    d.patch = 32;
    d.phantom_size = 64;
    d.phantoms_per_phase = 1;
    d.noise = false;
    d.phases = {ContrastPhase::Arterial, ContrastPhase::Portal};
    return d;
}

const std::string& dataset_dir() {
    static const std::string path = [] {
        const fs::path p = temp_dir("fixtures") / "ds";
        save_dataset(p.string(), generate_dataset(small_data(), 155));
        return p.string();
    }();
    return path;
}

std::string write_config(const char* leaf, const std::function<void(RunConfig&)>& tweak = {}) {
    RunConfig rc;
    rc.arch = tiny_arch();
    rc.train.epochs = 1;
    rc.train.batch_size = 4;
    rc.train.val_fraction = 0.25;
    rc.train.checkpoint_every = 5;
    rc.train.phases = small_data().phases;
    rc.data = small_data();
    rc.profile.size = 64;
    rc.profile.n_warmup = 0;
    rc.profile.n_runs = 3;
    if (tweak) tweak(rc);
    const fs::path p = temp_dir("configs") / (std::string(leaf) + ".json");
    save_run_config(p.string(), rc);
    return p.string();
}

}  // namespace

TEST_CASE("cli: usage errors and exit-code mapping") {
    CHECK(run_cli("").code == 2);  // a subcommand is required
    CHECK(run_cli("frobnicate").code == 2);

    const CliResult help = run_cli("--help");
    CHECK(help.code == 0);
    CHECK(has(help.out, "gen-data"));
    CHECK(has(help.out, "analyze-pcv"));

    const CliResult missing = run_cli("train");
    CHECK(missing.code == 2);
    CHECK(has(missing.err, "--config"));

    // Missing config file -> IoError -> 3.
    const CliResult nocfg = run_cli("gen-data --config /nonexistent/cfg.json --out " +
                                    (temp_dir("usage") / "d").string());
    CHECK(nocfg.code == 3);
    CHECK(has(nocfg.err, "io error"));

    // Garbage checkpoint -> FormatError -> 3.
    const fs::path junk = temp_dir("usage") / "junk.vmck";
    std::ofstream(junk) << "not a checkpoint";
    const CliResult bad = run_cli("profile --model " + junk.string() + " --out " +
                                  (temp_dir("usage") / "p.json").string() + " --no-timing");
    CHECK(bad.code == 3);
    CHECK(has(bad.err, "format error"));

    // --export-pgm wants exactly two values.
    CHECK(run_cli("infer --model " + unified_ckpt() + " --in a --out b --export-pgm 40").code == 2);
}

TEST_CASE("cli: gen-data generates, refuses overwrites, honors overrides") {
    const std::string cfg = write_config("gen");
    const fs::path d1 = temp_dir("gen_out1");
    const fs::path d2 = temp_dir("gen_out2");

    const std::string base = "gen-data --config " + cfg + " --out ";
    const CliResult r1 = run_cli(base + d1.string());
    CAPTURE(r1.err);
    REQUIRE(r1.code == 0);
    CHECK(has(r1.out, "wrote 6 patch pairs"));
    CHECK(has(r1.out, "noise off"));
    CHECK(fs::exists(d1 / "manifest.json"));
    CHECK(fs::exists(d1 / "config.resolved.json"));
    const Dataset ds = load_dataset(d1.string());
    CHECK(ds.items.size() == 6);
    CHECK(ds.patch == 32);

    // Second run into the same non-empty directory is refused without --force.
    const CliResult refuse = run_cli(base + d1.string());
    CHECK(refuse.code == 2);
    CHECK(has(refuse.err, "not empty"));
    CHECK(run_cli(base + d1.string() + " --force").code == 0);

    // Same config + seed produce byte-identical artifacts.
    REQUIRE(run_cli(base + d2.string()).code == 0);
    CHECK(slurp(d1 / "manifest.json") == slurp(d2 / "manifest.json"));
    CHECK(slurp(d1 / "patch_00000_70kev.vmct") == slurp(d2 / "patch_00000_70kev.vmct"));

    // --phases narrows generation and lands in the resolved config.
    const fs::path d3 = temp_dir("gen_out3");
    REQUIRE(run_cli(base + d3.string() + " --phases portal").code == 0);
    const Dataset sub = load_dataset(d3.string());
    CHECK(sub.items.size() == 3);
    for (const auto& item : sub.items) CHECK(item.phase == ContrastPhase::Portal);
    const RunConfig resolved = load_run_config((d3 / "config.resolved.json").string());
    CHECK(resolved.data.phases == std::vector<ContrastPhase>{ContrastPhase::Portal});

    // --noise only accepts on|off.
    const fs::path d4 = temp_dir("gen_out4");
    CHECK(run_cli(base + d4.string() + " --noise maybe").code == 2);
    const CliResult noisy = run_cli(base + d4.string() + " --noise on --force");
    REQUIRE(noisy.code == 0);
    CHECK(has(noisy.out, "noise on"));
}

TEST_CASE("cli: train writes checkpoints, report, and resolved config") {
    const std::string cfg = write_config("train");
    const fs::path out = temp_dir("train_run");
    const CliResult r =
        run_cli("train --config " + cfg + " --data " + dataset_dir() + " --out " + out.string());
    CAPTURE(r.err);
    REQUIRE(r.code == 0);
    CHECK(has(r.out, "# epoch\tlr"));  // per-epoch log goes to stdout
    CHECK(has(r.out, "best epoch"));
    for (const char* f : {"config.resolved.json", "train_report.json", "best.vmck", "final.vmck"})
        CHECK(fs::exists(out / f));

    UnifiedModel m = load_checkpoint((out / "final.vmck").string());
    CHECK(m.mode == ModelMode::Unified);
    CHECK(m.cfg == tiny_arch());
    const Json rep = Json::parse(slurp(out / "train_report.json"));
    CHECK(rep.contains("best_val_mae_hu"));
    CHECK(rep.at("epochs").size() == 1);

    // Standalone mode needs exactly one phase.
    const CliResult solo_bad = run_cli("train --config " + cfg + " --data " + dataset_dir() +
                                       " --out " + temp_dir("train_solo_bad").string() +
                                       " --mode standalone");
    CHECK(solo_bad.code == 2);
    CHECK(has(solo_bad.err, "requires --phase"));

    const fs::path solo_out = temp_dir("train_solo");
    const CliResult solo =
        run_cli("train --config " + cfg + " --data " + dataset_dir() + " --out " +
                solo_out.string() + " --mode standalone --phase arterial");
    CAPTURE(solo.err);
    REQUIRE(solo.code == 0);
    CHECK(load_checkpoint((solo_out / "final.vmck").string()).mode == ModelMode::Standalone);
}

TEST_CASE("cli: train resume guards architecture and mode") {
    const std::string cfg = write_config("resume");
    const std::string common =
        "train --config " + cfg + " --data " + dataset_dir() + " --out ";

    // Checkpoint built with a different base width.
    ArchConfig other = tiny_arch();
    other.base_channels = 6;
    UnifiedModel m = build_model<float>(other, ModelMode::Unified, 156);
    const fs::path other_ckpt = temp_dir("resume_fixtures") / "other_arch.vmck";
    save_checkpoint(m, other_ckpt.string());

    const CliResult arch_mismatch = run_cli(common + temp_dir("resume_a").string() +
                                            " --resume-from " + other_ckpt.string());
    CHECK(arch_mismatch.code == 2);
    CHECK(has(arch_mismatch.err, "architecture differs"));

    // Matching arch but wrong mode.
    const CliResult mode_mismatch = run_cli(common + temp_dir("resume_b").string() +
                                            " --resume-from " + standalone_ckpt());
    CHECK(mode_mismatch.code == 2);
    CHECK(has(mode_mismatch.err, "mode differs"));

    const CliResult neg = run_cli(common + temp_dir("resume_c").string() + " --resume-from " +
                                  unified_ckpt() + " --resume-epoch=-1");
    CHECK(neg.code == 2);
    CHECK(has(neg.err, "resume-epoch"));

    // Compatible checkpoint resumes cleanly.
    const CliResult ok = run_cli(common + temp_dir("resume_d").string() + " --resume-from " +
                                 unified_ckpt() + " --resume-epoch 0");
    CAPTURE(ok.err);
    CHECK(ok.code == 0);
}

TEST_CASE("cli: infer phase precedence, dimension handling, constant output") {
    const fs::path dir = temp_dir("infer");

    // 33x17 exercises the reflect-pad path; dims must be restored on output.
    VmctImage in;
    in.phase_code = phase_code(ContrastPhase::Portal);
    ImageF slice(33, 17);
    Rng rng(157);
    for (auto& v : slice.v) v = static_cast<float>(rng.uniform(-200.0, 800.0));
    in.slices.push_back(slice);
    const fs::path inp = dir / "in.vmct";
    write_vmct(inp.string(), in);

    const fs::path outp = dir / "out.vmct";
    const CliResult r =
        run_cli("infer --model " + unified_ckpt() + " --in " + inp.string() + " --out " +
                outp.string());
    CAPTURE(r.err);
    REQUIRE(r.code == 0);
    const VmctImage out = read_vmct(outp.string());
    REQUIRE(out.slices.size() == 1);
    CHECK(out.slices[0].h == 33);
    CHECK(out.slices[0].w == 17);
    CHECK(out.phase_code == phase_code(ContrastPhase::Portal));  // from the header
    for (float v : out.slices[0].v) CHECK(v == 512.0f);          // constant-model fingerprint
    CHECK(has(slurp(dir / "out.resolved.json"), "\"portal\""));

    // --phase beats the file header.
    const fs::path outd = dir / "out_delayed.vmct";
    REQUIRE(run_cli("infer --model " + unified_ckpt() + " --in " + inp.string() + " --out " +
                    outd.string() + " --phase delayed")
                .code == 0);
    CHECK(read_vmct(outd.string()).phase_code == phase_code(ContrastPhase::Delayed));
    CHECK(has(slurp(dir / "out_delayed.resolved.json"), "\"delayed\""));

    // Headerless input: unified models need an explicit phase.
    VmctImage bare = in;
    bare.phase_code = -1;
    const fs::path barep = dir / "bare.vmct";
    write_vmct(barep.string(), bare);
    const CliResult rb = run_cli("infer --model " + unified_ckpt() + " --in " + barep.string() +
                                 " --out " + (dir / "bare_out.vmct").string());
    CHECK(rb.code == 2);
    CHECK(has(rb.err, "needs a phase"));
    CHECK(run_cli("infer --model " + unified_ckpt() + " --in " + barep.string() + " --out " +
                  (dir / "bare_out.vmct").string() + " --phase angio")
              .code == 0);
    CHECK(read_vmct((dir / "bare_out.vmct").string()).phase_code ==
          phase_code(ContrastPhase::Angio));

    // Standalone checkpoints ignore --phase (with a warning) and pass the
    // header through untouched.
    const fs::path souts = dir / "solo.vmct";
    const CliResult rs = run_cli("infer --model " + standalone_ckpt() + " --in " + inp.string() +
                                 " --out " + souts.string() + " --phase portal");
    REQUIRE(rs.code == 0);
    CHECK(has(rs.err, "ignores --phase"));
    CHECK(read_vmct(souts.string()).phase_code == phase_code(ContrastPhase::Portal));

    const fs::path sbare = dir / "solo_bare.vmct";
    REQUIRE(run_cli("infer --model " + standalone_ckpt() + " --in " + barep.string() + " --out " +
                    sbare.string())
                .code == 0);
    CHECK(read_vmct(sbare.string()).phase_code == -1);
    CHECK(has(slurp(dir / "solo_bare.resolved.json"), "\"phase\": null"));
}

TEST_CASE("cli: infer --export-pgm writes windowed previews per slice") {
    const fs::path dir = temp_dir("pgm");
    VmctImage in;
    in.phase_code = phase_code(ContrastPhase::Angio);
    in.slices.emplace_back(32, 32);
    in.slices.emplace_back(32, 32);
    const fs::path inp = dir / "two.vmct";
    write_vmct(inp.string(), in);

    const fs::path outp = dir / "pred.vmct";
    const CliResult r = run_cli("infer --model " + unified_ckpt() + " --in " + inp.string() +
                                " --out " + outp.string() + " --export-pgm 512 100");
    CAPTURE(r.err);
    REQUIRE(r.code == 0);

    // Constant 512 HU at window (wl=512, ww=100) -> mid-gray 32768 everywhere.
    const std::string expected_header = "P5\n32 32\n65535\n";
    for (const char* name : {"pred_slice00.pgm", "pred_slice01.pgm"}) {
        const std::string bytes = slurp(dir / name);
        REQUIRE(bytes.size() == expected_header.size() + 32 * 32 * 2);
        CHECK(bytes.substr(0, expected_header.size()) == expected_header);
        bool all_mid = true;
        for (std::size_t i = expected_header.size(); i + 1 < bytes.size(); i += 2)
            all_mid = all_mid && static_cast<unsigned char>(bytes[i]) == 0x80 &&
                      static_cast<unsigned char>(bytes[i + 1]) == 0x00;
        CHECK(all_mid);
    }

    // Single-slice outputs skip the _sliceNN suffix.
    VmctImage single;
    single.phase_code = phase_code(ContrastPhase::Angio);
    single.slices.emplace_back(32, 32);
    const fs::path sinp = dir / "one.vmct";
    write_vmct(sinp.string(), single);
    REQUIRE(run_cli("infer --model " + unified_ckpt() + " --in " + sinp.string() + " --out " +
                    (dir / "pred1.vmct").string() + " --export-pgm 512 100")
                .code == 0);
    CHECK(fs::exists(dir / "pred1.pgm"));
    CHECK(!fs::exists(dir / "pred1_slice00.pgm"));
}

TEST_CASE("cli: eval writes the metric table and report JSON") {
    const fs::path dir = temp_dir("eval");
    const fs::path rep = dir / "report.json";
    const CliResult r =
        run_cli("eval --model " + unified_ckpt() + " --data " + dataset_dir() + " --out " +
                rep.string());
    CAPTURE(r.err);
    REQUIRE(r.code == 0);
    CHECK(has(r.out, "Phase"));
    CHECK(has(r.out, "arterial"));
    CHECK(has(r.out, "portal"));
    CHECK(has(r.err, "omitted"));  // angio/delayed are absent from the dataset

    const Json j = Json::parse(slurp(rep));
    REQUIRE(j.contains("rows"));
    REQUIRE(j.at("rows").size() == 2);
    CHECK(j.at("rows").at(0).at("phase") == "arterial");  // phase-code order
    CHECK(j.at("rows").at(1).at("phase") == "portal");
    CHECK(j.at("rows").at(0).at("n_samples") == 3);
    CHECK(j.at("rows").at(0).at("mae_hu").at("mean").get<double>() >= 0.0);
    CHECK(j.at("model_info").at("mode") == "unified");
    CHECK(fs::exists(dir / "report.resolved.json"));
}

TEST_CASE("cli: profile totals, baseline comparison, and size guard") {
    const fs::path dir = temp_dir("profile");
    const fs::path rep = dir / "prof.json";
    const CliResult r = run_cli("profile --model " + unified_ckpt() + " --out " + rep.string() +
                                " --size 64 --no-timing");
    CAPTURE(r.err);
    REQUIRE(r.code == 0);
    CHECK(has(r.out, "Parameters"));
    CHECK(has(r.out, "MACs"));

    const Json j = Json::parse(slurp(rep));
    REQUIRE(j.contains("report"));
    CHECK(j.at("report").contains("flops_2x_macs"));
    CHECK(!j.at("report").contains("inference_ms"));  // timing was skipped
    CHECK(j.at("report").at("layers").is_array());
    CHECK(!j.contains("baseline"));
    CHECK(fs::exists(dir / "prof.resolved.json"));

    // Overhead column against the standalone baseline.
    const fs::path rep2 = dir / "prof_cmp.json";
    const CliResult rc = run_cli("profile --model " + unified_ckpt() + " --compare " +
                                 standalone_ckpt() + " --out " + rep2.string() +
                                 " --size 64 --no-timing");
    REQUIRE(rc.code == 0);
    CHECK(has(rc.out, "Overhead"));
    CHECK(Json::parse(slurp(rep2)).contains("baseline"));

    // With timing enabled the report carries a positive latency.
    const fs::path rep3 = dir / "prof_timed.json";
    REQUIRE(run_cli("profile --model " + unified_ckpt() + " --out " + rep3.string() +
                    " --size 32 --runs 3 --warmup 0")
                .code == 0);
    const Json jt = Json::parse(slurp(rep3));
    CHECK(jt.at("report").at("inference_ms").at("mean").get<double>() > 0.0);

    CHECK(run_cli("profile --model " + unified_ckpt() + " --out " + (dir / "x.json").string() +
                  " --size 100 --no-timing")
              .code == 2);
}

TEST_CASE("cli: analyze-pcv artifacts, degenerate warnings, standalone rejection") {
    const fs::path out1 = temp_dir("pcv_perturbed");
    const CliResult r = run_cli("analyze-pcv --model " + perturbed_ckpt() + " --data " +
                                dataset_dir() + " --out " + out1.string());
    CAPTURE(r.err);
    REQUIRE(r.code == 0);
    CHECK(r.out.rfind("silhouette: ", 0) == 0);
    for (const char* f : {"pcvs.csv", "projection.csv", "analysis.json", "config.resolved.json"})
        CHECK(fs::exists(out1 / f));
    CHECK(Json::parse(slurp(out1 / "analysis.json")).contains("silhouette"));
    CHECK(slurp(out1 / "pcvs.csv").rfind("id,phase,v0", 0) == 0);

    // Untrained modulation keeps every PCV at the all-ones vector: silhouette
    // collapses to 0, the covariance is rank-0, and both warnings fire.
    const fs::path out2 = temp_dir("pcv_flat");
    const CliResult rf = run_cli("analyze-pcv --model " + unified_ckpt() + " --data " +
                                 dataset_dir() + " --out " + out2.string());
    REQUIRE(rf.code == 0);
    CHECK(has(rf.out, "silhouette: 0.0000"));
    CHECK(has(rf.err, "unseparated"));
    CHECK(has(rf.err, "rank-deficient"));
    std::istringstream proj(slurp(out2 / "projection.csv"));
    std::string header;
    std::getline(proj, header);
    CHECK(header == "id,phase");  // zero usable components

    const CliResult rs = run_cli("analyze-pcv --model " + standalone_ckpt() + " --data " +
                                 dataset_dir() + " --out " + temp_dir("pcv_solo").string());
    CHECK(rs.code == 2);
    CHECK(has(rs.err, "error"));
}

TEST_CASE("cli: diverging training exits with the numeric failure code") {
    // One Adam step at lr 1e20 catapults the weights; the next batch's loss
    // is non-finite and training must abort with exit code 4.
    const std::string cfg = write_config("diverge", [](RunConfig& rc) {
        rc.train.lr0 = 1e20;
        rc.train.batch_size = 2;  // guarantees a second batch in epoch 0
    });
    const CliResult r = run_cli("train --config " + cfg + " --data " + dataset_dir() + " --out " +
                                temp_dir("diverge_run").string());
    CHECK(r.code == 4);
    CHECK(has(r.err, "numeric error"));
}
