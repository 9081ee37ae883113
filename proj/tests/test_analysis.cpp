#include <doctest.h>

#include <vmct/analysis.hpp>
#include <vmct/rng.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace vmct;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    const fs::path dir = fs::temp_directory_path() / "vmct_analysis_tests";
    fs::create_directories(dir);
    return dir;
}

// Independent silhouette implementation used as an oracle: same definition,
// different code shape (distance matrix precomputed, per-cluster index lists).
double silhouette_oracle(const std::vector<std::vector<double>>& pts,
                         const std::vector<int>& labels) {
    const std::size_t n = pts.size();
    std::vector<std::vector<double>> dm(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t d = 0; d < pts[i].size(); ++d)
                acc += (pts[i][d] - pts[j][d]) * (pts[i][d] - pts[j][d]);
            dm[i][j] = dm[j][i] = std::sqrt(acc);
        }
    std::map<int, std::vector<std::size_t>> clusters;
    for (std::size_t i = 0; i < n; ++i) clusters[labels[i]].push_back(i);

    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double a = 0.0;
        for (std::size_t j : clusters[labels[i]])
            if (j != i) a += dm[i][j];
        a /= static_cast<double>(clusters[labels[i]].size() - 1);
        double b = std::numeric_limits<double>::infinity();
        for (const auto& [lbl, members] : clusters) {
            if (lbl == labels[i]) continue;
            double m = 0.0;
            for (std::size_t j : members) m += dm[i][j];
            b = std::min(b, m / static_cast<double>(members.size()));
        }
        const double denom = std::max(a, b);
        total += denom > 0.0 ? (b - a) / denom : 0.0;
    }
    return total / static_cast<double>(n);
}

std::vector<PcvRecord> synthetic_records(int per_phase, double spread, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<PcvRecord> recs;
    int id = 0;
    for (int pc = 0; pc < 3; ++pc)
        for (int i = 0; i < per_phase; ++i) {
            PcvRecord r;
            r.id = id++;
            r.phase = static_cast<ContrastPhase>(pc);
            for (int d = 0; d < 8; ++d)
                r.concat.push_back(static_cast<float>(10.0 * pc +
                                                      rng.uniform(-spread, spread)));
            recs.push_back(std::move(r));
        }
    return recs;
}

}  // namespace

TEST_CASE("silhouette: hand-computed two-cluster value") {
    const std::vector<std::vector<double>> pts = {{0, 0}, {0, 1}, {10, 0}, {10, 1}};
    const std::vector<int> labels = {0, 0, 1, 1};
    // Every point: a = 1, b = (10 + sqrt(101)) / 2.
    const double b = (10.0 + std::sqrt(101.0)) / 2.0;
    const double expect = (b - 1.0) / b;
    CHECK(silhouette_score(pts, labels) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("silhouette: matches an independent implementation on random data") {
    Rng rng(131);
    std::vector<std::vector<double>> pts;
    std::vector<int> labels;
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 7; ++i) {
            std::vector<double> p(4);
            for (auto& x : p) x = rng.uniform(-1.0, 1.0) + 2.0 * c;
            pts.push_back(std::move(p));
            labels.push_back(c);
        }
    CHECK(silhouette_score(pts, labels) ==
          doctest::Approx(silhouette_oracle(pts, labels)).epsilon(1e-12));
}

TEST_CASE("silhouette: bounds and degenerate geometry") {
    // Well-separated clusters score near 1.
    std::vector<std::vector<double>> far;
    std::vector<int> labels;
    Rng rng(132);
    for (int c = 0; c < 2; ++c)
        for (int i = 0; i < 5; ++i) {
            far.push_back({100.0 * c + rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1)});
            labels.push_back(c);
        }
    CHECK(silhouette_score(far, labels) > 0.99);

    // All points identical: a = b = 0 contributes 0 by convention.
    const std::vector<std::vector<double>> same(6, {1.0, 2.0});
    CHECK(silhouette_score(same, {0, 0, 0, 1, 1, 1}) == 0.0);

    // Interleaved labels on one line score negative.
    const std::vector<std::vector<double>> line = {{0.0}, {1.0}, {2.0}, {3.0}};
    CHECK(silhouette_score(line, {0, 1, 0, 1}) < 0.0);
}

TEST_CASE("silhouette: argument validation") {
    const std::vector<std::vector<double>> pts = {{0, 0}, {0, 1}, {1, 0}, {1, 1}};
    CHECK_THROWS_AS(silhouette_score(pts, {0, 0, 0}), ArgumentError);         // size mismatch
    CHECK_THROWS_AS(silhouette_score(pts, {0, 0, 0, 0}), ArgumentError);      // one label
    CHECK_THROWS_AS(silhouette_score(pts, {0, 0, 0, 1}), ArgumentError);      // singleton label
    const std::vector<std::vector<double>> ragged = {{0, 0}, {0}, {1, 0}, {1, 1}};
    CHECK_THROWS_AS(silhouette_score(ragged, {0, 0, 1, 1}), ArgumentError);
}

TEST_CASE("pca: recovers an exact 2-D plane embedded in 5-D") {
    // Orthonormal directions u, w; points are mean + c1 u + c2 w.
    const std::vector<double> u = {0.6, 0.0, 0.8, 0.0, 0.0};
    const std::vector<double> w = {0.0, 1.0, 0.0, 0.0, 0.0};
    const std::vector<double> mu = {1.0, -2.0, 0.5, 3.0, -1.0};
    Rng rng(133);
    std::vector<std::vector<double>> pts;
    for (int i = 0; i < 40; ++i) {
        const double c1 = rng.uniform(-3.0, 3.0);
        const double c2 = rng.uniform(-1.0, 1.0);
        std::vector<double> p(5);
        for (int j = 0; j < 5; ++j) p[j] = mu[j] + c1 * u[j] + c2 * w[j];
        pts.push_back(std::move(p));
    }

    const PcaResult res = pca_project(pts, 2);
    REQUIRE(res.n_components == 2);
    CHECK(!res.rank_deficient);
    CHECK(res.eigenvalues[0] >= res.eigenvalues[1]);
    CHECK(res.eigenvalues[1] > 0.0);
    // The plane carries all the variance.
    CHECK(res.eigenvalues[0] + res.eigenvalues[1] ==
          doctest::Approx(res.total_variance).epsilon(1e-9));
    CHECK(res.explained_ratio(0) + res.explained_ratio(1) == doctest::Approx(1.0).epsilon(1e-9));

    // Components are unit length with the sign convention applied.
    for (const auto& comp : res.components) {
        double norm = 0.0;
        std::size_t arg = 0;
        for (std::size_t j = 0; j < comp.size(); ++j) {
            norm += comp[j] * comp[j];
            if (std::abs(comp[j]) > std::abs(comp[arg])) arg = j;
        }
        CHECK(norm == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(comp[arg] > 0.0);
    }

    // Projection plus mean reconstructs every point.
    std::vector<double> mean(5, 0.0);
    for (const auto& p : pts)
        for (int j = 0; j < 5; ++j) mean[j] += p[j] / 40.0;
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (int j = 0; j < 5; ++j) {
            double rec = mean[j];
            for (int k = 0; k < 2; ++k) rec += res.coords[i][k] * res.components[k][j];
            CHECK(rec == doctest::Approx(pts[i][static_cast<std::size_t>(j)]).epsilon(1e-6));
        }

    // Deterministic: a second run reproduces everything exactly.
    const PcaResult res2 = pca_project(pts, 2);
    CHECK(res2.eigenvalues == res.eigenvalues);
    CHECK(res2.components == res.components);
    CHECK(res2.coords == res.coords);
}

TEST_CASE("pca: rank deficiency is reported, not fabricated") {
    // Data on a 1-D line; asking for 2 components must stop at 1.
    std::vector<std::vector<double>> pts;
    Rng rng(134);
    for (int i = 0; i < 10; ++i) {
        const double t = rng.uniform(-1.0, 1.0);
        pts.push_back({2.0 * t, -t, 0.5 * t});
    }
    const PcaResult res = pca_project(pts, 2);
    CHECK(res.n_components == 1);
    CHECK(res.rank_deficient);
    REQUIRE(res.coords.size() == 10);
    CHECK(res.coords[0].size() == 1);
}

TEST_CASE("pca: argument validation") {
    const std::vector<std::vector<double>> pts = {{0, 0}, {1, 1}, {2, 0}};
    CHECK_THROWS_AS(pca_project(pts, 0), ArgumentError);
    CHECK_THROWS_AS(pca_project(pts, 3), ArgumentError);  // needs dims+1 points
    const std::vector<std::vector<double>> ragged = {{0, 0}, {1}, {2, 0}};
    CHECK_THROWS_AS(pca_project(ragged, 1), ArgumentError);
}

TEST_CASE("extract_pcvs: untrained unified model emits all-ones PCVs") {
    const DataConfig dc = [] {
        DataConfig c;
        c.n_per_phase = 3;
        c.patch = 32;
        c.phantom_size = 64;
        c.phantoms_per_phase = 1;
        c.noise = false;
        c.phases = {ContrastPhase::Angio, ContrastPhase::Portal};
        return c;
    }();
    const Dataset ds = generate_dataset(dc, 135);
    UnifiedModel m = build_model<float>(ArchConfig{}, ModelMode::Unified, 136);

    const auto recs = extract_pcvs(m, ds);
    REQUIRE(recs.size() == ds.items.size());
    for (std::size_t k = 0; k < recs.size(); ++k) {
        CHECK(recs[k].id == ds.items[k].id);
        CHECK(recs[k].phase == ds.items[k].phase);
        CHECK(recs[k].concat.size() == 480u);  // 32 + 64 + 128 + 256
        for (float v : recs[k].concat) CHECK(v == 1.0f);
    }
    // Identical clusds collapse to silhouette 0 by the max(a,b)=0 convention.
    CHECK(pcv_silhouette(recs) == 0.0);

    UnifiedModel solo = build_model<float>(ArchConfig{}, ModelMode::Standalone, 136);
    CHECK_THROWS_AS(extract_pcvs(solo, ds), ArgumentError);
    Dataset empty;
    CHECK_THROWS_AS(extract_pcvs(m, empty), ArgumentError);
}

TEST_CASE("extract_pcvs: batch composition does not change the records") {
    DataConfig dc;
    dc.n_per_phase = 9;  // 18 items -> batches of 16 + 2
    dc.patch = 32;
    dc.phantom_size = 64;
    dc.phantoms_per_phase = 1;
    dc.noise = false;
    dc.phases = {ContrastPhase::Arterial, ContrastPhase::Delayed};
    const Dataset ds = generate_dataset(dc, 137);

    UnifiedModel m = build_model<float>(ArchConfig{}, ModelMode::Unified, 138);
    // Perturb the fusion output layer so PCVs actually depend on the input.
    Rng rng(139);
    for (ParamArray* p : m.params())
        if (p->name.find("fuse.fc2") != std::string::npos)
            for (auto& v : p->values) v += static_cast<float>(rng.uniform(-0.2, 0.2));

    const auto full = extract_pcvs(m, ds);
    for (std::size_t k : {std::size_t(0), std::size_t(7), std::size_t(17)}) {
        Dataset single;
        single.patch = ds.patch;
        single.items.push_back(ds.items[k]);
        const auto one = extract_pcvs(m, single);
        REQUIRE(one.size() == 1);
        REQUIRE(one[0].concat.size() == full[k].concat.size());
        // Invariance is semantic, not bitwise: the BLAS GEMM inside conv2d
        // picks different blocking for batch 16 vs batch 1, so summation
        // order (and the last few ulps) may differ. Measured max abs diff
        // is ~2e-6; 1e-4 leaves a wide margin while still catching real
        // batch cross-talk bugs.
        float worst = 0.0f;
        for (std::size_t i = 0; i < one[0].concat.size(); ++i)
            worst = std::max(worst, std::abs(one[0].concat[i] - full[k].concat[i]));
        CHECK(worst < 1e-4f);
    }

    bool varies = false;
    for (std::size_t k = 1; k < full.size() && !varies; ++k)
        varies = full[k].concat != full[0].concat;
    CHECK(varies);
}

TEST_CASE("pcv records: separated synthetic clusters score high") {
    const auto recs = synthetic_records(5, 0.05, 140);
    CHECK(pcv_silhouette(recs) > 0.9);

    // One phase only: silhouette is undefined.
    std::vector<PcvRecord> mono(recs.begin(), recs.begin() + 5);
    CHECK_THROWS_AS(pcv_silhouette(mono), ArgumentError);
}

TEST_CASE("analysis: CSV exports and summary JSON") {
    const auto recs = synthetic_records(3, 0.1, 141);
    const PcaResult pca = pca_project(recs, 2);

    const fs::path pcv_csv = temp_dir() / "pcv.csv";
    write_pcv_csv(pcv_csv.string(), recs);
    std::ifstream f(pcv_csv);
    std::string header;
    std::getline(f, header);
    CHECK(header.substr(0, 11) == "id,phase,v0");
    CHECK(header.find(",v7") != std::string::npos);
    int rows = 0;
    for (std::string line; std::getline(f, line);)
        if (!line.empty()) ++rows;
    CHECK(rows == 9);

    const fs::path proj_csv = temp_dir() / "proj.csv";
    write_projection_csv(proj_csv.string(), recs, pca);
    std::ifstream g(proj_csv);
    std::getline(g, header);
    CHECK(header == "id,phase,x,y");
    std::string first;
    std::getline(g, first);
    CHECK(first.find("angio") != std::string::npos);

    PcaResult wrong = pca;
    wrong.coords.pop_back();
    CHECK_THROWS_AS(write_projection_csv(proj_csv.string(), recs, wrong), ArgumentError);
    CHECK_THROWS_AS(write_pcv_csv("/nonexistent_dir/x.csv", recs), IoError);

    const double sil = pcv_silhouette(recs);
    const Json j = pcv_analysis_json(recs, sil, pca);
    CHECK(j.at("n_records").get<std::size_t>() == 9u);
    CHECK(j.at("pcv_length").get<std::size_t>() == 8u);
    CHECK(j.at("silhouette").get<double>() == sil);
    CHECK(j.at("pca").at("n_components").get<int>() == pca.n_components);
    CHECK(j.at("pca").at("explained_variance_ratio").size() ==
          static_cast<std::size_t>(pca.n_components));
}
