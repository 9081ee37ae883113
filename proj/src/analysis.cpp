#include "vmct/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>

#include "vmct/errors.hpp"
#include "vmct/rng.hpp"

namespace vmct {

std::vector<PcvRecord> extract_pcvs(UnifiedModel& model, const Dataset& ds) {
    if (!model.unified()) throw ArgumentError("extract_pcvs: standalone model has no PCVs");
    if (ds.items.empty()) throw ArgumentError("extract_pcvs: empty dataset");

    std::vector<PcvRecord> out;
    out.reserve(ds.items.size());
    std::size_t done = 0;
    const std::size_t bs = 16;
    while (done < ds.items.size()) {
        std::size_t end = std::min(ds.items.size(), done + bs);
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
        const BatchVec prior = prior_batch<float>(phases);
        EncFeats feats = ecm_encode(model, x, BnMode::Eval);
        const std::array<BatchVec, 4> pcv = pcm_forward(model, prior, feats);

        for (std::size_t k = done; k < end; ++k) {
            PcvRecord rec;
            rec.id = ds.items[k].id;
            rec.phase = ds.items[k].phase;
            for (int lvl = 0; lvl < 4; ++lvl) {
                const float* row = pcv[lvl].row(static_cast<int>(k - done));
                rec.concat.insert(rec.concat.end(), row, row + pcv[lvl].d);
            }
            out.push_back(std::move(rec));
        }
        done = end;
    }
    return out;
}

double silhouette_score(const std::vector<std::vector<double>>& points,
                        const std::vector<int>& labels) {
    const std::size_t n = points.size();
    if (labels.size() != n) throw ArgumentError("silhouette: points/labels size mismatch");
    std::set<int> distinct(labels.begin(), labels.end());
    if (distinct.size() < 2) throw ArgumentError("silhouette: need >= 2 distinct labels");
    for (int lbl : distinct)
        if (std::count(labels.begin(), labels.end(), lbl) < 2)
            throw ArgumentError("silhouette: each label needs >= 2 samples");
    for (const auto& p : points)
        if (p.size() != points[0].size()) throw ArgumentError("silhouette: ragged points");

    auto dist = [&](std::size_t i, std::size_t j) {
        double acc = 0.0;
        for (std::size_t d = 0; d < points[i].size(); ++d) {
            const double delta = points[i][d] - points[j][d];
            acc += delta * delta;
        }
        return std::sqrt(acc);
    };

    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double a_sum = 0.0;
        std::size_t a_count = 0;
        // Mean distance to each other cluster; the smallest is b(i).
        double b = std::numeric_limits<double>::infinity();
        for (int lbl : distinct) {
            if (lbl == labels[i]) continue;
            double sum = 0.0;
            std::size_t count = 0;
            for (std::size_t j = 0; j < n; ++j)
                if (labels[j] == lbl) {
                    sum += dist(i, j);
                    ++count;
                }
            b = std::min(b, sum / static_cast<double>(count));
        }
        for (std::size_t j = 0; j < n; ++j)
            if (j != i && labels[j] == labels[i]) {
                a_sum += dist(i, j);
                ++a_count;
            }
        const double a = a_sum / static_cast<double>(a_count);
        const double denom = std::max(a, b);
        total += denom > 0.0 ? (b - a) / denom : 0.0;
    }
    return total / static_cast<double>(n);
}

double pcv_silhouette(const std::vector<PcvRecord>& records) {
    std::vector<std::vector<double>> points;
    std::vector<int> labels;
    points.reserve(records.size());
    for (const PcvRecord& r : records) {
        points.emplace_back(r.concat.begin(), r.concat.end());
        labels.push_back(phase_code(r.phase));
    }
    return silhouette_score(points, labels);
}

// ---------------------------------------------------------------------------
// PCA via power iteration with deflation
// ---------------------------------------------------------------------------

namespace {

constexpr double kPcaTol = 1e-9;
constexpr int kPcaMaxIters = 10000;

// Largest eigenpair of the symmetric d x d matrix `m` (row-major).
std::pair<double, std::vector<double>> top_eigenpair(const std::vector<double>& m, std::size_t d,
                                                     Rng& rng) {
    std::vector<double> v(d);
    double norm = 0.0;
    for (auto& x : v) {
        x = rng.uniform(-1.0, 1.0);
        norm += x * x;
    }
    norm = std::sqrt(norm);
    for (auto& x : v) x /= norm;

    std::vector<double> mv(d);
    double lambda = 0.0;
    for (int it = 0; it < kPcaMaxIters; ++it) {
        for (std::size_t r = 0; r < d; ++r) {
            double acc = 0.0;
            const double* row = m.data() + r * d;
            for (std::size_t c = 0; c < d; ++c) acc += row[c] * v[c];
            mv[r] = acc;
        }
        double mv_norm = 0.0;
        for (double x : mv) mv_norm += x * x;
        mv_norm = std::sqrt(mv_norm);
        if (mv_norm == 0.0) return {0.0, v};  // v in the null space: rank exhausted
        double diff = 0.0, dot = 0.0;
        for (std::size_t i = 0; i < d; ++i) dot += mv[i] * v[i];
        const double sign = dot >= 0.0 ? 1.0 : -1.0;
        for (std::size_t i = 0; i < d; ++i) {
            const double next = sign * mv[i] / mv_norm;
            diff = std::max(diff, std::abs(next - v[i]));
            v[i] = next;
        }
        lambda = mv_norm * sign;
        if (diff < kPcaTol) break;
    }
    return {lambda, v};
}

}  // namespace

PcaResult pca_project(const std::vector<std::vector<double>>& points, int dims) {
    if (dims < 1) throw ArgumentError("pca: dims must be positive");
    const std::size_t n = points.size();
    if (n < static_cast<std::size_t>(dims) + 1)
        throw ArgumentError("pca: need at least dims+1 points");
    const std::size_t d = points[0].size();
    for (const auto& p : points)
        if (p.size() != d) throw ArgumentError("pca: ragged points");

    std::vector<double> mean(d, 0.0);
    for (const auto& p : points)
        for (std::size_t j = 0; j < d; ++j) mean[j] += p[j];
    for (auto& m : mean) m /= static_cast<double>(n);

    // Sample covariance, row-major d x d.
    std::vector<double> cov(d * d, 0.0);
    for (const auto& p : points)
        for (std::size_t r = 0; r < d; ++r) {
            const double xr = p[r] - mean[r];
            double* row = cov.data() + r * d;
            for (std::size_t c = r; c < d; ++c) row[c] += xr * (p[c] - mean[c]);
        }
    const double denom = static_cast<double>(n - 1);
    for (std::size_t r = 0; r < d; ++r)
        for (std::size_t c = r; c < d; ++c) {
            cov[r * d + c] /= denom;
            cov[c * d + r] = cov[r * d + c];
        }

    PcaResult res;
    for (std::size_t r = 0; r < d; ++r) res.total_variance += cov[r * d + r];

    Rng rng(0xC0FFEEull);
    const double rank_eps = 1e-12 * std::max(res.total_variance, 1.0);
    for (int k = 0; k < dims; ++k) {
        auto [lambda, v] = top_eigenpair(cov, d, rng);
        if (lambda <= rank_eps) {
            res.rank_deficient = true;
            break;
        }
        // Deterministic sign: largest-|entry| coordinate positive.
        std::size_t arg = 0;
        for (std::size_t i = 1; i < d; ++i)
            if (std::abs(v[i]) > std::abs(v[arg])) arg = i;
        if (v[arg] < 0.0)
            for (auto& x : v) x = -x;

        res.eigenvalues.push_back(lambda);
        res.components.push_back(v);
        ++res.n_components;
        // Deflate: cov -= lambda * v v^T.
        for (std::size_t r = 0; r < d; ++r)
            for (std::size_t c = 0; c < d; ++c) cov[r * d + c] -= lambda * v[r] * v[c];
    }

    res.coords.assign(n, std::vector<double>(static_cast<std::size_t>(res.n_components), 0.0));
    for (std::size_t i = 0; i < n; ++i)
        for (int k = 0; k < res.n_components; ++k) {
            double acc = 0.0;
            const auto& v = res.components[static_cast<std::size_t>(k)];
            for (std::size_t j = 0; j < d; ++j) acc += (points[i][j] - mean[j]) * v[j];
            res.coords[i][static_cast<std::size_t>(k)] = acc;
        }
    return res;
}

PcaResult pca_project(const std::vector<PcvRecord>& records, int dims) {
    std::vector<std::vector<double>> points;
    points.reserve(records.size());
    for (const PcvRecord& r : records) points.emplace_back(r.concat.begin(), r.concat.end());
    return pca_project(points, dims);
}

// ---------------------------------------------------------------------------
// Exports
// ---------------------------------------------------------------------------

namespace {

std::ofstream open_out(const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write '" + path + "'");
    return f;
}

}  // namespace

void write_pcv_csv(const std::string& path, const std::vector<PcvRecord>& records) {
    std::ofstream f = open_out(path);
    f << "id,phase";
    const std::size_t d = records.empty() ? 0 : records[0].concat.size();
    for (std::size_t j = 0; j < d; ++j) f << ",v" << j;
    f << "\n";
    char num[32];
    for (const PcvRecord& r : records) {
        if (r.concat.size() != d) throw ArgumentError("write_pcv_csv: ragged records");
        f << r.id << "," << phase_name(r.phase);
        for (float v : r.concat) {
            std::snprintf(num, sizeof(num), "%.8g", static_cast<double>(v));
            f << "," << num;
        }
        f << "\n";
    }
    f.flush();
    if (!f) throw IoError("write failed for '" + path + "'");
}

void write_projection_csv(const std::string& path, const std::vector<PcvRecord>& records,
                          const PcaResult& pca) {
    if (pca.coords.size() != records.size())
        throw ArgumentError("write_projection_csv: records/coords size mismatch");
    std::ofstream f = open_out(path);
    static const char* axis[] = {"x", "y", "z"};
    f << "id,phase";
    for (int k = 0; k < pca.n_components; ++k)
        f << "," << (k < 3 ? axis[k] : ("c" + std::to_string(k)).c_str());
    f << "\n";
    char num[32];
    for (std::size_t i = 0; i < records.size(); ++i) {
        f << records[i].id << "," << phase_name(records[i].phase);
        for (double c : pca.coords[i]) {
            std::snprintf(num, sizeof(num), "%.10g", c);
            f << "," << num;
        }
        f << "\n";
    }
    f.flush();
    if (!f) throw IoError("write failed for '" + path + "'");
}

Json pcv_analysis_json(const std::vector<PcvRecord>& records, double silhouette,
                       const PcaResult& pca) {
    Json j;
    j["n_records"] = records.size();
    j["pcv_length"] = records.empty() ? 0 : records[0].concat.size();
    j["silhouette"] = silhouette;
    j["pca"] = {{"n_components", pca.n_components},
                {"rank_deficient", pca.rank_deficient},
                {"eigenvalues", pca.eigenvalues},
                {"total_variance", pca.total_variance}};
    Json ratios = Json::array();
    for (int k = 0; k < pca.n_components; ++k) ratios.push_back(pca.explained_ratio(k));
    j["pca"]["explained_variance_ratio"] = std::move(ratios);
    return j;
}

}  // namespace vmct
