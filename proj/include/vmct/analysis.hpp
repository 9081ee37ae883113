#pragma once

// Phase-conditioning-vector analysis: per-sample PCV extraction and
// concatenation (length 480 at default widths), silhouette scoring of the
// phase clusters, and a deterministic PCA projection for 2-D export.

#include <string>
#include <vector>

#include "vmct/dataset.hpp"
#include "vmct/json_util.hpp"
#include "vmct/network.hpp"

namespace vmct {

struct PcvRecord {
    int id = 0;
    ContrastPhase phase = ContrastPhase::Angio;
    std::vector<float> concat;  // v1 || v2 || v3 || v4

    bool operator==(const PcvRecord&) const = default;
};

// One record per dataset item, eval-mode BN. Records do not depend on how
// items are batched (beyond float summation-order noise in the BLAS calls).
// Standalone models have no PCVs -> argument error.
std::vector<PcvRecord> extract_pcvs(UnifiedModel& model, const Dataset& ds);

// Mean silhouette with Euclidean distance. Requires >= 2 distinct labels and
// >= 2 samples per label; a sample with max(a,b) = 0 contributes 0.
double silhouette_score(const std::vector<std::vector<double>>& points,
                        const std::vector<int>& labels);

// Silhouette of PCV records grouped by phase.
double pcv_silhouette(const std::vector<PcvRecord>& records);

struct PcaResult {
    int n_components = 0;  // may be < requested when rank-deficient
    bool rank_deficient = false;
    std::vector<std::vector<double>> coords;      // one row per point, n_components wide
    std::vector<std::vector<double>> components;  // unit vectors, deterministic sign
    std::vector<double> eigenvalues;
    double total_variance = 0.0;  // trace of the covariance

    double explained_ratio(int k) const {
        return total_variance > 0.0 ? eigenvalues[static_cast<std::size_t>(k)] / total_variance
                                    : 0.0;
    }
};

// Mean-centered projection onto the top-`dims` principal directions (power
// iteration with deflation, tol 1e-9, max 10 000 iterations). The sign of
// each component makes its largest-magnitude entry positive.
PcaResult pca_project(const std::vector<std::vector<double>>& points, int dims = 2);
PcaResult pca_project(const std::vector<PcvRecord>& records, int dims = 2);

// CSV exports: records as "id,phase,v0..v{d-1}", projections as
// "id,phase,x,y" (or fewer coordinate columns when rank-deficient).
void write_pcv_csv(const std::string& path, const std::vector<PcvRecord>& records);
void write_projection_csv(const std::string& path, const std::vector<PcvRecord>& records,
                          const PcaResult& pca);

Json pcv_analysis_json(const std::vector<PcvRecord>& records, double silhouette,
                       const PcaResult& pca);

}  // namespace vmct
