#include "vmct/blas.hpp"

#include <cblas.h>
#include <unistd.h>

#include <cstdlib>

namespace vmct {

void blas_bootstrap(int /*argc*/, char** argv) {
    if (std::getenv("VMCT_NO_BLAS_TUNE") != nullptr) return;
    if (std::getenv("VMCT_BLAS_BOOTSTRAPPED") != nullptr) return;

    const bool need_core = std::getenv("OPENBLAS_CORETYPE") == nullptr;
    const bool need_threads = std::getenv("OPENBLAS_NUM_THREADS") == nullptr;
    if (!need_core && !need_threads) return;

    if (need_core) {
#if defined(__x86_64__)
        if (__builtin_cpu_supports("avx512f")) {
            setenv("OPENBLAS_CORETYPE", "SKYLAKEX", 0);
        } else if (__builtin_cpu_supports("avx2")) {
            setenv("OPENBLAS_CORETYPE", "HASWELL", 0);
        }
#endif
    }
    // Single-threaded BLAS: results are then bit-identical run to run and the
    // box this targets has one core anyway.
    if (need_threads) setenv("OPENBLAS_NUM_THREADS", "1", 0);
    setenv("VMCT_BLAS_BOOTSTRAPPED", "1", 1);
    execv("/proc/self/exe", argv);
    // execv only returns on failure; continue with whatever kernels we got.
}

void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a, int lda,
          const float* b, int ldb, float beta, float* c, int ldc) {
    cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a, int lda,
          const double* b, int ldb, double beta, double* c, int ldc) {
    cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

}  // namespace vmct
