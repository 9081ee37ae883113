#pragma once

#include <cstddef>

namespace vmct {

// Re-execs the process once with OPENBLAS_CORETYPE/OPENBLAS_NUM_THREADS set
// when they are not already. OpenBLAS selects its kernels in a library
// constructor that runs before main(), and on VMs with masked CPUID it falls
// back to generic kernels several times slower than the AVX ones, so setenv()
// from main() is too late. Call first thing in main(); returns normally when
// the environment is already prepared. Set VMCT_NO_BLAS_TUNE=1 to disable.
void blas_bootstrap(int argc, char** argv);

// Row-major C = alpha * op(A) * op(B) + beta * C.
// A is MxK (or KxM when trans_a), B is KxN (or NxK when trans_b), C is MxN.
// Leading dimensions are the allocated row strides of the stored matrices.
void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
          const float* a, int lda, const float* b, int ldb, float beta, float* c, int ldc);
void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
          const double* a, int lda, const double* b, int ldb, double beta, double* c, int ldc);

}  // namespace vmct
