#include "itl/tensor.hpp"

#include <cblas.h>

#include <cstdio>
#include <cstdlib>

namespace itl::neuralcore {

namespace {
// Row-major leading-dimension requirements; abort with a readable message
// instead of letting BLAS print an opaque parameter number.
void check_ld(const char* who, bool trans_a, bool trans_b, int M, int N, int K,
              int lda, int ldb, int ldc) {
    int need_a = trans_a ? M : K;
    int need_b = trans_b ? K : N;
    if (lda < need_a || ldb < need_b || ldc < N) {
        std::fprintf(stderr,
                     "%s: bad leading dims M=%d N=%d K=%d lda=%d (need %d) "
                     "ldb=%d (need %d) ldc=%d (need %d)\n",
                     who, M, N, K, lda, need_a, ldb, need_b, ldc, N);
        std::abort();
    }
}
}  // namespace

void linear(const double* x, const double* w, double* y, int M, int N, int K) {
    check_ld("linear", false, true, M, N, K, K, K, N);
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, M, N, K, 1.0, x, K, w,
                K, 0.0, y, N);
}

void linear_dx(const double* dy, const double* w, double* dx, int M, int N,
               int K) {
    check_ld("linear_dx", false, false, M, K, N, N, K, K);
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, M, K, N, 1.0, dy, N,
                w, K, 1.0, dx, K);
}

void linear_dw(const double* dy, const double* x, double* dw, int M, int N,
               int K) {
    check_ld("linear_dw", true, false, N, K, M, N, K, K);
    cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, N, K, M, 1.0, dy, N,
                x, K, 1.0, dw, K);
}

void gemm(bool trans_a, bool trans_b, int M, int N, int K, double alpha,
          const double* a, int lda, const double* b, int ldb, double beta,
          double* c, int ldc) {
    check_ld("gemm", trans_a, trans_b, M, N, K, lda, ldb, ldc);
    cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, M, N, K, alpha, a, lda, b,
                ldb, beta, c, ldc);
}

}  // namespace itl::neuralcore
