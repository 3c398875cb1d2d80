// Dense row-major 64-bit tensors plus the few BLAS-backed kernels the
// decoder needs.
#pragma once

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

namespace itl::neuralcore {

struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until ensure_grad()

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        data.assign(numel(), 0.0);
    }

    std::size_t numel() const {
        std::size_t n = 1;
        for (int d : shape) n *= static_cast<std::size_t>(d);
        return n;
    }
    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }
    void zero_grad() {
        if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
    }
};

// y[M,N] = x[M,K] * w[N,K]^T   (w stored out-major, Llama convention)
void linear(const double* x, const double* w, double* y, int M, int N, int K);
// dx[M,K] += dy[M,N] * w[N,K]
void linear_dx(const double* dy, const double* w, double* dx, int M, int N,
               int K);
// dw[N,K] += dy[M,N]^T * x[M,K]
void linear_dw(const double* dy, const double* x, double* dw, int M, int N,
               int K);

// General strided matmul used by attention:
// c[M,N] (+)= op(a) * op(b), where op(a) = a[M,K] or a[K,M]^T and
// op(b) = b[K,N] or b[N,K]^T.
void gemm(bool trans_a, bool trans_b, int M, int N, int K, double alpha,
          const double* a, int lda, const double* b, int ldb, double beta,
          double* c, int ldc);

}  // namespace itl::neuralcore
