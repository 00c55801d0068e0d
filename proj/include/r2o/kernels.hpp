#pragma once

#include <cstddef>

// Data-parallel inner loops shared by the encoder, the clustering code and
// the optimizers. Every kernel has a scalar reference implementation and an
// AVX2+FMA variant; the active variant is chosen at runtime from CPU
// features and can be forced for equivalence testing.
//
// All matrices are row-major, double precision. GEMM kernels accumulate
// into C (callers zero C when they want a plain product).

namespace r2o::kernels {

enum class Impl { scalar, avx2 };

// Currently active implementation.
Impl active();
// Force an implementation (tests); forcing avx2 on a CPU without AVX2+FMA
// falls back to scalar.
void force(Impl impl);
// Re-run CPU detection (undoes force()).
void autodetect();
const char* name(Impl impl);

// C[m x n] += A[m x k] * B[k x n]
void gemm_nn(const double* a, const double* b, double* c,
             std::size_t m, std::size_t k, std::size_t n);
// C[k x n] += A^T * B  with A[m x k], B[m x n]
void gemm_tn(const double* a, const double* b, double* c,
             std::size_t m, std::size_t k, std::size_t n);

double dot(const double* a, const double* b, std::size_t n);
double sqdist(const double* a, const double* b, std::size_t n);
double sum(const double* x, std::size_t n);

// y += alpha * x
void axpy(double alpha, const double* x, double* y, std::size_t n);
// y = alpha * x + beta * y   (EMA updates)
void lerp(double alpha, const double* x, double beta, double* y, std::size_t n);
void scale(double alpha, double* x, std::size_t n);

void relu(const double* x, double* y, std::size_t n);
// dx = dy where y > 0, else 0  (y is the relu output)
void relu_backward(const double* y, const double* dy, double* dx, std::size_t n);

}  // namespace r2o::kernels
