// AVX2+FMA kernel variants. This translation unit is compiled with
// -mavx2 -mfma; the dispatcher only selects these after checking CPU
// support at runtime.

#include "r2o/kernels.hpp"

#if defined(__AVX2__) && defined(__FMA__)

#include <immintrin.h>

namespace r2o::kernels::detail {

static inline double hsum4(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d sh = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

// Both GEMMs accumulate C[i][j] over the shared dimension in the same
// order as the scalar reference; the FMA contraction is the only rounding
// difference. C panels are held in registers across the whole contraction,
// so memory traffic per output element is one load and one store.
void gemm_nn_avx2(const double* a, const double* b, double* c,
                  std::size_t m, std::size_t k, std::size_t n) {
    const std::size_t n8 = n & ~std::size_t(7);
    const std::size_t n4 = n & ~std::size_t(3);
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        std::size_t j = 0;
        for (; j < n8; j += 8) {
            __m256d c0 = _mm256_loadu_pd(crow + j);
            __m256d c1 = _mm256_loadu_pd(crow + j + 4);
            const double* bp = b + j;
            for (std::size_t p = 0; p < k; ++p, bp += n) {
                const __m256d av = _mm256_set1_pd(arow[p]);
                c0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(bp), c0);
                c1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(bp + 4), c1);
            }
            _mm256_storeu_pd(crow + j, c0);
            _mm256_storeu_pd(crow + j + 4, c1);
        }
        for (; j < n4; j += 4) {
            __m256d c0 = _mm256_loadu_pd(crow + j);
            const double* bp = b + j;
            for (std::size_t p = 0; p < k; ++p, bp += n)
                c0 = _mm256_fmadd_pd(_mm256_set1_pd(arow[p]), _mm256_loadu_pd(bp), c0);
            _mm256_storeu_pd(crow + j, c0);
        }
        for (; j < n; ++j) {
            double acc = crow[j];
            const double* bp = b + j;
            for (std::size_t p = 0; p < k; ++p, bp += n) acc += arow[p] * *bp;
            crow[j] = acc;
        }
    }
}

void gemm_tn_avx2(const double* a, const double* b, double* c,
                  std::size_t m, std::size_t k, std::size_t n) {
    const std::size_t n8 = n & ~std::size_t(7);
    const std::size_t n4 = n & ~std::size_t(3);
    for (std::size_t i = 0; i < k; ++i) {
        double* crow = c + i * n;
        std::size_t j = 0;
        for (; j < n8; j += 8) {
            __m256d c0 = _mm256_loadu_pd(crow + j);
            __m256d c1 = _mm256_loadu_pd(crow + j + 4);
            const double* ap = a + i;
            const double* bp = b + j;
            for (std::size_t p = 0; p < m; ++p, ap += k, bp += n) {
                const __m256d av = _mm256_set1_pd(*ap);
                c0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(bp), c0);
                c1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(bp + 4), c1);
            }
            _mm256_storeu_pd(crow + j, c0);
            _mm256_storeu_pd(crow + j + 4, c1);
        }
        for (; j < n4; j += 4) {
            __m256d c0 = _mm256_loadu_pd(crow + j);
            const double* ap = a + i;
            const double* bp = b + j;
            for (std::size_t p = 0; p < m; ++p, ap += k, bp += n)
                c0 = _mm256_fmadd_pd(_mm256_set1_pd(*ap), _mm256_loadu_pd(bp), c0);
            _mm256_storeu_pd(crow + j, c0);
        }
        for (; j < n; ++j) {
            double acc = crow[j];
            const double* ap = a + i;
            const double* bp = b + j;
            for (std::size_t p = 0; p < m; ++p, ap += k, bp += n) acc += *ap * *bp;
            crow[j] = acc;
        }
    }
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    const std::size_t n8 = n & ~std::size_t(7);
    for (; i < n8; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
    }
    double s = hsum4(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

double sqdist_avx2(const double* a, const double* b, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    const std::size_t n8 = n & ~std::size_t(7);
    for (; i < n8; i += 8) {
        const __m256d d0 = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
        const __m256d d1 = _mm256_sub_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4));
        acc0 = _mm256_fmadd_pd(d0, d0, acc0);
        acc1 = _mm256_fmadd_pd(d1, d1, acc1);
    }
    double s = hsum4(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

double sum_avx2(const double* x, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    const std::size_t n4 = n & ~std::size_t(3);
    for (; i < n4; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
    double s = hsum4(acc);
    for (; i < n; ++i) s += x[i];
    return s;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
    const __m256d av = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    const std::size_t n4 = n & ~std::size_t(3);
    for (; i < n4; i += 4) {
        __m256d yv = _mm256_loadu_pd(y + i);
        yv = _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), yv);
        _mm256_storeu_pd(y + i, yv);
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void lerp_avx2(double alpha, const double* x, double beta, double* y, std::size_t n) {
    const __m256d av = _mm256_set1_pd(alpha);
    const __m256d bv = _mm256_set1_pd(beta);
    std::size_t i = 0;
    const std::size_t n4 = n & ~std::size_t(3);
    for (; i < n4; i += 4) {
        const __m256d yv = _mm256_mul_pd(bv, _mm256_loadu_pd(y + i));
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), yv));
    }
    for (; i < n; ++i) y[i] = alpha * x[i] + beta * y[i];
}

void scale_avx2(double alpha, double* x, std::size_t n) {
    const __m256d av = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    const std::size_t n4 = n & ~std::size_t(3);
    for (; i < n4; i += 4)
        _mm256_storeu_pd(x + i, _mm256_mul_pd(av, _mm256_loadu_pd(x + i)));
    for (; i < n; ++i) x[i] *= alpha;
}

void relu_avx2(const double* x, double* y, std::size_t n) {
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    const std::size_t n4 = n & ~std::size_t(3);
    for (; i < n4; i += 4)
        _mm256_storeu_pd(y + i, _mm256_max_pd(zero, _mm256_loadu_pd(x + i)));
    for (; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward_avx2(const double* y, const double* dy, double* dx, std::size_t n) {
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    const std::size_t n4 = n & ~std::size_t(3);
    for (; i < n4; i += 4) {
        const __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(y + i), zero, _CMP_GT_OQ);
        _mm256_storeu_pd(dx + i, _mm256_and_pd(mask, _mm256_loadu_pd(dy + i)));
    }
    for (; i < n; ++i) dx[i] = y[i] > 0.0 ? dy[i] : 0.0;
}

}  // namespace r2o::kernels::detail

#endif  // __AVX2__ && __FMA__
