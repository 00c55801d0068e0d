#include "r2o/kernels.hpp"

namespace r2o::kernels {

namespace detail {

void gemm_nn_scalar(const double*, const double*, double*, std::size_t, std::size_t, std::size_t);
void gemm_tn_scalar(const double*, const double*, double*, std::size_t, std::size_t, std::size_t);
double dot_scalar(const double*, const double*, std::size_t);
double sqdist_scalar(const double*, const double*, std::size_t);
double sum_scalar(const double*, std::size_t);
void axpy_scalar(double, const double*, double*, std::size_t);
void lerp_scalar(double, const double*, double, double*, std::size_t);
void scale_scalar(double, double*, std::size_t);
void relu_scalar(const double*, double*, std::size_t);
void relu_backward_scalar(const double*, const double*, double*, std::size_t);

#ifdef R2O_HAVE_AVX2
void gemm_nn_avx2(const double*, const double*, double*, std::size_t, std::size_t, std::size_t);
void gemm_tn_avx2(const double*, const double*, double*, std::size_t, std::size_t, std::size_t);
double dot_avx2(const double*, const double*, std::size_t);
double sqdist_avx2(const double*, const double*, std::size_t);
double sum_avx2(const double*, std::size_t);
void axpy_avx2(double, const double*, double*, std::size_t);
void lerp_avx2(double, const double*, double, double*, std::size_t);
void scale_avx2(double, double*, std::size_t);
void relu_avx2(const double*, double*, std::size_t);
void relu_backward_avx2(const double*, const double*, double*, std::size_t);
#endif

}  // namespace detail

namespace {

struct Table {
    void (*gemm_nn)(const double*, const double*, double*, std::size_t, std::size_t, std::size_t);
    void (*gemm_tn)(const double*, const double*, double*, std::size_t, std::size_t, std::size_t);
    double (*dot)(const double*, const double*, std::size_t);
    double (*sqdist)(const double*, const double*, std::size_t);
    double (*sum)(const double*, std::size_t);
    void (*axpy)(double, const double*, double*, std::size_t);
    void (*lerp)(double, const double*, double, double*, std::size_t);
    void (*scale)(double, double*, std::size_t);
    void (*relu)(const double*, double*, std::size_t);
    void (*relu_backward)(const double*, const double*, double*, std::size_t);
};

constexpr Table kScalar = {
    detail::gemm_nn_scalar, detail::gemm_tn_scalar, detail::dot_scalar,
    detail::sqdist_scalar,  detail::sum_scalar,     detail::axpy_scalar,
    detail::lerp_scalar,    detail::scale_scalar,   detail::relu_scalar,
    detail::relu_backward_scalar,
};

#ifdef R2O_HAVE_AVX2
constexpr Table kAvx2 = {
    detail::gemm_nn_avx2, detail::gemm_tn_avx2, detail::dot_avx2,
    detail::sqdist_avx2,  detail::sum_avx2,     detail::axpy_avx2,
    detail::lerp_avx2,    detail::scale_avx2,   detail::relu_avx2,
    detail::relu_backward_avx2,
};
#endif

bool cpu_has_avx2_fma() {
#ifdef R2O_HAVE_AVX2
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

Impl g_impl = cpu_has_avx2_fma() ? Impl::avx2 : Impl::scalar;

const Table& table() {
#ifdef R2O_HAVE_AVX2
    return g_impl == Impl::avx2 ? kAvx2 : kScalar;
#else
    return kScalar;
#endif
}

}  // namespace

Impl active() { return g_impl; }

void force(Impl impl) {
    if (impl == Impl::avx2 && !cpu_has_avx2_fma()) impl = Impl::scalar;
    g_impl = impl;
}

void autodetect() { g_impl = cpu_has_avx2_fma() ? Impl::avx2 : Impl::scalar; }

const char* name(Impl impl) { return impl == Impl::avx2 ? "avx2" : "scalar"; }

void gemm_nn(const double* a, const double* b, double* c,
             std::size_t m, std::size_t k, std::size_t n) {
    table().gemm_nn(a, b, c, m, k, n);
}

void gemm_tn(const double* a, const double* b, double* c,
             std::size_t m, std::size_t k, std::size_t n) {
    table().gemm_tn(a, b, c, m, k, n);
}

double dot(const double* a, const double* b, std::size_t n) { return table().dot(a, b, n); }
double sqdist(const double* a, const double* b, std::size_t n) { return table().sqdist(a, b, n); }
double sum(const double* x, std::size_t n) { return table().sum(x, n); }
void axpy(double alpha, const double* x, double* y, std::size_t n) { table().axpy(alpha, x, y, n); }
void lerp(double alpha, const double* x, double beta, double* y, std::size_t n) {
    table().lerp(alpha, x, beta, y, n);
}
void scale(double alpha, double* x, std::size_t n) { table().scale(alpha, x, n); }
void relu(const double* x, double* y, std::size_t n) { table().relu(x, y, n); }
void relu_backward(const double* y, const double* dy, double* dx, std::size_t n) {
    table().relu_backward(y, dy, dx, n);
}

}  // namespace r2o::kernels
