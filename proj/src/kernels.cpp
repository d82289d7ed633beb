#include "gridcast/kernels.hpp"

#include <atomic>
#include <stdexcept>

#if defined(__aarch64__)
#include <arm_neon.h>
#endif

namespace gridcast::kernels {

namespace scalar {

void add(const double* a, const double* b, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void mul(const double* a, const double* b, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void mul_add(const double* a, const double* b, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] += a[i] * b[i];
}

void axpy(double a, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void scale(double a, const double* x, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a * x[i];
}

}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
#define GRIDCAST_HAVE_AVX2_BUILD 1
namespace avx2 {
void add(const double* a, const double* b, double* out, std::size_t n);
void mul(const double* a, const double* b, double* out, std::size_t n);
void mul_add(const double* a, const double* b, double* out, std::size_t n);
void axpy(double a, const double* x, double* y, std::size_t n);
void scale(double a, const double* x, double* out, std::size_t n);
bool supported();
}  // namespace avx2
#endif

#if defined(__aarch64__)
#define GRIDCAST_HAVE_NEON_BUILD 1
namespace neon {

void add(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2)
        vst1q_f64(out + i, vaddq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    for (; i < n; ++i) out[i] = a[i] + b[i];
}

void mul(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2)
        vst1q_f64(out + i, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    for (; i < n; ++i) out[i] = a[i] * b[i];
}

void mul_add(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        // mul then add, not vfmaq, to stay bit-identical with scalar
        float64x2_t p = vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i));
        vst1q_f64(out + i, vaddq_f64(vld1q_f64(out + i), p));
    }
    for (; i < n; ++i) out[i] += a[i] * b[i];
}

void axpy(double a, const double* x, double* y, std::size_t n) {
    float64x2_t va = vdupq_n_f64(a);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        float64x2_t p = vmulq_f64(va, vld1q_f64(x + i));
        vst1q_f64(y + i, vaddq_f64(vld1q_f64(y + i), p));
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

void scale(double a, const double* x, double* out, std::size_t n) {
    float64x2_t va = vdupq_n_f64(a);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2)
        vst1q_f64(out + i, vmulq_f64(va, vld1q_f64(x + i)));
    for (; i < n; ++i) out[i] = a * x[i];
}

}  // namespace neon
#endif

namespace {

std::atomic<Backend> g_backend{Backend::Auto};

Backend resolve(Backend b) {
    if (b != Backend::Auto) return b;
#ifdef GRIDCAST_HAVE_AVX2_BUILD
    if (avx2::supported()) return Backend::Avx2;
#endif
#ifdef GRIDCAST_HAVE_NEON_BUILD
    return Backend::Neon;
#endif
    return Backend::Scalar;
}

}  // namespace

void set_backend(Backend b) {
    // validate up front so dispatch never sees an unsupported choice
#ifdef GRIDCAST_HAVE_AVX2_BUILD
    if (b == Backend::Avx2 && !avx2::supported())
        throw std::runtime_error("avx2 backend requested but CPU lacks AVX2");
#else
    if (b == Backend::Avx2)
        throw std::runtime_error("avx2 backend not available in this build");
#endif
#ifndef GRIDCAST_HAVE_NEON_BUILD
    if (b == Backend::Neon)
        throw std::runtime_error("neon backend not available in this build");
#endif
    g_backend.store(b, std::memory_order_relaxed);
}

Backend active_backend() {
    return resolve(g_backend.load(std::memory_order_relaxed));
}

std::string backend_name() {
    switch (active_backend()) {
        case Backend::Avx2: return "avx2";
        case Backend::Neon: return "neon";
        default: return "scalar";
    }
}

Backend parse_backend(const std::string& name) {
    if (name == "auto") return Backend::Auto;
    if (name == "scalar") return Backend::Scalar;
    if (name == "avx2") return Backend::Avx2;
    if (name == "neon") return Backend::Neon;
    throw std::runtime_error("unknown kernel backend: " + name);
}

#ifdef GRIDCAST_HAVE_AVX2_BUILD
#define GRIDCAST_DISPATCH(fn, ...)                               \
    switch (active_backend()) {                                  \
        case Backend::Avx2: avx2::fn(__VA_ARGS__); return;       \
        default: scalar::fn(__VA_ARGS__); return;                \
    }
#elif defined(GRIDCAST_HAVE_NEON_BUILD)
#define GRIDCAST_DISPATCH(fn, ...)                               \
    switch (active_backend()) {                                  \
        case Backend::Neon: neon::fn(__VA_ARGS__); return;       \
        default: scalar::fn(__VA_ARGS__); return;                \
    }
#else
#define GRIDCAST_DISPATCH(fn, ...) scalar::fn(__VA_ARGS__); return;
#endif

void add(const double* a, const double* b, double* out, std::size_t n) {
    GRIDCAST_DISPATCH(add, a, b, out, n)
}

void mul(const double* a, const double* b, double* out, std::size_t n) {
    GRIDCAST_DISPATCH(mul, a, b, out, n)
}

void mul_add(const double* a, const double* b, double* out, std::size_t n) {
    GRIDCAST_DISPATCH(mul_add, a, b, out, n)
}

void axpy(double a, const double* x, double* y, std::size_t n) {
    GRIDCAST_DISPATCH(axpy, a, x, y, n)
}

void scale(double a, const double* x, double* out, std::size_t n) {
    GRIDCAST_DISPATCH(scale, a, x, out, n)
}

}  // namespace gridcast::kernels
