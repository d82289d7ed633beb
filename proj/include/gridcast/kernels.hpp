#pragma once

#include <cstddef>
#include <string>

// Data-parallel inner loops used by the tensor engine. A scalar reference
// implementation always exists; an AVX2 (x86-64) or NEON (aarch64) variant is
// selected at runtime when the CPU supports it. Every vector variant performs
// the same per-element operations as the scalar reference (no FMA contraction,
// no reordered reductions), so all backends produce bit-identical results.
namespace gridcast::kernels {

enum class Backend { Auto, Scalar, Avx2, Neon };

// Process-wide backend selection. Auto picks the best supported variant.
void set_backend(Backend b);
Backend active_backend();
std::string backend_name();

// Parse "auto" / "scalar" / "avx2" / "neon". Throws on unknown names or
// variants the CPU does not support.
Backend parse_backend(const std::string& name);

// out[i] = a[i] + b[i]
void add(const double* a, const double* b, double* out, std::size_t n);
// out[i] = a[i] * b[i]
void mul(const double* a, const double* b, double* out, std::size_t n);
// out[i] += a[i] * b[i]
void mul_add(const double* a, const double* b, double* out, std::size_t n);
// y[i] += a * x[i]
void axpy(double a, const double* x, double* y, std::size_t n);
// out[i] = a * x[i]
void scale(double a, const double* x, double* out, std::size_t n);

}  // namespace gridcast::kernels
