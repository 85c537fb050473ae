#pragma once

#include <cstddef>
#include <span>
#include <string_view>

namespace rnntd::kernels {

// Dense inner loops used by the toy model and softmax. Every variant must
// agree with the scalar reference: elementwise kernels bit-for-bit, and
// reductions up to summation order.
struct KernelTable {
  std::string_view name;
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  double (*max)(const double* x, std::size_t n);
  double (*sum)(const double* x, std::size_t n);
  // out = grad * (1 - act * act)
  void (*tanh_backward)(const double* grad, const double* act, double* out,
                        std::size_t n);
};

const KernelTable& scalar_table();
// Null when the build has no AVX2 translation unit.
const KernelTable* avx2_table();

bool cpu_has_avx2();

// Chosen once: AVX2 when compiled in and supported by the CPU, unless the
// RNNTD_SIMD environment variable is set to "scalar".
const KernelTable& active();

// Overrides the active table for the rest of the process (tests, benchmarks).
void set_active(const KernelTable& table);

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}

}  // namespace rnntd::kernels
