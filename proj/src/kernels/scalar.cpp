#include <algorithm>
#include <limits>

#include "rnntd/kernels.hpp"

namespace rnntd::kernels {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

double max_scalar(const double* x, std::size_t n) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, x[i]);
  return m;
}

double sum_scalar(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

void tanh_backward_scalar(const double* grad, const double* act, double* out,
                          std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = grad[i] * (1.0 - act[i] * act[i]);
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{"scalar", dot_scalar, axpy_scalar, max_scalar,
                                 sum_scalar, tanh_backward_scalar};
  return table;
}

}  // namespace rnntd::kernels
