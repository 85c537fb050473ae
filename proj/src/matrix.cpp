#include "rnntd/matrix.hpp"

#include <algorithm>

#include "rnntd/error.hpp"
#include "rnntd/kernels.hpp"

namespace rnntd {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
  if (data_.size() != rows * cols) throw ShapeError("matrix value count does not match shape");
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void gemv_acc(const Matrix& w, std::span<const double> x, std::span<double> out) {
  const auto& k = kernels::active();
  for (std::size_t r = 0; r < w.rows(); ++r) out[r] += k.dot(w.row(r).data(), x.data(), w.cols());
}

void gemv_t_acc(const Matrix& w, std::span<const double> x, std::span<double> out) {
  const auto& k = kernels::active();
  for (std::size_t r = 0; r < w.rows(); ++r) {
    if (x[r] != 0.0) k.axpy(x[r], w.row(r).data(), out.data(), w.cols());
  }
}

void outer_acc(std::span<const double> a, std::span<const double> b, Matrix& w) {
  const auto& k = kernels::active();
  for (std::size_t r = 0; r < w.rows(); ++r) {
    if (a[r] != 0.0) k.axpy(a[r], b.data(), w.row(r).data(), w.cols());
  }
}

}  // namespace rnntd
