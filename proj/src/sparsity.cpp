#include "rnntd/sparsity.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rnntd/error.hpp"

namespace rnntd {

void SparsitySchedule::validate() const {
  if (!(s_initial >= 0.0 && s_initial <= s_final && s_final <= 1.0)) {
    throw InvalidInput("sparsity schedule needs 0 <= s_initial <= s_final <= 1");
  }
  if (s_initial >= 1.0) throw InvalidInput("s_initial must be below 1");
  if (start_step < 0 || end_step <= start_step) {
    throw InvalidInput("sparsity schedule needs 0 <= start_step < end_step");
  }
  if (update_interval < 1) throw InvalidInput("update_interval must be >= 1");
}

bool SparsitySchedule::is_update_step(std::int64_t step) const {
  if (step < start_step || step > end_step) return false;
  return step == end_step || (step - start_step) % update_interval == 0;
}

double target_sparsity(const SparsitySchedule& sched, std::int64_t step) {
  if (step <= sched.start_step) return sched.s_initial;
  if (step >= sched.end_step) return sched.s_final;
  const double progress = static_cast<double>(step - sched.start_step) /
                          static_cast<double>(sched.end_step - sched.start_step);
  const double remaining = 1.0 - progress;
  return sched.s_final + (sched.s_initial - sched.s_final) * remaining * remaining * remaining;
}

BlockGrid::BlockGrid(std::size_t rows, std::size_t cols, BlockShape shape)
    : rows_(rows), cols_(cols), shape_(shape) {
  if (shape.rows == 0 || shape.cols == 0) throw InvalidInput("block shape must be positive");
  grid_rows_ = (rows + shape.rows - 1) / shape.rows;
  grid_cols_ = (cols + shape.cols - 1) / shape.cols;
}

std::size_t BlockGrid::prunable_count() const {
  return (rows_ / shape_.rows) * (cols_ / shape_.cols);
}

bool BlockGrid::is_partial(std::size_t block) const {
  const std::size_t br = block / grid_cols_;
  const std::size_t bc = block % grid_cols_;
  return (br + 1) * shape_.rows > rows_ || (bc + 1) * shape_.cols > cols_;
}

SaliencyScore block_saliency(const Matrix& weights, const Matrix& grads, BlockShape shape) {
  if (!weights.same_shape(grads)) throw ShapeError("weights and gradients differ in shape");
  SaliencyScore out{BlockGrid(weights.rows(), weights.cols(), shape), {}};
  out.scores.assign(out.grid.block_count(), 0.0);
  for (std::size_t r = 0; r < weights.rows(); ++r) {
    for (std::size_t c = 0; c < weights.cols(); ++c) {
      out.scores[out.grid.block_of(r, c)] += std::abs(weights(r, c) * grads(r, c));
    }
  }
  return out;
}

BlockMask::BlockMask(BlockGrid grid) : grid_(grid), kept_(grid.block_count(), 1) {}

BlockMask::BlockMask(BlockGrid grid, std::vector<std::uint8_t> kept)
    : grid_(grid), kept_(std::move(kept)) {
  if (kept_.size() != grid_.block_count()) throw ShapeError("mask bit count does not match grid");
  for (std::size_t b = 0; b < kept_.size(); ++b) {
    if (kept_[b] > 1) throw InvalidInput("mask bits must be 0 or 1");
    if (!kept_[b] && grid_.is_partial(b)) throw InvalidInput("partial blocks cannot be pruned");
  }
}

std::size_t BlockMask::pruned_blocks() const {
  return static_cast<std::size_t>(std::count(kept_.begin(), kept_.end(), std::uint8_t{0}));
}

double BlockMask::block_sparsity() const {
  const std::size_t n = grid_.prunable_count();
  return n == 0 ? 0.0 : static_cast<double>(pruned_blocks()) / static_cast<double>(n);
}

double BlockMask::element_sparsity() const {
  const std::size_t total = grid_.rows() * grid_.cols();
  if (total == 0) return 0.0;
  const std::size_t per_block = grid_.shape().rows * grid_.shape().cols;
  return static_cast<double>(pruned_blocks() * per_block) / static_cast<double>(total);
}

BlockMask update_mask(const SaliencyScore& scores, double target) {
  if (!(target >= 0.0 && target <= 1.0)) throw InvalidInput("target sparsity must lie in [0, 1]");
  const BlockGrid& grid = scores.grid;
  if (scores.scores.size() != grid.block_count()) throw ShapeError("score count does not match grid");

  std::vector<std::size_t> order;
  order.reserve(grid.block_count());
  for (std::size_t b = 0; b < grid.block_count(); ++b) {
    if (!grid.is_partial(b)) order.push_back(b);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores.scores[a] < scores.scores[b];
  });

  const auto n_prune = static_cast<std::size_t>(
      std::floor(target * static_cast<double>(order.size())));
  std::vector<std::uint8_t> kept(grid.block_count(), 1);
  for (std::size_t i = 0; i < n_prune; ++i) kept[order[i]] = 0;
  return BlockMask(grid, std::move(kept));
}

void apply_mask_inplace(Matrix& weights, const BlockMask& mask) {
  const BlockGrid& g = mask.grid();
  if (weights.rows() != g.rows() || weights.cols() != g.cols()) {
    throw ShapeError("mask does not match matrix shape");
  }
  for (std::size_t r = 0; r < weights.rows(); ++r) {
    for (std::size_t c = 0; c < weights.cols(); ++c) {
      if (!mask.kept(r, c)) weights(r, c) = 0.0;
    }
  }
}

Matrix apply_mask(const Matrix& weights, const BlockMask& mask) {
  Matrix out = weights;
  apply_mask_inplace(out, mask);
  return out;
}

}  // namespace rnntd
