#pragma once

#include <cstdint>
#include <vector>

#include "rnntd/matrix.hpp"

namespace rnntd {

// Gradual pruning schedule. Between start_step and end_step the target
// follows s_f + (s_i - s_f) * (1 - progress)^3; outside it is clamped to the
// endpoints. Masks are recomputed every update_interval steps.
struct SparsitySchedule {
  double s_initial = 0.0;
  double s_final = 0.0;
  std::int64_t start_step = 0;
  std::int64_t end_step = 1;
  std::int64_t update_interval = 1;

  void validate() const;
  // True when step lies in [start_step, end_step] on the update grid, or is
  // end_step itself.
  bool is_update_step(std::int64_t step) const;
};

double target_sparsity(const SparsitySchedule& sched, std::int64_t step);

struct BlockShape {
  std::size_t rows = 16;
  std::size_t cols = 1;

  bool operator==(const BlockShape&) const = default;
};

// Tiling of a rows x cols matrix by blocks. A trailing partial block (when a
// dimension is not a multiple of the block size) is padded with phantom zero
// entries and never pruned.
class BlockGrid {
 public:
  BlockGrid() = default;
  BlockGrid(std::size_t rows, std::size_t cols, BlockShape shape);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  const BlockShape& shape() const { return shape_; }
  std::size_t grid_rows() const { return grid_rows_; }
  std::size_t grid_cols() const { return grid_cols_; }
  std::size_t block_count() const { return grid_rows_ * grid_cols_; }
  // Blocks made entirely of real entries.
  std::size_t prunable_count() const;
  bool is_partial(std::size_t block) const;
  std::size_t block_of(std::size_t r, std::size_t c) const {
    return (r / shape_.rows) * grid_cols_ + c / shape_.cols;
  }

  bool operator==(const BlockGrid&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  BlockShape shape_;
  std::size_t grid_rows_ = 0;
  std::size_t grid_cols_ = 0;
};

struct SaliencyScore {
  BlockGrid grid;
  // One nonnegative score per block, block-row-major.
  std::vector<double> scores;
};

// Per-block sum of |w * g|.
SaliencyScore block_saliency(const Matrix& weights, const Matrix& grads,
                             BlockShape shape = BlockShape{});

class BlockMask {
 public:
  BlockMask() = default;
  // All blocks kept.
  explicit BlockMask(BlockGrid grid);
  BlockMask(BlockGrid grid, std::vector<std::uint8_t> kept);

  const BlockGrid& grid() const { return grid_; }
  bool block_kept(std::size_t block) const { return kept_[block] != 0; }
  bool kept(std::size_t r, std::size_t c) const { return kept_[grid_.block_of(r, c)] != 0; }
  std::span<const std::uint8_t> blocks() const { return kept_; }

  std::size_t pruned_blocks() const;
  // pruned blocks / prunable blocks.
  double block_sparsity() const;
  // Fraction of real matrix entries that are masked.
  double element_sparsity() const;

  bool operator==(const BlockMask&) const = default;

 private:
  BlockGrid grid_;
  std::vector<std::uint8_t> kept_;
};

// Prunes the floor(target * prunable_count) lowest-scoring prunable blocks.
// Ties go to the lower block index. Throws InvalidInput unless 0 <= target <= 1.
BlockMask update_mask(const SaliencyScore& scores, double target);

Matrix apply_mask(const Matrix& weights, const BlockMask& mask);
void apply_mask_inplace(Matrix& weights, const BlockMask& mask);

}  // namespace rnntd
