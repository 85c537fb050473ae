#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "rnntd/memory.hpp"

namespace rnntd {

struct Vocab {
  int size = 2;
  int blank_id = 0;

  // Throws InvalidInput unless size >= 2 and 0 <= blank_id < size.
  void validate() const;
};

// Labels l_1..l_L of the target. None may be blank.
class TargetSequence {
 public:
  TargetSequence(Vocab vocab, std::vector<int> labels);

  const Vocab& vocab() const { return vocab_; }
  std::span<const int> labels() const { return labels_; }
  std::size_t length() const { return labels_.size(); }
  // Number of lattice rows, L + 1.
  std::size_t rows() const { return labels_.size() + 1; }
  // Label emitted by a vertical move out of row u (u < L).
  int next_label(std::size_t row) const { return labels_[row]; }

 private:
  Vocab vocab_;
  std::vector<int> labels_;
};

// Dense T x (L+1) x K tensor over the lattice. Frames are stored 0-based:
// frame index f corresponds to t = f + 1.
template <class Tag>
class LatticeTensor {
 public:
  LatticeTensor() = default;
  LatticeTensor(std::size_t frames, std::size_t rows, std::size_t vocab, double fill = 0.0)
      : frames_(frames), rows_(rows), vocab_(vocab), data_(frames * rows * vocab, fill) {}

  std::size_t frames() const { return frames_; }
  std::size_t rows() const { return rows_; }
  std::size_t vocab() const { return vocab_; }
  std::size_t size() const { return data_.size(); }

  double& at(std::size_t f, std::size_t u, std::size_t k) { return data_[index(f, u, k)]; }
  double at(std::size_t f, std::size_t u, std::size_t k) const { return data_[index(f, u, k)]; }

  std::span<double> node(std::size_t f, std::size_t u) {
    return {data_.data() + index(f, u, 0), vocab_};
  }
  std::span<const double> node(std::size_t f, std::size_t u) const {
    return {data_.data() + index(f, u, 0), vocab_};
  }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  bool same_shape(std::size_t frames, std::size_t rows, std::size_t vocab) const {
    return frames_ == frames && rows_ == rows && vocab_ == vocab;
  }
  template <class Other>
  bool same_shape(const LatticeTensor<Other>& o) const {
    return same_shape(o.frames(), o.rows(), o.vocab());
  }

  bool operator==(const LatticeTensor&) const = default;

 private:
  std::size_t index(std::size_t f, std::size_t u, std::size_t k) const {
    return (f * rows_ + u) * vocab_ + k;
  }

  std::size_t frames_ = 0;
  std::size_t rows_ = 0;
  std::size_t vocab_ = 0;
  tracked_vector<double> data_;
};

struct LogitTag {};
struct LogProbTag {};
struct GradTag {};

// Raw joint-network outputs h[t][u][k].
using LogitLattice = LatticeTensor<LogitTag>;
// Per-node log P(k | t, u).
using ProbLattice = LatticeTensor<LogProbTag>;
// Gradient of a scalar loss with respect to the logits.
using LatticeGrad = LatticeTensor<GradTag>;

// Per-node log-probabilities of the next label ("y"), blank, and every other
// token lumped together ("rest"). On the top row there is no next label, so
// log_y is -inf there and (blank, rest) form a two-way distribution.
class CoarseLattice {
 public:
  CoarseLattice() = default;
  CoarseLattice(std::size_t frames, std::size_t rows);

  std::size_t frames() const { return frames_; }
  std::size_t rows() const { return rows_; }

  double& log_y(std::size_t f, std::size_t u) { return y_[f * rows_ + u]; }
  double log_y(std::size_t f, std::size_t u) const { return y_[f * rows_ + u]; }
  double& log_blank(std::size_t f, std::size_t u) { return blank_[f * rows_ + u]; }
  double log_blank(std::size_t f, std::size_t u) const { return blank_[f * rows_ + u]; }
  double& log_rest(std::size_t f, std::size_t u) { return rest_[f * rows_ + u]; }
  double log_rest(std::size_t f, std::size_t u) const { return rest_[f * rows_ + u]; }

  bool same_shape(const CoarseLattice& o) const {
    return frames_ == o.frames_ && rows_ == o.rows_;
  }

  bool operator==(const CoarseLattice&) const = default;

 private:
  std::size_t frames_ = 0;
  std::size_t rows_ = 0;
  tracked_vector<double> y_;
  tracked_vector<double> blank_;
  tracked_vector<double> rest_;
};

// log of sum_k exp(logits[k]), max-shifted.
double log_normalizer(std::span<const double> logits);

// Max-subtracted log-softmax of every node. Throws InvalidInput naming the
// first node with a non-finite logit.
ProbLattice softmax_lattice(const LogitLattice& logits);

// Lumps each node's distribution into (y, blank, rest). Throws ShapeError if
// the lattice rows do not equal target.rows() or the vocab size disagrees.
CoarseLattice coarse_grain(const ProbLattice& probs, const TargetSequence& target);

// Same result as coarse_grain(softmax_lattice(logits), target) computed node
// by node, so only O(T x U) storage is materialized.
CoarseLattice coarse_grain_logits(const LogitLattice& logits, const TargetSequence& target);

// Largest |logsumexp_k log P(k|t,u)| over all nodes.
double max_normalization_error(const ProbLattice& probs);

}  // namespace rnntd
