#pragma once

#include <cstdint>
#include <vector>

#include "rnntd/lattice.hpp"

namespace rnntd {

// Forward/backward variables in log space. alpha(t,u) sums all partial paths
// from the origin that arrive at (t,u); beta(t,u) sums all completions from
// (t,u) including the emissions made at (t,u) and the final blank.
class AlphaBeta {
 public:
  AlphaBeta(std::size_t frames, std::size_t rows);

  std::size_t frames() const { return frames_; }
  std::size_t rows() const { return rows_; }

  double& log_alpha(std::size_t f, std::size_t u) { return alpha_[f * rows_ + u]; }
  double log_alpha(std::size_t f, std::size_t u) const { return alpha_[f * rows_ + u]; }
  double& log_beta(std::size_t f, std::size_t u) { return beta_[f * rows_ + u]; }
  double log_beta(std::size_t f, std::size_t u) const { return beta_[f * rows_ + u]; }

  // log P(y*|x) read off the forward pass.
  double log_likelihood_forward(const CoarseLattice& coarse) const;
  // log P(y*|x) read off the backward pass, beta at the origin.
  double log_likelihood_backward() const { return log_beta(0, 0); }

 private:
  std::size_t frames_;
  std::size_t rows_;
  tracked_vector<double> alpha_;
  tracked_vector<double> beta_;
};

enum class Move : std::uint8_t { Horizontal, Vertical };

// Moves from (1, 0) to (T, L): T-1 horizontal (blank) and L vertical (label).
using AlignmentPath = std::vector<Move>;

AlphaBeta forward_backward(const CoarseLattice& coarse);

// -log P(y*|x). +inf when no alignment has positive probability.
double rnnt_nll(const CoarseLattice& coarse);

struct PathEnumeration {
  double nll = 0.0;
  std::uint64_t paths = 0;
};

inline constexpr std::uint64_t kMaxEnumeratedPaths = 1'000'000;

// Exhaustive sum over every AlignmentPath. Exponential; intended as a test
// oracle. Throws SizeError when binomial(T-1+L, L) exceeds kMaxEnumeratedPaths.
PathEnumeration enumerate_paths(const CoarseLattice& coarse);
double enumerate_paths_nll(const CoarseLattice& coarse);

// Visits every alignment path of a frames x rows lattice in lexicographic
// order (horizontal before vertical).
template <class Fn>
void for_each_path(std::size_t frames, std::size_t rows, Fn&& fn);

// d(-log P(y*|x)) / d h[t][u][k]. Throws InvalidInput if P(y*|x) = 0.
LatticeGrad rnnt_grad_logits(const ProbLattice& probs, const CoarseLattice& coarse,
                             const AlphaBeta& ab, const TargetSequence& target);

struct RnntLoss {
  double nll = 0.0;
  ProbLattice log_probs;
  LatticeGrad grad;
};

// softmax -> coarse grain -> forward-backward -> gradient, in one call.
RnntLoss rnnt_loss(const LogitLattice& logits, const TargetSequence& target);

std::uint64_t binomial(std::uint64_t n, std::uint64_t k);

template <class Fn>
void for_each_path(std::size_t frames, std::size_t rows, Fn&& fn) {
  AlignmentPath path;
  const std::size_t horizontal = frames - 1;
  const std::size_t vertical = rows - 1;
  path.reserve(horizontal + vertical);
  auto rec = [&](auto& self, std::size_t h, std::size_t v) -> void {
    if (h == horizontal && v == vertical) {
      fn(static_cast<const AlignmentPath&>(path));
      return;
    }
    if (h < horizontal) {
      path.push_back(Move::Horizontal);
      self(self, h + 1, v);
      path.pop_back();
    }
    if (v < vertical) {
      path.push_back(Move::Vertical);
      self(self, h, v + 1);
      path.pop_back();
    }
  };
  rec(rec, 0, 0);
}

}  // namespace rnntd
