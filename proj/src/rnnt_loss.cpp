#include "rnntd/rnnt_loss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "rnntd/error.hpp"
#include "rnntd/logmath.hpp"

namespace rnntd {

AlphaBeta::AlphaBeta(std::size_t frames, std::size_t rows)
    : frames_(frames),
      rows_(rows),
      alpha_(frames * rows, kLogZero),
      beta_(frames * rows, kLogZero) {}

double AlphaBeta::log_likelihood_forward(const CoarseLattice& coarse) const {
  return log_alpha(frames_ - 1, rows_ - 1) + coarse.log_blank(frames_ - 1, rows_ - 1);
}

namespace {

void check_nonempty(const CoarseLattice& c) {
  if (c.frames() == 0 || c.rows() == 0) throw ShapeError("lattice must have T >= 1 and rows >= 1");
}

void forward(const CoarseLattice& c, AlphaBeta& ab) {
  const std::size_t T = c.frames();
  const std::size_t U = c.rows();
  for (std::size_t f = 0; f < T; ++f) {
    for (std::size_t u = 0; u < U; ++u) {
      if (f == 0 && u == 0) {
        ab.log_alpha(0, 0) = 0.0;
        continue;
      }
      double a = kLogZero;
      if (f > 0) a = ab.log_alpha(f - 1, u) + c.log_blank(f - 1, u);
      if (u > 0) a = log_add(a, ab.log_alpha(f, u - 1) + c.log_y(f, u - 1));
      ab.log_alpha(f, u) = a;
    }
  }
}

void backward(const CoarseLattice& c, AlphaBeta& ab) {
  const std::size_t T = c.frames();
  const std::size_t U = c.rows();
  for (std::size_t f = T; f-- > 0;) {
    for (std::size_t u = U; u-- > 0;) {
      if (f == T - 1 && u == U - 1) {
        ab.log_beta(f, u) = c.log_blank(f, u);
        continue;
      }
      double b = kLogZero;
      if (f + 1 < T) b = c.log_blank(f, u) + ab.log_beta(f + 1, u);
      if (u + 1 < U) b = log_add(b, c.log_y(f, u) + ab.log_beta(f, u + 1));
      ab.log_beta(f, u) = b;
    }
  }
}

}  // namespace

AlphaBeta forward_backward(const CoarseLattice& coarse) {
  check_nonempty(coarse);
  AlphaBeta ab(coarse.frames(), coarse.rows());
  forward(coarse, ab);
  backward(coarse, ab);
  return ab;
}

double rnnt_nll(const CoarseLattice& coarse) {
  check_nonempty(coarse);
  AlphaBeta ab(coarse.frames(), coarse.rows());
  forward(coarse, ab);
  return -ab.log_likelihood_forward(coarse);
}

std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  unsigned __int128 r = 1;
  for (std::uint64_t i = 1; i <= k; ++i) {
    r = r * (n - k + i) / i;
    if (r > std::numeric_limits<std::uint64_t>::max()) {
      return std::numeric_limits<std::uint64_t>::max();
    }
  }
  return static_cast<std::uint64_t>(r);
}

PathEnumeration enumerate_paths(const CoarseLattice& coarse) {
  check_nonempty(coarse);
  const std::uint64_t count = binomial(coarse.frames() - 1 + coarse.rows() - 1, coarse.rows() - 1);
  if (count > kMaxEnumeratedPaths) {
    std::ostringstream msg;
    msg << "lattice has " << count << " alignment paths, above the enumeration bound of "
        << kMaxEnumeratedPaths;
    throw SizeError(msg.str());
  }
  // Linear-domain accumulation in extended precision; path products of tiny
  // lattices stay far from underflow.
  long double total = 0.0L;
  PathEnumeration out;
  for_each_path(coarse.frames(), coarse.rows(), [&](const AlignmentPath& path) {
    std::size_t f = 0;
    std::size_t u = 0;
    long double log_p = 0.0L;
    for (Move m : path) {
      if (m == Move::Horizontal) {
        log_p += coarse.log_blank(f, u);
        ++f;
      } else {
        log_p += coarse.log_y(f, u);
        ++u;
      }
    }
    log_p += coarse.log_blank(f, u);
    total += std::exp(log_p);
    ++out.paths;
  });
  out.nll = static_cast<double>(-std::log(total));
  return out;
}

double enumerate_paths_nll(const CoarseLattice& coarse) { return enumerate_paths(coarse).nll; }

LatticeGrad rnnt_grad_logits(const ProbLattice& probs, const CoarseLattice& coarse,
                             const AlphaBeta& ab, const TargetSequence& target) {
  const std::size_t T = probs.frames();
  const std::size_t U = probs.rows();
  const std::size_t K = probs.vocab();
  if (coarse.frames() != T || coarse.rows() != U) {
    throw ShapeError("coarse lattice does not match probability lattice");
  }
  if (ab.frames() != T || ab.rows() != U || target.rows() != U) {
    throw ShapeError("alpha/beta or target do not match probability lattice");
  }
  const double log_like = ab.log_likelihood_backward();
  if (!std::isfinite(log_like)) {
    throw InvalidInput("target has zero probability under the lattice; gradient undefined");
  }
  const std::size_t blank = static_cast<std::size_t>(target.vocab().blank_id);

  LatticeGrad grad(T, U, K);
  for (std::size_t f = 0; f < T; ++f) {
    for (std::size_t u = 0; u < U; ++u) {
      const double log_alpha = ab.log_alpha(f, u);
      if (log_alpha == kLogZero) continue;
      // Fraction of total path mass passing through this node.
      const double occupancy = std::exp(log_alpha + ab.log_beta(f, u) - log_like);
      const auto lp = probs.node(f, u);
      auto g = grad.node(f, u);
      for (std::size_t k = 0; k < K; ++k) g[k] = std::exp(lp[k]) * occupancy;

      // Mass leaving via blank: to (t+1, u), or the terminal blank at (T, L).
      const double blank_next =
          f + 1 < T ? ab.log_beta(f + 1, u) : (u + 1 == U ? 0.0 : kLogZero);
      g[blank] -= std::exp(log_alpha + coarse.log_blank(f, u) + blank_next - log_like);
      if (u + 1 < U) {
        const std::size_t y = static_cast<std::size_t>(target.next_label(u));
        g[y] -= std::exp(log_alpha + coarse.log_y(f, u) + ab.log_beta(f, u + 1) - log_like);
      }
    }
  }
  return grad;
}

RnntLoss rnnt_loss(const LogitLattice& logits, const TargetSequence& target) {
  RnntLoss out;
  out.log_probs = softmax_lattice(logits);
  const CoarseLattice coarse = coarse_grain(out.log_probs, target);
  const AlphaBeta ab = forward_backward(coarse);
  out.nll = -ab.log_likelihood_forward(coarse);
  out.grad = rnnt_grad_logits(out.log_probs, coarse, ab, target);
  return out;
}

}  // namespace rnntd
