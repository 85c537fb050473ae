#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "rnntd/error.hpp"
#include "rnntd/rnnt_loss.hpp"
#include "test_util.hpp"

using namespace rnntd;

namespace {

const double kInf = std::numeric_limits<double>::infinity();

// Every node: P_y = P_blank = 0.5 below the top row, (blank, rest) = (0.5, 0.5) on it.
CoarseLattice half_half(std::size_t T, std::size_t rows) {
  CoarseLattice c(T, rows);
  for (std::size_t f = 0; f < T; ++f) {
    for (std::size_t u = 0; u < rows; ++u) {
      const bool top = u + 1 == rows;
      c.log_y(f, u) = top ? -kInf : std::log(0.5);
      c.log_blank(f, u) = std::log(0.5);
      c.log_rest(f, u) = top ? std::log(0.5) : -kInf;
    }
  }
  return c;
}

CoarseLattice random_coarse(std::size_t T, std::size_t L, int K, std::mt19937_64& rng) {
  const TargetSequence target = test::random_target(L, K, rng);
  return coarse_grain_logits(test::random_logits(T, L + 1, K, rng), target);
}

double log_add(double a, double b) {
  if (a == -kInf) return b;
  if (b == -kInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

}  // namespace

TEST(RnntNll, SingleNode) {
  CoarseLattice c(1, 1);
  c.log_y(0, 0) = -kInf;
  c.log_blank(0, 0) = std::log(0.3);
  c.log_rest(0, 0) = std::log(0.7);
  EXPECT_NEAR(rnnt_nll(c), -std::log(0.3), 1e-15);
  EXPECT_NEAR(enumerate_paths_nll(c), -std::log(0.3), 1e-15);
  EXPECT_EQ(enumerate_paths(c).paths, 1u);

  c.log_blank(0, 0) = 0.0;
  c.log_rest(0, 0) = -kInf;
  EXPECT_EQ(rnnt_nll(c), 0.0);
}

TEST(RnntNll, TwoFramesOneLabelByHand) {
  // paths: blank,y,final blank and y,blank,final blank; each 0.5^3
  const CoarseLattice c = half_half(2, 2);
  const double expected = -std::log(0.5 * 0.5 * 0.5 + 0.5 * 0.5 * 0.5);
  EXPECT_NEAR(rnnt_nll(c), expected, 1e-14);
  EXPECT_NEAR(rnnt_nll(c), std::log(4.0), 1e-14);
  EXPECT_NEAR(rnnt_nll(c), 1.386294, 1e-6);
  const PathEnumeration e = enumerate_paths(c);
  EXPECT_EQ(e.paths, 2u);
  EXPECT_NEAR(e.nll, std::log(4.0), 1e-14);
}

TEST(RnntNll, PathCount) {
  const CoarseLattice c = half_half(3, 3);
  EXPECT_EQ(enumerate_paths(c).paths, 6u);
  std::size_t n = 0;
  for_each_path(3, 3, [&](const AlignmentPath& p) {
    ++n;
    ASSERT_EQ(p.size(), 4u);
    EXPECT_EQ(std::count(p.begin(), p.end(), Move::Horizontal), 2);
    EXPECT_EQ(std::count(p.begin(), p.end(), Move::Vertical), 2);
  });
  EXPECT_EQ(n, 6u);
  EXPECT_EQ(binomial(4, 2), 6u);
  EXPECT_EQ(binomial(49, 20), 28277527346376ull);
}

TEST(RnntNll, EnumerationBound) {
  EXPECT_THROW(enumerate_paths(half_half(30, 21)), SizeError);
  EXPECT_NO_THROW(enumerate_paths(half_half(5, 5)));
}

TEST(RnntNll, ForwardEqualsBackward) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    const CoarseLattice c = random_coarse(1 + rng() % 8, rng() % 6, 2 + rng() % 5, rng);
    const AlphaBeta ab = forward_backward(c);
    EXPECT_EQ(ab.log_alpha(0, 0), 0.0);
    EXPECT_NEAR(ab.log_likelihood_forward(c), ab.log_likelihood_backward(), 1e-9);
    EXPECT_GE(rnnt_nll(c), 0.0);
  }
}

TEST(RnntNll, MatchesEnumerationOracle) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t T = 1 + rng() % 5, L = rng() % 5;
    const CoarseLattice c = random_coarse(T, L, 2 + rng() % 4, rng);
    EXPECT_LE(test::rel_diff(rnnt_nll(c), enumerate_paths_nll(c)), 1e-10)
        << "T=" << T << " L=" << L;
  }
}

TEST(RnntNll, AntiDiagonalIdentity) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const CoarseLattice c = random_coarse(4, 3, 5, rng);
    const AlphaBeta ab = forward_backward(c);
    const double logp = -enumerate_paths_nll(c);
    for (std::size_t d = 0; d <= 3 + 3; ++d) {
      double s = -kInf;
      for (std::size_t f = 0; f < 4; ++f) {
        for (std::size_t u = 0; u < 4; ++u) {
          if (f + u != d) continue;
          const double v = ab.log_alpha(f, u) + ab.log_beta(f, u);
          EXPECT_LE(v, logp + 1e-9);
          s = log_add(s, v);
        }
      }
      EXPECT_NEAR(s, logp, 1e-9) << "diagonal " << d;
    }
  }
}

TEST(RnntNll, ShiftInvariant) {
  std::mt19937_64 rng(17);
  const TargetSequence target = test::random_target(3, 5, rng);
  LogitLattice l = test::random_logits(4, 4, 5, rng);
  const double before = rnnt_loss(l, target).nll;
  for (std::size_t f = 0; f < 4; ++f) {
    for (double& v : l.node(f, 2)) v -= 3.5 * static_cast<double>(f + 1);
  }
  EXPECT_NEAR(rnnt_loss(l, target).nll, before, 1e-9);
}

TEST(RnntGrad, NodeSumsVanish) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t T = 1 + rng() % 6, L = rng() % 5;
    const int K = 2 + static_cast<int>(rng() % 6);
    const TargetSequence target = test::random_target(L, K, rng);
    const RnntLoss r = rnnt_loss(test::random_logits(T, L + 1, K, rng), target);
    for (std::size_t f = 0; f < T; ++f) {
      for (std::size_t u = 0; u <= L; ++u) {
        double s = 0.0;
        for (double g : r.grad.node(f, u)) s += g;
        EXPECT_NEAR(s, 0.0, 1e-8);
      }
    }
  }
}

TEST(RnntGrad, FiniteDifferenceOfEnumeratedLoss) {
  // Reference: central differences of the path-sum oracle, which shares no
  // code with forward-backward.
  std::mt19937_64 rng(1234);
  const TargetSequence target = test::random_target(3, 4, rng);
  const LogitLattice l = test::random_logits(4, 4, 4, rng, 1.0);
  const RnntLoss r = rnnt_loss(l, target);
  const double h = 1e-5;
  for (int i = 0; i < 50; ++i) {
    const std::size_t idx = rng() % l.size();
    LogitLattice plus = l, minus = l;
    plus.values()[idx] += h;
    minus.values()[idx] -= h;
    const double numeric =
        (enumerate_paths_nll(coarse_grain_logits(plus, target)) -
         enumerate_paths_nll(coarse_grain_logits(minus, target))) / (2 * h);
    const double analytic = r.grad.values()[idx];
    EXPECT_LE(std::abs(analytic - numeric), 1e-4 * std::max(std::abs(numeric), 1e-3))
        << "coordinate " << idx;
  }
}

TEST(RnntGrad, UnreachableNodesGetZero) {
  // Blank impossible on row 0, so (t>1, 0) can never be visited.
  const std::size_t T = 3, rows = 3;
  const TargetSequence target(Vocab{3, 0}, {1, 2});
  ProbLattice p(T, rows, 3);
  for (std::size_t f = 0; f < T; ++f) {
    for (std::size_t u = 0; u < rows; ++u) {
      if (u == 0) {
        p.at(f, u, 0) = -kInf;
        p.at(f, u, 1) = std::log(0.6);
        p.at(f, u, 2) = std::log(0.4);
      } else {
        for (std::size_t k = 0; k < 3; ++k) p.at(f, u, k) = std::log(1.0 / 3.0);
      }
    }
  }
  const CoarseLattice c = coarse_grain(p, target);
  const AlphaBeta ab = forward_backward(c);
  ASSERT_TRUE(std::isfinite(ab.log_likelihood_forward(c)));
  const LatticeGrad g = rnnt_grad_logits(p, c, ab, target);
  for (std::size_t f = 1; f < T; ++f) {
    EXPECT_EQ(ab.log_alpha(f, 0), -kInf);
    for (double v : g.node(f, 0)) EXPECT_EQ(v, 0.0);
  }
  for (double v : g.values()) EXPECT_TRUE(std::isfinite(v));
}

TEST(RnntGrad, TwoTokenAntisymmetry) {
  const TargetSequence target(Vocab{2, 0}, {1});
  const RnntLoss r = rnnt_loss(LogitLattice(2, 2, 2, 0.0), target);
  EXPECT_NEAR(r.nll, std::log(4.0), 1e-14);
  for (std::size_t f = 0; f < 2; ++f) {
    for (std::size_t u = 0; u < 2; ++u) {
      EXPECT_NEAR(r.grad.at(f, u, 0), -r.grad.at(f, u, 1), 1e-15);
    }
  }
}
