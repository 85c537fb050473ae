#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "rnntd/kernels.hpp"
#include "rnntd/memory.hpp"
#include "rnntd/model.hpp"

using namespace rnntd;

namespace {

std::vector<double> randn(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

const kernels::KernelTable* simd_or_skip() {
  const kernels::KernelTable* t = kernels::avx2_table();
  if (t == nullptr || !kernels::cpu_has_avx2()) return nullptr;
  return t;
}

// Restores the process-wide kernel table when a test ends.
struct TableGuard {
  const kernels::KernelTable& saved = kernels::active();
  ~TableGuard() { kernels::set_active(saved); }
};

}  // namespace

TEST(Kernels, ScalarReference) {
  const auto& s = kernels::scalar_table();
  const std::vector<double> a{1, 2, 3}, b{4, -5, 6};
  EXPECT_EQ(s.dot(a.data(), b.data(), 3), 12.0);
  EXPECT_EQ(s.sum(b.data(), 3), 5.0);
  EXPECT_EQ(s.max(b.data(), 3), 6.0);
  std::vector<double> y{1, 1, 1};
  s.axpy(2.0, a.data(), y.data(), 3);
  EXPECT_EQ(y, (std::vector<double>{3, 5, 7}));
  std::vector<double> out(3);
  const std::vector<double> act{0.5, -0.5, 0.0};
  s.tanh_backward(a.data(), act.data(), out.data(), 3);
  EXPECT_EQ(out, (std::vector<double>{0.75, 1.5, 3.0}));
}

TEST(Kernels, Avx2MatchesScalar) {
  const kernels::KernelTable* v = simd_or_skip();
  if (v == nullptr) GTEST_SKIP() << "no AVX2 variant on this build or CPU";
  const auto& s = kernels::scalar_table();
  std::mt19937_64 rng(1);
  for (std::size_t n : {0, 1, 3, 4, 5, 7, 8, 15, 16, 17, 31, 64, 129, 1000}) {
    const auto a = randn(n, rng), b = randn(n, rng);
    double scale = 0.0;
    for (std::size_t i = 0; i < n; ++i) scale += std::abs(a[i] * b[i]);
    EXPECT_NEAR(v->dot(a.data(), b.data(), n), s.dot(a.data(), b.data(), n), 1e-14 * (scale + 1));
    double abs_sum = 0.0;
    for (double x : a) abs_sum += std::abs(x);
    EXPECT_NEAR(v->sum(a.data(), n), s.sum(a.data(), n), 1e-14 * (abs_sum + 1));
    if (n > 0) EXPECT_EQ(v->max(a.data(), n), s.max(a.data(), n));

    // elementwise kernels agree bit for bit (no contraction in either build)
    auto y1 = b, y2 = b;
    s.axpy(0.37, a.data(), y1.data(), n);
    v->axpy(0.37, a.data(), y2.data(), n);
    EXPECT_EQ(y1, y2);
    std::vector<double> act(n), o1(n), o2(n);
    for (std::size_t i = 0; i < n; ++i) act[i] = std::tanh(b[i]);
    s.tanh_backward(a.data(), act.data(), o1.data(), n);
    v->tanh_backward(a.data(), act.data(), o2.data(), n);
    EXPECT_EQ(o1, o2);
  }
}

TEST(Kernels, ModelLatticeAgreesAcrossVariants) {
  const kernels::KernelTable* v = simd_or_skip();
  if (v == nullptr) GTEST_SKIP() << "no AVX2 variant on this build or CPU";
  TableGuard guard;
  ModelConfig cfg;
  cfg.encoder_hidden = 37;
  cfg.joint_dim = 21;
  const ModelParams p = init_params(cfg, 4);
  std::mt19937_64 rng(2);
  Matrix x(9, cfg.feature_dim);
  for (double& f : x.values()) f = randn(1, rng)[0];
  const TargetSequence target(cfg.vocab(), {3, 1, 5, 2});
  kernels::set_active(kernels::scalar_table());
  const ForwardResult a = forward_lattice(p, x, target);
  kernels::set_active(*v);
  const ForwardResult b = forward_lattice(p, x, target);
  for (std::size_t i = 0; i < a.logits.size(); ++i) {
    EXPECT_NEAR(a.logits.values()[i], b.logits.values()[i], 1e-12);
  }
}

TEST(MemoryMeter, TracksPeakAndNests) {
  MemoryMeter outer;
  {
    tracked_vector<double> big(1000);
    MemoryMeter inner;
    { tracked_vector<double> small(10); }
    EXPECT_EQ(inner.peak_bytes(), 80);
  }
  EXPECT_EQ(outer.peak_bytes(), 8080);
  { tracked_vector<double> v(500); }
  EXPECT_EQ(outer.peak_bytes(), 8080);
}
