#include "rnntd/klcompare.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "rnntd/distill.hpp"
#include "rnntd/lattice.hpp"
#include "rnntd/memory.hpp"

namespace rnntd {

namespace {

LogitLattice random_logits(std::size_t T, std::size_t U, std::size_t K, double scale,
                           std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, scale);
  LogitLattice l(T, U, K);
  for (double& v : l.values()) v = n(rng);
  return l;
}

}  // namespace

KlInequalityReport kl_inequality_run(std::uint64_t seed, int draws, int max_frames,
                                     int max_labels, int max_vocab, double tolerance) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> frames(1, max_frames);
  std::uniform_int_distribution<int> labels(0, max_labels);
  std::uniform_int_distribution<int> vocab(2, max_vocab);
  std::uniform_real_distribution<double> scale(0.1, 4.0);

  KlInequalityReport r;
  r.min_full = std::numeric_limits<double>::infinity();
  r.min_coarse = std::numeric_limits<double>::infinity();
  for (int d = 0; d < draws; ++d) {
    const auto T = static_cast<std::size_t>(frames(rng));
    const auto L = static_cast<std::size_t>(labels(rng));
    const int K = vocab(rng);
    std::uniform_int_distribution<int> label(1, K - 1);
    std::vector<int> ls;
    for (std::size_t i = 0; i < L; ++i) ls.push_back(label(rng));
    const TargetSequence target(Vocab{K, 0}, ls);

    const ProbLattice teacher =
        softmax_lattice(random_logits(T, L + 1, static_cast<std::size_t>(K), scale(rng), rng));
    const ProbLattice student =
        softmax_lattice(random_logits(T, L + 1, static_cast<std::size_t>(K), scale(rng), rng));
    const double full = full_kl_loss(teacher, student);
    const double coarse =
        coarse_kl_loss(coarse_grain(teacher, target), coarse_grain(student, target)).value;
    const double same_full = full_kl_loss(teacher, teacher);
    const double same_coarse =
        coarse_kl_loss(coarse_grain(teacher, target), coarse_grain(teacher, target)).value;

    ++r.draws;
    r.min_full = std::min(r.min_full, full);
    r.min_coarse = std::min(r.min_coarse, coarse);
    r.max_excess = d == 0 ? coarse - full : std::max(r.max_excess, coarse - full);
    r.max_identity_loss =
        std::max({r.max_identity_loss, std::abs(same_full), std::abs(same_coarse)});
    const bool ok = full >= 0.0 && coarse >= 0.0 && coarse <= full + tolerance &&
                    std::abs(same_full) <= 1e-12 && std::abs(same_coarse) <= 1e-12;
    if (!ok) ++r.violations;
  }
  r.passed = r.violations == 0 && r.draws > 0;
  return r;
}

std::vector<MemoryRow> memory_profile(std::size_t frames, std::size_t rows,
                                      const std::vector<std::size_t>& vocabs, std::uint64_t seed) {
  std::vector<MemoryRow> out;
  for (std::size_t K : vocabs) {
    std::mt19937_64 rng(seed + K);
    std::uniform_int_distribution<int> label(1, static_cast<int>(K) - 1);
    std::vector<int> ls;
    for (std::size_t i = 0; i + 1 < rows; ++i) ls.push_back(label(rng));
    const TargetSequence target(Vocab{static_cast<int>(K), 0}, ls);
    const LogitLattice teacher_logits = random_logits(frames, rows, K, 1.0, rng);
    const LogitLattice student_logits = random_logits(frames, rows, K, 1.0, rng);

    MemoryRow row;
    row.vocab = K;
    {
      MemoryMeter meter;
      const ProbLattice t = softmax_lattice(teacher_logits);
      const ProbLattice s = softmax_lattice(student_logits);
      volatile double v = full_kl_loss(t, s);
      (void)v;
      row.full_measured = meter.peak_bytes();
    }
    {
      MemoryMeter meter;
      const CoarseLattice t = coarse_grain_logits(teacher_logits, target);
      const CoarseLattice s = coarse_grain_logits(student_logits, target);
      volatile double v = coarse_kl_loss(t, s).value;
      (void)v;
      row.coarse_measured = meter.peak_bytes();
    }
    row.full_predicted = memory_estimate(frames, rows, K, sizeof(double), 1);
    row.coarse_predicted = coarse_memory_estimate(frames, rows, sizeof(double), 1);
    out.push_back(row);
  }
  return out;
}

bool memory_profile_ok(const std::vector<MemoryRow>& rows) {
  if (rows.empty()) return false;
  const MemoryRow& first = rows.front();
  for (const MemoryRow& r : rows) {
    if (r.coarse_measured != first.coarse_measured) return false;
    // full bytes / K is the same for every K
    if (r.full_measured * static_cast<std::int64_t>(first.vocab) !=
        first.full_measured * static_cast<std::int64_t>(r.vocab)) {
      return false;
    }
  }
  return true;
}

}  // namespace rnntd
