#pragma once

#include <cstdint>
#include <vector>

namespace rnntd {

struct KlInequalityReport {
  int draws = 0;
  int violations = 0;
  // max over draws of coarse - full; <= tolerance when the inequality holds.
  double max_excess = 0.0;
  double min_full = 0.0;
  double min_coarse = 0.0;
  // max |loss| over draws where teacher == student.
  double max_identity_loss = 0.0;
  bool passed = false;
};

// Random teacher/student lattice pairs with T <= max_frames, L <= max_labels,
// K <= max_vocab. Checks both losses are >= 0, vanish (1e-12) on identical
// inputs, and coarse <= full + tolerance.
KlInequalityReport kl_inequality_run(std::uint64_t seed, int draws, int max_frames = 5,
                                     int max_labels = 4, int max_vocab = 6,
                                     double tolerance = 1e-9);

struct MemoryRow {
  std::size_t vocab = 0;
  std::int64_t full_measured = 0;
  std::uint64_t full_predicted = 0;
  std::int64_t coarse_measured = 0;
  std::uint64_t coarse_predicted = 0;
};

// Peak tracked bytes materialized while evaluating each distillation mode on
// a frames x rows lattice pair (teacher and student distributions plus the
// loss), against memory_estimate with 8-byte values and batch 1.
std::vector<MemoryRow> memory_profile(std::size_t frames, std::size_t rows,
                                      const std::vector<std::size_t>& vocabs, std::uint64_t seed);

// Coarse measurement identical for every K and full measurement
// proportional to K.
bool memory_profile_ok(const std::vector<MemoryRow>& rows);

}  // namespace rnntd
