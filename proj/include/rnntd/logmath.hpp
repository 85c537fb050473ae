#pragma once

#include <cmath>
#include <limits>
#include <utility>

namespace rnntd {

inline constexpr double kLogZero = -std::numeric_limits<double>::infinity();

// Values whose linear-domain magnitude falls below this clamp to kLogZero when
// taking a complement.
inline constexpr double kComplementFloor = 1e-12;

// log(exp(a) + exp(b)); -inf acts as the additive identity.
inline double log_add(double a, double b) {
  if (a == kLogZero) return b;
  if (b == kLogZero) return a;
  if (a < b) std::swap(a, b);
  return a + std::log1p(std::exp(b - a));
}

// log(1 - exp(a)) for a <= 0. Uses the log1p/expm1 split so results stay
// accurate at both ends of the range.
inline double log1mexp(double a) {
  if (a == kLogZero) return 0.0;
  if (a >= 0.0) return kLogZero;
  if (a > -0.6931471805599453) return std::log(-std::expm1(a));
  return std::log1p(-std::exp(a));
}

// log(1 - exp(a) - exp(b)), clamped to kLogZero when the complement is below
// kComplementFloor.
inline double log_complement(double a, double b) {
  const double taken = log_add(a, b);
  if (taken == kLogZero) return 0.0;
  if (-std::expm1(taken) < kComplementFloor) return kLogZero;
  return log1mexp(taken);
}

}  // namespace rnntd
