#include "rnntd/lattice.hpp"

#include <cmath>
#include <sstream>

#include "rnntd/error.hpp"
#include "rnntd/kernels.hpp"
#include "rnntd/logmath.hpp"

namespace rnntd {

void Vocab::validate() const {
  if (size < 2) throw InvalidInput("vocab size must be at least 2");
  if (blank_id < 0 || blank_id >= size) throw InvalidInput("blank id outside vocab");
}

TargetSequence::TargetSequence(Vocab vocab, std::vector<int> labels)
    : vocab_(vocab), labels_(std::move(labels)) {
  vocab_.validate();
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    const int l = labels_[i];
    if (l < 0 || l >= vocab_.size || l == vocab_.blank_id) {
      std::ostringstream msg;
      msg << "target label " << i << " = " << l << " is blank or outside the vocab";
      throw InvalidInput(msg.str());
    }
  }
}

CoarseLattice::CoarseLattice(std::size_t frames, std::size_t rows)
    : frames_(frames),
      rows_(rows),
      y_(frames * rows, kLogZero),
      blank_(frames * rows, kLogZero),
      rest_(frames * rows, kLogZero) {}

double log_normalizer(std::span<const double> logits) {
  const double m = kernels::active().max(logits.data(), logits.size());
  double s = 0.0;
  for (double h : logits) s += std::exp(h - m);
  return m + std::log(s);
}

namespace {

void require_finite(std::span<const double> node, std::size_t f, std::size_t u) {
  for (double h : node) {
    if (!std::isfinite(h)) {
      std::ostringstream msg;
      msg << "non-finite logit at node (t=" << f + 1 << ", u=" << u << ")";
      throw InvalidInput(msg.str());
    }
  }
}

void check_target(std::size_t rows, std::size_t vocab, const TargetSequence& target) {
  if (rows != target.rows()) {
    std::ostringstream msg;
    msg << "lattice has " << rows << " rows but target needs " << target.rows();
    throw ShapeError(msg.str());
  }
  if (vocab != static_cast<std::size_t>(target.vocab().size)) {
    throw ShapeError("lattice vocab size differs from target vocab");
  }
}

// Fills one coarse node from the log-probabilities of y and blank.
void fill_coarse(CoarseLattice& out, std::size_t f, std::size_t u, bool top_row, double log_y,
                 double log_blank) {
  out.log_blank(f, u) = log_blank;
  if (top_row) {
    out.log_y(f, u) = kLogZero;
    out.log_rest(f, u) = log_complement(log_blank, kLogZero);
  } else {
    out.log_y(f, u) = log_y;
    out.log_rest(f, u) = log_complement(log_y, log_blank);
  }
}

}  // namespace

ProbLattice softmax_lattice(const LogitLattice& logits) {
  ProbLattice out(logits.frames(), logits.rows(), logits.vocab());
  for (std::size_t f = 0; f < logits.frames(); ++f) {
    for (std::size_t u = 0; u < logits.rows(); ++u) {
      const auto h = logits.node(f, u);
      require_finite(h, f, u);
      const double z = log_normalizer(h);
      auto p = out.node(f, u);
      for (std::size_t k = 0; k < h.size(); ++k) p[k] = h[k] - z;
    }
  }
  return out;
}

CoarseLattice coarse_grain(const ProbLattice& probs, const TargetSequence& target) {
  check_target(probs.rows(), probs.vocab(), target);
  const std::size_t blank = static_cast<std::size_t>(target.vocab().blank_id);
  const std::size_t top = probs.rows() - 1;
  CoarseLattice out(probs.frames(), probs.rows());
  for (std::size_t f = 0; f < probs.frames(); ++f) {
    for (std::size_t u = 0; u < probs.rows(); ++u) {
      const auto p = probs.node(f, u);
      const double log_y = u < top ? p[target.next_label(u)] : kLogZero;
      fill_coarse(out, f, u, u == top, log_y, p[blank]);
    }
  }
  return out;
}

CoarseLattice coarse_grain_logits(const LogitLattice& logits, const TargetSequence& target) {
  check_target(logits.rows(), logits.vocab(), target);
  const std::size_t blank = static_cast<std::size_t>(target.vocab().blank_id);
  const std::size_t top = logits.rows() - 1;
  CoarseLattice out(logits.frames(), logits.rows());
  for (std::size_t f = 0; f < logits.frames(); ++f) {
    for (std::size_t u = 0; u < logits.rows(); ++u) {
      const auto h = logits.node(f, u);
      require_finite(h, f, u);
      const double z = log_normalizer(h);
      const double log_y = u < top ? h[target.next_label(u)] - z : kLogZero;
      fill_coarse(out, f, u, u == top, log_y, h[blank] - z);
    }
  }
  return out;
}

double max_normalization_error(const ProbLattice& probs) {
  double worst = 0.0;
  for (std::size_t f = 0; f < probs.frames(); ++f) {
    for (std::size_t u = 0; u < probs.rows(); ++u) {
      double acc = kLogZero;
      for (double lp : probs.node(f, u)) acc = log_add(acc, lp);
      worst = std::max(worst, std::abs(acc));
    }
  }
  return worst;
}

}  // namespace rnntd
