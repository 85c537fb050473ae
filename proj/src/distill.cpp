#include "rnntd/distill.hpp"

#include <cmath>
#include <initializer_list>
#include <limits>
#include <sstream>

#include "rnntd/logmath.hpp"

namespace rnntd {

void DistillConfig::validate() const {
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw InvalidInput("beta must be finite and >= 0");
}

std::string to_string(DistillMode mode) { return mode == DistillMode::Full ? "full" : "coarse"; }

DistillMode parse_distill_mode(const std::string& s) {
  if (s == "full") return DistillMode::Full;
  if (s == "coarse") return DistillMode::Coarse;
  throw InvalidInput("distill mode must be \"full\" or \"coarse\", got \"" + s + "\"");
}

std::string to_string(CoarseCategory c) {
  switch (c) {
    case CoarseCategory::Y:
      return "y";
    case CoarseCategory::Blank:
      return "blank";
    case CoarseCategory::Rest:
      return "rest";
  }
  return "?";
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// p_t * (log p_t - log p_s) with 0 log 0 := 0.
double kl_term(double log_t, double log_s) {
  if (log_t == kLogZero) return 0.0;
  if (log_s == kLogZero) return kInf;
  return std::exp(log_t) * (log_t - log_s);
}

std::string describe(const SupportViolation& v) {
  std::ostringstream msg;
  msg << "teacher has mass on coarse category '" << to_string(v.category)
      << "' where the student has none, at node (t=" << v.t << ", u=" << v.u << ")";
  return msg.str();
}

}  // namespace

DegenerateSupport::DegenerateSupport(SupportViolation where)
    : NumericalError(describe(where)), where_(where) {}

double full_kl_loss(const ProbLattice& teacher, const ProbLattice& student) {
  if (!teacher.same_shape(student)) throw ShapeError("teacher and student lattices differ in shape");
  double total = 0.0;
  const auto t = teacher.values();
  const auto s = student.values();
  for (std::size_t i = 0; i < t.size(); ++i) total += kl_term(t[i], s[i]);
  return total;
}

LatticeGrad full_kl_grad_student_logits(const ProbLattice& teacher, const ProbLattice& student) {
  if (!teacher.same_shape(student)) throw ShapeError("teacher and student lattices differ in shape");
  LatticeGrad grad(student.frames(), student.rows(), student.vocab());
  const auto t = teacher.values();
  const auto s = student.values();
  auto g = grad.values();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = -(std::exp(t[i]) - std::exp(s[i]));
  return grad;
}

CoarseKl coarse_kl_loss(const CoarseLattice& teacher, const CoarseLattice& student) {
  if (!teacher.same_shape(student)) throw ShapeError("teacher and student lattices differ in shape");
  CoarseKl out;
  const std::size_t top = teacher.rows() - 1;
  for (std::size_t f = 0; f < teacher.frames(); ++f) {
    for (std::size_t u = 0; u < teacher.rows(); ++u) {
      const double terms[3] = {
          u < top ? kl_term(teacher.log_y(f, u), student.log_y(f, u)) : 0.0,
          kl_term(teacher.log_blank(f, u), student.log_blank(f, u)),
          kl_term(teacher.log_rest(f, u), student.log_rest(f, u)),
      };
      for (int c = 0; c < 3; ++c) {
        if (terms[c] == kInf) {
          out.value = kInf;
          out.violation = SupportViolation{f + 1, u, static_cast<CoarseCategory>(c)};
          return out;
        }
        out.value += terms[c];
      }
    }
  }
  return out;
}

LatticeGrad coarse_kl_grad_student_logits(const CoarseLattice& teacher, const ProbLattice& student,
                                          const TargetSequence& target) {
  const CoarseLattice coarse = coarse_grain(student, target);
  if (!teacher.same_shape(coarse)) throw ShapeError("teacher and student lattices differ in shape");
  const std::size_t T = student.frames();
  const std::size_t U = student.rows();
  const std::size_t K = student.vocab();
  const std::size_t blank = static_cast<std::size_t>(target.vocab().blank_id);
  const std::size_t top = U - 1;

  LatticeGrad grad(T, U, K);
  for (std::size_t f = 0; f < T; ++f) {
    for (std::size_t u = 0; u < U; ++u) {
      const bool has_y = u < top;
      const std::size_t y = has_y ? static_cast<std::size_t>(target.next_label(u)) : K;
      const double t_y = has_y ? std::exp(teacher.log_y(f, u)) : 0.0;
      const double t_blank = std::exp(teacher.log_blank(f, u));
      const double log_t_rest = teacher.log_rest(f, u);
      const double log_s_rest = coarse.log_rest(f, u);
      if (has_y && t_y > 0.0 && coarse.log_y(f, u) == kLogZero) {
        throw DegenerateSupport({f + 1, u, CoarseCategory::Y});
      }
      if (t_blank > 0.0 && coarse.log_blank(f, u) == kLogZero) {
        throw DegenerateSupport({f + 1, u, CoarseCategory::Blank});
      }
      if (log_t_rest != kLogZero && log_s_rest == kLogZero) {
        throw DegenerateSupport({f + 1, u, CoarseCategory::Rest});
      }

      // dL/dh_k = P_k - T_y [k=y] - T_blank [k=blank] - T_rest [k in rest] P_k / P_rest
      const auto lp = student.node(f, u);
      auto g = grad.node(f, u);
      for (std::size_t k = 0; k < K; ++k) {
        const double p = std::exp(lp[k]);
        if (k == y) {
          g[k] = p - t_y;
        } else if (k == blank) {
          g[k] = p - t_blank;
        } else if (log_t_rest == kLogZero) {
          g[k] = p;
        } else {
          g[k] = p - std::exp(log_t_rest + lp[k] - log_s_rest);
        }
      }
    }
  }
  return grad;
}

double combined_loss(double nll, double distill, const DistillConfig& cfg) {
  if (!std::isfinite(nll) || !std::isfinite(distill)) {
    throw InvalidInput("combined loss needs finite rnnt and distillation terms");
  }
  return nll + cfg.beta * distill;
}

namespace {

std::uint64_t checked_product(std::initializer_list<std::uint64_t> factors) {
  constexpr unsigned __int128 kLimit = static_cast<unsigned __int128>(1) << 63;
  unsigned __int128 acc = 1;
  for (std::uint64_t f : factors) {
    if (f == 0) throw InvalidInput("memory estimate arguments must be positive");
    acc *= f;
    if (acc > kLimit) throw SizeError("memory estimate exceeds 2^63 bytes");
  }
  return static_cast<std::uint64_t>(acc);
}

}  // namespace

std::uint64_t memory_estimate(std::uint64_t frames, std::uint64_t rows, std::uint64_t vocab,
                              std::uint64_t bytes_per_value, std::uint64_t batch) {
  return checked_product({batch, 2, rows, frames, vocab, bytes_per_value});
}

std::uint64_t coarse_memory_estimate(std::uint64_t frames, std::uint64_t rows,
                                     std::uint64_t bytes_per_value, std::uint64_t batch) {
  return memory_estimate(frames, rows, 3, bytes_per_value, batch);
}

TeacherLattice make_teacher_lattice(const LogitLattice& teacher_logits,
                                    const TargetSequence& target, DistillMode mode) {
  TeacherLattice out;
  out.mode = mode;
  if (mode == DistillMode::Coarse) {
    out.coarse = coarse_grain_logits(teacher_logits, target);
  } else {
    out.full = softmax_lattice(teacher_logits);
  }
  return out;
}

DistillTerm distill_loss_and_grad(const TeacherLattice& teacher, const ProbLattice& student,
                                  const TargetSequence& target) {
  DistillTerm out;
  if (teacher.mode == DistillMode::Full) {
    out.value = full_kl_loss(teacher.full, student);
    out.grad = full_kl_grad_student_logits(teacher.full, student);
    return out;
  }
  const CoarseKl kl = coarse_kl_loss(teacher.coarse, coarse_grain(student, target));
  if (!kl.finite()) throw DegenerateSupport(*kl.violation);
  out.value = kl.value;
  out.grad = coarse_kl_grad_student_logits(teacher.coarse, student, target);
  return out;
}

}  // namespace rnntd
