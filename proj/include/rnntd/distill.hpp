#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "rnntd/error.hpp"
#include "rnntd/lattice.hpp"

namespace rnntd {

enum class DistillMode { Full, Coarse };

struct DistillConfig {
  double beta = 1e-3;
  DistillMode mode = DistillMode::Coarse;

  void validate() const;
};

std::string to_string(DistillMode mode);
DistillMode parse_distill_mode(const std::string& s);

// Sum over nodes of KL(teacher(.|t,u) || student(.|t,u)) on the full K-way
// distributions. Teacher entries with zero probability contribute zero; a
// teacher mass on a student zero makes the result +inf.
double full_kl_loss(const ProbLattice& teacher, const ProbLattice& student);

// d full_kl_loss / d student logits = P - P_teacher per entry.
LatticeGrad full_kl_grad_student_logits(const ProbLattice& teacher, const ProbLattice& student);

enum class CoarseCategory { Y, Blank, Rest };
std::string to_string(CoarseCategory c);

// Where the teacher puts mass on a coarse category the student gives zero.
struct SupportViolation {
  std::size_t t = 0;  // 1-based frame
  std::size_t u = 0;
  CoarseCategory category = CoarseCategory::Y;
};

struct CoarseKl {
  double value = 0.0;
  // Set exactly when value is +inf.
  std::optional<SupportViolation> violation;

  bool finite() const { return !violation.has_value(); }
};

// Thrown by gradient routines when the loss they differentiate is infinite.
class DegenerateSupport : public NumericalError {
 public:
  explicit DegenerateSupport(SupportViolation where);
  const SupportViolation& where() const { return where_; }

 private:
  SupportViolation where_;
};

// Sum over nodes of the KL divergence between coarse (y, blank, rest)
// distributions. The top row contributes only its (blank, rest) terms.
CoarseKl coarse_kl_loss(const CoarseLattice& teacher, const CoarseLattice& student);

// Gradient of coarse_kl_loss(teacher, coarse_grain(student, target)) with
// respect to the student's K-dimensional logits. Throws DegenerateSupport if
// that loss is infinite.
LatticeGrad coarse_kl_grad_student_logits(const CoarseLattice& teacher,
                                          const ProbLattice& student,
                                          const TargetSequence& target);

// nll + beta * distill. Throws InvalidInput on non-finite terms.
double combined_loss(double nll, double distill, const DistillConfig& cfg);

// Bytes for the full-lattice loss: batch * 2 * U * T * K * bytes_per_value.
// Throws SizeError beyond 2^63 and InvalidInput on non-positive arguments.
std::uint64_t memory_estimate(std::uint64_t frames, std::uint64_t rows, std::uint64_t vocab,
                              std::uint64_t bytes_per_value, std::uint64_t batch);
// Same formula with K replaced by the three coarse categories.
std::uint64_t coarse_memory_estimate(std::uint64_t frames, std::uint64_t rows,
                                     std::uint64_t bytes_per_value, std::uint64_t batch);

// Teacher side of a distillation term, computed once per utterance. Coarse
// mode never holds a K-sized teacher tensor.
struct TeacherLattice {
  DistillMode mode = DistillMode::Coarse;
  CoarseLattice coarse;
  ProbLattice full;
};

TeacherLattice make_teacher_lattice(const LogitLattice& teacher_logits,
                                    const TargetSequence& target, DistillMode mode);

struct DistillTerm {
  double value = 0.0;
  LatticeGrad grad;
};

// Loss and student-logit gradient for whichever mode the teacher was built in.
DistillTerm distill_loss_and_grad(const TeacherLattice& teacher, const ProbLattice& student,
                                  const TargetSequence& target);

}  // namespace rnntd
