#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace rnntd {

struct GradcheckOptions {
  int frames = 4;
  int labels = 3;
  int vocab = 4;
  int hidden = 5;
  int lattice_coords = 50;
  int model_coords = 30;
  double step = 1e-5;
  double tolerance = 1e-4;
  // Relative error denominator floor: |a - n| / max(|a|, |n|, floor).
  double floor = 1e-6;
  // Distillation weight used by the end-to-end suites, large enough that a
  // wrong distillation gradient cannot hide behind the rnnt term.
  double beta = 1.0;
  std::uint64_t seed = 1;
  // Negative control: corrupts every analytic gradient by 1%.
  bool break_gradient = false;
};

struct SuiteResult {
  std::string name;
  int coords = 0;
  double max_rel_err = 0.0;
  std::string worst;
  bool passed = false;
};

double relative_error(double analytic, double numeric, double floor);

// Lattice suites check analytic gradients against central differences of
// independent extended-precision reimplementations of each loss. The
// end-to-end suites difference the toy model's loss directly.
SuiteResult gradcheck_rnnt(const GradcheckOptions& opt);
SuiteResult gradcheck_full_kl(const GradcheckOptions& opt);
SuiteResult gradcheck_coarse_kl(const GradcheckOptions& opt);
SuiteResult gradcheck_end_to_end_rnnt(const GradcheckOptions& opt);
SuiteResult gradcheck_end_to_end_coarse(const GradcheckOptions& opt);
SuiteResult gradcheck_end_to_end_full(const GradcheckOptions& opt);

std::vector<SuiteResult> run_all_gradchecks(const GradcheckOptions& opt);

}  // namespace rnntd
