#include "rnntd/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <sstream>

#include "rnntd/distill.hpp"
#include "rnntd/rnnt_loss.hpp"
#include "rnntd/train.hpp"

namespace rnntd {

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

namespace {

using LD = long double;
using LdLattice = std::vector<LD>;  // T x U x K, same layout as LatticeTensor

struct Dims {
  std::size_t T, U, K;
  std::size_t at(std::size_t f, std::size_t u, std::size_t k) const { return (f * U + u) * K + k; }
};

std::vector<LD> ld_softmax(const LdLattice& h, const Dims& d, std::size_t f, std::size_t u) {
  std::vector<LD> p(d.K);
  LD m = h[d.at(f, u, 0)];
  for (std::size_t k = 1; k < d.K; ++k) m = std::max(m, h[d.at(f, u, k)]);
  LD s = 0;
  for (std::size_t k = 0; k < d.K; ++k) s += (p[k] = std::exp(h[d.at(f, u, k)] - m));
  for (LD& v : p) v /= s;
  return p;
}

// Linear-domain transducer likelihood straight from the definition.
LD ld_rnnt_nll(const LdLattice& h, const Dims& d, const std::vector<int>& labels) {
  std::vector<LD> alpha(d.T * d.U, 0);
  std::vector<LD> blank(d.T * d.U), y(d.T * d.U, 0);
  for (std::size_t f = 0; f < d.T; ++f) {
    for (std::size_t u = 0; u < d.U; ++u) {
      const auto p = ld_softmax(h, d, f, u);
      blank[f * d.U + u] = p[0];
      if (u + 1 < d.U) y[f * d.U + u] = p[static_cast<std::size_t>(labels[u])];
    }
  }
  for (std::size_t f = 0; f < d.T; ++f) {
    for (std::size_t u = 0; u < d.U; ++u) {
      LD a = (f == 0 && u == 0) ? 1 : 0;
      if (f > 0) a += alpha[(f - 1) * d.U + u] * blank[(f - 1) * d.U + u];
      if (u > 0) a += alpha[f * d.U + u - 1] * y[f * d.U + u - 1];
      alpha[f * d.U + u] = a;
    }
  }
  const std::size_t last = d.T * d.U - 1;
  return -std::log(alpha[last] * blank[last]);
}

LD ld_full_kl(const LdLattice& teacher, const LdLattice& student, const Dims& d) {
  LD total = 0;
  for (std::size_t f = 0; f < d.T; ++f) {
    for (std::size_t u = 0; u < d.U; ++u) {
      const auto pt = ld_softmax(teacher, d, f, u);
      const auto ps = ld_softmax(student, d, f, u);
      for (std::size_t k = 0; k < d.K; ++k) total += pt[k] * std::log(pt[k] / ps[k]);
    }
  }
  return total;
}

// Rest mass summed explicitly over the remaining tokens.
LD ld_coarse_kl(const LdLattice& teacher, const LdLattice& student, const Dims& d,
                const std::vector<int>& labels) {
  LD total = 0;
  for (std::size_t f = 0; f < d.T; ++f) {
    for (std::size_t u = 0; u < d.U; ++u) {
      const auto pt = ld_softmax(teacher, d, f, u);
      const auto ps = ld_softmax(student, d, f, u);
      const bool has_y = u + 1 < d.U;
      const std::size_t yk = has_y ? static_cast<std::size_t>(labels[u]) : d.K;
      LD rt = 0, rs = 0;
      for (std::size_t k = 1; k < d.K; ++k) {
        if (k == yk) continue;
        rt += pt[k];
        rs += ps[k];
      }
      auto term = [](LD a, LD b) { return a > 0 ? a * std::log(a / b) : LD{0}; };
      if (has_y) total += term(pt[yk], ps[yk]);
      total += term(pt[0], ps[0]);
      total += term(rt, rs);
    }
  }
  return total;
}

struct LatticeCase {
  Dims dims;
  std::vector<int> labels;
  LogitLattice teacher;
  LogitLattice student;
};

LatticeCase make_lattice_case(const GradcheckOptions& opt, std::uint64_t salt) {
  std::mt19937_64 rng(opt.seed * 1000003ULL + salt);
  LatticeCase c;
  c.dims = Dims{static_cast<std::size_t>(opt.frames), static_cast<std::size_t>(opt.labels) + 1,
                static_cast<std::size_t>(opt.vocab)};
  std::uniform_int_distribution<int> label(1, opt.vocab - 1);
  for (int i = 0; i < opt.labels; ++i) c.labels.push_back(label(rng));
  std::normal_distribution<double> logit(0.0, 1.5);
  c.teacher = LogitLattice(c.dims.T, c.dims.U, c.dims.K);
  c.student = LogitLattice(c.dims.T, c.dims.U, c.dims.K);
  for (double& v : c.teacher.values()) v = logit(rng);
  for (double& v : c.student.values()) v = logit(rng);
  return c;
}

LdLattice widen(const LogitLattice& l) { return LdLattice(l.values().begin(), l.values().end()); }

std::vector<std::size_t> pick_coords(std::size_t n, int want, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  if (static_cast<std::size_t>(want) >= n) return idx;
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(static_cast<std::size_t>(want));
  std::sort(idx.begin(), idx.end());
  return idx;
}

void corrupt(double& g, const GradcheckOptions& opt) {
  if (opt.break_gradient) g = g * 1.01 + 1e-3;
}

SuiteResult lattice_suite(const std::string& name, const GradcheckOptions& opt,
                          const LatticeGrad& analytic,
                          const std::function<LD(const LdLattice&)>& loss, const LdLattice& at) {
  SuiteResult res;
  res.name = name;
  std::mt19937_64 rng(opt.seed + 17);
  const auto coords = pick_coords(analytic.size(), opt.lattice_coords, rng);
  const LD h = opt.step;
  for (std::size_t i : coords) {
    LdLattice plus = at, minus = at;
    plus[i] += h;
    minus[i] -= h;
    const double numeric = static_cast<double>((loss(plus) - loss(minus)) / (2 * h));
    double a = analytic.values()[i];
    corrupt(a, opt);
    const double err = relative_error(a, numeric, opt.floor);
    ++res.coords;
    if (err >= res.max_rel_err) {
      res.max_rel_err = err;
      std::ostringstream w;
      w << "flat index " << i << " analytic " << a << " numeric " << numeric;
      res.worst = w.str();
    }
  }
  res.passed = res.max_rel_err < opt.tolerance;
  return res;
}

}  // namespace

SuiteResult gradcheck_rnnt(const GradcheckOptions& opt) {
  const LatticeCase c = make_lattice_case(opt, 1);
  const TargetSequence target(Vocab{opt.vocab, 0}, c.labels);
  const RnntLoss loss = rnnt_loss(c.student, target);
  return lattice_suite(
      "rnnt", opt, loss.grad,
      [&](const LdLattice& h) { return ld_rnnt_nll(h, c.dims, c.labels); }, widen(c.student));
}

SuiteResult gradcheck_full_kl(const GradcheckOptions& opt) {
  const LatticeCase c = make_lattice_case(opt, 2);
  const ProbLattice teacher = softmax_lattice(c.teacher);
  const ProbLattice student = softmax_lattice(c.student);
  const LatticeGrad g = full_kl_grad_student_logits(teacher, student);
  const LdLattice t = widen(c.teacher);
  return lattice_suite(
      "full-kl", opt, g, [&](const LdLattice& h) { return ld_full_kl(t, h, c.dims); },
      widen(c.student));
}

SuiteResult gradcheck_coarse_kl(const GradcheckOptions& opt) {
  const LatticeCase c = make_lattice_case(opt, 3);
  const TargetSequence target(Vocab{opt.vocab, 0}, c.labels);
  const CoarseLattice teacher = coarse_grain_logits(c.teacher, target);
  const LatticeGrad g =
      coarse_kl_grad_student_logits(teacher, softmax_lattice(c.student), target);
  const LdLattice t = widen(c.teacher);
  return lattice_suite(
      "coarse-kl", opt, g,
      [&](const LdLattice& h) { return ld_coarse_kl(t, h, c.dims, c.labels); },
      widen(c.student));
}

namespace {

ModelConfig tiny_model(const GradcheckOptions& opt) {
  ModelConfig cfg;
  cfg.vocab_size = opt.vocab;
  cfg.feature_dim = opt.vocab;
  cfg.encoder_hidden = opt.hidden;
  cfg.prediction_embed_dim = opt.hidden;
  cfg.prediction_hidden = opt.hidden;
  cfg.joint_dim = opt.hidden;
  cfg.seed = opt.seed;
  return cfg;
}

SuiteResult model_suite(const std::string& name, const GradcheckOptions& opt,
                        std::optional<DistillMode> mode) {
  const ModelConfig cfg = tiny_model(opt);
  std::mt19937_64 rng(opt.seed * 7919ULL + 5);
  // Larger-scale teacher so its lattice differs visibly from the student's.
  ModelParams teacher = init_params(cfg, opt.seed + 101);
  teacher.visit([](const char*, Matrix& m) {
    for (double& v : m.values()) v *= 8.0;
  });
  ModelParams student = init_params(cfg, opt.seed + 202);
  student.visit([](const char*, Matrix& m) {
    for (double& v : m.values()) v *= 4.0;
  });

  Utterance utt;
  std::normal_distribution<double> feat(0.0, 1.0);
  std::uniform_int_distribution<int> label(1, opt.vocab - 1);
  utt.features = Matrix(static_cast<std::size_t>(opt.frames), static_cast<std::size_t>(opt.vocab));
  for (double& v : utt.features.values()) v = feat(rng);
  for (int i = 0; i < opt.labels; ++i) utt.labels.push_back(label(rng));

  std::optional<TeacherModel> tm;
  if (mode) tm = TeacherModel{&teacher, DistillConfig{opt.beta, *mode}};
  const Vocab vocab = cfg.vocab();
  const UtteranceGrad ug = utterance_gradients(student, utt, vocab, tm);

  // Flatten (tensor, index) coordinates.
  std::vector<std::pair<std::string, std::size_t>> all;
  student.visit([&](const char* n, const Matrix& m) {
    for (std::size_t i = 0; i < m.size(); ++i) all.emplace_back(n, i);
  });
  const auto picks = pick_coords(all.size(), opt.model_coords, rng);

  SuiteResult res;
  res.name = name;
  for (std::size_t p : picks) {
    const auto& [tensor, i] = all[p];
    ModelParams work = student;
    double& w = tensor_by_name(work, tensor).values()[i];
    const double w0 = w;
    w = w0 + opt.step;
    const double up = utterance_loss(work, utt, vocab, tm);
    w = w0 - opt.step;
    const double down = utterance_loss(work, utt, vocab, tm);
    const double numeric = (up - down) / (2 * opt.step);
    double a = tensor_by_name(ug.grads, tensor).values()[i];
    corrupt(a, opt);
    const double err = relative_error(a, numeric, opt.floor);
    ++res.coords;
    if (err >= res.max_rel_err) {
      res.max_rel_err = err;
      std::ostringstream s;
      s << tensor << "[" << i << "] analytic " << a << " numeric " << numeric;
      res.worst = s.str();
    }
  }
  res.passed = res.max_rel_err < opt.tolerance;
  return res;
}

}  // namespace

SuiteResult gradcheck_end_to_end_rnnt(const GradcheckOptions& opt) {
  return model_suite("end-to-end/rnnt", opt, std::nullopt);
}

SuiteResult gradcheck_end_to_end_coarse(const GradcheckOptions& opt) {
  return model_suite("end-to-end/rnnt+coarse-kl", opt, DistillMode::Coarse);
}

SuiteResult gradcheck_end_to_end_full(const GradcheckOptions& opt) {
  return model_suite("end-to-end/rnnt+full-kl", opt, DistillMode::Full);
}

std::vector<SuiteResult> run_all_gradchecks(const GradcheckOptions& opt) {
  return {gradcheck_rnnt(opt),
          gradcheck_full_kl(opt),
          gradcheck_coarse_kl(opt),
          gradcheck_end_to_end_rnnt(opt),
          gradcheck_end_to_end_coarse(opt),
          gradcheck_end_to_end_full(opt)};
}

}  // namespace rnntd
