// Acceptance run: one PASS/FAIL line per criterion, followed by the numbers
// behind it. Exit status 1 if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "rnntd/checkpoint.hpp"
#include "rnntd/data.hpp"
#include "rnntd/distill.hpp"
#include "rnntd/gradcheck.hpp"
#include "rnntd/klcompare.hpp"
#include "rnntd/rnnt_loss.hpp"
#include "rnntd/sparsity.hpp"
#include "rnntd/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rnntd;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

std::string list(const std::vector<double>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt(v[i]);
  return s + "]";
}

std::string metrics_jsonl(const std::vector<MetricsRecord>& m) {
  std::string s;
  for (const auto& r : m) s += to_json(r).dump() + "\n";
  return s;
}

// ---------------------------------------------------------------- criteria

Verdict oracle_equivalence() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(20240611);
  std::normal_distribution<double> n(0.0, 2.0);
  double worst = 0.0;
  const int count = 1000;
  for (int i = 0; i < count; ++i) {
    const std::size_t T = 1 + rng() % 5, L = rng() % 5;
    const int K = 2 + static_cast<int>(rng() % 4);
    std::vector<int> labels(L);
    for (int& l : labels) l = 1 + static_cast<int>(rng() % (K - 1));
    const TargetSequence target(Vocab{K, 0}, labels);
    LogitLattice logits(T, L + 1, K);
    for (double& v : logits.values()) v = n(rng);
    const CoarseLattice c = coarse_grain_logits(logits, target);
    const double a = rnnt_nll(c), b = enumerate_paths_nll(c);
    worst = std::max(worst, std::abs(a - b) / std::max(std::abs(b), 1e-300));
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-10 && secs < 60.0,
          std::to_string(count) + " lattices (T<=5, L<=4, K<=5), max rel diff " + fmt(worst, 3) +
              ", " + fmt(secs, 3) + " s"};
}

Verdict gradient_suites() {
  const auto t0 = Clock::now();
  bool ok = true;
  std::string d;
  for (const SuiteResult& s : run_all_gradchecks(GradcheckOptions{})) {
    ok = ok && s.passed && s.max_rel_err <= 1e-4;
    d += s.name + " " + fmt(s.max_rel_err, 2) + "; ";
  }
  const double secs = seconds_since(t0);
  return {ok && secs < 120.0, d + fmt(secs, 3) + " s"};
}

Verdict kl_inequalities() {
  const KlInequalityReport r = kl_inequality_run(7, 1000);
  return {r.passed && r.draws >= 1000,
          std::to_string(r.draws) + " pairs, violations " + std::to_string(r.violations) +
              ", max(coarse - full) " + fmt(r.max_excess, 3) + ", max identity loss " +
              fmt(r.max_identity_loss, 3)};
}

Verdict memory_arithmetic() {
  const std::uint64_t one = memory_estimate(500, 100, 4000, 4, 1);
  const std::uint64_t batch = memory_estimate(500, 100, 4000, 4, 1024);
  const auto rows = memory_profile(50, 20, {4, 64, 512}, 1);
  bool coarse_const = true;
  std::string measured;
  for (const auto& r : rows) {
    coarse_const = coarse_const && r.coarse_measured == rows.front().coarse_measured;
    measured += "K=" + std::to_string(r.vocab) + ": coarse " + std::to_string(r.coarse_measured) +
                " B, full " + std::to_string(r.full_measured) + " B; ";
  }
  return {one == 1'600'000'000ull && batch == 1'638'400'000'000ull && coarse_const,
          "estimate " + std::to_string(one) + " B, x1024 " + std::to_string(batch) + " B; " +
              measured};
}

// Mask checks shared by the synthetic masks and the masks of a real run.
bool block_constant(const BlockMask& m) {
  const BlockGrid& g = m.grid();
  for (std::size_t r = 0; r < g.rows(); ++r) {
    for (std::size_t c = 0; c < g.cols(); ++c) {
      const std::size_t r0 = (r / g.shape().rows) * g.shape().rows;
      if (m.kept(r, c) != m.kept(r0, c)) return false;
    }
  }
  return true;
}

Verdict pruning_mechanics(const std::vector<const TrainResult*>& runs) {
  SparsitySchedule s{0.0, 0.9, 100000, 200000, 1000};
  const bool endpoints = target_sparsity(s, 100000) == 0.0 && target_sparsity(s, 200000) == 0.9;
  const double mid = target_sparsity(s, 150000);
  bool blocks_ok = true;
  bool achieved_ok = true;
  std::size_t masks = 0, events = 0;

  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t rows = 16 * (1 + rng() % 6) + (trial % 3 == 0 ? rng() % 16 : 0);
    const std::size_t cols = 1 + rng() % 9;
    Matrix w(rows, cols), g(rows, cols);
    for (double& v : w.values()) v = n(rng);
    for (double& v : g.values()) v = n(rng);
    const SaliencyScore sc = block_saliency(w, g);
    const double target = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const BlockMask m = update_mask(sc, target);
    ++masks;
    blocks_ok = blocks_ok && block_constant(m);
    const double prunable = static_cast<double>(sc.grid.prunable_count());
    achieved_ok = achieved_ok && std::abs(m.block_sparsity() - target) <= 1.0 / prunable;
  }
  for (const TrainResult* r : runs) {
    for (const auto& e : r->mask_events) {
      ++events;
      achieved_ok = achieved_ok &&
                    std::abs(e.achieved - e.target) <= 1.0 / static_cast<double>(e.prunable_blocks);
    }
    for (const Checkpoint* c : {&r->best, &r->last}) {
      for (const auto& [name, m] : c->masks) {
        ++masks;
        blocks_ok = blocks_ok && block_constant(m);
        const Matrix& w = tensor_by_name(c->params, name);
        for (std::size_t i = 0; i < w.rows(); ++i) {
          for (std::size_t j = 0; j < w.cols(); ++j) {
            if (!m.kept(i, j) && w(i, j) != 0.0) blocks_ok = false;
          }
        }
      }
    }
  }
  return {endpoints && std::abs(mid - 0.7875) <= 1e-12 && blocks_ok && achieved_ok,
          "endpoints " + std::string(endpoints ? "exact" : "WRONG") + ", midpoint " +
              fmt(mid, 10) + ", " + std::to_string(masks) + " masks block-constant: " +
              (blocks_ok ? "yes" : "no") + ", " + std::to_string(events) +
              " schedule updates within one block: " + (achieved_ok ? "yes" : "no")};
}

// ---------------------------------------------------------------- experiments

struct Experiments {
  double teacher_dev_ter = 1.0;
  double teacher_test_ter = 1.0;
  std::vector<double> prune_distill, prune_plain;
  std::vector<double> small_distill, small_plain;
  std::vector<TrainResult> kept_runs;
  Checkpoint teacher;
  RunConfig prune_cfg;
  Dataset data;
  double seconds = 0.0;
};

double test_ter(const Checkpoint& c, const Dataset& d, int cap) {
  return run_eval(c, d.test, cap).ter;
}

Experiments run_experiments(const fs::path& configs, int seeds, const fs::path& work) {
  Experiments x;
  const auto t0 = Clock::now();
  const RunConfig teacher_cfg = load_run_config(configs / "teacher.json");
  x.data = gen_data(teacher_cfg.task);

  const TrainResult teacher = run_train(teacher_cfg, x.data, std::nullopt, std::nullopt);
  write_train_outputs(teacher, work / "teacher");
  x.teacher = teacher.best;
  x.teacher_dev_ter = run_eval(x.teacher, x.data.dev, teacher_cfg.max_symbols_per_frame).ter;
  x.teacher_test_ter = test_ter(x.teacher, x.data, teacher_cfg.max_symbols_per_frame);
  std::cout << "  teacher: dev TER " << fmt(x.teacher_dev_ter) << ", test TER "
            << fmt(x.teacher_test_ter) << " (" << fmt(seconds_since(t0), 3) << " s)\n"
            << std::flush;

  x.prune_cfg = load_run_config(configs / "prune90.json");
  const RunConfig small_cfg = load_run_config(configs / "student-distill.json");
  for (int seed = 1; seed <= seeds; ++seed) {
    RunConfig c = x.prune_cfg;
    c.seed = static_cast<std::uint64_t>(seed);
    const TrainResult with = run_train(c, x.data, x.teacher, std::nullopt);
    c.distill.beta = 0.0;
    const TrainResult without = run_train(c, x.data, x.teacher, std::nullopt);
    x.prune_distill.push_back(test_ter(with.best, x.data, c.max_symbols_per_frame));
    x.prune_plain.push_back(test_ter(without.best, x.data, c.max_symbols_per_frame));
    write_train_outputs(with, work / ("prune90_distill_seed" + std::to_string(seed)));
    write_train_outputs(without, work / ("prune90_plain_seed" + std::to_string(seed)));
    if (seed == 1) {
      x.kept_runs.push_back(with);
      x.kept_runs.push_back(without);
    }

    RunConfig s = small_cfg;
    s.seed = static_cast<std::uint64_t>(seed);
    const TrainResult sd = run_train(s, x.data, x.teacher, std::nullopt);
    s.distill.beta = 0.0;
    const TrainResult sp = run_train(s, x.data, std::nullopt, std::nullopt);
    x.small_distill.push_back(test_ter(sd.best, x.data, s.max_symbols_per_frame));
    x.small_plain.push_back(test_ter(sp.best, x.data, s.max_symbols_per_frame));
    write_train_outputs(sd, work / ("small_distill_seed" + std::to_string(seed)));
    write_train_outputs(sp, work / ("small_plain_seed" + std::to_string(seed)));
    std::cout << "  seed " << seed << ": prune90 test TER distill " << fmt(x.prune_distill.back())
              << " / plain " << fmt(x.prune_plain.back()) << "; small student distill "
              << fmt(x.small_distill.back()) << " / plain " << fmt(x.small_plain.back()) << " ("
              << fmt(seconds_since(t0), 3) << " s)\n"
              << std::flush;
  }
  x.seconds = seconds_since(t0);
  return x;
}

Verdict table2_direction(const Experiments& x) {
  const double md = median(x.prune_distill), mp = median(x.prune_plain);
  return {x.teacher_dev_ter < 0.05 && md < mp && x.seconds < 1800.0,
          "teacher dev TER " + fmt(x.teacher_dev_ter) + "; 90%-sparse median test TER distill " +
              fmt(md) + " vs plain " + fmt(mp) + "; distill " + list(x.prune_distill) + ", plain " +
              list(x.prune_plain) + "; experiments " + fmt(x.seconds, 4) + " s"};
}

Verdict teacher_student_direction(const Experiments& x) {
  const double md = median(x.small_distill), mp = median(x.small_plain);
  return {md <= mp, "small student median test TER distill " + fmt(md) + " vs plain " + fmt(mp) +
                        "; distill " + list(x.small_distill) + ", plain " + list(x.small_plain)};
}

Verdict reproducibility(const Experiments& x) {
  bool same = true;
  std::string d;
  // data
  const SynthTaskSpec& task = x.prune_cfg.task;
  const Dataset again = gen_data(task);
  const bool data_same = to_jsonl(again.train) == to_jsonl(x.data.train) &&
                         to_jsonl(again.dev) == to_jsonl(x.data.dev) &&
                         to_jsonl(again.test) == to_jsonl(x.data.test);
  same = same && data_same;
  d += std::string("dataset ") + (data_same ? "identical" : "DIFFERS");
  // a pruning + distillation run, repeated
  RunConfig c = x.prune_cfg;
  c.seed = 1;
  const TrainResult r = run_train(c, x.data, x.teacher, std::nullopt);
  const TrainResult& ref = x.kept_runs.front();
  const bool ckpt = serialize(r.best) == serialize(ref.best) && serialize(r.last) == serialize(ref.last);
  const bool metrics = metrics_jsonl(r.metrics) == metrics_jsonl(ref.metrics);
  same = same && ckpt && metrics;
  d += std::string("; prune90 seed 1 rerun: checkpoints ") + (ckpt ? "identical" : "DIFFER") +
       ", metrics " + (metrics ? "identical" : "DIFFER");
  return {same, d};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string configs = std::string(RNNTD_SOURCE_DIR) + "/configs";
  std::string work = (fs::temp_directory_path() / "rnntd_acceptance").string();
  int seeds = 5;
  app.add_option("--configs", configs, "Directory holding the shipped presets");
  app.add_option("--work-dir", work, "Where run outputs are written");
  app.add_option("--seeds", seeds, "Seeds per directional comparison");
  CLI11_PARSE(app, argc, argv);

  fs::remove_all(work);
  fs::create_directories(work);

  struct Line {
    std::string name;
    Verdict v;
  };
  std::vector<Line> lines;
  auto run = [&](const std::string& name, const std::function<Verdict()>& fn) {
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (v.pass ? "PASS " : "FAIL ") << name << ": " << v.detail << "\n" << std::flush;
    lines.push_back({name, v});
  };

  run("oracle-equivalence", oracle_equivalence);
  run("gradient-suites", gradient_suites);
  run("kl-inequalities", kl_inequalities);
  run("memory-arithmetic", memory_arithmetic);

  std::cout << "running training experiments (outputs in " << work << ")\n" << std::flush;
  std::optional<Experiments> x;
  std::string failure;
  try {
    x = run_experiments(configs, seeds, work);
  } catch (const std::exception& e) {
    failure = e.what();
  }
  auto needs = [&](const std::function<Verdict(const Experiments&)>& fn) {
    return [&, fn]() -> Verdict {
      if (!x) return {false, "experiments did not complete: " + failure};
      return fn(*x);
    };
  };
  run("pruning-mechanics", [&] {
    std::vector<const TrainResult*> runs;
    if (x) {
      for (const auto& r : x->kept_runs) runs.push_back(&r);
    }
    Verdict v = pruning_mechanics(runs);
    if (!x) v.detail += " (no training runs available)";
    return v;
  });
  run("table2-direction", needs(table2_direction));
  run("teacher-student-direction", needs(teacher_student_direction));
  run("reproducibility", needs(reproducibility));

  json report = json::array();
  bool all = true;
  for (const auto& l : lines) {
    report.push_back(json{{"criterion", l.name}, {"pass", l.v.pass}, {"detail", l.v.detail}});
    all = all && l.v.pass;
  }
  std::ofstream(fs::path(work) / "acceptance_report.json") << report.dump(2) << "\n";
  return all ? 0 : 1;
}
