// Command-line driver: data generation, training, evaluation and the
// verification reports.
//
// Exit codes: 0 success, 1 verification failure (or a training run aborted on
// a non-finite loss), 2 configuration or input error.

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "rnntd/checkpoint.hpp"
#include "rnntd/data.hpp"
#include "rnntd/distill.hpp"
#include "rnntd/error.hpp"
#include "rnntd/gradcheck.hpp"
#include "rnntd/kernels.hpp"
#include "rnntd/klcompare.hpp"
#include "rnntd/train.hpp"

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitVerify = 1;
constexpr int kExitConfig = 2;

json read_json(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw rnntd::InvalidInput("cannot read " + path.string());
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw rnntd::InvalidInput("malformed JSON in " + path.string() + ": " + e.what());
  }
}

struct GenDataArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

int cmd_gen_data(const GenDataArgs& a) {
  const json j = read_json(a.config);
  rnntd::SynthTaskSpec spec = rnntd::synth_task_from_json(j.contains("task") ? j.at("task") : j);
  if (a.seed) spec.seed = *a.seed;
  const rnntd::Dataset data = rnntd::gen_data(spec);
  rnntd::write_dataset(data, spec, a.out);
  std::cout << "wrote " << data.train.size() << "/" << data.dev.size() << "/" << data.test.size()
            << " train/dev/test utterances to " << a.out << "\n";
  return kExitOk;
}

struct TrainArgs {
  std::string config;
  std::string out;
  std::string data;
  std::string teacher;
  std::optional<std::uint64_t> seed;
  std::optional<double> beta;
  std::string mode;
  std::optional<std::int64_t> steps;
};

int cmd_train(const TrainArgs& a) {
  json j = read_json(a.config);
  if (a.seed) j["seed"] = *a.seed;
  if (a.beta) j["distill"]["beta"] = *a.beta;
  if (!a.mode.empty()) j["distill"]["mode"] = a.mode;
  if (a.steps) j["optimizer"]["steps"] = *a.steps;
  const rnntd::RunConfig cfg = rnntd::run_config_from_json(j);

  fs::path data_dir = a.data.empty() ? fs::path(cfg.data_dir) : fs::path(a.data);
  if (data_dir.empty()) throw rnntd::InvalidInput("no dataset directory: set data_dir or --data");
  if (!fs::exists(data_dir / "train.jsonl")) {
    throw rnntd::InvalidInput("dataset not found in " + data_dir.string() + " (run gen-data first)");
  }
  const rnntd::Dataset data = rnntd::read_dataset(data_dir);

  std::optional<rnntd::Checkpoint> teacher;
  if (!a.teacher.empty()) teacher = rnntd::load_checkpoint(a.teacher);

  const fs::path out(a.out);
  fs::create_directories(out);
  {
    std::ofstream os(out / "config.json");
    os << rnntd::to_json(cfg).dump(2) << "\n";
  }
  const rnntd::TrainResult r = rnntd::run_train(cfg, data, teacher, out);
  rnntd::write_train_outputs(r, out);

  for (const auto& m : r.metrics) {
    std::cout << "step " << std::setw(6) << m.step << "  rnnt " << std::fixed << std::setprecision(4)
              << m.rnnt_loss << "  distill " << m.distill_loss << "  dev_ter " << m.dev_ter << "\n";
  }
  std::cout << "selected step " << r.best.step << "; checkpoint written to "
            << (out / "checkpoint.json").string() << "\n";
  return kExitOk;
}

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string split = "test";
  std::string out;
  int max_symbols = 3;
};

int cmd_eval(const EvalArgs& a) {
  const rnntd::Checkpoint ckpt = rnntd::load_checkpoint(a.checkpoint);
  const auto utts = rnntd::read_split(a.data, a.split);
  const rnntd::EvalReport r = rnntd::run_eval(ckpt, utts, a.max_symbols);
  if (!a.out.empty()) {
    std::ofstream os(a.out, std::ios::binary);
    for (const auto& u : r.utterances) {
      os << json{{"reference", u.reference}, {"hypothesis", u.hypothesis}, {"edits", u.edits}}.dump()
         << "\n";
    }
  }
  std::cout << json{{"split", a.split},
                    {"ter", r.ter},
                    {"errors", r.errors},
                    {"reference_tokens", r.reference_tokens},
                    {"utterances", r.utterances.size()}}
                   .dump()
            << "\n";
  return kExitOk;
}

int cmd_gradcheck(const rnntd::GradcheckOptions& opt) {
  bool ok = true;
  std::cout << "kernels: " << rnntd::kernels::active().name << "\n";
  for (const rnntd::SuiteResult& s : rnntd::run_all_gradchecks(opt)) {
    std::cout << (s.passed ? "PASS " : "FAIL ") << std::left << std::setw(28) << s.name
              << " coords " << s.coords << "  max rel err " << std::scientific
              << std::setprecision(3) << s.max_rel_err << "\n";
    if (!s.passed) std::cout << "     worst: " << s.worst << "\n";
    ok = ok && s.passed;
  }
  return ok ? kExitOk : kExitVerify;
}

struct KlCompareArgs {
  std::uint64_t seed = 1;
  int draws = 1000;
  std::size_t frames = 50;
  std::size_t rows = 20;
  std::vector<std::size_t> vocabs{4, 64, 512};
};

int cmd_kl_compare(const KlCompareArgs& a) {
  const rnntd::KlInequalityReport ineq = rnntd::kl_inequality_run(a.seed, a.draws);
  std::cout << "coarse <= full over " << ineq.draws << " random lattice pairs: "
            << (ineq.passed ? "PASS" : "FAIL") << "  (violations " << ineq.violations
            << ", max coarse-full " << std::scientific << std::setprecision(3) << ineq.max_excess
            << ", min full " << ineq.min_full << ", min coarse " << ineq.min_coarse
            << ", max identity loss " << ineq.max_identity_loss << ")\n";

  const auto rows = rnntd::memory_profile(a.frames, a.rows, a.vocabs, a.seed);
  const bool mem_ok = rnntd::memory_profile_ok(rows);
  std::cout << "auxiliary storage at T=" << a.frames << ", U=" << a.rows << " (8-byte values):\n";
  std::cout << "       K   full measured   full predicted  coarse measured coarse predicted\n";
  for (const auto& r : rows) {
    std::cout << std::setw(8) << r.vocab << std::setw(16) << r.full_measured << std::setw(17)
              << r.full_predicted << std::setw(17) << r.coarse_measured << std::setw(17)
              << r.coarse_predicted << "\n";
  }
  std::cout << "coarse constant in K, full proportional to K: " << (mem_ok ? "PASS" : "FAIL")
            << "\n";
  std::cout << "memory_estimate(T=500, U=100, K=4000, 4 B, batch 1) = " << std::scientific
            << std::setprecision(4) << static_cast<double>(rnntd::memory_estimate(500, 100, 4000, 4, 1))
            << " bytes\n";
  return ineq.passed && mem_ok ? kExitOk : kExitVerify;
}

struct MemArgs {
  std::uint64_t frames = 500;
  std::uint64_t rows = 100;
  std::uint64_t vocab = 4000;
  std::uint64_t bytes = 4;
  std::uint64_t batch = 1;
  std::string mode = "full";
};

int cmd_mem_estimate(const MemArgs& a) {
  const rnntd::DistillMode mode = rnntd::parse_distill_mode(a.mode);
  const std::uint64_t bytes = mode == rnntd::DistillMode::Full
                                  ? rnntd::memory_estimate(a.frames, a.rows, a.vocab, a.bytes, a.batch)
                                  : rnntd::coarse_memory_estimate(a.frames, a.rows, a.bytes, a.batch);
  std::cout << json{{"mode", a.mode},
                    {"frames", a.frames},
                    {"rows", a.rows},
                    {"vocab", mode == rnntd::DistillMode::Full ? a.vocab : 3},
                    {"bytes_per_value", a.bytes},
                    {"batch", a.batch},
                    {"bytes", bytes}}
                   .dump()
            << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RNN-T lattice losses, distillation and block pruning on synthetic tasks"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate the synthetic dataset");
  gen_cmd->add_option("--config", gen.config, "Task or run config (JSON)")->required();
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--seed", gen.seed, "Override the task seed");

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train a model, optionally distilling and pruning");
  train_cmd->add_option("--config", train.config, "Run config (JSON)")->required();
  train_cmd->add_option("--out", train.out, "Output directory")->required();
  train_cmd->add_option("--data", train.data, "Dataset directory (overrides data_dir)");
  train_cmd->add_option("--teacher", train.teacher, "Teacher checkpoint");
  train_cmd->add_option("--seed", train.seed, "Override the run seed");
  train_cmd->add_option("--beta", train.beta, "Override the distillation weight");
  train_cmd->add_option("--distill-mode", train.mode, "coarse or full");
  train_cmd->add_option("--steps", train.steps, "Override the number of optimizer steps");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Token error rate of a checkpoint");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "Checkpoint JSON")->required();
  eval_cmd->add_option("--data", ev.data, "Dataset directory")->required();
  eval_cmd->add_option("--split", ev.split, "train, dev or test");
  eval_cmd->add_option("--out", ev.out, "Per-utterance report (JSONL)");
  eval_cmd->add_option("--max-symbols", ev.max_symbols, "Greedy emissions per frame");

  rnntd::GradcheckOptions gc;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient suites");
  gc_cmd->add_option("--seed", gc.seed);
  gc_cmd->add_option("--frames", gc.frames);
  gc_cmd->add_option("--labels", gc.labels);
  gc_cmd->add_option("--vocab", gc.vocab);
  gc_cmd->add_option("--hidden", gc.hidden);
  gc_cmd->add_flag("--break-gradient", gc.break_gradient, "Corrupt analytic gradients (negative control)");

  KlCompareArgs kl;
  auto* kl_cmd = app.add_subcommand("kl-compare", "Full vs coarse KL values and storage");
  kl_cmd->add_option("--seed", kl.seed);
  kl_cmd->add_option("--draws", kl.draws);
  kl_cmd->add_option("--frames", kl.frames);
  kl_cmd->add_option("--rows", kl.rows);
  kl_cmd->add_option("--vocabs", kl.vocabs)->delimiter(',');

  MemArgs mem;
  auto* mem_cmd = app.add_subcommand("mem-estimate", "Distillation loss memory estimate");
  mem_cmd->add_option("--frames", mem.frames);
  mem_cmd->add_option("--rows", mem.rows);
  mem_cmd->add_option("--vocab", mem.vocab);
  mem_cmd->add_option("--bytes", mem.bytes);
  mem_cmd->add_option("--batch", mem.batch);
  mem_cmd->add_option("--mode", mem.mode, "full or coarse");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (gen_cmd->parsed()) return cmd_gen_data(gen);
    if (train_cmd->parsed()) return cmd_train(train);
    if (eval_cmd->parsed()) return cmd_eval(ev);
    if (gc_cmd->parsed()) return cmd_gradcheck(gc);
    if (kl_cmd->parsed()) return cmd_kl_compare(kl);
    if (mem_cmd->parsed()) return cmd_mem_estimate(mem);
  } catch (const rnntd::NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitVerify;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}
