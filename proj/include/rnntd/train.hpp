#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "rnntd/checkpoint.hpp"
#include "rnntd/data.hpp"
#include "rnntd/distill.hpp"
#include "rnntd/model.hpp"
#include "rnntd/sparsity.hpp"

namespace rnntd {

inline constexpr const char* kBackboneLabel = "toy-tanh-rnn";

struct OptimizerConfig {
  double lr = 0.05;
  double momentum = 0.9;
  std::int64_t warmup = 0;
  std::int64_t steps = 1000;
  int batch_size = 8;
  // Global gradient-norm clip; 0 disables.
  double clip_norm = 0.0;
};

// One schedule shared by a group of prunable tensors.
struct PruneGroup {
  std::vector<std::string> tensors;
  SparsitySchedule schedule;
};

struct RunConfig {
  SynthTaskSpec task;
  std::string data_dir;
  ModelConfig model;
  OptimizerConfig optimizer;
  DistillConfig distill;
  std::vector<double> beta_sweep;
  bool init_from_teacher = false;
  std::vector<PruneGroup> pruning;
  BlockShape block;
  std::int64_t eval_every = 100;
  // Dev-based checkpoint selection considers only eval points at or after
  // this step. Negative means "after the last pruning schedule ends".
  std::int64_t select_after_step = -1;
  int max_symbols_per_frame = 3;
  std::uint64_t seed = 1;

  void validate() const;
  std::int64_t selection_start() const;
};

nlohmann::json to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

struct MetricsRecord {
  std::int64_t step = 0;
  double rnnt_loss = 0.0;
  double distill_loss = 0.0;
  double total_loss = 0.0;
  std::map<std::string, double> sparsity;
  double dev_ter = 0.0;
};

nlohmann::json to_json(const MetricsRecord& r);

// Per-utterance gradients of nll + beta * distill with respect to the
// student parameters.
struct UtteranceGrad {
  double nll = 0.0;
  double distill = 0.0;
  ModelParams grads;
};

struct TeacherModel {
  const ModelParams* params = nullptr;
  DistillConfig distill;
};

UtteranceGrad utterance_gradients(const ModelParams& student, const Utterance& utt,
                                  const Vocab& vocab,
                                  const std::optional<TeacherModel>& teacher);

// Loss only, for finite-difference checks.
double utterance_loss(const ModelParams& student, const Utterance& utt, const Vocab& vocab,
                      const std::optional<TeacherModel>& teacher);

struct UtteranceReport {
  std::vector<int> reference;
  std::vector<int> hypothesis;
  std::size_t edits = 0;
};

struct EvalReport {
  double ter = 0.0;
  std::size_t errors = 0;
  std::size_t reference_tokens = 0;
  std::vector<UtteranceReport> utterances;
};

EvalReport run_eval(const ModelParams& params, const std::vector<Utterance>& utts,
                    int max_symbols_per_frame);
EvalReport run_eval(const Checkpoint& ckpt, const std::vector<Utterance>& utts,
                    int max_symbols_per_frame);

struct TrainResult {
  Checkpoint best;
  Checkpoint last;
  std::vector<MetricsRecord> metrics;
  InitReport init_report;
  // (step, target, achieved block sparsity) for every mask update.
  struct MaskEvent {
    std::int64_t step;
    std::string tensor;
    double target;
    double achieved;
    std::size_t prunable_blocks;
  };
  std::vector<MaskEvent> mask_events;
  // Seconds since training start at each eval point. Kept apart from the
  // metrics so those stay byte-reproducible.
  std::vector<std::pair<std::int64_t, double>> wall_times;
};

// Index of the lowest dev TER among records with step >= min_step; earliest
// on ties. Empty when no record qualifies.
std::optional<std::size_t> select_best(const std::vector<MetricsRecord>& records,
                                       std::int64_t min_step);

// Seeded minibatch training. With a teacher and beta > 0 the loss is
// mean nll + beta * mean distill. Masks are reapplied after every step. On
// a non-finite loss the parameters from before that step are written to
// out_dir/last_good.json (when out_dir is set) and NumericalError is thrown.
TrainResult run_train(const RunConfig& cfg, const Dataset& data,
                      const std::optional<Checkpoint>& teacher,
                      const std::optional<std::filesystem::path>& out_dir);

// checkpoint.json, last.json, metrics.jsonl, mask_events.jsonl,
// init_report.json and timing.jsonl.
void write_train_outputs(const TrainResult& result, const std::filesystem::path& out_dir);

}  // namespace rnntd
