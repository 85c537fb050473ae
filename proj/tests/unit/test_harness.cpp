#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "rnntd/data.hpp"
#include "rnntd/error.hpp"
#include "rnntd/ter.hpp"
#include "rnntd/train.hpp"

using namespace rnntd;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("rnntd_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

RunConfig small_run() {
  RunConfig c;
  c.task.size = 120;
  c.task.seed = 3;
  c.model.vocab_size = c.task.vocab_size;
  c.model.feature_dim = c.task.feature_dim();
  c.model.encoder_hidden = 16;
  c.model.prediction_embed_dim = 4;
  c.model.prediction_hidden = 16;
  c.model.joint_dim = 8;
  c.optimizer.lr = 0.01;
  c.optimizer.steps = 40;
  c.optimizer.batch_size = 4;
  c.eval_every = 10;
  c.seed = 5;
  PruneGroup g;
  g.tensors = {"encoder.recurrent", "prediction.recurrent"};
  g.schedule = SparsitySchedule{0.0, 0.75, 10, 30, 5};
  c.pruning.push_back(g);
  return c;
}

double mean_train_nll(const ModelParams& p, const Dataset& d, const Vocab& v) {
  double s = 0.0;
  const std::size_t n = std::min<std::size_t>(d.train.size(), 64);
  for (std::size_t i = 0; i < n; ++i) s += utterance_loss(p, d.train[i], v, std::nullopt);
  return s / static_cast<double>(n);
}

}  // namespace

TEST(Ter, EditDistance) {
  const std::vector<int> abc{1, 2, 3}, ac{1, 3};
  EXPECT_EQ(edit_distance(abc, ac), 1u);
  TerStats one;
  one.add(abc, ac);
  EXPECT_NEAR(one.rate(), 1.0 / 3.0, 1e-15);
  EXPECT_EQ(edit_distance(abc, abc), 0u);
  EXPECT_EQ(edit_distance(std::vector<int>{}, abc), 3u);
  EXPECT_EQ(edit_distance(std::vector<int>{1, 2, 3, 4}, std::vector<int>{2, 3, 4, 5}), 2u);

  TerStats all;
  all.add(abc, {});
  all.add(ac, {});
  EXPECT_EQ(all.rate(), 1.0);
  EXPECT_EQ(TerStats{}.rate(), 0.0);
}

TEST(GenData, NoiselessOneFramePerLabel) {
  SynthTaskSpec s;
  s.noise_stddev = 0.0;
  s.min_frames_per_label = s.max_frames_per_label = 1;
  s.size = 50;
  const Dataset d = gen_data(s);
  for (const Utterance& u : d.train) {
    ASSERT_EQ(u.features.rows(), u.labels.size());
    for (std::size_t t = 0; t < u.labels.size(); ++t) {
      for (std::size_t k = 0; k < u.features.cols(); ++k) {
        EXPECT_EQ(u.features(t, k), static_cast<int>(k) == u.labels[t] ? 1.0 : 0.0);
      }
    }
  }
}

TEST(GenData, DeterministicFilesAndSplit) {
  SynthTaskSpec s;
  s.size = 200;
  const fs::path a = scratch("data_a"), b = scratch("data_b");
  write_dataset(gen_data(s), s, a);
  write_dataset(gen_data(s), s, b);
  for (const char* f : {"train.jsonl", "dev.jsonl", "test.jsonl", "task.json"}) {
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
  const Dataset d = read_dataset(a);
  EXPECT_EQ(d.train.size(), 160u);
  EXPECT_EQ(d.dev.size(), 20u);
  EXPECT_EQ(d.test.size(), 20u);
  const Dataset mem = gen_data(s);
  for (std::size_t i = 0; i < d.test.size(); ++i) {
    EXPECT_EQ(d.test[i].labels, mem.test[i].labels);
    EXPECT_EQ(d.test[i].features, mem.test[i].features);
  }
  for (const Utterance& u : mem.train) {
    EXPECT_GE(u.labels.size(), 3u);
    EXPECT_LE(u.labels.size(), 6u);
    EXPECT_GE(u.features.rows(), 2 * u.labels.size());
    EXPECT_LE(u.features.rows(), 4 * u.labels.size());
    for (int l : u.labels) EXPECT_NE(l, 0);
  }
  s.seed = 8;
  write_dataset(gen_data(s), s, b);
  EXPECT_NE(slurp(a / "train.jsonl"), slurp(b / "train.jsonl"));
  EXPECT_THROW(d.split("validation"), InvalidInput);
}

TEST(GenData, InvalidSpec) {
  SynthTaskSpec s;
  s.min_length = 0;
  EXPECT_THROW(s.validate(), InvalidInput);
  s = SynthTaskSpec{};
  s.noise_stddev = -0.1;
  EXPECT_THROW(s.validate(), InvalidInput);
}

TEST(Selection, LowestTerEarliestOnTies) {
  std::vector<MetricsRecord> r(5);
  const double ter[] = {0.5, 0.2, 0.3, 0.2, 0.25};
  for (int i = 0; i < 5; ++i) {
    r[i].step = 100 * (i + 1);
    r[i].dev_ter = ter[i];
  }
  EXPECT_EQ(select_best(r, 0), 1u);
  EXPECT_EQ(select_best(r, 300), 3u);
  EXPECT_EQ(select_best(r, 500), 4u);
  EXPECT_FALSE(select_best(r, 501).has_value());
}

TEST(RunConfig, ShippedPresets) {
  const fs::path dir = fs::path(RNNTD_SOURCE_DIR) / "configs";
  const RunConfig teacher = load_run_config(dir / "teacher.json");
  EXPECT_TRUE(teacher.pruning.empty());
  const RunConfig sd = load_run_config(dir / "student-distill.json");
  EXPECT_EQ(sd.distill.beta, 1e-3);
  EXPECT_EQ(sd.beta_sweep, (std::vector<double>{1e-4, 3e-4, 1e-3, 3e-3, 1e-2}));
  for (const auto& [name, a, b, s] : {std::tuple{"prune60.json", 1, 2, 0.6},
                                      std::tuple{"prune90.json", 2, 4, 0.9}}) {
    const RunConfig c = load_run_config(dir / name);
    const std::int64_t steps = c.optimizer.steps;
    ASSERT_EQ(c.pruning.size(), 1u) << name;
    EXPECT_EQ(c.pruning[0].schedule.start_step, steps * a / 13) << name;
    EXPECT_EQ(c.pruning[0].schedule.end_step, steps * b / 13) << name;
    EXPECT_EQ(c.pruning[0].schedule.s_final, s) << name;
    EXPECT_EQ(c.distill.beta, 1e-3) << name;
    EXPECT_TRUE(c.init_from_teacher) << name;
    EXPECT_EQ(c.block, BlockShape{}) << name;
  }
  const RunConfig p90 = load_run_config(dir / "prune90.json");
  EXPECT_EQ(p90.model.joint_dim * 2, teacher.model.joint_dim);

  // round trip through JSON
  const RunConfig back = run_config_from_json(to_json(p90));
  EXPECT_EQ(to_json(back), to_json(p90));
  nlohmann::json bad = to_json(p90);
  bad["optimizer"]["steps"] = 0;
  EXPECT_THROW(run_config_from_json(bad), InvalidInput);
  EXPECT_THROW(load_run_config(dir / "missing.json"), InvalidInput);
}

TEST(Train, ReproducibleWithPruningTrace) {
  const RunConfig cfg = small_run();
  const Dataset data = gen_data(cfg.task);
  const fs::path a = scratch("run_a"), b = scratch("run_b");
  const TrainResult ra = run_train(cfg, data, std::nullopt, a);
  write_train_outputs(ra, a);
  const TrainResult rb = run_train(cfg, data, std::nullopt, b);
  write_train_outputs(rb, b);
  for (const char* f : {"checkpoint.json", "last.json", "metrics.jsonl", "mask_events.jsonl"}) {
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }

  ASSERT_EQ(ra.metrics.size(), 4u);
  for (std::size_t i = 0; i < ra.metrics.size(); ++i) {
    EXPECT_EQ(ra.metrics[i].step, static_cast<std::int64_t>(10 * (i + 1)));
  }
  std::istringstream lines(slurp(a / "metrics.jsonl"));
  std::string line;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    for (const char* k : {"step", "loss", "sparsity", "dev_ter", "backbone"}) EXPECT_TRUE(j.contains(k)) << k;
    EXPECT_EQ(j["backbone"], "toy-tanh-rnn");
    EXPECT_EQ(j["sparsity"].size(), 4u);
  }

  // every mask update lands within one block of the schedule
  const SparsitySchedule& s = cfg.pruning[0].schedule;
  ASSERT_FALSE(ra.mask_events.empty());
  for (const auto& e : ra.mask_events) {
    EXPECT_TRUE(s.is_update_step(e.step));
    EXPECT_EQ(e.target, target_sparsity(s, e.step));
    EXPECT_LE(std::abs(e.achieved - e.target), 1.0 / static_cast<double>(e.prunable_blocks));
  }
  // pruned weights are zero in both saved checkpoints
  for (const Checkpoint* c : {&ra.best, &ra.last}) {
    for (const auto& [name, mask] : c->masks) {
      const Matrix& w = tensor_by_name(c->params, name);
      for (std::size_t r = 0; r < w.rows(); ++r) {
        for (std::size_t col = 0; col < w.cols(); ++col) {
          if (!mask.kept(r, col)) EXPECT_EQ(w(r, col), 0.0);
        }
      }
    }
  }
  EXPECT_GE(ra.best.step, cfg.selection_start());
  EXPECT_EQ(ra.last.step, 40);
}

TEST(Train, PlainLossDecreasesOverFirstHundredSteps) {
  RunConfig cfg = load_run_config(fs::path(RNNTD_SOURCE_DIR) / "configs" / "teacher.json");
  const Dataset data = gen_data(cfg.task);
  cfg.optimizer.steps = 100;
  cfg.eval_every = 100;
  std::vector<double> drops;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    cfg.seed = seed;
    const double before = mean_train_nll(init_params(cfg.model, seed), data, cfg.model.vocab());
    const TrainResult r = run_train(cfg, data, std::nullopt, std::nullopt);
    drops.push_back(before - mean_train_nll(r.last.params, data, cfg.model.vocab()));
  }
  std::sort(drops.begin(), drops.end());
  EXPECT_GT(drops[2], 0.0);
}

TEST(Eval, CheckpointVocabMismatch) {
  const RunConfig cfg = small_run();
  Checkpoint c;
  c.config = cfg.model;
  c.params = init_params(cfg.model, 1);
  SynthTaskSpec other = cfg.task;
  other.vocab_size = 6;
  other.size = 20;
  EXPECT_THROW(run_eval(c, gen_data(other).test, 3), InvalidInput);
  const EvalReport r = run_eval(c, gen_data(cfg.task).test, 3);
  EXPECT_EQ(r.utterances.size(), gen_data(cfg.task).test.size());
  std::size_t refs = 0;
  for (const auto& u : r.utterances) refs += u.reference.size();
  EXPECT_EQ(refs, r.reference_tokens);
}
