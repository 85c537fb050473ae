#include "rnntd/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "rnntd/error.hpp"
#include "rnntd/rnnt_loss.hpp"
#include "rnntd/ter.hpp"

namespace rnntd {

using nlohmann::json;

void RunConfig::validate() const {
  task.validate();
  model.validate();
  distill.validate();
  if (model.vocab_size != task.vocab_size) throw InvalidInput("model and task vocab sizes differ");
  if (model.feature_dim != task.feature_dim()) {
    throw InvalidInput("model feature_dim must equal the task feature dimension");
  }
  if (optimizer.steps < 1) throw InvalidInput("optimizer.steps must be >= 1");
  if (optimizer.batch_size < 1) throw InvalidInput("optimizer.batch_size must be >= 1");
  if (!(optimizer.lr > 0.0)) throw InvalidInput("optimizer.lr must be > 0");
  if (optimizer.momentum < 0.0 || optimizer.momentum >= 1.0) {
    throw InvalidInput("optimizer.momentum must lie in [0, 1)");
  }
  if (optimizer.warmup < 0 || optimizer.clip_norm < 0.0) {
    throw InvalidInput("optimizer.warmup and clip_norm must be >= 0");
  }
  if (eval_every < 1) throw InvalidInput("eval_every must be >= 1");
  if (max_symbols_per_frame < 1) throw InvalidInput("max_symbols_per_frame must be >= 1");
  const auto& allowed = prunable_tensor_names();
  for (const PruneGroup& g : pruning) {
    g.schedule.validate();
    for (const std::string& name : g.tensors) {
      if (std::find(allowed.begin(), allowed.end(), name) == allowed.end()) {
        throw InvalidInput("tensor " + name + " is not prunable");
      }
    }
  }
}

std::int64_t RunConfig::selection_start() const {
  if (select_after_step >= 0) return select_after_step;
  std::int64_t s = 0;
  for (const PruneGroup& g : pruning) s = std::max(s, g.schedule.end_step);
  return s;
}

json to_json(const RunConfig& c) {
  json groups = json::array();
  for (const PruneGroup& g : c.pruning) {
    groups.push_back(json{{"tensors", g.tensors},
                          {"s_initial", g.schedule.s_initial},
                          {"s_final", g.schedule.s_final},
                          {"start_step", g.schedule.start_step},
                          {"end_step", g.schedule.end_step},
                          {"update_interval", g.schedule.update_interval}});
  }
  return json{{"task", to_json(c.task)},
              {"data_dir", c.data_dir},
              {"model", to_json(c.model)},
              {"optimizer",
               {{"lr", c.optimizer.lr},
                {"momentum", c.optimizer.momentum},
                {"warmup", c.optimizer.warmup},
                {"steps", c.optimizer.steps},
                {"batch_size", c.optimizer.batch_size},
                {"clip_norm", c.optimizer.clip_norm}}},
              {"distill", {{"beta", c.distill.beta}, {"mode", to_string(c.distill.mode)}}},
              {"beta_sweep", c.beta_sweep},
              {"init_from_teacher", c.init_from_teacher},
              {"pruning", groups},
              {"block", {c.block.rows, c.block.cols}},
              {"eval_every", c.eval_every},
              {"select_after_step", c.select_after_step},
              {"max_symbols_per_frame", c.max_symbols_per_frame},
              {"seed", c.seed},
              {"backbone", kBackboneLabel}};
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  c.task = synth_task_from_json(j.at("task"));
  c.data_dir = j.value("data_dir", std::string{});
  c.model = model_config_from_json(j.at("model"));
  const json& o = j.at("optimizer");
  c.optimizer.lr = o.at("lr").get<double>();
  c.optimizer.momentum = o.value("momentum", 0.9);
  c.optimizer.warmup = o.value("warmup", std::int64_t{0});
  c.optimizer.steps = o.at("steps").get<std::int64_t>();
  c.optimizer.batch_size = o.at("batch_size").get<int>();
  c.optimizer.clip_norm = o.value("clip_norm", 0.0);
  if (j.contains("distill")) {
    const json& d = j.at("distill");
    c.distill.beta = d.value("beta", 1e-3);
    c.distill.mode = parse_distill_mode(d.value("mode", std::string("coarse")));
  }
  c.beta_sweep = j.value("beta_sweep", std::vector<double>{});
  c.init_from_teacher = j.value("init_from_teacher", false);
  for (const json& g : j.value("pruning", json::array())) {
    PruneGroup group;
    group.tensors = g.at("tensors").get<std::vector<std::string>>();
    group.schedule.s_initial = g.value("s_initial", 0.0);
    group.schedule.s_final = g.at("s_final").get<double>();
    group.schedule.start_step = g.at("start_step").get<std::int64_t>();
    group.schedule.end_step = g.at("end_step").get<std::int64_t>();
    group.schedule.update_interval = g.value("update_interval", std::int64_t{1});
    c.pruning.push_back(std::move(group));
  }
  if (j.contains("block")) {
    const auto b = j.at("block").get<std::vector<std::size_t>>();
    if (b.size() != 2) throw InvalidInput("block must be [rows, cols]");
    c.block = BlockShape{b[0], b[1]};
  }
  c.eval_every = j.value("eval_every", std::int64_t{100});
  c.select_after_step = j.value("select_after_step", std::int64_t{-1});
  c.max_symbols_per_frame = j.value("max_symbols_per_frame", 3);
  c.seed = j.value("seed", std::uint64_t{1});
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw InvalidInput("cannot read config " + path.string());
  try {
    return run_config_from_json(json::parse(is));
  } catch (const json::exception& e) {
    throw InvalidInput("malformed config " + path.string() + ": " + e.what());
  }
}

json to_json(const MetricsRecord& r) {
  return json{{"step", r.step},
              {"loss", {{"rnnt", r.rnnt_loss}, {"distill", r.distill_loss}, {"total", r.total_loss}}},
              {"sparsity", r.sparsity},
              {"dev_ter", r.dev_ter},
              {"backbone", kBackboneLabel}};
}

namespace {

bool distilling(const std::optional<TeacherModel>& teacher) {
  return teacher.has_value() && teacher->params != nullptr && teacher->distill.beta > 0.0;
}

// Student lattice gradient for one utterance plus the two loss terms.
struct LatticeTerms {
  double nll = 0.0;
  double distill = 0.0;
  ForwardResult forward;
  LatticeGrad grad;
};

LatticeTerms lattice_terms(const ModelParams& student, const Utterance& utt, const Vocab& vocab,
                           const std::optional<TeacherModel>& teacher, bool want_grad) {
  const TargetSequence target(vocab, utt.labels);
  LatticeTerms out;
  out.forward = forward_lattice(student, utt.features, target);
  RnntLoss rnnt = rnnt_loss(out.forward.logits, target);
  out.nll = rnnt.nll;
  if (want_grad) out.grad = std::move(rnnt.grad);
  if (distilling(teacher)) {
    const ForwardResult t = forward_lattice(*teacher->params, utt.features, target);
    const TeacherLattice tl = make_teacher_lattice(t.logits, target, teacher->distill.mode);
    DistillTerm d = distill_loss_and_grad(tl, rnnt.log_probs, target);
    out.distill = d.value;
    if (want_grad) {
      auto g = out.grad.values();
      const auto dg = d.grad.values();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += teacher->distill.beta * dg[i];
    }
  }
  return out;
}

}  // namespace

UtteranceGrad utterance_gradients(const ModelParams& student, const Utterance& utt,
                                  const Vocab& vocab,
                                  const std::optional<TeacherModel>& teacher) {
  LatticeTerms terms = lattice_terms(student, utt, vocab, teacher, true);
  return UtteranceGrad{terms.nll, terms.distill,
                       backward_params(student, terms.forward.cache, terms.grad)};
}

double utterance_loss(const ModelParams& student, const Utterance& utt, const Vocab& vocab,
                      const std::optional<TeacherModel>& teacher) {
  const LatticeTerms terms = lattice_terms(student, utt, vocab, teacher, false);
  const double beta = distilling(teacher) ? teacher->distill.beta : 0.0;
  return terms.nll + beta * terms.distill;
}

EvalReport run_eval(const ModelParams& params, const std::vector<Utterance>& utts,
                    int max_symbols_per_frame) {
  EvalReport report;
  TerStats stats;
  for (const Utterance& u : utts) {
    UtteranceReport r;
    r.reference = u.labels;
    r.hypothesis = decode_greedy(params, u.features, max_symbols_per_frame);
    r.edits = edit_distance(r.reference, r.hypothesis);
    stats.errors += r.edits;
    stats.reference_tokens += r.reference.size();
    report.utterances.push_back(std::move(r));
  }
  report.errors = stats.errors;
  report.reference_tokens = stats.reference_tokens;
  report.ter = stats.rate();
  return report;
}

EvalReport run_eval(const Checkpoint& ckpt, const std::vector<Utterance>& utts,
                    int max_symbols_per_frame) {
  for (const Utterance& u : utts) {
    for (int l : u.labels) {
      if (l <= 0 || l >= ckpt.config.vocab_size) {
        throw InvalidInput("dataset label outside the checkpoint vocab");
      }
    }
    if (u.features.cols() != static_cast<std::size_t>(ckpt.config.feature_dim)) {
      throw InvalidInput("dataset feature dimension differs from the checkpoint");
    }
  }
  return run_eval(ckpt.params, utts, max_symbols_per_frame);
}

std::optional<std::size_t> select_best(const std::vector<MetricsRecord>& records,
                                       std::int64_t min_step) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].step < min_step) continue;
    if (!best || records[i].dev_ter < records[*best].dev_ter) best = i;
  }
  return best;
}

namespace {

void scale(ModelParams& g, double s) {
  g.visit([&](const char*, Matrix& m) {
    for (double& v : m.values()) v *= s;
  });
}

void accumulate(ModelParams& acc, const ModelParams& g) {
  acc.visit([&](const char* name, Matrix& m) {
    const auto src = tensor_by_name(g, name).values();
    auto dst = m.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  });
}

double global_norm(const ModelParams& g) {
  double s = 0.0;
  g.visit([&](const char*, const Matrix& m) {
    for (double v : m.values()) s += v * v;
  });
  return std::sqrt(s);
}

Checkpoint make_checkpoint(const RunConfig& cfg, const ModelParams& params,
                           const std::map<std::string, BlockMask>& masks, std::int64_t step) {
  Checkpoint c;
  c.config = cfg.model;
  c.params = params;
  c.masks = masks;
  c.step = step;
  return c;
}

// Cycles through a freshly shuffled permutation of the training set each
// epoch.
class BatchSampler {
 public:
  BatchSampler(std::size_t n, std::uint64_t seed) : rng_(seed), order_(n) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    pos_ = n;
  }

  std::size_t next() {
    if (pos_ == order_.size()) {
      std::shuffle(order_.begin(), order_.end(), rng_);
      pos_ = 0;
    }
    return order_[pos_++];
  }

 private:
  std::mt19937_64 rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_;
};

}  // namespace

TrainResult run_train(const RunConfig& cfg, const Dataset& data,
                      const std::optional<Checkpoint>& teacher,
                      const std::optional<std::filesystem::path>& out_dir) {
  cfg.validate();
  if (data.train.empty() || data.dev.empty()) throw InvalidInput("dataset needs train and dev utterances");
  if (cfg.init_from_teacher && !teacher) throw InvalidInput("init_from_teacher needs a teacher checkpoint");
  if (teacher) {
    if (teacher->config.vocab_size != cfg.model.vocab_size ||
        teacher->config.feature_dim != cfg.model.feature_dim) {
      throw InvalidInput("teacher vocab or feature dimension differs from the student");
    }
  }

  const auto clock_start = std::chrono::steady_clock::now();
  TrainResult result;
  const Vocab vocab = cfg.model.vocab();

  ModelParams params;
  if (cfg.init_from_teacher) {
    StudentInit init = init_student_from_teacher(teacher->config, teacher->params, cfg.model, cfg.seed);
    params = std::move(init.params);
    result.init_report = std::move(init.report);
  } else {
    params = init_params(cfg.model, cfg.seed);
    params.visit([&](const char* name, Matrix&) { result.init_report.reinitialized.emplace_back(name); });
  }

  std::optional<TeacherModel> teacher_model;
  if (teacher && cfg.distill.beta > 0.0) teacher_model = TeacherModel{&teacher->params, cfg.distill};

  std::map<std::string, BlockMask> masks;
  for (const PruneGroup& g : cfg.pruning) {
    for (const std::string& name : g.tensors) {
      const Matrix& w = tensor_by_name(params, name);
      masks.emplace(name, BlockMask(BlockGrid(w.rows(), w.cols(), cfg.block)));
    }
  }

  MomentumState momentum = make_momentum_state(params);
  BatchSampler sampler(data.train.size(), cfg.seed ^ 0x5eed5eed5eedULL);
  const std::int64_t selection_start = cfg.selection_start();
  std::optional<Checkpoint> best;
  double best_ter = 0.0;

  double sum_nll = 0.0;
  double sum_distill = 0.0;
  std::int64_t steps_since_eval = 0;
  const double inv_batch = 1.0 / cfg.optimizer.batch_size;

  for (std::int64_t step = 1; step <= cfg.optimizer.steps; ++step) {
    ModelParams grads = params.zeros_like();
    double batch_nll = 0.0;
    double batch_distill = 0.0;
    for (int b = 0; b < cfg.optimizer.batch_size; ++b) {
      const Utterance& utt = data.train[sampler.next()];
      UtteranceGrad ug = utterance_gradients(params, utt, vocab, teacher_model);
      batch_nll += ug.nll;
      batch_distill += ug.distill;
      accumulate(grads, ug.grads);
    }
    batch_nll *= inv_batch;
    batch_distill *= inv_batch;
    scale(grads, inv_batch);

    const double beta = teacher_model ? cfg.distill.beta : 0.0;
    if (!std::isfinite(batch_nll) || !std::isfinite(batch_distill)) {
      if (out_dir) save_checkpoint(make_checkpoint(cfg, params, masks, step - 1), *out_dir / "last_good.json");
      std::ostringstream msg;
      msg << "non-finite loss at step " << step << " (rnnt " << batch_nll << ", distill "
          << batch_distill << ")";
      throw NumericalError(msg.str());
    }
    if (cfg.optimizer.clip_norm > 0.0) {
      const double norm = global_norm(grads);
      if (norm > cfg.optimizer.clip_norm) scale(grads, cfg.optimizer.clip_norm / norm);
    }

    // Saliency uses the gradient of the loss actually being optimized.
    for (const PruneGroup& g : cfg.pruning) {
      if (!g.schedule.is_update_step(step)) continue;
      const double target = target_sparsity(g.schedule, step);
      for (const std::string& name : g.tensors) {
        const SaliencyScore s =
            block_saliency(tensor_by_name(params, name), tensor_by_name(grads, name), cfg.block);
        BlockMask mask = update_mask(s, target);
        result.mask_events.push_back({step, name, target, mask.block_sparsity(),
                                      mask.grid().prunable_count()});
        masks.insert_or_assign(name, std::move(mask));
      }
    }

    double lr = cfg.optimizer.lr;
    if (cfg.optimizer.warmup > 0 && step < cfg.optimizer.warmup) {
      lr *= static_cast<double>(step) / static_cast<double>(cfg.optimizer.warmup);
    }
    sgd_step(params, grads, lr, cfg.optimizer.momentum, momentum);
    for (const auto& [name, mask] : masks) apply_mask_inplace(tensor_by_name(params, name), mask);

    sum_nll += batch_nll;
    sum_distill += batch_distill;
    ++steps_since_eval;

    if (step % cfg.eval_every == 0 || step == cfg.optimizer.steps) {
      MetricsRecord rec;
      rec.step = step;
      rec.rnnt_loss = sum_nll / static_cast<double>(steps_since_eval);
      rec.distill_loss = sum_distill / static_cast<double>(steps_since_eval);
      rec.total_loss = rec.rnnt_loss + beta * rec.distill_loss;
      for (const std::string& name : prunable_tensor_names()) {
        const auto it = masks.find(name);
        rec.sparsity[name] = it == masks.end() ? 0.0 : it->second.block_sparsity();
      }
      rec.dev_ter = run_eval(params, data.dev, cfg.max_symbols_per_frame).ter;
      if (step >= selection_start && (!best || rec.dev_ter < best_ter)) {
        best = make_checkpoint(cfg, params, masks, step);
        best_ter = rec.dev_ter;
      }
      result.metrics.push_back(std::move(rec));
      result.wall_times.emplace_back(
          step, std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_start).count());
      sum_nll = 0.0;
      sum_distill = 0.0;
      steps_since_eval = 0;
    }
  }

  result.last = make_checkpoint(cfg, params, masks, cfg.optimizer.steps);
  result.best = best ? std::move(*best) : result.last;
  return result;
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
}

}  // namespace

void write_train_outputs(const TrainResult& r, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  save_checkpoint(r.best, out_dir / "checkpoint.json");
  save_checkpoint(r.last, out_dir / "last.json");
  std::string metrics;
  for (const MetricsRecord& m : r.metrics) metrics += to_json(m).dump() + "\n";
  write_text(out_dir / "metrics.jsonl", metrics);
  std::string events;
  for (const auto& e : r.mask_events) {
    events += json{{"step", e.step},
                   {"tensor", e.tensor},
                   {"target", e.target},
                   {"achieved", e.achieved},
                   {"prunable_blocks", e.prunable_blocks}}
                  .dump() +
              "\n";
  }
  write_text(out_dir / "mask_events.jsonl", events);
  write_text(out_dir / "init_report.json",
             json{{"copied", r.init_report.copied}, {"reinitialized", r.init_report.reinitialized}}
                     .dump(2) +
                 "\n");
  std::string timing;
  for (const auto& [step, secs] : r.wall_times) {
    timing += json{{"step", step}, {"wall_time_s", secs}}.dump() + "\n";
  }
  write_text(out_dir / "timing.jsonl", timing);
}

}  // namespace rnntd
