#include "rnntd/model.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "rnntd/error.hpp"
#include "rnntd/kernels.hpp"

namespace rnntd {

void ModelConfig::validate() const {
  if (vocab_size < 2) throw InvalidInput("vocab_size must be >= 2");
  if (feature_dim < 1 || encoder_hidden < 1 || prediction_embed_dim < 1 ||
      prediction_hidden < 1 || joint_dim < 1) {
    throw InvalidInput("model dimensions must be >= 1");
  }
}

ModelParams ModelParams::zeros(const ModelConfig& cfg) {
  cfg.validate();
  const auto K = static_cast<std::size_t>(cfg.vocab_size);
  const auto F = static_cast<std::size_t>(cfg.feature_dim);
  const auto E = static_cast<std::size_t>(cfg.encoder_hidden);
  const auto D = static_cast<std::size_t>(cfg.prediction_embed_dim);
  const auto P = static_cast<std::size_t>(cfg.prediction_hidden);
  const auto J = static_cast<std::size_t>(cfg.joint_dim);
  ModelParams p;
  p.enc_in = Matrix(E, F);
  p.enc_rec = Matrix(E, E);
  p.enc_bias = Matrix(E, 1);
  p.embedding = Matrix(K + 1, D);
  p.pred_in = Matrix(P, D);
  p.pred_rec = Matrix(P, P);
  p.pred_bias = Matrix(P, 1);
  p.enc_proj = Matrix(J, E);
  p.pred_proj = Matrix(J, P);
  p.joint_bias = Matrix(J, 1);
  p.out = Matrix(K, J);
  p.out_bias = Matrix(K, 1);
  return p;
}

ModelParams ModelParams::zeros_like() const {
  ModelParams z = *this;
  z.visit([](const char*, Matrix& m) { m.fill(0.0); });
  return z;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  visit([&](const char*, const Matrix& m) { n += m.size(); });
  return n;
}

const std::vector<std::string>& prunable_tensor_names() {
  static const std::vector<std::string> names{"encoder.input", "encoder.recurrent",
                                              "prediction.input", "prediction.recurrent"};
  return names;
}

Matrix& tensor_by_name(ModelParams& params, std::string_view name) {
  Matrix* found = nullptr;
  params.visit([&](const char* n, Matrix& m) {
    if (name == n) found = &m;
  });
  if (found == nullptr) throw InvalidInput("unknown tensor name: " + std::string(name));
  return *found;
}

const Matrix& tensor_by_name(const ModelParams& params, std::string_view name) {
  return tensor_by_name(const_cast<ModelParams&>(params), name);
}

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
  ModelParams p = ModelParams::zeros(cfg);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-0.08, 0.08);
  p.visit([&](const char*, Matrix& m) {
    for (double& v : m.values()) v = dist(rng);
  });
  return p;
}

namespace {

void tanh_inplace(std::span<double> v) {
  for (double& x : v) x = std::tanh(x);
}

void add_inplace(std::span<double> y, std::span<const double> x) {
  kernels::active().axpy(1.0, x.data(), y.data(), y.size());
}

// One prediction-network step from `prev` after consuming `token`.
void prediction_step(const ModelParams& p, int token, std::span<const double> prev,
                     std::span<double> out) {
  std::copy(p.pred_bias.values().begin(), p.pred_bias.values().end(), out.begin());
  gemv_acc(p.pred_in, p.embedding.row(static_cast<std::size_t>(token)), out);
  gemv_acc(p.pred_rec, prev, out);
  tanh_inplace(out);
}

Matrix run_encoder(const ModelParams& p, const Matrix& features) {
  const std::size_t T = features.rows();
  const std::size_t E = p.enc_in.rows();
  Matrix states(T, E);
  std::vector<double> zero(E, 0.0);
  for (std::size_t f = 0; f < T; ++f) {
    auto z = states.row(f);
    std::copy(p.enc_bias.values().begin(), p.enc_bias.values().end(), z.begin());
    gemv_acc(p.enc_in, features.row(f), z);
    gemv_acc(p.enc_rec, f > 0 ? std::span<const double>(states.row(f - 1)) : zero, z);
    tanh_inplace(z);
  }
  return states;
}

void check_features(const ModelParams& p, const Matrix& features) {
  if (features.rows() == 0) throw ShapeError("need at least one feature frame");
  if (features.cols() != p.enc_in.cols()) {
    std::ostringstream msg;
    msg << "features have dimension " << features.cols() << ", model expects "
        << p.enc_in.cols();
    throw ShapeError(msg.str());
  }
}

void joint_logits(const ModelParams& p, std::span<const double> enc_projected,
                  std::span<const double> pred_projected, std::span<double> hidden,
                  std::span<double> logits) {
  for (std::size_t j = 0; j < hidden.size(); ++j) {
    hidden[j] = std::tanh(enc_projected[j] + pred_projected[j] + p.joint_bias.values()[j]);
  }
  std::copy(p.out_bias.values().begin(), p.out_bias.values().end(), logits.begin());
  gemv_acc(p.out, hidden, logits);
}

}  // namespace

ForwardResult forward_lattice(const ModelParams& p, const Matrix& features,
                              const TargetSequence& target) {
  check_features(p, features);
  const std::size_t K = p.out.rows();
  if (static_cast<std::size_t>(target.vocab().size) != K) {
    throw ShapeError("target vocab does not match model vocab");
  }
  const std::size_t T = features.rows();
  const std::size_t U = target.rows();
  const std::size_t P = p.pred_rec.rows();
  const std::size_t J = p.enc_proj.rows();

  ForwardResult res;
  ForwardCache& c = res.cache;
  c.features = features;
  c.enc_states = run_encoder(p, features);

  c.pred_tokens.reserve(U);
  c.pred_tokens.push_back(static_cast<int>(K));
  for (int l : target.labels()) c.pred_tokens.push_back(l);
  c.pred_states = Matrix(U, P);
  std::vector<double> zero(P, 0.0);
  for (std::size_t u = 0; u < U; ++u) {
    prediction_step(p, c.pred_tokens[u],
                    u > 0 ? std::span<const double>(c.pred_states.row(u - 1)) : zero,
                    c.pred_states.row(u));
  }

  c.enc_projected = Matrix(T, J);
  for (std::size_t f = 0; f < T; ++f) gemv_acc(p.enc_proj, c.enc_states.row(f), c.enc_projected.row(f));
  c.pred_projected = Matrix(U, J);
  for (std::size_t u = 0; u < U; ++u) {
    gemv_acc(p.pred_proj, c.pred_states.row(u), c.pred_projected.row(u));
  }

  c.joint_hidden.assign(T * U * J, 0.0);
  res.logits = LogitLattice(T, U, K);
  for (std::size_t f = 0; f < T; ++f) {
    for (std::size_t u = 0; u < U; ++u) {
      std::span<double> hidden(c.joint_hidden.data() + (f * U + u) * J, J);
      joint_logits(p, c.enc_projected.row(f), c.pred_projected.row(u), hidden,
                   res.logits.node(f, u));
    }
  }
  return res;
}

ModelParams backward_params(const ModelParams& p, const ForwardCache& c,
                            const LatticeGrad& lattice_grad) {
  const std::size_t T = c.enc_states.rows();
  const std::size_t U = c.pred_states.rows();
  const std::size_t E = p.enc_rec.rows();
  const std::size_t P = p.pred_rec.rows();
  const std::size_t J = p.enc_proj.rows();
  if (!lattice_grad.same_shape(T, U, p.out.rows())) {
    throw ShapeError("lattice gradient does not match the forward pass");
  }
  const auto& kern = kernels::active();

  ModelParams g = p.zeros_like();
  Matrix d_enc_proj(T, J);
  Matrix d_pred_proj(U, J);
  std::vector<double> d_hidden(J);
  std::vector<double> d_pre(J);

  // Joint network.
  for (std::size_t f = 0; f < T; ++f) {
    for (std::size_t u = 0; u < U; ++u) {
      const auto node_grad = lattice_grad.node(f, u);
      std::span<const double> hidden(c.joint_hidden.data() + (f * U + u) * J, J);
      outer_acc(node_grad, hidden, g.out);
      add_inplace(g.out_bias.values(), node_grad);
      std::fill(d_hidden.begin(), d_hidden.end(), 0.0);
      gemv_t_acc(p.out, node_grad, d_hidden);
      kern.tanh_backward(d_hidden.data(), hidden.data(), d_pre.data(), J);
      add_inplace(g.joint_bias.values(), d_pre);
      add_inplace(d_enc_proj.row(f), d_pre);
      add_inplace(d_pred_proj.row(u), d_pre);
    }
  }

  // Encoder: projection, then backpropagation through time.
  Matrix d_enc_states(T, E);
  for (std::size_t f = 0; f < T; ++f) {
    outer_acc(d_enc_proj.row(f), c.enc_states.row(f), g.enc_proj);
    gemv_t_acc(p.enc_proj, d_enc_proj.row(f), d_enc_states.row(f));
  }
  std::vector<double> carry(E, 0.0);
  std::vector<double> d_pre_e(E);
  for (std::size_t f = T; f-- > 0;) {
    auto dz = d_enc_states.row(f);
    add_inplace(dz, carry);
    kern.tanh_backward(dz.data(), c.enc_states.row(f).data(), d_pre_e.data(), E);
    add_inplace(g.enc_bias.values(), d_pre_e);
    outer_acc(d_pre_e, c.features.row(f), g.enc_in);
    std::fill(carry.begin(), carry.end(), 0.0);
    if (f > 0) {
      outer_acc(d_pre_e, c.enc_states.row(f - 1), g.enc_rec);
      gemv_t_acc(p.enc_rec, d_pre_e, carry);
    }
  }

  // Prediction network.
  Matrix d_pred_states(U, P);
  for (std::size_t u = 0; u < U; ++u) {
    outer_acc(d_pred_proj.row(u), c.pred_states.row(u), g.pred_proj);
    gemv_t_acc(p.pred_proj, d_pred_proj.row(u), d_pred_states.row(u));
  }
  std::vector<double> carry_p(P, 0.0);
  std::vector<double> d_pre_p(P);
  for (std::size_t u = U; u-- > 0;) {
    auto dp = d_pred_states.row(u);
    add_inplace(dp, carry_p);
    kern.tanh_backward(dp.data(), c.pred_states.row(u).data(), d_pre_p.data(), P);
    add_inplace(g.pred_bias.values(), d_pre_p);
    const auto token = static_cast<std::size_t>(c.pred_tokens[u]);
    outer_acc(d_pre_p, p.embedding.row(token), g.pred_in);
    gemv_t_acc(p.pred_in, d_pre_p, g.embedding.row(token));
    std::fill(carry_p.begin(), carry_p.end(), 0.0);
    if (u > 0) {
      outer_acc(d_pre_p, c.pred_states.row(u - 1), g.pred_rec);
      gemv_t_acc(p.pred_rec, d_pre_p, carry_p);
    }
  }
  return g;
}

StudentInit init_student_from_teacher(const ModelConfig& teacher_cfg,
                                      const ModelParams& teacher, const ModelConfig& student_cfg,
                                      std::uint64_t seed) {
  if (teacher_cfg.vocab_size != student_cfg.vocab_size) {
    throw InvalidInput("teacher and student vocab sizes differ");
  }
  StudentInit out{init_params(student_cfg, seed), {}};
  out.params.visit([&](const char* name, Matrix& m) {
    const Matrix& src = tensor_by_name(teacher, name);
    if (src.same_shape(m)) {
      m = src;
      out.report.copied.emplace_back(name);
    } else {
      out.report.reinitialized.emplace_back(name);
    }
  });
  return out;
}

MomentumState make_momentum_state(const ModelParams& like) { return {like.zeros_like()}; }

void sgd_step(ModelParams& params, const ModelParams& grads, double lr, double momentum,
              MomentumState& state) {
  grads.visit([&](const char* name, const Matrix& g) {
    const auto v = g.values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!std::isfinite(v[i])) {
        std::ostringstream msg;
        msg << "non-finite gradient in " << name << " at flat index " << i;
        throw NumericalError(msg.str());
      }
    }
  });
  params.visit([&](const char* name, Matrix& w) {
    const auto g = tensor_by_name(grads, name).values();
    auto vel = tensor_by_name(state.velocity, name).values();
    auto wv = w.values();
    for (std::size_t i = 0; i < wv.size(); ++i) {
      vel[i] = momentum * vel[i] + g[i];
      wv[i] -= lr * vel[i];
    }
  });
}

std::vector<int> decode_greedy(const ModelParams& p, const Matrix& features,
                               int max_symbols_per_frame) {
  if (max_symbols_per_frame < 1) throw InvalidInput("max_symbols_per_frame must be >= 1");
  check_features(p, features);
  const std::size_t K = p.out.rows();
  const std::size_t P = p.pred_rec.rows();
  const std::size_t J = p.enc_proj.rows();
  const Matrix enc = run_encoder(p, features);

  std::vector<double> state(P, 0.0);
  std::vector<double> next(P);
  prediction_step(p, static_cast<int>(K), std::vector<double>(P, 0.0), state);
  std::vector<double> pred_projected(J, 0.0);
  gemv_acc(p.pred_proj, state, pred_projected);

  std::vector<double> enc_projected(J);
  std::vector<double> hidden(J);
  std::vector<double> logits(K);
  std::vector<int> out;
  for (std::size_t f = 0; f < enc.rows(); ++f) {
    std::fill(enc_projected.begin(), enc_projected.end(), 0.0);
    gemv_acc(p.enc_proj, enc.row(f), enc_projected);
    for (int emitted = 0; emitted < max_symbols_per_frame; ++emitted) {
      joint_logits(p, enc_projected, pred_projected, hidden, logits);
      std::size_t best = 0;
      for (std::size_t k = 1; k < K; ++k) {
        if (logits[k] > logits[best]) best = k;
      }
      if (best == 0) break;
      out.push_back(static_cast<int>(best));
      prediction_step(p, static_cast<int>(best), state, next);
      state.swap(next);
      std::fill(pred_projected.begin(), pred_projected.end(), 0.0);
      gemv_acc(p.pred_proj, state, pred_projected);
    }
  }
  return out;
}

}  // namespace rnntd
