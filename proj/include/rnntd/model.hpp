#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "rnntd/lattice.hpp"
#include "rnntd/matrix.hpp"

namespace rnntd {

struct ModelConfig {
  int vocab_size = 8;
  int feature_dim = 8;
  int encoder_hidden = 32;
  int prediction_embed_dim = 8;
  int prediction_hidden = 32;
  int joint_dim = 32;
  std::uint64_t seed = 1;

  void validate() const;
  Vocab vocab() const { return Vocab{vocab_size, 0}; }
  bool operator==(const ModelConfig&) const = default;
};

// Weights of the toy transducer:
//   encoder     z_t = tanh(enc_in x_t + enc_rec z_{t-1} + enc_bias)
//   prediction  p_u = tanh(pred_in E[s_u] + pred_rec p_{u-1} + pred_bias),
//               s_0 = start symbol (embedding row K), s_u = l_u
//   joint       h[t][u] = out tanh(enc_proj z_t + pred_proj p_u + joint_bias) + out_bias
// Bias vectors are stored as n x 1 matrices.
struct ModelParams {
  Matrix enc_in, enc_rec, enc_bias;
  Matrix embedding, pred_in, pred_rec, pred_bias;
  Matrix enc_proj, pred_proj, joint_bias, out, out_bias;

  // Visits every tensor with its stable name, in a fixed order.
  template <class Fn>
  void visit(Fn&& fn);
  template <class Fn>
  void visit(Fn&& fn) const;

  // Zero tensors with the shapes of cfg.
  static ModelParams zeros(const ModelConfig& cfg);
  ModelParams zeros_like() const;

  std::size_t parameter_count() const;
  bool operator==(const ModelParams&) const = default;
};

// Names of the matrices that take part in pruning.
const std::vector<std::string>& prunable_tensor_names();

Matrix& tensor_by_name(ModelParams& params, std::string_view name);
const Matrix& tensor_by_name(const ModelParams& params, std::string_view name);

// Seeded uniform(-0.08, 0.08) initialization of every tensor.
ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed);

// Activations kept from the forward pass for backpropagation.
struct ForwardCache {
  Matrix features;         // T x F
  Matrix enc_states;       // T x E
  std::vector<int> pred_tokens;  // L+1 prediction inputs, first is the start symbol
  Matrix pred_states;      // (L+1) x P
  Matrix enc_projected;    // T x J
  Matrix pred_projected;   // (L+1) x J
  std::vector<double> joint_hidden;  // T x (L+1) x J
};

struct ForwardResult {
  LogitLattice logits;
  ForwardCache cache;
};

// Throws ShapeError when the features do not have feature_dim columns or T = 0.
ForwardResult forward_lattice(const ModelParams& params, const Matrix& features,
                              const TargetSequence& target);

// Gradient of a scalar loss with respect to every parameter, given its
// gradient with respect to the logits.
ModelParams backward_params(const ModelParams& params, const ForwardCache& cache,
                            const LatticeGrad& lattice_grad);

struct InitReport {
  std::vector<std::string> copied;
  std::vector<std::string> reinitialized;
};

struct StudentInit {
  ModelParams params;
  InitReport report;
};

// Copies every teacher tensor whose shape matches the student's; the rest
// keep their fresh seeded values. Throws InvalidInput on vocab mismatch.
StudentInit init_student_from_teacher(const ModelConfig& teacher_cfg,
                                      const ModelParams& teacher, const ModelConfig& student_cfg,
                                      std::uint64_t seed);

struct MomentumState {
  ModelParams velocity;
};

MomentumState make_momentum_state(const ModelParams& like);

// v = momentum * v + g; w -= lr * v. Throws NumericalError naming the first
// non-finite gradient entry, leaving params untouched.
void sgd_step(ModelParams& params, const ModelParams& grads, double lr, double momentum,
              MomentumState& state);

// Greedy transducer decoding: per frame, emit argmax tokens until blank or
// max_symbols_per_frame emissions, then advance.
std::vector<int> decode_greedy(const ModelParams& params, const Matrix& features,
                               int max_symbols_per_frame);

template <class Fn>
void ModelParams::visit(Fn&& fn) {
  fn("encoder.input", enc_in);
  fn("encoder.recurrent", enc_rec);
  fn("encoder.bias", enc_bias);
  fn("prediction.embedding", embedding);
  fn("prediction.input", pred_in);
  fn("prediction.recurrent", pred_rec);
  fn("prediction.bias", pred_bias);
  fn("joint.encoder_proj", enc_proj);
  fn("joint.prediction_proj", pred_proj);
  fn("joint.bias", joint_bias);
  fn("joint.output", out);
  fn("joint.output_bias", out_bias);
}

template <class Fn>
void ModelParams::visit(Fn&& fn) const {
  const_cast<ModelParams*>(this)->visit(
      [&](const char* name, const Matrix& m) { fn(name, m); });
}

}  // namespace rnntd
