#include "rnntd/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "rnntd/error.hpp"

namespace rnntd {

using nlohmann::json;

json to_json(const ModelConfig& cfg) {
  return json{{"vocab_size", cfg.vocab_size},
              {"feature_dim", cfg.feature_dim},
              {"encoder_hidden", cfg.encoder_hidden},
              {"prediction_embed_dim", cfg.prediction_embed_dim},
              {"prediction_hidden", cfg.prediction_hidden},
              {"joint_dim", cfg.joint_dim},
              {"seed", cfg.seed}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig cfg;
  cfg.vocab_size = j.at("vocab_size").get<int>();
  cfg.feature_dim = j.at("feature_dim").get<int>();
  cfg.encoder_hidden = j.at("encoder_hidden").get<int>();
  cfg.prediction_embed_dim = j.at("prediction_embed_dim").get<int>();
  cfg.prediction_hidden = j.at("prediction_hidden").get<int>();
  cfg.joint_dim = j.at("joint_dim").get<int>();
  cfg.seed = j.value("seed", std::uint64_t{1});
  cfg.validate();
  return cfg;
}

namespace {

json mask_to_json(const BlockMask& m) {
  const BlockGrid& g = m.grid();
  return json{{"shape", {g.rows(), g.cols()}},
              {"block", {g.shape().rows, g.shape().cols}},
              {"kept", std::vector<int>(m.blocks().begin(), m.blocks().end())}};
}

BlockMask mask_from_json(const json& j) {
  const auto shape = j.at("shape").get<std::vector<std::size_t>>();
  const auto block = j.at("block").get<std::vector<std::size_t>>();
  if (shape.size() != 2 || block.size() != 2) throw InvalidInput("mask shape must be 2-D");
  const auto bits = j.at("kept").get<std::vector<int>>();
  return BlockMask(BlockGrid(shape[0], shape[1], BlockShape{block[0], block[1]}),
                   std::vector<std::uint8_t>(bits.begin(), bits.end()));
}

}  // namespace

json to_json(const Checkpoint& ckpt) {
  json tensors = json::object();
  ckpt.params.visit([&](const char* name, const Matrix& m) {
    tensors[name] = json{{"shape", {m.rows(), m.cols()}},
                         {"values", std::vector<double>(m.values().begin(), m.values().end())}};
  });
  json masks = json::object();
  for (const auto& [name, mask] : ckpt.masks) masks[name] = mask_to_json(mask);
  return json{{"version", ckpt.version},
              {"config", to_json(ckpt.config)},
              {"tensors", tensors},
              {"masks", masks},
              {"step", ckpt.step}};
}

Checkpoint checkpoint_from_json(const json& j) {
  Checkpoint ckpt;
  ckpt.version = j.at("version").get<std::string>();
  if (ckpt.version != kCheckpointVersion) {
    throw InvalidInput("unsupported checkpoint version: " + ckpt.version);
  }
  ckpt.config = model_config_from_json(j.at("config"));
  ckpt.params = ModelParams::zeros(ckpt.config);
  const json& tensors = j.at("tensors");
  ckpt.params.visit([&](const char* name, Matrix& m) {
    const json& t = tensors.at(name);
    const auto shape = t.at("shape").get<std::vector<std::size_t>>();
    if (shape.size() != 2 || shape[0] != m.rows() || shape[1] != m.cols()) {
      throw InvalidInput(std::string("tensor ") + name + " does not match the config shape");
    }
    m = Matrix(m.rows(), m.cols(), t.at("values").get<std::vector<double>>());
  });
  for (const auto& [name, mj] : j.at("masks").items()) {
    BlockMask mask = mask_from_json(mj);
    const Matrix& w = tensor_by_name(ckpt.params, name);
    if (mask.grid().rows() != w.rows() || mask.grid().cols() != w.cols()) {
      throw InvalidInput("mask for " + name + " does not match its tensor");
    }
    ckpt.masks.emplace(name, std::move(mask));
  }
  ckpt.step = j.at("step").get<std::int64_t>();
  return ckpt;
}

std::string serialize(const Checkpoint& ckpt) { return to_json(ckpt).dump(); }

Checkpoint deserialize_checkpoint(const std::string& text) {
  return checkpoint_from_json(json::parse(text));
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write checkpoint " + path.string());
  os << serialize(ckpt) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read checkpoint " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace rnntd
