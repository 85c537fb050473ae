#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "json.hpp"
#include "rnntd/model.hpp"
#include "rnntd/sparsity.hpp"

namespace rnntd {

inline constexpr const char* kCheckpointVersion = "rnntd-checkpoint-v1";

struct Checkpoint {
  std::string version = kCheckpointVersion;
  ModelConfig config;
  ModelParams params;
  std::map<std::string, BlockMask> masks;
  std::int64_t step = 0;

  bool operator==(const Checkpoint&) const = default;
};

nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const Checkpoint& ckpt);
// Throws InvalidInput on a wrong version tag or tensors that do not match the
// config.
Checkpoint checkpoint_from_json(const nlohmann::json& j);

std::string serialize(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& text);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace rnntd
