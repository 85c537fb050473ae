#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "rnntd/matrix.hpp"

namespace rnntd {

// Synthetic transduction task: each label l is rendered as a run of
// frames_per_label copies of the one-hot vector e_l plus Gaussian noise.
// Features have vocab_size dimensions (slot 0, the blank, is never hot).
struct SynthTaskSpec {
  int vocab_size = 8;
  int min_length = 3;
  int max_length = 6;
  int min_frames_per_label = 2;
  int max_frames_per_label = 4;
  double noise_stddev = 0.3;
  int size = 2000;
  std::uint64_t seed = 7;

  void validate() const;
  int feature_dim() const { return vocab_size; }
};

nlohmann::json to_json(const SynthTaskSpec& spec);
SynthTaskSpec synth_task_from_json(const nlohmann::json& j);

struct Utterance {
  Matrix features;  // T x feature_dim
  std::vector<int> labels;
};

struct Dataset {
  std::vector<Utterance> train;
  std::vector<Utterance> dev;
  std::vector<Utterance> test;

  const std::vector<Utterance>& split(const std::string& name) const;
};

// Deterministic in spec.seed. Labels never repeat back to back, since a
// repeated label would render as one indistinguishable longer run. Features
// are rounded to float precision so the in-memory dataset equals what the
// JSONL files store. Split 80/10/10 in generation order.
Dataset gen_data(const SynthTaskSpec& spec);

// One {"features": [[...]...], "labels": [...]} object per line.
std::string to_jsonl(const std::vector<Utterance>& utts);
std::vector<Utterance> utterances_from_jsonl(std::istream& is);

// Writes train.jsonl, dev.jsonl, test.jsonl and task.json into dir.
void write_dataset(const Dataset& data, const SynthTaskSpec& spec,
                   const std::filesystem::path& dir);
std::vector<Utterance> read_split(const std::filesystem::path& dir, const std::string& split);
Dataset read_dataset(const std::filesystem::path& dir);

}  // namespace rnntd
