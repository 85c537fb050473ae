#include "rnntd/data.hpp"

#include <fstream>
#include <random>
#include <sstream>

#include "rnntd/error.hpp"

namespace rnntd {

using nlohmann::json;

void SynthTaskSpec::validate() const {
  if (vocab_size < 3) throw InvalidInput("task vocab_size must be >= 3 (blank plus two labels)");
  if (min_length < 1 || max_length < min_length) {
    throw InvalidInput("task needs 1 <= min_length <= max_length");
  }
  if (min_frames_per_label < 1 || max_frames_per_label < min_frames_per_label) {
    throw InvalidInput("task needs 1 <= min_frames_per_label <= max_frames_per_label");
  }
  if (!(noise_stddev >= 0.0)) throw InvalidInput("noise_stddev must be >= 0");
  if (size < 1) throw InvalidInput("dataset size must be >= 1");
}

json to_json(const SynthTaskSpec& s) {
  return json{{"vocab_size", s.vocab_size},
              {"min_length", s.min_length},
              {"max_length", s.max_length},
              {"min_frames_per_label", s.min_frames_per_label},
              {"max_frames_per_label", s.max_frames_per_label},
              {"noise_stddev", s.noise_stddev},
              {"size", s.size},
              {"seed", s.seed}};
}

SynthTaskSpec synth_task_from_json(const json& j) {
  SynthTaskSpec s;
  s.vocab_size = j.at("vocab_size").get<int>();
  s.min_length = j.at("min_length").get<int>();
  s.max_length = j.at("max_length").get<int>();
  s.min_frames_per_label = j.at("min_frames_per_label").get<int>();
  s.max_frames_per_label = j.at("max_frames_per_label").get<int>();
  s.noise_stddev = j.at("noise_stddev").get<double>();
  s.size = j.at("size").get<int>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.validate();
  return s;
}

const std::vector<Utterance>& Dataset::split(const std::string& name) const {
  if (name == "train") return train;
  if (name == "dev") return dev;
  if (name == "test") return test;
  throw InvalidInput("unknown split \"" + name + "\" (expected train, dev or test)");
}

Dataset gen_data(const SynthTaskSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_int_distribution<int> length(spec.min_length, spec.max_length);
  std::uniform_int_distribution<int> frames(spec.min_frames_per_label, spec.max_frames_per_label);
  // Labels 1..K-1; the draw for a successor excludes its predecessor.
  std::uniform_int_distribution<int> first_label(1, spec.vocab_size - 1);
  std::uniform_int_distribution<int> other_label(1, spec.vocab_size - 2);
  std::normal_distribution<double> noise(0.0, spec.noise_stddev);
  const auto F = static_cast<std::size_t>(spec.feature_dim());

  std::vector<Utterance> all;
  all.reserve(static_cast<std::size_t>(spec.size));
  for (int n = 0; n < spec.size; ++n) {
    Utterance utt;
    const int L = length(rng);
    for (int i = 0; i < L; ++i) {
      int l = first_label(rng);
      if (i > 0) {
        l = other_label(rng);
        if (l >= utt.labels.back()) ++l;
      }
      utt.labels.push_back(l);
    }
    std::vector<int> frame_labels;
    for (int l : utt.labels) frame_labels.insert(frame_labels.end(), static_cast<std::size_t>(frames(rng)), l);
    utt.features = Matrix(frame_labels.size(), F);
    for (std::size_t f = 0; f < frame_labels.size(); ++f) {
      auto row = utt.features.row(f);
      for (std::size_t d = 0; d < F; ++d) {
        const double hot = static_cast<int>(d) == frame_labels[f] ? 1.0 : 0.0;
        const double v = spec.noise_stddev > 0.0 ? hot + noise(rng) : hot;
        row[d] = static_cast<double>(static_cast<float>(v));
      }
    }
    all.push_back(std::move(utt));
  }

  const std::size_t n_train = all.size() * 8 / 10;
  const std::size_t n_dev = all.size() / 10;
  Dataset ds;
  ds.train.assign(std::make_move_iterator(all.begin()),
                  std::make_move_iterator(all.begin() + static_cast<std::ptrdiff_t>(n_train)));
  ds.dev.assign(std::make_move_iterator(all.begin() + static_cast<std::ptrdiff_t>(n_train)),
                std::make_move_iterator(all.begin() +
                                        static_cast<std::ptrdiff_t>(n_train + n_dev)));
  ds.test.assign(
      std::make_move_iterator(all.begin() + static_cast<std::ptrdiff_t>(n_train + n_dev)),
      std::make_move_iterator(all.end()));
  return ds;
}

std::string to_jsonl(const std::vector<Utterance>& utts) {
  std::string out;
  for (const Utterance& u : utts) {
    json feats = json::array();
    for (std::size_t f = 0; f < u.features.rows(); ++f) {
      json row = json::array();
      for (double v : u.features.row(f)) row.push_back(static_cast<float>(v));
      feats.push_back(std::move(row));
    }
    out += json{{"features", std::move(feats)}, {"labels", u.labels}}.dump();
    out += '\n';
  }
  return out;
}

std::vector<Utterance> utterances_from_jsonl(std::istream& is) {
  std::vector<Utterance> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const json j = json::parse(line);
    Utterance u;
    u.labels = j.at("labels").get<std::vector<int>>();
    const auto rows = j.at("features").get<std::vector<std::vector<double>>>();
    if (rows.empty()) throw InvalidInput("utterance on line " + std::to_string(lineno) + " has no frames");
    const std::size_t F = rows.front().size();
    std::vector<double> flat;
    flat.reserve(rows.size() * F);
    for (const auto& r : rows) {
      if (r.size() != F) throw InvalidInput("ragged features on line " + std::to_string(lineno));
      flat.insert(flat.end(), r.begin(), r.end());
    }
    u.features = Matrix(rows.size(), F, std::move(flat));
    out.push_back(std::move(u));
  }
  return out;
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
}

}  // namespace

void write_dataset(const Dataset& data, const SynthTaskSpec& spec,
                   const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text(dir / "train.jsonl", to_jsonl(data.train));
  write_text(dir / "dev.jsonl", to_jsonl(data.dev));
  write_text(dir / "test.jsonl", to_jsonl(data.test));
  write_text(dir / "task.json", to_json(spec).dump(2) + "\n");
}

std::vector<Utterance> read_split(const std::filesystem::path& dir, const std::string& split) {
  const auto path = dir / (split + ".jsonl");
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read dataset split " + path.string());
  return utterances_from_jsonl(is);
}

Dataset read_dataset(const std::filesystem::path& dir) {
  return Dataset{read_split(dir, "train"), read_split(dir, "dev"), read_split(dir, "test")};
}

}  // namespace rnntd
