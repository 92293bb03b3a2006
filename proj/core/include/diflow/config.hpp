#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "diflow/corpus.hpp"
#include "diflow/model.hpp"
#include "diflow/sampler.hpp"
#include "diflow/training.hpp"

namespace diflow {

struct EvalConfig {
  double prompt_fraction = 0.3;
  int max_utterances = 0;  // 0: every utterance of the split
  std::string split = "heldout";  // "heldout" or "train"
  bool predicted_durations = false;
  std::vector<int> nfe_list = {1, 2, 4, 8, 16, 32, 64, 128};
  int sweep_seeds = 5;

  void validate() const;
  friend bool operator==(const EvalConfig&, const EvalConfig&) = default;
};

// Everything a command needs; serialized into every artifact it writes.
struct RunConfig {
  CorpusConfig corpus;
  ModelConfig model;
  TrainConfig train;
  SamplerConfig sampler;
  EvalConfig eval;
  std::uint64_t seed = 1;  // sampling seed

  // Propagates corpus sizes into the model sections and validates all parts.
  void finalize();
  void validate() const;
};

nlohmann::json to_json(const CorpusConfig& c);
nlohmann::json to_json(const ModelConfig& c);
nlohmann::json to_json(const TrainConfig& c);
nlohmann::json to_json(const SamplerConfig& c);
nlohmann::json to_json(const EvalConfig& c);
nlohmann::json to_json(const RunConfig& c);

CorpusConfig corpus_config_from_json(const nlohmann::json& j);
ModelConfig model_config_from_json(const nlohmann::json& j);
RunConfig run_config_from_json(const nlohmann::json& j);

// Sets a dotted key ("train.steps", "model.fdfd.hidden") from its text form.
// The key must exist; the value is parsed to the type of the current entry.
void set_config_value(nlohmann::json& tree, const std::string& key, const std::string& value);

// Text config: one `key = value` per line, `#` comments, optional
// `[section]` headers that prefix the following keys.
RunConfig parse_config_text(const std::string& text, const RunConfig& base = {});
RunConfig read_config_file(const std::filesystem::path& path, const RunConfig& base = {});

// Identifier of the build that produced an artifact.
std::string build_identifier();

}  // namespace diflow
