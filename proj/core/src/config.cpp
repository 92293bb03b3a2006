#include "diflow/config.hpp"

#include <fstream>
#include <sstream>

#include "diflow/errors.hpp"

#ifndef DIFLOW_BUILD_ID
#define DIFLOW_BUILD_ID "unknown"
#endif

namespace diflow {

using nlohmann::json;

void EvalConfig::validate() const {
  if (!(prompt_fraction >= 0.0 && prompt_fraction <= 0.5)) {
    throw ConfigError("eval config: prompt_fraction must lie in [0, 0.5]");
  }
  if (max_utterances < 0) throw ConfigError("eval config: max_utterances must be >= 0");
  if (split != "heldout" && split != "train") {
    throw ConfigError("eval config: split must be 'heldout' or 'train'");
  }
  if (nfe_list.empty()) throw ConfigError("eval config: nfe_list is empty");
  for (int n : nfe_list) {
    if (n < 1) throw ConfigError("eval config: every NFE must be >= 1");
  }
  if (sweep_seeds < 1) throw ConfigError("eval config: sweep_seeds must be >= 1");
}

void RunConfig::finalize() {
  corpus.validate();
  auto& p = model.pcm;
  auto& f = model.fdfd;
  p.phonemes = corpus.phonemes;
  p.vocab = f.vocab = corpus.vocab;
  p.content_streams = f.content_streams = corpus.content_streams;
  f.prosody_streams = corpus.prosody_streams;
  f.acoustic_streams = corpus.acoustic_streams;
  f.speaker_dim = corpus.speaker_dim;
  validate();
}

void RunConfig::validate() const {
  corpus.validate();
  model.validate();
  train.validate();
  sampler.validate();
  eval.validate();
}

json to_json(const CorpusConfig& c) {
  return {{"phonemes", c.phonemes},
          {"classes", c.classes},
          {"train_classes", c.train_classes},
          {"vocab", c.vocab},
          {"prosody_streams", c.prosody_streams},
          {"content_streams", c.content_streams},
          {"acoustic_streams", c.acoustic_streams},
          {"speaker_dim", c.speaker_dim},
          {"noise", c.noise},
          {"style_noise", c.style_noise},
          {"min_phonemes", c.min_phonemes},
          {"max_phonemes", c.max_phonemes},
          {"min_duration", c.min_duration},
          {"max_duration", c.max_duration},
          {"train_utterances", c.train_utterances},
          {"heldout_utterances", c.heldout_utterances},
          {"seed", c.seed}};
}

json to_json(const ModelConfig& c) {
  const auto& p = c.pcm;
  const auto& f = c.fdfd;
  return {{"init_seed", c.init_seed},
          {"pcm",
           {{"phonemes", p.phonemes},
            {"vocab", p.vocab},
            {"content_streams", p.content_streams},
            {"hidden", p.hidden},
            {"encoder_layers", p.encoder_layers},
            {"heads", p.heads},
            {"ff_hidden", p.ff_hidden},
            {"duration_hidden", p.duration_hidden}}},
          {"fdfd",
           {{"prosody_streams", f.prosody_streams},
            {"content_streams", f.content_streams},
            {"acoustic_streams", f.acoustic_streams},
            {"vocab", f.vocab},
            {"hidden", f.hidden},
            {"layers", f.layers},
            {"heads", f.heads},
            {"speaker_dim", f.speaker_dim},
            {"ff_hidden", f.ff_hidden},
            {"use_attribute_embeddings", f.use_attribute_embeddings},
            {"use_speaker", f.use_speaker},
            {"use_content", f.use_content},
            {"single_head", f.single_head}}}};
}

json to_json(const TrainConfig& c) {
  return {{"steps", c.steps},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"warmup_steps", c.warmup_steps},
          {"lr_schedule", c.lr_schedule},
          {"final_lr_fraction", c.final_lr_fraction},
          {"grad_clip", c.grad_clip},
          {"seed", c.seed},
          {"checkpoint_interval", c.checkpoint_interval},
          {"log_interval", c.log_interval},
          {"prompt_min", c.prompt_min},
          {"prompt_max", c.prompt_max},
          {"masked_only", c.masked_only},
          {"scheduler", to_string(c.scheduler)},
          {"lambda_dur", c.weights.duration},
          {"lambda_c", c.weights.content},
          {"lambda_fdfd", c.weights.fdfd}};
}

json to_json(const SamplerConfig& c) {
  return {{"nfe", c.nfe},
          {"scheduler", to_string(c.scheduler)},
          {"temperature", c.temperature},
          {"final_step", to_string(c.final_step_rule)}};
}

json to_json(const EvalConfig& c) {
  return {{"prompt_fraction", c.prompt_fraction},
          {"max_utterances", c.max_utterances},
          {"split", c.split},
          {"predicted_durations", c.predicted_durations},
          {"nfe_list", c.nfe_list},
          {"sweep_seeds", c.sweep_seeds}};
}

json to_json(const RunConfig& c) {
  return {{"corpus", to_json(c.corpus)}, {"model", to_json(c.model)},
          {"train", to_json(c.train)},   {"sampler", to_json(c.sampler)},
          {"eval", to_json(c.eval)},     {"seed", c.seed}};
}

namespace {

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

}  // namespace

CorpusConfig corpus_config_from_json(const json& j) {
  CorpusConfig c;
  read(j, "phonemes", c.phonemes);
  read(j, "classes", c.classes);
  read(j, "train_classes", c.train_classes);
  read(j, "vocab", c.vocab);
  read(j, "prosody_streams", c.prosody_streams);
  read(j, "content_streams", c.content_streams);
  read(j, "acoustic_streams", c.acoustic_streams);
  read(j, "speaker_dim", c.speaker_dim);
  read(j, "noise", c.noise);
  read(j, "style_noise", c.style_noise);
  read(j, "min_phonemes", c.min_phonemes);
  read(j, "max_phonemes", c.max_phonemes);
  read(j, "min_duration", c.min_duration);
  read(j, "max_duration", c.max_duration);
  read(j, "train_utterances", c.train_utterances);
  read(j, "heldout_utterances", c.heldout_utterances);
  read(j, "seed", c.seed);
  return c;
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  read(j, "init_seed", c.init_seed);
  if (j.contains("pcm")) {
    const json& p = j.at("pcm");
    read(p, "phonemes", c.pcm.phonemes);
    read(p, "vocab", c.pcm.vocab);
    read(p, "content_streams", c.pcm.content_streams);
    read(p, "hidden", c.pcm.hidden);
    read(p, "encoder_layers", c.pcm.encoder_layers);
    read(p, "heads", c.pcm.heads);
    read(p, "ff_hidden", c.pcm.ff_hidden);
    read(p, "duration_hidden", c.pcm.duration_hidden);
  }
  if (j.contains("fdfd")) {
    const json& f = j.at("fdfd");
    read(f, "prosody_streams", c.fdfd.prosody_streams);
    read(f, "content_streams", c.fdfd.content_streams);
    read(f, "acoustic_streams", c.fdfd.acoustic_streams);
    read(f, "vocab", c.fdfd.vocab);
    read(f, "hidden", c.fdfd.hidden);
    read(f, "layers", c.fdfd.layers);
    read(f, "heads", c.fdfd.heads);
    read(f, "speaker_dim", c.fdfd.speaker_dim);
    read(f, "ff_hidden", c.fdfd.ff_hidden);
    read(f, "use_attribute_embeddings", c.fdfd.use_attribute_embeddings);
    read(f, "use_speaker", c.fdfd.use_speaker);
    read(f, "use_content", c.fdfd.use_content);
    read(f, "single_head", c.fdfd.single_head);
  }
  return c;
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  if (j.contains("corpus")) c.corpus = corpus_config_from_json(j.at("corpus"));
  if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
  if (j.contains("train")) {
    const json& t = j.at("train");
    auto& tc = c.train;
    read(t, "steps", tc.steps);
    read(t, "batch_size", tc.batch_size);
    read(t, "lr", tc.lr);
    read(t, "warmup_steps", tc.warmup_steps);
    read(t, "lr_schedule", tc.lr_schedule);
    read(t, "final_lr_fraction", tc.final_lr_fraction);
    read(t, "grad_clip", tc.grad_clip);
    read(t, "seed", tc.seed);
    read(t, "checkpoint_interval", tc.checkpoint_interval);
    read(t, "log_interval", tc.log_interval);
    read(t, "prompt_min", tc.prompt_min);
    read(t, "prompt_max", tc.prompt_max);
    read(t, "masked_only", tc.masked_only);
    std::string sched = to_string(tc.scheduler);
    read(t, "scheduler", sched);
    tc.scheduler = parse_scheduler(sched);
    read(t, "lambda_dur", tc.weights.duration);
    read(t, "lambda_c", tc.weights.content);
    read(t, "lambda_fdfd", tc.weights.fdfd);
  }
  if (j.contains("sampler")) {
    const json& s = j.at("sampler");
    read(s, "nfe", c.sampler.nfe);
    std::string sched = to_string(c.sampler.scheduler);
    read(s, "scheduler", sched);
    c.sampler.scheduler = parse_scheduler(sched);
    read(s, "temperature", c.sampler.temperature);
    std::string rule = to_string(c.sampler.final_step_rule);
    read(s, "final_step", rule);
    c.sampler.final_step_rule = parse_final_step_rule(rule);
  }
  if (j.contains("eval")) {
    const json& e = j.at("eval");
    read(e, "prompt_fraction", c.eval.prompt_fraction);
    read(e, "max_utterances", c.eval.max_utterances);
    read(e, "split", c.eval.split);
    read(e, "predicted_durations", c.eval.predicted_durations);
    read(e, "nfe_list", c.eval.nfe_list);
    read(e, "sweep_seeds", c.eval.sweep_seeds);
  }
  read(j, "seed", c.seed);
  return c;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

json parse_scalar_like(const json& current, const std::string& key, const std::string& value) {
  auto fail = [&]() -> json {
    throw ConfigError("config key '" + key + "': cannot parse '" + value + "'");
  };
  try {
    if (current.is_boolean()) {
      if (value == "true" || value == "1" || value == "on" || value == "yes") return true;
      if (value == "false" || value == "0" || value == "off" || value == "no") return false;
      return fail();
    }
    std::size_t used = 0;
    if (current.is_number_unsigned()) {
      if (!value.empty() && value[0] == '-') return fail();
      const auto x = std::stoull(value, &used);
      return used == value.size() ? json(x) : fail();
    }
    if (current.is_number_integer()) {
      const auto x = std::stoll(value, &used);
      return used == value.size() ? json(x) : fail();
    }
    if (current.is_number_float()) {
      const double x = std::stod(value, &used);
      return used == value.size() ? json(x) : fail();
    }
    if (current.is_string()) return value;
    if (current.is_array()) {
      json arr = json::array();
      std::stringstream ss(value);
      std::string item;
      while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        const auto x = std::stoll(item, &used);
        if (used != item.size()) return fail();
        arr.push_back(x);
      }
      return arr;
    }
  } catch (const std::logic_error&) {
    return fail();
  }
  return fail();
}

}  // namespace

void set_config_value(json& tree, const std::string& key, const std::string& value) {
  json* node = &tree;
  std::stringstream ss(key);
  std::string part;
  while (std::getline(ss, part, '.')) {
    if (!node->is_object() || !node->contains(part)) {
      throw ConfigError("unknown config key '" + key + "'");
    }
    node = &(*node)[part];
  }
  if (node->is_object()) throw ConfigError("config key '" + key + "' names a section");
  *node = parse_scalar_like(*node, key, trim(value));
}

RunConfig parse_config_text(const std::string& text, const RunConfig& base) {
  json tree = to_json(base);
  std::istringstream in(text);
  std::string line, section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError("config line " + std::to_string(line_no) + ": malformed section");
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string full = section.empty() ? key : section + "." + key;
    try {
      set_config_value(tree, full, line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return run_config_from_json(tree);
}

RunConfig read_config_file(const std::filesystem::path& path, const RunConfig& base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), base);
}

std::string build_identifier() { return DIFLOW_BUILD_ID; }

}  // namespace diflow
