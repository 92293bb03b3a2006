#include "diflow/model.hpp"

#include "diflow/config.hpp"
#include "diflow/errors.hpp"

namespace diflow {

void ModelConfig::validate() const {
  pcm.validate();
  fdfd.validate();
  if (pcm.vocab != fdfd.vocab) throw ConfigError("model config: pcm and fdfd vocab differ");
  if (pcm.content_streams != fdfd.content_streams) {
    throw ConfigError("model config: pcm and fdfd content stream counts differ");
  }
  if (pcm.hidden != fdfd.hidden) {
    throw ConfigError("model config: pcm and fdfd hidden widths differ");
  }
}

namespace {

ModelConfig validated(const ModelConfig& config) {
  config.validate();
  return config;
}

}  // namespace

DiFlowModel::DiFlowModel(const ModelConfig& config) : config_(validated(config)) {
  const RngStream base(config_.init_seed);
  RngStream pcm_rng = base.derive(1);
  RngStream fdfd_rng = base.derive(2);
  pcm_ = Pcm(config_.pcm, pcm_rng);
  fdfd_ = Fdfd(config_.fdfd, fdfd_rng);
  pcm_.collect(params_);
  fdfd_.collect(params_);
}

std::uint64_t config_hash(const ModelConfig& config) {
  const std::string text = to_json(config).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace diflow
