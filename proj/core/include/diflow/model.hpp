#pragma once

#include <cstdint>
#include <string>

#include "diflow/fdfd.hpp"
#include "diflow/pcm.hpp"

namespace diflow {

struct ModelConfig {
  PcmConfig pcm;
  FdfdConfig fdfd;
  std::uint64_t init_seed = 1;

  // Shared sizes must agree between the two networks.
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// PCM and FDFD trained jointly.
class DiFlowModel {
 public:
  explicit DiFlowModel(const ModelConfig& config);
  DiFlowModel(const DiFlowModel&) = delete;
  DiFlowModel& operator=(const DiFlowModel&) = delete;

  const ModelConfig& config() const { return config_; }
  Pcm& pcm() { return pcm_; }
  const Pcm& pcm() const { return pcm_; }
  Fdfd& fdfd() { return fdfd_; }
  const Fdfd& fdfd() const { return fdfd_; }

  // PCM parameters followed by FDFD parameters, in a fixed order.
  const nn::ParameterList& parameters() const { return params_; }
  std::size_t parameter_count() const { return nn::parameter_count(params_); }

 private:
  ModelConfig config_;
  Pcm pcm_;
  Fdfd fdfd_;
  nn::ParameterList params_;
};

// FNV-1a 64 of the canonical JSON serialization of the config.
std::uint64_t config_hash(const ModelConfig& config);

}  // namespace diflow
