#pragma once

#include <cstdint>
#include <vector>

#include "diflow/autograd.hpp"

namespace diflow::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam. Moments are stored per parameter, in the order the
// parameter list was given, so they can be checkpointed by position.
class Adam {
 public:
  Adam(ParameterList params, AdamConfig config = {});

  void step();
  void set_lr(double lr) { config_.lr = lr; }
  const AdamConfig& config() const { return config_; }
  std::uint64_t step_count() const { return step_count_; }
  void set_step_count(std::uint64_t n) { step_count_ = n; }

  const ParameterList& parameters() const { return params_; }
  std::vector<Tensor>& first_moments() { return m_; }
  std::vector<Tensor>& second_moments() { return v_; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }

 private:
  ParameterList params_;
  AdamConfig config_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::uint64_t step_count_ = 0;
};

// One update of `params` given moments and the 1-based step index.
void adam_step(const ParameterList& params, std::vector<Tensor>& m, std::vector<Tensor>& v,
               const AdamConfig& config, std::uint64_t step_count);

}  // namespace diflow::nn
