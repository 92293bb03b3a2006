#pragma once

#include <cstdint>
#include <string>

#include "diflow/denoiser.hpp"
#include "diflow/rng.hpp"
#include "diflow/scheduler.hpp"
#include "diflow/sequence.hpp"
#include "diflow/tensor.hpp"

namespace diflow {

enum class FinalStepRule { kSample, kArgmax };

FinalStepRule parse_final_step_rule(const std::string& text);
std::string to_string(FinalStepRule rule);

struct SamplerConfig {
  int nfe = 32;
  Scheduler scheduler = Scheduler::linear();
  double temperature = 1.0;
  FinalStepRule final_step_rule = FinalStepRule::kSample;

  void validate() const;
};

// u_t over the augmented alphabet: streams x length x (vocab + 1), the last
// column being MASK.
struct VelocityField {
  nn::Tensor values;
  int vocab = 0;

  double at(std::size_t s, std::size_t l, std::size_t x) const;
};

// u = kappa_dot / (1 - kappa) * (posterior - delta_{x_t}).
VelocityField velocity(const nn::Tensor& posterior, const MaskedSequence& xt,
                       const Scheduler& s, double t);

// Resamples every token from delta_{x_t} + h * u_t. Throws StepSizeError if
// any update distribution has a negative entry.
MaskedSequence euler_step(const MaskedSequence& xt, const VelocityField& vel, double h,
                          RngStream& rng);

// Logit-domain temperature: p^(1/T) renormalized per row.
nn::Tensor temperature_apply(const nn::Tensor& posterior, double temperature);

// Runs nfe Euler steps on the grid t_j = j / nfe from the all-MASK state.
// The last step draws (or argmaxes) every remaining MASK token directly from
// the posterior, since the velocity coefficient is unbounded as t -> 1.
TokenGrid generate(const Denoiser& denoiser, std::size_t streams, std::size_t length,
                   int vocab, const SamplerConfig& cfg, RngStream& rng);

}  // namespace diflow
