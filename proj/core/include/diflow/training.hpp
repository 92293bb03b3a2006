#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "diflow/corpus.hpp"
#include "diflow/fdfd.hpp"
#include "diflow/model.hpp"
#include "diflow/optim.hpp"
#include "diflow/scheduler.hpp"

namespace diflow {

struct LossWeights {
  double duration = 1.0;
  double content = 1.0;
  double fdfd = 1.0;

  void validate() const;
  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

struct TrainConfig {
  int steps = 2000;
  int batch_size = 8;
  double lr = 1e-3;
  int warmup_steps = 0;
  // "constant" or "cosine" decay to lr * final_lr_fraction after warmup.
  std::string lr_schedule = "constant";
  double final_lr_fraction = 0.1;
  double grad_clip = 1.0;  // global norm; 0 disables
  std::uint64_t seed = 1;
  int checkpoint_interval = 0;  // 0: final checkpoint only
  int log_interval = 50;
  double prompt_min = 0.2;
  double prompt_max = 0.4;
  bool masked_only = false;
  Scheduler scheduler = Scheduler::linear();
  LossWeights weights;

  void validate() const;
  double lr_at(int step) const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// Reference prefix and target suffix of one utterance.
struct PromptSplit {
  std::size_t prompt_length = 0;           // L_p
  TokenGrid ref_prosody;                   // m x L_p
  TokenGrid ref_acoustic;                  // k x L_p
  std::vector<double> speaker;
  int style_class = 0;
  std::uint64_t utterance_id = 0;
  // Target part. A phoneme straddling the split keeps its remaining frames.
  std::vector<Token> phonemes;
  std::vector<Token> durations;            // frames inside the target
  std::vector<Token> phoneme_durations;    // untruncated; the duration loss target
  TokenGrid content;                       // n x L
  FactorizedSequence target;               // m x L and k x L

  std::size_t length() const { return content.length; }
};

inline constexpr std::size_t kMinSplitLength = 4;

// L_p = floor(fraction * L). Returns nullopt when L < kMinSplitLength.
std::optional<PromptSplit> split_prompt(const Utterance& u, double fraction, int vocab);
// Fraction drawn uniformly from [min_fraction, max_fraction].
std::optional<PromptSplit> split_prompt(const Utterance& u, double min_fraction,
                                        double max_fraction, int vocab, RngStream& rng);

struct LossTerms {
  nn::Var duration;
  nn::Var content;
  nn::Var fdfd;
};

// Mean over `batch` of each loss term. `forced_t` fixes the corruption time
// for every example instead of drawing t ~ U[0, 1].
struct LossOptions {
  std::optional<double> forced_t;
  bool masked_only = false;
  Scheduler scheduler = Scheduler::linear();
};

LossTerms compute_losses(const DiFlowModel& model, std::span<const PromptSplit> batch,
                         const LossOptions& options, RngStream& rng);

nn::Var loss_duration(const nn::Var& log_durations, std::span<const Token> durations);
nn::Var loss_content(const ContentOutput& content, const TokenGrid& targets);
// Cross-entropy of the clean stacked tokens over all (or only masked)
// positions of x_t.
nn::Var loss_fdfd(const std::vector<nn::Var>& logits, const FactorizedSequence& x1,
                  const MaskedSequence& xt, bool masked_only);

// Weighted sum; exactly weights.duration * dur + weights.content * c +
// weights.fdfd * f.
nn::Var total_loss(const LossTerms& terms, const LossWeights& weights);

// Every input of the noisy-target denoising call for one example.
ConditioningContext make_context(const PromptSplit& split, const ContentOutput& content);

struct StepMetrics {
  int step = 0;
  double total = 0.0;
  double duration = 0.0;
  double content = 0.0;
  double fdfd = 0.0;
  double lr = 0.0;
  double grad_norm = 0.0;
  double wall_seconds = 0.0;
  int skipped = 0;
};

class Trainer {
 public:
  Trainer(DiFlowModel& model, TrainConfig config, std::span<const Utterance> corpus);

  // Runs one optimizer step with the batch of step index `step_count()`.
  StepMetrics step();
  // Mini-batch of step `step`; pure function of (seed, step).
  std::vector<PromptSplit> batch_for(int step, int* skipped = nullptr) const;

  int step_count() const { return static_cast<int>(optimizer_.step_count()); }
  nn::Adam& optimizer() { return optimizer_; }
  const TrainConfig& config() const { return config_; }

 private:
  DiFlowModel& model_;
  TrainConfig config_;
  std::span<const Utterance> corpus_;
  int vocab_;
  nn::Adam optimizer_;
};

// Rescales gradients so their global L2 norm is at most max_norm; returns the
// norm before clipping.
double clip_grad_norm(const nn::ParameterList& params, double max_norm);

}  // namespace diflow
