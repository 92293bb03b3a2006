#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "diflow/corpus.hpp"
#include "diflow/denoiser.hpp"
#include "diflow/model.hpp"
#include "diflow/sampler.hpp"
#include "diflow/training.hpp"

namespace diflow {

struct Synthesis {
  FactorizedSequence generated;
  TokenGrid content;              // PCM argmax tokens, n x L
  std::vector<Token> durations;  // durations used by the length regulator
};

// Denoiser closure over a trained FDFD with a fixed conditioning context.
Denoiser make_model_denoiser(const Fdfd& fdfd, ConditioningContext ctx);

// Runs the PCM on the target phonemes (ground-truth or predicted durations),
// then samples prosody and acoustic tokens conditioned on the prompt.
Synthesis synthesize(const DiFlowModel& model, const PromptSplit& split,
                     const SamplerConfig& sampler, bool predicted_durations, RngStream& rng);

struct SampleMetrics {
  double content_accuracy = 0.0;  // NaN-free; 0 when lengths differ
  bool aligned = true;            // generated length equals ground-truth length
  CloningAccuracy cloning;
  int voted_class = -1;  // class whose rules agree best with the generation
};

// Scores one generation against the ground-truth split. Prosody rules are
// checked against ground-truth content when aligned, else against the
// PCM's predicted content.
SampleMetrics score_sample(const ToyCodecRules& rules, const PromptSplit& truth,
                           const Synthesis& synthesis);

struct EvalReport {
  std::size_t count = 0;
  double content_accuracy = 0.0;
  double prosody_accuracy = 0.0;
  double acoustic_accuracy = 0.0;
  double combined_accuracy = 0.0;
  double speaker_consistency = 0.0;  // fraction voted to the reference class
};

// Running mean of per-sample metrics.
class EvalAccumulator {
 public:
  void add(const SampleMetrics& m, int reference_class);
  EvalReport report() const;

 private:
  EvalReport sum_;
};

// Class in [0, S) whose prosody and acoustic rules agree with the most
// generated positions; ties go to the smallest class.
int vote_class(const ToyCodecRules& rules, const FactorizedSequence& generated,
               const TokenGrid& content);

}  // namespace diflow
