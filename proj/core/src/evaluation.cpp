#include "diflow/evaluation.hpp"

#include <memory>

#include "diflow/errors.hpp"
#include "diflow/fdfd.hpp"

namespace diflow {

Denoiser make_model_denoiser(const Fdfd& fdfd, ConditioningContext ctx) {
  auto shared = std::make_shared<const ConditioningContext>(std::move(ctx));
  return [&fdfd, shared](const MaskedSequence& xt) {
    nn::NoGradGuard no_grad;
    return fdfd.denoise(xt, *shared);
  };
}

Synthesis synthesize(const DiFlowModel& model, const PromptSplit& split,
                     const SamplerConfig& sampler, bool predicted_durations, RngStream& rng) {
  nn::NoGradGuard no_grad;
  const Pcm& pcm = model.pcm();
  const nn::Var enc = pcm.encode_phonemes(split.phonemes);
  Synthesis out;
  out.durations = predicted_durations
                      ? durations_from_log(pcm.predict_durations(enc).value())
                      : split.durations;
  const ContentOutput content = pcm.predict_content(length_regulate(enc, out.durations));
  const std::size_t L = content.logits.front().rows();
  out.content = TokenGrid(content.logits.size(), L);
  for (std::size_t j = 0; j < content.logits.size(); ++j) {
    const auto tokens = argmax_rows(content.logits[j].value());
    std::copy(tokens.begin(), tokens.end(), out.content.stream(j).begin());
  }

  const FdfdConfig& fc = model.config().fdfd;
  const Denoiser denoiser = make_model_denoiser(model.fdfd(), make_context(split, content));
  const TokenGrid grid = generate(denoiser, static_cast<std::size_t>(fc.streams()), L,
                                  fc.vocab, sampler, rng);
  out.generated = unstack(grid, static_cast<std::size_t>(fc.prosody_streams), fc.vocab);
  return out;
}

int vote_class(const ToyCodecRules& rules, const FactorizedSequence& generated,
               const TokenGrid& content) {
  int best = 0;
  double best_score = -1.0;
  for (int c = 0; c < rules.config().classes; ++c) {
    const double score = cloning_accuracy(rules, generated, content, c).combined;
    if (score > best_score) {
      best_score = score;
      best = c;
    }
  }
  return best;
}

SampleMetrics score_sample(const ToyCodecRules& rules, const PromptSplit& truth,
                           const Synthesis& synthesis) {
  SampleMetrics m;
  const std::size_t L = synthesis.generated.length();
  m.aligned = L == truth.length();
  const TokenGrid& content = m.aligned ? truth.content : synthesis.content;
  if (m.aligned) {
    std::size_t ok = 0;
    for (std::size_t i = 0; i < content.data.size(); ++i) {
      ok += synthesis.content.data[i] == truth.content.data[i];
    }
    m.content_accuracy =
        content.data.empty() ? 0.0
                             : static_cast<double>(ok) / static_cast<double>(content.data.size());
  }
  m.cloning = cloning_accuracy(rules, synthesis.generated, content, truth.style_class);
  m.voted_class = vote_class(rules, synthesis.generated, content);
  return m;
}

void EvalAccumulator::add(const SampleMetrics& m, int reference_class) {
  ++sum_.count;
  sum_.content_accuracy += m.content_accuracy;
  sum_.prosody_accuracy += m.cloning.prosody;
  sum_.acoustic_accuracy += m.cloning.acoustic;
  sum_.combined_accuracy += m.cloning.combined;
  sum_.speaker_consistency += m.voted_class == reference_class ? 1.0 : 0.0;
}

EvalReport EvalAccumulator::report() const {
  EvalReport r = sum_;
  if (r.count == 0) return r;
  const double n = static_cast<double>(r.count);
  r.content_accuracy /= n;
  r.prosody_accuracy /= n;
  r.acoustic_accuracy /= n;
  r.combined_accuracy /= n;
  r.speaker_consistency /= n;
  return r;
}

}  // namespace diflow
