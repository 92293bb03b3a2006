#include "diflow/training.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <string>

#include "diflow/errors.hpp"

namespace diflow {

using nn::Tensor;
using nn::Var;

void LossWeights::validate() const {
  if (!(duration >= 0.0 && content >= 0.0 && fdfd >= 0.0)) {
    throw ConfigError("loss weights must be nonnegative");
  }
  if (duration == 0.0 && content == 0.0 && fdfd == 0.0) {
    throw ConfigError("loss weights must not all be zero");
  }
}

void TrainConfig::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError("train config: " + msg);
  };
  require(steps >= 1, "steps must be >= 1");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(lr > 0.0, "lr must be positive");
  require(warmup_steps >= 0, "warmup_steps must be nonnegative");
  require(lr_schedule == "constant" || lr_schedule == "cosine",
          "lr_schedule must be 'constant' or 'cosine'");
  require(final_lr_fraction >= 0.0 && final_lr_fraction <= 1.0,
          "final_lr_fraction must lie in [0, 1]");
  require(grad_clip >= 0.0, "grad_clip must be nonnegative");
  require(checkpoint_interval >= 0, "checkpoint_interval must be nonnegative");
  require(log_interval >= 1, "log_interval must be >= 1");
  require(prompt_min >= 0.0 && prompt_max <= 0.5 && prompt_min <= prompt_max,
          "prompt fractions must satisfy 0 <= prompt_min <= prompt_max <= 0.5");
  weights.validate();
}

double TrainConfig::lr_at(int step) const {
  if (step < warmup_steps) {
    return lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
  }
  if (lr_schedule == "constant") return lr;
  const int span = std::max(1, steps - warmup_steps);
  const double progress =
      std::min(1.0, static_cast<double>(step - warmup_steps) / static_cast<double>(span));
  const double floor = lr * final_lr_fraction;
  return floor + (lr - floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

std::optional<PromptSplit> split_prompt(const Utterance& u, double fraction, int vocab) {
  if (!(fraction >= 0.0 && fraction <= 0.5)) {
    throw DomainError("split_prompt: fraction outside [0, 0.5]");
  }
  const std::size_t L = u.length();
  if (L < kMinSplitLength) return std::nullopt;
  const auto lp = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(L)));

  PromptSplit s;
  s.prompt_length = lp;
  s.ref_prosody = u.prosody.slice(0, lp);
  s.ref_acoustic = u.acoustic.slice(0, lp);
  s.speaker = u.speaker.embedding;
  s.style_class = u.speaker.style_class;
  s.utterance_id = u.id;
  std::size_t start = 0;
  for (std::size_t i = 0; i < u.phonemes.size(); ++i) {
    const auto d = static_cast<std::size_t>(u.durations[i]);
    const std::size_t end = start + d;
    if (end > lp) {
      s.phonemes.push_back(u.phonemes[i]);
      s.durations.push_back(static_cast<Token>(end - std::max(start, lp)));
      s.phoneme_durations.push_back(u.durations[i]);
    }
    start = end;
  }
  s.content = u.content.slice(lp, L);
  s.target.prosody = u.prosody.slice(lp, L);
  s.target.acoustic = u.acoustic.slice(lp, L);
  s.target.vocab = vocab;
  return s;
}

std::optional<PromptSplit> split_prompt(const Utterance& u, double min_fraction,
                                        double max_fraction, int vocab, RngStream& rng) {
  const double f = min_fraction + (max_fraction - min_fraction) * rng.uniform();
  return split_prompt(u, f, vocab);
}

Var loss_duration(const Var& log_durations, std::span<const Token> durations) {
  return nn::mse(log_durations, log_duration_targets(durations));
}

Var loss_content(const ContentOutput& content, const TokenGrid& targets) {
  if (content.logits.size() != targets.streams) {
    throw DimensionError("loss_content: stream count mismatch");
  }
  const Var stacked = content.logits.size() == 1 ? content.logits.front()
                                                 : nn::concat_rows(content.logits);
  return nn::cross_entropy(stacked, targets.data);
}

Var loss_fdfd(const std::vector<Var>& logits, const FactorizedSequence& x1,
              const MaskedSequence& xt, bool masked_only) {
  const TokenGrid clean = x1.stacked();
  if (logits.size() != clean.streams) throw DimensionError("loss_fdfd: stream count mismatch");
  const Var stacked = logits.size() == 1 ? logits.front() : nn::concat_rows(logits);
  if (!masked_only) return nn::cross_entropy(stacked, clean.data);
  std::vector<std::uint8_t> mask(clean.data.size());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = xt.tokens.data[i] == xt.vocab;
  return nn::cross_entropy(stacked, clean.data, mask);
}

Var total_loss(const LossTerms& terms, const LossWeights& weights) {
  return nn::add(nn::add(nn::scale(terms.duration, weights.duration),
                         nn::scale(terms.content, weights.content)),
                 nn::scale(terms.fdfd, weights.fdfd));
}

ConditioningContext make_context(const PromptSplit& split, const ContentOutput& content) {
  ConditioningContext ctx;
  ctx.ref_prosody = split.ref_prosody;
  ctx.ref_acoustic = split.ref_acoustic;
  ctx.content = content.embeddings;
  ctx.speaker = split.speaker;
  return ctx;
}

LossTerms compute_losses(const DiFlowModel& model, std::span<const PromptSplit> batch,
                         const LossOptions& options, RngStream& rng) {
  if (batch.empty()) throw DimensionError("compute_losses: empty batch");
  std::vector<Var> dur, con, fd;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const PromptSplit& ex = batch[b];
    RngStream ex_rng = rng.derive(b);
    Var log_d;
    const ContentOutput content = model.pcm().forward(ex.phonemes, ex.durations, &log_d);
    dur.push_back(loss_duration(log_d, ex.phoneme_durations));
    con.push_back(loss_content(content, ex.content));
    const double t = options.forced_t ? *options.forced_t : ex_rng.uniform();
    MaskedSequence xt = corrupt(ex.target, t, options.scheduler, ex_rng);
    const auto logits = model.fdfd().denoise_logits(xt, make_context(ex, content));
    fd.push_back(loss_fdfd(logits, ex.target, xt, options.masked_only));
  }
  auto average = [](std::vector<Var>& terms) {
    Var acc = terms.front();
    for (std::size_t i = 1; i < terms.size(); ++i) acc = nn::add(acc, terms[i]);
    return nn::scale(acc, 1.0 / static_cast<double>(terms.size()));
  };
  return {average(dur), average(con), average(fd)};
}

double clip_grad_norm(const nn::ParameterList& params, double max_norm) {
  double sq = 0.0;
  for (const auto* p : params) {
    for (double g : p->grad().data()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (auto* p : params) {
      for (auto& g : p->grad().data()) g *= factor;
    }
  }
  return norm;
}

Trainer::Trainer(DiFlowModel& model, TrainConfig config, std::span<const Utterance> corpus)
    : model_(model),
      config_(std::move(config)),
      corpus_(corpus),
      vocab_(model.config().fdfd.vocab),
      optimizer_(model.parameters(), nn::AdamConfig{config_.lr, 0.9, 0.999, 1e-8}) {
  config_.validate();
  if (corpus_.empty()) throw ConfigError("trainer: training split is empty");
}

std::vector<PromptSplit> Trainer::batch_for(int step, int* skipped) const {
  const RngStream step_rng = RngStream(config_.seed).derive(static_cast<std::uint64_t>(step));
  std::vector<PromptSplit> batch;
  int skip = 0;
  // Utterances too short to split are skipped; a bounded number of redraws
  // keeps the batch full.
  for (std::uint64_t draw = 0;
       batch.size() < static_cast<std::size_t>(config_.batch_size) &&
       draw < static_cast<std::uint64_t>(config_.batch_size) * 8;
       ++draw) {
    RngStream rng = step_rng.derive(draw);
    const auto idx = static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(corpus_.size()) - 1));
    auto split =
        split_prompt(corpus_[idx], config_.prompt_min, config_.prompt_max, vocab_, rng);
    if (!split) {
      ++skip;
      continue;
    }
    batch.push_back(std::move(*split));
  }
  if (skipped) *skipped = skip;
  if (batch.empty()) throw ConfigError("trainer: no utterance is long enough to split");
  return batch;
}

StepMetrics Trainer::step() {
  const auto start = std::chrono::steady_clock::now();
  const int step = step_count();
  StepMetrics metrics;
  metrics.step = step;
  const auto batch = batch_for(step, &metrics.skipped);

  nn::zero_grads(model_.parameters());
  LossOptions options;
  options.masked_only = config_.masked_only;
  options.scheduler = config_.scheduler;
  RngStream loss_rng =
      RngStream(config_.seed).derive(static_cast<std::uint64_t>(step)).derive(0x4c4f5353ULL);
  const LossTerms terms = compute_losses(model_, batch, options, loss_rng);
  const Var total = total_loss(terms, config_.weights);

  metrics.duration = terms.duration.value()[0];
  metrics.content = terms.content.value()[0];
  metrics.fdfd = terms.fdfd.value()[0];
  metrics.total = total.value()[0];
  if (!std::isfinite(metrics.total)) {
    throw NumericError("training step " + std::to_string(step) +
                       ": non-finite loss (duration " + std::to_string(metrics.duration) +
                       ", content " + std::to_string(metrics.content) + ", fdfd " +
                       std::to_string(metrics.fdfd) + ")");
  }
  nn::backward(total);
  metrics.grad_norm = clip_grad_norm(model_.parameters(), config_.grad_clip);
  if (!std::isfinite(metrics.grad_norm)) {
    throw NumericError("training step " + std::to_string(step) + ": non-finite gradient");
  }
  metrics.lr = config_.lr_at(step);
  optimizer_.set_lr(metrics.lr);
  optimizer_.step();
  metrics.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return metrics;
}

}  // namespace diflow
