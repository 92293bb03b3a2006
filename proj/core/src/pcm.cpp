#include "diflow/pcm.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "diflow/errors.hpp"

namespace diflow {

using nn::Tensor;
using nn::Var;

void PcmConfig::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError("pcm config: " + msg);
  };
  require(phonemes >= 1, "phonemes must be positive");
  require(vocab >= 2, "vocab must be >= 2");
  require(content_streams >= 1, "content_streams must be positive");
  require(hidden >= 2 && hidden % 2 == 0, "hidden must be a positive even number");
  require(encoder_layers >= 0, "encoder_layers must be nonnegative");
  require(heads >= 1 && hidden % heads == 0, "hidden must be divisible by heads");
  require(ff_hidden >= 1 && duration_hidden >= 1, "hidden sizes must be positive");
}

Pcm::Pcm(const PcmConfig& config, RngStream& rng) : config_(config) {
  config_.validate();
  const auto d = static_cast<std::size_t>(config_.hidden);
  const auto heads = static_cast<std::size_t>(config_.heads);
  const auto ff = static_cast<std::size_t>(config_.ff_hidden);
  phoneme_embedding_ =
      nn::Embedding("pcm.phoneme_embedding", static_cast<std::size_t>(config_.phonemes), d, rng);
  for (int i = 0; i < config_.encoder_layers; ++i) {
    encoder_.emplace_back("pcm.encoder." + std::to_string(i), d, heads, ff, rng);
  }
  duration_hidden_ = nn::Linear("pcm.duration.hidden", d,
                                static_cast<std::size_t>(config_.duration_hidden), rng);
  duration_out_ = nn::Linear("pcm.duration.out",
                             static_cast<std::size_t>(config_.duration_hidden), 1, rng);
  for (int j = 0; j < config_.content_streams; ++j) {
    content_stages_.emplace_back("pcm.content_stage." + std::to_string(j), d, heads, ff, rng);
  }
  content_projection_ = nn::Linear("pcm.content_projection", d, d, rng);
  content_head_ =
      nn::Linear("pcm.content_head", d, static_cast<std::size_t>(config_.vocab), rng);
}

Var Pcm::encode_phonemes(std::span<const Token> phonemes) const {
  if (phonemes.empty()) throw DimensionError("pcm: phoneme sequence is empty");
  for (Token p : phonemes) {
    if (p < 0 || p >= config_.phonemes) {
      throw IndexError("pcm: phoneme id " + std::to_string(p) + " outside [0, " +
                       std::to_string(config_.phonemes) + ")");
    }
  }
  const auto d = static_cast<std::size_t>(config_.hidden);
  Var x = nn::add(phoneme_embedding_.forward(phonemes),
                  Var::constant(nn::sinusoidal_positions(phonemes.size(), d)));
  for (const auto& block : encoder_) x = block.forward(x);
  return x;
}

Var Pcm::predict_durations(const Var& encodings) const {
  return duration_out_.forward(nn::gelu(duration_hidden_.forward(encodings)));
}

ContentOutput Pcm::predict_content(const Var& upsampled) const {
  const auto d = static_cast<std::size_t>(config_.hidden);
  Var h = nn::add(upsampled, Var::constant(nn::sinusoidal_positions(upsampled.rows(), d)));
  ContentOutput out;
  for (const auto& stage : content_stages_) {
    h = stage.forward(h);
    Var hc = content_projection_.forward(h);
    out.logits.push_back(content_head_.forward(hc));
    out.embeddings.push_back(std::move(hc));
  }
  return out;
}

ContentOutput Pcm::forward(std::span<const Token> phonemes, std::span<const Token> durations,
                           Var* log_durations) const {
  if (durations.size() != phonemes.size()) {
    throw AlignmentError("pcm: " + std::to_string(durations.size()) + " durations for " +
                         std::to_string(phonemes.size()) + " phonemes");
  }
  const Var enc = encode_phonemes(phonemes);
  if (log_durations) *log_durations = predict_durations(enc);
  return predict_content(length_regulate(enc, durations));
}

void Pcm::collect(nn::ParameterList& out) {
  phoneme_embedding_.collect(out);
  for (auto& b : encoder_) b.collect(out);
  duration_hidden_.collect(out);
  duration_out_.collect(out);
  for (auto& s : content_stages_) s.collect(out);
  content_projection_.collect(out);
  content_head_.collect(out);
}

Var length_regulate(const Var& encodings, std::span<const Token> durations,
                    std::size_t expected_length) {
  if (durations.size() != encodings.rows()) {
    throw AlignmentError("length regulator: " + std::to_string(durations.size()) +
                         " durations for " + std::to_string(encodings.rows()) + " phonemes");
  }
  std::size_t total = 0;
  for (Token d : durations) {
    if (d < 1) throw AlignmentError("length regulator: duration < 1");
    total += static_cast<std::size_t>(d);
  }
  if (total != expected_length) {
    throw AlignmentError("length regulator: durations sum to " + std::to_string(total) +
                         ", expected " + std::to_string(expected_length));
  }
  std::vector<std::int32_t> index;
  index.reserve(total);
  for (std::size_t i = 0; i < durations.size(); ++i) {
    index.insert(index.end(), static_cast<std::size_t>(durations[i]),
                 static_cast<std::int32_t>(i));
  }
  return nn::gather_rows(encodings, index);
}

Var length_regulate(const Var& encodings, std::span<const Token> durations) {
  std::size_t total = 0;
  for (Token d : durations) total += d > 0 ? static_cast<std::size_t>(d) : 0;
  return length_regulate(encodings, durations, total);
}

Tensor log_duration_targets(std::span<const Token> durations) {
  Tensor t({durations.size(), 1});
  for (std::size_t i = 0; i < durations.size(); ++i) {
    if (durations[i] < 1) throw DomainError("log duration target: duration < 1");
    t[i] = std::log(static_cast<double>(durations[i]));
  }
  return t;
}

Token duration_from_log(double log_duration) {
  if (std::isnan(log_duration)) throw NumericError("duration prediction is NaN");
  const double capped = std::min(log_duration, 20.0);
  const double r = std::round(std::exp(capped));
  return static_cast<Token>(std::max(1.0, r));
}

std::vector<Token> durations_from_log(const Tensor& log_durations) {
  std::vector<Token> out(log_durations.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = duration_from_log(log_durations[i]);
  return out;
}

std::vector<Token> argmax_rows(const Tensor& logits) {
  std::vector<Token> out(logits.rows());
  for (std::size_t r = 0; r < out.size(); ++r) {
    const auto row = logits.row(r);
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c) {
      if (row[c] > row[best]) best = c;
    }
    out[r] = static_cast<Token>(best);
  }
  return out;
}

}  // namespace diflow
