#pragma once

#include <span>
#include <vector>

#include "diflow/autograd.hpp"
#include "diflow/layers.hpp"
#include "diflow/rng.hpp"
#include "diflow/sequence.hpp"

namespace diflow {

struct PcmConfig {
  int phonemes = 16;         // P
  int vocab = 64;            // v
  int content_streams = 2;   // n
  int hidden = 64;           // D (encoder width D' equals D)
  int encoder_layers = 2;    // E
  int heads = 4;
  int ff_hidden = 128;
  int duration_hidden = 64;

  void validate() const;
  friend bool operator==(const PcmConfig&, const PcmConfig&) = default;
};

// n content embedding streams (each L x D) and their token logits (each L x v).
struct ContentOutput {
  std::vector<nn::Var> embeddings;
  std::vector<nn::Var> logits;
};

// Phoneme encoder, duration predictor, length regulator and hierarchical
// content predictor.
class Pcm {
 public:
  Pcm() = default;
  Pcm(const PcmConfig& config, RngStream& rng);

  const PcmConfig& config() const { return config_; }

  // N x D encodings of the phoneme ids.
  nn::Var encode_phonemes(std::span<const Token> phonemes) const;
  // N log-durations as an N x 1 column.
  nn::Var predict_durations(const nn::Var& encodings) const;
  // Stage j reads stage j-1; stage j's state feeds content stream j.
  ContentOutput predict_content(const nn::Var& upsampled) const;

  // Encoder, regulator with the given durations, then content prediction.
  // Also returns the log-duration predictions through `log_durations`.
  ContentOutput forward(std::span<const Token> phonemes, std::span<const Token> durations,
                        nn::Var* log_durations = nullptr) const;

  void collect(nn::ParameterList& out);

 private:
  PcmConfig config_;
  nn::Embedding phoneme_embedding_;
  std::vector<nn::TransformerBlock> encoder_;
  nn::Linear duration_hidden_;
  nn::Linear duration_out_;
  std::vector<nn::TransformerBlock> content_stages_;
  nn::Linear content_projection_;  // H
  nn::Linear content_head_;        // G
};

// Row i of `encodings` repeated durations[i] times. Throws AlignmentError if
// a duration is < 1 or the durations do not sum to `expected_length`.
nn::Var length_regulate(const nn::Var& encodings, std::span<const Token> durations,
                        std::size_t expected_length);
nn::Var length_regulate(const nn::Var& encodings, std::span<const Token> durations);

// ln(d) per phoneme as an N x 1 column.
nn::Tensor log_duration_targets(std::span<const Token> durations);
// round(exp(.)) clamped to >= 1.
Token duration_from_log(double log_duration);
std::vector<Token> durations_from_log(const nn::Tensor& log_durations);

// Argmax token per row of an L x v logit matrix.
std::vector<Token> argmax_rows(const nn::Tensor& logits);

}  // namespace diflow
