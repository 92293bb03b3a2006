#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "diflow/rng.hpp"
#include "diflow/sequence.hpp"

namespace diflow {

struct CorpusConfig {
  int phonemes = 16;       // P
  int classes = 16;        // S
  int train_classes = 12;  // classes [0, train_classes) train, the rest are held out
  int vocab = 64;          // v
  int prosody_streams = 1;   // m
  int content_streams = 2;   // n
  int acoustic_streams = 3;  // k
  int speaker_dim = 16;      // D_spk
  double noise = 0.05;       // epsilon
  double style_noise = 0.1;  // sigma_s
  int min_phonemes = 4;
  int max_phonemes = 12;
  int min_duration = 1;
  int max_duration = 4;
  int train_utterances = 5000;
  int heldout_utterances = 200;
  std::uint64_t seed = 1;

  void validate() const;
  friend bool operator==(const CorpusConfig&, const CorpusConfig&) = default;
};

struct SpeakerStyle {
  int style_class = 0;
  std::vector<double> embedding;

  friend bool operator==(const SpeakerStyle&, const SpeakerStyle&) = default;
};

struct Utterance {
  std::uint64_t id = 0;
  SpeakerStyle speaker;
  std::vector<Token> phonemes;
  std::vector<Token> durations;
  TokenGrid content;   // n x L
  TokenGrid prosody;   // m x L
  TokenGrid acoustic;  // k x L

  std::size_t length() const { return content.length; }
  friend bool operator==(const Utterance&, const Utterance&) = default;
};

struct Corpus {
  CorpusConfig config;
  std::vector<Utterance> train;
  std::vector<Utterance> heldout;

  friend bool operator==(const Corpus&, const Corpus&) = default;
};

// The public generation rules of the synthetic codec. Content is a
// deterministic function of the phoneme; prosody of (content, class);
// acoustic of (prosody, class, stream).
class ToyCodecRules {
 public:
  explicit ToyCodecRules(const CorpusConfig& config);

  static int content_multiplier(int stream) { return 1 + 4 * stream; }
  static int content_offset(int stream) { return 3 * stream; }

  Token content(int stream, Token phoneme) const;
  Token prosody(int stream, std::span<const Token> content_column, int style_class) const;
  Token acoustic(int stream, Token prosody0, int style_class) const;
  std::vector<double> style_embedding(int style_class, RngStream& rng) const;
  const CorpusConfig& config() const { return config_; }

 private:
  CorpusConfig config_;
  std::vector<double> projection_;  // speaker_dim x classes
};

Utterance gen_utterance(const ToyCodecRules& rules, int style_class, std::uint64_t id,
                        RngStream& rng);
Corpus generate_corpus(const CorpusConfig& config);

struct CloningAccuracy {
  double prosody = 0.0;
  double acoustic = 0.0;
  double combined = 0.0;
};

// Fraction of generated positions that obey the reference class's rules.
// Prosody is checked against `content`; acoustic against the generated
// prosody, since the acoustic rule is a relation between the two streams.
CloningAccuracy cloning_accuracy(const ToyCodecRules& rules, const FactorizedSequence& generated,
                                 const TokenGrid& content, int reference_class);

// Fraction of positions that deviate from the rule in the stored corpus.
struct RuleViolation {
  double prosody = 0.0;
  double acoustic = 0.0;
};
RuleViolation rule_violation_rate(const ToyCodecRules& rules, std::span<const Utterance> utts);

struct StyleSeparability {
  double intra = 0.0;
  double inter = 0.0;
};
StyleSeparability style_separability(std::span<const Utterance> utts);

// Throws ConfigError if any held-out class appears in the training split.
void check_heldout_split(const Corpus& corpus);

// Binary container, little-endian:
//   "DFTC" u32 version
//   header: 12 x u32 (P, S, S_train, v, m, n, k, D_spk, minN, maxN, minD, maxD),
//           f64 noise, f64 style_noise, u64 seed, u32 n_train, u32 n_heldout
//   per utterance: u64 id, u32 class, f64 x D_spk embedding, u32 N,
//           N x i32 phonemes, N x i32 durations, u32 L,
//           (n + m + k) x L x i32 tokens (content, prosody, acoustic; row-major)
//   u32 CRC-32 of every preceding byte
inline constexpr std::uint32_t kCorpusVersion = 1;
std::vector<std::uint8_t> serialize_corpus(const Corpus& corpus);
Corpus deserialize_corpus(std::span<const std::uint8_t> bytes);
void write_corpus(const std::filesystem::path& path, const Corpus& corpus);
Corpus read_corpus(const std::filesystem::path& path);

}  // namespace diflow
