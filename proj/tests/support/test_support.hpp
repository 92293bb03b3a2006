#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "diflow/autograd.hpp"
#include "diflow/corpus.hpp"
#include "diflow/model.hpp"
#include "diflow/rng.hpp"

namespace diflow::testing {

inline nn::Tensor random_tensor(nn::Shape shape, RngStream& rng, double stddev = 1.0) {
  nn::Tensor t(std::move(shape));
  for (auto& x : t.data()) x = rng.normal(0.0, stddev);
  return t;
}

// Overwrites every parameter with N(0, stddev^2) so that zero-initialized
// gates and modulations no longer hide paths from gradient checks.
inline void randomize_parameters(const nn::ParameterList& params, std::uint64_t seed,
                                 double stddev = 0.3) {
  RngStream rng(seed);
  for (auto* p : params) {
    for (auto& x : p->value().data()) x = rng.normal(0.0, stddev);
  }
}

// m = n = k = 1, v = 5, D = 8, one block.
inline ModelConfig tiny_model_config() {
  ModelConfig c;
  c.pcm.phonemes = 4;
  c.pcm.vocab = 5;
  c.pcm.content_streams = 1;
  c.pcm.hidden = 8;
  c.pcm.encoder_layers = 1;
  c.pcm.heads = 2;
  c.pcm.ff_hidden = 8;
  c.pcm.duration_hidden = 4;
  c.fdfd.prosody_streams = 1;
  c.fdfd.content_streams = 1;
  c.fdfd.acoustic_streams = 1;
  c.fdfd.vocab = 5;
  c.fdfd.hidden = 8;
  c.fdfd.layers = 1;
  c.fdfd.heads = 2;
  c.fdfd.speaker_dim = 3;
  c.fdfd.ff_hidden = 8;
  return c;
}

inline CorpusConfig tiny_corpus_config() {
  CorpusConfig c;
  c.phonemes = 4;
  c.classes = 4;
  c.train_classes = 3;
  c.vocab = 5;
  c.prosody_streams = 1;
  c.content_streams = 1;
  c.acoustic_streams = 1;
  c.speaker_dim = 3;
  c.min_phonemes = 2;
  c.max_phonemes = 3;
  c.min_duration = 1;
  c.max_duration = 2;
  c.train_utterances = 20;
  c.heldout_utterances = 4;
  return c;
}

// Small but default-shaped (m=1, n=2, k=3, v=64) model for fast tests.
inline ModelConfig small_model_config() {
  ModelConfig c;
  c.pcm.hidden = 16;
  c.pcm.heads = 2;
  c.pcm.encoder_layers = 1;
  c.pcm.ff_hidden = 32;
  c.pcm.duration_hidden = 16;
  c.fdfd.hidden = 16;
  c.fdfd.heads = 2;
  c.fdfd.layers = 1;
  c.fdfd.ff_hidden = 32;
  return c;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("diflow_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace diflow::testing
