#pragma once

#include <vector>

#include "diflow/autograd.hpp"
#include "diflow/layers.hpp"
#include "diflow/rng.hpp"
#include "diflow/sequence.hpp"

namespace diflow {

struct FdfdConfig {
  int prosody_streams = 1;   // m
  int content_streams = 2;   // n
  int acoustic_streams = 3;  // k
  int vocab = 64;            // v
  int hidden = 64;           // D
  int layers = 4;
  int heads = 4;
  int speaker_dim = 16;      // D_spk
  int ff_hidden = 0;         // 0 selects 4 * D

  // Ablations.
  bool use_attribute_embeddings = true;
  bool use_speaker = true;
  bool use_content = true;
  bool single_head = false;

  int streams() const { return prosody_streams + acoustic_streams; }
  int ff_width() const { return ff_hidden > 0 ? ff_hidden : 4 * hidden; }
  void validate() const;
  friend bool operator==(const FdfdConfig&, const FdfdConfig&) = default;
};

// Conditioning c = (r, h_c, s). The reference prompt spans L_p frames and may
// be empty.
struct ConditioningContext {
  TokenGrid ref_prosody;             // m x L_p
  TokenGrid ref_acoustic;            // k x L_p
  std::vector<nn::Var> content;      // n entries of L x D
  std::vector<double> speaker;       // D_spk

  std::size_t prompt_length() const { return ref_prosody.length; }
};

// Per-stream (L_p + L) x D embeddings, grouped by attribute.
struct StreamEmbeddings {
  std::vector<nn::Var> prosody;
  std::vector<nn::Var> content;
  std::vector<nn::Var> acoustic;
};

class Fdfd {
 public:
  Fdfd() = default;
  Fdfd(const FdfdConfig& config, RngStream& rng);

  const FdfdConfig& config() const { return config_; }

  StreamEmbeddings embed_streams(const MaskedSequence& xt, const ConditioningContext& ctx) const;
  // Attribute embeddings added per block, blocks concatenated along the
  // feature axis and projected to D. Output (L_p + L) x D.
  nn::Var assemble_context(const StreamEmbeddings& e) const;
  // z plus positions through the conditioned blocks; returns m + k entries of
  // L x D with the reference rows discarded.
  std::vector<nn::Var> backbone(const nn::Var& z, double t, std::span<const double> speaker,
                                std::size_t prompt_length) const;
  // m + k entries of L x v logits: prosody head then acoustic head.
  std::vector<nn::Var> predict_heads(const std::vector<nn::Var>& h) const;

  std::vector<nn::Var> denoise_logits(const MaskedSequence& xt,
                                      const ConditioningContext& ctx) const;
  // (m + k) x L x v posterior; every row sums to 1.
  nn::Tensor denoise(const MaskedSequence& xt, const ConditioningContext& ctx) const;

  void collect(nn::ParameterList& out);
  nn::Linear& prosody_head() { return prosody_head_; }
  nn::Linear& acoustic_head() { return single_head_ ? prosody_head_ : acoustic_head_; }

 private:
  struct Block {
    nn::MultiHeadSelfAttention attn;
    nn::FeedForward ff;
    nn::Linear modulation;  // silu(c) -> shift, scale, gate for each sub-layer
  };

  nn::Var global_condition(double t, std::span<const double> speaker) const;

  FdfdConfig config_;
  bool single_head_ = false;
  nn::Embedding prosody_embedder_;
  nn::Embedding acoustic_embedder_;
  nn::Parameter g_p_, g_c_, g_a_;
  nn::Linear context_projection_;  // G_xi
  nn::Linear time_hidden_, time_out_;
  nn::Linear speaker_projection_;
  std::vector<Block> blocks_;
  nn::Linear final_modulation_;
  nn::Linear final_projection_;
  nn::Linear prosody_head_;
  nn::Linear acoustic_head_;
};

// Softmax of each logit block stacked into a streams x L x v tensor.
nn::Tensor posterior_from_logits(const std::vector<nn::Var>& logits);

}  // namespace diflow
