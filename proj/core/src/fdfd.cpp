#include "diflow/fdfd.hpp"

#include <cmath>
#include <string>

#include "diflow/errors.hpp"

namespace diflow {

using nn::Tensor;
using nn::Var;

void FdfdConfig::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError("fdfd config: " + msg);
  };
  require(prosody_streams >= 1 && content_streams >= 1 && acoustic_streams >= 1,
          "stream counts must be positive");
  require(vocab >= 2, "vocab must be >= 2");
  require(hidden >= 2 && hidden % 2 == 0, "hidden must be a positive even number");
  require(layers >= 0, "layers must be nonnegative");
  require(heads >= 1 && hidden % heads == 0, "hidden must be divisible by heads");
  require(speaker_dim >= 1, "speaker_dim must be positive");
  require(ff_hidden >= 0, "ff_hidden must be nonnegative");
}

namespace {

Tensor random_vector(std::size_t n, RngStream& rng) {
  Tensor t({n});
  for (auto& x : t.data()) x = rng.normal();
  return t;
}

std::vector<Token> joined_row(const TokenGrid& ref, const TokenGrid& xt, std::size_t ref_row,
                              std::size_t xt_row, int vocab, const char* what) {
  std::vector<Token> ids;
  ids.reserve(ref.length + xt.length);
  for (Token tok : ref.stream(ref_row)) {
    if (tok < 0 || tok >= vocab) {
      throw IndexError(std::string("fdfd: reference ") + what + " token " +
                       std::to_string(tok) + " outside [0, v)");
    }
    ids.push_back(tok);
  }
  for (Token tok : xt.stream(xt_row)) {
    if (tok < 0 || tok > vocab) {
      throw IndexError(std::string("fdfd: ") + what + " token " + std::to_string(tok) +
                       " outside [0, v]");
    }
    ids.push_back(tok);
  }
  return ids;
}

}  // namespace

Fdfd::Fdfd(const FdfdConfig& config, RngStream& rng) : config_(config) {
  config_.validate();
  single_head_ = config_.single_head;
  const auto d = static_cast<std::size_t>(config_.hidden);
  const auto rows = static_cast<std::size_t>(config_.vocab) + 1;
  const auto blocks =
      static_cast<std::size_t>(config_.prosody_streams + config_.content_streams +
                               config_.acoustic_streams);
  const auto out_streams = static_cast<std::size_t>(config_.streams());
  const auto v = static_cast<std::size_t>(config_.vocab);

  prosody_embedder_ = nn::Embedding("fdfd.prosody_embedder", rows, d, rng);
  acoustic_embedder_ = nn::Embedding("fdfd.acoustic_embedder", rows, d, rng);
  if (config_.use_attribute_embeddings) {
    g_p_ = nn::Parameter("fdfd.g_p", random_vector(d, rng));
    g_c_ = nn::Parameter("fdfd.g_c", random_vector(d, rng));
    g_a_ = nn::Parameter("fdfd.g_a", random_vector(d, rng));
  }
  context_projection_ = nn::Linear("fdfd.context_projection", blocks * d, d, rng);
  time_hidden_ = nn::Linear("fdfd.time.hidden", d, d, rng);
  time_out_ = nn::Linear("fdfd.time.out", d, d, rng);
  if (config_.use_speaker) {
    speaker_projection_ = nn::Linear("fdfd.speaker_projection",
                                     static_cast<std::size_t>(config_.speaker_dim), d, rng);
  }
  const auto ff = static_cast<std::size_t>(config_.ff_width());
  for (int i = 0; i < config_.layers; ++i) {
    const std::string p = "fdfd.block." + std::to_string(i);
    blocks_.push_back(Block{
        nn::MultiHeadSelfAttention(p + ".attn", d, static_cast<std::size_t>(config_.heads), rng),
        nn::FeedForward(p + ".ff", d, ff, rng),
        nn::Linear(p + ".modulation", d, 6 * d, rng, 0.0)});
  }
  final_modulation_ = nn::Linear("fdfd.final.modulation", d, 2 * d, rng, 0.0);
  final_projection_ = nn::Linear("fdfd.final.projection", d, out_streams * d, rng);
  prosody_head_ = nn::Linear(single_head_ ? "fdfd.shared_head" : "fdfd.prosody_head", d, v, rng);
  if (!single_head_) acoustic_head_ = nn::Linear("fdfd.acoustic_head", d, v, rng);
}

StreamEmbeddings Fdfd::embed_streams(const MaskedSequence& xt,
                                     const ConditioningContext& ctx) const {
  const auto m = static_cast<std::size_t>(config_.prosody_streams);
  const auto n = static_cast<std::size_t>(config_.content_streams);
  const auto k = static_cast<std::size_t>(config_.acoustic_streams);
  const auto d = static_cast<std::size_t>(config_.hidden);
  const std::size_t lp = ctx.prompt_length();
  const std::size_t L = xt.tokens.length;
  if (xt.vocab != config_.vocab) throw DimensionError("fdfd: vocabulary mismatch");
  if (xt.tokens.streams != m + k) {
    throw DimensionError("fdfd: state has " + std::to_string(xt.tokens.streams) +
                         " streams, expected m + k = " + std::to_string(m + k));
  }
  if (ctx.ref_prosody.streams != m || ctx.ref_acoustic.streams != k ||
      ctx.ref_acoustic.length != lp) {
    throw DimensionError("fdfd: reference prompt layout does not match config");
  }

  StreamEmbeddings e;
  for (std::size_t i = 0; i < m; ++i) {
    e.prosody.push_back(prosody_embedder_.forward(
        joined_row(ctx.ref_prosody, xt.tokens, i, i, config_.vocab, "prosody")));
  }
  for (std::size_t i = 0; i < k; ++i) {
    e.acoustic.push_back(acoustic_embedder_.forward(
        joined_row(ctx.ref_acoustic, xt.tokens, i, m + i, config_.vocab, "acoustic")));
  }
  if (config_.use_content) {
    if (ctx.content.size() != n) {
      throw DimensionError("fdfd: expected " + std::to_string(n) + " content streams, got " +
                           std::to_string(ctx.content.size()));
    }
    const Var placeholder = Var::constant(Tensor({lp, d}));
    for (const auto& hc : ctx.content) {
      if (hc.rows() != L || hc.cols() != d) {
        throw DimensionError("fdfd: content embedding is " + nn::shape_string(hc.shape()) +
                             ", expected " + std::to_string(L) + " x " + std::to_string(d));
      }
      if (lp == 0) {
        e.content.push_back(hc);
      } else {
        const Var parts[] = {placeholder, hc};
        e.content.push_back(nn::concat_rows(parts));
      }
    }
  } else {
    const Var zeros = Var::constant(Tensor({lp + L, d}));
    e.content.assign(n, zeros);
  }
  return e;
}

Var Fdfd::assemble_context(const StreamEmbeddings& e) const {
  std::vector<Var> blocks;
  blocks.reserve(e.prosody.size() + e.content.size() + e.acoustic.size());
  auto add_group = [&](const std::vector<Var>& group, const nn::Parameter& g) {
    for (const auto& x : group) {
      blocks.push_back(config_.use_attribute_embeddings ? nn::add_row(x, g.var()) : x);
    }
  };
  add_group(e.prosody, g_p_);
  add_group(e.content, g_c_);
  add_group(e.acoustic, g_a_);
  return context_projection_.forward(nn::concat_cols(blocks));
}

Var Fdfd::global_condition(double t, std::span<const double> speaker) const {
  if (!(t >= 0.0 && t <= 1.0)) throw DomainError("fdfd: time outside [0, 1]");
  const auto d = static_cast<std::size_t>(config_.hidden);
  Var c = time_out_.forward(
      nn::silu(time_hidden_.forward(Var::constant(nn::timestep_features(t, d)))));
  if (config_.use_speaker) {
    if (speaker.size() != static_cast<std::size_t>(config_.speaker_dim)) {
      throw DimensionError("fdfd: speaker embedding has " + std::to_string(speaker.size()) +
                           " entries, expected " + std::to_string(config_.speaker_dim));
    }
    Tensor s({1, speaker.size()}, std::vector<double>(speaker.begin(), speaker.end()));
    c = nn::add(c, speaker_projection_.forward(Var::constant(std::move(s))));
  }
  return c;
}

std::vector<Var> Fdfd::backbone(const Var& z, double t, std::span<const double> speaker,
                                std::size_t prompt_length) const {
  const auto d = static_cast<std::size_t>(config_.hidden);
  const std::size_t total = z.rows();
  if (prompt_length >= total) throw DimensionError("fdfd: no target frames after the prompt");
  const Var c = nn::silu(global_condition(t, speaker));
  auto chunk = [d](const Var& mod, std::size_t i) {
    return nn::slice_cols(mod, i * d, (i + 1) * d);
  };

  Var x = nn::add(z, Var::constant(nn::sinusoidal_positions(total, d)));
  for (const auto& b : blocks_) {
    const Var mod = b.modulation.forward(c);
    const Var a = b.attn.forward(nn::modulate(nn::layer_norm(x), chunk(mod, 0), chunk(mod, 1)));
    x = nn::add(x, nn::mul_row(a, chunk(mod, 2)));
    const Var f = b.ff.forward(nn::modulate(nn::layer_norm(x), chunk(mod, 3), chunk(mod, 4)));
    x = nn::add(x, nn::mul_row(f, chunk(mod, 5)));
  }
  const Var fmod = final_modulation_.forward(c);
  const Var y = final_projection_.forward(
      nn::modulate(nn::layer_norm(x), chunk(fmod, 0), chunk(fmod, 1)));
  const Var target = nn::slice_rows(y, prompt_length, total);

  std::vector<Var> h;
  const auto streams = static_cast<std::size_t>(config_.streams());
  h.reserve(streams);
  for (std::size_t s = 0; s < streams; ++s) h.push_back(chunk(target, s));
  return h;
}

std::vector<Var> Fdfd::predict_heads(const std::vector<Var>& h) const {
  const auto m = static_cast<std::size_t>(config_.prosody_streams);
  if (h.size() != static_cast<std::size_t>(config_.streams())) {
    throw DimensionError("fdfd: head input has wrong stream count");
  }
  const nn::Linear& acoustic = single_head_ ? prosody_head_ : acoustic_head_;
  std::vector<Var> logits;
  logits.reserve(h.size());
  for (std::size_t s = 0; s < h.size(); ++s) {
    logits.push_back(s < m ? prosody_head_.forward(h[s]) : acoustic.forward(h[s]));
  }
  return logits;
}

std::vector<Var> Fdfd::denoise_logits(const MaskedSequence& xt,
                                      const ConditioningContext& ctx) const {
  const Var z = assemble_context(embed_streams(xt, ctx));
  return predict_heads(backbone(z, xt.t, ctx.speaker, ctx.prompt_length()));
}

Tensor Fdfd::denoise(const MaskedSequence& xt, const ConditioningContext& ctx) const {
  return posterior_from_logits(denoise_logits(xt, ctx));
}

void Fdfd::collect(nn::ParameterList& out) {
  prosody_embedder_.collect(out);
  acoustic_embedder_.collect(out);
  if (config_.use_attribute_embeddings) {
    out.push_back(&g_p_);
    out.push_back(&g_c_);
    out.push_back(&g_a_);
  }
  context_projection_.collect(out);
  time_hidden_.collect(out);
  time_out_.collect(out);
  if (config_.use_speaker) speaker_projection_.collect(out);
  for (auto& b : blocks_) {
    b.attn.collect(out);
    b.ff.collect(out);
    b.modulation.collect(out);
  }
  final_modulation_.collect(out);
  final_projection_.collect(out);
  prosody_head_.collect(out);
  if (!single_head_) acoustic_head_.collect(out);
}

Tensor posterior_from_logits(const std::vector<Var>& logits) {
  if (logits.empty()) throw DimensionError("posterior: no logit streams");
  const std::size_t L = logits.front().rows();
  const std::size_t v = logits.front().cols();
  Tensor out({logits.size(), L, v});
  for (std::size_t s = 0; s < logits.size(); ++s) {
    const Tensor& lg = logits[s].value();
    if (lg.rows() != L || lg.cols() != v) throw DimensionError("posterior: ragged logits");
    for (std::size_t l = 0; l < L; ++l) {
      const auto row = lg.row(l);
      double mx = row[0];
      for (double x : row) mx = std::max(mx, x);
      double z = 0.0;
      double* dst = out.storage().data() + (s * L + l) * v;
      for (std::size_t x = 0; x < v; ++x) z += (dst[x] = std::exp(row[x] - mx));
      for (std::size_t x = 0; x < v; ++x) dst[x] /= z;
    }
  }
  return out;
}

}  // namespace diflow
