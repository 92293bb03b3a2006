#include "diflow/layers.hpp"

#include <cmath>

#include "diflow/errors.hpp"

namespace diflow::nn {

namespace {

Tensor random_normal(Shape shape, double stddev, RngStream& rng) {
  Tensor t(std::move(shape));
  if (stddev == 0.0) return t;
  for (auto& v : t.data()) v = rng.normal(0.0, stddev);
  return t;
}

}  // namespace

Linear::Linear(const std::string& name, std::size_t in, std::size_t out, RngStream& rng,
               double init_scale, bool bias)
    : weight_(name + ".weight",
              random_normal({in, out}, init_scale / std::sqrt(static_cast<double>(in)), rng)),
      has_bias_(bias) {
  if (has_bias_) bias_ = Parameter(name + ".bias", Tensor({out}, 0.0));
}

Var Linear::forward(const Var& x) const {
  return linear(x, weight_.var(), has_bias_ ? bias_.var() : Var());
}

void Linear::collect(ParameterList& out) {
  out.push_back(&weight_);
  if (has_bias_) out.push_back(&bias_);
}

Embedding::Embedding(const std::string& name, std::size_t rows, std::size_t dim,
                     RngStream& rng, double stddev)
    : table_(name + ".table", random_normal({rows, dim}, stddev, rng)) {}

Var Embedding::forward(std::span<const std::int32_t> ids) const {
  return embedding_lookup(table_, ids);
}

void Embedding::collect(ParameterList& out) { out.push_back(&table_); }

LayerNorm::LayerNorm(const std::string& name, std::size_t dim)
    : gain_(name + ".gain", Tensor({dim}, 1.0)), bias_(name + ".bias", Tensor({dim}, 0.0)) {}

Var LayerNorm::forward(const Var& x) const { return layer_norm(x, gain_, bias_); }

void LayerNorm::collect(ParameterList& out) {
  out.push_back(&gain_);
  out.push_back(&bias_);
}

MultiHeadSelfAttention::MultiHeadSelfAttention(const std::string& name, std::size_t dim,
                                               std::size_t heads, RngStream& rng)
    : dim_(dim),
      heads_(heads),
      qkv_(name + ".qkv", dim, 3 * dim, rng),
      out_(name + ".out", dim, dim, rng) {
  if (heads == 0 || dim % heads != 0) {
    throw DimensionError("attention: width " + std::to_string(dim) +
                         " not divisible by heads " + std::to_string(heads));
  }
}

Var MultiHeadSelfAttention::forward(const Var& x) const {
  const Var qkv = qkv_.forward(x);
  const std::size_t dh = dim_ / heads_;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> outputs;
  outputs.reserve(heads_);
  for (std::size_t h = 0; h < heads_; ++h) {
    const Var q = slice_cols(qkv, h * dh, (h + 1) * dh);
    const Var k = slice_cols(qkv, dim_ + h * dh, dim_ + (h + 1) * dh);
    const Var v = slice_cols(qkv, 2 * dim_ + h * dh, 2 * dim_ + (h + 1) * dh);
    const Var scores = scale(matmul(q, transpose(k)), inv_sqrt);
    outputs.push_back(matmul(softmax(scores), v));
  }
  const Var merged = heads_ == 1 ? outputs.front() : concat_cols(outputs);
  return out_.forward(merged);
}

void MultiHeadSelfAttention::collect(ParameterList& out) {
  qkv_.collect(out);
  out_.collect(out);
}

FeedForward::FeedForward(const std::string& name, std::size_t dim, std::size_t hidden,
                         RngStream& rng)
    : up_(name + ".up", dim, hidden, rng), down_(name + ".down", hidden, dim, rng) {}

Var FeedForward::forward(const Var& x) const { return down_.forward(gelu(up_.forward(x))); }

void FeedForward::collect(ParameterList& out) {
  up_.collect(out);
  down_.collect(out);
}

TransformerBlock::TransformerBlock(const std::string& name, std::size_t dim,
                                   std::size_t heads, std::size_t ff_hidden, RngStream& rng)
    : norm1_(name + ".norm1", dim),
      attn_(name + ".attn", dim, heads, rng),
      norm2_(name + ".norm2", dim),
      ff_(name + ".ff", dim, ff_hidden, rng) {}

Var TransformerBlock::forward(const Var& x) const {
  const Var h = add(x, attn_.forward(norm1_.forward(x)));
  return add(h, ff_.forward(norm2_.forward(h)));
}

void TransformerBlock::collect(ParameterList& out) {
  norm1_.collect(out);
  attn_.collect(out);
  norm2_.collect(out);
  ff_.collect(out);
}

Tensor sinusoidal_positions(std::size_t length, std::size_t dim) {
  Tensor t({length, dim});
  const std::size_t half = dim / 2;
  for (std::size_t pos = 0; pos < length; ++pos) {
    for (std::size_t i = 0; i < half; ++i) {
      const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) /
                                   static_cast<double>(half));
      const double arg = static_cast<double>(pos) * freq;
      t.at(pos, i) = std::sin(arg);
      t.at(pos, half + i) = std::cos(arg);
    }
  }
  return t;
}

Tensor timestep_features(double t, std::size_t dim) {
  Tensor out({1, dim});
  const std::size_t half = dim / 2;
  for (std::size_t i = 0; i < half; ++i) {
    const double freq =
        std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
    const double arg = 1000.0 * t * freq;
    out.at(0, i) = std::cos(arg);
    out.at(0, half + i) = std::sin(arg);
  }
  return out;
}

}  // namespace diflow::nn
