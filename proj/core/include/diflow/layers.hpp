#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "diflow/autograd.hpp"
#include "diflow/rng.hpp"

namespace diflow::nn {

class Linear {
 public:
  Linear() = default;
  // Weights ~ N(0, init_scale^2 / in); init_scale 0 gives an all-zero layer.
  Linear(const std::string& name, std::size_t in, std::size_t out, RngStream& rng,
         double init_scale = 1.0, bool bias = true);

  Var forward(const Var& x) const;
  void collect(ParameterList& out);
  std::size_t in_features() const { return weight_.value().dim(0); }
  std::size_t out_features() const { return weight_.value().dim(1); }
  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }

 private:
  Parameter weight_;
  Parameter bias_;
  bool has_bias_ = true;
};

class Embedding {
 public:
  Embedding() = default;
  Embedding(const std::string& name, std::size_t rows, std::size_t dim, RngStream& rng,
            double stddev = 1.0);

  Var forward(std::span<const std::int32_t> ids) const;
  void collect(ParameterList& out);
  Parameter& table() { return table_; }
  std::size_t rows() const { return table_.value().dim(0); }

 private:
  Parameter table_;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(const std::string& name, std::size_t dim);

  Var forward(const Var& x) const;
  void collect(ParameterList& out);

 private:
  Parameter gain_;
  Parameter bias_;
};

class MultiHeadSelfAttention {
 public:
  MultiHeadSelfAttention() = default;
  MultiHeadSelfAttention(const std::string& name, std::size_t dim, std::size_t heads,
                         RngStream& rng);

  Var forward(const Var& x) const;
  void collect(ParameterList& out);

 private:
  std::size_t dim_ = 0;
  std::size_t heads_ = 1;
  Linear qkv_;
  Linear out_;
};

class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(const std::string& name, std::size_t dim, std::size_t hidden, RngStream& rng);

  Var forward(const Var& x) const;
  void collect(ParameterList& out);

 private:
  Linear up_;
  Linear down_;
};

// Pre-norm transformer encoder block: self-attention then feed-forward,
// each wrapped in a residual connection.
class TransformerBlock {
 public:
  TransformerBlock() = default;
  TransformerBlock(const std::string& name, std::size_t dim, std::size_t heads,
                   std::size_t ff_hidden, RngStream& rng);

  Var forward(const Var& x) const;
  void collect(ParameterList& out);

 private:
  LayerNorm norm1_;
  MultiHeadSelfAttention attn_;
  LayerNorm norm2_;
  FeedForward ff_;
};

// Fixed sinusoidal table of shape length x dim.
Tensor sinusoidal_positions(std::size_t length, std::size_t dim);

// Sinusoidal features of a scalar time in [0, 1], shape 1 x dim.
Tensor timestep_features(double t, std::size_t dim);

}  // namespace diflow::nn
