#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "diflow/rng.hpp"
#include "diflow/scheduler.hpp"

namespace diflow {

using Token = std::int32_t;

// streams x length grid of token ids, stored stream-major.
struct TokenGrid {
  std::size_t streams = 0;
  std::size_t length = 0;
  std::vector<Token> data;

  TokenGrid() = default;
  TokenGrid(std::size_t s, std::size_t l, Token fill = 0)
      : streams(s), length(l), data(s * l, fill) {}

  Token& at(std::size_t s, std::size_t l) { return data[s * length + l]; }
  Token at(std::size_t s, std::size_t l) const { return data[s * length + l]; }
  std::span<Token> stream(std::size_t s) { return {data.data() + s * length, length}; }
  std::span<const Token> stream(std::size_t s) const {
    return {data.data() + s * length, length};
  }
  // Columns [begin, end) of every stream.
  TokenGrid slice(std::size_t begin, std::size_t end) const;
  // Rows stacked: this grid's streams followed by other's.
  TokenGrid stacked(const TokenGrid& other) const;

  friend bool operator==(const TokenGrid&, const TokenGrid&) = default;
};

// Clean target x1 = prosody (m streams) followed by acoustic (k streams),
// over vocabulary [0, vocab). The id `vocab` is reserved for MASK.
struct FactorizedSequence {
  TokenGrid prosody;
  TokenGrid acoustic;
  int vocab = 0;

  std::size_t length() const { return prosody.length; }
  Token mask_id() const { return vocab; }
  TokenGrid stacked() const { return prosody.stacked(acoustic); }
  void validate() const;

  friend bool operator==(const FactorizedSequence&, const FactorizedSequence&) = default;
};

// Partially masked state x_t over the stacked (m+k) x L grid.
struct MaskedSequence {
  TokenGrid tokens;
  double t = 0.0;
  int vocab = 0;

  Token mask_id() const { return vocab; }
  bool is_masked(std::size_t s, std::size_t l) const { return tokens.at(s, l) == vocab; }
  std::size_t masked_count() const;

  static MaskedSequence all_masked(std::size_t streams, std::size_t length, int vocab);
  static MaskedSequence clean(const FactorizedSequence& x1);
};

// Splits a stacked grid back into prosody (first `prosody_streams` rows) and
// acoustic parts. Throws if any token is MASK.
FactorizedSequence unstack(const TokenGrid& grid, std::size_t prosody_streams, int vocab);

// Per-token mixture path sample: each token keeps its clean value with
// probability kappa(t) and becomes MASK otherwise.
MaskedSequence corrupt(const FactorizedSequence& x1, double t, const Scheduler& s,
                       RngStream& rng);

}  // namespace diflow
