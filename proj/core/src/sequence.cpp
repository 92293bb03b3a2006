#include "diflow/sequence.hpp"

#include <algorithm>
#include <string>

#include "diflow/errors.hpp"

namespace diflow {

TokenGrid TokenGrid::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > length) throw DimensionError("TokenGrid::slice: bad range");
  TokenGrid out(streams, end - begin);
  for (std::size_t s = 0; s < streams; ++s) {
    for (std::size_t l = begin; l < end; ++l) out.at(s, l - begin) = at(s, l);
  }
  return out;
}

TokenGrid TokenGrid::stacked(const TokenGrid& other) const {
  if (streams != 0 && other.streams != 0 && length != other.length) {
    throw DimensionError("TokenGrid::stacked: length mismatch");
  }
  TokenGrid out(streams + other.streams, streams ? length : other.length);
  std::copy(data.begin(), data.end(), out.data.begin());
  std::copy(other.data.begin(), other.data.end(),
            out.data.begin() + static_cast<long>(data.size()));
  return out;
}

void FactorizedSequence::validate() const {
  if (prosody.length != acoustic.length) {
    throw DimensionError("FactorizedSequence: prosody and acoustic lengths differ");
  }
  auto check = [&](const TokenGrid& g, const char* what) {
    if (g.data.size() != g.streams * g.length) {
      throw DimensionError(std::string("FactorizedSequence: malformed ") + what + " grid");
    }
    for (Token t : g.data) {
      if (t < 0 || t >= vocab) {
        throw IndexError(std::string("FactorizedSequence: ") + what + " token " +
                         std::to_string(t) + " outside [0, " + std::to_string(vocab) + ")");
      }
    }
  };
  check(prosody, "prosody");
  check(acoustic, "acoustic");
}

std::size_t MaskedSequence::masked_count() const {
  return static_cast<std::size_t>(std::count(tokens.data.begin(), tokens.data.end(), vocab));
}

MaskedSequence MaskedSequence::all_masked(std::size_t streams, std::size_t length,
                                          int vocab) {
  MaskedSequence x;
  x.tokens = TokenGrid(streams, length, vocab);
  x.t = 0.0;
  x.vocab = vocab;
  return x;
}

MaskedSequence MaskedSequence::clean(const FactorizedSequence& x1) {
  MaskedSequence x;
  x.tokens = x1.stacked();
  x.t = 1.0;
  x.vocab = x1.vocab;
  return x;
}

FactorizedSequence unstack(const TokenGrid& grid, std::size_t prosody_streams, int vocab) {
  if (prosody_streams > grid.streams) throw DimensionError("unstack: too many prosody streams");
  FactorizedSequence out;
  out.vocab = vocab;
  out.prosody = TokenGrid(prosody_streams, grid.length);
  out.acoustic = TokenGrid(grid.streams - prosody_streams, grid.length);
  for (std::size_t s = 0; s < grid.streams; ++s) {
    for (std::size_t l = 0; l < grid.length; ++l) {
      const Token tok = grid.at(s, l);
      if (tok == vocab) throw InconsistencyError("unstack: grid still contains MASK");
      if (s < prosody_streams) {
        out.prosody.at(s, l) = tok;
      } else {
        out.acoustic.at(s - prosody_streams, l) = tok;
      }
    }
  }
  return out;
}

MaskedSequence corrupt(const FactorizedSequence& x1, double t, const Scheduler& s,
                       RngStream& rng) {
  const double keep = kappa(s, t);
  MaskedSequence xt;
  xt.tokens = x1.stacked();
  xt.t = t;
  xt.vocab = x1.vocab;
  if (keep >= 1.0) return xt;
  for (auto& tok : xt.tokens.data) {
    if (keep <= 0.0 || !(rng.uniform() < keep)) tok = xt.vocab;
  }
  return xt;
}

}  // namespace diflow
