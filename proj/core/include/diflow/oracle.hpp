#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "diflow/denoiser.hpp"
#include "diflow/sequence.hpp"
#include "diflow/tensor.hpp"

namespace diflow {

// Explicit probability table over every sequence in [v]^length. Sequences are
// indexed big-endian: position 0 is the most significant digit.
class ExplicitTarget {
 public:
  static constexpr std::size_t kMaxStates = std::size_t{1} << 20;

  ExplicitTarget(std::size_t length, int vocab, std::vector<double> table);
  static ExplicitTarget uniform(std::size_t length, int vocab);

  std::size_t length() const { return length_; }
  int vocab() const { return vocab_; }
  std::size_t states() const { return table_.size(); }
  std::span<const double> table() const { return table_; }
  double probability(std::span<const Token> sequence) const;

  std::size_t index_of(std::span<const Token> sequence) const;
  std::vector<Token> sequence_at(std::size_t index) const;
  // Per-position marginal distributions, length x vocab.
  nn::Tensor marginals() const;
  // Draws one sequence from the table.
  std::vector<Token> sample(RngStream& rng) const;

 private:
  std::size_t length_;
  int vocab_;
  std::vector<double> table_;
};

// Number of states v^length, or throws DomainError past the enumeration cap.
std::size_t enumeration_size(std::size_t length, int vocab);

// Exact p(x_1^i | observed tokens), length x vocab. Masked positions (id ==
// vocab) carry no evidence. Throws InconsistencyError if the observed
// pattern has zero probability.
nn::Tensor exact_posterior(const ExplicitTarget& q, std::span<const Token> tokens);
nn::Tensor exact_posterior(const ExplicitTarget& q, const MaskedSequence& xt);

ExplicitTarget empirical_distribution(std::span<const std::vector<Token>> samples, int vocab,
                                      std::size_t length);
double total_variation(const ExplicitTarget& p, const ExplicitTarget& q);

// Exact denoiser for a streams x length layout whose flattening (stream-major)
// matches q. Posteriors are memoized by state, which is valid because they do
// not depend on t.
Denoiser make_oracle_denoiser(const ExplicitTarget& q, std::size_t streams,
                              std::size_t length);

// Text fixture format:
//   vocab <v> length <L>
//   <tok_0> ... <tok_{L-1}> <probability>
// Blank lines and lines starting with '#' are ignored; missing sequences have
// probability 0. Probabilities must sum to 1 within 1e-9 and are renormalized.
ExplicitTarget read_explicit_target(const std::filesystem::path& path);
ExplicitTarget parse_explicit_target(const std::string& text);
void write_explicit_target(const std::filesystem::path& path, const ExplicitTarget& q);

}  // namespace diflow
