#pragma once

#include <cstdint>
#include <span>

namespace diflow {

// Counter-based random stream. Draw i of a stream is a pure function of
// (seed, i), so results never depend on evaluation order, and independent
// sub-streams are obtained with derive().
class RngStream {
 public:
  constexpr RngStream() = default;
  constexpr explicit RngStream(std::uint64_t seed, std::uint64_t counter = 0)
      : seed_(seed), counter_(counter) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64();
  // Uniform on [0, 1) with 53 bits of resolution.
  double uniform();
  // Uniform integer in [lo, hi] (inclusive).
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  double normal(double mean = 0.0, double stddev = 1.0);
  bool bernoulli(double p) { return uniform() < p; }
  // Index drawn from an unnormalized nonnegative weight vector.
  std::size_t categorical(std::span<const double> weights);

  // Fresh stream keyed by (this seed, key); does not advance this stream.
  RngStream derive(std::uint64_t key) const;

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x);

}  // namespace diflow
