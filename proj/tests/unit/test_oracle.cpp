#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "diflow/errors.hpp"
#include "diflow/oracle.hpp"
#include "diflow/rng.hpp"
#include "test_support.hpp"

using diflow::ExplicitTarget;
using diflow::RngStream;
using diflow::Token;

namespace {

ExplicitTarget random_target(std::size_t length, int vocab, RngStream& rng, double zero_p = 0.0) {
  std::vector<double> table(diflow::enumeration_size(length, vocab));
  double total = 0.0;
  for (auto& p : table) {
    p = rng.uniform() < zero_p ? 0.0 : rng.uniform() + 0.01;
    total += p;
  }
  if (total == 0.0) table[0] = total = 1.0;
  for (auto& p : table) p /= total;
  return ExplicitTarget(length, vocab, std::move(table));
}

// Product of independent per-position-block tables: positions [0, split)
// from qa, [split, L) from qb.
ExplicitTarget product(const ExplicitTarget& qa, const ExplicitTarget& qb) {
  const std::size_t L = qa.length() + qb.length();
  std::vector<double> table(qa.states() * qb.states());
  for (std::size_t i = 0; i < qa.states(); ++i) {
    for (std::size_t j = 0; j < qb.states(); ++j) table[i * qb.states() + j] = qa.table()[i] * qb.table()[j];
  }
  return ExplicitTarget(L, qa.vocab(), std::move(table));
}

// Independent reference: decode every index digit by digit, keep those that
// agree with the observed tokens, and accumulate mass per position.
std::vector<std::vector<double>> brute_posterior(const ExplicitTarget& q,
                                                 const std::vector<Token>& obs) {
  const int v = q.vocab();
  const std::size_t L = q.length();
  std::vector<std::vector<double>> acc(L, std::vector<double>(v, 0.0));
  double z = 0.0;
  for (std::size_t idx = 0; idx < q.states(); ++idx) {
    std::vector<Token> seq(L);
    std::size_t rem = idx;
    for (std::size_t i = L; i-- > 0;) {
      seq[i] = static_cast<Token>(rem % v);
      rem /= v;
    }
    bool ok = true;
    for (std::size_t i = 0; i < L; ++i) ok = ok && (obs[i] == v || obs[i] == seq[i]);
    if (!ok) continue;
    const double p = q.table()[idx];
    z += p;
    for (std::size_t i = 0; i < L; ++i) acc[i][seq[i]] += p;
  }
  for (auto& row : acc) {
    for (auto& x : row) x /= z;
  }
  return acc;
}

std::vector<Token> pattern(const std::vector<Token>& x, unsigned mask_bits, int v) {
  std::vector<Token> out = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (mask_bits & (1u << i)) out[i] = v;
  }
  return out;
}

}  // namespace

TEST(ExactPosterior, TwoPointExample) {
  const ExplicitTarget q(2, 2, {0.5, 0.0, 0.0, 0.5});
  const std::vector<Token> xt = {0, 2};
  const auto post = diflow::exact_posterior(q, xt);
  EXPECT_NEAR(post.at(1, 0), 1.0, 1e-15);
  EXPECT_NEAR(post.at(1, 1), 0.0, 1e-15);
  EXPECT_NEAR(post.at(0, 0), 1.0, 1e-15);
}

TEST(ExactPosterior, FullyMaskedGivesMarginals) {
  RngStream rng(1);
  const ExplicitTarget q = random_target(3, 4, rng);
  const std::vector<Token> xt(3, 4);
  const auto post = diflow::exact_posterior(q, xt);
  const auto marg = q.marginals();
  for (std::size_t i = 0; i < post.size(); ++i) EXPECT_NEAR(post.data()[i], marg.data()[i], 1e-14);
}

TEST(ExactPosterior, FullyUnmaskedGivesPointMass) {
  RngStream rng(2);
  const ExplicitTarget q = random_target(3, 3, rng);
  const std::vector<Token> xt = {2, 0, 1};
  const auto post = diflow::exact_posterior(q, xt);
  for (std::size_t i = 0; i < 3; ++i) {
    for (int x = 0; x < 3; ++x) EXPECT_EQ(post.at(i, static_cast<std::size_t>(x)), x == xt[i] ? 1.0 : 0.0);
  }
}

TEST(ExactPosterior, InconsistentEvidenceThrows) {
  const ExplicitTarget q(2, 2, {0.5, 0.0, 0.0, 0.5});
  const std::vector<Token> xt = {0, 1};
  EXPECT_THROW(diflow::exact_posterior(q, xt), diflow::InconsistencyError);
  const std::vector<Token> bad = {0, 3};
  EXPECT_THROW(diflow::exact_posterior(q, bad), diflow::IndexError);
  const std::vector<Token> short_state = {0};
  EXPECT_THROW(diflow::exact_posterior(q, short_state), diflow::DimensionError);
}

TEST(ExactPosteriorProperty, MatchesBruteForceOnEveryMaskPattern) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    RngStream rng(seed + 10);
    const ExplicitTarget q = random_target(3, 3, rng, 0.3);
    for (int rep = 0; rep < 4; ++rep) {
      const std::vector<Token> x1 = q.sample(rng);
      for (unsigned bits = 0; bits < 8; ++bits) {
        const auto obs = pattern(x1, bits, 3);
        const auto post = diflow::exact_posterior(q, obs);
        const auto ref = brute_posterior(q, obs);
        for (std::size_t i = 0; i < 3; ++i) {
          double row = 0.0;
          for (int x = 0; x < 3; ++x) {
            const double p = post.at(i, static_cast<std::size_t>(x));
            row += p;
            EXPECT_NEAR(p, ref[i][x], 1e-12);
          }
          EXPECT_NEAR(row, 1.0, 1e-10);
        }
      }
    }
  }
}

TEST(ExactPosteriorProperty, IndependentOfTime) {
  RngStream rng(3);
  const ExplicitTarget q = random_target(4, 2, rng);
  diflow::MaskedSequence a;
  a.vocab = 2;
  a.tokens = diflow::TokenGrid(1, 4);
  a.tokens.data = {1, 2, 0, 2};
  diflow::MaskedSequence b = a;
  a.t = 0.1;
  b.t = 0.85;
  const auto pa = diflow::exact_posterior(q, a);
  const auto pb = diflow::exact_posterior(q, b);
  EXPECT_EQ(pa.storage(), pb.storage());
}

TEST(ExactPosteriorProperty, FactorizedTargetDecouples) {
  // Positions 0-1 are "prosody", 2-3 "acoustic" under q = q_p * q_a.
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    RngStream rng(seed + 50);
    const ExplicitTarget qp = random_target(2, 3, rng);
    const ExplicitTarget qa = random_target(2, 3, rng);
    const ExplicitTarget q = product(qp, qa);
    const std::vector<Token> x1 = q.sample(rng);
    for (unsigned bits = 0; bits < 16; ++bits) {
      const auto obs = pattern(x1, bits, 3);
      const auto post = diflow::exact_posterior(q, obs);
      const std::vector<Token> obs_p(obs.begin(), obs.begin() + 2);
      const std::vector<Token> obs_a(obs.begin() + 2, obs.end());
      const auto pp = diflow::exact_posterior(qp, obs_p);
      const auto pa = diflow::exact_posterior(qa, obs_a);
      for (std::size_t i = 0; i < 2; ++i) {
        for (std::size_t x = 0; x < 3; ++x) {
          EXPECT_NEAR(post.at(i, x), pp.at(i, x), 1e-12);
          EXPECT_NEAR(post.at(i + 2, x), pa.at(i, x), 1e-12);
        }
      }
    }
  }
}

TEST(EmpiricalDistribution, Examples) {
  const std::vector<std::vector<Token>> s = {{0}, {0}, {1}};
  const auto e = diflow::empirical_distribution(s, 2, 1);
  EXPECT_NEAR(e.table()[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(e.table()[1], 1.0 / 3.0, 1e-15);
  const std::vector<std::vector<Token>> one = {{1, 0}};
  const auto pm = diflow::empirical_distribution(one, 2, 2);
  EXPECT_EQ(pm.table()[2], 1.0);
  EXPECT_THROW(diflow::empirical_distribution(std::span<const std::vector<Token>>(), 2, 2),
               diflow::DomainError);
}

TEST(EmpiricalDistribution, ConcentratesOnTarget) {
  RngStream rng(4);
  const ExplicitTarget q = random_target(2, 4, rng);
  std::vector<std::vector<Token>> samples;
  for (int i = 0; i < 100000; ++i) samples.push_back(q.sample(rng));
  EXPECT_LT(diflow::total_variation(diflow::empirical_distribution(samples, 4, 2), q), 0.02);
}

TEST(TotalVariation, Examples) {
  const ExplicitTarget p(1, 2, {0.5, 0.5});
  const ExplicitTarget q(1, 2, {0.75, 0.25});
  EXPECT_EQ(diflow::total_variation(p, p), 0.0);
  EXPECT_NEAR(diflow::total_variation(p, q), 0.25, 1e-15);
  EXPECT_NEAR(diflow::total_variation(ExplicitTarget(1, 2, {1, 0}), ExplicitTarget(1, 2, {0, 1})),
              1.0, 1e-15);
  EXPECT_THROW(diflow::total_variation(p, ExplicitTarget::uniform(2, 2)), diflow::DimensionError);
}

TEST(ExplicitTarget, ValidationAndIndexing) {
  EXPECT_THROW(ExplicitTarget(2, 2, {0.5, 0.5}), diflow::DimensionError);
  EXPECT_THROW(ExplicitTarget(1, 2, {0.5, 0.6}), diflow::DomainError);
  EXPECT_THROW(ExplicitTarget(1, 2, {1.5, -0.5}), diflow::DomainError);
  EXPECT_THROW(diflow::enumeration_size(21, 2), diflow::DomainError);
  EXPECT_EQ(diflow::enumeration_size(20, 2), std::size_t{1} << 20);
  const ExplicitTarget u = ExplicitTarget::uniform(3, 3);
  const std::vector<Token> seq = {1, 0, 2};
  EXPECT_EQ(u.index_of(seq), 9u + 2u);
  EXPECT_EQ(u.sequence_at(11), seq);
  EXPECT_NEAR(u.probability(seq), 1.0 / 27.0, 1e-15);
}

TEST(OracleDenoiser, MatchesExactPosteriorInLayout) {
  RngStream rng(5);
  const ExplicitTarget q = random_target(4, 3, rng);
  const auto den = diflow::make_oracle_denoiser(q, 2, 2);
  auto xt = diflow::MaskedSequence::all_masked(2, 2, 3);
  xt.tokens.at(1, 0) = 2;
  const auto out = den(xt);
  ASSERT_EQ(out.shape(), (diflow::nn::Shape{2, 2, 3}));
  const auto ref = diflow::exact_posterior(q, xt.tokens.data);
  EXPECT_EQ(out.storage(), ref.storage());
  EXPECT_THROW(diflow::make_oracle_denoiser(q, 3, 2), diflow::DimensionError);
}

TEST(ExplicitTargetText, RoundTripAndErrors) {
  diflow::testing::TempDir dir("oracle");
  RngStream rng(6);
  const ExplicitTarget q = random_target(2, 3, rng);
  diflow::write_explicit_target(dir / "q.txt", q);
  const ExplicitTarget back = diflow::read_explicit_target(dir / "q.txt");
  for (std::size_t i = 0; i < q.states(); ++i) EXPECT_NEAR(back.table()[i], q.table()[i], 1e-15);

  const auto parsed = diflow::parse_explicit_target("# fixture\nvocab 2 length 2\n0 0 0.5\n\n1 1 0.5\n");
  EXPECT_EQ(parsed.table()[0], 0.5);
  EXPECT_EQ(parsed.table()[3], 0.5);
  EXPECT_EQ(parsed.table()[1], 0.0);
  EXPECT_THROW(diflow::parse_explicit_target("0 0 1\n"), diflow::FormatError);
  EXPECT_THROW(diflow::parse_explicit_target("vocab 2 length 2\n0 0 0.5\n"), diflow::FormatError);
  EXPECT_THROW(diflow::parse_explicit_target("vocab 2 length 2\n0 2 1.0\n"), diflow::FormatError);
  EXPECT_THROW(diflow::parse_explicit_target("vocab 2 length 2\n0 1\n"), diflow::FormatError);
  EXPECT_THROW(diflow::read_explicit_target(dir / "missing.txt"), diflow::FormatError);
}
