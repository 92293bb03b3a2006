#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <set>

#include "diflow/corpus.hpp"
#include "diflow/errors.hpp"
#include "test_support.hpp"

using diflow::Corpus;
using diflow::CorpusConfig;
using diflow::FactorizedSequence;
using diflow::RngStream;
using diflow::Token;
using diflow::TokenGrid;
using diflow::ToyCodecRules;
using diflow::Utterance;

namespace {

int mod(long long a, int v) { return static_cast<int>(((a % v) + v) % v); }

// Reference rules written out longhand.
Token ref_content(int j, Token ph, int v) { return mod((1 + 4 * j) * ph + 3 * j, v); }
Token ref_prosody(const Utterance& u, int j, std::size_t l, int cls, int v) {
  const Token c = u.content.at(static_cast<std::size_t>(j) % u.content.streams, l);
  return mod(3 * c + 1 + 7 * cls + 13 * j, v);
}
Token ref_acoustic(Token p0, int j, int cls, int v) { return mod(p0 + 11 * cls + 5 * j, v); }

CorpusConfig small_config() {
  CorpusConfig c;
  c.train_utterances = 300;
  c.heldout_utterances = 40;
  return c;
}

}  // namespace

TEST(ToyCodec, DirectRuleExample) {
  CorpusConfig c;
  c.noise = 0.0;
  const ToyCodecRules rules(c);
  EXPECT_EQ(rules.content(0, 0), 0);
  const std::vector<Token> column = {0, rules.content(1, 0)};
  const Token p = rules.prosody(0, column, 0);
  EXPECT_EQ(p, 1);
  EXPECT_EQ(rules.acoustic(0, p, 0), 1);
}

TEST(ToyCodec, NoiselessStreamsFollowRulesEverywhere) {
  CorpusConfig c = small_config();
  c.noise = 0.0;
  c.prosody_streams = 2;  // exercises the multi-stream prosody rule
  const Corpus corpus = diflow::generate_corpus(c);
  std::size_t checked = 0;
  for (const auto* split : {&corpus.train, &corpus.heldout}) {
    for (const auto& u : *split) {
      const int cls = u.speaker.style_class;
      std::size_t pos = 0;
      for (std::size_t i = 0; i < u.phonemes.size(); ++i) {
        for (Token d = 0; d < u.durations[i]; ++d, ++pos) {
          for (int j = 0; j < c.content_streams; ++j) {
            ASSERT_EQ(u.content.at(j, pos), ref_content(j, u.phonemes[i], c.vocab));
          }
          for (int j = 0; j < c.prosody_streams; ++j) {
            ASSERT_EQ(u.prosody.at(j, pos), ref_prosody(u, j, pos, cls, c.vocab));
          }
          for (int j = 0; j < c.acoustic_streams; ++j) {
            ASSERT_EQ(u.acoustic.at(j, pos), ref_acoustic(u.prosody.at(0, pos), j, cls, c.vocab));
          }
          ++checked;
        }
      }
      EXPECT_EQ(pos, u.length());
    }
  }
  EXPECT_GT(checked, 1000u);
}

TEST(ToyCodec, ShapeAndRangeInvariants) {
  const CorpusConfig c = small_config();
  const Corpus corpus = diflow::generate_corpus(c);
  ASSERT_EQ(corpus.train.size(), 300u);
  ASSERT_EQ(corpus.heldout.size(), 40u);
  std::set<std::uint64_t> ids;
  for (const auto* split : {&corpus.train, &corpus.heldout}) {
    for (const auto& u : *split) {
      ids.insert(u.id);
      EXPECT_GE(u.phonemes.size(), 4u);
      EXPECT_LE(u.phonemes.size(), 12u);
      std::size_t L = 0;
      for (std::size_t i = 0; i < u.phonemes.size(); ++i) {
        EXPECT_GE(u.phonemes[i], 0);
        EXPECT_LT(u.phonemes[i], c.phonemes);
        EXPECT_GE(u.durations[i], 1);
        EXPECT_LE(u.durations[i], 4);
        L += static_cast<std::size_t>(u.durations[i]);
      }
      EXPECT_EQ(L, u.length());
      EXPECT_EQ(u.prosody.length, L);
      EXPECT_EQ(u.acoustic.length, L);
      EXPECT_EQ(u.content.streams, 2u);
      EXPECT_EQ(u.prosody.streams, 1u);
      EXPECT_EQ(u.acoustic.streams, 3u);
      EXPECT_EQ(u.speaker.embedding.size(), 16u);
      for (const TokenGrid* g : {&u.content, &u.prosody, &u.acoustic}) {
        for (Token t : g->data) {
          EXPECT_GE(t, 0);
          EXPECT_LT(t, c.vocab);
        }
      }
    }
  }
  EXPECT_EQ(ids.size(), 340u);
}

TEST(ToyCodec, NoiseRateMatchesEpsilon) {
  CorpusConfig c = small_config();
  c.noise = 0.1;
  c.train_utterances = 5000;
  c.heldout_utterances = 0;
  const Corpus corpus = diflow::generate_corpus(c);
  const ToyCodecRules rules(c);
  const auto r = diflow::rule_violation_rate(rules, corpus.train);
  std::size_t positions = 0;
  for (const auto& u : corpus.train) positions += u.length();
  ASSERT_GT(positions, 50000u);
  const double expect = c.noise * (c.vocab - 1) / c.vocab;
  const double sigma_p = std::sqrt(expect * (1 - expect) / static_cast<double>(positions));
  const double sigma_a = std::sqrt(expect * (1 - expect) / static_cast<double>(3 * positions));
  EXPECT_NEAR(r.prosody, expect, 3 * sigma_p);
  // Acoustic positions of one frame share a class but draw noise independently.
  EXPECT_NEAR(r.acoustic, expect, 3 * sigma_a);
}

TEST(ToyCodec, HeldOutClassesAreDisjoint) {
  const Corpus corpus = diflow::generate_corpus(small_config());
  std::set<int> train, held;
  for (const auto& u : corpus.train) train.insert(u.speaker.style_class);
  for (const auto& u : corpus.heldout) held.insert(u.speaker.style_class);
  EXPECT_EQ(train.size(), 12u);
  EXPECT_EQ(held.size(), 4u);
  for (int cls : held) {
    EXPECT_GE(cls, 12);
    EXPECT_EQ(train.count(cls), 0u);
  }
  EXPECT_NO_THROW(diflow::check_heldout_split(corpus));

  Corpus leaked = corpus;
  leaked.train.push_back(corpus.heldout.front());
  EXPECT_THROW(diflow::check_heldout_split(leaked), diflow::ConfigError);
  // The split is asserted again when a corpus is loaded.
  EXPECT_THROW(diflow::deserialize_corpus(diflow::serialize_corpus(leaked)), diflow::FormatError);
}

TEST(ToyCodec, StyleEmbeddingsSeparateByClass) {
  const Corpus corpus = diflow::generate_corpus(small_config());
  const auto sep = diflow::style_separability(corpus.train);
  EXPECT_GT(sep.intra - sep.inter, 0.2);
}

TEST(ToyCodec, CloningAccuracyOracle) {
  CorpusConfig c = small_config();
  c.noise = 0.0;
  const Corpus corpus = diflow::generate_corpus(c);
  const ToyCodecRules rules(c);
  RngStream rng(3);
  double random_sum = 0.0;
  std::size_t random_n = 0;
  for (const auto& u : corpus.heldout) {
    const FactorizedSequence gt{u.prosody, u.acoustic, c.vocab};
    const auto acc = diflow::cloning_accuracy(rules, gt, u.content, u.speaker.style_class);
    EXPECT_EQ(acc.prosody, 1.0);
    EXPECT_EQ(acc.acoustic, 1.0);
    EXPECT_EQ(acc.combined, 1.0);
    // The wrong reference class never matches (7 and 11 are units mod 64).
    const auto wrong =
        diflow::cloning_accuracy(rules, gt, u.content, (u.speaker.style_class + 1) % c.classes);
    EXPECT_EQ(wrong.combined, 0.0);
    FactorizedSequence noise = gt;
    for (auto& t : noise.prosody.data) t = static_cast<Token>(rng.uniform_int(0, c.vocab - 1));
    for (auto& t : noise.acoustic.data) t = static_cast<Token>(rng.uniform_int(0, c.vocab - 1));
    const auto r = diflow::cloning_accuracy(rules, noise, u.content, u.speaker.style_class);
    random_sum += r.combined * static_cast<double>(4 * u.length());
    random_n += 4 * u.length();
  }
  const double chance = random_sum / static_cast<double>(random_n);
  EXPECT_NEAR(chance, 1.0 / c.vocab, 3 * std::sqrt((1.0 / 64) / static_cast<double>(random_n)));
}

TEST(ToyCodec, CloningAccuracyShapeErrors) {
  const CorpusConfig c = small_config();
  const ToyCodecRules rules(c);
  FactorizedSequence g{TokenGrid(1, 3), TokenGrid(3, 3), c.vocab};
  EXPECT_THROW(diflow::cloning_accuracy(rules, g, TokenGrid(2, 4), 0), diflow::DimensionError);
  const auto empty = diflow::cloning_accuracy(
      rules, FactorizedSequence{TokenGrid(1, 0), TokenGrid(3, 0), c.vocab}, TokenGrid(2, 0), 0);
  EXPECT_EQ(empty.combined, 0.0);
}

TEST(CorpusConfig, Validation) {
  CorpusConfig c;
  EXPECT_NO_THROW(c.validate());
  auto bad = [](auto mutate) {
    CorpusConfig x;
    mutate(x);
    EXPECT_THROW(x.validate(), diflow::ConfigError);
  };
  bad([](CorpusConfig& x) { x.classes = 1; x.train_classes = 1; });
  bad([](CorpusConfig& x) { x.train_classes = 16; });
  bad([](CorpusConfig& x) { x.vocab = 1; });
  bad([](CorpusConfig& x) { x.noise = 1.5; });
  bad([](CorpusConfig& x) { x.min_duration = 0; });
  bad([](CorpusConfig& x) { x.max_phonemes = 2; });
  bad([](CorpusConfig& x) { x.acoustic_streams = 0; });
}

TEST(CorpusFile, RoundTripIsIdentity) {
  diflow::testing::TempDir dir("corpus");
  const Corpus corpus = diflow::generate_corpus(small_config());
  diflow::write_corpus(dir / "c.bin", corpus);
  EXPECT_EQ(diflow::read_corpus(dir / "c.bin"), corpus);
  EXPECT_EQ(diflow::serialize_corpus(diflow::read_corpus(dir / "c.bin")),
            diflow::serialize_corpus(corpus));
}

TEST(CorpusFile, EmptyCorpusRoundTrips) {
  CorpusConfig c;
  c.train_utterances = 0;
  c.heldout_utterances = 0;
  const Corpus corpus = diflow::generate_corpus(c);
  const Corpus back = diflow::deserialize_corpus(diflow::serialize_corpus(corpus));
  EXPECT_EQ(back, corpus);
  EXPECT_TRUE(back.train.empty());
}

TEST(CorpusFile, SameSeedIsByteIdentical) {
  CorpusConfig c = small_config();
  c.seed = 7;
  EXPECT_EQ(diflow::serialize_corpus(diflow::generate_corpus(c)),
            diflow::serialize_corpus(diflow::generate_corpus(c)));
  CorpusConfig d = c;
  d.seed = 8;
  EXPECT_NE(diflow::serialize_corpus(diflow::generate_corpus(c)),
            diflow::serialize_corpus(diflow::generate_corpus(d)));
}

TEST(CorpusFile, CorruptionIsDetected) {
  CorpusConfig c = small_config();
  c.train_utterances = 5;
  c.heldout_utterances = 2;
  const auto bytes = diflow::serialize_corpus(diflow::generate_corpus(c));

  auto magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(diflow::deserialize_corpus(magic), diflow::FormatError);

  auto version = bytes;
  version[4] = 99;
  EXPECT_THROW(diflow::deserialize_corpus(version), diflow::FormatError);

  auto flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x10;
  EXPECT_THROW(diflow::deserialize_corpus(flipped), diflow::FormatError);

  for (std::size_t cut : {std::size_t{0}, std::size_t{6}, std::size_t{40}, bytes.size() - 1}) {
    const std::vector<std::uint8_t> truncated(bytes.begin(), bytes.begin() + static_cast<long>(cut));
    EXPECT_THROW(diflow::deserialize_corpus(truncated), diflow::FormatError) << cut;
  }
}

TEST(CorpusFile, ReadErrorsNameThePath) {
  diflow::testing::TempDir dir("corpus_err");
  {
    std::ofstream f(dir / "junk.bin", std::ios::binary);
    f << "not a corpus at all";
  }
  try {
    diflow::read_corpus(dir / "junk.bin");
    FAIL() << "expected FormatError";
  } catch (const diflow::FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("junk.bin"), std::string::npos);
  }
  EXPECT_THROW(diflow::read_corpus(dir / "missing.bin"), diflow::FormatError);
}
