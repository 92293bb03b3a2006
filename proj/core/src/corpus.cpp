#include "diflow/corpus.hpp"

#include <cmath>
#include <string>

#include "diflow/binary_io.hpp"
#include "diflow/errors.hpp"

namespace diflow {

namespace {

constexpr std::uint8_t kMagic[4] = {'D', 'F', 'T', 'C'};

int mod(long long a, int v) {
  const long long r = a % v;
  return static_cast<int>(r < 0 ? r + v : r);
}

// Keys of the derived random streams; changing them changes every corpus.
constexpr std::uint64_t kStyleStream = 0x5354594c45ULL;
constexpr std::uint64_t kTrainStream = 0x545241494eULL;
constexpr std::uint64_t kHeldoutStream = 0x48454c44ULL;

}  // namespace

void CorpusConfig::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError("corpus config: " + msg);
  };
  require(phonemes >= 1, "phonemes must be >= 1");
  require(classes >= 2, "classes (S) must be >= 2");
  require(train_classes >= 1 && train_classes < classes,
          "train_classes must lie in [1, classes)");
  require(vocab >= 2, "vocab must be >= 2");
  require(prosody_streams >= 1 && content_streams >= 1 && acoustic_streams >= 1,
          "stream counts must be positive");
  require(speaker_dim >= 1, "speaker_dim must be positive");
  require(noise >= 0.0 && noise <= 1.0, "noise must lie in [0, 1]");
  require(style_noise >= 0.0, "style_noise must be nonnegative");
  require(min_phonemes >= 1 && max_phonemes >= min_phonemes, "bad phoneme count range");
  require(min_duration >= 1 && max_duration >= min_duration, "bad duration range");
  require(train_utterances >= 0 && heldout_utterances >= 0, "utterance counts must be >= 0");
}

ToyCodecRules::ToyCodecRules(const CorpusConfig& config) : config_(config) {
  config_.validate();
  RngStream rng = RngStream(config_.seed).derive(kStyleStream);
  const auto d = static_cast<std::size_t>(config_.speaker_dim);
  projection_.resize(d * static_cast<std::size_t>(config_.classes));
  const double sd = 1.0 / std::sqrt(static_cast<double>(d));
  for (auto& w : projection_) w = rng.normal(0.0, sd);
}

Token ToyCodecRules::content(int stream, Token phoneme) const {
  return mod(static_cast<long long>(content_multiplier(stream)) * phoneme +
                 content_offset(stream),
             config_.vocab);
}

Token ToyCodecRules::prosody(int stream, std::span<const Token> content_column,
                             int style_class) const {
  const Token u = content_column[static_cast<std::size_t>(stream) % content_column.size()];
  const long long g = 3LL * u + 1;
  return mod(g + 7LL * style_class + 13LL * stream, config_.vocab);
}

Token ToyCodecRules::acoustic(int stream, Token prosody0, int style_class) const {
  return mod(static_cast<long long>(prosody0) + 11LL * style_class + 5LL * stream,
             config_.vocab);
}

std::vector<double> ToyCodecRules::style_embedding(int style_class, RngStream& rng) const {
  if (style_class < 0 || style_class >= config_.classes) {
    throw IndexError("style class " + std::to_string(style_class) + " out of range");
  }
  const auto d = static_cast<std::size_t>(config_.speaker_dim);
  std::vector<double> e(d);
  for (std::size_t i = 0; i < d; ++i) {
    e[i] = projection_[i * static_cast<std::size_t>(config_.classes) +
                       static_cast<std::size_t>(style_class)] +
           rng.normal(0.0, config_.style_noise);
  }
  return e;
}

Utterance gen_utterance(const ToyCodecRules& rules, int style_class, std::uint64_t id,
                        RngStream& rng) {
  const CorpusConfig& c = rules.config();
  Utterance u;
  u.id = id;
  u.speaker.style_class = style_class;
  u.speaker.embedding = rules.style_embedding(style_class, rng);

  const auto n_ph = static_cast<std::size_t>(rng.uniform_int(c.min_phonemes, c.max_phonemes));
  u.phonemes.resize(n_ph);
  u.durations.resize(n_ph);
  std::size_t L = 0;
  for (std::size_t i = 0; i < n_ph; ++i) {
    u.phonemes[i] = static_cast<Token>(rng.uniform_int(0, c.phonemes - 1));
    u.durations[i] = static_cast<Token>(rng.uniform_int(c.min_duration, c.max_duration));
    L += static_cast<std::size_t>(u.durations[i]);
  }

  const auto n = static_cast<std::size_t>(c.content_streams);
  const auto m = static_cast<std::size_t>(c.prosody_streams);
  const auto k = static_cast<std::size_t>(c.acoustic_streams);
  u.content = TokenGrid(n, L);
  u.prosody = TokenGrid(m, L);
  u.acoustic = TokenGrid(k, L);

  std::size_t pos = 0;
  std::vector<Token> column(n);
  for (std::size_t i = 0; i < n_ph; ++i) {
    for (Token d = 0; d < u.durations[i]; ++d, ++pos) {
      for (std::size_t j = 0; j < n; ++j) {
        column[j] = rules.content(static_cast<int>(j), u.phonemes[i]);
        u.content.at(j, pos) = column[j];
      }
      for (std::size_t j = 0; j < m; ++j) {
        Token p = rules.prosody(static_cast<int>(j), column, style_class);
        if (rng.uniform() < c.noise) p = static_cast<Token>(rng.uniform_int(0, c.vocab - 1));
        u.prosody.at(j, pos) = p;
      }
      for (std::size_t j = 0; j < k; ++j) {
        Token a = rules.acoustic(static_cast<int>(j), u.prosody.at(0, pos), style_class);
        if (rng.uniform() < c.noise) a = static_cast<Token>(rng.uniform_int(0, c.vocab - 1));
        u.acoustic.at(j, pos) = a;
      }
    }
  }
  return u;
}

Corpus generate_corpus(const CorpusConfig& config) {
  const ToyCodecRules rules(config);
  Corpus corpus;
  corpus.config = config;
  const RngStream base(config.seed);
  const RngStream train_rng = base.derive(kTrainStream);
  const RngStream heldout_rng = base.derive(kHeldoutStream);
  corpus.train.reserve(static_cast<std::size_t>(config.train_utterances));
  for (int i = 0; i < config.train_utterances; ++i) {
    RngStream rng = train_rng.derive(static_cast<std::uint64_t>(i));
    const int cls = static_cast<int>(rng.uniform_int(0, config.train_classes - 1));
    corpus.train.push_back(gen_utterance(rules, cls, static_cast<std::uint64_t>(i), rng));
  }
  for (int i = 0; i < config.heldout_utterances; ++i) {
    RngStream rng = heldout_rng.derive(static_cast<std::uint64_t>(i));
    const int cls =
        static_cast<int>(rng.uniform_int(config.train_classes, config.classes - 1));
    corpus.heldout.push_back(gen_utterance(
        rules, cls, static_cast<std::uint64_t>(config.train_utterances + i), rng));
  }
  return corpus;
}

CloningAccuracy cloning_accuracy(const ToyCodecRules& rules, const FactorizedSequence& generated,
                                 const TokenGrid& content, int reference_class) {
  const std::size_t L = generated.length();
  if (content.length != L || generated.acoustic.length != L) {
    throw DimensionError("cloning_accuracy: generated and content lengths differ");
  }
  if (generated.prosody.streams == 0 || content.streams == 0) {
    throw DimensionError("cloning_accuracy: empty stream set");
  }
  CloningAccuracy acc;
  if (L == 0) return acc;
  std::size_t p_ok = 0, a_ok = 0;
  std::vector<Token> column(content.streams);
  for (std::size_t l = 0; l < L; ++l) {
    for (std::size_t j = 0; j < content.streams; ++j) column[j] = content.at(j, l);
    for (std::size_t j = 0; j < generated.prosody.streams; ++j) {
      p_ok += generated.prosody.at(j, l) ==
              rules.prosody(static_cast<int>(j), column, reference_class);
    }
    for (std::size_t j = 0; j < generated.acoustic.streams; ++j) {
      a_ok += generated.acoustic.at(j, l) ==
              rules.acoustic(static_cast<int>(j), generated.prosody.at(0, l), reference_class);
    }
  }
  const double np = static_cast<double>(generated.prosody.streams * L);
  const double na = static_cast<double>(generated.acoustic.streams * L);
  acc.prosody = static_cast<double>(p_ok) / np;
  acc.acoustic = static_cast<double>(a_ok) / na;
  acc.combined = static_cast<double>(p_ok + a_ok) / (np + na);
  return acc;
}

RuleViolation rule_violation_rate(const ToyCodecRules& rules, std::span<const Utterance> utts) {
  std::size_t p_bad = 0, p_total = 0, a_bad = 0, a_total = 0;
  for (const auto& u : utts) {
    FactorizedSequence seq{u.prosody, u.acoustic, rules.config().vocab};
    const auto acc = cloning_accuracy(rules, seq, u.content, u.speaker.style_class);
    const std::size_t np = u.prosody.streams * u.length();
    const std::size_t na = u.acoustic.streams * u.length();
    p_bad += np - static_cast<std::size_t>(std::llround(acc.prosody * static_cast<double>(np)));
    a_bad += na - static_cast<std::size_t>(std::llround(acc.acoustic * static_cast<double>(na)));
    p_total += np;
    a_total += na;
  }
  RuleViolation r;
  if (p_total) r.prosody = static_cast<double>(p_bad) / static_cast<double>(p_total);
  if (a_total) r.acoustic = static_cast<double>(a_bad) / static_cast<double>(a_total);
  return r;
}

StyleSeparability style_separability(std::span<const Utterance> utts) {
  auto cosine = [](const std::vector<double>& a, const std::vector<double>& b) {
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      ab += a[i] * b[i];
      aa += a[i] * a[i];
      bb += b[i] * b[i];
    }
    return ab / std::sqrt(aa * bb);
  };
  double intra = 0, inter = 0;
  std::size_t n_intra = 0, n_inter = 0;
  const std::size_t n = std::min<std::size_t>(utts.size(), 400);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double c = cosine(utts[i].speaker.embedding, utts[j].speaker.embedding);
      if (utts[i].speaker.style_class == utts[j].speaker.style_class) {
        intra += c;
        ++n_intra;
      } else {
        inter += c;
        ++n_inter;
      }
    }
  }
  StyleSeparability s;
  if (n_intra) s.intra = intra / static_cast<double>(n_intra);
  if (n_inter) s.inter = inter / static_cast<double>(n_inter);
  return s;
}

void check_heldout_split(const Corpus& corpus) {
  for (const auto& u : corpus.train) {
    if (u.speaker.style_class >= corpus.config.train_classes) {
      throw ConfigError("corpus: held-out class " + std::to_string(u.speaker.style_class) +
                        " appears in the training split");
    }
  }
  for (const auto& u : corpus.heldout) {
    if (u.speaker.style_class < corpus.config.train_classes) {
      throw ConfigError("corpus: training class " + std::to_string(u.speaker.style_class) +
                        " appears in the held-out split");
    }
  }
}

// ---------------------------------------------------------------------------

namespace {

void write_grid(ByteWriter& w, const TokenGrid& g) {
  for (Token t : g.data) w.i32(t);
}

TokenGrid read_grid(ByteReader& r, std::size_t streams, std::size_t length) {
  TokenGrid g(streams, length);
  for (auto& t : g.data) t = r.i32();
  return g;
}

}  // namespace

std::vector<std::uint8_t> serialize_corpus(const Corpus& corpus) {
  const CorpusConfig& c = corpus.config;
  ByteWriter w;
  w.bytes(kMagic);
  w.u32(kCorpusVersion);
  for (int x : {c.phonemes, c.classes, c.train_classes, c.vocab, c.prosody_streams,
                c.content_streams, c.acoustic_streams, c.speaker_dim, c.min_phonemes,
                c.max_phonemes, c.min_duration, c.max_duration}) {
    w.u32(static_cast<std::uint32_t>(x));
  }
  w.f64(c.noise);
  w.f64(c.style_noise);
  w.u64(c.seed);
  w.u32(static_cast<std::uint32_t>(corpus.train.size()));
  w.u32(static_cast<std::uint32_t>(corpus.heldout.size()));
  for (const auto* split : {&corpus.train, &corpus.heldout}) {
    for (const auto& u : *split) {
      w.u64(u.id);
      w.u32(static_cast<std::uint32_t>(u.speaker.style_class));
      for (double x : u.speaker.embedding) w.f64(x);
      w.u32(static_cast<std::uint32_t>(u.phonemes.size()));
      for (Token p : u.phonemes) w.i32(p);
      for (Token d : u.durations) w.i32(d);
      w.u32(static_cast<std::uint32_t>(u.length()));
      write_grid(w, u.content);
      write_grid(w, u.prosody);
      write_grid(w, u.acoustic);
    }
  }
  const std::uint32_t crc = crc32_of(w.buffer());
  w.u32(crc);
  return w.buffer();
}

Corpus deserialize_corpus(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "corpus");
  const auto magic = r.bytes(4);
  if (!std::equal(magic.begin(), magic.end(), std::begin(kMagic))) {
    throw FormatError("corpus: bad magic bytes");
  }
  const std::uint32_t version = r.u32();
  if (version != kCorpusVersion) {
    throw FormatError("corpus: unsupported version " + std::to_string(version));
  }
  if (bytes.size() < 4) throw FormatError("corpus: truncated");
  {
    ByteReader tail(bytes.subspan(bytes.size() - 4), "corpus");
    const std::uint32_t stored = tail.u32();
    if (stored != crc32_of(bytes.first(bytes.size() - 4))) {
      throw FormatError("corpus: checksum mismatch (file corrupted or truncated)");
    }
  }
  Corpus corpus;
  CorpusConfig& c = corpus.config;
  for (int* x : {&c.phonemes, &c.classes, &c.train_classes, &c.vocab, &c.prosody_streams,
                 &c.content_streams, &c.acoustic_streams, &c.speaker_dim, &c.min_phonemes,
                 &c.max_phonemes, &c.min_duration, &c.max_duration}) {
    *x = static_cast<int>(r.u32());
  }
  c.noise = r.f64();
  c.style_noise = r.f64();
  c.seed = r.u64();
  const std::uint32_t n_train = r.u32();
  const std::uint32_t n_heldout = r.u32();
  c.train_utterances = static_cast<int>(n_train);
  c.heldout_utterances = static_cast<int>(n_heldout);
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("corpus header invalid: ") + e.what());
  }
  const auto m = static_cast<std::size_t>(c.prosody_streams);
  const auto n = static_cast<std::size_t>(c.content_streams);
  const auto k = static_cast<std::size_t>(c.acoustic_streams);
  auto read_utterance = [&]() {
    Utterance u;
    u.id = r.u64();
    u.speaker.style_class = static_cast<int>(r.u32());
    u.speaker.embedding.resize(static_cast<std::size_t>(c.speaker_dim));
    for (auto& x : u.speaker.embedding) x = r.f64();
    const std::uint32_t n_ph = r.u32();
    if (n_ph > r.remaining() / 8) throw FormatError("corpus: phoneme count exceeds file size");
    u.phonemes.resize(n_ph);
    u.durations.resize(n_ph);
    for (auto& p : u.phonemes) p = r.i32();
    std::size_t total = 0;
    for (auto& d : u.durations) {
      d = r.i32();
      if (d < 1) throw FormatError("corpus: duration < 1 at byte offset " +
                                   std::to_string(r.offset() - 4));
      total += static_cast<std::size_t>(d);
    }
    const std::uint32_t L = r.u32();
    if (L != total) throw FormatError("corpus: durations do not sum to sequence length");
    if ((n + m + k) * L > r.remaining() / 4) {
      throw FormatError("corpus: token grid exceeds file size");
    }
    u.content = read_grid(r, n, L);
    u.prosody = read_grid(r, m, L);
    u.acoustic = read_grid(r, k, L);
    return u;
  };
  corpus.train.reserve(n_train);
  for (std::uint32_t i = 0; i < n_train; ++i) corpus.train.push_back(read_utterance());
  corpus.heldout.reserve(n_heldout);
  for (std::uint32_t i = 0; i < n_heldout; ++i) corpus.heldout.push_back(read_utterance());
  if (r.remaining() != 4) throw FormatError("corpus: trailing bytes after records");
  try {
    check_heldout_split(corpus);
  } catch (const ConfigError& e) {
    throw FormatError(e.what());
  }
  return corpus;
}

void write_corpus(const std::filesystem::path& path, const Corpus& corpus) {
  write_file_bytes(path, serialize_corpus(corpus));
}

Corpus read_corpus(const std::filesystem::path& path) {
  try {
    return deserialize_corpus(read_file_bytes(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace diflow
