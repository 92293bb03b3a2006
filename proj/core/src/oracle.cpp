#include "diflow/oracle.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <sstream>

#include "diflow/errors.hpp"

namespace diflow {

std::size_t enumeration_size(std::size_t length, int vocab) {
  if (vocab < 1) throw DomainError("enumeration_size: vocabulary must be positive");
  std::size_t n = 1;
  for (std::size_t i = 0; i < length; ++i) {
    n *= static_cast<std::size_t>(vocab);
    if (n > ExplicitTarget::kMaxStates) {
      throw DomainError("explicit target: v^L exceeds the 2^20 enumeration cap");
    }
  }
  return n;
}

ExplicitTarget::ExplicitTarget(std::size_t length, int vocab, std::vector<double> table)
    : length_(length), vocab_(vocab), table_(std::move(table)) {
  if (length_ == 0) throw DomainError("explicit target: length must be positive");
  if (table_.size() != enumeration_size(length_, vocab_)) {
    throw DimensionError("explicit target: table has " + std::to_string(table_.size()) +
                         " entries, expected v^L");
  }
  double total = 0.0;
  for (double p : table_) {
    if (!(p >= 0.0) || !std::isfinite(p)) {
      throw DomainError("explicit target: probabilities must be finite and nonnegative");
    }
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw DomainError("explicit target: probabilities sum to " + std::to_string(total));
  }
}

ExplicitTarget ExplicitTarget::uniform(std::size_t length, int vocab) {
  const std::size_t n = enumeration_size(length, vocab);
  return ExplicitTarget(length, vocab, std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

std::size_t ExplicitTarget::index_of(std::span<const Token> sequence) const {
  if (sequence.size() != length_) throw DimensionError("explicit target: length mismatch");
  std::size_t idx = 0;
  for (Token t : sequence) {
    if (t < 0 || t >= vocab_) throw IndexError("explicit target: token outside vocabulary");
    idx = idx * static_cast<std::size_t>(vocab_) + static_cast<std::size_t>(t);
  }
  return idx;
}

std::vector<Token> ExplicitTarget::sequence_at(std::size_t index) const {
  std::vector<Token> seq(length_);
  for (std::size_t i = length_; i-- > 0;) {
    seq[i] = static_cast<Token>(index % static_cast<std::size_t>(vocab_));
    index /= static_cast<std::size_t>(vocab_);
  }
  return seq;
}

double ExplicitTarget::probability(std::span<const Token> sequence) const {
  return table_[index_of(sequence)];
}

nn::Tensor ExplicitTarget::marginals() const {
  nn::Tensor out({length_, static_cast<std::size_t>(vocab_)});
  for (std::size_t i = 0; i < table_.size(); ++i) {
    if (table_[i] == 0.0) continue;
    const auto seq = sequence_at(i);
    for (std::size_t pos = 0; pos < length_; ++pos) {
      out.at(pos, static_cast<std::size_t>(seq[pos])) += table_[i];
    }
  }
  return out;
}

std::vector<Token> ExplicitTarget::sample(RngStream& rng) const {
  return sequence_at(rng.categorical(table_));
}

nn::Tensor exact_posterior(const ExplicitTarget& q, std::span<const Token> tokens) {
  const std::size_t L = q.length();
  const auto v = static_cast<std::size_t>(q.vocab());
  if (tokens.size() != L) {
    throw DimensionError("exact_posterior: state has " + std::to_string(tokens.size()) +
                         " tokens, target has " + std::to_string(L));
  }
  for (Token t : tokens) {
    if (t < 0 || t > q.vocab()) throw IndexError("exact_posterior: token outside [0, v]");
  }
  nn::Tensor post({L, v});
  const auto table = q.table();
  std::vector<Token> digits(L, 0);
  double evidence = 0.0;
  for (std::size_t idx = 0; idx < table.size(); ++idx) {
    if (idx > 0) {
      // Odometer increment of the big-endian digit vector.
      for (std::size_t i = L; i-- > 0;) {
        if (++digits[i] < q.vocab()) break;
        digits[i] = 0;
      }
    }
    const double p = table[idx];
    if (p == 0.0) continue;
    bool consistent = true;
    for (std::size_t i = 0; i < L && consistent; ++i) {
      consistent = tokens[i] == q.vocab() || tokens[i] == digits[i];
    }
    if (!consistent) continue;
    evidence += p;
    for (std::size_t i = 0; i < L; ++i) post.at(i, static_cast<std::size_t>(digits[i])) += p;
  }
  if (evidence <= 0.0) {
    throw InconsistencyError("exact_posterior: observed tokens have zero probability");
  }
  for (auto& x : post.data()) x /= evidence;
  return post;
}

nn::Tensor exact_posterior(const ExplicitTarget& q, const MaskedSequence& xt) {
  if (xt.vocab != q.vocab()) throw DimensionError("exact_posterior: vocabulary mismatch");
  return exact_posterior(q, xt.tokens.data);
}

ExplicitTarget empirical_distribution(std::span<const std::vector<Token>> samples, int vocab,
                                      std::size_t length) {
  if (samples.empty()) throw DomainError("empirical_distribution: no samples");
  const std::size_t n = enumeration_size(length, vocab);
  std::vector<double> counts(n, 0.0);
  const ExplicitTarget shape = ExplicitTarget::uniform(length, vocab);
  for (const auto& s : samples) counts[shape.index_of(s)] += 1.0;
  const double total = static_cast<double>(samples.size());
  for (auto& c : counts) c /= total;
  // Renormalize exactly to absorb rounding in the division.
  double sum = 0.0;
  for (double c : counts) sum += c;
  for (auto& c : counts) c /= sum;
  return ExplicitTarget(length, vocab, std::move(counts));
}

double total_variation(const ExplicitTarget& p, const ExplicitTarget& q) {
  if (p.length() != q.length() || p.vocab() != q.vocab()) {
    throw DimensionError("total_variation: support shapes differ");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < p.states(); ++i) s += std::abs(p.table()[i] - q.table()[i]);
  return std::min(1.0, 0.5 * s);
}

Denoiser make_oracle_denoiser(const ExplicitTarget& q, std::size_t streams,
                              std::size_t length) {
  if (streams * length != q.length()) {
    throw DimensionError("oracle denoiser: layout does not match target length");
  }
  auto cache = std::make_shared<std::map<std::vector<Token>, nn::Tensor>>();
  auto target = std::make_shared<ExplicitTarget>(q);
  return [cache, target, streams, length](const MaskedSequence& xt) {
    if (xt.tokens.streams != streams || xt.tokens.length != length) {
      throw DimensionError("oracle denoiser: state layout mismatch");
    }
    auto it = cache->find(xt.tokens.data);
    if (it == cache->end()) {
      nn::Tensor post = exact_posterior(*target, xt);
      it = cache->emplace(xt.tokens.data,
                          post.reshaped({streams, length,
                                         static_cast<std::size_t>(target->vocab())}))
               .first;
    }
    return it->second;
  };
}

ExplicitTarget parse_explicit_target(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  int vocab = -1;
  std::size_t length = 0;
  std::vector<double> table;
  std::vector<bool> seen;
  auto fail = [&](const std::string& msg) {
    throw FormatError("explicit target line " + std::to_string(line_no) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    if (vocab < 0) {
      std::string kv, kl;
      if (!(ls >> kv >> vocab >> kl >> length) || kv != "vocab" || kl != "length") {
        fail("expected header 'vocab <v> length <L>'");
      }
      table.assign(enumeration_size(length, vocab), 0.0);
      seen.assign(table.size(), false);
      continue;
    }
    std::vector<Token> seq(length);
    for (auto& t : seq) {
      if (!(ls >> t)) fail("expected " + std::to_string(length) + " tokens");
      if (t < 0 || t >= vocab) fail("token outside vocabulary");
    }
    double p = 0.0;
    if (!(ls >> p)) fail("missing probability");
    std::string extra;
    if (ls >> extra) fail("trailing content");
    std::size_t idx = 0;
    for (Token t : seq) idx = idx * static_cast<std::size_t>(vocab) + static_cast<std::size_t>(t);
    if (seen[idx]) fail("duplicate sequence");
    seen[idx] = true;
    table[idx] = p;
  }
  if (vocab < 0) throw FormatError("explicit target: missing header");
  double total = 0.0;
  for (double p : table) {
    if (!(p >= 0.0)) throw FormatError("explicit target: negative probability");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw FormatError("explicit target: probabilities sum to " + std::to_string(total));
  }
  for (auto& p : table) p /= total;
  double renorm = 0.0;
  for (double p : table) renorm += p;
  if (std::abs(renorm - 1.0) > 1e-12) {
    throw FormatError("explicit target: renormalization failed");
  }
  return ExplicitTarget(length, vocab, std::move(table));
}

ExplicitTarget read_explicit_target(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("explicit target: cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_explicit_target(ss.str());
}

void write_explicit_target(const std::filesystem::path& path, const ExplicitTarget& q) {
  std::ofstream out(path);
  if (!out) throw FormatError("explicit target: cannot write " + path.string());
  out << "vocab " << q.vocab() << " length " << q.length() << '\n';
  out << std::setprecision(17);
  for (std::size_t i = 0; i < q.states(); ++i) {
    if (q.table()[i] == 0.0) continue;
    for (Token t : q.sequence_at(i)) out << t << ' ';
    out << q.table()[i] << '\n';
  }
}

}  // namespace diflow
