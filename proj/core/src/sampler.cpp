#include "diflow/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "diflow/errors.hpp"

namespace diflow {

namespace {

constexpr double kProbabilityTolerance = 1e-9;

void check_posterior_layout(const nn::Tensor& posterior, const MaskedSequence& xt) {
  if (posterior.rank() != 3 || posterior.dim(0) != xt.tokens.streams ||
      posterior.dim(1) != xt.tokens.length ||
      posterior.dim(2) != static_cast<std::size_t>(xt.vocab)) {
    throw DimensionError("sampler: posterior shape " + nn::shape_string(posterior.shape()) +
                         " does not match state");
  }
}

std::size_t argmax(std::span<const double> row) {
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

}  // namespace

FinalStepRule parse_final_step_rule(const std::string& text) {
  if (text == "sample") return FinalStepRule::kSample;
  if (text == "argmax") return FinalStepRule::kArgmax;
  throw ConfigError("final-step rule must be 'sample' or 'argmax', got '" + text + "'");
}

std::string to_string(FinalStepRule rule) {
  return rule == FinalStepRule::kArgmax ? "argmax" : "sample";
}

void SamplerConfig::validate() const {
  if (nfe < 1) throw ConfigError("sampler: nfe must be >= 1");
  if (!(temperature > 0.0)) throw ConfigError("sampler: temperature must be positive");
}

double VelocityField::at(std::size_t s, std::size_t l, std::size_t x) const {
  const std::size_t width = static_cast<std::size_t>(vocab) + 1;
  return values[(s * values.dim(1) + l) * width + x];
}

VelocityField velocity(const nn::Tensor& posterior, const MaskedSequence& xt,
                       const Scheduler& s, double t) {
  check_posterior_layout(posterior, xt);
  const double coef = velocity_coefficient(s, t);
  const std::size_t S = xt.tokens.streams, L = xt.tokens.length;
  const auto v = static_cast<std::size_t>(xt.vocab);
  VelocityField out{nn::Tensor({S, L, v + 1}), xt.vocab};
  auto u = out.values.data();
  const auto p = posterior.data();
  for (std::size_t i = 0; i < S * L; ++i) {
    const auto cur = static_cast<std::size_t>(xt.tokens.data[i]);
    double* row = u.data() + i * (v + 1);
    for (std::size_t x = 0; x < v; ++x) row[x] = coef * p[i * v + x];
    row[cur] -= coef;
  }
  return out;
}

MaskedSequence euler_step(const MaskedSequence& xt, const VelocityField& vel, double h,
                          RngStream& rng) {
  const std::size_t S = xt.tokens.streams, L = xt.tokens.length;
  const auto width = static_cast<std::size_t>(xt.vocab) + 1;
  if (vel.values.size() != S * L * width) {
    throw DimensionError("euler_step: velocity shape does not match state");
  }
  if (!(h > 0.0)) throw StepSizeError("euler_step: step size must be positive");
  MaskedSequence next = xt;
  next.t = std::min(1.0, xt.t + h);
  std::vector<double> dist(width);
  const auto u = vel.values.data();
  for (std::size_t i = 0; i < S * L; ++i) {
    const auto cur = static_cast<std::size_t>(xt.tokens.data[i]);
    const double* row = u.data() + i * width;
    double total = 0.0;
    bool moves = false;
    for (std::size_t x = 0; x < width; ++x) {
      dist[x] = (x == cur ? 1.0 : 0.0) + h * row[x];
      if (dist[x] < -kProbabilityTolerance) {
        throw StepSizeError("euler_step: update distribution has negative mass " +
                            std::to_string(dist[x]) + "; reduce the step size");
      }
      dist[x] = std::max(0.0, dist[x]);
      total += dist[x];
      moves = moves || (x != cur && dist[x] > 0.0);
    }
    if (std::abs(total - 1.0) > kProbabilityTolerance) {
      throw NumericError("euler_step: update distribution sums to " + std::to_string(total));
    }
    if (!moves) continue;  // degenerate stay distribution: no draw needed
    next.tokens.data[i] = static_cast<Token>(rng.categorical(dist));
  }
  return next;
}

nn::Tensor temperature_apply(const nn::Tensor& posterior, double temperature) {
  if (!(temperature > 0.0)) throw DomainError("temperature must be positive");
  if (temperature == 1.0) return posterior;
  nn::Tensor out = posterior;
  const std::size_t rows = out.rows(), v = out.cols();
  std::vector<double> logits(v);
  for (std::size_t r = 0; r < rows; ++r) {
    auto row = out.row(r);
    double mx = -INFINITY;
    for (std::size_t x = 0; x < v; ++x) {
      logits[x] = row[x] > 0.0 ? std::log(row[x]) / temperature : -INFINITY;
      mx = std::max(mx, logits[x]);
    }
    if (!std::isfinite(mx)) throw NumericError("temperature_apply: row without mass");
    double z = 0.0;
    for (std::size_t x = 0; x < v; ++x) {
      row[x] = std::isfinite(logits[x]) ? std::exp(logits[x] - mx) : 0.0;
      z += row[x];
    }
    for (auto& p : row) p /= z;
  }
  return out;
}

TokenGrid generate(const Denoiser& denoiser, std::size_t streams, std::size_t length,
                   int vocab, const SamplerConfig& cfg, RngStream& rng) {
  cfg.validate();
  MaskedSequence x = MaskedSequence::all_masked(streams, length, vocab);
  const double h = 1.0 / static_cast<double>(cfg.nfe);
  const auto v = static_cast<std::size_t>(vocab);
  for (int j = 0; j < cfg.nfe; ++j) {
    x.t = static_cast<double>(j) / static_cast<double>(cfg.nfe);
    nn::Tensor post = denoiser(x);
    check_posterior_layout(post, x);
    post = temperature_apply(post, cfg.temperature);
    if (j + 1 < cfg.nfe) {
      const VelocityField vel = velocity(post, x, cfg.scheduler, x.t);
      x = euler_step(x, vel, h, rng);
      continue;
    }
    for (std::size_t i = 0; i < streams * length; ++i) {
      if (x.tokens.data[i] != vocab) continue;
      const std::span<const double> row(post.data().data() + i * v, v);
      const std::size_t tok =
          cfg.final_step_rule == FinalStepRule::kArgmax ? argmax(row) : rng.categorical(row);
      x.tokens.data[i] = static_cast<Token>(tok);
    }
    x.t = 1.0;
  }
  if (x.masked_count() != 0) {
    throw InconsistencyError("generate: output still contains MASK tokens");
  }
  return x.tokens;
}

}  // namespace diflow
