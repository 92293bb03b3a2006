#include "diflow/optim.hpp"

#include <cmath>

#include "diflow/errors.hpp"

namespace diflow::nn {

void adam_step(const ParameterList& params, std::vector<Tensor>& m, std::vector<Tensor>& v,
               const AdamConfig& config, std::uint64_t step_count) {
  if (m.size() != params.size() || v.size() != params.size()) {
    throw DimensionError("adam_step: moment count does not match parameters");
  }
  if (step_count == 0) throw DomainError("adam_step: step_count is 1-based");
  const double t = static_cast<double>(step_count);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto w = params[k]->value().data();
    const auto g = params[k]->grad().data();
    auto mk = m[k].data();
    auto vk = v[k].data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      mk[i] = config.beta1 * mk[i] + (1.0 - config.beta1) * g[i];
      vk[i] = config.beta2 * vk[i] + (1.0 - config.beta2) * g[i] * g[i];
      const double mhat = mk[i] / c1;
      const double vhat = vk[i] / c2;
      w[i] -= config.lr * mhat / (std::sqrt(vhat) + config.eps);
    }
  }
}

Adam::Adam(ParameterList params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  for (auto* p : params_) {
    m_.emplace_back(p->value().shape(), 0.0);
    v_.emplace_back(p->value().shape(), 0.0);
  }
}

void Adam::step() {
  ++step_count_;
  adam_step(params_, m_, v_, config_, step_count_);
}

}  // namespace diflow::nn
