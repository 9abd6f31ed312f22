#include "nal/optimizer.hpp"

#include <algorithm>

#include "nal/errors.hpp"
#include "nal/network.hpp"

namespace nal {

Sgd::Sgd(SgdOptions options) : options_(options) {
  if (!(options_.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (options_.momentum < 0.0 || options_.momentum >= 1.0) throw ConfigError("momentum must lie in [0, 1)");
  if (options_.weight_decay < 0.0) throw ConfigError("weight decay must be non-negative");
}

void Sgd::step(std::span<const ParamRef> params) {
  if (velocity_.empty()) {
    velocity_.reserve(params.size());
    for (const auto& p : params) velocity_.emplace_back(p.value.size(), 0.0);
  }
  if (velocity_.size() != params.size()) throw UsageError("optimizer parameter layout changed between steps");
  const double lr = options_.learning_rate;
  const double mu = options_.momentum;
  const double wd = options_.weight_decay;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& v = velocity_[k];
    const auto& p = params[k];
    if (v.size() != p.value.size()) throw UsageError("optimizer parameter layout changed between steps");
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = mu * v[i] + p.grad[i] + wd * p.value[i];
      p.value[i] -= lr * v[i];
    }
    std::fill(p.grad.begin(), p.grad.end(), 0.0);
  }
}

void sgd_step(Network& network, Sgd& optimizer) {
  const auto params = network.parameters();
  optimizer.step(params);
}

}  // namespace nal
