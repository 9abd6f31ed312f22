#pragma once

#include <span>
#include <vector>

#include "nal/layers.hpp"

namespace nal {

class Network;

struct SgdOptions {
  double learning_rate = 0.1;
  double momentum = 0.0;
  double weight_decay = 0.0;
};

// Heavy-ball SGD:
//   v <- momentum * v + grad + weight_decay * theta
//   theta <- theta - lr * v
// Gradients are zeroed after the update.
class Sgd {
 public:
  Sgd() = default;
  explicit Sgd(SgdOptions options);

  const SgdOptions& options() const { return options_; }
  void set_learning_rate(double lr) { options_.learning_rate = lr; }

  // Velocity buffers are created (zero-filled) on first use and must see the
  // same parameter layout on every later call.
  void step(std::span<const ParamRef> params);

  const std::vector<std::vector<double>>& velocity() const { return velocity_; }

 private:
  SgdOptions options_;
  std::vector<std::vector<double>> velocity_;
};

void sgd_step(Network& network, Sgd& optimizer);

}  // namespace nal
