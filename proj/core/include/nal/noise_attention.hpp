#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "nal/loss.hpp"
#include "nal/tensor.hpp"

namespace nal {

class Network;

// One noise-specific unit: a C x C column-stochastic matrix with
// q(j, i) = p(observed = j | true = i), stored row-major as q[j * C + i].
struct NoiseUnit {
  Tensor q;
  bool frozen = false;
  double decay = 0.0;
  Tensor grad;
  std::vector<double> velocity;
};

Tensor identity_matrix(std::size_t classes);

// The set of noise units attached to one classifier output. Unit 0 is the
// frozen identity and stays exactly I for the model's lifetime.
class NAModel {
 public:
  NAModel() = default;
  NAModel(std::size_t classes, std::size_t max_units);

  std::size_t classes() const { return classes_; }
  std::size_t active_count() const { return units_.size(); }
  std::size_t max_units() const { return max_units_; }
  bool full() const { return units_.size() >= max_units_; }

  const NoiseUnit& unit(std::size_t m) const { return units_.at(m); }
  std::span<const NoiseUnit> units() const { return units_; }
  std::span<NoiseUnit> units() { return units_; }

  // Appends a learnable unit initialised to (1 - init_mix) * I + init_mix / C.
  // init_mix = 0 gives exactly I. Throws ConfigError when already full.
  void add_unit(double decay, double init_mix);

  // Replaces the matrix of a learnable unit (used when loading snapshots).
  void set_unit(std::size_t m, const Tensor& q, double decay);

  void zero_grad();

 private:
  std::size_t classes_ = 0;
  std::size_t max_units_ = 1;
  std::vector<NoiseUnit> units_;
};

// Q * p for a single probability vector.
template <class T>
void na_forward(std::span<const T> p_base, const Tensor& q, std::span<T> out) {
  const std::size_t c = p_base.size();
  for (std::size_t j = 0; j < c; ++j) {
    T acc = 0;
    for (std::size_t i = 0; i < c; ++i) acc += static_cast<T>(q[j * c + i]) * p_base[i];
    out[j] = acc;
  }
}
std::vector<double> na_forward(std::span<const double> p_base, const NoiseUnit& unit);

// Index (0-based) of the unit maximising (Q_m p)[label]; ties go to the lowest
// index.
std::size_t select_unit(std::span<const double> p_base, Label label, std::span<const NoiseUnit> units);

// Training targets for a batch: hard labels, used with max-confidence unit
// selection, or row-stochastic soft supervision vectors from the recursion.
class TargetView {
 public:
  static TargetView hard(std::span<const Label> labels);
  static TargetView soft(const Tensor& supervision);

  bool is_hard() const { return soft_ == nullptr; }
  std::size_t size() const;
  Label label(std::size_t b) const { return labels_[b]; }
  std::span<const double> row(std::size_t b) const;

  void validate(std::size_t batch, std::size_t classes) const;

 private:
  std::span<const Label> labels_;
  const Tensor* soft_ = nullptr;
};

// Unit choice for each sample. Hard targets use select_unit; soft targets pick
// the unit with the largest sum_j s_j log (Q p)_j, which coincides with
// select_unit when s is one-hot.
std::vector<std::size_t> select_units(const Tensor& p_base, const TargetView& targets, const NAModel& model);

// Mean over samples of -sum_j s_j log max((Q_sel p)_j, eps). The selection is
// written to `selection` when given.
double attention_loss(const Tensor& p_base, const TargetView& targets, const NAModel& model,
                      std::vector<std::size_t>* selection = nullptr);

// Noise-attention NLL over hard labels.
double na_loss(const Tensor& p_base, std::span<const Label> labels, const NAModel& model,
               std::vector<std::size_t>* selection = nullptr);

// Gradient of attention_loss with respect to p_base. Accumulates the gradient
// of each learnable selected unit into its grad buffer and adds the
// identity-anchored decay term decay * (Q - I) to every learnable unit.
Tensor attention_backward(const Tensor& p_base, const TargetView& targets, std::span<const std::size_t> selection,
                          NAModel& model);

Tensor na_backward(const Tensor& p_base, std::span<const Label> labels, std::span<const std::size_t> selection,
                   NAModel& model);

// Same accumulation into the units as attention_backward, but returns the
// gradient with respect to the pre-softmax logits. Samples routed through the
// frozen identity use the fused form (p * sum(s) - s) / B, which for hard
// labels is exactly (p - onehot) / B, so a single-unit model reproduces plain
// softmax-NLL training bit for bit.
Tensor attention_logits_grad(const Tensor& p_base, const TargetView& targets, std::span<const std::size_t> selection,
                             NAModel& model);

// sum_m decay_m / 2 * ||Q_m - I||^2 over learnable units; its gradient is the
// decay term added by attention_backward.
double decay_penalty(const NAModel& model);

// Per column: clamp at 0 and renormalise to sum 1; an all-zero column i is
// reset to e_i.
Tensor project_column_stochastic(const Tensor& q);

// Momentum SGD on every learnable unit followed by projection; grads zeroed.
void na_step(NAModel& model, double learning_rate, double momentum);

struct UnitSchedule {
  std::size_t pretrain_epochs = 10;
  std::size_t patience = 3;        // E, in epochs
  double threshold = 1e-3;         // relative improvement regarded as limited
  double decay_base = 1e-3;        // lambda_0
  double decay_growth = 2.0;       // gamma
  std::size_t max_units = 3;       // M_max, counting the identity
  std::size_t max_epochs = 100;    // cap on the noise-attention stage
  double init_mix = 0.01;
};

void validate(const UnitSchedule& schedule);

// Decay for the unit with 1-based index m >= 2: decay_base * growth^(m - 2).
double unit_decay(const UnitSchedule& schedule, std::size_t unit_number);

enum class ScheduleDecision { Continue, AddUnit, Stop };

// `history` holds validation losses recorded since the last unit change.
// Compares the best of the last E epochs against the best of the E epochs
// before; a relative improvement below the threshold means AddUnit, or Stop
// when no more units may be added.
ScheduleDecision schedule_step(std::span<const double> history, const UnitSchedule& schedule,
                               std::size_t active_count);

// Base-network prediction: softmax(network(x)), no noise units applied.
Tensor infer(const Network& network, const Tensor& x);

}  // namespace nal
