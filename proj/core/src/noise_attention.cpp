#include "nal/noise_attention.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "nal/errors.hpp"
#include "nal/network.hpp"

namespace nal {
namespace {

void check_probs(const Tensor& p_base, std::size_t classes) {
  if (p_base.rank() != 2 || p_base.dim(1) != classes) {
    throw ConfigError("expected [B, " + std::to_string(classes) + "] probabilities, got " +
                      shape_to_string(p_base.shape()));
  }
}

// Q_m p written to `out`; unit 0 is the identity and passes p through.
void route(std::span<const double> p, const NAModel& model, std::size_t m, std::span<double> out) {
  if (m == 0) {
    std::copy(p.begin(), p.end(), out.begin());
    return;
  }
  na_forward<double>(p, model.unit(m).q, out);
}

double sample_loss(std::span<const double> routed, const TargetView& targets, std::size_t b) {
  if (targets.is_hard()) return clamped_neg_log(routed[targets.label(b)]);
  const auto s = targets.row(b);
  double acc = 0.0;
  for (std::size_t j = 0; j < s.size(); ++j) {
    if (s[j] != 0.0) acc += s[j] * std::log(std::max(routed[j], kProbFloor));
  }
  return -acc;
}

// dL/d(routed_j) for one sample, already scaled by 1/B.
void routed_grad(std::span<const double> routed, const TargetView& targets, std::size_t b, double scale,
                 std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  auto term = [&](std::size_t j, double weight) {
    if (weight != 0.0 && routed[j] >= kProbFloor) out[j] = -weight / routed[j] * scale;
  };
  if (targets.is_hard()) {
    term(targets.label(b), 1.0);
  } else {
    const auto s = targets.row(b);
    for (std::size_t j = 0; j < s.size(); ++j) term(j, s[j]);
  }
}

// Back through a learnable unit: accumulates dQ and writes dL/dp.
void unit_backward(std::span<const double> p, std::span<const double> d_routed, NoiseUnit& unit,
                   std::span<double> d_p) {
  const std::size_t c = p.size();
  std::fill(d_p.begin(), d_p.end(), 0.0);
  for (std::size_t j = 0; j < c; ++j) {
    const double g = d_routed[j];
    if (g == 0.0) continue;
    for (std::size_t i = 0; i < c; ++i) {
      d_p[i] += unit.q[j * c + i] * g;
      if (!unit.frozen) unit.grad[j * c + i] += g * p[i];
    }
  }
}

void add_decay_grad(NAModel& model) {
  const std::size_t c = model.classes();
  for (auto& unit : model.units()) {
    if (unit.frozen || unit.decay == 0.0) continue;
    for (std::size_t j = 0; j < c; ++j) {
      for (std::size_t i = 0; i < c; ++i) {
        const double target = i == j ? 1.0 : 0.0;
        unit.grad[j * c + i] += unit.decay * (unit.q[j * c + i] - target);
      }
    }
  }
}

void check_selection(std::span<const std::size_t> selection, std::size_t batch, const NAModel& model) {
  if (selection.size() != batch) throw UsageError("selection does not match the batch");
  for (std::size_t m : selection) {
    if (m >= model.active_count()) throw UsageError("selection refers to an inactive unit");
  }
}

}  // namespace

Tensor identity_matrix(std::size_t classes) {
  Tensor q({classes, classes});
  for (std::size_t i = 0; i < classes; ++i) q[i * classes + i] = 1.0;
  return q;
}

NAModel::NAModel(std::size_t classes, std::size_t max_units) : classes_(classes), max_units_(max_units) {
  if (classes < 2) throw ConfigError("noise-attention model needs at least 2 classes");
  if (max_units < 1) throw ConfigError("noise-attention model needs at least one unit");
  NoiseUnit identity;
  identity.q = identity_matrix(classes);
  identity.frozen = true;
  identity.grad = Tensor({classes, classes});
  units_.push_back(std::move(identity));
}

void NAModel::add_unit(double decay, double init_mix) {
  if (full()) throw ConfigError("noise-attention model already has " + std::to_string(max_units_) + " units");
  if (init_mix < 0.0 || init_mix >= 1.0) throw ConfigError("unit init_mix must lie in [0, 1)");
  NoiseUnit unit;
  unit.q = identity_matrix(classes_);
  if (init_mix > 0.0) {
    const double off = init_mix / static_cast<double>(classes_);
    for (std::size_t j = 0; j < classes_; ++j) {
      for (std::size_t i = 0; i < classes_; ++i) {
        unit.q[j * classes_ + i] = (i == j ? 1.0 - init_mix : 0.0) + off;
      }
    }
  }
  unit.decay = decay;
  unit.grad = Tensor({classes_, classes_});
  unit.velocity.assign(classes_ * classes_, 0.0);
  units_.push_back(std::move(unit));
}

void NAModel::set_unit(std::size_t m, const Tensor& q, double decay) {
  if (m == 0 || m >= units_.size()) throw UsageError("set_unit index must name an existing learnable unit");
  if (q.shape() != Shape{classes_, classes_}) throw ConfigError("unit matrix has the wrong shape");
  units_[m].q = q;
  units_[m].decay = decay;
}

void NAModel::zero_grad() {
  for (auto& unit : units_) unit.grad.fill(0.0);
}

std::vector<double> na_forward(std::span<const double> p_base, const NoiseUnit& unit) {
  const std::size_t c = p_base.size();
  if (unit.q.shape() != Shape{c, c}) {
    throw ConfigError("unit of shape " + shape_to_string(unit.q.shape()) + " cannot map a " + std::to_string(c) +
                      "-class distribution");
  }
  std::vector<double> out(c);
  na_forward<double>(p_base, unit.q, out);
  return out;
}

std::size_t select_unit(std::span<const double> p_base, Label label, std::span<const NoiseUnit> units) {
  const std::size_t c = p_base.size();
  if (units.empty()) throw UsageError("select_unit needs at least one unit");
  if (label >= c) throw DataError("label " + std::to_string(label) + " is outside [0, " + std::to_string(c) + ")");
  std::size_t best = 0;
  double best_conf = -1.0;
  for (std::size_t m = 0; m < units.size(); ++m) {
    // Row `label` of Q_m against p; for the identity this is exactly p[label].
    double conf = 0.0;
    for (std::size_t i = 0; i < c; ++i) conf += units[m].q[label * c + i] * p_base[i];
    if (conf > best_conf) {
      best_conf = conf;
      best = m;
    }
  }
  return best;
}

TargetView TargetView::hard(std::span<const Label> labels) {
  TargetView v;
  v.labels_ = labels;
  return v;
}

TargetView TargetView::soft(const Tensor& supervision) {
  if (supervision.rank() != 2) throw ConfigError("soft targets must be [N, C]");
  TargetView v;
  v.soft_ = &supervision;
  return v;
}

std::size_t TargetView::size() const { return soft_ ? soft_->dim(0) : labels_.size(); }

std::span<const double> TargetView::row(std::size_t b) const { return soft_->row(b); }

void TargetView::validate(std::size_t batch, std::size_t classes) const {
  if (is_hard()) {
    check_labels(labels_, batch, classes);
    return;
  }
  if (soft_->dim(0) != batch || soft_->dim(1) != classes) {
    throw ConfigError("soft targets of shape " + shape_to_string(soft_->shape()) + " do not match a batch of " +
                      std::to_string(batch) + " x " + std::to_string(classes));
  }
}

std::vector<std::size_t> select_units(const Tensor& p_base, const TargetView& targets, const NAModel& model) {
  check_probs(p_base, model.classes());
  const std::size_t batch = p_base.dim(0);
  const std::size_t c = model.classes();
  targets.validate(batch, c);
  std::vector<std::size_t> selection(batch, 0);
  std::vector<double> routed(c);
  for (std::size_t b = 0; b < batch; ++b) {
    if (targets.is_hard()) {
      selection[b] = select_unit(p_base.row(b), targets.label(b), model.units());
      continue;
    }
    double best_score = 0.0;
    for (std::size_t m = 0; m < model.active_count(); ++m) {
      route(p_base.row(b), model, m, routed);
      const double score = -sample_loss(routed, targets, b);
      if (m == 0 || score > best_score) {
        best_score = score;
        selection[b] = m;
      }
    }
  }
  return selection;
}

double attention_loss(const Tensor& p_base, const TargetView& targets, const NAModel& model,
                      std::vector<std::size_t>* selection) {
  std::vector<std::size_t> chosen = select_units(p_base, targets, model);
  const std::size_t batch = p_base.dim(0);
  std::vector<double> routed(model.classes());
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    route(p_base.row(b), model, chosen[b], routed);
    total += sample_loss(routed, targets, b);
  }
  if (selection) *selection = std::move(chosen);
  return total / static_cast<double>(batch);
}

double na_loss(const Tensor& p_base, std::span<const Label> labels, const NAModel& model,
               std::vector<std::size_t>* selection) {
  return attention_loss(p_base, TargetView::hard(labels), model, selection);
}

Tensor attention_backward(const Tensor& p_base, const TargetView& targets, std::span<const std::size_t> selection,
                          NAModel& model) {
  check_probs(p_base, model.classes());
  const std::size_t batch = p_base.dim(0);
  const std::size_t c = model.classes();
  targets.validate(batch, c);
  check_selection(selection, batch, model);
  const double scale = 1.0 / static_cast<double>(batch);
  Tensor d_p({batch, c});
  std::vector<double> routed(c), d_routed(c);
  for (std::size_t b = 0; b < batch; ++b) {
    const auto p = p_base.row(b);
    route(p, model, selection[b], routed);
    routed_grad(routed, targets, b, scale, d_routed);
    if (selection[b] == 0) {
      std::copy(d_routed.begin(), d_routed.end(), d_p.row(b).begin());
    } else {
      unit_backward(p, d_routed, model.units()[selection[b]], d_p.row(b));
    }
  }
  add_decay_grad(model);
  return d_p;
}

Tensor na_backward(const Tensor& p_base, std::span<const Label> labels, std::span<const std::size_t> selection,
                   NAModel& model) {
  return attention_backward(p_base, TargetView::hard(labels), selection, model);
}

Tensor attention_logits_grad(const Tensor& p_base, const TargetView& targets, std::span<const std::size_t> selection,
                             NAModel& model) {
  check_probs(p_base, model.classes());
  const std::size_t batch = p_base.dim(0);
  const std::size_t c = model.classes();
  targets.validate(batch, c);
  check_selection(selection, batch, model);
  const double scale = 1.0 / static_cast<double>(batch);
  Tensor d_z({batch, c});
  std::vector<double> routed(c), d_routed(c), d_p(c);
  for (std::size_t b = 0; b < batch; ++b) {
    const auto p = p_base.row(b);
    auto dz = d_z.row(b);
    if (selection[b] == 0) {
      if (targets.is_hard()) {
        for (std::size_t j = 0; j < c; ++j) dz[j] = (p[j] - (j == targets.label(b) ? 1.0 : 0.0)) * scale;
        continue;
      }
      // Supervision rows need not be normalised: d/dz of -sum s log p is p * sum(s) - s.
      const auto s = targets.row(b);
      double mass = 0.0;
      for (double v : s) mass += v;
      for (std::size_t j = 0; j < c; ++j) dz[j] = (p[j] * mass - s[j]) * scale;
      continue;
    }
    route(p, model, selection[b], routed);
    routed_grad(routed, targets, b, scale, d_routed);
    unit_backward(p, d_routed, model.units()[selection[b]], d_p);
    double dot = 0.0;
    for (std::size_t i = 0; i < c; ++i) dot += p[i] * d_p[i];
    for (std::size_t i = 0; i < c; ++i) dz[i] = p[i] * (d_p[i] - dot);
  }
  add_decay_grad(model);
  return d_z;
}

double decay_penalty(const NAModel& model) {
  const std::size_t c = model.classes();
  double total = 0.0;
  for (const auto& unit : model.units()) {
    if (unit.frozen) continue;
    double sq = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      for (std::size_t i = 0; i < c; ++i) {
        const double d = unit.q[j * c + i] - (i == j ? 1.0 : 0.0);
        sq += d * d;
      }
    }
    total += 0.5 * unit.decay * sq;
  }
  return total;
}

Tensor project_column_stochastic(const Tensor& q) {
  if (q.rank() != 2 || q.dim(0) != q.dim(1)) throw ConfigError("projection expects a square matrix");
  const std::size_t c = q.dim(0);
  Tensor out = q;
  for (std::size_t i = 0; i < c; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      double& v = out[j * c + i];
      if (!(v > 0.0)) v = 0.0;
      sum += v;
    }
    if (sum == 0.0) {
      for (std::size_t j = 0; j < c; ++j) out[j * c + i] = j == i ? 1.0 : 0.0;
    } else if (sum != 1.0) {
      for (std::size_t j = 0; j < c; ++j) out[j * c + i] /= sum;
    }
  }
  return out;
}

void na_step(NAModel& model, double learning_rate, double momentum) {
  for (auto& unit : model.units()) {
    if (unit.frozen) {
      unit.grad.fill(0.0);
      continue;
    }
    for (std::size_t k = 0; k < unit.q.size(); ++k) {
      unit.velocity[k] = momentum * unit.velocity[k] + unit.grad[k];
      unit.q[k] -= learning_rate * unit.velocity[k];
    }
    unit.q = project_column_stochastic(unit.q);
    unit.grad.fill(0.0);
  }
}

void validate(const UnitSchedule& s) {
  if (s.pretrain_epochs < 1) throw ConfigError("na.pretrain_epochs must be positive");
  if (s.patience < 1) throw ConfigError("na.patience must be positive");
  if (!(s.threshold > 0.0)) throw ConfigError("na.threshold must be positive");
  if (s.decay_base < 0.0) throw ConfigError("na.decay_base must be non-negative");
  if (s.decay_growth < 1.0) throw ConfigError("na.decay_growth must be >= 1");
  if (s.max_units < 1) throw ConfigError("na.max_units must be positive");
  if (s.init_mix < 0.0 || s.init_mix >= 1.0) throw ConfigError("na.init_mix must lie in [0, 1)");
}

double unit_decay(const UnitSchedule& schedule, std::size_t unit_number) {
  if (unit_number < 2) return 0.0;
  return schedule.decay_base * std::pow(schedule.decay_growth, static_cast<double>(unit_number - 2));
}

ScheduleDecision schedule_step(std::span<const double> history, const UnitSchedule& schedule,
                               std::size_t active_count) {
  const std::size_t e = schedule.patience;
  if (history.size() < 2 * e) return ScheduleDecision::Continue;
  const auto recent = history.last(e);
  const auto before = history.subspan(history.size() - 2 * e, e);
  const double recent_best = *std::min_element(recent.begin(), recent.end());
  const double before_best = *std::min_element(before.begin(), before.end());
  const double improvement = (before_best - recent_best) / std::max(std::abs(before_best), 1e-12);
  if (improvement >= schedule.threshold) return ScheduleDecision::Continue;
  return active_count < schedule.max_units ? ScheduleDecision::AddUnit : ScheduleDecision::Stop;
}

Tensor infer(const Network& network, const Tensor& x) { return softmax(network.evaluate(x)); }

}  // namespace nal
