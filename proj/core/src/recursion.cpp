#include "nal/recursion.hpp"

#include <cmath>
#include <string>

#include "nal/errors.hpp"

namespace nal {

double alpha_schedule(std::size_t t, double alpha_base) {
  if (t < 1) throw ConfigError("alpha schedule starts at iteration 1");
  return std::pow(alpha_base, static_cast<double>(t));
}

std::vector<double> combine_supervision(Label given, std::span<const double> prev_probs, double alpha) {
  if (given >= prev_probs.size()) {
    throw DataError("label " + std::to_string(given) + " is outside [0, " + std::to_string(prev_probs.size()) + ")");
  }
  if (alpha < 0.0) throw ConfigError("supervision weight must be non-negative");
  std::vector<double> s(prev_probs.begin(), prev_probs.end());
  s[given] += alpha;
  const double norm = 1.0 + alpha;
  for (double& v : s) v /= norm;
  return s;
}

double soft_nll_loss(const Tensor& attention_probs, const Tensor& supervision) {
  if (attention_probs.rank() != 2 || attention_probs.shape() != supervision.shape()) {
    throw ConfigError("probabilities " + shape_to_string(attention_probs.shape()) + " and supervision " +
                      shape_to_string(supervision.shape()) + " differ in shape");
  }
  const std::size_t batch = attention_probs.dim(0);
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const auto p = attention_probs.row(b);
    const auto s = supervision.row(b);
    double acc = 0.0;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (s[j] != 0.0) acc += s[j] * std::log(std::max(p[j], kProbFloor));
    }
    total += -acc;
  }
  return total / static_cast<double>(batch);
}

double soft_attention_loss(const Tensor& p_base, const Tensor& supervision, const NAModel& model,
                           std::vector<std::size_t>* selection) {
  return attention_loss(p_base, TargetView::soft(supervision), model, selection);
}

std::vector<Tensor> snapshot_probs(const MultiHeadNetwork& model, std::span<const NAModel> na_models,
                                   const Tensor& features, std::span<const std::size_t> indices,
                                   std::span<const std::vector<Label>> given) {
  std::vector<Tensor> out;
  for (std::size_t k = 0; k < model.attribute_count(); ++k) {
    out.push_back(attention_outputs(model, na_models[k], k, features, indices, given[k]));
  }
  return out;
}

Tensor build_supervision(const Tensor& cached_probs, std::span<const std::size_t> indices,
                         std::span<const Label> given, double alpha, std::size_t num_samples) {
  if (cached_probs.dim(0) != indices.size()) throw ConfigError("cached outputs do not match the index set");
  const std::size_t c = cached_probs.dim(1);
  Tensor out({num_samples, c});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto s = combine_supervision(given[indices[i]], cached_probs.row(i), alpha);
    std::copy(s.begin(), s.end(), out.row(indices[i]).begin());
  }
  return out;
}

void validate(const RecursionSettings& s) {
  if (!(s.alpha_base > 0.0 && s.alpha_base <= 1.0)) throw ConfigError("rec.alpha_base must lie in (0, 1]");
  if (s.max_iterations > 0 && s.epochs < 1) throw ConfigError("rec.epochs must be positive");
}

RecursionResult run_recursion(MultiHeadNetwork& model, std::vector<NAModel>& na_models, const SgdOptions& sgd,
                              const TrainingSetup& setup, const StageData& data, const RecursionSettings& settings,
                              Rng& rng, const RecursionMetric& metric, const RecursionCallback& callback) {
  validate(settings);
  if (data.features == nullptr || data.train.empty()) throw DataError("recursion needs a non-empty training set");
  const std::size_t k_count = model.attribute_count();
  if (na_models.size() != k_count || data.given.size() != k_count) {
    throw ConfigError("need one noise-attention model and label column per attribute");
  }
  const std::size_t num_samples = data.features->dim(0);

  RecursionResult result;
  RecursionIteration start;
  start.stop_metric = metric(model, na_models);
  result.iterations.push_back(start);

  for (std::size_t t = 1; t <= settings.max_iterations; ++t) {
    RecursionIteration it;
    it.t = t;
    it.alpha = alpha_schedule(t, settings.alpha_base);

    // Teacher outputs are computed once and stay fixed for the iteration.
    std::vector<TargetSource> targets(k_count);
    {
      const auto cached = snapshot_probs(model, na_models, *data.features, data.train, data.given);
      for (std::size_t k = 0; k < k_count; ++k) {
        targets[k].soft = build_supervision(cached[k], data.train, data.given[k], it.alpha, num_samples);
      }
    }

    Sgd optimizer(sgd);
    for (auto& na : na_models) {
      for (auto& unit : na.units()) std::fill(unit.velocity.begin(), unit.velocity.end(), 0.0);
    }
    for (std::size_t e = 0; e < settings.epochs; ++e) {
      const double loss = train_epoch(model, na_models, optimizer, setup, *data.features, data.train, targets, rng).mean_loss;
      it.epoch_losses.push_back(loss);
      if (callback) callback(it, e, loss);
    }
    it.stop_metric = metric(model, na_models);
    const double improvement = result.iterations.back().stop_metric - it.stop_metric;
    result.iterations.push_back(std::move(it));
    if (improvement < settings.min_improvement) {
      result.stopped_early = t < settings.max_iterations;
      break;
    }
  }
  return result;
}

}  // namespace nal
