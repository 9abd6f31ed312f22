#pragma once

#include <functional>
#include <span>
#include <vector>

#include "nal/training.hpp"

namespace nal {

// alpha_base^t, for t >= 1.
double alpha_schedule(std::size_t t, double alpha_base);

// s = (alpha * onehot(given) + prev) / (1 + alpha).
std::vector<double> combine_supervision(Label given, std::span<const double> prev_probs, double alpha);

// Cross-entropy -1/B sum_n sum_j s_nj log max(p_nj, eps) of supervision rows
// against probabilities that already went through each sample's unit.
double soft_nll_loss(const Tensor& attention_probs, const Tensor& supervision);

// The same loss computed from base probabilities, routing each sample through
// the unit that best explains its supervision.
double soft_attention_loss(const Tensor& p_base, const Tensor& supervision, const NAModel& model,
                           std::vector<std::size_t>* selection = nullptr);

// Frozen teacher outputs of the previous iteration for `indices`, per
// attribute ([|indices|, C_k] each).
std::vector<Tensor> snapshot_probs(const MultiHeadNetwork& model, std::span<const NAModel> na_models,
                                   const Tensor& features, std::span<const std::size_t> indices,
                                   std::span<const std::vector<Label>> given);

// Supervision rows for one attribute, laid out by dataset sample index
// ([num_samples, C]); rows not listed in `indices` stay zero and are never
// read.
Tensor build_supervision(const Tensor& cached_probs, std::span<const std::size_t> indices,
                         std::span<const Label> given, double alpha, std::size_t num_samples);

struct RecursionSettings {
  double alpha_base = 0.8;
  std::size_t max_iterations = 4;  // T_max; 0 disables the recursion
  double min_improvement = 0.2;    // in points of the stopping metric
  std::size_t epochs = 10;         // per iteration
};

void validate(const RecursionSettings& settings);

struct RecursionIteration {
  std::size_t t = 0;
  double alpha = 0.0;
  double stop_metric = 0.0;  // lower is better
  std::vector<double> epoch_losses;
};

struct RecursionResult {
  std::vector<RecursionIteration> iterations;  // t = 0 first
  bool stopped_early = false;
};

// Stopping metric of the current model, in points (e.g. validation error %).
using RecursionMetric = std::function<double(const MultiHeadNetwork&, std::span<const NAModel>)>;
using RecursionCallback = std::function<void(const RecursionIteration&, std::size_t epoch, double loss)>;

// Recursive self-distillation from the iteration-0 model held in `model` and
// `na_models`. Each iteration snapshots the current attention outputs on
// data.train, blends them with the given labels using alpha_base^t, and trains
// `epochs` epochs on the soft supervision only, starting from the current
// parameters with fresh optimizer state. Stops after max_iterations or once
// the metric improves by less than min_improvement over the previous
// iteration; the last trained model is kept either way.
RecursionResult run_recursion(MultiHeadNetwork& model, std::vector<NAModel>& na_models, const SgdOptions& sgd,
                              const TrainingSetup& setup, const StageData& data, const RecursionSettings& settings,
                              Rng& rng, const RecursionMetric& metric, const RecursionCallback& callback = {});

}  // namespace nal
