#pragma once

#include <functional>
#include <span>
#include <vector>

#include "nal/multi_attribute.hpp"
#include "nal/noise_attention.hpp"
#include "nal/optimizer.hpp"
#include "nal/rng.hpp"

namespace nal {

// Training targets for one attribute, indexed by dataset sample index: hard
// labels, or soft supervision rows when `soft` is non-empty.
struct TargetSource {
  std::vector<Label> labels;
  Tensor soft;

  bool is_soft() const { return !soft.empty(); }
};

struct TrainingSetup {
  std::size_t batch_size = 32;
  double unit_learning_rate = 0.01;
  double unit_momentum = 0.0;
  std::vector<double> attribute_weights;  // empty: every weight is 1
};

struct EpochResult {
  double mean_loss = 0.0;
  std::vector<double> batch_losses;
};

// Rows of `features` ([N, ...]) at `indices`, as a batch tensor.
Tensor gather_rows(const Tensor& features, std::span<const std::size_t> indices);

// One pass over `indices` in an order shuffled by `rng`. Each minibatch:
// base forward, per-attribute unit selection and attention loss, backward
// through units and network, one SGD step on the network and one on the
// units. A non-finite loss raises TrainingError.
EpochResult train_epoch(MultiHeadNetwork& model, std::span<NAModel> na_models, Sgd& optimizer,
                        const TrainingSetup& setup, const Tensor& features, std::span<const std::size_t> indices,
                        std::span<const TargetSource> targets, Rng& rng);

// Mean attention loss of one attribute over `indices` with hard labels.
double split_attention_loss(const MultiHeadNetwork& model, const NAModel& na_model, std::size_t attribute,
                            const Tensor& features, std::span<const std::size_t> indices,
                            std::span<const Label> labels, std::size_t chunk = 512);

// Attention-network outputs Q_max * p for each sample at `indices`, with the
// unit chosen against the sample's label. Returns [|indices|, C].
Tensor attention_outputs(const MultiHeadNetwork& model, const NAModel& na_model, std::size_t attribute,
                         const Tensor& features, std::span<const std::size_t> indices, std::span<const Label> labels,
                         std::size_t chunk = 512);

// Inputs shared by the training stages. Label vectors are indexed by dataset
// sample index; `train` and `validation` are disjoint index sets.
struct StageData {
  const Tensor* features = nullptr;
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::vector<Label>> given;  // per attribute
};

struct StageEpoch {
  std::size_t epoch = 0;  // counted from the start of the stage
  bool pretrain = false;
  double train_loss = 0.0;
  std::vector<double> validation_loss;  // per attribute, noisy labels
  std::vector<std::size_t> active_units;
  std::vector<ScheduleDecision> decisions;
};

using StageCallback = std::function<void(const StageEpoch&)>;

// Base pretraining followed by the noise-attention stage.
//
// The first schedule supplies the stage-wide pretrain_epochs and max_epochs;
// unit counts, decays and plateau detection are per attribute. After
// pretraining each attribute with max_units >= 2 gains its first learnable
// unit; afterwards schedule_step runs on the validation loss recorded since
// the attribute's last unit change. The stage ends when every attribute has
// stopped (if stop_on_plateau) or after max_epochs.
std::vector<StageEpoch> run_attention_stage(MultiHeadNetwork& model, std::vector<NAModel>& na_models, Sgd& optimizer,
                                            const TrainingSetup& setup, const StageData& data,
                                            std::span<const UnitSchedule> schedules, Rng& rng,
                                            bool stop_on_plateau = true, const StageCallback& callback = {});

}  // namespace nal
