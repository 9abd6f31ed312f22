#include "nal/training.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "nal/errors.hpp"

namespace nal {

Tensor gather_rows(const Tensor& features, std::span<const std::size_t> indices) {
  Shape shape = features.shape();
  shape[0] = indices.size();
  const std::size_t row = features.row_size();
  std::vector<double> data;
  data.reserve(indices.size() * row);
  for (std::size_t n : indices) {
    const auto r = features.row(n);
    data.insert(data.end(), r.begin(), r.end());
  }
  return Tensor(std::move(shape), std::move(data));
}

EpochResult train_epoch(MultiHeadNetwork& model, std::span<NAModel> na_models, Sgd& optimizer,
                        const TrainingSetup& setup, const Tensor& features, std::span<const std::size_t> indices,
                        std::span<const TargetSource> targets, Rng& rng) {
  const std::size_t k_count = model.attribute_count();
  if (na_models.size() != k_count || targets.size() != k_count) {
    throw ConfigError("need one noise-attention model and one target source per attribute");
  }
  if (!setup.attribute_weights.empty() && setup.attribute_weights.size() != k_count) {
    throw ConfigError("need one weight per attribute");
  }
  if (indices.empty()) throw DataError("no training samples");
  if (setup.batch_size < 1) throw ConfigError("batch size must be positive");

  std::vector<std::size_t> order(indices.begin(), indices.end());
  rng.shuffle(std::span<std::size_t>(order));

  EpochResult result;
  std::vector<Tensor> logits_grads(k_count);
  std::vector<Label> batch_labels;
  for (std::size_t begin = 0; begin < order.size(); begin += setup.batch_size) {
    const std::size_t end = std::min(order.size(), begin + setup.batch_size);
    const std::span<const std::size_t> batch_idx(order.data() + begin, end - begin);
    const Tensor batch = gather_rows(features, batch_idx);
    const std::vector<Tensor> logits = model.forward(batch);

    double batch_loss = 0.0;
    for (std::size_t k = 0; k < k_count; ++k) {
      const Tensor probs = softmax(logits[k]);
      const double weight = setup.attribute_weights.empty() ? 1.0 : setup.attribute_weights[k];
      Tensor soft_rows;
      TargetView view = TargetView::hard({});
      if (targets[k].is_soft()) {
        soft_rows = gather_rows(targets[k].soft, batch_idx);
        view = TargetView::soft(soft_rows);
      } else {
        batch_labels.clear();
        for (std::size_t n : batch_idx) batch_labels.push_back(targets[k].labels.at(n));
        view = TargetView::hard(batch_labels);
      }
      std::vector<std::size_t> selection;
      const double loss = attention_loss(probs, view, na_models[k], &selection);
      batch_loss += weight * loss;
      logits_grads[k] = attention_logits_grad(probs, view, selection, na_models[k]);
      if (weight != 1.0) {
        for (double& g : logits_grads[k].values()) g *= weight;
        for (auto& unit : na_models[k].units()) {
          for (double& g : unit.grad.values()) g *= weight;
        }
      }
    }
    if (!std::isfinite(batch_loss)) {
      throw TrainingError("non-finite training loss in minibatch starting at position " + std::to_string(begin) +
                          "; lower the learning rate or check the inputs for NaN/Inf");
    }
    result.batch_losses.push_back(batch_loss);

    model.backward(logits_grads);
    const auto params = model.parameters();
    optimizer.step(params);
    for (auto& na : na_models) na_step(na, setup.unit_learning_rate, setup.unit_momentum);
  }
  double sum = 0.0;
  for (double l : result.batch_losses) sum += l;
  result.mean_loss = sum / static_cast<double>(result.batch_losses.size());
  return result;
}

double split_attention_loss(const MultiHeadNetwork& model, const NAModel& na_model, std::size_t attribute,
                            const Tensor& features, std::span<const std::size_t> indices,
                            std::span<const Label> labels, std::size_t chunk) {
  if (indices.empty()) throw DataError("empty evaluation split");
  double total = 0.0;
  std::vector<Label> batch_labels;
  for (std::size_t begin = 0; begin < indices.size(); begin += chunk) {
    const std::size_t end = std::min(indices.size(), begin + chunk);
    const std::span<const std::size_t> idx(indices.data() + begin, end - begin);
    const auto logits = model.evaluate(gather_rows(features, idx));
    const Tensor probs = softmax(logits.at(attribute));
    batch_labels.clear();
    for (std::size_t n : idx) batch_labels.push_back(labels[n]);
    total += na_loss(probs, batch_labels, na_model) * static_cast<double>(idx.size());
  }
  return total / static_cast<double>(indices.size());
}

Tensor attention_outputs(const MultiHeadNetwork& model, const NAModel& na_model, std::size_t attribute,
                         const Tensor& features, std::span<const std::size_t> indices, std::span<const Label> labels,
                         std::size_t chunk) {
  const std::size_t c = na_model.classes();
  Tensor out({indices.size(), c});
  std::vector<Label> batch_labels;
  for (std::size_t begin = 0; begin < indices.size(); begin += chunk) {
    const std::size_t end = std::min(indices.size(), begin + chunk);
    const std::span<const std::size_t> idx(indices.data() + begin, end - begin);
    const auto logits = model.evaluate(gather_rows(features, idx));
    const Tensor probs = softmax(logits.at(attribute));
    if (probs.dim(1) != c) throw ConfigError("noise-attention model class count does not match the head");
    for (std::size_t b = 0; b < idx.size(); ++b) {
      const auto p = probs.row(b);
      const std::size_t m = select_unit(p, labels[idx[b]], na_model.units());
      auto dst = out.row(begin + b);
      if (m == 0) {
        std::copy(p.begin(), p.end(), dst.begin());
      } else {
        na_forward<double>(p, na_model.unit(m).q, dst);
      }
    }
  }
  return out;
}

std::vector<StageEpoch> run_attention_stage(MultiHeadNetwork& model, std::vector<NAModel>& na_models, Sgd& optimizer,
                                            const TrainingSetup& setup, const StageData& data,
                                            std::span<const UnitSchedule> schedules, Rng& rng, bool stop_on_plateau,
                                            const StageCallback& callback) {
  const std::size_t k_count = model.attribute_count();
  if (schedules.size() != k_count || na_models.size() != k_count || data.given.size() != k_count) {
    throw ConfigError("need one schedule, noise-attention model and label column per attribute");
  }
  if (data.features == nullptr) throw ConfigError("stage data has no features");
  for (const auto& s : schedules) validate(s);

  std::vector<TargetSource> targets(k_count);
  for (std::size_t k = 0; k < k_count; ++k) targets[k].labels = data.given[k];

  std::vector<StageEpoch> records;
  auto run_epoch = [&](bool pretrain, std::size_t epoch) {
    StageEpoch rec;
    rec.epoch = epoch;
    rec.pretrain = pretrain;
    rec.train_loss = train_epoch(model, na_models, optimizer, setup, *data.features, data.train, targets, rng).mean_loss;
    for (std::size_t k = 0; k < k_count; ++k) {
      rec.validation_loss.push_back(
          data.validation.empty()
              ? rec.train_loss
              : split_attention_loss(model, na_models[k], k, *data.features, data.validation, data.given[k]));
      rec.active_units.push_back(na_models[k].active_count());
    }
    return rec;
  };

  const UnitSchedule& global = schedules[0];
  std::size_t epoch = 0;
  for (; epoch < global.pretrain_epochs; ++epoch) {
    records.push_back(run_epoch(true, epoch));
    if (callback) callback(records.back());
  }

  std::vector<std::vector<double>> history(k_count);
  std::vector<bool> stopped(k_count, false);
  for (std::size_t k = 0; k < k_count; ++k) {
    if (!na_models[k].full()) na_models[k].add_unit(unit_decay(schedules[k], 2), schedules[k].init_mix);
  }
  for (std::size_t n = 0; n < global.max_epochs; ++n, ++epoch) {
    if (stop_on_plateau && std::all_of(stopped.begin(), stopped.end(), [](bool b) { return b; })) break;
    StageEpoch rec = run_epoch(false, epoch);
    for (std::size_t k = 0; k < k_count; ++k) {
      ScheduleDecision decision = ScheduleDecision::Stop;
      if (!stopped[k]) {
        history[k].push_back(rec.validation_loss[k]);
        decision = schedule_step(history[k], schedules[k], na_models[k].active_count());
        if (decision == ScheduleDecision::AddUnit) {
          na_models[k].add_unit(unit_decay(schedules[k], na_models[k].active_count() + 1), schedules[k].init_mix);
          history[k].clear();
        } else if (decision == ScheduleDecision::Stop && stop_on_plateau) {
          stopped[k] = true;
        }
      }
      rec.decisions.push_back(decision);
    }
    records.push_back(std::move(rec));
    if (callback) callback(records.back());
  }
  return records;
}

}  // namespace nal
