#include "nal/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "nal/errors.hpp"
#include "nal/network.hpp"

namespace nal {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-12});
  return std::abs(analytic - numeric) / denom;
}

double max_relative_error(std::span<const double> analytic, std::span<const double> numeric) {
  if (analytic.size() != numeric.size()) throw UsageError("gradient vectors differ in length");
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) worst = std::max(worst, relative_error(analytic[i], numeric[i]));
  return worst;
}

std::vector<double> central_differences(std::span<const ParamRef> params, const ExtendedLoss& loss, double h) {
  std::vector<double> out;
  for (const auto& p : params) {
    for (double& v : p.value) {
      const double saved = v;
      const double up = saved + h;
      const double down = saved - h;
      v = up;
      const long double plus = loss();
      v = down;
      const long double minus = loss();
      v = saved;
      out.push_back(static_cast<double>((plus - minus) / (static_cast<long double>(up) - down)));
    }
  }
  return out;
}

long double extended_nll(const Network& network, const Tensor& batch, std::span<const Label> labels) {
  const std::size_t n = batch.dim(0);
  const std::vector<long double> x(batch.values().begin(), batch.values().end());
  std::vector<long double> logits = network.evaluate<long double>(x, n);
  const std::size_t classes = logits.size() / n;
  check_labels(labels, n, classes);
  std::vector<long double> probs(classes);
  long double total = 0;
  for (std::size_t b = 0; b < n; ++b) {
    softmax_row<long double>(std::span<const long double>(logits).subspan(b * classes, classes), probs);
    total += clamped_neg_log(probs[labels[b]]);
  }
  return total / static_cast<long double>(n);
}

double grad_check(Network& network, const Tensor& batch, std::span<const Label> labels, double h) {
  network.zero_grad();
  const Tensor probs = softmax(network.forward(batch));
  network.backward(softmax_nll_grad(probs, labels));
  const std::vector<double> analytic = network.flat_gradients();
  network.zero_grad();

  const auto params = network.parameters();
  const std::vector<double> numeric =
      central_differences(params, [&] { return extended_nll(network, batch, labels); }, h);
  return max_relative_error(analytic, numeric);
}

long double extended_attention_objective(const MultiHeadNetwork& model, std::span<const NAModel> na_models,
                                         const Tensor& batch, std::span<const TargetView> targets,
                                         std::span<const std::vector<std::size_t>> selections) {
  const std::size_t n = batch.dim(0);
  const std::vector<long double> x(batch.values().begin(), batch.values().end());
  const std::vector<long double> features = model.trunk().evaluate<long double>(x, n);
  long double total = 0;
  for (std::size_t k = 0; k < model.attribute_count(); ++k) {
    const std::vector<long double> logits =
        model.heads().empty() ? features : model.heads()[k].evaluate<long double>(features, n);
    const NAModel& na = na_models[k];
    const std::size_t c = na.classes();
    std::vector<long double> p(c), mixed(c);
    long double loss = 0;
    for (std::size_t b = 0; b < n; ++b) {
      softmax_row<long double>(std::span<const long double>(logits).subspan(b * c, c), p);
      const Tensor& q = na.unit(selections[k][b]).q;
      for (std::size_t j = 0; j < c; ++j) {
        long double acc = 0;
        for (std::size_t i = 0; i < c; ++i) acc += static_cast<long double>(q[j * c + i]) * p[i];
        mixed[j] = acc;
      }
      if (targets[k].is_hard()) {
        loss += clamped_neg_log(mixed[targets[k].label(b)]);
      } else {
        const auto s = targets[k].row(b);
        for (std::size_t j = 0; j < c; ++j) {
          if (s[j] != 0.0) loss += static_cast<long double>(s[j]) * clamped_neg_log(mixed[j]);
        }
      }
    }
    total += loss / static_cast<long double>(n);
    for (const auto& unit : na.units()) {
      if (unit.frozen) continue;
      long double sq = 0;
      for (std::size_t j = 0; j < c; ++j) {
        for (std::size_t i = 0; i < c; ++i) {
          const long double d = static_cast<long double>(unit.q[j * c + i]) - (i == j ? 1 : 0);
          sq += d * d;
        }
      }
      total += 0.5L * unit.decay * sq;
    }
  }
  return total;
}

double attention_grad_check(MultiHeadNetwork& model, std::vector<NAModel>& na_models, const Tensor& batch,
                            std::span<const TargetView> targets, double h) {
  const std::size_t k_count = model.attribute_count();
  if (na_models.size() != k_count || targets.size() != k_count) {
    throw ConfigError("need one noise-attention model and target set per attribute");
  }
  model.zero_grad();
  for (auto& na : na_models) na.zero_grad();

  const std::vector<Tensor> logits = model.forward(batch);
  std::vector<std::vector<std::size_t>> selections(k_count);
  std::vector<Tensor> grads;
  for (std::size_t k = 0; k < k_count; ++k) {
    const Tensor probs = softmax(logits[k]);
    selections[k] = select_units(probs, targets[k], na_models[k]);
    grads.push_back(attention_logits_grad(probs, targets[k], selections[k], na_models[k]));
  }
  model.backward(grads);

  std::vector<ParamRef> params = model.parameters();
  for (auto& na : na_models) {
    for (auto& unit : na.units()) {
      if (!unit.frozen) params.push_back({unit.q.values(), unit.grad.values()});
    }
  }
  std::vector<double> analytic;
  for (const auto& p : params) analytic.insert(analytic.end(), p.grad.begin(), p.grad.end());

  const std::vector<double> numeric = central_differences(
      params, [&] { return extended_attention_objective(model, na_models, batch, targets, selections); }, h);
  model.zero_grad();
  for (auto& na : na_models) na.zero_grad();
  return max_relative_error(analytic, numeric);
}

}  // namespace nal
