#include "nal/multi_attribute.hpp"

#include <algorithm>

#include "nal/errors.hpp"

namespace nal {
namespace {

Tensor gather_rows(const Tensor& features, std::size_t begin, std::size_t end) {
  Shape shape = features.shape();
  shape[0] = end - begin;
  const std::size_t row = features.row_size();
  std::vector<double> data(features.values().begin() + static_cast<std::ptrdiff_t>(begin * row),
                           features.values().begin() + static_cast<std::ptrdiff_t>(end * row));
  return Tensor(std::move(shape), std::move(data));
}

}  // namespace

MultiHeadNetwork::MultiHeadNetwork(Network trunk, std::vector<Network> heads)
    : trunk_(std::move(trunk)), heads_(std::move(heads)) {
  if (heads_.empty()) {
    if (trunk_.output_shape().size() != 1) throw ConfigError("classifier output must be a flat logits vector");
    return;
  }
  if (trunk_.output_shape().size() != 1) throw ConfigError("trunk output must be flat to feed classifier heads");
  for (std::size_t k = 0; k < heads_.size(); ++k) {
    if (heads_[k].input_shape() != trunk_.output_shape()) {
      throw ConfigError("head " + std::to_string(k) + " expects input " + shape_to_string(heads_[k].input_shape()) +
                        " but the trunk produces " + shape_to_string(trunk_.output_shape()));
    }
    if (heads_[k].output_shape().size() != 1) throw ConfigError("head outputs must be flat logits vectors");
  }
}

std::size_t MultiHeadNetwork::classes(std::size_t k) const {
  return heads_.empty() ? trunk_.output_dim() : heads_.at(k).output_dim();
}

std::vector<Tensor> MultiHeadNetwork::forward(const Tensor& batch) {
  Tensor features = trunk_.forward(batch);
  if (heads_.empty()) return {std::move(features)};
  std::vector<Tensor> out;
  out.reserve(heads_.size());
  for (auto& head : heads_) out.push_back(head.forward(features));
  return out;
}

void MultiHeadNetwork::backward(std::span<const Tensor> logits_grads) {
  if (logits_grads.size() != attribute_count()) throw UsageError("one logits gradient per attribute is required");
  if (heads_.empty()) {
    trunk_.backward(logits_grads[0]);
    return;
  }
  Tensor trunk_grad;
  for (std::size_t k = 0; k < heads_.size(); ++k) {
    Tensor g = heads_[k].backward(logits_grads[k]);
    if (k == 0) {
      trunk_grad = std::move(g);
    } else {
      for (std::size_t i = 0; i < g.size(); ++i) trunk_grad[i] += g[i];
    }
  }
  trunk_.backward(trunk_grad);
}

std::vector<Tensor> MultiHeadNetwork::evaluate(const Tensor& batch) const {
  Tensor features = trunk_.evaluate(batch);
  if (heads_.empty()) return {std::move(features)};
  std::vector<Tensor> out;
  out.reserve(heads_.size());
  for (const auto& head : heads_) out.push_back(head.evaluate(features));
  return out;
}

std::vector<ParamRef> MultiHeadNetwork::parameters() {
  std::vector<ParamRef> out = trunk_.parameters();
  for (auto& head : heads_) {
    auto p = head.parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

std::size_t MultiHeadNetwork::parameter_count() const {
  std::size_t n = trunk_.parameter_count();
  for (const auto& head : heads_) n += head.parameter_count();
  return n;
}

void MultiHeadNetwork::zero_grad() {
  trunk_.zero_grad();
  for (auto& head : heads_) head.zero_grad();
}

std::vector<double> MultiHeadNetwork::flat_parameters() const {
  std::vector<double> out = trunk_.flat_parameters();
  for (const auto& head : heads_) {
    auto p = head.flat_parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

void MultiHeadNetwork::set_flat_parameters(std::span<const double> values) {
  if (values.size() != parameter_count()) {
    throw ConfigError("expected " + std::to_string(parameter_count()) + " parameters, got " +
                      std::to_string(values.size()));
  }
  std::size_t offset = trunk_.parameter_count();
  trunk_.set_flat_parameters(values.first(offset));
  for (auto& head : heads_) {
    head.set_flat_parameters(values.subspan(offset, head.parameter_count()));
    offset += head.parameter_count();
  }
}

std::string MultiHeadNetwork::architecture() const {
  std::string out = trunk_.architecture();
  for (const auto& head : heads_) out += " | " + head.architecture();
  return out;
}

std::vector<Tensor> multi_forward(MultiHeadNetwork& net, const Tensor& batch) {
  std::vector<Tensor> logits = net.forward(batch);
  std::vector<Tensor> probs;
  probs.reserve(logits.size());
  for (const auto& z : logits) probs.push_back(softmax(z));
  return probs;
}

MultiAttributeLoss multi_attribute_loss(std::span<const Tensor> probs, std::span<const std::vector<Label>> labels,
                                        std::span<const NAModel> na_models, std::span<const double> weights) {
  if (labels.size() != probs.size() || na_models.size() != probs.size() ||
      (!weights.empty() && weights.size() != probs.size())) {
    throw ConfigError("per-attribute inputs disagree on the number of attributes");
  }
  MultiAttributeLoss out;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    const double loss = na_loss(probs[k], labels[k], na_models[k]);
    out.per_attribute.push_back(loss);
    out.total += (weights.empty() ? 1.0 : weights[k]) * loss;
  }
  return out;
}

AttributeErrors attribute_errors(std::span<const std::vector<Label>> predicted,
                                 std::span<const std::vector<Label>> truth) {
  if (predicted.size() != truth.size() || predicted.empty()) throw DataError("attribute count mismatch");
  const std::size_t n = truth[0].size();
  AttributeErrors out;
  if (n == 0) throw DataError("cannot evaluate an empty test set");
  std::vector<bool> any_wrong(n, false);
  for (std::size_t k = 0; k < truth.size(); ++k) {
    if (predicted[k].size() != n || truth[k].size() != n) throw DataError("label columns differ in length");
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (predicted[k][i] != truth[k][i]) {
        ++wrong;
        any_wrong[i] = true;
      }
    }
    out.per_attribute.push_back(static_cast<double>(wrong) / static_cast<double>(n));
  }
  out.all = static_cast<double>(std::count(any_wrong.begin(), any_wrong.end(), true)) / static_cast<double>(n);
  return out;
}

std::vector<std::vector<Label>> predict(const MultiHeadNetwork& net, const Tensor& features, std::size_t chunk) {
  const std::size_t n = features.dim(0);
  std::vector<std::vector<Label>> out(net.attribute_count());
  for (std::size_t begin = 0; begin < n; begin += chunk) {
    const std::size_t end = std::min(n, begin + chunk);
    const auto logits = net.evaluate(gather_rows(features, begin, end));
    for (std::size_t k = 0; k < logits.size(); ++k) {
      for (std::size_t b = 0; b < end - begin; ++b) {
        const auto row = logits[k].row(b);
        out[k].push_back(static_cast<Label>(std::max_element(row.begin(), row.end()) - row.begin()));
      }
    }
  }
  return out;
}

AttributeErrors evaluate_all_metric(const MultiHeadNetwork& net, const Tensor& features,
                                    std::span<const std::vector<Label>> true_labels, std::size_t chunk) {
  if (true_labels.size() != net.attribute_count()) throw DataError("need true labels for every attribute");
  return attribute_errors(predict(net, features, chunk), true_labels);
}

}  // namespace nal
