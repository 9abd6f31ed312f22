#include "nal/network.hpp"

#include <algorithm>

#include "nal/errors.hpp"

namespace nal {

Network::Network(Shape sample_shape, std::vector<LayerSpec> specs)
    : input_shape_(std::move(sample_shape)), specs_(std::move(specs)) {
  if (specs_.empty()) throw ConfigError("network needs at least one layer");
  if (input_shape_.empty() || shape_size(input_shape_) == 0) {
    throw ConfigError("network input shape must be non-empty, got " + shape_to_string(input_shape_));
  }
  Shape shape = input_shape_;
  layers_.reserve(specs_.size());
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    layers_.push_back(make_layer(specs_[i]));
    layer_inputs_.push_back(shape);
    try {
      shape = std::visit([&](const auto& layer) { return layer.output_shape(shape); }, layers_.back());
    } catch (const ConfigError& e) {
      throw ConfigError("layer " + std::to_string(i) + ": " + e.what());
    }
  }
  output_shape_ = shape;
  for (const auto& p : parameters_impl()) parameter_count_ += p.value.size();
}

Tensor Network::forward(const Tensor& batch) {
  if (batch.rank() != input_shape_.size() + 1 || !std::equal(input_shape_.begin(), input_shape_.end(),
                                                             batch.shape().begin() + 1)) {
    throw ConfigError("batch shape " + shape_to_string(batch.shape()) + " does not match network input " +
                      shape_to_string(input_shape_));
  }
  if (batch.dim(0) == 0) throw ConfigError("empty batch");
  Tensor x = batch;
  for (auto& layer : layers_) {
    x = std::visit([&](auto& l) { return l.forward(x); }, layer);
  }
  pending_forward_ = true;
  last_output_shape_ = x.shape();
  return x;
}

Tensor Network::backward(const Tensor& grad_output) {
  if (!pending_forward_) throw UsageError("backward called without a matching forward");
  if (grad_output.shape() != last_output_shape_) {
    throw UsageError("backward gradient shape " + shape_to_string(grad_output.shape()) +
                     " does not match forward output " + shape_to_string(last_output_shape_));
  }
  pending_forward_ = false;
  Tensor g = grad_output;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
    g = std::visit([&](auto& l) { return l.backward(g); }, *it);
  }
  return g;
}

template <class T>
std::vector<T> Network::evaluate(std::span<const T> batch, std::size_t batch_size) const {
  if (batch_size == 0 || batch.size() != batch_size * shape_size(input_shape_)) {
    throw ConfigError("batch of " + std::to_string(batch.size()) + " values does not hold " +
                      std::to_string(batch_size) + " samples of shape " + shape_to_string(input_shape_));
  }
  std::vector<T> x(batch.begin(), batch.end());
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    x = std::visit([&](const auto& l) { return l.template apply<T>(x, batch_size, layer_inputs_[i]); }, layers_[i]);
  }
  return x;
}

template std::vector<double> Network::evaluate<double>(std::span<const double>, std::size_t) const;
template std::vector<long double> Network::evaluate<long double>(std::span<const long double>, std::size_t) const;

Tensor Network::evaluate(const Tensor& batch) const {
  if (batch.rank() != input_shape_.size() + 1 || !std::equal(input_shape_.begin(), input_shape_.end(),
                                                             batch.shape().begin() + 1)) {
    throw ConfigError("batch shape " + shape_to_string(batch.shape()) + " does not match network input " +
                      shape_to_string(input_shape_));
  }
  Shape out = output_shape_;
  out.insert(out.begin(), batch.dim(0));
  return Tensor(std::move(out), evaluate<double>(batch.data(), batch.dim(0)));
}

std::vector<ParamRef> Network::parameters_impl() const {
  std::vector<ParamRef> out;
  auto& layers = const_cast<std::vector<Layer>&>(layers_);
  for (auto& layer : layers) std::visit([&](auto& l) { l.collect(out); }, layer);
  return out;
}

std::vector<ParamRef> Network::parameters() { return parameters_impl(); }

void Network::zero_grad() {
  for (auto& p : parameters_impl()) std::fill(p.grad.begin(), p.grad.end(), 0.0);
}

std::vector<double> Network::flat_parameters() const {
  std::vector<double> out;
  out.reserve(parameter_count_);
  for (const auto& p : parameters_impl()) out.insert(out.end(), p.value.begin(), p.value.end());
  return out;
}

std::vector<double> Network::flat_gradients() const {
  std::vector<double> out;
  out.reserve(parameter_count_);
  for (const auto& p : parameters_impl()) out.insert(out.end(), p.grad.begin(), p.grad.end());
  return out;
}

void Network::set_flat_parameters(std::span<const double> values) {
  if (values.size() != parameter_count_) {
    throw ConfigError("expected " + std::to_string(parameter_count_) + " parameters, got " +
                      std::to_string(values.size()));
  }
  std::size_t offset = 0;
  for (auto& p : parameters_impl()) {
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(offset), p.value.size(), p.value.begin());
    offset += p.value.size();
  }
}

std::string Network::architecture() const {
  std::string out = "input" + shape_to_string(input_shape_);
  for (const auto& s : specs_) out += " " + to_string(s);
  return out;
}

}  // namespace nal
