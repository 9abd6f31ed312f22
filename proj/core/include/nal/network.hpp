#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nal/layers.hpp"
#include "nal/tensor.hpp"

namespace nal {

// Feed-forward stack of layers. Shapes are validated once at construction;
// forward caches what backward needs, and backward accumulates into the
// per-parameter gradient buffers.
class Network {
 public:
  Network() = default;
  Network(Shape sample_shape, std::vector<LayerSpec> specs);

  const Shape& input_shape() const { return input_shape_; }
  const Shape& output_shape() const { return output_shape_; }
  std::size_t output_dim() const { return shape_size(output_shape_); }
  const std::vector<LayerSpec>& specs() const { return specs_; }
  std::size_t layer_count() const { return layers_.size(); }

  // batch: [B, input_shape...]; returns [B, output_shape...].
  Tensor forward(const Tensor& batch);

  // grad_output matches the last forward's output. Returns the gradient with
  // respect to the network input. Throws UsageError without a pending forward.
  Tensor backward(const Tensor& grad_output);

  // Stateless forward in scalar type T (double or long double); does not
  // touch the backward cache. batch holds batch_size samples row-major.
  template <class T>
  std::vector<T> evaluate(std::span<const T> batch, std::size_t batch_size) const;
  Tensor evaluate(const Tensor& batch) const;

  std::vector<ParamRef> parameters();
  std::size_t parameter_count() const { return parameter_count_; }
  void zero_grad();

  std::vector<double> flat_parameters() const;
  void set_flat_parameters(std::span<const double> values);
  std::vector<double> flat_gradients() const;

  // Text echo of the architecture, used to validate snapshots on load.
  std::string architecture() const;

 private:
  std::vector<ParamRef> parameters_impl() const;

  Shape input_shape_;
  Shape output_shape_;
  std::vector<LayerSpec> specs_;
  std::vector<Layer> layers_;
  std::vector<Shape> layer_inputs_;
  std::size_t parameter_count_ = 0;
  bool pending_forward_ = false;
  Shape last_output_shape_;
};

}  // namespace nal
