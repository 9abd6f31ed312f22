#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "nal/tensor.hpp"

namespace nal {

struct DenseSpec {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  std::uint64_t seed = 0;
  friend bool operator==(const DenseSpec&, const DenseSpec&) = default;
};

// Valid (unpadded) convolution over [B, channels, height, width] inputs.
struct Conv2DSpec {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::uint64_t seed = 0;
  friend bool operator==(const Conv2DSpec&, const Conv2DSpec&) = default;
};

struct ReLUSpec {
  friend bool operator==(const ReLUSpec&, const ReLUSpec&) = default;
};

struct MaxPool2x2Spec {
  friend bool operator==(const MaxPool2x2Spec&, const MaxPool2x2Spec&) = default;
};

struct FlattenSpec {
  friend bool operator==(const FlattenSpec&, const FlattenSpec&) = default;
};

using LayerSpec = std::variant<DenseSpec, Conv2DSpec, ReLUSpec, MaxPool2x2Spec, FlattenSpec>;

// Canonical text form, e.g. "dense(4,16)" or "conv(1,4,3,1)". Seeds are not
// part of the text form.
std::string to_string(const LayerSpec& spec);

// A parameter tensor paired with its gradient buffer.
struct ParamRef {
  std::span<double> value;
  std::span<double> grad;
};

class DenseLayer {
 public:
  explicit DenseLayer(const DenseSpec& spec);

  Shape output_shape(const Shape& sample_shape) const;
  Tensor forward(const Tensor& input);
  Tensor backward(const Tensor& grad_output);
  void collect(std::vector<ParamRef>& out);

  // Stateless forward in scalar type T (double or long double).
  template <class T>
  std::vector<T> apply(std::span<const T> input, std::size_t batch, const Shape& sample_shape) const;

  const DenseSpec& spec() const { return spec_; }
  Tensor& weight() { return weight_; }
  Tensor& bias() { return bias_; }

 private:
  DenseSpec spec_;
  Tensor weight_;  // [out, in]
  Tensor bias_;    // [out]
  Tensor grad_weight_;
  Tensor grad_bias_;
  Tensor input_;
};

class Conv2DLayer {
 public:
  explicit Conv2DLayer(const Conv2DSpec& spec);

  Shape output_shape(const Shape& sample_shape) const;
  Tensor forward(const Tensor& input);
  Tensor backward(const Tensor& grad_output);
  void collect(std::vector<ParamRef>& out);

  template <class T>
  std::vector<T> apply(std::span<const T> input, std::size_t batch, const Shape& sample_shape) const;

  const Conv2DSpec& spec() const { return spec_; }

 private:
  Conv2DSpec spec_;
  Tensor weight_;  // [out, in, k, k]
  Tensor bias_;    // [out]
  Tensor grad_weight_;
  Tensor grad_bias_;
  Tensor input_;
};

class ReLULayer {
 public:
  explicit ReLULayer(const ReLUSpec&) {}

  Shape output_shape(const Shape& sample_shape) const { return sample_shape; }
  Tensor forward(const Tensor& input);
  Tensor backward(const Tensor& grad_output);
  void collect(std::vector<ParamRef>&) {}

  template <class T>
  std::vector<T> apply(std::span<const T> input, std::size_t batch, const Shape& sample_shape) const;

  ReLUSpec spec() const { return {}; }

 private:
  Tensor input_;
};

class MaxPool2x2Layer {
 public:
  explicit MaxPool2x2Layer(const MaxPool2x2Spec&) {}

  Shape output_shape(const Shape& sample_shape) const;
  Tensor forward(const Tensor& input);
  Tensor backward(const Tensor& grad_output);
  void collect(std::vector<ParamRef>&) {}

  template <class T>
  std::vector<T> apply(std::span<const T> input, std::size_t batch, const Shape& sample_shape) const;

  MaxPool2x2Spec spec() const { return {}; }

 private:
  Shape input_shape_;
  std::vector<std::size_t> argmax_;
};

class FlattenLayer {
 public:
  explicit FlattenLayer(const FlattenSpec&) {}

  Shape output_shape(const Shape& sample_shape) const { return {shape_size(sample_shape)}; }
  Tensor forward(const Tensor& input);
  Tensor backward(const Tensor& grad_output);
  void collect(std::vector<ParamRef>&) {}

  template <class T>
  std::vector<T> apply(std::span<const T> input, std::size_t, const Shape&) const {
    return std::vector<T>(input.begin(), input.end());
  }

  FlattenSpec spec() const { return {}; }

 private:
  Shape input_shape_;
};

using Layer = std::variant<DenseLayer, Conv2DLayer, ReLULayer, MaxPool2x2Layer, FlattenLayer>;

Layer make_layer(const LayerSpec& spec);

}  // namespace nal
