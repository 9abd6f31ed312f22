#include "nal/layers.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "nal/errors.hpp"
#include "nal/rng.hpp"

namespace nal {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};

void xavier_uniform(Tensor& weight, std::size_t fan_in, std::size_t fan_out, std::uint64_t seed) {
  Rng rng(seed);
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& w : weight.values()) w = rng.uniform(-limit, limit);
}

std::size_t batch_of(const Tensor& t) {
  if (t.rank() == 0) throw ConfigError("layer input must have a batch axis");
  return t.dim(0);
}

Shape sample_shape_of(const Tensor& t) { return Shape(t.shape().begin() + 1, t.shape().end()); }

}  // namespace

std::string to_string(const LayerSpec& spec) {
  return std::visit(Overloaded{
                        [](const DenseSpec& s) {
                          return "dense(" + std::to_string(s.in_dim) + "," + std::to_string(s.out_dim) + ")";
                        },
                        [](const Conv2DSpec& s) {
                          std::ostringstream os;
                          os << "conv(" << s.in_channels << "," << s.out_channels << "," << s.kernel << ","
                             << s.stride << ")";
                          return os.str();
                        },
                        [](const ReLUSpec&) { return std::string("relu"); },
                        [](const MaxPool2x2Spec&) { return std::string("maxpool"); },
                        [](const FlattenSpec&) { return std::string("flatten"); },
                    },
                    spec);
}

Layer make_layer(const LayerSpec& spec) {
  return std::visit(Overloaded{
                        [](const DenseSpec& s) -> Layer { return DenseLayer(s); },
                        [](const Conv2DSpec& s) -> Layer { return Conv2DLayer(s); },
                        [](const ReLUSpec& s) -> Layer { return ReLULayer(s); },
                        [](const MaxPool2x2Spec& s) -> Layer { return MaxPool2x2Layer(s); },
                        [](const FlattenSpec& s) -> Layer { return FlattenLayer(s); },
                    },
                    spec);
}

// ---- Dense -----------------------------------------------------------------

DenseLayer::DenseLayer(const DenseSpec& spec)
    : spec_(spec),
      weight_({spec.out_dim, spec.in_dim}),
      bias_({spec.out_dim}),
      grad_weight_({spec.out_dim, spec.in_dim}),
      grad_bias_({spec.out_dim}) {
  if (spec.in_dim == 0 || spec.out_dim == 0) throw ConfigError("dense layer dimensions must be positive");
  xavier_uniform(weight_, spec.in_dim, spec.out_dim, spec.seed);
}

Shape DenseLayer::output_shape(const Shape& sample_shape) const {
  if (sample_shape != Shape{spec_.in_dim}) {
    throw ConfigError(to_string(LayerSpec(spec_)) + " expects input " + shape_to_string({spec_.in_dim}) +
                      ", got " + shape_to_string(sample_shape));
  }
  return {spec_.out_dim};
}

template <class T>
std::vector<T> DenseLayer::apply(std::span<const T> input, std::size_t batch, const Shape&) const {
  const std::size_t in = spec_.in_dim;
  const std::size_t out = spec_.out_dim;
  const double* wt = weight_.data().data();
  std::vector<T> y(batch * out);
  for (std::size_t b = 0; b < batch; ++b) {
    const T* x = input.data() + b * in;
    T* yb = y.data() + b * out;
    for (std::size_t o = 0; o < out; ++o) {
      const double* w = wt + o * in;
      T acc = bias_[o];
      for (std::size_t i = 0; i < in; ++i) acc += static_cast<T>(w[i]) * x[i];
      yb[o] = acc;
    }
  }
  return y;
}

Tensor DenseLayer::forward(const Tensor& input) {
  const std::size_t batch = batch_of(input);
  output_shape(sample_shape_of(input));
  input_ = input;
  return Tensor({batch, spec_.out_dim}, apply<double>(input.data(), batch, {spec_.in_dim}));
}

Tensor DenseLayer::backward(const Tensor& grad_output) {
  const std::size_t batch = grad_output.dim(0);
  const std::size_t in = spec_.in_dim;
  const std::size_t out = spec_.out_dim;
  Tensor grad_input({batch, in});
  for (std::size_t b = 0; b < batch; ++b) {
    const double* x = input_.data().data() + b * in;
    const double* dy = grad_output.data().data() + b * out;
    double* dx = grad_input.data().data() + b * in;
    for (std::size_t o = 0; o < out; ++o) {
      const double g = dy[o];
      grad_bias_[o] += g;
      if (g == 0.0) continue;
      const double* w = weight_.data().data() + o * in;
      double* dw = grad_weight_.data().data() + o * in;
      for (std::size_t i = 0; i < in; ++i) {
        dw[i] += g * x[i];
        dx[i] += w[i] * g;
      }
    }
  }
  return grad_input;
}

void DenseLayer::collect(std::vector<ParamRef>& out) {
  out.push_back({weight_.data(), grad_weight_.data()});
  out.push_back({bias_.data(), grad_bias_.data()});
}

// ---- Conv2D ----------------------------------------------------------------

Conv2DLayer::Conv2DLayer(const Conv2DSpec& spec)
    : spec_(spec),
      weight_({spec.out_channels, spec.in_channels, spec.kernel, spec.kernel}),
      bias_({spec.out_channels}),
      grad_weight_({spec.out_channels, spec.in_channels, spec.kernel, spec.kernel}),
      grad_bias_({spec.out_channels}) {
  if (spec.in_channels == 0 || spec.out_channels == 0 || spec.kernel == 0 || spec.stride == 0) {
    throw ConfigError("conv layer parameters must be positive");
  }
  const std::size_t area = spec.kernel * spec.kernel;
  xavier_uniform(weight_, spec.in_channels * area, spec.out_channels * area, spec.seed);
}

Shape Conv2DLayer::output_shape(const Shape& s) const {
  if (s.size() != 3 || s[0] != spec_.in_channels || s[1] < spec_.kernel || s[2] < spec_.kernel) {
    throw ConfigError(to_string(LayerSpec(spec_)) + " cannot consume input " + shape_to_string(s));
  }
  return {spec_.out_channels, (s[1] - spec_.kernel) / spec_.stride + 1, (s[2] - spec_.kernel) / spec_.stride + 1};
}

template <class T>
std::vector<T> Conv2DLayer::apply(std::span<const T> input, std::size_t batch, const Shape& in_shape) const {
  const Shape out_shape = output_shape(in_shape);
  const std::size_t ci_n = in_shape[0], h = in_shape[1], w = in_shape[2];
  const std::size_t co_n = out_shape[0], oh = out_shape[1], ow = out_shape[2];
  const std::size_t k = spec_.kernel, s = spec_.stride;
  std::vector<T> y(batch * co_n * oh * ow);
  const T* x = input.data();
  const double* wt = weight_.data().data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t co = 0; co < co_n; ++co) {
      for (std::size_t r = 0; r < oh; ++r) {
        for (std::size_t c = 0; c < ow; ++c) {
          T acc = bias_[co];
          for (std::size_t ci = 0; ci < ci_n; ++ci) {
            const T* xc = x + ((b * ci_n + ci) * h) * w;
            const double* wc = wt + ((co * ci_n + ci) * k) * k;
            for (std::size_t kr = 0; kr < k; ++kr) {
              for (std::size_t kc = 0; kc < k; ++kc) {
                acc += static_cast<T>(wc[kr * k + kc]) * xc[(r * s + kr) * w + (c * s + kc)];
              }
            }
          }
          y[((b * co_n + co) * oh + r) * ow + c] = acc;
        }
      }
    }
  }
  return y;
}

Tensor Conv2DLayer::forward(const Tensor& input) {
  const std::size_t batch = batch_of(input);
  const Shape in_shape = sample_shape_of(input);
  Shape out_shape = output_shape(in_shape);
  input_ = input;
  out_shape.insert(out_shape.begin(), batch);
  return Tensor(std::move(out_shape), apply<double>(input.data(), batch, in_shape));
}

Tensor Conv2DLayer::backward(const Tensor& grad_output) {
  const std::size_t batch = input_.dim(0);
  const std::size_t ci_n = input_.dim(1), h = input_.dim(2), w = input_.dim(3);
  const std::size_t co_n = grad_output.dim(1), oh = grad_output.dim(2), ow = grad_output.dim(3);
  const std::size_t k = spec_.kernel, s = spec_.stride;
  Tensor grad_input(input_.shape());
  const double* x = input_.data().data();
  const double* wt = weight_.data().data();
  const double* dy = grad_output.data().data();
  double* dx = grad_input.data().data();
  double* dw = grad_weight_.data().data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t co = 0; co < co_n; ++co) {
      for (std::size_t r = 0; r < oh; ++r) {
        for (std::size_t c = 0; c < ow; ++c) {
          const double g = dy[((b * co_n + co) * oh + r) * ow + c];
          grad_bias_[co] += g;
          if (g == 0.0) continue;
          for (std::size_t ci = 0; ci < ci_n; ++ci) {
            const std::size_t x_off = ((b * ci_n + ci) * h) * w;
            const std::size_t w_off = ((co * ci_n + ci) * k) * k;
            for (std::size_t kr = 0; kr < k; ++kr) {
              for (std::size_t kc = 0; kc < k; ++kc) {
                const std::size_t xi = x_off + (r * s + kr) * w + (c * s + kc);
                dw[w_off + kr * k + kc] += g * x[xi];
                dx[xi] += wt[w_off + kr * k + kc] * g;
              }
            }
          }
        }
      }
    }
  }
  return grad_input;
}

void Conv2DLayer::collect(std::vector<ParamRef>& out) {
  out.push_back({weight_.data(), grad_weight_.data()});
  out.push_back({bias_.data(), grad_bias_.data()});
}

// ---- ReLU ------------------------------------------------------------------

template <class T>
std::vector<T> ReLULayer::apply(std::span<const T> input, std::size_t, const Shape&) const {
  std::vector<T> y(input.begin(), input.end());
  for (T& v : y) v = v > T(0) ? v : T(0);
  return y;
}

Tensor ReLULayer::forward(const Tensor& input) {
  input_ = input;
  return Tensor(input.shape(), apply<double>(input.data(), 0, {}));
}

Tensor ReLULayer::backward(const Tensor& grad_output) {
  Tensor grad_input = grad_output;
  for (std::size_t i = 0; i < grad_input.size(); ++i) {
    if (!(input_[i] > 0.0)) grad_input[i] = 0.0;
  }
  return grad_input;
}

// ---- MaxPool2x2 ------------------------------------------------------------

Shape MaxPool2x2Layer::output_shape(const Shape& s) const {
  if (s.size() != 3 || s[1] < 2 || s[2] < 2) {
    throw ConfigError("maxpool expects [channels, height>=2, width>=2], got " + shape_to_string(s));
  }
  return {s[0], s[1] / 2, s[2] / 2};
}

template <class T>
std::vector<T> MaxPool2x2Layer::apply(std::span<const T> input, std::size_t batch, const Shape& in_shape) const {
  const Shape out_shape = output_shape(in_shape);
  const std::size_t ch = in_shape[0], h = in_shape[1], w = in_shape[2];
  const std::size_t oh = out_shape[1], ow = out_shape[2];
  std::vector<T> y(batch * ch * oh * ow);
  for (std::size_t bc = 0; bc < batch * ch; ++bc) {
    for (std::size_t r = 0; r < oh; ++r) {
      for (std::size_t c = 0; c < ow; ++c) {
        T best = input[(bc * h + 2 * r) * w + 2 * c];
        for (std::size_t dr = 0; dr < 2; ++dr) {
          for (std::size_t dc = 0; dc < 2; ++dc) best = std::max(best, input[(bc * h + 2 * r + dr) * w + 2 * c + dc]);
        }
        y[(bc * oh + r) * ow + c] = best;
      }
    }
  }
  return y;
}

Tensor MaxPool2x2Layer::forward(const Tensor& input) {
  const std::size_t batch = batch_of(input);
  const Shape in_shape = sample_shape_of(input);
  const Shape out_shape = output_shape(in_shape);
  input_shape_ = input.shape();
  const std::size_t ch = in_shape[0], h = in_shape[1], w = in_shape[2];
  const std::size_t oh = out_shape[1], ow = out_shape[2];
  Tensor y({batch, ch, oh, ow});
  argmax_.assign(y.size(), 0);
  const double* x = input.data().data();
  for (std::size_t bc = 0; bc < batch * ch; ++bc) {
    for (std::size_t r = 0; r < oh; ++r) {
      for (std::size_t c = 0; c < ow; ++c) {
        std::size_t best = (bc * h + 2 * r) * w + 2 * c;
        for (std::size_t dr = 0; dr < 2; ++dr) {
          for (std::size_t dc = 0; dc < 2; ++dc) {
            const std::size_t idx = (bc * h + 2 * r + dr) * w + 2 * c + dc;
            if (x[idx] > x[best]) best = idx;
          }
        }
        const std::size_t o = (bc * oh + r) * ow + c;
        y[o] = x[best];
        argmax_[o] = best;
      }
    }
  }
  return y;
}

Tensor MaxPool2x2Layer::backward(const Tensor& grad_output) {
  Tensor grad_input(input_shape_);
  for (std::size_t o = 0; o < grad_output.size(); ++o) grad_input[argmax_[o]] += grad_output[o];
  return grad_input;
}

// ---- Flatten ---------------------------------------------------------------

Tensor FlattenLayer::forward(const Tensor& input) {
  input_shape_ = input.shape();
  Tensor y = input;
  const std::size_t batch = batch_of(input);
  y.reshape({batch, batch ? input.size() / batch : 0});
  return y;
}

Tensor FlattenLayer::backward(const Tensor& grad_output) {
  Tensor grad_input = grad_output;
  grad_input.reshape(input_shape_);
  return grad_input;
}

#define NAL_INSTANTIATE_APPLY(Layer, T) \
  template std::vector<T> Layer::apply<T>(std::span<const T>, std::size_t, const Shape&) const;
NAL_INSTANTIATE_APPLY(DenseLayer, double)
NAL_INSTANTIATE_APPLY(DenseLayer, long double)
NAL_INSTANTIATE_APPLY(Conv2DLayer, double)
NAL_INSTANTIATE_APPLY(Conv2DLayer, long double)
NAL_INSTANTIATE_APPLY(ReLULayer, double)
NAL_INSTANTIATE_APPLY(ReLULayer, long double)
NAL_INSTANTIATE_APPLY(MaxPool2x2Layer, double)
NAL_INSTANTIATE_APPLY(MaxPool2x2Layer, long double)
#undef NAL_INSTANTIATE_APPLY

}  // namespace nal
