#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nal/experiment.hpp"
#include "nal/layers.hpp"
#include "nal/loss.hpp"
#include "nal/network.hpp"
#include "nal/optimizer.hpp"
#include "nal/rng.hpp"
#include "nal/training.hpp"

namespace nal::testing {

struct RandomNet {
  Shape input;
  std::vector<LayerSpec> specs;
  std::size_t classes = 0;
};

// Random small architecture from the supported layer kinds: an MLP on flat
// input or a conv stack on [C, H, W] input, with at most ~10^4 parameters.
inline RandomNet random_architecture(std::uint64_t seed) {
  Rng rng(seed);
  RandomNet net;
  net.classes = 2 + rng.uniform_index(4);
  const auto s = [&](std::uint64_t i) { return derive_seed(seed, i); };
  if (rng.uniform_index(2) == 0) {
    const std::size_t d = 2 + rng.uniform_index(6);
    const std::size_t depth = 1 + rng.uniform_index(3);
    net.input = {d};
    std::size_t width = d;
    for (std::size_t l = 0; l < depth; ++l) {
      const std::size_t h = 3 + rng.uniform_index(12);
      net.specs.push_back(DenseSpec{width, h, s(l)});
      net.specs.push_back(ReLUSpec{});
      width = h;
    }
    net.specs.push_back(DenseSpec{width, net.classes, s(99)});
  } else {
    const std::size_t ch = 1 + rng.uniform_index(2);
    const std::size_t hw = 6 + rng.uniform_index(4);
    const std::size_t filters = 2 + rng.uniform_index(3);
    const std::size_t kernel = 2 + rng.uniform_index(2);
    const std::size_t stride = 1 + rng.uniform_index(2);
    net.input = {ch, hw, hw};
    net.specs.push_back(Conv2DSpec{ch, filters, kernel, stride, s(0)});
    net.specs.push_back(ReLUSpec{});
    std::size_t out = (hw - kernel) / stride + 1;
    if (out >= 2 && rng.uniform_index(2) == 0) {
      net.specs.push_back(MaxPool2x2Spec{});
      out /= 2;
    }
    net.specs.push_back(FlattenSpec{});
    const std::size_t flat = filters * out * out;
    if (rng.uniform_index(2) == 0) {
      net.specs.push_back(DenseSpec{flat, 8, s(1)});
      net.specs.push_back(ReLUSpec{});
      net.specs.push_back(DenseSpec{8, net.classes, s(2)});
    } else {
      net.specs.push_back(DenseSpec{flat, net.classes, s(2)});
    }
  }
  return net;
}

// Adds small Gaussian noise to every parameter. Zero-initialised biases put
// pre-activations exactly on a ReLU kink whenever the layer below is all zero
// for a sample, where central differences see half a slope; gradient checks
// jitter the parameters so every point they probe is differentiable.
template <class Net>
void jitter_parameters(Net& net, std::uint64_t seed, double scale = 0.05) {
  Rng rng(seed);
  std::vector<double> values = net.flat_parameters();
  for (double& v : values) v += scale * rng.normal();
  net.set_flat_parameters(values);
}

inline Tensor random_batch(const Shape& sample, std::size_t batch, std::uint64_t seed) {
  Rng rng(seed);
  Shape shape{batch};
  shape.insert(shape.end(), sample.begin(), sample.end());
  Tensor x(shape);
  for (double& v : x.values()) v = rng.normal();
  return x;
}

inline std::vector<Label> random_labels(std::size_t n, std::size_t classes, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Label> out(n);
  for (auto& l : out) l = static_cast<Label>(rng.uniform_index(classes));
  return out;
}

// Random row-stochastic matrix [n, c].
inline Tensor random_probs(std::size_t n, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  Tensor p({n, c});
  for (std::size_t b = 0; b < n; ++b) {
    double sum = 0.0;
    for (double& v : p.row(b)) sum += (v = 0.05 + rng.uniform01());
    for (double& v : p.row(b)) v /= sum;
  }
  return p;
}

// Plain softmax-NLL training written directly against the network and
// optimizer, with the same shuffling and batching as train_epoch. Returns the
// per-batch losses of every epoch.
inline std::vector<double> plain_training(Network& net, const SgdOptions& options, std::size_t batch_size,
                                          const Tensor& features, const std::vector<std::size_t>& indices,
                                          const std::vector<Label>& labels, std::uint64_t seed, std::size_t epochs) {
  Sgd opt(options);
  Rng rng(seed);
  std::vector<double> losses;
  for (std::size_t e = 0; e < epochs; ++e) {
    std::vector<std::size_t> order = indices;
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
      const std::size_t end = std::min(order.size(), begin + batch_size);
      const std::span<const std::size_t> idx(order.data() + begin, end - begin);
      const Tensor batch = gather_rows(features, idx);
      std::vector<Label> y;
      for (std::size_t n : idx) y.push_back(labels[n]);
      const Tensor probs = softmax(net.forward(batch));
      losses.push_back(nll_loss(probs, y));
      net.backward(softmax_nll_grad(probs, y));
      sgd_step(net, opt);
    }
  }
  return losses;
}

// Blob task used by the end-to-end checks: 3 classes in 2-D, 3000/1000
// samples, 40% uniform flips.
inline std::string blobs_config(std::uint64_t seed, std::size_t max_units, std::size_t rec_iterations) {
  return "seed = " + std::to_string(seed) +
         "\n"
         "synth.kind = blobs\n"
         "synth.classes = 3\n"
         "synth.dim = 2\n"
         "synth.sigma = 1\n"
         "synth.separation = 4\n"
         "synth.n_train = 3000\n"
         "synth.n_test = 1000\n"
         "noise.mode = uniform\n"
         "noise.rho = 0.4\n"
         "model.layers = dense:32, relu, dense:3\n"
         "optim.lr = 0.15\n"
         "optim.momentum = 0.9\n"
         "optim.batch_size = 32\n"
         "na.max_units = " +
         std::to_string(max_units) +
         "\n"
         "na.pretrain_epochs = 10\n"
         "na.max_epochs = 40\n"
         "na.decay_base = 1\n"
         "na.unit_lr = 0.01\n"
         "na.unit_momentum = 0\n"
         "rec.max_iterations = " +
         std::to_string(rec_iterations) +
         "\n"
         "rec.epochs = 10\n";
}

}  // namespace nal::testing
