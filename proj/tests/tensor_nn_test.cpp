#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "nal/errors.hpp"
#include "nal/grad_check.hpp"
#include "nal/network.hpp"
#include "nal/optimizer.hpp"
#include "test_support.hpp"

namespace nal {
namespace {

using testing::jitter_parameters;
using testing::random_architecture;
using testing::random_batch;
using testing::random_labels;

Network dense_with(std::size_t in, std::size_t out, const std::vector<double>& weights, const std::vector<double>& bias) {
  Network net({in}, {DenseSpec{in, out, 1}});
  auto params = net.parameters();
  std::copy(weights.begin(), weights.end(), params[0].value.begin());
  std::copy(bias.begin(), bias.end(), params[1].value.begin());
  return net;
}

TEST(Tensor, DataLengthMatchesShape) {
  EXPECT_EQ(Tensor({2, 3, 4}).size(), 24u);
  EXPECT_THROW((Tensor({2, 2}, std::vector<double>{1, 2, 3})), ConfigError);
}

TEST(Forward, IdentityDense) {
  Network net = dense_with(2, 2, {1, 0, 0, 1}, {0, 0});
  const Tensor out = net.forward(Tensor({1, 2}, {3, 4}));
  EXPECT_EQ(out.values(), (std::vector<double>{3, 4}));
}

TEST(Forward, ReLU) {
  Network net({3}, {ReLUSpec{}});
  EXPECT_EQ(net.forward(Tensor({1, 3}, {-1, 0, 2})).values(), (std::vector<double>{0, 0, 2}));
}

TEST(Forward, DenseHandValue) {
  Network net = dense_with(2, 1, {0.5, -0.5}, {1.0});
  EXPECT_EQ(net.forward(Tensor({1, 2}, {2, 2})).values(), std::vector<double>{1.0});
}

TEST(Forward, ShapeMismatchIsConfigError) {
  Network net({3}, {DenseSpec{3, 2, 1}});
  EXPECT_THROW(net.forward(Tensor({1, 4})), ConfigError);
  EXPECT_THROW((Network({3}, {DenseSpec{4, 2, 1}})), ConfigError);
  EXPECT_THROW((Network({3}, {Conv2DSpec{1, 2, 3, 1, 1}})), ConfigError);
}

TEST(Forward, BitDeterministic) {
  const auto arch = random_architecture(7);
  Network a(arch.input, arch.specs), b(arch.input, arch.specs);
  const Tensor x = random_batch(arch.input, 5, 3);
  EXPECT_EQ(a.forward(x), b.forward(x));
  EXPECT_EQ(a.forward(x), a.evaluate(x));
}

TEST(Forward, ConvAndPoolHandValues) {
  // 1x3x3 input, one 2x2 filter of ones, stride 1 -> 2x2 window sums.
  Network net({1, 3, 3}, {Conv2DSpec{1, 1, 2, 1, 1}});
  auto params = net.parameters();
  std::fill(params[0].value.begin(), params[0].value.end(), 1.0);
  params[1].value[0] = 0.5;
  const Tensor out = net.forward(Tensor({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9}));
  EXPECT_EQ(out.values(), (std::vector<double>{12.5, 16.5, 24.5, 28.5}));

  Network pool({1, 4, 4}, {MaxPool2x2Spec{}, FlattenSpec{}});
  std::vector<double> x(16);
  for (std::size_t i = 0; i < 16; ++i) x[i] = static_cast<double>((i * 7) % 16);
  // Windows of the 4x4 grid: max of each 2x2 block.
  const Tensor y = pool.forward(Tensor({1, 1, 4, 4}, x));
  EXPECT_EQ(y.values(), (std::vector<double>{12, 14, 15, 13}));
}

TEST(Softmax, Examples) {
  EXPECT_EQ(softmax(Tensor({1, 2}, {0, 0})).values(), (std::vector<double>{0.5, 0.5}));
  const Tensor p = softmax(Tensor({1, 2}, {std::log(1.0), std::log(3.0)}));
  EXPECT_NEAR(p[0], 0.25, 1e-15);
  EXPECT_NEAR(p[1], 0.75, 1e-15);
  const Tensor big = softmax(Tensor({1, 2}, {1000, 0}));
  EXPECT_TRUE(big.all_finite());
  EXPECT_NEAR(big[0], 1.0, 1e-15);
  EXPECT_NEAR(big[1], 0.0, 1e-15);
}

TEST(Softmax, RowsSumToOneUpToThousand) {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t c = 2 + rng.uniform_index(20);
    Tensor z({4, c});
    for (double& v : z.values()) v = rng.uniform(-1000.0, 1000.0);
    const Tensor p = softmax(z);
    ASSERT_TRUE(p.all_finite());
    for (std::size_t b = 0; b < 4; ++b) {
      double sum = 0.0;
      for (double v : p.row(b)) {
        ASSERT_GE(v, 0.0);
        sum += v;
      }
      ASSERT_NEAR(sum, 1.0, 1e-12);
    }
  }
}

TEST(NllLoss, Examples) {
  EXPECT_EQ(nll_loss(Tensor({1, 2}, {1, 0}), std::vector<Label>{0}), 0.0);
  EXPECT_NEAR(nll_loss(Tensor({1, 2}, {0.2, 0.8}), std::vector<Label>{1}), 0.22314355131420976, 1e-15);
  EXPECT_NEAR(nll_loss(Tensor({2, 2}, {0.5, 0.5, 0.5, 0.5}), std::vector<Label>{0, 1}), std::log(2.0), 1e-15);
}

TEST(NllLoss, ClampsAndValidates) {
  EXPECT_NEAR(nll_loss(Tensor({1, 2}, {1, 0}), std::vector<Label>{1}), -std::log(1e-12), 1e-9);
  EXPECT_THROW(nll_loss(Tensor({1, 2}, {0.5, 0.5}), std::vector<Label>{2}), DataError);
}

TEST(NllLoss, NonNegativeAndZeroOnlyWhenCertain) {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor p = testing::random_probs(3, 4, rng.next_u64());
    const auto y = random_labels(3, 4, rng.next_u64());
    EXPECT_GT(nll_loss(p, y), 0.0);
  }
  EXPECT_EQ(nll_loss(Tensor({2, 3}, {0, 1, 0, 1, 0, 0}), std::vector<Label>{1, 0}), 0.0);
}

TEST(Backward, LogitGradientIsProbsMinusOneHotOverB) {
  const Tensor p = softmax(Tensor({2, 3}, {0.1, 0.2, 0.3, -1, 0, 1}));
  const std::vector<Label> y{2, 0};
  const Tensor g = softmax_nll_grad(p, y);
  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t j = 0; j < 3; ++j) {
      EXPECT_DOUBLE_EQ(g[b * 3 + j], (p[b * 3 + j] - (j == y[b] ? 1.0 : 0.0)) / 2.0);
    }
  }
}

TEST(Backward, ZeroUpstreamGivesZeroGradients) {
  const auto arch = random_architecture(3);
  Network net(arch.input, arch.specs);
  const Tensor x = random_batch(arch.input, 4, 1);
  const Tensor out = net.forward(x);
  net.backward(Tensor(out.shape()));
  for (double g : net.flat_gradients()) EXPECT_EQ(g, 0.0);
}

TEST(Backward, WithoutForwardIsUsageError) {
  Network net({2}, {DenseSpec{2, 2, 1}});
  EXPECT_THROW(net.backward(Tensor({1, 2})), UsageError);
  net.forward(Tensor({1, 2}));
  net.backward(Tensor({1, 2}));
  EXPECT_THROW(net.backward(Tensor({1, 2})), UsageError);
  net.forward(Tensor({3, 2}));
  EXPECT_THROW(net.backward(Tensor({2, 2})), UsageError);
}

TEST(Sgd, HandExamples) {
  std::vector<double> theta{1.0}, grad{2.0};
  Sgd plain({0.1, 0.0, 0.0});
  plain.step(std::vector<ParamRef>{{theta, grad}});
  EXPECT_DOUBLE_EQ(theta[0], 0.8);
  EXPECT_EQ(grad[0], 0.0);

  plain.step(std::vector<ParamRef>{{theta, grad}});
  EXPECT_DOUBLE_EQ(theta[0], 0.8);

  std::vector<double> w{0.0}, g{1.0};
  Sgd momentum({0.1, 0.9, 0.0});
  momentum.step(std::vector<ParamRef>{{w, g}});
  EXPECT_DOUBLE_EQ(w[0], -0.1);
  g[0] = 1.0;
  momentum.step(std::vector<ParamRef>{{w, g}});
  EXPECT_NEAR(w[0], -0.29, 1e-15);
}

TEST(Sgd, WeightDecayAndValidation) {
  std::vector<double> theta{2.0}, grad{0.0};
  Sgd opt({0.5, 0.0, 0.1});
  opt.step(std::vector<ParamRef>{{theta, grad}});
  EXPECT_DOUBLE_EQ(theta[0], 2.0 - 0.5 * 0.2);
  EXPECT_THROW((Sgd(SgdOptions{0.0, 0.0, 0.0})), ConfigError);
  EXPECT_THROW((Sgd(SgdOptions{0.1, 1.0, 0.0})), ConfigError);
  EXPECT_THROW((Sgd(SgdOptions{0.1, 0.0, -1.0})), ConfigError);
}

TEST(Network, ParameterCountAndFlatRoundTrip) {
  const auto arch = random_architecture(21);
  Network net(arch.input, arch.specs);
  const std::size_t count = net.parameter_count();
  auto flat = net.flat_parameters();
  ASSERT_EQ(flat.size(), count);
  for (double& v : flat) v += 1.0;
  net.set_flat_parameters(flat);
  EXPECT_EQ(net.flat_parameters(), flat);
  EXPECT_EQ(net.parameter_count(), count);
}

TEST(GradCheck, DenseReluDenseBatchFour) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Network net({3}, {DenseSpec{3, 8, seed}, ReLUSpec{}, DenseSpec{8, 4, seed + 100}});
    const Tensor x = random_batch({3}, 4, seed);
    EXPECT_LE(grad_check(net, x, random_labels(4, 4, seed)), 1e-6) << "seed " << seed;
  }
}

TEST(GradCheck, LinearNetwork) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Network net({4}, {DenseSpec{4, 6, seed}, DenseSpec{6, 3, seed + 1}});
    const Tensor x = random_batch({4}, 4, seed + 7);
    EXPECT_LE(grad_check(net, x, random_labels(4, 3, seed)), 1e-8) << "seed " << seed;
  }
}

TEST(GradCheck, CorruptedBackwardIsDetected) {
  Network net({3}, {DenseSpec{3, 8, 4}, ReLUSpec{}, DenseSpec{8, 4, 5}});
  const Tensor x = random_batch({3}, 4, 9);
  const auto y = random_labels(4, 4, 9);
  net.zero_grad();
  const Tensor p = softmax(net.forward(x));
  net.backward(softmax_nll_grad(p, y));
  std::vector<double> analytic = net.flat_gradients();
  // A backward pass that forgets the 1/B factor on the first layer.
  const std::size_t first = net.parameters()[0].grad.size();
  for (std::size_t i = 0; i < first; ++i) analytic[i] *= 4.0;
  const auto numeric = central_differences(net.parameters(), [&] { return extended_nll(net, x, y); }, 1e-6);
  EXPECT_GT(max_relative_error(analytic, numeric), 1e-2);
}

TEST(GradCheck, RandomArchitecturesProperty) {
  for (std::uint64_t seed = 1; seed <= 24; ++seed) {
    const auto arch = random_architecture(seed);
    Network net(arch.input, arch.specs);
    ASSERT_LE(net.parameter_count(), 10000u);
    jitter_parameters(net, seed);
    const Tensor x = random_batch(arch.input, 4, seed + 1000);
    EXPECT_LE(grad_check(net, x, random_labels(4, arch.classes, seed)), 1e-6) << net.architecture();
  }
}

TEST(Init, XavierBoundsAndZeroBias) {
  Network net({10}, {DenseSpec{10, 30, 3}});
  const auto params = net.parameters();
  const double bound = std::sqrt(6.0 / 40.0);
  for (double w : params[0].value) EXPECT_LE(std::abs(w), bound);
  for (double b : params[1].value) EXPECT_EQ(b, 0.0);
}

}  // namespace
}  // namespace nal
