#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "nal/errors.hpp"
#include "nal/grad_check.hpp"
#include "nal/multi_attribute.hpp"
#include "nal/recursion.hpp"
#include "test_support.hpp"

namespace nal {
namespace {

using testing::random_batch;
using testing::random_labels;

// Trunk [5] -> 7 with two heads of widths 2 and 3.
MultiHeadNetwork two_heads(std::uint64_t seed = 1) {
  Network trunk({5}, {DenseSpec{5, 7, derive_seed(seed, 0)}, ReLUSpec{}});
  std::vector<Network> heads;
  heads.emplace_back(Shape{7}, std::vector<LayerSpec>{DenseSpec{7, 2, derive_seed(seed, 1000)}});
  heads.emplace_back(Shape{7}, std::vector<LayerSpec>{DenseSpec{7, 3, derive_seed(seed, 1001)}});
  MultiHeadNetwork net(std::move(trunk), std::move(heads));
  testing::jitter_parameters(net, seed);
  return net;
}

TEST(MultiForward, SingleAttributeMatchesNetwork) {
  Network plain({4}, {DenseSpec{4, 6, 3}, ReLUSpec{}, DenseSpec{6, 3, 4}});
  MultiHeadNetwork net(plain);
  const Tensor x = random_batch({4}, 5, 2);
  const auto probs = multi_forward(net, x);
  ASSERT_EQ(probs.size(), 1u);
  EXPECT_EQ(probs[0], softmax(plain.forward(x)));
}

TEST(MultiForward, RowsSumToOneAndShapesChecked) {
  MultiHeadNetwork net = two_heads();
  const auto probs = multi_forward(net, random_batch({5}, 9, 3));
  ASSERT_EQ(probs.size(), 2u);
  EXPECT_EQ(probs[0].dim(1), 2u);
  EXPECT_EQ(probs[1].dim(1), 3u);
  for (const auto& p : probs) {
    for (std::size_t b = 0; b < 9; ++b) {
      double sum = 0.0;
      for (double v : p.row(b)) sum += v;
      EXPECT_NEAR(sum, 1.0, 1e-12);
    }
  }
  EXPECT_THROW(multi_forward(net, random_batch({4}, 2, 1)), ConfigError);
  std::vector<Network> bad;
  bad.emplace_back(Shape{6}, std::vector<LayerSpec>{DenseSpec{6, 2, 1}});
  EXPECT_THROW(MultiHeadNetwork(Network({5}, {DenseSpec{5, 7, 1}}), std::move(bad)), ConfigError);
}

TEST(MultiForward, TrunkGradientFromOneAttributeMatchesDifferences) {
  // Attribute 1 gets all-zero supervision, so the objective is attribute 0's
  // loss alone.
  MultiHeadNetwork net = two_heads(4);
  const Tensor x = random_batch({5}, 6, 4);
  const auto y0 = random_labels(6, 2, 5);
  const Tensor none({6, 3});
  std::vector<NAModel> na{NAModel(2, 1), NAModel(3, 1)};
  const std::vector<TargetView> targets{TargetView::hard(y0), TargetView::soft(none)};
  EXPECT_LE(attention_grad_check(net, na, x, targets), 1e-6);

  // The same trunk gradient from an explicit backward with only head 0.
  net.zero_grad();
  const auto probs = multi_forward(net, x);
  net.backward(std::vector<Tensor>{softmax_nll_grad(probs[0], y0), Tensor({6, 3})});
  std::vector<double> trunk_only;
  for (const auto& p : net.trunk().parameters()) trunk_only.insert(trunk_only.end(), p.grad.begin(), p.grad.end());
  const auto numeric = central_differences(
      net.trunk().parameters(),
      [&] {
        std::vector<std::vector<std::size_t>> sel{std::vector<std::size_t>(6, 0), std::vector<std::size_t>(6, 0)};
        return extended_attention_objective(net, na, x, targets, sel);
      },
      1e-6);
  EXPECT_LE(max_relative_error(trunk_only, numeric), 1e-6);
}

TEST(MultiAttributeGradCheck, HardAndSoftWithUnits) {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    MultiHeadNetwork net = two_heads(seed + 10);
    const Tensor x = random_batch({5}, 6, seed);
    std::vector<NAModel> na{NAModel(2, 2), NAModel(3, 3)};
    na[0].add_unit(0.5, 0.3);
    na[1].add_unit(0.2, 0.2);
    na[1].add_unit(0.4, 0.4);
    const auto y0 = random_labels(6, 2, seed);
    const auto y1 = random_labels(6, 3, seed + 1);
    EXPECT_LE(attention_grad_check(net, na, x, std::vector{TargetView::hard(y0), TargetView::hard(y1)}), 1e-6);
    const Tensor s1 = testing::random_probs(6, 3, seed);
    EXPECT_LE(attention_grad_check(net, na, x, std::vector{TargetView::hard(y0), TargetView::soft(s1)}), 1e-6);
  }
}

TEST(MultiAttributeLoss, Examples) {
  const Tensor p1({1, 2}, {0.3, 0.7});
  const Tensor p2({1, 3}, {0.2, 0.5, 0.3});
  std::vector<NAModel> na{NAModel(2, 2), NAModel(3, 1)};
  na[0].add_unit(0.0, 0.0);
  na[0].set_unit(1, Tensor::matrix({{0.9, 0.2}, {0.1, 0.8}}), 0.0);
  const std::vector<std::vector<Label>> labels{{0}, {2}};
  const auto loss = multi_attribute_loss(std::vector{p1, p2}, labels, na);
  EXPECT_NEAR(loss.per_attribute[0], -std::log(0.41), 1e-15);
  EXPECT_NEAR(loss.per_attribute[1], -std::log(0.3), 1e-15);
  EXPECT_NEAR(loss.total, -std::log(0.41) - std::log(0.3), 1e-15);

  const std::vector<double> w{2.0, 0.5};
  const auto weighted = multi_attribute_loss(std::vector{p1, p2}, labels, na, w);
  EXPECT_NEAR(weighted.total, -2.0 * std::log(0.41) - 0.5 * std::log(0.3), 1e-14);

  const std::vector<std::vector<Label>> bad{{0}, {3}};
  EXPECT_THROW(multi_attribute_loss(std::vector{p1, p2}, bad, na), DataError);
}

TEST(MultiAttributeLoss, ReductionAndSymmetry) {
  const Tensor p = testing::random_probs(10, 3, 8);
  const auto y = random_labels(10, 3, 8);
  NAModel model(3, 2);
  model.add_unit(0.0, 0.3);
  const auto one = multi_attribute_loss(std::vector{p}, std::vector<std::vector<Label>>{y}, std::vector{model});
  EXPECT_EQ(one.total, na_loss(p, y, model));
  const auto two = multi_attribute_loss(std::vector{p, p}, std::vector{y, y}, std::vector{model, model});
  EXPECT_EQ(two.total, 2.0 * one.total);
}

TEST(MultiAttribute, PerAttributeIsolation) {
  MultiHeadNetwork net = two_heads(6);
  const Tensor x = random_batch({5}, 8, 6);
  const auto y0 = random_labels(8, 2, 1);
  const auto y1 = random_labels(8, 3, 2);
  auto grads = [&](bool use0, bool use1) {
    net.zero_grad();
    const auto probs = multi_forward(net, x);
    net.backward(std::vector<Tensor>{use0 ? softmax_nll_grad(probs[0], y0) : Tensor({8, 2}),
                                     use1 ? softmax_nll_grad(probs[1], y1) : Tensor({8, 3})});
    std::vector<std::vector<double>> out;
    for (const auto& p : net.parameters()) out.emplace_back(p.grad.begin(), p.grad.end());
    return out;
  };
  const auto both = grads(true, true);
  const auto only0 = grads(true, false);
  const auto only1 = grads(false, true);
  const std::size_t trunk_params = net.trunk().parameters().size();
  const std::size_t head0 = net.heads()[0].parameters().size();
  for (std::size_t i = 0; i < both.size(); ++i) {
    if (i < trunk_params) {
      for (std::size_t j = 0; j < both[i].size(); ++j) EXPECT_NEAR(both[i][j], only0[i][j] + only1[i][j], 1e-14);
    } else if (i < trunk_params + head0) {
      EXPECT_EQ(both[i], only0[i]);
    } else {
      EXPECT_EQ(both[i], only1[i]);
    }
  }
}

TEST(AllMetric, PerfectPredictorAndBound) {
  const std::vector<std::vector<Label>> truth{{0, 1, 1, 0}, {2, 0, 1, 1}};
  const auto perfect = attribute_errors(truth, truth);
  EXPECT_EQ(perfect.all, 0.0);
  EXPECT_EQ(perfect.per_attribute, (std::vector<double>{0.0, 0.0}));

  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 1 + rng.uniform_index(4);
    const std::size_t n = 1 + rng.uniform_index(50);
    std::vector<std::vector<Label>> t(k), p(k);
    for (std::size_t a = 0; a < k; ++a) {
      t[a] = random_labels(n, 3, rng.next_u64());
      p[a] = random_labels(n, 3, rng.next_u64());
    }
    const auto e = attribute_errors(p, t);
    for (double err : e.per_attribute) ASSERT_LE(1.0 - e.all, 1.0 - err + 1e-15);
  }
}

TEST(AllMetric, IndependentAttributesMultiply) {
  const std::size_t n = 10000;
  const std::size_t k = 3;
  Rng rng(11);
  std::vector<std::vector<Label>> truth(k), pred(k);
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t i = 0; i < n; ++i) {
      const Label y = static_cast<Label>(rng.uniform_index(4));
      truth[a].push_back(y);
      pred[a].push_back(rng.uniform01() < 0.9 ? y : static_cast<Label>((y + 1 + rng.uniform_index(3)) % 4));
    }
  }
  const auto e = attribute_errors(pred, truth);
  EXPECT_NEAR(1.0 - e.all, std::pow(0.9, 3), 0.02);
}

TEST(AllMetric, EvaluateUsesBaseHeadsOnly) {
  MultiHeadNetwork net = two_heads(2);
  const Tensor x = random_batch({5}, 40, 2);
  const auto predicted = predict(net, x);
  const auto e = evaluate_all_metric(net, x, predicted);
  EXPECT_EQ(e.all, 0.0);
  const auto logits = net.evaluate(x);
  for (std::size_t b = 0; b < 40; ++b) {
    const auto row = logits[1].row(b);
    EXPECT_EQ(predicted[1][b], static_cast<Label>(std::max_element(row.begin(), row.end()) - row.begin()));
  }
}

TEST(MultiAttribute, RecursionSupervisesEachAttributeSeparately) {
  MultiHeadNetwork net = two_heads(3);
  Tensor x = random_batch({5}, 30, 3);
  std::vector<NAModel> na{NAModel(2, 2), NAModel(3, 2)};
  na[0].add_unit(0.1, 0.2);
  na[1].add_unit(0.1, 0.3);
  std::vector<std::size_t> idx(30);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const std::vector<std::vector<Label>> given{random_labels(30, 2, 1), random_labels(30, 3, 2)};
  const auto cached = snapshot_probs(net, na, x, idx, given);
  ASSERT_EQ(cached.size(), 2u);
  for (std::size_t k = 0; k < 2; ++k) {
    const Tensor expect = attention_outputs(net, na[k], k, x, idx, given[k]);
    EXPECT_EQ(cached[k], expect);
    const Tensor s = build_supervision(cached[k], idx, given[k], 0.8, 30);
    for (std::size_t b = 0; b < 30; ++b) {
      double sum = 0.0;
      for (double v : s.row(b)) {
        EXPECT_GE(v, 0.0);
        sum += v;
      }
      EXPECT_NEAR(sum, 1.0, 1e-12);
    }
  }
}

}  // namespace
}  // namespace nal
