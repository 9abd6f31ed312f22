#include <benchmark/benchmark.h>

#include <numeric>

#include "nal/dataset.hpp"
#include "nal/loss.hpp"
#include "nal/network.hpp"
#include "nal/noise_attention.hpp"
#include "nal/recursion.hpp"
#include "nal/rng.hpp"
#include "nal/training.hpp"

namespace {

using namespace nal;

Tensor normal_batch(Shape shape, std::uint64_t seed) {
  Rng rng(seed);
  Tensor x(std::move(shape));
  for (double& v : x.values()) v = rng.normal();
  return x;
}

std::vector<Label> labels(std::size_t n, std::size_t classes, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Label> y(n);
  for (auto& l : y) l = static_cast<Label>(rng.uniform_index(classes));
  return y;
}

void BM_DenseForwardBackward(benchmark::State& state) {
  const auto width = static_cast<std::size_t>(state.range(0));
  Network net({width}, {DenseSpec{width, width, 1}, ReLUSpec{}, DenseSpec{width, 10, 2}});
  const Tensor x = normal_batch({32, width}, 3);
  const auto y = labels(32, 10, 4);
  for (auto _ : state) {
    const Tensor p = softmax(net.forward(x));
    net.backward(softmax_nll_grad(p, y));
    benchmark::DoNotOptimize(net.parameters().front().grad.data());
  }
  state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_DenseForwardBackward)->Arg(32)->Arg(128)->Arg(512);

void BM_ConvForwardBackward(benchmark::State& state) {
  Network net({1, 16, 16}, {Conv2DSpec{1, 8, 3, 1, 1}, ReLUSpec{}, MaxPool2x2Spec{}, FlattenSpec{},
                            DenseSpec{8 * 7 * 7, 10, 2}});
  const Tensor x = normal_batch({32, 1, 16, 16}, 3);
  const auto y = labels(32, 10, 4);
  for (auto _ : state) {
    const Tensor p = softmax(net.forward(x));
    net.backward(softmax_nll_grad(p, y));
    benchmark::DoNotOptimize(net.parameters().front().grad.data());
  }
  state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_ConvForwardBackward);

void BM_AttentionLoss(benchmark::State& state) {
  const auto classes = static_cast<std::size_t>(state.range(0));
  NAModel model(classes, 5);
  for (int m = 0; m < 4; ++m) model.add_unit(1e-3, 0.1 * (m + 1));
  Tensor p = softmax(normal_batch({256, classes}, 5));
  const auto y = labels(256, classes, 6);
  std::vector<std::size_t> selection;
  for (auto _ : state) {
    benchmark::DoNotOptimize(na_loss(p, y, model, &selection));
    model.zero_grad();
    benchmark::DoNotOptimize(attention_logits_grad(p, TargetView::hard(y), selection, model));
  }
  state.SetItemsProcessed(state.iterations() * 256);
}
BENCHMARK(BM_AttentionLoss)->Arg(3)->Arg(10);

void BM_TrainEpoch(benchmark::State& state) {
  const auto units = static_cast<std::size_t>(state.range(0));
  const std::size_t n = 3000;
  const Tensor x = normal_batch({n, 2}, 7);
  std::vector<TargetSource> targets(1);
  targets[0].labels = labels(n, 3, 8);
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  MultiHeadNetwork model(Network({2}, {DenseSpec{2, 32, 1}, ReLUSpec{}, DenseSpec{32, 3, 2}}));
  std::vector<NAModel> na{NAModel(3, units)};
  for (std::size_t m = 1; m < units; ++m) na[0].add_unit(1.0, 0.01);
  Sgd opt(SgdOptions{0.05, 0.9, 0.0});
  Rng rng(9);
  for (auto _ : state) {
    benchmark::DoNotOptimize(train_epoch(model, na, opt, {}, x, idx, targets, rng).mean_loss);
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_TrainEpoch)->Arg(1)->Arg(3)->Unit(benchmark::kMillisecond);

void BM_SnapshotProbs(benchmark::State& state) {
  const std::size_t n = 3000;
  const Tensor x = normal_batch({n, 2}, 7);
  const std::vector<std::vector<Label>> given{labels(n, 3, 8)};
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  MultiHeadNetwork model(Network({2}, {DenseSpec{2, 32, 1}, ReLUSpec{}, DenseSpec{32, 3, 2}}));
  std::vector<NAModel> na{NAModel(3, 3)};
  na[0].add_unit(1.0, 0.1);
  na[0].add_unit(2.0, 0.2);
  for (auto _ : state) {
    const auto cached = snapshot_probs(model, na, x, idx, given);
    benchmark::DoNotOptimize(build_supervision(cached[0], idx, given[0], 0.8, n).data().data());
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_SnapshotProbs)->Unit(benchmark::kMillisecond);

void BM_DatasetEncodeDecode(benchmark::State& state) {
  Dataset ds;
  ds.num_samples = 10000;
  ds.feature_dim = 64;
  ds.classes = 10;
  ds.features = normal_batch({10000, 64}, 1).values();
  ds.given_labels = labels(10000, 10, 2);
  ds.true_labels = labels(10000, 10, 3);
  for (auto _ : state) {
    const auto bytes = encode_dataset(ds);
    benchmark::DoNotOptimize(decode_dataset(bytes).num_samples);
    state.SetBytesProcessed(state.bytes_processed() + static_cast<std::int64_t>(bytes.size()));
  }
}
BENCHMARK(BM_DatasetEncodeDecode)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
