// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>

#include "nal/config.hpp"
#include "nal/dataset.hpp"
#include "nal/experiment.hpp"
#include "nal/export.hpp"
#include "nal/grad_check.hpp"
#include "nal/multi_attribute.hpp"
#include "nal/noise.hpp"
#include "nal/recursion.hpp"
#include "nal/training.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using namespace nal;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

fs::path work_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "nal_acceptance" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// 1. Analytic gradients against central differences on random architectures,
// through plain NLL, hard-label noise units and soft supervision.
Outcome gradients() {
  constexpr std::size_t kArchitectures = 24;
  double worst = 0.0;
  std::size_t conv = 0;
  for (std::uint64_t seed = 1; seed <= kArchitectures; ++seed) {
    const auto arch = testing::random_architecture(seed);
    Network net(arch.input, arch.specs);
    if (net.parameter_count() > 10000) return {false, "architecture over 10^4 parameters"};
    if (arch.input.size() == 3) ++conv;
    testing::jitter_parameters(net, seed);
    const Tensor x = testing::random_batch(arch.input, 4, seed + 1000);
    const auto y = testing::random_labels(4, arch.classes, seed);
    worst = std::max(worst, grad_check(net, x, y));

    MultiHeadNetwork model(net);
    std::vector<NAModel> na{NAModel(arch.classes, 3)};
    na[0].add_unit(0.3, 0.2);
    na[0].add_unit(0.6, 0.4);
    const std::vector<TargetView> hard{TargetView::hard(y)};
    worst = std::max(worst, attention_grad_check(model, na, x, hard));
    const Tensor s = testing::random_probs(4, arch.classes, seed + 2000);
    const std::vector<TargetView> soft{TargetView::soft(s)};
    worst = std::max(worst, attention_grad_check(model, na, x, soft));
  }
  return {worst <= 1e-6 && conv > 0, std::to_string(kArchitectures) + " architectures (" + std::to_string(conv) +
                                         " conv), max relative error " + fmt("%.2e", worst)};
}

// 2. Reduction chain, all compared bit for bit.
Outcome reductions() {
  const std::size_t n = 256;
  const Tensor x = testing::random_batch({4}, n, 3);
  const auto y = testing::random_labels(n, 3, 4);
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const std::vector<LayerSpec> specs{DenseSpec{4, 16, 1}, ReLUSpec{}, DenseSpec{16, 3, 2}};
  const SgdOptions sgd{0.1, 0.9, 1e-4};

  Network plain(Shape{4}, specs);
  const auto expect = testing::plain_training(plain, sgd, 32, x, idx, y, 77, 5);

  MultiHeadNetwork model(Network(Shape{4}, specs));
  std::vector<NAModel> na{NAModel(3, 1)};
  std::vector<TargetSource> targets(1);
  targets[0].labels = y;
  Sgd opt(sgd);
  TrainingSetup setup;
  setup.batch_size = 32;
  Rng rng(77);
  std::vector<double> got;
  for (int e = 0; e < 5; ++e) {
    const auto r = train_epoch(model, na, opt, setup, x, idx, targets, rng);
    got.insert(got.end(), r.batch_losses.begin(), r.batch_losses.end());
  }
  const bool a = got == expect && model.flat_parameters() == plain.flat_parameters();

  bool b = true;
  NAModel units(3, 3);
  units.add_unit(0.0, 0.3);
  units.add_unit(0.0, 0.6);
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Tensor p = testing::random_probs(16, 3, seed);
    const auto labels = testing::random_labels(16, 3, seed);
    Tensor onehot({16, 3});
    for (std::size_t i = 0; i < 16; ++i) onehot[i * 3 + labels[i]] = 1.0;
    b = b && soft_attention_loss(p, onehot, units) == na_loss(p, labels, units);
  }

  bool c = true;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Tensor p = testing::random_probs(1, 5, seed);
    const auto s = combine_supervision(static_cast<Label>(seed % 5), p.row(0), 0.0);
    c = c && std::equal(s.begin(), s.end(), p.row(0).begin());
  }
  return {a && b && c, std::string("single-unit trajectory ") + (a ? "identical" : "DIFFERS") + " over " +
                           std::to_string(got.size()) + " batches; one-hot soft loss " + (b ? "exact" : "DIFFERS") +
                           "; alpha = 0 " + (c ? "exact" : "DIFFERS")};
}

// 3. Blend of label and previous prediction.
Outcome supervision() {
  const auto s = combine_supervision(1, std::vector<double>{0.1, 0.2, 0.7}, 0.8);
  const double err =
      std::max({std::abs(s[0] - 1.0 / 18), std::abs(s[1] - 10.0 / 18), std::abs(s[2] - 7.0 / 18)});
  return {err <= 1e-12, "max deviation from [1/18, 10/18, 7/18] " + fmt("%.1e", err)};
}

// 4. Exact flip count and transition frequencies.
Outcome injection() {
  SyntheticSpec spec;
  spec.classes = 3;
  spec.n_train = 30000;
  spec.n_test = 1;
  spec.seed = 1;
  const Dataset clean = generate_synthetic(spec).train;
  NoiseSpec noise;
  noise.rho = 0.3;
  noise.seed = 2;
  const auto out = inject_noise(clean, noise);
  const Tensor t = empirical_transition(out.dataset.given_column(), clean.true_column(), 3);
  const Tensor ref = uniform_flip_matrix(3, 0.3);
  double dev = 0.0;
  for (std::size_t i = 0; i < 9; ++i) dev = std::max(dev, std::abs(t[i] - ref[i]));
  return {out.flipped.size() == 9000 && dev <= 0.01,
          std::to_string(out.flipped.size()) + " flipped, max transition deviation " + fmt("%.4f", dev)};
}

// Criteria 5 to 7 share these experiments. Each noise-attention run includes
// its recursion iterations, so criterion 5's timing covers criterion 7's work.
struct BlobRun {
  RunReport attention;  // M_max = 3 with recursion T_max = 3
  RunReport plain;      // M_max = 1, same epoch count, no recursion
};

std::vector<BlobRun>& blob_runs() {
  static std::vector<BlobRun> runs;
  return runs;
}

constexpr std::uint64_t kSeeds[] = {1, 2, 3, 4, 5};

Outcome absorption() {
  const fs::path dir = work_dir("blobs");
  double na_sum = 0.0, plain_sum = 0.0;
  std::string per_seed;
  for (std::uint64_t seed : kSeeds) {
    BlobRun run;
    auto config = parse_config(testing::blobs_config(seed, 3, 3));
    config.out_dir = dir / ("na" + std::to_string(seed));
    run.attention = run_experiment(config);

    auto plain = parse_config(testing::blobs_config(seed, 1, 0));
    plain.schedule.max_epochs = run.attention.stage0_epochs;
    plain.schedule.patience = plain.schedule.max_epochs;  // no plateau stop: same epoch budget
    plain.out_dir = dir / ("plain" + std::to_string(seed));
    run.plain = run_experiment(plain);

    const double na_err = run.attention.test_by_iteration.front().all;
    const double plain_err = run.plain.test_by_iteration.front().all;
    na_sum += na_err;
    plain_sum += plain_err;
    per_seed += " " + fmt("%.1f", plain_err) + "/" + fmt("%.1f", na_err);
    blob_runs().push_back(std::move(run));
  }
  const double n = std::size(kSeeds);
  const double gap = plain_sum / n - na_sum / n;
  return {gap >= 3.0, "mean test error plain " + fmt("%.2f", plain_sum / n) + "% vs noise attention " +
                          fmt("%.2f", na_sum / n) + "% (gap " + fmt("%.2f", gap) + " points; per seed" + per_seed +
                          ")"};
}

Outcome units() {
  if (blob_runs().size() != std::size(kSeeds)) return {false, "runs of criterion 5 unavailable"};
  double worst_col = 0.0;
  double lowest_diag = 1.0;
  bool every_seed = true;
  for (const auto& run : blob_runs()) {
    double seed_low = 1.0;
    for (const auto& snap : run.attention.units) {
      if (snap.stage != "stage0") continue;
      for (const auto& attr : snap.units) {
        for (std::size_t m = 1; m < attr.size(); ++m) {
          const Tensor& q = attr[m];
          const std::size_t c = q.dim(0);
          double diag = 0.0;
          for (std::size_t i = 0; i < c; ++i) {
            double col = 0.0;
            for (std::size_t j = 0; j < c; ++j) {
              if (q[j * c + i] < 0.0) worst_col = INFINITY;
              col += q[j * c + i];
            }
            worst_col = std::max(worst_col, std::abs(col - 1.0));
            diag += q[i * c + i];
          }
          seed_low = std::min(seed_low, diag / static_cast<double>(c));
        }
      }
    }
    every_seed = every_seed && seed_low <= 0.9;
    lowest_diag = std::min(lowest_diag, seed_low);
  }
  return {worst_col <= 1e-9 && every_seed,
          "max column-sum error " + fmt("%.1e", worst_col) + "; lowest learned mean diagonal " +
              fmt("%.3f", lowest_diag) + (every_seed ? ", <= 0.9 in every seed" : ", ABOVE 0.9 in some seed")};
}

Outcome recursion() {
  if (blob_runs().size() != std::size(kSeeds)) return {false, "runs of criterion 5 unavailable"};
  double start = 0.0, final = 0.0;
  std::string per_seed;
  for (const auto& run : blob_runs()) {
    const auto& evals = run.attention.test_by_iteration;
    start += evals.front().all;
    final += evals.back().all;
    per_seed += " " + fmt("%.1f", evals.front().all) + "->" + fmt("%.1f", evals.back().all) + "(t=" +
                std::to_string(evals.size() - 1) + ")";
  }
  const double n = std::size(kSeeds);
  const double gain = (start - final) / n;
  return {final <= start && gain >= 1.0, "mean test error t=0 " + fmt("%.2f", start / n) + "% -> final " +
                                             fmt("%.2f", final / n) + "% (improvement " + fmt("%.2f", gain) +
                                             " points; per seed" + per_seed + ")"};
}

// 8. ALL metric on two independent synthetic attributes, each about 90%
// accurate (2 classes, centers 2.56 sigma apart).
Outcome multi_attribute() {
  const fs::path dir = work_dir("multi");
  const auto config = parse_config(
      "seed = 11\n"
      "out = " + dir.string() + "\n"
      "synth.n_train = 4000\n"
      "synth.n_test = 10000\n"
      "model.layers = dense:16, relu\n"
      "optim.lr = 0.05\n"
      "optim.momentum = 0.9\n"
      "na.pretrain_epochs = 5\n"
      "na.max_epochs = 15\n"
      "na.decay_base = 1\n"
      "rec.max_iterations = 1\n"
      "rec.epochs = 3\n"
      "attributes = a, b\n"
      "attr.a.classes = 2\n"
      "attr.a.separation = 2.5631\n"
      "attr.a.noise_rho = 0.1\n"
      "attr.b.classes = 2\n"
      "attr.b.separation = 2.5631\n"
      "attr.b.noise_rho = 0.1\n");
  const auto report = run_experiment(config);
  bool bound = true;
  for (const auto& e : report.test_by_iteration) {
    for (double err : e.per_attribute) bound = bound && e.all >= err;
  }
  const auto& last = report.test_by_iteration.back();
  const double acc_a = 100.0 - last.per_attribute[0];
  const double acc_b = 100.0 - last.per_attribute[1];
  const double all = 100.0 - last.all;
  const double product = acc_a * acc_b / 100.0;
  const bool near_ninety = std::abs(acc_a - 90.0) <= 3.0 && std::abs(acc_b - 90.0) <= 3.0;
  return {bound && near_ninety && std::abs(all - product) <= 2.0,
          "accuracy a " + fmt("%.2f", acc_a) + "%, b " + fmt("%.2f", acc_b) + "%, ALL " + fmt("%.2f", all) +
              "% vs product " + fmt("%.2f", product) + "%; ALL <= each attribute in " +
              std::to_string(report.test_by_iteration.size()) + " evaluations" + (bound ? "" : " VIOLATED")};
}

// 9. Randomised NLD1 and Q CSV round trips.
Outcome round_trips() {
  const fs::path dir = work_dir("formats");
  Rng rng(2024);
  std::size_t ok = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Dataset ds;
    ds.num_samples = 1 + rng.uniform_index(60);
    ds.feature_dim = 1 + rng.uniform_index(12);
    ds.classes = static_cast<std::uint32_t>(2 + rng.uniform_index(9));
    ds.attributes = static_cast<std::uint32_t>(rng.uniform_index(2) == 0 ? 0 : 1 + rng.uniform_index(4));
    for (std::size_t i = 0; i < ds.num_samples * ds.feature_dim; ++i) {
      ds.features.push_back(std::ldexp(rng.normal(), static_cast<int>(rng.uniform_index(80)) - 40));
    }
    const std::size_t labels = ds.num_samples * ds.label_columns();
    for (std::size_t i = 0; i < labels; ++i) ds.given_labels.push_back(static_cast<Label>(rng.uniform_index(ds.classes)));
    if (rng.uniform_index(2) == 0) {
      ds.true_labels.emplace();
      for (std::size_t i = 0; i < labels; ++i) ds.true_labels->push_back(static_cast<Label>(rng.uniform_index(ds.classes)));
    }
    const fs::path a = dir / "a.nld", b = dir / "b.nld";
    save_dataset(ds, a);
    const Dataset back = load_dataset(a);
    save_dataset(back, b);
    const bool data_ok = back == ds && read_file(a) == read_file(b);

    const std::size_t c = 2 + rng.uniform_index(10);
    Tensor raw({c, c});
    for (double& v : raw.values()) v = rng.uniform01() * (rng.uniform_index(4) == 0 ? 0.0 : 1.0);
    const Tensor q = project_column_stochastic(raw);
    const std::string csv = q_to_csv(q);
    const Tensor q_back = q_from_csv(csv);
    const bool q_ok = q_back == q && q_to_csv(q_back) == csv;
    ok += data_ok && q_ok;
  }
  return {ok == 100, std::to_string(ok) + "/100 randomized NLD1 and Q CSV cases byte-exact"};
}

// 10. Same config and seed, same bytes.
Outcome determinism() {
  const fs::path dir = work_dir("determinism");
  auto config = parse_config(testing::blobs_config(9, 3, 2));
  config.out_dir = dir / "a";
  run_experiment(config);
  config.out_dir = dir / "b";
  run_experiment(config);
  const std::string a = read_file(dir / "a" / "metrics.csv");
  const std::string b = read_file(dir / "b" / "metrics.csv");
  std::size_t rows = std::count(a.begin(), a.end(), '\n');
  return {!a.empty() && a == b, "metrics.csv " + std::string(a == b ? "identical" : "DIFFERS") + " (" +
                                    std::to_string(rows) + " lines, " + std::to_string(a.size()) + " bytes)"};
}

struct Criterion {
  int id;
  const char* name;
  double budget_seconds;  // 0: no runtime bound
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const Criterion criteria[] = {
      {1, "gradient correctness", 60, gradients},
      {2, "reduction chain", 0, reductions},
      {3, "supervision arithmetic", 0, supervision},
      {4, "noise injection fidelity", 5, injection},
      {5, "noise absorption vs plain training", 180, absorption},
      {6, "learned unit stochasticity and diversity", 0, units},
      {7, "recursion improvement", 300, recursion},
      {8, "multi-attribute ALL metric", 0, multi_attribute},
      {9, "format round trips", 0, round_trips},
      {10, "determinism", 0, determinism},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::string timing = fmt("%.1fs", secs);
    if (c.budget_seconds > 0) {
      timing += " of " + fmt("%.0fs", c.budget_seconds);
      if (secs > c.budget_seconds) {
        out.pass = false;
        out.detail += "; OVER RUNTIME BUDGET";
      }
    }
    std::printf("%s  %2d  %s: %s [%s]\n", out.pass ? "PASS" : "FAIL", c.id, c.name, out.detail.c_str(),
                timing.c_str());
    std::fflush(stdout);
    failures += !out.pass;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(std::size(criteria)) - failures, std::size(criteria));
  return failures == 0 ? 0 : 1;
}
