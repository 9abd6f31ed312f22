#include "nal/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <fstream>
#include <numeric>

#include "nal/errors.hpp"
#include "nal/export.hpp"
#include "nal/noise.hpp"
#include "nal/recursion.hpp"
#include "nal/rng.hpp"
#include "nal/snapshot.hpp"
#include "nal/synthetic.hpp"
#include "nal/training.hpp"

#ifndef NAL_VERSION_STRING
#define NAL_VERSION_STRING "unknown"
#endif

namespace nal {
namespace {

std::string num(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw DataError("failed writing " + path.string());
}

std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> out(n);
  std::iota(out.begin(), out.end(), std::size_t{0});
  return out;
}

std::vector<std::string> attribute_names(const ExperimentConfig& config) {
  std::vector<std::string> out;
  for (const auto& a : config.attributes) out.push_back(a.name);
  return out;
}

// "loss" for single-label runs, "loss:<attribute>" otherwise.
std::string metric_name(const std::string& base, const ExperimentConfig& config, std::size_t k) {
  return config.multi_attribute() ? base + ":" + config.attributes[k].name : base;
}

template <class F>
auto in_stage(const std::string& stage, F&& f) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

}  // namespace

std::string version_string() { return NAL_VERSION_STRING; }

std::uint64_t stream_seed(std::uint64_t seed, SeedStream stream) {
  return derive_seed(seed, static_cast<std::uint64_t>(stream));
}

PreparedData prepare_data(const ExperimentConfig& config) {
  PreparedData out;
  const std::uint64_t noise_seed = stream_seed(config.seed, SeedStream::Noise);

  if (config.source == ExperimentConfig::Source::File) {
    out.train = load_dataset(config.train_path);
    out.test = load_dataset(config.test_path);
    if (out.train.feature_dim != out.test.feature_dim) throw DataError("train and test feature sizes differ");
  } else if (config.multi_attribute()) {
    MultiAttributeSpec spec;
    for (const auto& a : config.attributes) {
      spec.classes.push_back(a.classes);
      spec.separation.push_back(a.separation);
    }
    spec.sigma = config.synthetic.sigma;
    spec.n_train = config.synthetic.n_train;
    spec.n_test = config.synthetic.n_test;
    spec.seed = stream_seed(config.seed, SeedStream::Synthetic);
    auto split = generate_multi_attribute(spec);
    out.train = std::move(split.train);
    out.test = std::move(split.test);
  } else {
    SyntheticSpec spec = config.synthetic;
    spec.seed = stream_seed(config.seed, SeedStream::Synthetic);
    auto split = generate_synthetic(spec);
    out.train = std::move(split.train);
    out.test = std::move(split.test);
  }

  if (config.multi_attribute()) {
    if (out.train.label_columns() != config.attributes.size() || out.test.label_columns() != config.attributes.size()) {
      throw DataError("dataset has " + std::to_string(out.train.label_columns()) + " label columns, config declares " +
                      std::to_string(config.attributes.size()) + " attributes");
    }
    for (std::size_t k = 0; k < config.attributes.size(); ++k) {
      const auto& a = config.attributes[k];
      out.classes.push_back(a.classes);
      if (a.noise_rho > 0.0) {
        NoiseSpec spec;
        spec.rho = a.noise_rho;
        spec.seed = derive_seed(noise_seed, k);
        out.train = inject_noise(out.train, spec, k, a.classes).dataset;
      }
    }
  } else {
    if (out.train.label_columns() != 1) throw DataError("multi-attribute dataset needs an 'attributes' entry");
    out.classes.push_back(std::max(out.train.classes, out.test.classes));
    const bool active = config.inject && (config.noise.mode != NoiseSpec::Mode::Uniform || config.noise.rho > 0.0);
    if (active) {
      NoiseSpec spec = config.noise;
      spec.seed = noise_seed;
      auto injected = inject_noise(out.train, spec, 0, out.classes[0]);
      out.train = std::move(injected.dataset);
      out.flipped = std::move(injected.flipped);
    }
  }

  if (!config.sample_shape.empty()) {
    out.sample_shape = config.sample_shape;
  } else if (config.source == ExperimentConfig::Source::Synthetic && !config.multi_attribute() &&
             config.synthetic.kind == SyntheticSpec::Kind::ImagePatches) {
    out.sample_shape = {1, config.synthetic.height, config.synthetic.width};
  } else {
    out.sample_shape = {out.train.feature_dim};
  }
  if (shape_size(out.sample_shape) != out.train.feature_dim) {
    throw ConfigError("sample shape " + shape_to_string(out.sample_shape) + " does not hold " +
                      std::to_string(out.train.feature_dim) + " features");
  }
  return out;
}

MultiHeadNetwork build_model(const ExperimentConfig& config, const Shape& sample_shape,
                             const std::vector<std::size_t>& classes) {
  const std::uint64_t seed = stream_seed(config.seed, SeedStream::Model);
  Network trunk(sample_shape, resolve_architecture(config.layers, sample_shape, seed));
  if (!config.multi_attribute()) {
    if (trunk.output_shape() != Shape{classes[0]}) {
      throw ConfigError("final layer produces " + shape_to_string(trunk.output_shape()) + ", expected " +
                        std::to_string(classes[0]) + " class scores");
    }
    return MultiHeadNetwork(std::move(trunk));
  }
  if (trunk.output_shape().size() != 1) throw ConfigError("the shared trunk must end with a flat output");
  std::vector<Network> heads;
  const std::size_t width = trunk.output_dim();
  for (std::size_t k = 0; k < classes.size(); ++k) {
    heads.emplace_back(Shape{width}, std::vector<LayerSpec>{DenseSpec{width, classes[k], derive_seed(seed, 1000 + k)}});
  }
  return MultiHeadNetwork(std::move(trunk), std::move(heads));
}

std::vector<UnitSchedule> attribute_schedules(const ExperimentConfig& config) {
  if (!config.multi_attribute()) return {config.schedule};
  std::vector<UnitSchedule> out;
  for (const auto& a : config.attributes) out.push_back(a.schedule);
  return out;
}

std::vector<NAModel> build_na_models(const ExperimentConfig& config, const std::vector<std::size_t>& classes) {
  const auto schedules = attribute_schedules(config);
  std::vector<NAModel> out;
  for (std::size_t k = 0; k < classes.size(); ++k) out.emplace_back(classes[k], schedules[k].max_units);
  return out;
}

Split split_validation(std::size_t num_samples, double fraction, std::uint64_t seed) {
  if (num_samples < 2) throw DataError("need at least two training samples to hold out a validation split");
  auto order = iota_indices(num_samples);
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));
  auto n_val = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(num_samples)));
  n_val = std::clamp<std::size_t>(n_val, 1, num_samples - 1);
  Split out;
  out.validation.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  out.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(out.validation.begin(), out.validation.end());
  std::sort(out.train.begin(), out.train.end());
  return out;
}

Evaluation evaluate(const MultiHeadNetwork& model, const Dataset& data, const Shape& sample_shape,
                    std::span<const std::size_t> indices) {
  if (!data.true_labels) throw DataError("evaluation needs true labels");
  const Tensor features = gather_rows(data.feature_tensor(sample_shape), indices);
  std::vector<std::vector<Label>> truth(model.attribute_count());
  for (std::size_t k = 0; k < truth.size(); ++k) {
    for (std::size_t n : indices) truth[k].push_back(data.truth(n, k));
  }
  const auto errors = evaluate_all_metric(model, features, truth);
  Evaluation out;
  for (double e : errors.per_attribute) out.per_attribute.push_back(100.0 * e);
  out.all = 100.0 * errors.all;
  return out;
}

Evaluation evaluate(const MultiHeadNetwork& model, const Dataset& data, const Shape& sample_shape) {
  const auto all = iota_indices(data.num_samples);
  return evaluate(model, data, sample_shape, all);
}

std::string metrics_csv(const std::vector<MetricRow>& rows) {
  std::string out = "stage,iteration,epoch,split,metric,value\n";
  for (const auto& r : rows) {
    out += r.stage + "," + std::to_string(r.iteration) + "," + std::to_string(r.epoch) + "," + r.split + "," +
           r.metric + "," + num(r.value) + "\n";
  }
  return out;
}

std::string report_text(const RunReport& report) {
  std::string out;
  out += "version " + report.version + "\n";
  out += "seed " + std::to_string(report.seed) + "\n";
  out += "wall_seconds " + num(report.wall_seconds) + "\n";
  out += "stage0_epochs " + std::to_string(report.stage0_epochs) + "\n";
  if (!report.failure.empty()) out += "failure " + report.failure + "\n";
  for (std::size_t t = 0; t < report.test_by_iteration.size(); ++t) {
    const auto& e = report.test_by_iteration[t];
    out += "test_error iteration " + std::to_string(t) + ":";
    for (double v : e.per_attribute) out += " " + num(v);
    if (e.per_attribute.size() > 1) out += " all " + num(e.all);
    out += "\n";
  }
  for (const auto& snap : report.units) {
    for (std::size_t k = 0; k < snap.units.size(); ++k) {
      out += "units " + snap.stage + " attribute " + std::to_string(k) + ": " + std::to_string(snap.units[k].size()) +
             " active, mean diagonals";
      for (const auto& q : snap.units[k]) {
        const std::size_t c = q.dim(0);
        double diag = 0.0;
        for (std::size_t i = 0; i < c; ++i) diag += q.data()[i * c + i];
        out += " " + num(diag / static_cast<double>(c));
      }
      out += "\n";
    }
  }
  out += "\n[config]\n" + report.config_echo;
  return out;
}

Experiment::Experiment(ExperimentConfig config) : config_(std::move(config)) {
  in_stage("config", [&] { validate(config_); });
  report_.seed = config_.seed;
  report_.version = version_string();
  report_.config_echo = echo_config(config_);
  in_stage("data", [&] {
    data_ = prepare_data(config_);
    features_ = data_.train.feature_tensor(data_.sample_shape);
    split_ = split_validation(data_.train.num_samples, config_.validation_fraction,
                              stream_seed(config_.seed, SeedStream::Split));
    for (std::size_t k = 0; k < data_.classes.size(); ++k) given_.push_back(data_.train.given_column(k));
  });
  in_stage("build", [&] {
    model_ = build_model(config_, data_.sample_shape, data_.classes);
    na_models_ = build_na_models(config_, data_.classes);
  });
}

void Experiment::train_attention() {
  in_stage("attention", [&] {
    const auto schedules = attribute_schedules(config_);
    Sgd optimizer(config_.sgd);
    Rng rng(stream_seed(config_.seed, SeedStream::Training));
    StageData data{&features_, split_.train, split_.validation, given_};
    auto on_epoch = [&](const StageEpoch& e) {
      const std::string stage = e.pretrain ? "pretrain" : "attention";
      report_.metrics.push_back({stage, 0, e.epoch, "train", "loss", e.train_loss});
      for (std::size_t k = 0; k < e.validation_loss.size(); ++k) {
        report_.metrics.push_back({stage, 0, e.epoch, "validation", metric_name("loss", config_, k), e.validation_loss[k]});
        report_.metrics.push_back({stage, 0, e.epoch, "train", metric_name("units", config_, k),
                                   static_cast<double>(e.active_units[k])});
      }
    };
    const auto epochs = run_attention_stage(model_, na_models_, optimizer, config_.setup, data, schedules, rng, true,
                                            on_epoch);
    report_.stage0_epochs = epochs.size();
  });
  in_stage("evaluate", [&] {
    snapshot_units("stage0");
    evaluate_iteration(0);
  });
}

double Experiment::stop_metric(const MultiHeadNetwork& model, std::span<const NAModel> na_models) const {
  if (data_.train.true_labels) {
    return evaluate(model, data_.train, data_.sample_shape, split_.validation).all;
  }
  // No clean labels: held-out noisy loss, in percent of its iteration-0 value.
  double loss = 0.0;
  for (std::size_t k = 0; k < na_models.size(); ++k) {
    loss += split_attention_loss(model, na_models[k], k, features_, split_.validation, given_[k]);
  }
  return reference_loss_ ? 100.0 * loss / *reference_loss_ : 100.0;
}

void Experiment::evaluate_iteration(std::size_t iteration) {
  const std::size_t epoch = iteration == 0 ? report_.stage0_epochs : config_.recursion.epochs;
  if (!data_.train.true_labels && !reference_loss_) {
    double loss = 0.0;
    for (std::size_t k = 0; k < na_models_.size(); ++k) {
      loss += split_attention_loss(model_, na_models_[k], k, features_, split_.validation, given_[k]);
    }
    reference_loss_ = loss;
  }
  report_.metrics.push_back({"eval", iteration, epoch, "validation", "stop_metric", stop_metric(model_, na_models_)});
  if (data_.test.true_labels) {
    const Evaluation e = evaluate(model_, data_.test, data_.sample_shape);
    for (std::size_t k = 0; k < e.per_attribute.size(); ++k) {
      report_.metrics.push_back({"eval", iteration, epoch, "test", metric_name("error", config_, k), e.per_attribute[k]});
    }
    if (config_.multi_attribute()) report_.metrics.push_back({"eval", iteration, epoch, "test", "error:ALL", e.all});
    if (report_.test_by_iteration.size() <= iteration) report_.test_by_iteration.resize(iteration + 1);
    report_.test_by_iteration[iteration] = e;
  }
  if (iteration_models_.size() <= iteration) iteration_models_.resize(iteration + 1);
  iteration_models_[iteration] = encode_model(model_, na_models_);
}

void Experiment::snapshot_units(const std::string& stage) {
  UnitSnapshot snap{stage, {}};
  for (const auto& na : na_models_) {
    std::vector<Tensor> units;
    for (const auto& u : na.units()) units.push_back(u.q);
    snap.units.push_back(std::move(units));
  }
  report_.units.push_back(std::move(snap));
}

void Experiment::load_stage0(const std::filesystem::path& path) {
  in_stage("load", [&] {
    load_model(path, model_, na_models_);
    snapshot_units("stage0");
    evaluate_iteration(0);
  });
}

void Experiment::recurse() {
  if (config_.recursion.max_iterations == 0) return;
  in_stage("recursion", [&] {
    Rng rng(stream_seed(config_.seed, SeedStream::Recursion));
    StageData data{&features_, split_.train, split_.validation, given_};
    auto metric = [&](const MultiHeadNetwork& m, std::span<const NAModel> na) { return stop_metric(m, na); };
    auto on_epoch = [&](const RecursionIteration& it, std::size_t epoch, double loss) {
      report_.metrics.push_back({"recursion", it.t, epoch, "train", "loss", loss});
      if (epoch + 1 == config_.recursion.epochs) evaluate_iteration(it.t);
    };
    run_recursion(model_, na_models_, config_.sgd, config_.setup, data, config_.recursion, rng, metric, on_epoch);
    snapshot_units("final");
  });
}

void Experiment::write_artifacts() {
  const auto& dir = config_.out_dir;
  std::filesystem::create_directories(dir);
  report_.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
  write_text(dir / "metrics.csv", metrics_csv(report_.metrics));
  write_text(dir / "report.txt", report_text(report_));
  for (std::size_t t = 0; t < iteration_models_.size(); ++t) {
    if (iteration_models_[t].empty()) continue;
    std::ofstream out(dir / ("model_iter" + std::to_string(t) + ".nlm"), std::ios::binary);
    out.write(reinterpret_cast<const char*>(iteration_models_[t].data()),
              static_cast<std::streamsize>(iteration_models_[t].size()));
    if (!out) throw DataError("failed writing model snapshot " + std::to_string(t));
  }
  const auto names = attribute_names(config_);
  for (const auto& snap : report_.units) {
    for (std::size_t k = 0; k < snap.units.size(); ++k) {
      NAModel view(snap.units[k][0].dim(0), snap.units[k].size());
      for (std::size_t m = 1; m < snap.units[k].size(); ++m) {
        view.add_unit(0.0, 0.0);
        view.set_unit(m, snap.units[k][m], 0.0);
      }
      const std::string prefix = names.empty() ? "" : names[k] + "_";
      export_q(view, dir / "units" / snap.stage, prefix);
    }
  }
}

void Experiment::fail(const std::string& message) { report_.failure = message; }

RunReport run_experiment(const ExperimentConfig& config) {
  Experiment experiment(config);
  try {
    experiment.train_attention();
    experiment.recurse();
  } catch (const StageError& e) {
    experiment.fail(e.what());
    try {
      experiment.write_artifacts();
    } catch (const std::exception&) {
    }
    throw;
  }
  in_stage("write", [&] { experiment.write_artifacts(); });
  return experiment.report();
}

}  // namespace nal
