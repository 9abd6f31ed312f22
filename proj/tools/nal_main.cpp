// nal: noisy-label training experiments from the command line.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "nal/config.hpp"
#include "nal/dataset.hpp"
#include "nal/errors.hpp"
#include "nal/experiment.hpp"
#include "nal/export.hpp"
#include "nal/noise.hpp"
#include "nal/snapshot.hpp"
#include "nal/synthetic.hpp"

namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool out_required = false) {
  cmd->add_option("--config", c.config, "experiment config (key = value lines)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "override the config seed");
  auto* out = cmd->add_option("--out", c.out, "output directory (overrides the config)");
  if (out_required) out->required();
}

nal::ExperimentConfig load(const Common& c) {
  nal::ExperimentConfig config;
  try {
    config = nal::load_config(c.config);
  } catch (const std::exception& e) {
    throw nal::StageError("config", e.what());
  }
  if (c.seed) config.seed = *c.seed;
  if (!c.out.empty()) config.out_dir = c.out;
  return config;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
  if (!out) throw nal::DataError("failed writing " + path.string());
}

void print_evaluation(const nal::ExperimentConfig& config, const nal::Evaluation& e) {
  if (!config.multi_attribute()) {
    std::printf("test error %.4f%%\n", e.per_attribute[0]);
    return;
  }
  for (std::size_t k = 0; k < e.per_attribute.size(); ++k) {
    std::printf("test error %-12s %.4f%%\n", config.attributes[k].name.c_str(), e.per_attribute[k]);
  }
  std::printf("test error %-12s %.4f%%\n", "ALL", e.all);
}

int cmd_synth(const Common& c) {
  const auto config = load(c);
  const auto data = nal::prepare_data([&] {
    auto clean = config;
    clean.inject = false;
    for (auto& a : clean.attributes) a.noise_rho = 0.0;
    return clean;
  }());
  fs::create_directories(config.out_dir);
  nal::save_dataset(data.train, config.out_dir / "train.nld");
  nal::save_dataset(data.test, config.out_dir / "test.nld");
  std::printf("wrote %zu train / %zu test samples to %s\n", data.train.num_samples, data.test.num_samples,
              config.out_dir.string().c_str());
  return 0;
}

int cmd_inject(const Common& c, const std::string& input) {
  const auto config = load(c);
  nal::Dataset data;
  try {
    data = nal::load_dataset(input);
  } catch (const std::exception& e) {
    throw nal::StageError("data", e.what());
  }
  fs::create_directories(config.out_dir);
  std::string flipped_csv = "index\n";
  try {
    const std::uint64_t seed = nal::stream_seed(config.seed, nal::SeedStream::Noise);
    if (config.multi_attribute()) {
      for (std::size_t k = 0; k < config.attributes.size(); ++k) {
        nal::NoiseSpec spec;
        spec.rho = config.attributes[k].noise_rho;
        spec.seed = nal::derive_seed(seed, k);
        data = nal::inject_noise(data, spec, k, config.attributes[k].classes).dataset;
      }
    } else {
      nal::NoiseSpec spec = config.noise;
      spec.seed = seed;
      auto result = nal::inject_noise(data, spec);
      data = std::move(result.dataset);
      for (std::size_t i : result.flipped) flipped_csv += std::to_string(i) + "\n";
      std::printf("flipped %zu of %zu labels\n", result.flipped.size(), data.num_samples);
    }
  } catch (const std::exception& e) {
    throw nal::StageError("inject", e.what());
  }
  const auto out = config.out_dir / fs::path(input).filename();
  nal::save_dataset(data, out);
  if (!config.multi_attribute()) write_text(config.out_dir / "flipped.csv", flipped_csv);
  std::printf("wrote %s\n", out.string().c_str());
  return 0;
}

int cmd_train(const Common& c) {
  const auto config = load(c);
  const auto report = nal::run_experiment(config);
  std::printf("%zu stage-0 epochs, %zu recursion iterations, %.2fs\n", report.stage0_epochs,
              report.test_by_iteration.empty() ? 0 : report.test_by_iteration.size() - 1, report.wall_seconds);
  if (!report.test_by_iteration.empty()) print_evaluation(config, report.test_by_iteration.back());
  std::printf("artifacts in %s\n", config.out_dir.string().c_str());
  return 0;
}

int cmd_recurse(const Common& c, const std::string& model) {
  const auto config = load(c);
  nal::Experiment experiment(config);
  experiment.load_stage0(model);
  try {
    experiment.recurse();
  } catch (const nal::StageError& e) {
    experiment.fail(e.what());
    experiment.write_artifacts();
    throw;
  }
  experiment.write_artifacts();
  const auto& report = experiment.report();
  if (!report.test_by_iteration.empty()) print_evaluation(config, report.test_by_iteration.back());
  std::printf("artifacts in %s\n", config.out_dir.string().c_str());
  return 0;
}

int cmd_eval(const Common& c, const std::string& model, const std::string& data_path) {
  const auto config = load(c);
  nal::Experiment experiment(config);
  try {
    nal::load_model(model, experiment.model(), experiment.na_models());
  } catch (const std::exception& e) {
    throw nal::StageError("load", e.what());
  }
  try {
    const nal::Dataset test = data_path.empty() ? experiment.data().test : nal::load_dataset(data_path);
    print_evaluation(config, nal::evaluate(experiment.model(), test, experiment.data().sample_shape));
  } catch (const std::exception& e) {
    throw nal::StageError("evaluate", e.what());
  }
  return 0;
}

int cmd_export(const Common& c, const std::string& model) {
  const auto config = load(c);
  nal::Experiment experiment(config);
  try {
    nal::load_model(model, experiment.model(), experiment.na_models());
  } catch (const std::exception& e) {
    throw nal::StageError("load", e.what());
  }
  std::size_t files = 0;
  try {
    for (std::size_t k = 0; k < experiment.na_models().size(); ++k) {
      const std::string prefix = config.multi_attribute() ? config.attributes[k].name + "_" : "";
      files += nal::export_q(experiment.na_models()[k], config.out_dir, prefix).size();
    }
  } catch (const std::exception& e) {
    throw nal::StageError("export", e.what());
  }
  std::printf("wrote %zu files to %s\n", files, config.out_dir.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Noisy-label training with noise-attention units and recursive self-distillation"};
  app.set_version_flag("--version", nal::version_string());
  app.require_subcommand(1);

  Common synth, inject, train, recurse, eval, exportq;
  std::string inject_input, recurse_model, eval_model, eval_data, export_model;

  auto* s = app.add_subcommand("synth", "generate clean synthetic train/test datasets (NLD1)");
  add_common(s, synth);
  auto* i = app.add_subcommand("inject", "inject label noise into an NLD1 dataset");
  add_common(i, inject);
  i->add_option("--data", inject_input, "input dataset")->required()->check(CLI::ExistingFile);
  auto* t = app.add_subcommand("train", "full run: pretraining, noise-attention stage, recursion, evaluation");
  add_common(t, train);
  auto* r = app.add_subcommand("recurse", "resume the recursion from a stage-0 model snapshot");
  add_common(r, recurse);
  r->add_option("--model", recurse_model, "stage-0 snapshot (model_iter0.nlm)")->required()->check(CLI::ExistingFile);
  auto* e = app.add_subcommand("eval", "test error of a model snapshot (base network only)");
  add_common(e, eval);
  e->add_option("--model", eval_model, "model snapshot")->required()->check(CLI::ExistingFile);
  e->add_option("--data", eval_data, "NLD1 test set (default: the config's test split)")->check(CLI::ExistingFile);
  auto* x = app.add_subcommand("export-q", "write every noise unit of a snapshot as CSV and PGM");
  add_common(x, exportq);
  x->add_option("--model", export_model, "model snapshot")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (s->parsed()) return cmd_synth(synth);
    if (i->parsed()) return cmd_inject(inject, inject_input);
    if (t->parsed()) return cmd_train(train);
    if (r->parsed()) return cmd_recurse(recurse, recurse_model);
    if (e->parsed()) return cmd_eval(eval, eval_model, eval_data);
    if (x->parsed()) return cmd_export(exportq, export_model);
  } catch (const nal::StageError& err) {
    std::fprintf(stderr, "nal: %s\n", err.what());
    return 1;
  } catch (const std::exception& err) {
    std::fprintf(stderr, "nal: [%s] %s\n", app.get_subcommands().front()->get_name().c_str(), err.what());
    return 1;
  }
  return 1;
}
