#pragma once

#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "nal/config.hpp"
#include "nal/dataset.hpp"
#include "nal/multi_attribute.hpp"
#include "nal/noise_attention.hpp"

namespace nal {

std::string version_string();

// Random streams split off the run seed.
enum class SeedStream : std::uint64_t { Synthetic = 1, Noise = 2, Split = 3, Model = 4, Training = 5, Recursion = 6 };
std::uint64_t stream_seed(std::uint64_t seed, SeedStream stream);

struct PreparedData {
  Dataset train;
  Dataset test;
  Shape sample_shape;
  std::vector<std::size_t> classes;  // per attribute
  std::vector<std::size_t> flipped;  // single-label runs with injected noise
};

// Loads or synthesizes the data and injects training-label noise; the test
// set keeps clean given labels.
PreparedData prepare_data(const ExperimentConfig& config);

MultiHeadNetwork build_model(const ExperimentConfig& config, const Shape& sample_shape,
                             const std::vector<std::size_t>& classes);
std::vector<NAModel> build_na_models(const ExperimentConfig& config, const std::vector<std::size_t>& classes);
std::vector<UnitSchedule> attribute_schedules(const ExperimentConfig& config);

// Held-out validation indices: a seeded fraction of the training set, at least
// one sample and leaving at least one for training. Both lists ascending.
struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};
Split split_validation(std::size_t num_samples, double fraction, std::uint64_t seed);

// Top-1 error in percent against true labels via the base network only.
// Multi-attribute runs also report the ALL error. Missing true labels raise
// DataError.
struct Evaluation {
  std::vector<double> per_attribute;
  double all = 0.0;  // equals per_attribute[0] for single-label data
};
Evaluation evaluate(const MultiHeadNetwork& model, const Dataset& data, const Shape& sample_shape);
Evaluation evaluate(const MultiHeadNetwork& model, const Dataset& data, const Shape& sample_shape,
                    std::span<const std::size_t> indices);

struct MetricRow {
  std::string stage;
  std::size_t iteration = 0;
  std::size_t epoch = 0;
  std::string split;
  std::string metric;
  double value = 0.0;
};

std::string metrics_csv(const std::vector<MetricRow>& rows);

struct UnitSnapshot {
  std::string stage;
  std::vector<std::vector<Tensor>> units;  // per attribute, per unit
};

struct RunReport {
  std::vector<MetricRow> metrics;
  std::vector<Evaluation> test_by_iteration;  // index = recursion iteration
  std::vector<UnitSnapshot> units;
  std::size_t stage0_epochs = 0;
  double wall_seconds = 0.0;
  std::string config_echo;
  std::uint64_t seed = 0;
  std::string version;
  std::string failure;  // stage-tagged message when the run aborted
};

std::string report_text(const RunReport& report);

// Drives one experiment. The stages can be run together (run_experiment) or
// separately by the CLI, where `recurse` resumes from a stage-0 snapshot.
class Experiment {
 public:
  explicit Experiment(ExperimentConfig config);

  const ExperimentConfig& config() const { return config_; }
  const PreparedData& data() const { return data_; }
  MultiHeadNetwork& model() { return model_; }
  std::vector<NAModel>& na_models() { return na_models_; }
  const RunReport& report() const { return report_; }

  // Base pretraining plus the noise-attention stage, then evaluation.
  void train_attention();
  // Recursion iterations 1..T_max, each followed by evaluation.
  void recurse();
  // Loads a stage-0 snapshot instead of training (for resuming).
  void load_stage0(const std::filesystem::path& path);

  // metrics.csv, report.txt, model snapshots and unit exports.
  void write_artifacts();
  void fail(const std::string& message);

 private:
  void evaluate_iteration(std::size_t iteration);
  void snapshot_units(const std::string& stage);
  double stop_metric(const MultiHeadNetwork& model, std::span<const NAModel> na_models) const;

  ExperimentConfig config_;
  PreparedData data_;
  Tensor features_;
  Split split_;
  std::vector<std::vector<Label>> given_;
  MultiHeadNetwork model_;
  std::vector<NAModel> na_models_;
  RunReport report_;
  std::optional<double> reference_loss_;
  std::vector<std::vector<std::uint8_t>> iteration_models_;
  std::chrono::steady_clock::time_point started_ = std::chrono::steady_clock::now();
};

// Whole pipeline; writes every artifact to config.out_dir. Errors propagate
// as StageError after the partial metrics and report have been flushed.
RunReport run_experiment(const ExperimentConfig& config);

}  // namespace nal
