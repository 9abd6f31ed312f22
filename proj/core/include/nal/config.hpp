#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "nal/layers.hpp"
#include "nal/noise.hpp"
#include "nal/noise_attention.hpp"
#include "nal/optimizer.hpp"
#include "nal/recursion.hpp"
#include "nal/synthetic.hpp"
#include "nal/training.hpp"

namespace nal {

// Layer list without input sizes, resolved against a sample shape at build
// time: "conv:8:3, relu, maxpool, flatten, dense:32, relu, dense:3".
//   dense:OUT   conv:OUT_CH:KERNEL[:STRIDE]   relu   maxpool   flatten
struct LayerToken {
  enum class Kind { Dense, Conv, ReLU, MaxPool, Flatten };
  Kind kind = Kind::Dense;
  std::size_t out = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  friend bool operator==(const LayerToken&, const LayerToken&) = default;
};

std::vector<LayerToken> parse_architecture(const std::string& text);
std::string format_architecture(const std::vector<LayerToken>& tokens);

// Materializes the layer list for `sample_shape`. Layer i is seeded with
// derive_seed(seed, i).
std::vector<LayerSpec> resolve_architecture(const std::vector<LayerToken>& tokens, const Shape& sample_shape,
                                            std::uint64_t seed);

struct AttributeConfig {
  std::string name;
  std::size_t classes = 2;
  double separation = 6.0;  // synthetic generator, in units of sigma
  double noise_rho = 0.0;
  double weight = 1.0;
  UnitSchedule schedule;
};

struct ExperimentConfig {
  enum class Source { Synthetic, File };
  Source source = Source::Synthetic;
  std::filesystem::path train_path;
  std::filesystem::path test_path;
  Shape sample_shape;  // empty: [D] for vectors, [1, H, W] for patches

  SyntheticSpec synthetic;
  bool inject = true;
  NoiseSpec noise;

  std::vector<LayerToken> layers;
  SgdOptions sgd;
  TrainingSetup setup;
  UnitSchedule schedule;
  double validation_fraction = 0.1;
  RecursionSettings recursion;

  std::vector<AttributeConfig> attributes;  // empty: single-label run

  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "run";

  // Every key as written in the file, for the run report.
  std::map<std::string, std::string> entries;

  bool multi_attribute() const { return !attributes.empty(); }
};

// Line-based `key = value`; `#` starts a comment. Unknown keys, malformed
// values and duplicates raise ConfigError naming the line.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

// Range checks plus existence of referenced input files.
void validate(const ExperimentConfig& config);

// Canonical `key = value` listing of the effective configuration.
std::string echo_config(const ExperimentConfig& config);

}  // namespace nal
