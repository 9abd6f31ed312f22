#include "nal/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "nal/errors.hpp"
#include "nal/rng.hpp"

namespace nal {
namespace {

Dataset empty_dataset(std::size_t dim, std::size_t classes, std::size_t attributes) {
  Dataset d;
  d.feature_dim = dim;
  d.classes = static_cast<std::uint32_t>(classes);
  d.attributes = static_cast<std::uint32_t>(attributes);
  d.true_labels.emplace();
  return d;
}

void push_sample(Dataset& d, const std::vector<double>& x, std::span<const Label> labels) {
  d.features.insert(d.features.end(), x.begin(), x.end());
  d.given_labels.insert(d.given_labels.end(), labels.begin(), labels.end());
  d.true_labels->insert(d.true_labels->end(), labels.begin(), labels.end());
  ++d.num_samples;
}

}  // namespace

std::vector<std::vector<double>> blob_centers(std::size_t classes, std::size_t dim, double sigma, double separation) {
  std::vector<std::vector<double>> centers(classes, std::vector<double>(dim, 0.0));
  const double gap = separation * sigma;
  if (dim == 1) {
    for (std::size_t c = 0; c < classes; ++c) centers[c][0] = gap * static_cast<double>(c);
    return centers;
  }
  const double radius = classes == 2 ? gap / 2.0 : gap / (2.0 * std::sin(std::numbers::pi / static_cast<double>(classes)));
  for (std::size_t c = 0; c < classes; ++c) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(classes);
    centers[c][0] = radius * std::cos(angle);
    centers[c][1] = radius * std::sin(angle);
  }
  return centers;
}

SyntheticSplit generate_synthetic(const SyntheticSpec& spec) {
  if (spec.n_train < 1 || spec.n_test < 1) throw ConfigError("synthetic splits need at least one sample each");
  if (spec.classes < 2) throw ConfigError("synthetic data needs at least 2 classes");
  if (!(spec.sigma > 0.0)) throw ConfigError("synthetic sigma must be positive");
  Rng rng(spec.seed);

  std::size_t dim = spec.dim;
  std::vector<std::vector<double>> templates;
  switch (spec.kind) {
    case SyntheticSpec::Kind::GaussianBlobs:
      if (dim < 1) throw ConfigError("blob dimension must be positive");
      templates = blob_centers(spec.classes, dim, spec.sigma, spec.separation);
      break;
    case SyntheticSpec::Kind::TwoMoons:
      if (spec.classes != 2) throw ConfigError("two-moons data has exactly 2 classes");
      dim = 2;
      break;
    case SyntheticSpec::Kind::ImagePatches:
      if (spec.height < 2 || spec.width < 2) throw ConfigError("image patches must be at least 2x2");
      dim = spec.height * spec.width;
      templates.assign(spec.classes, std::vector<double>(dim));
      for (auto& t : templates) {
        for (double& v : t) v = rng.uniform01();
      }
      break;
  }

  SyntheticSplit out{empty_dataset(dim, spec.classes, 0), empty_dataset(dim, spec.classes, 0)};
  std::vector<double> x(dim);
  const std::size_t total = spec.n_train + spec.n_test;
  for (std::size_t n = 0; n < total; ++n) {
    const bool train = n < spec.n_train;
    const std::size_t local = train ? n : n - spec.n_train;
    const Label label = static_cast<Label>(local % spec.classes);
    if (spec.kind == SyntheticSpec::Kind::TwoMoons) {
      const double t = std::numbers::pi * rng.uniform01();
      x[0] = label == 0 ? std::cos(t) : 1.0 - std::cos(t);
      x[1] = label == 0 ? std::sin(t) : 0.5 - std::sin(t);
      for (double& v : x) v += spec.sigma * rng.normal();
    } else {
      for (std::size_t j = 0; j < dim; ++j) x[j] = templates[label][j] + spec.sigma * rng.normal();
    }
    const Label labels[] = {label};
    push_sample(train ? out.train : out.test, x, labels);
  }
  return out;
}

SyntheticSplit generate_multi_attribute(const MultiAttributeSpec& spec) {
  const std::size_t k_count = spec.classes.size();
  if (k_count < 1) throw ConfigError("need at least one attribute");
  if (spec.separation.size() != k_count) throw ConfigError("need one separation per attribute");
  if (spec.n_train < 1 || spec.n_test < 1) throw ConfigError("synthetic splits need at least one sample each");
  std::size_t max_classes = 0;
  std::vector<std::vector<std::vector<double>>> centers;
  for (std::size_t k = 0; k < k_count; ++k) {
    if (spec.classes[k] < 2) throw ConfigError("attribute " + std::to_string(k) + " needs at least 2 classes");
    max_classes = std::max(max_classes, spec.classes[k]);
    centers.push_back(blob_centers(spec.classes[k], 2, spec.sigma, spec.separation[k]));
  }
  Rng rng(spec.seed);
  const std::size_t dim = 2 * k_count;
  SyntheticSplit out{empty_dataset(dim, max_classes, k_count), empty_dataset(dim, max_classes, k_count)};
  std::vector<double> x(dim);
  std::vector<Label> labels(k_count);
  for (std::size_t n = 0; n < spec.n_train + spec.n_test; ++n) {
    for (std::size_t k = 0; k < k_count; ++k) {
      labels[k] = static_cast<Label>(rng.uniform_index(spec.classes[k]));
      for (std::size_t j = 0; j < 2; ++j) x[2 * k + j] = centers[k][labels[k]][j] + spec.sigma * rng.normal();
    }
    push_sample(n < spec.n_train ? out.train : out.test, x, labels);
  }
  return out;
}

}  // namespace nal
