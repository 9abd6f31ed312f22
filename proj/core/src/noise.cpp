#include "nal/noise.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "nal/errors.hpp"
#include "nal/rng.hpp"

namespace nal {
namespace {

Label other_class(Label truth, std::size_t classes, Rng& rng) {
  const auto draw = static_cast<Label>(rng.uniform_index(classes - 1));
  return draw >= truth ? draw + 1 : draw;
}

// Flips exactly round(rho * |pool|) members of `pool`.
void flip_exact(std::vector<std::size_t> pool, double rho, std::span<const Label> truth, std::vector<Label>& given,
                std::size_t classes, Rng& rng) {
  const auto count = static_cast<std::size_t>(std::llround(rho * static_cast<double>(pool.size())));
  // Partial Fisher-Yates: the first `count` slots become a uniform sample.
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + rng.uniform_index(pool.size() - i);
    std::swap(pool[i], pool[j]);
    const std::size_t n = pool[i];
    given[n] = other_class(truth[n], classes, rng);
  }
}

void check_rho(double rho) {
  if (!(rho >= 0.0 && rho < 1.0)) throw ConfigError("noise level must lie in [0, 1), got " + std::to_string(rho));
}

}  // namespace

Tensor uniform_flip_matrix(std::size_t classes, double rho) {
  if (classes < 2) throw ConfigError("flip matrix needs at least 2 classes");
  check_rho(rho);
  Tensor t({classes, classes});
  const double off = rho / static_cast<double>(classes - 1);
  for (std::size_t j = 0; j < classes; ++j) {
    for (std::size_t i = 0; i < classes; ++i) t[j * classes + i] = i == j ? 1.0 - rho : off;
  }
  return t;
}

NoiseInjection inject_noise(const Dataset& dataset, const NoiseSpec& spec, std::size_t attribute, std::size_t classes) {
  if (!dataset.true_labels) throw DataError("noise injection needs a dataset with true labels");
  if (attribute >= dataset.label_columns()) throw ConfigError("attribute index out of range");
  const std::size_t c = classes ? classes : dataset.classes;
  if (c < 2) throw ConfigError("noise injection needs at least 2 classes");
  const std::vector<Label> truth = dataset.true_column(attribute);
  for (Label l : truth) {
    if (l >= c) throw DataError("true label outside the attribute's class range");
  }
  std::vector<Label> given = truth;
  Rng rng(spec.seed);

  switch (spec.mode) {
    case NoiseSpec::Mode::Uniform: {
      check_rho(spec.rho);
      std::vector<std::size_t> pool(truth.size());
      std::iota(pool.begin(), pool.end(), std::size_t{0});
      flip_exact(std::move(pool), spec.rho, truth, given, c, rng);
      break;
    }
    case NoiseSpec::Mode::PerClass: {
      if (spec.per_class.size() != c) throw ConfigError("per-class noise needs one rate per class");
      for (std::size_t cls = 0; cls < c; ++cls) {
        check_rho(spec.per_class[cls]);
        std::vector<std::size_t> pool;
        for (std::size_t n = 0; n < truth.size(); ++n) {
          if (truth[n] == cls) pool.push_back(n);
        }
        flip_exact(std::move(pool), spec.per_class[cls], truth, given, c, rng);
      }
      break;
    }
    case NoiseSpec::Mode::Matrix: {
      const Tensor& t = spec.matrix;
      if (t.shape() != Shape{c, c}) throw ConfigError("flip matrix must be C x C");
      for (std::size_t i = 0; i < c; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
          if (t[j * c + i] < 0.0) throw ConfigError("flip matrix entries must be non-negative");
          sum += t[j * c + i];
        }
        if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("flip matrix columns must sum to 1");
      }
      for (std::size_t n = 0; n < truth.size(); ++n) {
        const double u = rng.uniform01();
        double cum = 0.0;
        Label pick = truth[n];
        for (std::size_t j = 0; j < c; ++j) {
          cum += t[j * c + truth[n]];
          if (u < cum) {
            pick = static_cast<Label>(j);
            break;
          }
        }
        given[n] = pick;
      }
      break;
    }
  }

  NoiseInjection out{dataset, {}};
  out.dataset.set_given_column(attribute, given);
  for (std::size_t n = 0; n < given.size(); ++n) {
    if (given[n] != truth[n]) out.flipped.push_back(n);
  }
  return out;
}

Tensor empirical_transition(std::span<const Label> given, std::span<const Label> truth, std::size_t classes) {
  if (given.size() != truth.size()) throw DataError("label vectors differ in length");
  Tensor counts({classes, classes});
  std::vector<double> totals(classes, 0.0);
  for (std::size_t n = 0; n < given.size(); ++n) {
    if (given[n] >= classes || truth[n] >= classes) throw DataError("label outside the class range");
    counts[given[n] * classes + truth[n]] += 1.0;
    totals[truth[n]] += 1.0;
  }
  for (std::size_t j = 0; j < classes; ++j) {
    for (std::size_t i = 0; i < classes; ++i) {
      if (totals[i] > 0.0) counts[j * classes + i] /= totals[i];
    }
  }
  return counts;
}

}  // namespace nal
