#pragma once

#include <cstdint>
#include <vector>

#include "nal/dataset.hpp"
#include "nal/tensor.hpp"

namespace nal {

// diag = 1 - rho, off-diagonal = rho / (C - 1); entry (j, i) is the
// probability of observing j when the true class is i.
Tensor uniform_flip_matrix(std::size_t classes, double rho);

struct NoiseSpec {
  enum class Mode { Uniform, Matrix, PerClass };

  Mode mode = Mode::Uniform;
  double rho = 0.0;
  Tensor matrix;                  // Matrix mode: C x C column-stochastic
  std::vector<double> per_class;  // PerClass mode: rho_c for every class
  std::uint64_t seed = 0;
};

struct NoiseInjection {
  Dataset dataset;
  std::vector<std::size_t> flipped;  // ascending sample indices with given != true
};

// Rewrites the given labels of one attribute column from the true labels.
//  Uniform:  exactly round(rho * N) samples, chosen without replacement, move
//            to a class drawn uniformly from the other C - 1.
//  PerClass: the same rule applied within each true class c with rho_c.
//  Matrix:   each label is drawn from column y* of the matrix.
NoiseInjection inject_noise(const Dataset& dataset, const NoiseSpec& spec, std::size_t attribute = 0,
                            std::size_t classes = 0);

// Empirical transition matrix T(j, i) = #(given = j, true = i) / #(true = i).
Tensor empirical_transition(std::span<const Label> given, std::span<const Label> truth, std::size_t classes);

}  // namespace nal
