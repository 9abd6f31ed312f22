#pragma once

#include <cmath>
#include <cstdint>
#include <span>

#include "nal/tensor.hpp"

namespace nal {

using Label = std::uint32_t;

// Probabilities are clamped to this floor before any logarithm.
inline constexpr double kProbFloor = 1e-12;

// -log(max(p, kProbFloor)).
template <class T>
T clamped_neg_log(T p) {
  using std::log;
  return -log(p > T(kProbFloor) ? p : T(kProbFloor));
}

// Softmax of one row with max-subtraction.
template <class T>
void softmax_row(std::span<const T> logits, std::span<T> out) {
  using std::exp;
  T peak = logits[0];
  for (T v : logits) peak = v > peak ? v : peak;
  T sum = 0;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    out[j] = exp(logits[j] - peak);
    sum += out[j];
  }
  for (T& v : out) v /= sum;
}

// Row-wise softmax; logits are [B, C].
Tensor softmax(const Tensor& logits);

// Mean negative log-likelihood of the labels under row-stochastic probs.
// Throws DataError for labels outside [0, C).
double nll_loss(const Tensor& probs, std::span<const Label> labels);

// Gradient of nll_loss(softmax(logits)) with respect to the logits:
// (probs - one_hot) / B.
Tensor softmax_nll_grad(const Tensor& probs, std::span<const Label> labels);

void check_labels(std::span<const Label> labels, std::size_t batch, std::size_t classes);

}  // namespace nal
