#include "nal/loss.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "nal/errors.hpp"

namespace nal {

Tensor softmax(const Tensor& logits) {
  if (logits.rank() != 2) throw ConfigError("softmax expects [B, C] logits, got " + shape_to_string(logits.shape()));
  Tensor probs(logits.shape());
  for (std::size_t b = 0; b < logits.dim(0); ++b) softmax_row<double>(logits.row(b), probs.row(b));
  return probs;
}

void check_labels(std::span<const Label> labels, std::size_t batch, std::size_t classes) {
  if (labels.size() != batch) {
    throw DataError("expected " + std::to_string(batch) + " labels, got " + std::to_string(labels.size()));
  }
  for (std::size_t b = 0; b < labels.size(); ++b) {
    if (labels[b] >= classes) {
      throw DataError("label " + std::to_string(labels[b]) + " at sample " + std::to_string(b) +
                      " is outside [0, " + std::to_string(classes) + ")");
    }
  }
}

double nll_loss(const Tensor& probs, std::span<const Label> labels) {
  const std::size_t batch = probs.dim(0);
  const std::size_t classes = probs.dim(1);
  check_labels(labels, batch, classes);
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) total += clamped_neg_log(probs[b * classes + labels[b]]);
  return total / static_cast<double>(batch);
}

Tensor softmax_nll_grad(const Tensor& probs, std::span<const Label> labels) {
  const std::size_t batch = probs.dim(0);
  const std::size_t classes = probs.dim(1);
  check_labels(labels, batch, classes);
  const double scale = 1.0 / static_cast<double>(batch);
  Tensor grad(probs.shape());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t j = 0; j < classes; ++j) {
      const double target = j == labels[b] ? 1.0 : 0.0;
      grad[b * classes + j] = (probs[b * classes + j] - target) * scale;
    }
  }
  return grad;
}

}  // namespace nal
