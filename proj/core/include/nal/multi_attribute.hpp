#pragma once

#include <span>
#include <vector>

#include "nal/loss.hpp"
#include "nal/network.hpp"
#include "nal/noise_attention.hpp"

namespace nal {

// Shared trunk followed by K classifier heads. With no heads the trunk output
// is the logits of a single attribute, so single-label models are the K = 1
// case of this type.
class MultiHeadNetwork {
 public:
  MultiHeadNetwork() = default;
  explicit MultiHeadNetwork(Network trunk, std::vector<Network> heads = {});

  std::size_t attribute_count() const { return heads_.empty() ? 1 : heads_.size(); }
  std::size_t classes(std::size_t k) const;
  const Shape& input_shape() const { return trunk_.input_shape(); }

  Network& trunk() { return trunk_; }
  const Network& trunk() const { return trunk_; }
  std::span<Network> heads() { return heads_; }
  std::span<const Network> heads() const { return heads_; }

  // Training forward: caches activations, returns per-attribute logits.
  std::vector<Tensor> forward(const Tensor& batch);
  // One logits gradient per attribute; trunk gradients from all heads are
  // summed in attribute order.
  void backward(std::span<const Tensor> logits_grads);
  // Stateless inference: per-attribute logits.
  std::vector<Tensor> evaluate(const Tensor& batch) const;

  std::vector<ParamRef> parameters();
  std::size_t parameter_count() const;
  void zero_grad();
  std::vector<double> flat_parameters() const;
  void set_flat_parameters(std::span<const double> values);
  std::string architecture() const;

 private:
  Network trunk_;
  std::vector<Network> heads_;
};

// One trunk pass and K head passes; returns per-attribute probabilities.
std::vector<Tensor> multi_forward(MultiHeadNetwork& net, const Tensor& batch);

struct MultiAttributeLoss {
  double total = 0.0;
  std::vector<double> per_attribute;
};

// L_k from each attribute's own noise-attention model; total = sum_k w_k L_k
// (weights default to 1).
MultiAttributeLoss multi_attribute_loss(std::span<const Tensor> probs, std::span<const std::vector<Label>> labels,
                                        std::span<const NAModel> na_models, std::span<const double> weights = {});

struct AttributeErrors {
  std::vector<double> per_attribute;  // fractions in [0, 1]
  double all = 0.0;                   // fraction with at least one wrong attribute
};

// Errors from per-attribute predictions and true labels (one vector per
// attribute, same length).
AttributeErrors attribute_errors(std::span<const std::vector<Label>> predicted,
                                 std::span<const std::vector<Label>> truth);

// Base trunk + heads only (no noise units). true_labels[k] covers every
// sample of `features` ([N, input_shape...]).
AttributeErrors evaluate_all_metric(const MultiHeadNetwork& net, const Tensor& features,
                                    std::span<const std::vector<Label>> true_labels, std::size_t chunk = 512);

// Argmax labels per attribute under the base network.
std::vector<std::vector<Label>> predict(const MultiHeadNetwork& net, const Tensor& features, std::size_t chunk = 512);

}  // namespace nal
