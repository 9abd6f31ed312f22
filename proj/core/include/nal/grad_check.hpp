#pragma once

#include <functional>
#include <span>
#include <vector>

#include "nal/layers.hpp"
#include "nal/loss.hpp"
#include "nal/multi_attribute.hpp"
#include "nal/noise_attention.hpp"

namespace nal {

class Network;

// |a - n| / max(|a|, |n|, 1e-12)
double relative_error(double analytic, double numeric);
double max_relative_error(std::span<const double> analytic, std::span<const double> numeric);

// Central differences of `loss` with respect to every scalar in `params`, in
// parameter order. The loss is evaluated in extended precision so that the
// rounding floor (~eps * |f| / h) sits far below the gradients being checked;
// the divisor is the exactly representable step (x+h) - (x-h). Parameter
// values are restored bit-exactly.
using ExtendedLoss = std::function<long double()>;
std::vector<double> central_differences(std::span<const ParamRef> params, const ExtendedLoss& loss, double h);

// Mean NLL of `labels` under softmax(network(batch)), in extended precision.
long double extended_nll(const Network& network, const Tensor& batch, std::span<const Label> labels);

// Checks the analytic gradient of nll_loss(softmax(forward(batch))) against
// central differences over every network parameter.
double grad_check(Network& network, const Tensor& batch, std::span<const Label> labels, double h = 1e-6);

// Attention-network objective sum_k [attention_loss_k + decay_penalty_k] in
// extended precision, with every sample's unit held at `selections[k]`.
long double extended_attention_objective(const MultiHeadNetwork& model, std::span<const NAModel> na_models,
                                         const Tensor& batch, std::span<const TargetView> targets,
                                         std::span<const std::vector<std::size_t>> selections);

// Gradient check of that objective over the network parameters and every
// learnable unit entry; hard targets exercise the max-confidence loss, soft
// targets the supervision cross-entropy. Selections are taken from the
// current parameters and frozen for the differences.
double attention_grad_check(MultiHeadNetwork& model, std::vector<NAModel>& na_models, const Tensor& batch,
                            std::span<const TargetView> targets, double h = 1e-6);

}  // namespace nal
