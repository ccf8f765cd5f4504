#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "regroup/network.hpp"
#include "regroup/tensor.hpp"

namespace regroup {

// Single-layer kernels. `layer_index` only feeds diagnostics.
Tensor conv2d_forward(const Tensor& input, const Conv2d& layer, std::size_t layer_index = 0);
Tensor linear_forward(const Tensor& input, const Linear& layer, std::size_t layer_index = 0);
Tensor relu_forward(const Tensor& input);
Tensor maxpool2d_forward(const Tensor& input, const MaxPool2d& layer, std::size_t layer_index = 0);

/// Normalized exponentials with max subtraction.
std::vector<double> softmax(std::span<const double> logits);

/// -log softmax(logits)[label], computed with log-sum-exp.
double cross_entropy(std::span<const double> logits, std::size_t label);

/// Pre-activation responses of every votable layer plus the network output
/// for one input.
struct FeatureTrace {
    std::vector<std::size_t> layer_indices;  // positions in NetworkModel::layers()
    std::vector<Tensor> preactivations;      // one per votable layer
    std::vector<double> logits;
    std::vector<double> probabilities;

    std::size_t predicted_class() const;
};

/// values[0] is the input, values[i + 1] the output of layer i.
struct Activations {
    std::vector<Tensor> values;

    const Tensor& output() const { return values.back(); }
};

Activations forward_all(const NetworkModel& model, const Tensor& input);
std::vector<double> forward_logits(const NetworkModel& model, const Tensor& input);
FeatureTrace forward_with_trace(const NetworkModel& model, const Tensor& input);

/// Gradient buffers index-aligned with the model's layers. Non-parametric
/// layers have empty vectors.
struct ParameterGradients {
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> bias;

    static ParameterGradients zeros_like(const NetworkModel& model);
    void set_zero();
};

/// Reverse accumulation from dL/d(logits) down to dL/d(input). When `grads`
/// is non-null, parameter gradients are accumulated (added) into it.
Tensor backward(const NetworkModel& model, const Activations& acts, std::span<const double> output_grad,
                ParameterGradients* grads = nullptr);

/// Gradient of the softmax cross-entropy loss of class `label` with respect to
/// the input. Untargeted attacks ascend it with the true label; targeted
/// attacks descend it with the target label.
Tensor input_gradient(const NetworkModel& model, const Tensor& input, std::size_t label);

/// Cross-entropy loss and its input gradient from a single forward pass.
struct LossAndGradient {
    double loss = 0.0;
    std::vector<double> probabilities;
    Tensor gradient;
};
LossAndGradient loss_and_input_gradient(const NetworkModel& model, const Tensor& input, std::size_t label);

} // namespace regroup
