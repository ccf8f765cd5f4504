#include "regroup/engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <type_traits>

#include "regroup/error.hpp"

namespace regroup {

namespace {

std::string at_layer(std::size_t index) {
    return "layer " + std::to_string(index) + ": ";
}

// Range of output columns [lo, hi) whose input column ox*stride + k - pad
// lands inside [0, extent).
struct ColumnRange {
    std::size_t lo;
    std::size_t hi;
};

ColumnRange valid_outputs(std::size_t out_extent, std::size_t in_extent, std::size_t k, std::size_t stride,
                          std::size_t pad) {
    // first ox with ox*stride + k >= pad
    std::size_t lo = 0;
    if (pad > k) {
        lo = (pad - k + stride - 1) / stride;
    }
    // last ox with ox*stride + k - pad <= in_extent - 1
    if (in_extent + pad < k + 1) {
        return {0, 0};
    }
    std::size_t hi = (in_extent - 1 + pad - k) / stride + 1;
    hi = std::min(hi, out_extent);
    if (lo >= hi) {
        return {0, 0};
    }
    return {lo, hi};
}

void check_input_shape(const Tensor& input, const Shape& expected, std::size_t layer_index, const char* kind) {
    if (input.shape() != expected) {
        throw ValidationError(at_layer(layer_index) + kind + " expects input " + shape_to_string(expected) +
                              ", got " + shape_to_string(input.shape()));
    }
}

Shape conv_input_shape(const Tensor& input, const Conv2d& layer, std::size_t layer_index) {
    if (input.rank() != 3 || input.dim(0) != layer.in_channels) {
        throw ValidationError(at_layer(layer_index) + "conv2d expects " + std::to_string(layer.in_channels) +
                              "xHxW input, got " + shape_to_string(input.shape()));
    }
    return input.shape();
}

void conv2d_backward(const Tensor& input, const Conv2d& layer, const Tensor& grad_out, Tensor* grad_in,
                     std::vector<double>* grad_w, std::vector<double>* grad_b) {
    const std::size_t in_h = input.dim(1);
    const std::size_t in_w = input.dim(2);
    const std::size_t out_h = grad_out.dim(1);
    const std::size_t out_w = grad_out.dim(2);
    const std::size_t s = layer.stride;
    const std::size_t p = layer.padding;
    const double* x = input.data();
    const double* go = grad_out.data();
    double* gi = grad_in != nullptr ? grad_in->data() : nullptr;

    for (std::size_t oc = 0; oc < layer.out_channels; ++oc) {
        const double* go_plane = go + oc * out_h * out_w;
        if (grad_b != nullptr) {
            double sum = 0.0;
            for (std::size_t i = 0; i < out_h * out_w; ++i) {
                sum += go_plane[i];
            }
            (*grad_b)[oc] += sum;
        }
        for (std::size_t ic = 0; ic < layer.in_channels; ++ic) {
            const double* x_plane = x + ic * in_h * in_w;
            double* gi_plane = gi != nullptr ? gi + ic * in_h * in_w : nullptr;
            for (std::size_t ky = 0; ky < layer.kernel_h; ++ky) {
                const auto rows = valid_outputs(out_h, in_h, ky, s, p);
                for (std::size_t kx = 0; kx < layer.kernel_w; ++kx) {
                    const auto cols = valid_outputs(out_w, in_w, kx, s, p);
                    const std::size_t widx = ((oc * layer.in_channels + ic) * layer.kernel_h + ky) * layer.kernel_w + kx;
                    const double w = layer.weights[widx];
                    double wsum = 0.0;
                    for (std::size_t oy = rows.lo; oy < rows.hi; ++oy) {
                        const std::size_t iy = oy * s + ky - p;
                        const double* go_row = go_plane + oy * out_w;
                        const double* x_row = x_plane + iy * in_w;
                        if (gi_plane != nullptr) {
                            double* gi_row = gi_plane + iy * in_w;
                            for (std::size_t ox = cols.lo; ox < cols.hi; ++ox) {
                                gi_row[ox * s + kx - p] += w * go_row[ox];
                            }
                        }
                        if (grad_w != nullptr) {
                            for (std::size_t ox = cols.lo; ox < cols.hi; ++ox) {
                                wsum += go_row[ox] * x_row[ox * s + kx - p];
                            }
                        }
                    }
                    if (grad_w != nullptr) {
                        (*grad_w)[widx] += wsum;
                    }
                }
            }
        }
    }
}

void linear_backward(const Tensor& input, const Linear& layer, const Tensor& grad_out, Tensor* grad_in,
                     std::vector<double>* grad_w, std::vector<double>* grad_b) {
    const double* x = input.data();
    const double* go = grad_out.data();
    for (std::size_t o = 0; o < layer.out_features; ++o) {
        const double g = go[o];
        const double* w_row = layer.weights.data() + o * layer.in_features;
        if (grad_in != nullptr) {
            double* gi = grad_in->data();
            for (std::size_t i = 0; i < layer.in_features; ++i) {
                gi[i] += w_row[i] * g;
            }
        }
        if (grad_w != nullptr) {
            double* gw_row = grad_w->data() + o * layer.in_features;
            for (std::size_t i = 0; i < layer.in_features; ++i) {
                gw_row[i] += g * x[i];
            }
        }
        if (grad_b != nullptr) {
            (*grad_b)[o] += g;
        }
    }
}

void maxpool2d_backward(const Tensor& input, const MaxPool2d& layer, const Tensor& grad_out, Tensor& grad_in) {
    const std::size_t channels = input.dim(0);
    const std::size_t out_h = grad_out.dim(1);
    const std::size_t out_w = grad_out.dim(2);
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t oy = 0; oy < out_h; ++oy) {
            for (std::size_t ox = 0; ox < out_w; ++ox) {
                std::size_t best_y = oy * layer.stride;
                std::size_t best_x = ox * layer.stride;
                double best = input.at(c, best_y, best_x);
                for (std::size_t wy = 0; wy < layer.window; ++wy) {
                    for (std::size_t wx = 0; wx < layer.window; ++wx) {
                        const std::size_t iy = oy * layer.stride + wy;
                        const std::size_t ix = ox * layer.stride + wx;
                        const double v = input.at(c, iy, ix);
                        if (v > best) {
                            best = v;
                            best_y = iy;
                            best_x = ix;
                        }
                    }
                }
                grad_in.at(c, best_y, best_x) += grad_out.at(c, oy, ox);
            }
        }
    }
}

} // namespace

Tensor conv2d_forward(const Tensor& input, const Conv2d& layer, std::size_t layer_index) {
    const Shape out_shape = infer_output_shape(layer, conv_input_shape(input, layer, layer_index), layer_index);
    const std::size_t in_h = input.dim(1);
    const std::size_t in_w = input.dim(2);
    const std::size_t out_h = out_shape[1];
    const std::size_t out_w = out_shape[2];
    const std::size_t s = layer.stride;
    const std::size_t p = layer.padding;

    Tensor out(out_shape);
    double* y = out.data();
    const double* x = input.data();
    for (std::size_t oc = 0; oc < layer.out_channels; ++oc) {
        double* y_plane = y + oc * out_h * out_w;
        std::fill(y_plane, y_plane + out_h * out_w, layer.bias[oc]);
        for (std::size_t ic = 0; ic < layer.in_channels; ++ic) {
            const double* x_plane = x + ic * in_h * in_w;
            for (std::size_t ky = 0; ky < layer.kernel_h; ++ky) {
                const auto rows = valid_outputs(out_h, in_h, ky, s, p);
                for (std::size_t kx = 0; kx < layer.kernel_w; ++kx) {
                    const auto cols = valid_outputs(out_w, in_w, kx, s, p);
                    const double w =
                        layer.weights[((oc * layer.in_channels + ic) * layer.kernel_h + ky) * layer.kernel_w + kx];
                    for (std::size_t oy = rows.lo; oy < rows.hi; ++oy) {
                        double* y_row = y_plane + oy * out_w;
                        // every ox in [cols.lo, cols.hi) maps inside the input row
                        const double* x_row = x_plane + (oy * s + ky - p) * in_w;
                        for (std::size_t ox = cols.lo; ox < cols.hi; ++ox) {
                            y_row[ox] += w * x_row[ox * s + kx - p];
                        }
                    }
                }
            }
        }
    }
    return out;
}

Tensor linear_forward(const Tensor& input, const Linear& layer, std::size_t layer_index) {
    if (input.size() != layer.in_features) {
        throw ValidationError(at_layer(layer_index) + "linear expects " + std::to_string(layer.in_features) +
                              " inputs, got " + std::to_string(input.size()));
    }
    Tensor out(Shape{layer.out_features});
    const double* x = input.data();
    for (std::size_t o = 0; o < layer.out_features; ++o) {
        const double* w_row = layer.weights.data() + o * layer.in_features;
        double acc = 0.0;
        for (std::size_t i = 0; i < layer.in_features; ++i) {
            acc += w_row[i] * x[i];
        }
        out[o] = acc + layer.bias[o];
    }
    return out;
}

Tensor relu_forward(const Tensor& input) {
    Tensor out = input;
    for (double& v : out.values()) {
        v = v > 0.0 ? v : 0.0;
    }
    return out;
}

Tensor maxpool2d_forward(const Tensor& input, const MaxPool2d& layer, std::size_t layer_index) {
    const Shape out_shape = infer_output_shape(layer, input.shape(), layer_index);
    Tensor out(out_shape);
    for (std::size_t c = 0; c < out_shape[0]; ++c) {
        for (std::size_t oy = 0; oy < out_shape[1]; ++oy) {
            for (std::size_t ox = 0; ox < out_shape[2]; ++ox) {
                double best = -std::numeric_limits<double>::infinity();
                for (std::size_t wy = 0; wy < layer.window; ++wy) {
                    for (std::size_t wx = 0; wx < layer.window; ++wx) {
                        best = std::max(best, input.at(c, oy * layer.stride + wy, ox * layer.stride + wx));
                    }
                }
                out.at(c, oy, ox) = best;
            }
        }
    }
    return out;
}

std::vector<double> softmax(std::span<const double> logits) {
    std::vector<double> out(logits.size());
    if (logits.empty()) {
        return out;
    }
    const double top = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - top);
        total += out[i];
    }
    for (double& v : out) {
        v /= total;
    }
    return out;
}

double cross_entropy(std::span<const double> logits, std::size_t label) {
    if (label >= logits.size()) {
        throw ValidationError("label " + std::to_string(label) + " out of range for " +
                              std::to_string(logits.size()) + " classes");
    }
    const double top = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    for (double z : logits) {
        total += std::exp(z - top);
    }
    return std::log(total) + top - logits[label];
}

std::size_t FeatureTrace::predicted_class() const {
    return static_cast<std::size_t>(std::max_element(probabilities.begin(), probabilities.end()) -
                                    probabilities.begin());
}

Activations forward_all(const NetworkModel& model, const Tensor& input) {
    check_input_shape(input, model.input_shape(), 0, "network");
    Activations acts;
    acts.values.reserve(model.layers().size() + 1);
    acts.values.push_back(input);
    const auto& layers = model.layers();
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const Tensor& x = acts.values.back();
        Tensor y = std::visit(
            [&](const auto& spec) -> Tensor {
                using T = std::decay_t<decltype(spec)>;
                if constexpr (std::is_same_v<T, Conv2d>) {
                    return conv2d_forward(x, spec, i);
                } else if constexpr (std::is_same_v<T, Linear>) {
                    return linear_forward(x, spec, i);
                } else if constexpr (std::is_same_v<T, Relu>) {
                    return relu_forward(x);
                } else if constexpr (std::is_same_v<T, MaxPool2d>) {
                    return maxpool2d_forward(x, spec, i);
                } else {
                    return x.reshaped(Shape{x.size()});
                }
            },
            layers[i]);
        if (!y.all_finite()) {
            throw NumericalError(at_layer(i) + kind_name(kind_of(layers[i])) + " produced non-finite values");
        }
        acts.values.push_back(std::move(y));
    }
    return acts;
}

std::vector<double> forward_logits(const NetworkModel& model, const Tensor& input) {
    return forward_all(model, input).output().storage();
}

FeatureTrace forward_with_trace(const NetworkModel& model, const Tensor& input) {
    Activations acts = forward_all(model, input);
    FeatureTrace trace;
    trace.layer_indices = model.votable_layers();
    trace.preactivations.reserve(trace.layer_indices.size());
    for (std::size_t index : trace.layer_indices) {
        trace.preactivations.push_back(std::move(acts.values[index + 1]));
    }
    // The last layer is linear, so its output was moved into the trace.
    trace.logits = trace.preactivations.back().storage();
    trace.probabilities = softmax(trace.logits);
    return trace;
}

ParameterGradients ParameterGradients::zeros_like(const NetworkModel& model) {
    ParameterGradients g;
    for (const auto& layer : model.layers()) {
        if (const auto* conv = std::get_if<Conv2d>(&layer)) {
            g.weights.emplace_back(conv->weights.size(), 0.0);
            g.bias.emplace_back(conv->bias.size(), 0.0);
        } else if (const auto* fc = std::get_if<Linear>(&layer)) {
            g.weights.emplace_back(fc->weights.size(), 0.0);
            g.bias.emplace_back(fc->bias.size(), 0.0);
        } else {
            g.weights.emplace_back();
            g.bias.emplace_back();
        }
    }
    return g;
}

void ParameterGradients::set_zero() {
    for (auto& w : weights) {
        std::fill(w.begin(), w.end(), 0.0);
    }
    for (auto& b : bias) {
        std::fill(b.begin(), b.end(), 0.0);
    }
}

Tensor backward(const NetworkModel& model, const Activations& acts, std::span<const double> output_grad,
                ParameterGradients* grads) {
    const auto& layers = model.layers();
    if (acts.values.size() != layers.size() + 1) {
        throw ValidationError("activation record does not match the network depth");
    }
    if (output_grad.size() != acts.output().size()) {
        throw ValidationError("output gradient has " + std::to_string(output_grad.size()) +
                              " entries, expected " + std::to_string(acts.output().size()));
    }
    Tensor grad(acts.output().shape(), std::vector<double>(output_grad.begin(), output_grad.end()));
    for (std::size_t step = layers.size(); step-- > 0;) {
        const Tensor& x = acts.values[step];
        // The input gradient of the first layer is only needed by attacks.
        Tensor grad_in(x.shape(), 0.0);
        std::visit(
            [&](const auto& spec) {
                using T = std::decay_t<decltype(spec)>;
                if constexpr (std::is_same_v<T, Conv2d>) {
                    conv2d_backward(x, spec, grad, &grad_in, grads ? &grads->weights[step] : nullptr,
                                    grads ? &grads->bias[step] : nullptr);
                } else if constexpr (std::is_same_v<T, Linear>) {
                    linear_backward(x, spec, grad, &grad_in, grads ? &grads->weights[step] : nullptr,
                                    grads ? &grads->bias[step] : nullptr);
                } else if constexpr (std::is_same_v<T, Relu>) {
                    for (std::size_t i = 0; i < x.size(); ++i) {
                        grad_in[i] = x[i] > 0.0 ? grad[i] : 0.0;
                    }
                } else if constexpr (std::is_same_v<T, MaxPool2d>) {
                    maxpool2d_backward(x, spec, grad, grad_in);
                } else {
                    std::copy(grad.data(), grad.data() + grad.size(), grad_in.data());
                }
            },
            layers[step]);
        grad = std::move(grad_in);
    }
    return grad;
}

LossAndGradient loss_and_input_gradient(const NetworkModel& model, const Tensor& input, std::size_t label) {
    if (label >= model.num_classes()) {
        throw ValidationError("label " + std::to_string(label) + " out of range for " +
                              std::to_string(model.num_classes()) + " classes");
    }
    Activations acts = forward_all(model, input);
    const auto& logits = acts.output().storage();
    LossAndGradient out;
    out.loss = cross_entropy(logits, label);
    out.probabilities = softmax(logits);
    std::vector<double> dlogits = out.probabilities;
    dlogits[label] -= 1.0;
    out.gradient = backward(model, acts, dlogits);
    return out;
}

Tensor input_gradient(const NetworkModel& model, const Tensor& input, std::size_t label) {
    return loss_and_input_gradient(model, input, label).gradient;
}

} // namespace regroup
