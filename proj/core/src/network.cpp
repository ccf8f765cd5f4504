#include "regroup/network.hpp"

#include <type_traits>

#include "regroup/error.hpp"

namespace regroup {

namespace {

std::string at_layer(std::size_t index) {
    return "layer " + std::to_string(index) + ": ";
}

} // namespace

LayerKind kind_of(const LayerSpec& layer) noexcept {
    return static_cast<LayerKind>(layer.index());
}

std::string kind_name(LayerKind kind) {
    switch (kind) {
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::linear: return "linear";
    case LayerKind::relu: return "relu";
    case LayerKind::maxpool2d: return "maxpool2d";
    case LayerKind::flatten: return "flatten";
    }
    return "unknown";
}

bool is_votable(const LayerSpec& layer) noexcept {
    return std::holds_alternative<Conv2d>(layer) || std::holds_alternative<Linear>(layer);
}

Shape infer_output_shape(const LayerSpec& layer, const Shape& input, std::size_t layer_index) {
    return std::visit(
        [&](const auto& spec) -> Shape {
            using T = std::decay_t<decltype(spec)>;
            if constexpr (std::is_same_v<T, Conv2d>) {
                if (input.size() != 3) {
                    throw ValidationError(at_layer(layer_index) + "conv2d expects a CxHxW input, got " +
                                          shape_to_string(input));
                }
                if (spec.in_channels == 0 || spec.out_channels == 0 || spec.kernel_h == 0 || spec.kernel_w == 0) {
                    throw ValidationError(at_layer(layer_index) + "conv2d has a zero extent");
                }
                if (spec.stride < 1) {
                    throw ValidationError(at_layer(layer_index) + "conv2d stride must be >= 1");
                }
                if (input[0] != spec.in_channels) {
                    throw ValidationError(at_layer(layer_index) + "conv2d expects " +
                                          std::to_string(spec.in_channels) + " input channels, got " +
                                          std::to_string(input[0]));
                }
                if (spec.weights.size() != spec.out_channels * spec.in_channels * spec.kernel_h * spec.kernel_w ||
                    spec.bias.size() != spec.out_channels) {
                    throw ValidationError(at_layer(layer_index) + "conv2d weight/bias extents are inconsistent");
                }
                const std::size_t padded_h = input[1] + 2 * spec.padding;
                const std::size_t padded_w = input[2] + 2 * spec.padding;
                if (padded_h < spec.kernel_h || padded_w < spec.kernel_w) {
                    throw ValidationError(at_layer(layer_index) + "conv2d kernel larger than padded input " +
                                          shape_to_string(input));
                }
                return {spec.out_channels, (padded_h - spec.kernel_h) / spec.stride + 1,
                        (padded_w - spec.kernel_w) / spec.stride + 1};
            } else if constexpr (std::is_same_v<T, Linear>) {
                // Inputs of any rank are consumed in row-major order.
                if (shape_volume(input) != spec.in_features) {
                    throw ValidationError(at_layer(layer_index) + "linear expects a vector of " +
                                          std::to_string(spec.in_features) + ", got " + shape_to_string(input));
                }
                if (spec.out_features == 0 || spec.weights.size() != spec.in_features * spec.out_features ||
                    spec.bias.size() != spec.out_features) {
                    throw ValidationError(at_layer(layer_index) + "linear weight/bias extents are inconsistent");
                }
                return {spec.out_features};
            } else if constexpr (std::is_same_v<T, Relu>) {
                return input;
            } else if constexpr (std::is_same_v<T, MaxPool2d>) {
                if (input.size() != 3) {
                    throw ValidationError(at_layer(layer_index) + "maxpool2d expects a CxHxW input, got " +
                                          shape_to_string(input));
                }
                if (spec.window == 0 || spec.stride < 1) {
                    throw ValidationError(at_layer(layer_index) + "maxpool2d window and stride must be >= 1");
                }
                if (input[1] < spec.window || input[2] < spec.window) {
                    throw ValidationError(at_layer(layer_index) + "maxpool2d window larger than input " +
                                          shape_to_string(input));
                }
                return {input[0], (input[1] - spec.window) / spec.stride + 1,
                        (input[2] - spec.window) / spec.stride + 1};
            } else {
                return {shape_volume(input)};
            }
        },
        layer);
}

NetworkModel::NetworkModel(Shape input_shape, std::size_t num_classes, std::vector<LayerSpec> layers)
    : input_shape_(std::move(input_shape)), num_classes_(num_classes), layers_(std::move(layers)) {
    if (layers_.empty()) {
        throw ValidationError("network has no layers");
    }
    if (input_shape_.size() != 3 || shape_volume(input_shape_) == 0) {
        throw ValidationError("network input shape must be CxHxW with positive extents, got " +
                              shape_to_string(input_shape_));
    }
    if (num_classes_ == 0) {
        throw ValidationError("network must have at least one class");
    }
    Shape current = input_shape_;
    output_shapes_.reserve(layers_.size());
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        current = infer_output_shape(layers_[i], current, i);
        output_shapes_.push_back(current);
        if (is_votable(layers_[i])) {
            votable_.push_back(i);
        }
    }
    const auto* last = std::get_if<Linear>(&layers_.back());
    if (last == nullptr) {
        throw ValidationError("last layer must be linear");
    }
    if (last->out_features != num_classes_) {
        throw ValidationError("last layer has " + std::to_string(last->out_features) + " outputs, expected " +
                              std::to_string(num_classes_) + " classes");
    }
}

std::size_t NetworkModel::parameter_count() const noexcept {
    std::size_t n = 0;
    for (const auto& layer : layers_) {
        if (const auto* conv = std::get_if<Conv2d>(&layer)) {
            n += conv->weights.size() + conv->bias.size();
        } else if (const auto* fc = std::get_if<Linear>(&layer)) {
            n += fc->weights.size() + fc->bias.size();
        }
    }
    return n;
}

} // namespace regroup
