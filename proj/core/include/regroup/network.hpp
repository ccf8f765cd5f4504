#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "regroup/tensor.hpp"

namespace regroup {

/// Cross-correlation with zero padding. Weights are out×in×kh×kw row-major.
struct Conv2d {
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t kernel_h = 0;
    std::size_t kernel_w = 0;
    std::size_t stride = 1;
    std::size_t padding = 0;
    std::vector<double> weights;
    std::vector<double> bias;

    friend bool operator==(const Conv2d&, const Conv2d&) = default;
};

/// y = W x + b with W stored out×in row-major.
struct Linear {
    std::size_t in_features = 0;
    std::size_t out_features = 0;
    std::vector<double> weights;
    std::vector<double> bias;

    friend bool operator==(const Linear&, const Linear&) = default;
};

struct Relu {
    friend bool operator==(const Relu&, const Relu&) = default;
};

struct MaxPool2d {
    std::size_t window = 2;
    std::size_t stride = 2;

    friend bool operator==(const MaxPool2d&, const MaxPool2d&) = default;
};

struct Flatten {
    friend bool operator==(const Flatten&, const Flatten&) = default;
};

using LayerSpec = std::variant<Conv2d, Linear, Relu, MaxPool2d, Flatten>;

/// Stable numeric codes used by the model file format.
enum class LayerKind : std::uint8_t { conv2d = 0, linear = 1, relu = 2, maxpool2d = 3, flatten = 4 };

LayerKind kind_of(const LayerSpec& layer) noexcept;
std::string kind_name(LayerKind kind);

/// True for layers that carry parameters and therefore vote (conv2d, linear).
bool is_votable(const LayerSpec& layer) noexcept;

/// Output shape of `layer` applied to `input`. Throws ValidationError naming
/// `layer_index` when the shapes do not compose.
Shape infer_output_shape(const LayerSpec& layer, const Shape& input, std::size_t layer_index);

/// Validated feed-forward network. Construction checks that every layer's
/// shape composes with its predecessor and that the last layer is a linear
/// map onto `num_classes` outputs.
class NetworkModel {
public:
    NetworkModel(Shape input_shape, std::size_t num_classes, std::vector<LayerSpec> layers);

    const Shape& input_shape() const noexcept { return input_shape_; }
    std::size_t num_classes() const noexcept { return num_classes_; }
    const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
    std::vector<LayerSpec>& mutable_layers() noexcept { return layers_; }

    /// Positions of conv2d/linear layers in ascending order.
    const std::vector<std::size_t>& votable_layers() const noexcept { return votable_; }
    std::size_t num_votable() const noexcept { return votable_.size(); }

    /// Output shape of each layer (index-aligned with layers()).
    const std::vector<Shape>& layer_output_shapes() const noexcept { return output_shapes_; }

    std::size_t parameter_count() const noexcept;

    friend bool operator==(const NetworkModel& a, const NetworkModel& b) {
        return a.input_shape_ == b.input_shape_ && a.num_classes_ == b.num_classes_ && a.layers_ == b.layers_;
    }

private:
    Shape input_shape_;
    std::size_t num_classes_;
    std::vector<LayerSpec> layers_;
    std::vector<std::size_t> votable_;
    std::vector<Shape> output_shapes_;
};

} // namespace regroup
