#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "regroup/tensor.hpp"

namespace regroup {

enum class Provenance : std::uint8_t { train, test, adversarial, synthetic };

std::string provenance_name(Provenance p);

/// Images (C×H×W, pixels in [0,1]) with class labels, in stable order.
/// Pixels are stored as f32 and widened to f64 on access.
class LabeledDataset {
public:
    LabeledDataset() = default;
    LabeledDataset(Shape image_shape, std::size_t num_classes, Provenance provenance);

    const Shape& image_shape() const noexcept { return image_shape_; }
    std::size_t image_size() const noexcept { return image_size_; }
    std::size_t num_classes() const noexcept { return num_classes_; }
    Provenance provenance() const noexcept { return provenance_; }
    std::size_t size() const noexcept { return labels_.size(); }
    bool empty() const noexcept { return labels_.empty(); }

    Tensor image(std::size_t index) const;
    std::span<const float> raw_image(std::size_t index) const;
    std::size_t label(std::size_t index) const { return labels_.at(index); }
    const std::vector<std::uint32_t>& labels() const noexcept { return labels_; }

    /// Appends one sample; pixels are rounded to f32. Rejects labels >= M and
    /// pixels outside [0,1].
    void add(std::span<const double> pixels, std::size_t label);
    void add(std::span<const float> pixels, std::size_t label);

    /// Copy containing samples [first, first + count) clamped to the size.
    LabeledDataset slice(std::size_t first, std::size_t count) const;
    LabeledDataset select(std::span<const std::size_t> indices) const;

private:
    Shape image_shape_;
    std::size_t image_size_ = 0;
    std::size_t num_classes_ = 0;
    Provenance provenance_ = Provenance::synthetic;
    std::vector<float> pixels_;
    std::vector<std::uint32_t> labels_;
};

} // namespace regroup
