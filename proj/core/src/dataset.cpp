#include "regroup/dataset.hpp"

#include <algorithm>

#include "regroup/error.hpp"

namespace regroup {

std::string provenance_name(Provenance p) {
    switch (p) {
    case Provenance::train: return "train";
    case Provenance::test: return "test";
    case Provenance::adversarial: return "adversarial";
    case Provenance::synthetic: return "synthetic";
    }
    return "unknown";
}

LabeledDataset::LabeledDataset(Shape image_shape, std::size_t num_classes, Provenance provenance)
    : image_shape_(std::move(image_shape)), image_size_(shape_volume(image_shape_)), num_classes_(num_classes),
      provenance_(provenance) {
    if (image_shape_.size() != 3 || image_size_ == 0) {
        throw ValidationError("dataset image shape must be CxHxW, got " + shape_to_string(image_shape_));
    }
    if (num_classes_ == 0) {
        throw ValidationError("dataset needs at least one class");
    }
}

Tensor LabeledDataset::image(std::size_t index) const {
    const auto raw = raw_image(index);
    return Tensor(image_shape_, std::vector<double>(raw.begin(), raw.end()));
}

std::span<const float> LabeledDataset::raw_image(std::size_t index) const {
    if (index >= size()) {
        throw ValidationError("sample index " + std::to_string(index) + " out of range (" + std::to_string(size()) +
                              " samples)");
    }
    return std::span<const float>(pixels_).subspan(index * image_size_, image_size_);
}

void LabeledDataset::add(std::span<const double> pixels, std::size_t label) {
    std::vector<float> narrow(pixels.size());
    std::transform(pixels.begin(), pixels.end(), narrow.begin(), [](double v) { return static_cast<float>(v); });
    add(std::span<const float>(narrow), label);
}

void LabeledDataset::add(std::span<const float> pixels, std::size_t label) {
    if (pixels.size() != image_size_) {
        throw ValidationError("image has " + std::to_string(pixels.size()) + " pixels, expected " +
                              std::to_string(image_size_));
    }
    if (label >= num_classes_) {
        throw ValidationError("label " + std::to_string(label) + " out of range for " +
                              std::to_string(num_classes_) + " classes");
    }
    for (float v : pixels) {
        if (!(v >= 0.0f && v <= 1.0f)) {
            throw ValidationError("pixel value outside [0,1]");
        }
    }
    pixels_.insert(pixels_.end(), pixels.begin(), pixels.end());
    labels_.push_back(static_cast<std::uint32_t>(label));
}

LabeledDataset LabeledDataset::slice(std::size_t first, std::size_t count) const {
    LabeledDataset out(image_shape_, num_classes_, provenance_);
    const std::size_t end = std::min(size(), first + count);
    for (std::size_t i = first; i < end; ++i) {
        out.add(raw_image(i), labels_[i]);
    }
    return out;
}

LabeledDataset LabeledDataset::select(std::span<const std::size_t> indices) const {
    LabeledDataset out(image_shape_, num_classes_, provenance_);
    for (std::size_t i : indices) {
        out.add(raw_image(i), label(i));
    }
    return out;
}

} // namespace regroup
