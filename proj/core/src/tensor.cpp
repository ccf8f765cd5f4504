#include "regroup/tensor.hpp"

#include <cmath>
#include <sstream>

#include "regroup/error.hpp"

namespace regroup {

std::size_t shape_volume(const Shape& shape) {
    if (shape.empty()) {
        return 0;
    }
    std::size_t n = 1;
    for (auto extent : shape) {
        n *= extent;
    }
    return n;
}

std::string shape_to_string(const Shape& shape) {
    std::ostringstream os;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i != 0) {
            os << 'x';
        }
        os << shape[i];
    }
    return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
    for (auto extent : shape_) {
        if (extent == 0) {
            throw ValidationError("tensor extents must be positive, got " + shape_to_string(shape_));
        }
    }
    data_.assign(shape_volume(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    for (auto extent : shape_) {
        if (extent == 0) {
            throw ValidationError("tensor extents must be positive, got " + shape_to_string(shape_));
        }
    }
    if (shape_volume(shape_) != data_.size()) {
        throw ValidationError("tensor data length " + std::to_string(data_.size()) +
                              " does not match shape " + shape_to_string(shape_));
    }
}

Tensor Tensor::reshaped(Shape shape) const {
    return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const noexcept {
    for (double v : data_) {
        if (!std::isfinite(v)) {
            return false;
        }
    }
    return true;
}

} // namespace regroup
