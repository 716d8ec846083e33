#include "iplt/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace iplt {

std::int64_t shape_product(const std::vector<std::int64_t>& shape) {
    std::int64_t n = 1;
    for (std::int64_t d : shape) {
        n *= d;
    }
    return n;
}

std::string shape_string(const std::vector<std::int64_t>& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << ", ";
        out << shape[i];
    }
    out << ']';
    return out.str();
}

namespace {
void validate_shape(const std::vector<std::int64_t>& shape) {
    for (std::int64_t d : shape) {
        if (d <= 0) {
            throw ShapeError("tensor dimensions must be positive, got " + shape_string(shape));
        }
    }
}
}  // namespace

Tensor::Tensor(std::vector<std::int64_t> shape) : shape_(std::move(shape)) {
    validate_shape(shape_);
    data_.assign(static_cast<std::size_t>(shape_product(shape_)), 0.0);
}

Tensor::Tensor(std::vector<std::int64_t> shape, std::vector<scalar> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape(shape_);
    if (shape_product(shape_) != static_cast<std::int64_t>(data_.size())) {
        throw ShapeError("data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_string(shape_));
    }
}

Tensor Tensor::full(std::vector<std::int64_t> shape, scalar value) {
    Tensor t(std::move(shape));
    t.fill(value);
    return t;
}

void Tensor::fill(scalar value) {
    std::fill(data_.begin(), data_.end(), value);
}

bool Tensor::all_finite() const {
    for (scalar v : data_) {
        if (!std::isfinite(v)) {
            return false;
        }
    }
    return true;
}

Tensor Tensor::reshaped(std::vector<std::int64_t> new_shape) const {
    if (shape_product(new_shape) != size()) {
        throw ShapeError("cannot reshape " + shape_string(shape_) + " to " +
                         shape_string(new_shape));
    }
    return Tensor(std::move(new_shape), data_);
}

std::size_t Tensor::flat_index(std::initializer_list<std::int64_t> idx) const {
    if (idx.size() != shape_.size()) {
        throw ShapeError("index rank " + std::to_string(idx.size()) + " does not match tensor rank " +
                         std::to_string(shape_.size()));
    }
    std::int64_t flat = 0;
    std::size_t k = 0;
    for (std::int64_t i : idx) {
        if (i < 0 || i >= shape_[k]) {
            throw ShapeError("index " + std::to_string(i) + " out of bounds for dim " +
                             std::to_string(k) + " of " + shape_string(shape_));
        }
        flat = flat * shape_[k] + i;
        ++k;
    }
    return static_cast<std::size_t>(flat);
}

}  // namespace iplt
