#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

#include "iplt/common.hpp"

namespace iplt {

// Dense N-dimensional array of scalars in row-major order. The flat data
// length always equals the product of the dimensions.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::int64_t> shape);
    Tensor(std::vector<std::int64_t> shape, std::vector<scalar> data);

    static Tensor zeros(std::vector<std::int64_t> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<std::int64_t> shape, scalar value);

    const std::vector<std::int64_t>& shape() const { return shape_; }
    std::int64_t dim(std::size_t i) const { return shape_[i]; }
    std::size_t rank() const { return shape_.size(); }
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    scalar* data() { return data_.data(); }
    const scalar* data() const { return data_.data(); }
    std::vector<scalar>& vec() { return data_; }
    const std::vector<scalar>& vec() const { return data_; }

    scalar& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    scalar operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    // Multi-index access; bounds are checked.
    scalar& at(std::initializer_list<std::int64_t> idx) { return data_[flat_index(idx)]; }
    scalar at(std::initializer_list<std::int64_t> idx) const { return data_[flat_index(idx)]; }

    void fill(scalar value);
    bool all_finite() const;

    // Reinterpret the same data under a new shape of equal element count.
    Tensor reshaped(std::vector<std::int64_t> new_shape) const;

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool operator==(const Tensor& other) const {
        return shape_ == other.shape_ && data_ == other.data_;
    }

private:
    std::size_t flat_index(std::initializer_list<std::int64_t> idx) const;

    std::vector<std::int64_t> shape_;
    std::vector<scalar> data_;
};

std::int64_t shape_product(const std::vector<std::int64_t>& shape);
std::string shape_string(const std::vector<std::int64_t>& shape);

}  // namespace iplt
