#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "lapdae/errors.hpp"

namespace lapdae {

/// Dense N-dimensional float tensor, row-major. Image batches use the
/// layout (batch, channel, height, width).
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int64_t> shape) : shape_(std::move(shape)) {
        data_.assign(checked_numel(shape_), 0.0f);
    }

    Tensor(std::vector<int64_t> shape, std::vector<float> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (checked_numel(shape_) != static_cast<int64_t>(data_.size()))
            throw DimensionError("tensor: shape product " + std::to_string(checked_numel(shape_)) +
                                 " does not match data length " + std::to_string(data_.size()));
    }

    static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<int64_t> shape, float value) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), value);
        return t;
    }

    const std::vector<int64_t>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }

    int64_t dim(int axis) const {
        if (axis < 0) axis += rank();
        if (axis < 0 || axis >= rank())
            throw DimensionError("tensor: axis " + std::to_string(axis) + " out of range for rank " +
                                 std::to_string(rank()));
        return shape_[static_cast<size_t>(axis)];
    }

    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    std::vector<float>& vec() { return data_; }
    const std::vector<float>& vec() const { return data_; }

    float& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    float operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    // 4-D accessor (b, c, h, w); used by naive paths and tests.
    float& at(int64_t b, int64_t c, int64_t h, int64_t w) {
        return data_[static_cast<size_t>(((b * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
    }
    float at(int64_t b, int64_t c, int64_t h, int64_t w) const {
        return data_[static_cast<size_t>(((b * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    bool all_finite() const;

    /// Max absolute difference; shapes must match.
    static double max_abs_diff(const Tensor& a, const Tensor& b);

    std::string shape_str() const;

    /// Throws DimensionError naming `what` if shapes differ.
    static void check_same_shape(const Tensor& a, const Tensor& b, const char* what);

private:
    static int64_t checked_numel(const std::vector<int64_t>& shape) {
        int64_t n = 1;
        for (size_t i = 0; i < shape.size(); ++i) {
            if (shape[i] <= 0)
                throw DimensionError("tensor: nonpositive extent " + std::to_string(shape[i]) +
                                     " at axis " + std::to_string(i));
            n *= shape[i];
        }
        return n;
    }

    std::vector<int64_t> shape_;
    std::vector<float> data_;
};

} // namespace lapdae
