#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sdil/common.hpp"

namespace sdil::diff {

// Dense row-major float tensor, rank 1 or 2. Values are stored in 32-bit
// precision; reductions accumulate in 64-bit (see tape ops).
class Tensor {
public:
    Tensor() = default;

    Tensor(std::vector<int> shape, float fill = 0.0f);
    static Tensor scalar(float v);
    static Tensor row(std::vector<float> v);                 // shape {n}
    static Tensor matrix(int rows, int cols, float fill = 0.0f);

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    // Logical 2-D view: rank-1 tensors are a single row.
    int rows() const { return rank() == 2 ? shape_[0] : 1; }
    int cols() const { return shape_.empty() ? 0 : shape_.back(); }
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
    bool is_scalar() const { return size() == 1; }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    float& at(int r, int c) { return data_[static_cast<std::size_t>(r) * cols() + c]; }
    float at(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols() + c]; }
    float& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    float operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    bool all_finite() const;
    void fill(float v);

    std::string shape_str() const;

private:
    std::vector<int> shape_;
    std::vector<float> data_;
};

// A named learnable tensor with its gradient buffer and freeze flag.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    bool trainable = true;

    Parameter() = default;
    Parameter(std::string n, Tensor v)
        : name(std::move(n)), value(std::move(v)), grad(value.shape(), 0.0f) {}

    void zero_grad() { grad.fill(0.0f); }
};

} // namespace sdil::diff
