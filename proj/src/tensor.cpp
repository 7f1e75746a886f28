#include "sdil/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace sdil::diff {

Tensor::Tensor(std::vector<int> shape, float fill) : shape_(std::move(shape)) {
    SDIL_REQUIRE(!shape_.empty() && shape_.size() <= 2, "tensor rank must be 1 or 2");
    std::int64_t n = 1;
    for (int d : shape_) {
        SDIL_REQUIRE(d > 0, "tensor dimensions must be positive");
        n *= d;
    }
    data_.assign(static_cast<std::size_t>(n), fill);
}

Tensor Tensor::scalar(float v) {
    Tensor t({1});
    t.data_[0] = v;
    return t;
}

Tensor Tensor::row(std::vector<float> v) {
    SDIL_REQUIRE(!v.empty(), "row tensor must be nonempty");
    Tensor t;
    t.shape_ = {static_cast<int>(v.size())};
    t.data_ = std::move(v);
    return t;
}

Tensor Tensor::matrix(int rows, int cols, float fill) {
    return Tensor({rows, cols}, fill);
}

bool Tensor::all_finite() const {
    for (float v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void Tensor::fill(float v) {
    std::fill(data_.begin(), data_.end(), v);
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i) os << ',';
        os << shape_[i];
    }
    os << ')';
    return os.str();
}

} // namespace sdil::diff
