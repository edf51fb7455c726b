#include "pyag/tensor.hpp"

#include <algorithm>

#include "pyag/common.hpp"

namespace pyag {

Tensor::Tensor(int n, int c, int h, int w, double fill)
    : n_(n), c_(c), h_(h), w_(w) {
    if (n < 0 || c < 0 || h < 0 || w < 0) fail(ErrorKind::InvalidArgument, "negative tensor dimension");
    data_.assign(static_cast<std::size_t>(n) * c * h * w, fill);
}

std::string Tensor::shape_string() const {
    return "[" + std::to_string(n_) + "," + std::to_string(c_) + "," + std::to_string(h_) + "," +
           std::to_string(w_) + "]";
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor& Tensor::operator+=(const Tensor& other) {
    if (!same_shape(other))
        fail(ErrorKind::ShapeMismatch, "tensor add " + shape_string() + " vs " + other.shape_string());
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

}  // namespace pyag
