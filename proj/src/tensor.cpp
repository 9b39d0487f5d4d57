#include "augdiff/tensor.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

namespace augdiff {

Tensor::Tensor(size_t rows, size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw std::invalid_argument("Tensor: data length does not match shape");
    }
}

Tensor Tensor::full(size_t rows, size_t cols, double v) {
    Tensor t(rows, cols);
    for (auto& x : t.data_) x = v;
    return t;
}

Tensor Tensor::identity(size_t n) {
    Tensor t(n, n);
    for (size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
    return t;
}

Tensor Tensor::scalar(double v) {
    Tensor t(1, 1);
    t.data_[0] = v;
    return t;
}

Tensor Tensor::row(std::vector<double> values) {
    size_t n = values.size();
    return Tensor(1, n, std::move(values));
}

double Tensor::item() const {
    if (numel() != 1) {
        throw std::invalid_argument("Tensor::item on non-scalar");
    }
    return data_[0];
}

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

double Tensor::max_abs_diff(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument("max_abs_diff: shape mismatch");
    }
    double m = 0.0;
    for (size_t i = 0; i < a.numel(); ++i) {
        m = std::max(m, std::fabs(a[i] - b[i]));
    }
    return m;
}

}  // namespace augdiff
