#pragma once

#include <array>
#include <cstddef>
#include <vector>

namespace augdiff {

// Dense row-major matrix of 64-bit floats. Vectors are 1 x n rows, scalars
// 1 x 1. Training arithmetic is always double; file payloads are float32.
class Tensor {
public:
    Tensor() : rows_(0), cols_(0) {}
    Tensor(size_t rows, size_t cols)
        : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}
    Tensor(size_t rows, size_t cols, std::vector<double> data);

    static Tensor zeros(size_t rows, size_t cols) { return Tensor(rows, cols); }
    static Tensor full(size_t rows, size_t cols, double v);
    static Tensor identity(size_t n);
    static Tensor scalar(double v);
    static Tensor row(std::vector<double> values);

    size_t rows() const { return rows_; }
    size_t cols() const { return cols_; }
    size_t numel() const { return data_.size(); }
    bool empty() const { return data_.empty(); }
    bool is_scalar() const { return numel() == 1; }
    std::array<size_t, 2> shape() const { return {rows_, cols_}; }
    bool same_shape(const Tensor& o) const {
        return rows_ == o.rows_ && cols_ == o.cols_;
    }

    double& at(size_t r, size_t c) { return data_[r * cols_ + c]; }
    double at(size_t r, size_t c) const { return data_[r * cols_ + c]; }
    double& operator[](size_t i) { return data_[i]; }
    double operator[](size_t i) const { return data_[i]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double item() const;  // value of a 1 x 1 tensor; throws otherwise

    bool all_finite() const;

    // max |a - b| over entries; shapes must match
    static double max_abs_diff(const Tensor& a, const Tensor& b);

private:
    size_t rows_, cols_;
    std::vector<double> data_;
};

}  // namespace augdiff
