#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace contrastad::diff {

// Dense row-major double tensor. Rank 1 and 2 cover the whole model; conv
// filter weights are rank 3 (out_channels x in_channels x kernel).
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> values;
    bool requires_grad = false;
    std::vector<double> grad;  // same length as values once backward has run

    Tensor() = default;
    Tensor(std::vector<std::size_t> s, std::vector<double> v, bool rg = false);

    static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false);
    static Tensor full(std::vector<std::size_t> shape, double value, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    static Tensor row(std::vector<double> v, bool requires_grad = false);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v,
                         bool requires_grad = false);

    std::size_t numel() const { return values.size(); }
    std::size_t rank() const { return shape.size(); }
    // 2-d accessors; rank-1 tensors are treated as a single row
    std::size_t rows() const { return rank() <= 1 ? 1 : shape[0]; }
    std::size_t cols() const { return rank() == 0 ? 1 : shape[rank() - 1]; }
    double& at(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    std::string shape_str() const;
};

std::string shape_to_string(const std::vector<std::size_t>& shape);

}  // namespace contrastad::diff
