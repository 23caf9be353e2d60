#include "contrastad/tensor.hpp"

#include <numeric>
#include <stdexcept>

namespace contrastad::diff {

namespace {
std::size_t product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}
}  // namespace

Tensor::Tensor(std::vector<std::size_t> s, std::vector<double> v, bool rg)
    : shape(std::move(s)), values(std::move(v)), requires_grad(rg) {
    if (product(shape) != values.size())
        throw std::invalid_argument("Tensor: shape " + shape_to_string(shape) + " does not match " +
                                    std::to_string(values.size()) + " values");
}

Tensor Tensor::zeros(std::vector<std::size_t> shape, bool requires_grad) {
    std::size_t n = product(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value, bool requires_grad) {
    std::size_t n = product(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return Tensor({1}, {value}, requires_grad);
}

Tensor Tensor::row(std::vector<double> v, bool requires_grad) {
    std::size_t n = v.size();
    return Tensor({n}, std::move(v), requires_grad);
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> v,
                      bool requires_grad) {
    return Tensor({rows, cols}, std::move(v), requires_grad);
}

std::string Tensor::shape_str() const { return shape_to_string(shape); }

std::string shape_to_string(const std::vector<std::size_t>& shape) {
    if (shape.empty()) return "scalar";
    std::string s;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s;
}

}  // namespace contrastad::diff
