#include "tensor.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace selnet {

namespace {
std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}
}  // namespace

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_.size() > 2) throw std::invalid_argument("tensor rank > 2 not supported");
    for (std::size_t d : shape_)
        if (d == 0) throw std::invalid_argument("zero-sized tensor dimension");
    if (shape_numel(shape_) != data_.size())
        throw std::invalid_argument("tensor shape " + shape_str() + " does not match element count " +
                                    std::to_string(data_.size()));
}

Tensor Tensor::scalar(double v) { return Tensor({}, {v}); }

Tensor Tensor::zeros(Shape shape) {
    std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::full(Shape shape, double v) {
    std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, v));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
    return Tensor({rows, cols}, std::move(data));
}

Tensor Tensor::vector(std::vector<double> data) {
    std::size_t n = data.size();
    return Tensor({n}, std::move(data));
}

std::size_t Tensor::rows() const {
    if (rank() == 2) return shape_[0];
    if (rank() == 1) return shape_[0];
    return 1;
}

std::size_t Tensor::cols() const {
    if (rank() == 2) return shape_[1];
    return 1;
}

double Tensor::item() const {
    if (data_.size() != 1) throw std::logic_error("item() on tensor with " + std::to_string(data_.size()) + " elements");
    return data_[0];
}

std::string Tensor::shape_str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i) s += ' ';
        s += std::to_string(shape_[i]);
    }
    return s + "]";
}

bool all_finite(const Tensor& t) {
    for (double v : t.data())
        if (!std::isfinite(v)) return false;
    return true;
}

}  // namespace selnet
