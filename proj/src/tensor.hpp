#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace selnet {

using Shape = std::vector<std::size_t>;

// Dense row-major tensor of doubles. Rank 0 is a scalar (one element),
// rank 1 a vector, rank 2 a matrix. Nothing higher is needed here.
class Tensor {
public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<double> data);

    static Tensor scalar(double v);
    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double v);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    static Tensor vector(std::vector<double> data);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }

    // rank-2 accessors (rank 0/1 are treated as single-column where sensible)
    std::size_t rows() const;
    std::size_t cols() const;

    double& at(std::size_t i) { return data_[i]; }
    double at(std::size_t i) const { return data_[i]; }
    double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
    double item() const;  // sole element of a one-element tensor

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    std::string shape_str() const;

private:
    Shape shape_;
    std::vector<double> data_;
};

bool all_finite(const Tensor& t);

}  // namespace selnet
