#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace dgqn {

/// Dense row-major tensor of 64-bit floats.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), data_(count(shape_), 0.0) {}

    Tensor(std::vector<std::size_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != count(shape_))
            throw std::invalid_argument("Tensor: data length " + std::to_string(data_.size()) +
                                        " does not match shape product " + std::to_string(count(shape_)));
    }

    static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<std::size_t> shape, double v) {
        Tensor t(std::move(shape));
        for (auto& x : t.data_) x = v;
        return t;
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    static Tensor row_major(std::vector<std::size_t> shape, std::initializer_list<double> values) {
        return Tensor(std::move(shape), std::vector<double>(values));
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t numel() const { return data_.size(); }
    std::size_t extent(std::size_t axis) const { return shape_.at(axis); }

    bool is_scalar() const { return numel() == 1; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

    double& at(std::size_t i, std::size_t j, std::size_t k) {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    double at(std::size_t i, std::size_t j, std::size_t k) const {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }

    double& at(std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
        return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
    }
    double at(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
        return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
    }

    /// Same data, new shape; element count must match.
    Tensor reshaped(std::vector<std::size_t> shape) const {
        if (count(shape) != numel())
            throw std::invalid_argument("Tensor::reshaped: element count mismatch");
        return Tensor(std::move(shape), data_);
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }
    friend bool operator!=(const Tensor& a, const Tensor& b) { return !(a == b); }

    std::string shape_str() const {
        std::string s = "[";
        for (std::size_t i = 0; i < shape_.size(); ++i) {
            if (i) s += "x";
            s += std::to_string(shape_[i]);
        }
        return s + "]";
    }

private:
    static std::size_t count(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (auto e : shape) n *= e;
        return shape.empty() ? 0 : n;
    }

    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

}  // namespace dgqn
