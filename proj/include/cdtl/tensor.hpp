#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "cdtl/error.hpp"

namespace cdtl {

// Dense row-major float tensor. Carries images, activations, weights, and
// gradients throughout the library. Value semantics everywhere.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), data_(checked_size(shape_), 0.0f) {}

    Tensor(std::vector<std::size_t> shape, std::vector<float> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != checked_size(shape_)) {
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_string());
        }
    }

    static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<std::size_t> shape, float value) {
        Tensor t(std::move(shape));
        for (auto& v : t.data_) v = value;
        return t;
    }

    static Tensor vector1d(std::initializer_list<float> values) {
        return Tensor({values.size()}, std::vector<float>(values));
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t extent(std::size_t dim) const { return shape_[dim]; }

    std::vector<float>& data() { return data_; }
    const std::vector<float>& data() const { return data_; }

    float& operator[](std::size_t i) { return data_[i]; }
    float operator[](std::size_t i) const { return data_[i]; }

    float& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    const float& at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

    float& at(std::size_t i, std::size_t j, std::size_t k) {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    const float& at(std::size_t i, std::size_t j, std::size_t k) const {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }

    float& at(std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
        return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
    }
    const float& at(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
        return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    bool all_finite() const {
        for (float v : data_) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    // Reinterprets the elements as a flat vector; data order is unchanged.
    Tensor flattened() const { return Tensor({data_.size()}, data_); }

    Tensor& operator+=(const Tensor& other) {
        require_same_shape(other, "operator+=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
        return *this;
    }

    Tensor& scale(float factor) {
        for (auto& v : data_) v *= factor;
        return *this;
    }

    void fill(float value) {
        for (auto& v : data_) v = value;
    }

    std::string shape_string() const {
        std::ostringstream os;
        os << '[';
        for (std::size_t i = 0; i < shape_.size(); ++i) {
            if (i) os << 'x';
            os << shape_[i];
        }
        os << ']';
        return os.str();
    }

    void require_same_shape(const Tensor& other, const std::string& where) const {
        if (!same_shape(other)) {
            throw ShapeError(where + ": shape " + shape_string() + " vs " + other.shape_string());
        }
    }

    void require_rank(std::size_t r, const std::string& where) const {
        if (rank() != r) {
            throw ShapeError(where + ": expected rank " + std::to_string(r) + ", got " +
                             shape_string());
        }
    }

private:
    static std::size_t checked_size(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (std::size_t e : shape) {
            if (e == 0) throw ShapeError("tensor extents must be positive");
            n *= e;
        }
        return n;
    }

    std::vector<std::size_t> shape_;
    std::vector<float> data_;
};

}  // namespace cdtl
