// Copyright (c) 2026, The neglab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstring>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "neglab/errors.hpp"

namespace neglab {

/// Dense row-major tensor of rank 1 or 2.
///
/// Rank-1 tensors behave as a single row (rows() == 1) wherever a matrix is
/// expected; a scalar is any tensor with exactly one element.
template <class T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape, T fill = T{0})
        : shape_(std::move(shape)) {
        validate_shape();
        data_.assign(element_count(shape_), fill);
    }

    Tensor(std::vector<std::size_t> shape, std::vector<T> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        validate_shape();
        require(data_.size() == element_count(shape_),
                "tensor data length " + std::to_string(data_.size()) +
                    " does not match shape product " + std::to_string(element_count(shape_)));
    }

    static Tensor scalar(T v) { return Tensor({1}, std::vector<T>{v}); }

    const std::vector<std::size_t>& shape() const noexcept { return shape_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }
    bool is_scalar() const noexcept { return data_.size() == 1; }

    std::size_t rows() const noexcept {
        return shape_.size() == 2 ? shape_[0] : (shape_.empty() ? 0 : 1);
    }
    std::size_t cols() const noexcept { return shape_.empty() ? 0 : shape_.back(); }

    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }
    std::vector<T>& values() noexcept { return data_; }
    const std::vector<T>& values() const noexcept { return data_; }

    std::span<T> row(std::size_t r) { return {data_.data() + r * cols(), cols()}; }
    std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols(), cols()}; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }
    T& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

    T item() const {
        require(is_scalar(), "item() on non-scalar tensor");
        return data_[0];
    }

    bool requires_grad() const noexcept { return requires_grad_; }
    Tensor& set_requires_grad(bool flag) noexcept {
        requires_grad_ = flag;
        return *this;
    }

    template <class U>
    Tensor<U> cast() const {
        std::vector<U> out(data_.size());
        std::transform(data_.begin(), data_.end(), out.begin(), [](T v) { return static_cast<U>(v); });
        Tensor<U> t(shape_, std::move(out));
        t.set_requires_grad(requires_grad_);
        return t;
    }

    bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }

    /// Bitwise equality of shape and payload.
    bool identical(const Tensor& other) const noexcept {
        return shape_ == other.shape_ &&
               std::equal(data_.begin(), data_.end(), other.data_.begin(), other.data_.end(),
                          [](T a, T b) { return std::memcmp(&a, &b, sizeof(T)) == 0; });
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    static std::size_t element_count(const std::vector<std::size_t>& shape) {
        return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
    }

private:
    void validate_shape() const {
        require(!shape_.empty() && shape_.size() <= 2, "tensor rank must be 1 or 2");
        for (auto d : shape_) require(d > 0, "tensor dimensions must be positive");
    }

    std::vector<std::size_t> shape_;
    std::vector<T> data_;
    bool requires_grad_ = false;
};

inline std::string shape_string(const std::vector<std::size_t>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

} // namespace neglab
