#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "fairint/error.hpp"

namespace fairint {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? "x" : "") << shape[i];
    }
    os << ']';
    return os.str();
}

/// Dense row-major f64 array. Extents are always positive; a scalar has shape {1}.
class Tensor {
public:
    Tensor() : shape_{1}, values_(1, 0.0) {}

    explicit Tensor(Shape shape, double fill = 0.0) : shape_(std::move(shape)) {
        check_shape();
        values_.assign(shape_numel(shape_), fill);
    }

    Tensor(Shape shape, std::vector<double> values)
        : shape_(std::move(shape)), values_(std::move(values)) {
        check_shape();
        if (shape_numel(shape_) != values_.size()) {
            throw DimensionError("tensor of shape " + shape_str(shape_) + " given " +
                                 std::to_string(values_.size()) + " values");
        }
    }

    static Tensor scalar(double v) { return Tensor(Shape{1}, std::vector<double>{v}); }

    static Tensor vector(std::vector<double> values) {
        const auto n = values.size();
        return Tensor(Shape{n}, std::move(values));
    }

    /// Builds an m x n matrix from nested rows.
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows) {
        const std::size_t m = rows.size();
        const std::size_t n = m ? rows.begin()->size() : 0;
        std::vector<double> values;
        values.reserve(m * n);
        for (const auto& row : rows) {
            if (row.size() != n) {
                throw DimensionError("ragged matrix literal");
            }
            values.insert(values.end(), row.begin(), row.end());
        }
        return Tensor(Shape{m, n}, std::move(values));
    }

    static Tensor identity(std::size_t n) {
        Tensor t(Shape{n, n});
        for (std::size_t i = 0; i < n; ++i) {
            t.values_[i * n + i] = 1.0;
        }
        return t;
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return values_.size(); }
    std::size_t last_extent() const noexcept { return shape_.back(); }
    /// Number of slices along the last dimension.
    std::size_t outer_count() const noexcept { return values_.size() / shape_.back(); }

    std::size_t rows() const {
        require_rank2();
        return shape_[0];
    }
    std::size_t cols() const {
        require_rank2();
        return shape_[1];
    }

    std::span<double> values() noexcept { return values_; }
    std::span<const double> values() const noexcept { return values_; }
    std::vector<double>& buffer() noexcept { return values_; }
    const std::vector<double>& buffer() const noexcept { return values_; }

    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }

    double& at(std::size_t r, std::size_t c) { return values_[r * shape_.back() + c]; }
    double at(std::size_t r, std::size_t c) const { return values_[r * shape_.back() + c]; }

    double item() const {
        if (values_.size() != 1) {
            throw UsageError("item() on tensor of shape " + shape_str(shape_));
        }
        return values_[0];
    }

    bool all_finite() const noexcept {
        return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
    }

    void fill(double v) { std::fill(values_.begin(), values_.end(), v); }

    Tensor reshaped(Shape shape) const { return Tensor(std::move(shape), values_); }

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.values_ == b.values_;
    }

private:
    void check_shape() const {
        if (shape_.empty()) {
            throw DimensionError("tensor shape must have at least one extent");
        }
        for (auto e : shape_) {
            if (e == 0) {
                throw DimensionError("tensor extents must be positive, got " + shape_str(shape_));
            }
        }
    }

    void require_rank2() const {
        if (shape_.size() != 2) {
            throw DimensionError("expected a matrix, got shape " + shape_str(shape_));
        }
    }

    Shape shape_;
    std::vector<double> values_;
};

} // namespace fairint
