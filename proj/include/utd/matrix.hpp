#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "utd/errors.hpp"

namespace utd {

/// Dense row-major matrix of doubles. Batches are stored one sample per row.
class RealMatrix {
public:
    RealMatrix() = default;
    RealMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), values_(rows * cols, fill) {}
    RealMatrix(std::size_t rows, std::size_t cols, std::vector<double> values);

    static RealMatrix identity(std::size_t n);
    /// Builds a matrix from nested rows; all rows must have equal length.
    static RealMatrix from_rows(const std::vector<std::vector<double>>& rows);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return values_.size(); }
    bool empty() const noexcept { return values_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }

    std::vector<double>& values() noexcept { return values_; }
    const std::vector<double>& values() const noexcept { return values_; }

    bool all_finite() const noexcept;

    /// Rows selected by index, in the given order.
    RealMatrix select_rows(std::span<const std::size_t> indices) const;

    friend bool operator==(const RealMatrix&, const RealMatrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> values_;
};

/// a (n x k) * b (k x m)
RealMatrix matmul(const RealMatrix& a, const RealMatrix& b);
/// a^T (k x n)^T * b (k x m) -> n x m
RealMatrix matmul_tn(const RealMatrix& a, const RealMatrix& b);
/// a (n x k) * b^T (m x k)^T -> n x m
RealMatrix matmul_nt(const RealMatrix& a, const RealMatrix& b);

double squared_distance(std::span<const double> a, std::span<const double> b);
double distance(std::span<const double> a, std::span<const double> b);

/// Copy with every row scaled to unit l2 norm; all-zero rows are left at zero.
RealMatrix normalize_rows(const RealMatrix& m);

}  // namespace utd
