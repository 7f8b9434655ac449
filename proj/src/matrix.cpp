#include "utd/matrix.hpp"

#include <cmath>
#include <string>

namespace utd {

RealMatrix::RealMatrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (values_.size() != rows_ * cols_) {
        throw ShapeError("matrix of " + std::to_string(rows_) + "x" + std::to_string(cols_) +
                         " given " + std::to_string(values_.size()) + " values");
    }
}

RealMatrix RealMatrix::identity(std::size_t n) {
    RealMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

RealMatrix RealMatrix::from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) return {};
    RealMatrix m(rows.size(), rows.front().size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != m.cols()) throw ShapeError("ragged rows");
        std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
    }
    return m;
}

bool RealMatrix::all_finite() const noexcept {
    for (double v : values_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

RealMatrix RealMatrix::select_rows(std::span<const std::size_t> indices) const {
    RealMatrix out(indices.size(), cols_);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= rows_) throw ShapeError("row index out of range");
        auto src = row(indices[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

RealMatrix matmul(const RealMatrix& a, const RealMatrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                         " by " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    }
    RealMatrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto orow = out.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            auto brow = b.row(k);
            for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

RealMatrix matmul_tn(const RealMatrix& a, const RealMatrix& b) {
    if (a.rows() != b.rows()) throw ShapeError("matmul_tn: row counts differ");
    RealMatrix out(a.cols(), b.cols());
    for (std::size_t k = 0; k < a.rows(); ++k) {
        auto arow = a.row(k);
        auto brow = b.row(k);
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double aki = arow[i];
            if (aki == 0.0) continue;
            auto orow = out.row(i);
            for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aki * brow[j];
        }
    }
    return out;
}

RealMatrix matmul_nt(const RealMatrix& a, const RealMatrix& b) {
    if (a.cols() != b.cols()) throw ShapeError("matmul_nt: column counts differ");
    RealMatrix out(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto arow = a.row(i);
        for (std::size_t j = 0; j < b.rows(); ++j) {
            auto brow = b.row(j);
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) s += arow[k] * brow[k];
            out(i, j) = s;
        }
    }
    return out;
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ShapeError("distance between vectors of different length");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

double distance(std::span<const double> a, std::span<const double> b) {
    return std::sqrt(squared_distance(a, b));
}

RealMatrix normalize_rows(const RealMatrix& m) {
    RealMatrix out = m;
    for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row(r);
        double norm = 0.0;
        for (double v : row) norm += v * v;
        norm = std::sqrt(norm);
        if (norm > 0.0) {
            for (double& v : row) v /= norm;
        }
    }
    return out;
}

}  // namespace utd
