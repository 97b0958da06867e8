#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "tsad/error.hpp"

namespace tsad {

// Row-major dense grid. Matrix = Grid<double> carries the numeric work;
// Mask = Grid<uint8_t> flags observed/labeled cells.
template <typename T>
class Grid {
public:
    Grid() = default;
    Grid(std::size_t rows, std::size_t cols, T fill = T{})
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    const T& operator()(std::size_t r, std::size_t c) const {
        return data_[r * cols_ + c];
    }

    T* row_ptr(std::size_t r) { return data_.data() + r * cols_; }
    const T* row_ptr(std::size_t r) const { return data_.data() + r * cols_; }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    bool operator==(const Grid& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_ &&
               data_ == other.data_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

using Matrix = Grid<double>;
using Mask = Grid<std::uint8_t>;

using Vector = std::vector<double>;

// y += A x  (A: m x n, x: n, y: m)
inline void gemv_add(const Matrix& a, const double* x, double* y) {
    for (std::size_t r = 0; r < a.rows(); ++r) {
        const double* row = a.row_ptr(r);
        double acc = 0.0;
        for (std::size_t c = 0; c < a.cols(); ++c) acc += row[c] * x[c];
        y[r] += acc;
    }
}

// y += A^T x  (A: m x n, x: m, y: n)
inline void gemv_t_add(const Matrix& a, const double* x, double* y) {
    for (std::size_t r = 0; r < a.rows(); ++r) {
        const double* row = a.row_ptr(r);
        const double xr = x[r];
        for (std::size_t c = 0; c < a.cols(); ++c) y[c] += row[c] * xr;
    }
}

// A += x y^T  (x: m, y: n, A: m x n)
inline void outer_add(Matrix& a, const double* x, const double* y) {
    for (std::size_t r = 0; r < a.rows(); ++r) {
        double* row = a.row_ptr(r);
        const double xr = x[r];
        for (std::size_t c = 0; c < a.cols(); ++c) row[c] += xr * y[c];
    }
}

inline double dot(const double* x, const double* y, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
    return acc;
}

// Solves the symmetric positive definite system M b = v in place via
// Cholesky. Returns false when M is not positive definite.
inline bool cholesky_solve(Matrix m, Vector v, Vector& out) {
    const std::size_t n = m.rows();
    if (m.cols() != n || v.size() != n) fail("linalg", "cholesky shape mismatch");
    // Decompose M = L L^T, overwriting the lower triangle.
    for (std::size_t j = 0; j < n; ++j) {
        double diag = m(j, j);
        for (std::size_t k = 0; k < j; ++k) diag -= m(j, k) * m(j, k);
        if (!(diag > 0.0)) return false;
        const double ljj = std::sqrt(diag);
        m(j, j) = ljj;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = m(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= m(i, k) * m(j, k);
            m(i, j) = s / ljj;
        }
    }
    // Forward then back substitution.
    for (std::size_t i = 0; i < n; ++i) {
        double s = v[i];
        for (std::size_t k = 0; k < i; ++k) s -= m(i, k) * v[k];
        v[i] = s / m(i, i);
    }
    out.assign(n, 0.0);
    for (std::size_t i = n; i-- > 0;) {
        double s = v[i];
        for (std::size_t k = i + 1; k < n; ++k) s -= m(k, i) * out[k];
        out[i] = s / m(i, i);
    }
    return true;
}

struct OlsResult {
    Vector coef;
    bool ridge_fallback = false; // rank-deficient design, solved with ridge
};

// Ordinary least squares through the normal equations; falls back to a
// ridge penalty when the Gram matrix is singular.
inline OlsResult ols_solve(const Matrix& design, const Vector& target,
                           double ridge_lambda = 1e-6) {
    const std::size_t n = design.rows();
    const std::size_t p = design.cols();
    if (target.size() != n) fail("linalg", "ols shape mismatch");
    Matrix gram(p, p);
    Vector moment(p, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        const double* row = design.row_ptr(r);
        for (std::size_t i = 0; i < p; ++i) {
            const double xi = row[i];
            if (xi == 0.0) continue;
            for (std::size_t j = i; j < p; ++j) gram(i, j) += xi * row[j];
            moment[i] += xi * target[r];
        }
    }
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < i; ++j) gram(i, j) = gram(j, i);

    OlsResult result;
    if (cholesky_solve(gram, moment, result.coef)) return result;
    for (std::size_t i = 0; i < p; ++i) gram(i, i) += ridge_lambda;
    if (!cholesky_solve(gram, moment, result.coef))
        fail("linalg", "ridge-regularized system still singular");
    result.ridge_fallback = true;
    return result;
}

} // namespace tsad
