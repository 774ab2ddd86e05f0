#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "mmrec/error.hpp"

namespace mmrec {

using DenseVector = std::vector<double>;

/// Row-major dense matrix of doubles. All training arithmetic runs in double;
/// 32-bit precision appears only in file formats.
struct DenseMatrix {
    std::int64_t rows = 0;
    std::int64_t cols = 0;
    std::vector<double> data;

    DenseMatrix() = default;
    DenseMatrix(std::int64_t r, std::int64_t c, double fill = 0.0)
        : rows(r), cols(c), data(static_cast<std::size_t>(r * c), fill) {}

    double& at(std::int64_t r, std::int64_t c) { return data[static_cast<std::size_t>(r * cols + c)]; }
    double at(std::int64_t r, std::int64_t c) const { return data[static_cast<std::size_t>(r * cols + c)]; }

    std::span<double> row(std::int64_t r) {
        return {data.data() + r * cols, static_cast<std::size_t>(cols)};
    }
    std::span<const double> row(std::int64_t r) const {
        return {data.data() + r * cols, static_cast<std::size_t>(cols)};
    }

    void set_zero() { std::fill(data.begin(), data.end(), 0.0); }

    static DenseMatrix identity(std::int64_t n) {
        DenseMatrix m(n, n);
        for (std::int64_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
        return m;
    }
};

namespace detail {
inline void require_shape(bool ok, const std::string& what) {
    if (!ok) throw ShapeError(what);
}
}  // namespace detail

/// y = W x + b.
inline DenseVector affine(const DenseMatrix& w, std::span<const double> x, const DenseVector& b) {
    detail::require_shape(w.cols == static_cast<std::int64_t>(x.size()),
                          "affine: W has " + std::to_string(w.cols) + " cols but x has " +
                              std::to_string(x.size()) + " entries");
    detail::require_shape(w.rows == static_cast<std::int64_t>(b.size()),
                          "affine: W has " + std::to_string(w.rows) + " rows but b has " +
                              std::to_string(b.size()) + " entries");
    DenseVector y(b);
    for (std::int64_t r = 0; r < w.rows; ++r) {
        const double* wr = w.data.data() + r * w.cols;
        double acc = 0.0;
        for (std::int64_t c = 0; c < w.cols; ++c) acc += wr[c] * x[static_cast<std::size_t>(c)];
        y[static_cast<std::size_t>(r)] += acc;
    }
    return y;
}

inline DenseVector relu(DenseVector x) {
    for (double& v : x) v = v > 0.0 ? v : 0.0;
    return x;
}

/// Logistic function without overflow; output clamped into the open interval
/// (0, 1) so downstream log() calls stay finite.
inline double sigmoid_scalar(double x) {
    double s;
    if (x >= 0.0) {
        s = 1.0 / (1.0 + std::exp(-x));
    } else {
        const double e = std::exp(x);
        s = e / (1.0 + e);
    }
    if (s <= 0.0) return std::numeric_limits<double>::denorm_min();
    if (s >= 1.0) return 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
    return s;
}

inline DenseVector sigmoid_stable(DenseVector x) {
    for (double& v : x) v = sigmoid_scalar(v);
    return x;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

/// a += alpha * b
inline void axpy(double alpha, std::span<const double> b, std::span<double> a) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += alpha * b[i];
}

/// m += u v^T  (rank-one update, m is rows(u) x cols(v))
inline void add_outer(DenseMatrix& m, std::span<const double> u, std::span<const double> v) {
    detail::require_shape(m.rows == static_cast<std::int64_t>(u.size()) &&
                              m.cols == static_cast<std::int64_t>(v.size()),
                          "add_outer: shape mismatch");
    for (std::int64_t r = 0; r < m.rows; ++r) {
        double* row = m.data.data() + r * m.cols;
        const double ur = u[static_cast<std::size_t>(r)];
        if (ur == 0.0) continue;
        for (std::int64_t c = 0; c < m.cols; ++c) row[c] += ur * v[static_cast<std::size_t>(c)];
    }
}

/// y = W^T x  (x has rows(W) entries, result has cols(W) entries)
inline DenseVector matvec_transposed(const DenseMatrix& w, std::span<const double> x) {
    detail::require_shape(w.rows == static_cast<std::int64_t>(x.size()),
                          "matvec_transposed: shape mismatch");
    DenseVector y(static_cast<std::size_t>(w.cols), 0.0);
    for (std::int64_t r = 0; r < w.rows; ++r) {
        const double xr = x[static_cast<std::size_t>(r)];
        if (xr == 0.0) continue;
        const double* row = w.data.data() + r * w.cols;
        for (std::int64_t c = 0; c < w.cols; ++c) y[static_cast<std::size_t>(c)] += xr * row[c];
    }
    return y;
}

}  // namespace mmrec
