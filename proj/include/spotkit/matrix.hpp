#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "spotkit/error.hpp"

namespace spotkit {

// Bytes allocated through Matrix construction on the current thread. The
// pooling benchmark resets and reads this around forward calls to compare
// transient footprints.
inline thread_local std::uint64_t g_alloc_bytes = 0;

inline void reset_alloc_bytes() { g_alloc_bytes = 0; }
inline std::uint64_t alloc_bytes() { return g_alloc_bytes; }
inline void count_alloc_bytes(std::uint64_t n) { g_alloc_bytes += n; }

// Dense row-major matrix of 64-bit floats.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {
        count_alloc_bytes(data_.size() * sizeof(double));
    }

    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
        Matrix m(rows.size(), rows.size() ? rows.begin()->size() : 0);
        std::size_t i = 0;
        for (const auto& r : rows) {
            require(r.size() == m.cols_, ErrorKind::shape_mismatch, "from_rows: ragged rows");
            std::size_t j = 0;
            for (double x : r) m(i, j++) = x;
            ++i;
        }
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

    std::span<double> flat() { return {data_.data(), data_.size()}; }
    std::span<const double> flat() const { return {data_.data(), data_.size()}; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline bool all_finite(std::span<const double> v) {
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

inline bool all_finite(const Matrix& m) { return all_finite(m.flat()); }

// out = a * b
inline Matrix matmul(const Matrix& a, const Matrix& b) {
    require(a.cols() == b.rows(), ErrorKind::shape_mismatch, "matmul: inner dims differ");
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
        }
    }
    return out;
}

// out = a^T * b
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    require(a.rows() == b.rows(), ErrorKind::shape_mismatch, "matmul_tn: row counts differ");
    Matrix out(a.cols(), b.cols());
    for (std::size_t k = 0; k < a.rows(); ++k) {
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double aki = a(k, i);
            if (aki == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aki * b(k, j);
        }
    }
    return out;
}

// out = a * b^T
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    require(a.cols() == b.cols(), ErrorKind::shape_mismatch, "matmul_nt: col counts differ");
    Matrix out(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.rows(); ++j) {
            double s = 0.0;
            const auto ra = a.row(i);
            const auto rb = b.row(j);
            for (std::size_t k = 0; k < ra.size(); ++k) s += ra[k] * rb[k];
            out(i, j) = s;
        }
    }
    return out;
}

}  // namespace spotkit
