#ifndef MPLYAP_MATRIX_HPP
#define MPLYAP_MATRIX_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mplyap/error.hpp"

namespace mplyap {

/// Row-major dense matrix of 64-bit values.
///
/// Storage is always double; the precision an entry "lives in" is a property
/// of the operation that produced it, not of the container.
class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_)
            throw DimensionError("DenseMatrix: data length does not match shape");
    }
    DenseMatrix(std::initializer_list<std::initializer_list<double>> init) {
        rows_ = init.size();
        cols_ = rows_ ? init.begin()->size() : 0;
        data_.reserve(rows_ * cols_);
        for (const auto& row : init) {
            if (row.size() != cols_)
                throw DimensionError("DenseMatrix: ragged initializer");
            data_.insert(data_.end(), row.begin(), row.end());
        }
    }

    static DenseMatrix identity(std::size_t n) {
        DenseMatrix I(n, n);
        for (std::size_t i = 0; i < n; ++i) I(i, i) = 1.0;
        return I;
    }
    static DenseMatrix diagonal(std::span<const double> d) {
        DenseMatrix D(d.size(), d.size());
        for (std::size_t i = 0; i < d.size(); ++i) D(i, i) = d[i];
        return D;
    }
    static DenseMatrix column(std::span<const double> v) {
        return DenseMatrix(v.size(), 1, std::vector<double>(v.begin(), v.end()));
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }
    bool is_square() const noexcept { return rows_ == cols_; }

    double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    std::span<double> row(std::size_t i) noexcept { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const noexcept {
        return {data_.data() + i * cols_, cols_};
    }

    DenseMatrix transpose() const {
        DenseMatrix T(cols_, rows_);
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t j = 0; j < cols_; ++j) T(j, i) = (*this)(i, j);
        return T;
    }

    /// Columns [first, first + count).
    DenseMatrix col_range(std::size_t first, std::size_t count) const {
        if (first + count > cols_) throw DimensionError("col_range out of bounds");
        DenseMatrix B(rows_, count);
        for (std::size_t i = 0; i < rows_; ++i)
            std::copy_n(data_.begin() + i * cols_ + first, count, B.row(i).begin());
        return B;
    }
    /// Rows [first, first + count).
    DenseMatrix row_range(std::size_t first, std::size_t count) const {
        if (first + count > rows_) throw DimensionError("row_range out of bounds");
        return DenseMatrix(count, cols_,
                           std::vector<double>(data_.begin() + first * cols_,
                                               data_.begin() + (first + count) * cols_));
    }
    DenseMatrix select_cols(std::span<const std::size_t> idx) const {
        DenseMatrix B(rows_, idx.size());
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t j = 0; j < idx.size(); ++j) B(i, j) = (*this)(i, idx[j]);
        return B;
    }

    bool all_finite() const noexcept {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// [A, B, ...] side by side; every block must have the same row count.
/// Blocks with zero columns are allowed (an n×0 factor is a valid "empty" factor).
inline DenseMatrix hcat(std::initializer_list<const DenseMatrix*> blocks) {
    std::size_t rows = 0, cols = 0;
    bool first = true;
    for (const auto* b : blocks) {
        if (first) {
            rows = b->rows();
            first = false;
        } else if (b->rows() != rows) {
            throw DimensionError("hcat: row count mismatch");
        }
        cols += b->cols();
    }
    DenseMatrix C(rows, cols);
    std::size_t off = 0;
    for (const auto* b : blocks) {
        for (std::size_t i = 0; i < rows; ++i)
            std::copy(b->row(i).begin(), b->row(i).end(), C.row(i).begin() + off);
        off += b->cols();
    }
    return C;
}

inline DenseMatrix hcat(const DenseMatrix& a, const DenseMatrix& b) { return hcat({&a, &b}); }
inline DenseMatrix hcat(const DenseMatrix& a, const DenseMatrix& b, const DenseMatrix& c) {
    return hcat({&a, &b, &c});
}

/// Block-diagonal assembly.
inline DenseMatrix blkdiag(std::initializer_list<const DenseMatrix*> blocks) {
    std::size_t rows = 0, cols = 0;
    for (const auto* b : blocks) {
        rows += b->rows();
        cols += b->cols();
    }
    DenseMatrix C(rows, cols);
    std::size_t r0 = 0, c0 = 0;
    for (const auto* b : blocks) {
        for (std::size_t i = 0; i < b->rows(); ++i)
            for (std::size_t j = 0; j < b->cols(); ++j) C(r0 + i, c0 + j) = (*b)(i, j);
        r0 += b->rows();
        c0 += b->cols();
    }
    return C;
}

} // namespace mplyap

#endif
