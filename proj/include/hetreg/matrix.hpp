#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

namespace hetreg {

/// Dense row-major matrix of 64-bit floats. The workhorse carrier for
/// batches, parameters, and gradients; two-dimensional only.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double* row(std::size_t i) { return data_.data() + i * cols_; }
    const double* row(std::size_t i) const { return data_.data() + i * cols_; }

    bool same_shape(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    bool operator==(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_ && data_ == other.data_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// a(m×k) * b(k×n) -> m×n. Throws ShapeError on inner-dimension mismatch.
Matrix matmul(const Matrix& a, const Matrix& b);

/// aᵀ(m×k) * b(k... ) given a(k×m), b(k×n) -> m×n, without materializing aᵀ.
Matrix matmul_at_b(const Matrix& a, const Matrix& b);

/// a(m×k) * bᵀ given b(n×k) -> m×n, without materializing bᵀ.
Matrix matmul_a_bt(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& m);

/// Adds v to every row of m in place; v.size() must equal m.cols().
void add_row_vector(Matrix& m, const std::vector<double>& v);

/// Column sums as a vector of length m.cols().
std::vector<double> column_sums(const Matrix& m);

bool all_finite(const Matrix& m);

}  // namespace hetreg
