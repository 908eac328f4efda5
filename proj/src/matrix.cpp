#include "hetreg/matrix.hpp"

#include <cmath>
#include <string>

#include "hetreg/errors.hpp"

namespace hetreg {

namespace {

std::string shape_str(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

}  // namespace

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    Matrix out(r, c);
    std::size_t i = 0;
    for (const auto& row : rows) {
        if (row.size() != c) {
            throw ShapeError("from_rows: ragged row lengths");
        }
        std::size_t j = 0;
        for (double v : row) out(i, j++) = v;
        ++i;
    }
    return out;
}

// The dense kernels below process four output rows per pass so that the
// second operand streams through cache once per block instead of once per
// row; on 128-wide layers that is the difference between L2-bandwidth-bound
// and FMA-bound.

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: " + shape_str(a) + " * " + shape_str(b));
    }
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    Matrix c(m, n);
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) {
        double* __restrict c0 = c.row(i);
        double* __restrict c1 = c.row(i + 1);
        double* __restrict c2 = c.row(i + 2);
        double* __restrict c3 = c.row(i + 3);
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double* __restrict brow = b.row(kk);
            const double a0 = a(i, kk);
            const double a1 = a(i + 1, kk);
            const double a2 = a(i + 2, kk);
            const double a3 = a(i + 3, kk);
            for (std::size_t j = 0; j < n; ++j) {
                const double bj = brow[j];
                c0[j] += a0 * bj;
                c1[j] += a1 * bj;
                c2[j] += a2 * bj;
                c3[j] += a3 * bj;
            }
        }
    }
    for (; i < m; ++i) {
        double* __restrict crow = c.row(i);
        const double* __restrict arow = a.row(i);
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double aik = arow[kk];
            const double* __restrict brow = b.row(kk);
            for (std::size_t j = 0; j < n; ++j) {
                crow[j] += aik * brow[j];
            }
        }
    }
    return c;
}

Matrix matmul_at_b(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) {
        throw ShapeError("matmul_at_b: " + shape_str(a) + "ᵀ * " + shape_str(b));
    }
    const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
    Matrix c(m, n);
    std::size_t kk = 0;
    for (; kk + 4 <= k; kk += 4) {
        const double* __restrict a0 = a.row(kk);
        const double* __restrict a1 = a.row(kk + 1);
        const double* __restrict a2 = a.row(kk + 2);
        const double* __restrict a3 = a.row(kk + 3);
        const double* __restrict b0 = b.row(kk);
        const double* __restrict b1 = b.row(kk + 1);
        const double* __restrict b2 = b.row(kk + 2);
        const double* __restrict b3 = b.row(kk + 3);
        for (std::size_t i = 0; i < m; ++i) {
            double* __restrict crow = c.row(i);
            const double w0 = a0[i], w1 = a1[i], w2 = a2[i], w3 = a3[i];
            for (std::size_t j = 0; j < n; ++j) {
                crow[j] += w0 * b0[j] + w1 * b1[j] + w2 * b2[j] + w3 * b3[j];
            }
        }
    }
    for (; kk < k; ++kk) {
        const double* __restrict arow = a.row(kk);
        const double* __restrict brow = b.row(kk);
        for (std::size_t i = 0; i < m; ++i) {
            const double aki = arow[i];
            double* __restrict crow = c.row(i);
            for (std::size_t j = 0; j < n; ++j) {
                crow[j] += aki * brow[j];
            }
        }
    }
    return c;
}

Matrix matmul_a_bt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw ShapeError("matmul_a_bt: " + shape_str(a) + " * " + shape_str(b) + "ᵀ");
    }
    const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
    Matrix c(m, n);
    // Eight independent accumulators per dot product; the strided partial
    // sums map onto vector lanes, which a single running sum cannot.
    for (std::size_t i = 0; i < m; ++i) {
        const double* __restrict arow = a.row(i);
        double* __restrict crow = c.row(i);
        for (std::size_t j = 0; j < n; ++j) {
            const double* __restrict brow = b.row(j);
            double acc0 = 0.0, acc1 = 0.0, acc2 = 0.0, acc3 = 0.0;
            double acc4 = 0.0, acc5 = 0.0, acc6 = 0.0, acc7 = 0.0;
            std::size_t kk = 0;
            for (; kk + 8 <= k; kk += 8) {
                acc0 += arow[kk + 0] * brow[kk + 0];
                acc1 += arow[kk + 1] * brow[kk + 1];
                acc2 += arow[kk + 2] * brow[kk + 2];
                acc3 += arow[kk + 3] * brow[kk + 3];
                acc4 += arow[kk + 4] * brow[kk + 4];
                acc5 += arow[kk + 5] * brow[kk + 5];
                acc6 += arow[kk + 6] * brow[kk + 6];
                acc7 += arow[kk + 7] * brow[kk + 7];
            }
            double acc = ((acc0 + acc1) + (acc2 + acc3)) + ((acc4 + acc5) + (acc6 + acc7));
            for (; kk < k; ++kk) {
                acc += arow[kk] * brow[kk];
            }
            crow[j] = acc;
        }
    }
    return c;
}

Matrix transpose(const Matrix& m) {
    Matrix out(m.cols(), m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            out(j, i) = m(i, j);
        }
    }
    return out;
}

void add_row_vector(Matrix& m, const std::vector<double>& v) {
    if (v.size() != m.cols()) {
        throw ShapeError("add_row_vector: vector length " + std::to_string(v.size()) +
                         " vs " + std::to_string(m.cols()) + " columns");
    }
    for (std::size_t i = 0; i < m.rows(); ++i) {
        double* __restrict row = m.row(i);
        const double* __restrict vp = v.data();
        for (std::size_t j = 0; j < m.cols(); ++j) {
            row[j] += vp[j];
        }
    }
}

std::vector<double> column_sums(const Matrix& m) {
    std::vector<double> sums(m.cols(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const double* __restrict row = m.row(i);
        double* __restrict sp = sums.data();
        for (std::size_t j = 0; j < m.cols(); ++j) {
            sp[j] += row[j];
        }
    }
    return sums;
}

bool all_finite(const Matrix& m) {
    const double* p = m.data();
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (!std::isfinite(p[i])) return false;
    }
    return true;
}

}  // namespace hetreg
