#pragma once

// Dense and sparse kernels shared by the whole pipeline: row-major dense
// matrices, CSR storage, Cholesky, dense and banded LU, and a one-sided
// Jacobi thin SVD.

#include "errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

namespace rbrom {

using Vector = std::vector<double>;

namespace linalg {

inline double dot(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) {
        throw DimensionError("dot: length mismatch " + std::to_string(x.size()) + " vs " +
                             std::to_string(y.size()));
    }
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        s += x[i] * y[i];
    }
    return s;
}

inline double norm2(std::span<const double> x) { return std::sqrt(dot(x, x)); }

inline double max_abs(std::span<const double> x) {
    double m = 0.0;
    for (double v : x) {
        m = std::max(m, std::abs(v));
    }
    return m;
}

inline bool all_finite(std::span<const double> x) {
    return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
}

/// y += alpha * x
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    for (std::size_t i = 0; i < x.size(); ++i) {
        y[i] += alpha * x[i];
    }
}

class DenseMatrix {
  public:
    DenseMatrix() = default;

    DenseMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

    DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) {
            throw DimensionError("DenseMatrix: data length " + std::to_string(data_.size()) +
                                 " does not equal " + std::to_string(rows_) + "x" +
                                 std::to_string(cols_));
        }
        if (!all_finite(data_)) {
            throw NumericalError("DenseMatrix: non-finite entry");
        }
    }

    static DenseMatrix identity(std::size_t n) {
        DenseMatrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) {
            m(i, i) = 1.0;
        }
        return m;
    }

    static DenseMatrix from_columns(const std::vector<Vector>& columns) {
        if (columns.empty()) {
            return {};
        }
        const std::size_t rows = columns.front().size();
        DenseMatrix m(rows, columns.size());
        for (std::size_t j = 0; j < columns.size(); ++j) {
            if (columns[j].size() != rows) {
                throw DimensionError("from_columns: ragged columns");
            }
            for (std::size_t i = 0; i < rows; ++i) {
                m(i, j) = columns[j][i];
            }
        }
        return m;
    }

    [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
    [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
    [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    [[nodiscard]] std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
    [[nodiscard]] std::span<const double> row(std::size_t i) const {
        return {data_.data() + i * cols_, cols_};
    }

    [[nodiscard]] Vector column(std::size_t j) const {
        Vector c(rows_);
        for (std::size_t i = 0; i < rows_; ++i) {
            c[i] = (*this)(i, j);
        }
        return c;
    }

    void set_column(std::size_t j, std::span<const double> values) {
        for (std::size_t i = 0; i < rows_; ++i) {
            (*this)(i, j) = values[i];
        }
    }

    [[nodiscard]] std::span<const double> data() const noexcept { return data_; }
    [[nodiscard]] std::span<double> data() noexcept { return data_; }

    [[nodiscard]] DenseMatrix transposed() const {
        DenseMatrix t(cols_, rows_);
        for (std::size_t i = 0; i < rows_; ++i) {
            for (std::size_t j = 0; j < cols_; ++j) {
                t(j, i) = (*this)(i, j);
            }
        }
        return t;
    }

    /// First `count` columns.
    [[nodiscard]] DenseMatrix leading_columns(std::size_t count) const {
        DenseMatrix m(rows_, count);
        for (std::size_t i = 0; i < rows_; ++i) {
            std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(i * cols_), count,
                        m.data_.begin() + static_cast<std::ptrdiff_t>(i * count));
        }
        return m;
    }

    friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline double max_abs(const DenseMatrix& a) { return max_abs(a.data()); }

inline DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                             " times " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    }
    DenseMatrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto ci = c.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik != 0.0) {
                axpy(aik, b.row(k), ci);
            }
        }
    }
    return c;
}

/// aᵀ·b without forming the transpose.
inline DenseMatrix matmul_transposed_left(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.rows() != b.rows()) {
        throw DimensionError("matmul_transposed_left: row mismatch");
    }
    DenseMatrix c(a.cols(), b.cols());
    for (std::size_t k = 0; k < a.rows(); ++k) {
        const auto ak = a.row(k);
        const auto bk = b.row(k);
        for (std::size_t i = 0; i < a.cols(); ++i) {
            if (ak[i] != 0.0) {
                axpy(ak[i], bk, c.row(i));
            }
        }
    }
    return c;
}

inline Vector matvec(const DenseMatrix& a, std::span<const double> x) {
    if (a.cols() != x.size()) {
        throw DimensionError("matvec: matrix has " + std::to_string(a.cols()) +
                             " columns, vector has " + std::to_string(x.size()) + " entries");
    }
    Vector y(a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        y[i] = dot(a.row(i), x);
    }
    return y;
}

/// aᵀ·x
inline Vector matvec_transposed(const DenseMatrix& a, std::span<const double> x) {
    if (a.rows() != x.size()) {
        throw DimensionError("matvec_transposed: dimension mismatch");
    }
    Vector y(a.cols(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        axpy(x[i], a.row(i), y);
    }
    return y;
}

// ---------------------------------------------------------------------------
// CSR

struct Triplet {
    std::size_t row;
    std::size_t col;
    double value;
};

class CsrMatrix {
  public:
    CsrMatrix() : row_offsets_(1, 0) {}

    CsrMatrix(std::size_t rows, std::size_t cols, std::vector<std::size_t> row_offsets,
              std::vector<std::size_t> col_indices, std::vector<double> values)
        : rows_(rows), cols_(cols), row_offsets_(std::move(row_offsets)),
          col_indices_(std::move(col_indices)), values_(std::move(values)) {
        validate();
    }

    /// Duplicate entries are summed.
    static CsrMatrix from_triplets(std::size_t rows, std::size_t cols, std::vector<Triplet> entries) {
        for (const auto& t : entries) {
            if (t.row >= rows || t.col >= cols) {
                throw DimensionError("from_triplets: entry (" + std::to_string(t.row) + "," +
                                     std::to_string(t.col) + ") outside " + std::to_string(rows) +
                                     "x" + std::to_string(cols));
            }
        }
        std::stable_sort(entries.begin(), entries.end(), [](const Triplet& a, const Triplet& b) {
            return a.row != b.row ? a.row < b.row : a.col < b.col;
        });
        std::vector<std::size_t> offsets(rows + 1, 0);
        std::vector<std::size_t> cols_out;
        std::vector<double> vals;
        cols_out.reserve(entries.size());
        vals.reserve(entries.size());
        for (std::size_t n = 0; n < entries.size();) {
            const auto& t = entries[n];
            double sum = 0.0;
            std::size_t m = n;
            while (m < entries.size() && entries[m].row == t.row && entries[m].col == t.col) {
                sum += entries[m].value;
                ++m;
            }
            cols_out.push_back(t.col);
            vals.push_back(sum);
            ++offsets[t.row + 1];
            n = m;
        }
        std::partial_sum(offsets.begin(), offsets.end(), offsets.begin());
        return {rows, cols, std::move(offsets), std::move(cols_out), std::move(vals)};
    }

    static CsrMatrix from_dense(const DenseMatrix& a) {
        std::vector<Triplet> t;
        for (std::size_t i = 0; i < a.rows(); ++i) {
            for (std::size_t j = 0; j < a.cols(); ++j) {
                if (a(i, j) != 0.0) {
                    t.push_back({i, j, a(i, j)});
                }
            }
        }
        return from_triplets(a.rows(), a.cols(), std::move(t));
    }

    static CsrMatrix identity(std::size_t n) {
        std::vector<Triplet> t;
        for (std::size_t i = 0; i < n; ++i) {
            t.push_back({i, i, 1.0});
        }
        return from_triplets(n, n, std::move(t));
    }

    [[nodiscard]] DenseMatrix to_dense() const {
        DenseMatrix d(rows_, cols_);
        for (std::size_t i = 0; i < rows_; ++i) {
            for (std::size_t n = row_offsets_[i]; n < row_offsets_[i + 1]; ++n) {
                d(i, col_indices_[n]) = values_[n];
            }
        }
        return d;
    }

    [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
    [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
    [[nodiscard]] std::size_t nnz() const noexcept { return values_.size(); }
    [[nodiscard]] std::span<const std::size_t> row_offsets() const noexcept { return row_offsets_; }
    [[nodiscard]] std::span<const std::size_t> col_indices() const noexcept { return col_indices_; }
    [[nodiscard]] std::span<const double> values() const noexcept { return values_; }

    /// Stored value at (i, j), zero when not in the pattern.
    [[nodiscard]] double at(std::size_t i, std::size_t j) const {
        const auto first = col_indices_.begin() + static_cast<std::ptrdiff_t>(row_offsets_[i]);
        const auto last = col_indices_.begin() + static_cast<std::ptrdiff_t>(row_offsets_[i + 1]);
        const auto it = std::lower_bound(first, last, j);
        return (it != last && *it == j) ? values_[static_cast<std::size_t>(it - col_indices_.begin())]
                                        : 0.0;
    }

    /// Largest i - j and j - i over stored entries.
    [[nodiscard]] std::pair<std::size_t, std::size_t> bandwidths() const {
        std::size_t lower = 0;
        std::size_t upper = 0;
        for (std::size_t i = 0; i < rows_; ++i) {
            for (std::size_t n = row_offsets_[i]; n < row_offsets_[i + 1]; ++n) {
                const std::size_t j = col_indices_[n];
                if (j < i) {
                    lower = std::max(lower, i - j);
                } else {
                    upper = std::max(upper, j - i);
                }
            }
        }
        return {lower, upper};
    }

  private:
    void validate() const {
        if (row_offsets_.size() != rows_ + 1 || row_offsets_.front() != 0 ||
            row_offsets_.back() != values_.size() || col_indices_.size() != values_.size()) {
            throw DimensionError("CsrMatrix: inconsistent row offsets");
        }
        for (std::size_t i = 0; i < rows_; ++i) {
            if (row_offsets_[i] > row_offsets_[i + 1]) {
                throw DimensionError("CsrMatrix: row offsets decrease at row " + std::to_string(i));
            }
            for (std::size_t n = row_offsets_[i]; n < row_offsets_[i + 1]; ++n) {
                if (col_indices_[n] >= cols_ ||
                    (n > row_offsets_[i] && col_indices_[n] <= col_indices_[n - 1])) {
                    throw DimensionError("CsrMatrix: column indices of row " + std::to_string(i) +
                                         " not strictly increasing or out of range");
                }
            }
        }
    }

    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<std::size_t> row_offsets_;
    std::vector<std::size_t> col_indices_;
    std::vector<double> values_;
};

inline Vector csr_matvec(const CsrMatrix& a, std::span<const double> x) {
    if (a.cols() != x.size()) {
        throw DimensionError("csr_matvec: matrix has " + std::to_string(a.cols()) +
                             " columns, vector has " + std::to_string(x.size()) + " entries");
    }
    const auto offsets = a.row_offsets();
    const auto cols = a.col_indices();
    const auto vals = a.values();
    Vector y(a.rows(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double s = 0.0;
        for (std::size_t n = offsets[i]; n < offsets[i + 1]; ++n) {
            s += vals[n] * x[cols[n]];
        }
        y[i] = s;
    }
    return y;
}

/// alpha·a + beta·b over the union pattern.
inline CsrMatrix linear_combination(double alpha, const CsrMatrix& a, double beta, const CsrMatrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw DimensionError("linear_combination: shape mismatch");
    }
    std::vector<Triplet> t;
    t.reserve(a.nnz() + b.nnz());
    for (const auto& [m, s] : {std::pair{&a, alpha}, std::pair{&b, beta}}) {
        for (std::size_t i = 0; i < m->rows(); ++i) {
            for (std::size_t n = m->row_offsets()[i]; n < m->row_offsets()[i + 1]; ++n) {
                t.push_back({i, m->col_indices()[n], s * m->values()[n]});
            }
        }
    }
    return CsrMatrix::from_triplets(a.rows(), a.cols(), std::move(t));
}

/// a·B for CSR a and dense B.
inline DenseMatrix csr_matmul(const CsrMatrix& a, const DenseMatrix& b) {
    if (a.cols() != b.rows()) {
        throw DimensionError("csr_matmul: dimension mismatch");
    }
    DenseMatrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto ci = c.row(i);
        for (std::size_t n = a.row_offsets()[i]; n < a.row_offsets()[i + 1]; ++n) {
            axpy(a.values()[n], b.row(a.col_indices()[n]), ci);
        }
    }
    return c;
}

// ---------------------------------------------------------------------------
// Cholesky

/// Lower-triangular L with M = L·Lᵀ.
class CholeskyFactor {
  public:
    explicit CholeskyFactor(DenseMatrix lower) : lower_(std::move(lower)) {}

    [[nodiscard]] const DenseMatrix& lower() const noexcept { return lower_; }
    [[nodiscard]] std::size_t dim() const noexcept { return lower_.rows(); }

    /// Solves L·y = b.
    [[nodiscard]] Vector solve_lower(std::span<const double> b) const {
        check(b.size());
        Vector y(b.begin(), b.end());
        for (std::size_t i = 0; i < dim(); ++i) {
            const auto li = lower_.row(i);
            double s = y[i];
            for (std::size_t k = 0; k < i; ++k) {
                s -= li[k] * y[k];
            }
            y[i] = s / li[i];
        }
        return y;
    }

    /// Solves Lᵀ·x = y.
    [[nodiscard]] Vector solve_upper(std::span<const double> y) const {
        check(y.size());
        Vector x(y.begin(), y.end());
        for (std::size_t ii = dim(); ii-- > 0;) {
            x[ii] /= lower_(ii, ii);
            const double xi = x[ii];
            const auto li = lower_.row(ii);
            for (std::size_t k = 0; k < ii; ++k) {
                x[k] -= li[k] * xi;
            }
        }
        return x;
    }

    [[nodiscard]] Vector solve(std::span<const double> rhs) const { return solve_upper(solve_lower(rhs)); }

    /// Lᵀ·A, the weighting that turns M-inner products into Euclidean ones.
    [[nodiscard]] DenseMatrix apply_upper(const DenseMatrix& a) const {
        check(a.rows());
        return matmul_transposed_left(lower_, a);
    }

    /// L⁻ᵀ·U, column by column.
    [[nodiscard]] DenseMatrix solve_upper(const DenseMatrix& u) const {
        check(u.rows());
        DenseMatrix x(u.rows(), u.cols());
        for (std::size_t j = 0; j < u.cols(); ++j) {
            x.set_column(j, solve_upper(u.column(j)));
        }
        return x;
    }

  private:
    void check(std::size_t n) const {
        if (n != dim()) {
            throw DimensionError("CholeskyFactor: expected length " + std::to_string(dim()) + ", got " +
                                 std::to_string(n));
        }
    }

    DenseMatrix lower_;
};

inline CholeskyFactor cholesky(const DenseMatrix& m) {
    if (m.rows() != m.cols()) {
        throw DimensionError("cholesky: matrix is not square");
    }
    const std::size_t n = m.rows();
    const double scale = max_abs(m);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            if (std::abs(m(i, j) - m(j, i)) > 1e-12 * scale) {
                throw DomainError("cholesky: matrix is not symmetric at (" + std::to_string(i) + "," +
                                  std::to_string(j) + ")");
            }
        }
    }
    DenseMatrix l(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        const auto lj = l.row(j);
        double d = m(j, j);
        for (std::size_t k = 0; k < j; ++k) {
            d -= lj[k] * lj[k];
        }
        if (!(d > 0.0)) {
            throw NotPositiveDefinite(j, d);
        }
        const double ljj = std::sqrt(d);
        l(j, j) = ljj;
        for (std::size_t i = j + 1; i < n; ++i) {
            const auto li = l.row(i);
            double s = m(i, j);
            for (std::size_t k = 0; k < j; ++k) {
                s -= li[k] * lj[k];
            }
            l(i, j) = s / ljj;
        }
    }
    return CholeskyFactor(std::move(l));
}

inline Vector solve_spd(const CholeskyFactor& factor, std::span<const double> rhs) { return factor.solve(rhs); }

inline Vector solve_spd(const DenseMatrix& m, std::span<const double> rhs) {
    if (m.rows() != rhs.size()) {
        throw DimensionError("solve_spd: dimension mismatch");
    }
    return cholesky(m).solve(rhs);
}

// ---------------------------------------------------------------------------
// Dense LU with partial pivoting

class LuFactor {
  public:
    explicit LuFactor(DenseMatrix a) : lu_(std::move(a)), pivots_(lu_.rows()) {
        if (lu_.rows() != lu_.cols()) {
            throw DimensionError("lu: matrix is not square");
        }
        const std::size_t n = lu_.rows();
        const double tiny = static_cast<double>(std::max<std::size_t>(n, 1)) * 2.220446049250313e-16 *
                            max_abs(lu_);
        for (std::size_t k = 0; k < n; ++k) {
            std::size_t p = k;
            for (std::size_t i = k + 1; i < n; ++i) {
                if (std::abs(lu_(i, k)) > std::abs(lu_(p, k))) {
                    p = i;
                }
            }
            if (!(std::abs(lu_(p, k)) > tiny)) {
                throw SingularMatrix("lu: matrix is singular to working precision at column " +
                                     std::to_string(k));
            }
            pivots_[k] = p;
            if (p != k) {
                std::swap_ranges(lu_.row(k).begin(), lu_.row(k).end(), lu_.row(p).begin());
            }
            const double inv = 1.0 / lu_(k, k);
            const auto uk = lu_.row(k).subspan(k + 1);
            for (std::size_t i = k + 1; i < n; ++i) {
                const double lik = lu_(i, k) * inv;
                lu_(i, k) = lik;
                if (lik != 0.0) {
                    axpy(-lik, uk, lu_.row(i).subspan(k + 1));
                }
            }
        }
    }

    [[nodiscard]] std::size_t dim() const noexcept { return lu_.rows(); }

    [[nodiscard]] Vector solve(std::span<const double> rhs) const {
        if (rhs.size() != dim()) {
            throw DimensionError("lu solve: expected length " + std::to_string(dim()) + ", got " +
                                 std::to_string(rhs.size()));
        }
        const std::size_t n = dim();
        Vector x(rhs.begin(), rhs.end());
        for (std::size_t k = 0; k < n; ++k) {
            std::swap(x[k], x[pivots_[k]]);
        }
        for (std::size_t i = 0; i < n; ++i) {
            const auto li = lu_.row(i);
            double s = x[i];
            for (std::size_t k = 0; k < i; ++k) {
                s -= li[k] * x[k];
            }
            x[i] = s;
        }
        for (std::size_t ii = n; ii-- > 0;) {
            const auto ui = lu_.row(ii);
            double s = x[ii];
            for (std::size_t k = ii + 1; k < n; ++k) {
                s -= ui[k] * x[k];
            }
            x[ii] = s / ui[ii];
        }
        return x;
    }

  private:
    DenseMatrix lu_;
    std::vector<std::size_t> pivots_;
};

inline Vector lu_solve(const DenseMatrix& a, std::span<const double> rhs) {
    if (a.rows() != rhs.size()) {
        throw DimensionError("lu_solve: dimension mismatch");
    }
    return LuFactor(a).solve(rhs);
}

// ---------------------------------------------------------------------------
// Banded LU (LAPACK gbtrf layout) for the full-order system matrices.

class BandedLu {
  public:
    explicit BandedLu(const CsrMatrix& a) : n_(a.rows()) {
        if (a.rows() != a.cols()) {
            throw DimensionError("banded lu: matrix is not square");
        }
        std::tie(kl_, ku_) = a.bandwidths();
        ld_ = 2 * kl_ + ku_ + 1;
        band_.assign(ld_ * n_, 0.0);
        pivots_.assign(n_, 0);
        double scale = 0.0;
        for (std::size_t i = 0; i < n_; ++i) {
            for (std::size_t k = a.row_offsets()[i]; k < a.row_offsets()[i + 1]; ++k) {
                at(i, a.col_indices()[k]) = a.values()[k];
                scale = std::max(scale, std::abs(a.values()[k]));
            }
        }
        const double tiny = static_cast<double>(std::max<std::size_t>(n_, 1)) * 2.220446049250313e-16 * scale;
        const std::size_t kv = ku_ + kl_;
        for (std::size_t j = 0; j < n_; ++j) {
            const std::size_t last_row = std::min(n_ - 1, j + kl_);
            std::size_t p = j;
            for (std::size_t i = j + 1; i <= last_row; ++i) {
                if (std::abs(at(i, j)) > std::abs(at(p, j))) {
                    p = i;
                }
            }
            if (!(std::abs(at(p, j)) > tiny)) {
                throw SingularMatrix("banded lu: singular pivot at column " + std::to_string(j));
            }
            pivots_[j] = p;
            const std::size_t last_col = std::min(n_ - 1, j + kv);
            if (p != j) {
                for (std::size_t c = j; c <= last_col; ++c) {
                    std::swap(at(j, c), at(p, c));
                }
            }
            const double inv = 1.0 / at(j, j);
            for (std::size_t i = j + 1; i <= last_row; ++i) {
                const double lij = at(i, j) * inv;
                at(i, j) = lij;
                if (lij != 0.0) {
                    for (std::size_t c = j + 1; c <= last_col; ++c) {
                        at(i, c) -= lij * at(j, c);
                    }
                }
            }
        }
    }

    [[nodiscard]] std::size_t dim() const noexcept { return n_; }

    [[nodiscard]] Vector solve(std::span<const double> rhs) const {
        if (rhs.size() != n_) {
            throw DimensionError("banded lu solve: expected length " + std::to_string(n_) + ", got " +
                                 std::to_string(rhs.size()));
        }
        Vector x(rhs.begin(), rhs.end());
        for (std::size_t j = 0; j < n_; ++j) {
            std::swap(x[j], x[pivots_[j]]);
            const double xj = x[j];
            const std::size_t last_row = std::min(n_ - 1, j + kl_);
            for (std::size_t i = j + 1; i <= last_row; ++i) {
                x[i] -= at(i, j) * xj;
            }
        }
        const std::size_t kv = ku_ + kl_;
        for (std::size_t jj = n_; jj-- > 0;) {
            x[jj] /= at(jj, jj);
            const double xj = x[jj];
            const std::size_t first_row = jj > kv ? jj - kv : 0;
            for (std::size_t i = first_row; i < jj; ++i) {
                x[i] -= at(i, jj) * xj;
            }
        }
        return x;
    }

  private:
    // Entry (i, j) lives in column j at band row kl + ku + i - j.
    double& at(std::size_t i, std::size_t j) { return band_[j * ld_ + kl_ + ku_ + i - j]; }
    [[nodiscard]] double at(std::size_t i, std::size_t j) const { return band_[j * ld_ + kl_ + ku_ + i - j]; }

    std::size_t n_ = 0;
    std::size_t kl_ = 0;
    std::size_t ku_ = 0;
    std::size_t ld_ = 1;
    std::vector<double> band_;
    std::vector<std::size_t> pivots_;
};

// ---------------------------------------------------------------------------
// Thin SVD

struct SvdResult {
    DenseMatrix u;     ///< rows × k, orthonormal columns
    Vector sigma;      ///< k values, descending
    DenseMatrix vt;    ///< k × cols
};

namespace detail {

/// One-sided (Hestenes) Jacobi on a tall matrix stored column-major.
/// Columns are rotated until pairwise orthogonal; their norms are the
/// singular values and the accumulated rotations form V.
inline SvdResult jacobi_svd_tall(const DenseMatrix& a) {
    constexpr int max_sweeps = 30;
    constexpr double tolerance = 1e-12;
    const std::size_t m = a.rows();
    const std::size_t n = a.cols();

    std::vector<double> cols(m * n);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            cols[j * m + i] = a(i, j);
        }
    }
    std::vector<double> v(n * n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        v[j * n + j] = 1.0;
    }
    auto col = [&](std::size_t j) { return std::span<double>(cols.data() + j * m, m); };
    auto vcol = [&](std::size_t j) { return std::span<double>(v.data() + j * n, n); };

    double frob2 = 0.0;
    for (double x : cols) {
        frob2 += x * x;
    }
    std::vector<double> norms2(n);
    bool converged = frob2 == 0.0;
    double worst = 0.0;
    for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
        double largest = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            norms2[j] = dot(col(j), col(j));
            largest = std::max(largest, norms2[j]);
        }
        // A column this small ends below the 1e-14 relative zero floor, and
        // rotating round-off columns against each other never settles.
        const double negligible = largest * 1e-30;
        bool rotated = false;
        worst = 0.0;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double alpha = norms2[p];
                const double beta = norms2[q];
                if (alpha <= negligible || beta <= negligible) {
                    continue;
                }
                const auto cp = col(p);
                const auto cq = col(q);
                double gamma = 0.0;
                for (std::size_t i = 0; i < m; ++i) {
                    gamma += cp[i] * cq[i];
                }
                const double rel = std::abs(gamma) / std::sqrt(alpha * beta);
                worst = std::max(worst, rel);
                if (rel <= tolerance) {
                    continue;
                }
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < m; ++i) {
                    const double xp = cp[i];
                    const double xq = cq[i];
                    cp[i] = c * xp - s * xq;
                    cq[i] = s * xp + c * xq;
                }
                const auto vp = vcol(p);
                const auto vq = vcol(q);
                for (std::size_t i = 0; i < n; ++i) {
                    const double xp = vp[i];
                    const double xq = vq[i];
                    vp[i] = c * xp - s * xq;
                    vq[i] = s * xp + c * xq;
                }
                // Recomputed rather than updated: the update formula loses
                // all accuracy for columns that shrink to round-off level.
                norms2[p] = dot(cp, cp);
                norms2[q] = dot(cq, cq);
            }
        }
        converged = !rotated;
    }
    if (!converged) {
        throw ConvergenceError("thin_svd: one-sided Jacobi did not converge in " +
                                   std::to_string(max_sweeps) + " sweeps (largest relative off-diagonal " +
                                   std::to_string(worst) + ")",
                               worst);
    }

    Vector sigma(n);
    for (std::size_t j = 0; j < n; ++j) {
        sigma[j] = norm2(col(j));
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

    SvdResult r{DenseMatrix(m, n), Vector(n), DenseMatrix(n, n)};
    const double floor = n > 0 ? 1e-14 * sigma[order[0]] : 0.0;
    std::vector<std::size_t> zero_columns;
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t j = order[k];
        const double s = sigma[j] > floor ? sigma[j] : 0.0;
        r.sigma[k] = s;
        if (s > 0.0) {
            for (std::size_t i = 0; i < m; ++i) {
                r.u(i, k) = cols[j * m + i] / sigma[j];
            }
        } else {
            zero_columns.push_back(k);
        }
        for (std::size_t i = 0; i < n; ++i) {
            r.vt(k, i) = v[j * n + i];
        }
    }
    // Complete U with unit vectors orthogonal to the columns already set.
    std::vector<bool> filled(n);
    for (std::size_t k = 0; k < n; ++k) {
        filled[k] = r.sigma[k] > 0.0;
    }
    std::size_t candidate = 0;
    for (std::size_t k : zero_columns) {
        for (; candidate < m; ++candidate) {
            Vector e(m, 0.0);
            e[candidate] = 1.0;
            for (int pass = 0; pass < 2; ++pass) {
                for (std::size_t c = 0; c < n; ++c) {
                    if (filled[c]) {
                        const Vector uc = r.u.column(c);
                        axpy(-dot(uc, e), uc, e);
                    }
                }
            }
            const double len = norm2(e);
            if (len > 1e-6) {
                for (double& x : e) {
                    x /= len;
                }
                r.u.set_column(k, e);
                filled[k] = true;
                ++candidate;
                break;
            }
        }
    }
    return r;
}

} // namespace detail

/// Thin SVD A = U·diag(σ)·Vt with k = min(rows, cols). Singular values
/// below 1e-14·σ₀ are reported as exact zeros.
inline SvdResult thin_svd(const DenseMatrix& a) {
    if (a.rows() == 0 || a.cols() == 0) {
        throw DimensionError("thin_svd: empty matrix");
    }
    if (a.rows() >= a.cols()) {
        return detail::jacobi_svd_tall(a);
    }
    // Aᵀ = U'ΣV'ᵀ  ⇒  A = V'ΣU'ᵀ
    SvdResult t = detail::jacobi_svd_tall(a.transposed());
    return {t.vt.transposed(), std::move(t.sigma), t.u.transposed()};
}

} // namespace linalg
} // namespace rbrom
