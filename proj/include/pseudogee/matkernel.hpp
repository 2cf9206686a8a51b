#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace pgee {

using Vector = std::vector<double>;

/// Dense row-major matrix. Small by construction (m, p up to a few dozen).
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix identity(std::size_t dim);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<const double> row(std::size_t r) const {
        return {data_.data() + r * cols_, cols_};
    }
    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }

    const std::vector<double>& data() const noexcept { return data_; }

    Matrix transpose() const;

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix operator*(const Matrix& a, const Matrix& b);
Vector operator*(const Matrix& a, std::span<const double> x);
Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(double c, const Matrix& a);

double max_abs(const Matrix& a);
double max_abs_diff(const Matrix& a, const Matrix& b);
double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);

/// Square matrix held exactly symmetric. Construction from an arbitrary square
/// matrix averages it with its transpose.
class SymMatrix {
public:
    SymMatrix() = default;
    explicit SymMatrix(std::size_t dim, double fill = 0.0);
    explicit SymMatrix(const Matrix& m);
    SymMatrix(std::initializer_list<std::initializer_list<double>> rows)
        : SymMatrix(Matrix(rows)) {}

    static SymMatrix identity(std::size_t dim);
    static SymMatrix diagonal(std::span<const double> d);

    std::size_t dim() const noexcept { return m_.rows(); }
    double operator()(std::size_t r, std::size_t c) const { return m_(r, c); }

    /// Writes both (r, c) and (c, r).
    void set(std::size_t r, std::size_t c, double v) {
        m_(r, c) = v;
        m_(c, r) = v;
    }
    void add(std::size_t r, std::size_t c, double v);

    const Matrix& matrix() const noexcept { return m_; }
    double trace() const;
    bool finite() const;

    friend bool operator==(const SymMatrix&, const SymMatrix&) = default;

private:
    Matrix m_;
};

SymMatrix operator+(const SymMatrix& a, const SymMatrix& b);
SymMatrix operator-(const SymMatrix& a, const SymMatrix& b);
SymMatrix operator*(double c, const SymMatrix& a);
Vector operator*(const SymMatrix& a, std::span<const double> x);

/// B A Bᵀ for symmetric A, returned symmetric.
SymMatrix congruence(const Matrix& b, const SymMatrix& a);

struct EigenDecomposition {
    Vector values;   // nondecreasing
    Matrix vectors;  // column k pairs with values[k]
};

/// Cyclic Jacobi. Throws invalid-input on non-finite entries.
EigenDecomposition sym_eigen(const SymMatrix& s);

/// Relative positive-definiteness floor: 1e-12 * max(1, trace/dim).
double pd_tolerance(const SymMatrix& s);

struct SqrtPair {
    SymMatrix root;
    SymMatrix inv_root;
};

SqrtPair sym_sqrt_pair(const SymMatrix& s);

/// Inverse of an SPD matrix through its eigendecomposition.
SymMatrix sym_inverse(const SymMatrix& s);

/// Cholesky solve. Throws NotPositiveDefinite (with λ_min) when S fails the
/// pd_tolerance floor.
Vector solve_spd(const SymMatrix& s, std::span<const double> b);

/// Lower-triangular L with L Lᵀ = S.
Matrix cholesky_lower(const SymMatrix& s);

struct MatrixStats {
    double spectral_norm = 0.0;
    double det = 0.0;
    double trace = 0.0;
    double lambda_min = 0.0;
    double lambda_max = 0.0;
};

MatrixStats matrix_stats(const SymMatrix& s);

}  // namespace pgee
