#include "pseudogee/matkernel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "pseudogee/error.hpp"

namespace pgee {

// -------------------------------------------------------------------------
// Matrix
// -------------------------------------------------------------------------

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) {
            throw Error(ErrorKind::shape, "ragged matrix initializer");
        }
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

Matrix Matrix::identity(std::size_t dim) {
    Matrix m(dim, dim);
    for (std::size_t k = 0; k < dim; ++k) m(k, k) = 1.0;
    return m;
}

Matrix Matrix::transpose() const {
    Matrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
        for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
}

Matrix operator*(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw Error(ErrorKind::shape, "matrix product dimension mismatch");
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

Vector operator*(const Matrix& a, std::span<const double> x) {
    if (a.cols() != x.size()) throw Error(ErrorKind::shape, "matrix-vector dimension mismatch");
    Vector out(a.rows(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) out[i] = dot(a.row(i), x);
    return out;
}

Matrix operator+(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw Error(ErrorKind::shape, "matrix sum dimension mismatch");
    Matrix out = a;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) += b(i, j);
    return out;
}

Matrix operator-(const Matrix& a, const Matrix& b) { return a + (-1.0) * b; }

Matrix operator*(double c, const Matrix& a) {
    Matrix out = a;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) *= c;
    return out;
}

double max_abs(const Matrix& a) {
    double best = 0.0;
    for (double v : a.data()) best = std::max(best, std::abs(v));
    return best;
}

double max_abs_diff(const Matrix& a, const Matrix& b) { return max_abs(a - b); }

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
    return s;
}

double norm2(std::span<const double> a) {
    // scaled so that huge entries do not overflow the sum of squares
    double scale = 0.0;
    for (double v : a) scale = std::max(scale, std::abs(v));
    if (scale == 0.0 || !std::isfinite(scale)) return scale;
    double s = 0.0;
    for (double v : a) s += (v / scale) * (v / scale);
    return scale * std::sqrt(s);
}

// -------------------------------------------------------------------------
// SymMatrix
// -------------------------------------------------------------------------

SymMatrix::SymMatrix(std::size_t dim, double fill) : m_(dim, dim, fill) {}

SymMatrix::SymMatrix(const Matrix& m) : m_(m) {
    if (m.rows() != m.cols()) throw Error(ErrorKind::shape, "symmetric matrix must be square");
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = r + 1; c < m.cols(); ++c) {
            const double avg = 0.5 * (m(r, c) + m(c, r));
            m_(r, c) = avg;
            m_(c, r) = avg;
        }
    }
}

SymMatrix SymMatrix::identity(std::size_t dim) { return SymMatrix(Matrix::identity(dim)); }

SymMatrix SymMatrix::diagonal(std::span<const double> d) {
    SymMatrix s(d.size());
    for (std::size_t k = 0; k < d.size(); ++k) s.m_(k, k) = d[k];
    return s;
}

void SymMatrix::add(std::size_t r, std::size_t c, double v) {
    m_(r, c) += v;
    if (r != c) m_(c, r) += v;
}

double SymMatrix::trace() const {
    double t = 0.0;
    for (std::size_t k = 0; k < dim(); ++k) t += m_(k, k);
    return t;
}

bool SymMatrix::finite() const {
    return std::all_of(m_.data().begin(), m_.data().end(),
                       [](double v) { return std::isfinite(v); });
}

SymMatrix operator+(const SymMatrix& a, const SymMatrix& b) {
    return SymMatrix(a.matrix() + b.matrix());
}

SymMatrix operator-(const SymMatrix& a, const SymMatrix& b) {
    return SymMatrix(a.matrix() - b.matrix());
}

SymMatrix operator*(double c, const SymMatrix& a) { return SymMatrix(c * a.matrix()); }

Vector operator*(const SymMatrix& a, std::span<const double> x) { return a.matrix() * x; }

SymMatrix congruence(const Matrix& b, const SymMatrix& a) {
    return SymMatrix(b * a.matrix() * b.transpose());
}

// -------------------------------------------------------------------------
// Eigendecomposition (cyclic Jacobi)
// -------------------------------------------------------------------------

namespace {

constexpr int kMaxSweeps = 100;

void require_finite(const SymMatrix& s, const char* what) {
    if (!s.finite()) {
        throw Error(ErrorKind::invalid_input, std::string(what) + ": non-finite matrix entry");
    }
}

double off_diagonal_frobenius(const Matrix& a) {
    double s = 0.0;
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = 0; c < a.cols(); ++c)
            if (r != c) s += a(r, c) * a(r, c);
    return std::sqrt(s);
}

double frobenius(const Matrix& a) {
    double s = 0.0;
    for (double v : a.data()) s += v * v;
    return std::sqrt(s);
}

}  // namespace

EigenDecomposition sym_eigen(const SymMatrix& s) {
    require_finite(s, "sym_eigen");
    if (s.dim() == 0) throw Error(ErrorKind::invalid_input, "sym_eigen: empty matrix");
    const std::size_t n = s.dim();
    Matrix a = s.matrix();
    Matrix v = Matrix::identity(n);

    const double threshold = 1e-14 * frobenius(a);
    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        if (off_diagonal_frobenius(a) <= threshold) break;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double app = a(p, p);
                const double aqq = a(q, q);
                // Rotation angle zeroing a(p, q); t is the smaller root of
                // t^2 + 2 t theta - 1 = 0.
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = std::copysign(1.0, theta) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double sn = t * c;

                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = c * akp - sn * akq;
                    a(k, q) = sn * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k) = c * apk - sn * aqk;
                    a(q, k) = sn * apk + c * aqk;
                }
                a(p, q) = 0.0;
                a(q, p) = 0.0;
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p);
                    const double vkq = v(k, q);
                    v(k, p) = c * vkp - sn * vkq;
                    v(k, q) = sn * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return a(x, x) < a(y, y); });

    EigenDecomposition out{Vector(n), Matrix(n, n)};
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t src = order[k];
        out.values[k] = a(src, src);
        // Sign convention: largest-magnitude component positive (first wins ties).
        std::size_t lead = 0;
        for (std::size_t r = 1; r < n; ++r)
            if (std::abs(v(r, src)) > std::abs(v(lead, src))) lead = r;
        const double sign = v(lead, src) < 0.0 ? -1.0 : 1.0;
        for (std::size_t r = 0; r < n; ++r) out.vectors(r, k) = sign * v(r, src);
    }
    return out;
}

double pd_tolerance(const SymMatrix& s) {
    const double scale = s.dim() == 0 ? 1.0 : s.trace() / static_cast<double>(s.dim());
    return 1e-12 * std::max(1.0, scale);
}

namespace {

SymMatrix spectral_function(const EigenDecomposition& eig, double (*f)(double)) {
    const std::size_t n = eig.values.size();
    Matrix out(n, n);
    for (std::size_t k = 0; k < n; ++k) {
        const double fk = f(eig.values[k]);
        for (std::size_t r = 0; r < n; ++r) {
            const double vr = eig.vectors(r, k) * fk;
            if (vr == 0.0) continue;
            for (std::size_t c = 0; c < n; ++c) out(r, c) += vr * eig.vectors(c, k);
        }
    }
    return SymMatrix(out);
}

EigenDecomposition checked_spd_eigen(const SymMatrix& s, const char* what) {
    EigenDecomposition eig = sym_eigen(s);
    const double lmin = eig.values.empty() ? 0.0 : eig.values.front();
    if (!(lmin > pd_tolerance(s))) {
        std::ostringstream msg;
        msg << what << ": matrix is not positive definite (lambda_min = " << lmin << ")";
        throw NotPositiveDefinite(lmin, msg.str());
    }
    return eig;
}

}  // namespace

SqrtPair sym_sqrt_pair(const SymMatrix& s) {
    const EigenDecomposition eig = checked_spd_eigen(s, "sym_sqrt_pair");
    return {spectral_function(eig, [](double x) { return std::sqrt(x); }),
            spectral_function(eig, [](double x) { return 1.0 / std::sqrt(x); })};
}

SymMatrix sym_inverse(const SymMatrix& s) {
    const EigenDecomposition eig = checked_spd_eigen(s, "sym_inverse");
    return spectral_function(eig, [](double x) { return 1.0 / x; });
}

Matrix cholesky_lower(const SymMatrix& s) {
    require_finite(s, "cholesky");
    const std::size_t n = s.dim();
    const double tol = pd_tolerance(s);
    Matrix l(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double d = s(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
        if (!(d > tol)) {
            // Pivot failure: report the actual smallest eigenvalue.
            const double lmin = sym_eigen(s).values.front();
            std::ostringstream msg;
            msg << "cholesky: matrix is not positive definite (lambda_min = " << lmin << ")";
            throw NotPositiveDefinite(lmin, msg.str());
        }
        l(j, j) = std::sqrt(d);
        for (std::size_t i = j + 1; i < n; ++i) {
            double v = s(i, j);
            for (std::size_t k = 0; k < j; ++k) v -= l(i, k) * l(j, k);
            l(i, j) = v / l(j, j);
        }
    }
    return l;
}

Vector solve_spd(const SymMatrix& s, std::span<const double> b) {
    if (b.size() != s.dim()) throw Error(ErrorKind::shape, "solve_spd: rhs dimension mismatch");
    const Matrix l = cholesky_lower(s);
    const std::size_t n = s.dim();
    Vector x(b.begin(), b.end());
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < i; ++k) x[i] -= l(i, k) * x[k];
        x[i] /= l(i, i);
    }
    for (std::size_t i = n; i-- > 0;) {
        for (std::size_t k = i + 1; k < n; ++k) x[i] -= l(k, i) * x[k];
        x[i] /= l(i, i);
    }
    return x;
}

MatrixStats matrix_stats(const SymMatrix& s) {
    const EigenDecomposition eig = sym_eigen(s);
    MatrixStats st;
    st.lambda_min = eig.values.front();
    st.lambda_max = eig.values.back();
    st.spectral_norm = std::max(std::abs(st.lambda_min), std::abs(st.lambda_max));
    st.det = 1.0;
    for (double v : eig.values) st.det *= v;
    st.trace = s.trace();
    return st;
}

}  // namespace pgee
