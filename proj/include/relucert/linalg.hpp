#pragma once

// Dense row-major matrices and the handful of kernels the rest of the
// library needs: products, norms, extremal singular values and eigenvalues.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace relucert {

/// Thrown when an input violates an operation's preconditions.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Thrown by iterative kernels that exhaust their iteration budget.
/// Carries the best estimate reached so callers can still report it.
class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& what, double best_estimate)
        : std::runtime_error(what), best_estimate_(best_estimate) {}
    double best_estimate() const noexcept { return best_estimate_; }

private:
    double best_estimate_;
};

class Matrix {
public:
    Matrix() = default;

    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {
        if (!std::isfinite(fill)) throw InvalidArgument("Matrix: non-finite fill value");
    }

    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_)
            throw InvalidArgument("Matrix: entry count " + std::to_string(data_.size()) +
                                  " does not match " + std::to_string(rows_) + "x" +
                                  std::to_string(cols_));
        for (double v : data_)
            if (!std::isfinite(v)) throw InvalidArgument("Matrix: non-finite entry");
    }

    /// Nested-list construction, mostly for tests: Matrix{{1, 2}, {3, 4}}.
    Matrix(std::initializer_list<std::initializer_list<double>> rows) {
        rows_ = rows.size();
        cols_ = rows_ ? rows.begin()->size() : 0;
        data_.reserve(rows_ * cols_);
        for (const auto& r : rows) {
            if (r.size() != cols_) throw InvalidArgument("Matrix: ragged initializer");
            for (double v : r) {
                if (!std::isfinite(v)) throw InvalidArgument("Matrix: non-finite entry");
                data_.push_back(v);
            }
        }
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }
    std::span<const double> row(std::size_t i) const {
        return std::span<const double>(data_).subspan(i * cols_, cols_);
    }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    bool same_shape(const Matrix& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline std::string shape_str(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows())
        throw InvalidArgument("matmul: dimension mismatch " + shape_str(a) + " * " + shape_str(b));
    Matrix c(a.rows(), b.cols());
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = a(i, p);
            if (aip == 0.0) continue;
            for (std::size_t j = 0; j < m; ++j) c(i, j) += aip * b(p, j);
        }
    }
    return c;
}

inline Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

/// aᵀb without materializing the transpose.
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows())
        throw InvalidArgument("matmul_tn: dimension mismatch " + shape_str(a) + "^T * " +
                              shape_str(b));
    Matrix c(a.cols(), b.cols());
    for (std::size_t p = 0; p < a.rows(); ++p) {
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double api = a(p, i);
            if (api == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += api * b(p, j);
        }
    }
    return c;
}

/// abᵀ without materializing the transpose.
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols())
        throw InvalidArgument("matmul_nt: dimension mismatch " + shape_str(a) + " * " +
                              shape_str(b) + "^T");
    Matrix c(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const auto ai = a.row(i);
        for (std::size_t j = 0; j < b.rows(); ++j) {
            const auto bj = b.row(j);
            double s = 0.0;
            for (std::size_t p = 0; p < a.cols(); ++p) s += ai[p] * bj[p];
            c(i, j) = s;
        }
    }
    return c;
}

inline Matrix operator+(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw InvalidArgument("add: shape mismatch " + shape_str(a) + " + " + shape_str(b));
    Matrix c = a;
    auto cv = c.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < cv.size(); ++i) cv[i] += bv[i];
    return c;
}

inline Matrix operator-(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw InvalidArgument("sub: shape mismatch " + shape_str(a) + " - " + shape_str(b));
    Matrix c = a;
    auto cv = c.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < cv.size(); ++i) cv[i] -= bv[i];
    return c;
}

inline Matrix operator*(double s, const Matrix& a) {
    Matrix c = a;
    for (double& v : c.values()) v *= s;
    return c;
}

/// Frobenius inner product tr(a bᵀ).
inline double frobenius_dot(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw InvalidArgument("frobenius_dot: shape mismatch");
    double s = 0.0;
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < av.size(); ++i) s += av[i] * bv[i];
    return s;
}

inline double frobenius_norm(const Matrix& a) {
    // Scaled accumulation: avoids overflow for huge entries.
    double scale = 0.0;
    for (double v : a.values()) scale = std::max(scale, std::abs(v));
    if (scale == 0.0) return 0.0;
    double s = 0.0;
    for (double v : a.values()) {
        const double r = v / scale;
        s += r * r;
    }
    return scale * std::sqrt(s);
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw InvalidArgument("max_abs_diff: shape mismatch");
    double m = 0.0;
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < av.size(); ++i) m = std::max(m, std::abs(av[i] - bv[i]));
    return m;
}

/// Gram of the rows, a·aᵀ.
inline Matrix row_gram(const Matrix& a) { return matmul_nt(a, a); }

/// Gram of the columns, aᵀ·a.
inline Matrix col_gram(const Matrix& a) { return matmul_tn(a, a); }

// ---------------------------------------------------------------------------
// Symmetric eigenvalues (cyclic Jacobi)
// ---------------------------------------------------------------------------

struct JacobiOptions {
    int max_sweeps = 50;
    double off_tol = 1e-12;  // relative to ‖s‖_F
};

/// Eigenvalues of a symmetric matrix in ascending order.  The input is
/// symmetrized by averaging with its transpose; callers are responsible for
/// checking how far from symmetric it was.
inline std::vector<double> jacobi_eigenvalues(const Matrix& s, JacobiOptions opt = {}) {
    if (s.rows() != s.cols()) throw InvalidArgument("jacobi_eigenvalues: matrix not square " + shape_str(s));
    const std::size_t n = s.rows();
    Matrix a(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) a(i, j) = 0.5 * (s(i, j) + s(j, i));

    const double norm = frobenius_norm(a);
    auto off_mass = [&] {
        double off = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) off += 2.0 * a(i, j) * a(i, j);
        return std::sqrt(off);
    };

    bool converged = norm == 0.0 || off_mass() <= opt.off_tol * norm;
    for (int sweep = 0; sweep < opt.max_sweeps && !converged; ++sweep) {
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double sn = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - sn * akq;
                    a(k, q) = sn * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - sn * aqk;
                    a(q, k) = sn * apk + c * aqk;
                }
            }
        }
        converged = off_mass() <= opt.off_tol * norm;
    }

    std::vector<double> eig(n);
    for (std::size_t i = 0; i < n; ++i) eig[i] = a(i, i);
    std::sort(eig.begin(), eig.end());
    if (!converged)
        throw ConvergenceError("jacobi_eigenvalues: no convergence within " +
                                   std::to_string(opt.max_sweeps) + " sweeps",
                               eig.empty() ? 0.0 : eig.front());
    return eig;
}

inline double symmetry_defect(const Matrix& s) {
    double d = 0.0;
    for (std::size_t i = 0; i < s.rows(); ++i)
        for (std::size_t j = i + 1; j < s.cols(); ++j) d = std::max(d, std::abs(s(i, j) - s(j, i)));
    return d;
}

/// Minimum eigenvalue of a symmetric matrix.  Asymmetry is judged entrywise
/// against 1e-10·max(1, ‖s‖_F).
inline double sym_eig_min(const Matrix& s) {
    if (s.rows() != s.cols()) throw InvalidArgument("sym_eig_min: matrix not square " + shape_str(s));
    if (s.empty()) throw InvalidArgument("sym_eig_min: empty matrix");
    const double tol = 1e-10 * std::max(1.0, frobenius_norm(s));
    if (symmetry_defect(s) > tol) throw InvalidArgument("sym_eig_min: matrix is not symmetric");
    return jacobi_eigenvalues(s).front();
}

/// σ_min of a fat or square matrix via the rows×rows Gram.
inline double smallest_singular_value(const Matrix& a) {
    if (a.rows() > a.cols())
        throw InvalidArgument("smallest_singular_value: rows > cols (" + shape_str(a) + ")");
    if (a.empty()) throw InvalidArgument("smallest_singular_value: empty matrix");
    const double lmin = jacobi_eigenvalues(row_gram(a)).front();
    return std::sqrt(std::max(lmin, 0.0));
}

// ---------------------------------------------------------------------------
// Spectral norm (power iteration)
// ---------------------------------------------------------------------------

struct PowerResult {
    double value = 0.0;
    int iterations = 0;
    bool converged = false;
    bool restarted = false;
};

namespace detail {

inline double norm2(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

inline void sym_matvec(const Matrix& g, std::span<const double> v, std::span<double> out) {
    for (std::size_t i = 0; i < g.rows(); ++i) {
        const auto gi = g.row(i);
        double s = 0.0;
        for (std::size_t j = 0; j < gi.size(); ++j) s += gi[j] * v[j];
        out[i] = s;
    }
}

// Power iteration on a PSD Gram matrix from a given start vector.  Stops when
// the eigen-residual ‖Gv − ρv‖ falls below tol·ρ.
inline PowerResult gram_power(const Matrix& g, std::vector<double> v, double tol, int max_iter) {
    const std::size_t n = g.rows();
    std::vector<double> w(n);
    PowerResult r;
    double nv = norm2(v);
    for (double& x : v) x /= nv;
    double rho = 0.0;
    for (int it = 1; it <= max_iter; ++it) {
        sym_matvec(g, v, w);
        rho = 0.0;
        for (std::size_t i = 0; i < n; ++i) rho += v[i] * w[i];
        r.iterations = it;
        r.value = std::sqrt(std::max(rho, 0.0));
        double res = 0.0;
        for (std::size_t i = 0; i < n; ++i) res += (w[i] - rho * v[i]) * (w[i] - rho * v[i]);
        res = std::sqrt(res);
        const double nw = norm2(w);
        if (nw == 0.0) {
            // Start vector in the null space.
            r.converged = false;
            return r;
        }
        if (res <= tol * rho) {
            r.converged = true;
            return r;
        }
        for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / nw;
    }
    return r;
}

}  // namespace detail

/// Largest singular value by power iteration on the smaller of aᵀa / aaᵀ,
/// started from the normalized all-ones vector.  If that start stagnates
/// (lands in the null space or fails to converge) the iteration is restarted
/// once from a fixed-seed Gaussian vector.  Never throws on non-convergence;
/// inspect `converged`.
inline PowerResult spectral_norm_estimate(const Matrix& a, double tol = 1e-10, int max_iter = 100000) {
    if (!(tol > 0.0)) throw InvalidArgument("spectral_norm: tol must be positive");
    if (a.empty()) return PowerResult{0.0, 0, true, false};
    if (frobenius_norm(a) == 0.0) return PowerResult{0.0, 0, true, false};
    const Matrix g = a.rows() < a.cols() ? row_gram(a) : col_gram(a);
    const std::size_t n = g.rows();

    PowerResult r = detail::gram_power(g, std::vector<double>(n, 1.0), tol, max_iter);
    if (r.converged) return r;

    std::mt19937_64 gen(0x5eed5eedULL);
    std::normal_distribution<double> nd;
    std::vector<double> v(n);
    for (double& x : v) x = nd(gen);
    PowerResult second = detail::gram_power(g, std::move(v), tol, max_iter);
    second.restarted = true;
    second.iterations += r.iterations;
    if (!second.converged && r.value > second.value) second.value = r.value;
    return second;
}

/// Largest singular value; throws ConvergenceError (with the best estimate)
/// when power iteration does not reach `tol` within `max_iter` steps.
inline double spectral_norm(const Matrix& a, double tol = 1e-10, int max_iter = 100000) {
    const PowerResult r = spectral_norm_estimate(a, tol, max_iter);
    if (!r.converged)
        throw ConvergenceError("spectral_norm: power iteration did not converge in " +
                                   std::to_string(r.iterations) + " iterations",
                               r.value);
    return r.value;
}

}  // namespace relucert
