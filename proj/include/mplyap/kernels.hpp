#ifndef MPLYAP_KERNELS_HPP
#define MPLYAP_KERNELS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "mplyap/error.hpp"
#include "mplyap/matrix.hpp"
#include "mplyap/precision.hpp"

namespace mplyap {

/// The precision an operation computes in: every scalar add, sub, mul, div and
/// sqrt is evaluated in double and rounded to fmt.
struct PrecisionContext {
    PrecisionFormat fmt = fp64;

    PrecisionContext() = default;
    PrecisionContext(PrecisionFormat f) : fmt(f) {} // NOLINT(google-explicit-constructor)

    double u() const { return fmt.u(); }
    std::string name() const { return std::string(fmt.name); }
};

struct QrResult {
    DenseMatrix Q;
    DenseMatrix R;
};

struct EigResult {
    DenseMatrix Q;              // eigenvectors as columns
    std::vector<double> lambda; // descending
};

namespace detail {

inline void check_finite(const DenseMatrix& M, const PrecisionContext& ctx) {
    if (!M.all_finite()) throw OverflowError(ctx.name());
}

template <class Rnd>
DenseMatrix matmul_impl(const DenseMatrix& A, const DenseMatrix& B, Rnd rnd) {
    const std::size_t m = A.rows(), K = A.cols(), n = B.cols();
    DenseMatrix C(m, n);
    for (std::size_t i = 0; i < m; ++i) {
        auto c = C.row(i);
        for (std::size_t k = 0; k < K; ++k) {
            const double a = A(i, k);
            if (a == 0.0) continue;
            auto b = B.row(k);
            for (std::size_t j = 0; j < n; ++j) c[j] = rnd(c[j] + rnd(a * b[j]));
        }
    }
    return C;
}

// C = alpha*A + beta*B, entrywise in the rounding of rnd.
template <class Rnd>
DenseMatrix axpby_impl(double alpha, const DenseMatrix& A, double beta, const DenseMatrix& B,
                       Rnd rnd) {
    DenseMatrix C(A.rows(), A.cols());
    auto a = A.data();
    auto b = B.data();
    auto c = C.data();
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = rnd(rnd(alpha * a[i]) + rnd(beta * b[i]));
    return C;
}

// In-place LU with partial pivoting; returns the row permutation.
template <class Rnd>
std::vector<std::size_t> lu_impl(DenseMatrix& M, Rnd rnd) {
    const std::size_t n = M.rows();
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t p = k;
        double best = std::abs(M(k, k));
        for (std::size_t i = k + 1; i < n; ++i) {
            if (std::abs(M(i, k)) > best) {
                best = std::abs(M(i, k));
                p = i;
            }
        }
        if (best == 0.0) throw SingularMatrixError(k);
        if (p != k) {
            std::swap_ranges(M.row(k).begin(), M.row(k).end(), M.row(p).begin());
            std::swap(perm[k], perm[p]);
        }
        const double piv = M(k, k);
        auto rk = M.row(k);
        for (std::size_t i = k + 1; i < n; ++i) {
            auto ri = M.row(i);
            if (ri[k] == 0.0) continue;
            const double l = rnd(ri[k] / piv);
            ri[k] = l;
            for (std::size_t j = k + 1; j < n; ++j) ri[j] = rnd(ri[j] - rnd(l * rk[j]));
        }
    }
    return perm;
}

template <class Rnd>
DenseMatrix invert_impl(const DenseMatrix& A, Rnd rnd) {
    const std::size_t n = A.rows();
    DenseMatrix LU = A;
    for (double& v : LU.data()) v = rnd(v);
    const auto perm = lu_impl(LU, rnd);
    DenseMatrix X(n, n);
    for (std::size_t i = 0; i < n; ++i) X(i, perm[i]) = 1.0;
    // Forward substitution with the unit lower factor, row-oriented.
    for (std::size_t i = 1; i < n; ++i) {
        auto xi = X.row(i);
        for (std::size_t k = 0; k < i; ++k) {
            const double l = LU(i, k);
            if (l == 0.0) continue;
            auto xk = X.row(k);
            for (std::size_t j = 0; j < n; ++j) xi[j] = rnd(xi[j] - rnd(l * xk[j]));
        }
    }
    for (std::size_t ii = n; ii-- > 0;) {
        auto xi = X.row(ii);
        for (std::size_t k = ii + 1; k < n; ++k) {
            const double v = LU(ii, k);
            if (v == 0.0) continue;
            auto xk = X.row(k);
            for (std::size_t j = 0; j < n; ++j) xi[j] = rnd(xi[j] - rnd(v * xk[j]));
        }
        const double d = LU(ii, ii);
        for (std::size_t j = 0; j < n; ++j) xi[j] = rnd(xi[j] / d);
    }
    return X;
}

// Householder reflector for x = R(j:, col): v with v0 = x0 - alpha, alpha = -sign(x0)||x||.
// Applies it to columns [col, ncols) of R from row j. Returns beta (0 = identity).
template <class Rnd>
double householder_step(DenseMatrix& R, std::size_t j, std::size_t col, std::vector<double>& v,
                        Rnd rnd) {
    const std::size_t m = R.rows();
    v.assign(m - j, 0.0);
    double ss = 0.0;
    for (std::size_t i = j; i < m; ++i) ss = rnd(ss + rnd(R(i, col) * R(i, col)));
    const double normx = rnd(std::sqrt(ss));
    if (normx == 0.0) return 0.0;
    const double x0 = R(j, col);
    const double alpha = x0 >= 0.0 ? -normx : normx;
    v[0] = rnd(x0 - alpha);
    for (std::size_t i = j + 1; i < m; ++i) v[i - j] = R(i, col);
    double vtv = 0.0;
    for (double vi : v) vtv = rnd(vtv + rnd(vi * vi));
    if (vtv == 0.0) return 0.0;
    const double beta = rnd(2.0 / vtv);
    for (std::size_t c = col + 1; c < R.cols(); ++c) {
        double w = 0.0;
        for (std::size_t i = j; i < m; ++i) w = rnd(w + rnd(v[i - j] * R(i, c)));
        const double f = rnd(beta * w);
        if (f == 0.0) continue;
        for (std::size_t i = j; i < m; ++i) R(i, c) = rnd(R(i, c) - rnd(f * v[i - j]));
    }
    R(j, col) = alpha;
    for (std::size_t i = j + 1; i < m; ++i) R(i, col) = 0.0;
    return beta;
}

template <class Rnd>
QrResult economy_qr_impl(const DenseMatrix& A, Rnd rnd) {
    const std::size_t m = A.rows(), n = A.cols(), k = std::min(m, n);
    DenseMatrix R = A;
    for (double& x : R.data()) x = rnd(x);
    std::vector<std::vector<double>> vs(k);
    std::vector<double> betas(k, 0.0);
    for (std::size_t j = 0; j < k; ++j) betas[j] = householder_step(R, j, j, vs[j], rnd);

    DenseMatrix Q(m, k);
    for (std::size_t j = 0; j < k; ++j) Q(j, j) = 1.0;
    for (std::size_t jj = k; jj-- > 0;) {
        const double beta = betas[jj];
        if (beta == 0.0) continue;
        const auto& v = vs[jj];
        for (std::size_t c = jj; c < k; ++c) {
            double w = 0.0;
            for (std::size_t i = jj; i < m; ++i) w = rnd(w + rnd(v[i - jj] * Q(i, c)));
            const double f = rnd(beta * w);
            if (f == 0.0) continue;
            for (std::size_t i = jj; i < m; ++i) Q(i, c) = rnd(Q(i, c) - rnd(f * v[i - jj]));
        }
    }
    DenseMatrix Rk = R.row_range(0, k);
    // Nonnegative diagonal of R.
    for (std::size_t j = 0; j < k; ++j) {
        if (Rk(j, j) < 0.0) {
            for (std::size_t c = j; c < n; ++c) Rk(j, c) = -Rk(j, c);
            for (std::size_t i = 0; i < m; ++i) Q(i, j) = -Q(i, j);
        }
    }
    return {std::move(Q), std::move(Rk)};
}

} // namespace detail

inline DenseMatrix matmul(const DenseMatrix& A, const DenseMatrix& B, const PrecisionContext& ctx) {
    if (A.cols() != B.rows())
        throw DimensionError("matmul: inner dimensions " + std::to_string(A.cols()) + " and " +
                             std::to_string(B.rows()) + " differ");
    return with_rounder(ctx.fmt, [&](auto rnd) {
        if (ctx.fmt.id == Format::fp64) return detail::matmul_impl(A, B, rnd);
        return detail::matmul_impl(round_matrix(A, ctx.fmt), round_matrix(B, ctx.fmt), rnd);
    });
}

/// alpha*A + beta*B with each product and the sum rounded in ctx.
inline DenseMatrix axpby(double alpha, const DenseMatrix& A, double beta, const DenseMatrix& B,
                         const PrecisionContext& ctx) {
    if (A.rows() != B.rows() || A.cols() != B.cols()) throw DimensionError("axpby: shape mismatch");
    return with_rounder(ctx.fmt,
                        [&](auto rnd) { return detail::axpby_impl(alpha, A, beta, B, rnd); });
}

inline DenseMatrix scale(const DenseMatrix& A, double alpha, const PrecisionContext& ctx) {
    DenseMatrix B = A;
    with_rounder(ctx.fmt, [&](auto rnd) {
        for (double& v : B.data()) v = rnd(alpha * rnd(v));
    });
    return B;
}

/// LU with partial pivoting (largest magnitude, lowest row on ties), then
/// solves against the identity. Everything in ctx.
inline DenseMatrix invert(const DenseMatrix& A, const PrecisionContext& ctx) {
    if (!A.is_square()) throw DimensionError("invert: matrix is not square");
    DenseMatrix X = with_rounder(ctx.fmt, [&](auto rnd) { return detail::invert_impl(A, rnd); });
    detail::check_finite(X, ctx);
    return X;
}

/// Householder QR returning min(rows, cols) columns of Q and the matching
/// rows of R (upper trapezoidal), with a nonnegative diagonal.
inline QrResult economy_qr(const DenseMatrix& A, const PrecisionContext& ctx) {
    QrResult res = with_rounder(ctx.fmt, [&](auto rnd) { return detail::economy_qr_impl(A, rnd); });
    detail::check_finite(res.Q, ctx);
    detail::check_finite(res.R, ctx);
    return res;
}

/// Thin Householder QR of a tall matrix.
inline QrResult thin_qr(const DenseMatrix& A, const PrecisionContext& ctx) {
    if (A.rows() < A.cols())
        throw DimensionError("thin_qr: needs rows >= cols, got " + std::to_string(A.rows()) + "x" +
                             std::to_string(A.cols()));
    return economy_qr(A, ctx);
}

/// Rank-revealing truncation of a tall factor A (n×c).
///
/// Runs column-pivoted Householder QR on Aᵀ, Aᵀ·Π = Q·[T C; 0 S], and stops at
/// the first k with ‖S‖_F ≤ tol_rel·|R₁₁| (|R₁₁| stands in for ‖A‖₂). Returns
/// the n×k factor Π·[T C]ᵀ, whose Gram product equals AAᵀ up to SᵀS.
inline DenseMatrix rrqr_truncate(const DenseMatrix& A, double tol_rel, const PrecisionContext& ctx) {
    const std::size_t n = A.rows(), c = A.cols();
    DenseMatrix M = round_matrix(A.transpose(), ctx.fmt); // c × n
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    const std::size_t kmax = std::min(c, n);
    std::vector<double> v;
    std::vector<double> norm2(n);
    std::size_t k = 0;
    double r11 = 0.0;
    with_rounder(ctx.fmt, [&](auto rnd) {
        for (; k < kmax; ++k) {
            double trailing = 0.0;
            for (std::size_t j = k; j < n; ++j) {
                double s = 0.0;
                for (std::size_t i = k; i < c; ++i) s += M(i, j) * M(i, j);
                norm2[j] = s;
                trailing += s;
            }
            if (trailing == 0.0) break;
            if (k > 0 && std::sqrt(trailing) <= tol_rel * r11) break;
            std::size_t p = k;
            for (std::size_t j = k + 1; j < n; ++j)
                if (norm2[j] > norm2[p]) p = j;
            if (p != k) {
                for (std::size_t i = 0; i < c; ++i) std::swap(M(i, k), M(i, p));
                std::swap(perm[k], perm[p]);
            }
            detail::householder_step(M, k, k, v, rnd);
            if (k == 0) r11 = std::abs(M(0, 0));
        }
    });
    if (k == 0) return DenseMatrix(n, 1);
    DenseMatrix out(n, k);
    for (std::size_t r = 0; r < k; ++r)
        for (std::size_t j = r; j < n; ++j) out(perm[j], r) = M(r, j);
    detail::check_finite(out, ctx);
    return out;
}

inline double norm_fro(const DenseMatrix& A) {
    double s = 0.0;
    for (double v : A.data()) s += v * v;
    return std::sqrt(s);
}

inline double norm_inf(const DenseMatrix& A) {
    double best = 0.0;
    for (std::size_t i = 0; i < A.rows(); ++i) {
        double s = 0.0;
        for (double v : A.row(i)) s += std::abs(v);
        best = std::max(best, s);
    }
    return best;
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations in ctx.
///
/// The input is symmetrized first. Sweeps stop once the off-diagonal
/// Frobenius mass is at most n·u·‖A‖_F, or after 30 sweeps.
inline EigResult sym_eig(const DenseMatrix& A, const PrecisionContext& ctx) {
    if (!A.is_square()) throw DimensionError("sym_eig: matrix is not square");
    const std::size_t n = A.rows();
    constexpr int max_sweeps = 30;
    DenseMatrix S(n, n);
    DenseMatrix V = DenseMatrix::identity(n);
    with_rounder(ctx.fmt, [&](auto rnd) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                S(i, j) = rnd(rnd(rnd(A(i, j)) + rnd(A(j, i))) * 0.5);
        const double tol = static_cast<double>(n) * ctx.u() * norm_fro(S);
        for (int sweep = 0; sweep < max_sweeps; ++sweep) {
            double off = 0.0;
            for (std::size_t p = 0; p < n; ++p)
                for (std::size_t q = p + 1; q < n; ++q) off += 2.0 * S(p, q) * S(p, q);
            if (std::sqrt(off) <= tol) break;
            for (std::size_t p = 0; p + 1 < n; ++p) {
                for (std::size_t q = p + 1; q < n; ++q) {
                    const double apq = S(p, q);
                    if (apq == 0.0) continue;
                    const double theta = rnd(rnd(S(q, q) - S(p, p)) / rnd(2.0 * apq));
                    double t = 0.0;
                    const double root = rnd(std::sqrt(rnd(1.0 + rnd(theta * theta))));
                    if (std::isfinite(root)) {
                        t = rnd(1.0 / rnd(std::abs(theta) + root));
                        if (theta < 0.0) t = -t;
                    } else {
                        t = rnd(1.0 / rnd(2.0 * theta));
                    }
                    if (t == 0.0) {
                        S(p, q) = S(q, p) = 0.0;
                        continue;
                    }
                    const double cs = rnd(1.0 / rnd(std::sqrt(rnd(1.0 + rnd(t * t)))));
                    const double sn = rnd(t * cs);
                    for (std::size_t r = 0; r < n; ++r) {
                        if (r == p || r == q) continue;
                        const double arp = S(r, p), arq = S(r, q);
                        const double np = rnd(rnd(cs * arp) - rnd(sn * arq));
                        const double nq = rnd(rnd(sn * arp) + rnd(cs * arq));
                        S(r, p) = S(p, r) = np;
                        S(r, q) = S(q, r) = nq;
                    }
                    S(p, p) = rnd(S(p, p) - rnd(t * apq));
                    S(q, q) = rnd(S(q, q) + rnd(t * apq));
                    S(p, q) = S(q, p) = 0.0;
                    for (std::size_t r = 0; r < n; ++r) {
                        const double vp = V(r, p), vq = V(r, q);
                        V(r, p) = rnd(rnd(cs * vp) - rnd(sn * vq));
                        V(r, q) = rnd(rnd(sn * vp) + rnd(cs * vq));
                    }
                }
            }
        }
    });
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return S(a, a) > S(b, b); });
    EigResult res{V.select_cols(order), std::vector<double>(n)};
    for (std::size_t j = 0; j < n; ++j) res.lambda[j] = S(order[j], order[j]);
    detail::check_finite(res.Q, ctx);
    return res;
}

/// ‖ZZᵀ‖_F without forming the n×n product (equals ‖ZᵀZ‖_F), in 64-bit.
inline double gram_norm_fro(const DenseMatrix& Z) {
    const std::size_t c = Z.cols();
    double s = 0.0;
    for (std::size_t a = 0; a < c; ++a) {
        for (std::size_t b = 0; b < c; ++b) {
            double g = 0.0;
            for (std::size_t i = 0; i < Z.rows(); ++i) g += Z(i, a) * Z(i, b);
            s += g * g;
        }
    }
    return std::sqrt(s);
}

} // namespace mplyap

#endif
