#ifndef MPLYAP_NEWTON_HPP
#define MPLYAP_NEWTON_HPP

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "mplyap/error.hpp"
#include "mplyap/kernels.hpp"
#include "mplyap/matrix.hpp"
#include "mplyap/precision.hpp"

namespace mplyap {

/// Stored sequence of (A_k⁻¹, μ_k) for one coefficient matrix A.
///
/// Every Newton solve against the same A walks the same A-side sequence, so
/// later solves (other right-hand sides, later refinement steps) reuse the
/// prefix and only invert when they run past its end.
class InverseCache {
public:
    struct Entry {
        DenseMatrix inverse;
        double mu;
    };

    const std::vector<Entry>& entries() const noexcept { return entries_; }
    std::size_t size() const noexcept { return entries_.size(); }
    void clear() {
        entries_.clear();
        key_.reset();
    }

    // Binds the cache to (A, format, scaling); a different key drops the entries.
    void bind(const DenseMatrix& A, const PrecisionFormat& fmt, bool scaling) {
        Key k{fmt.id, A.rows(), scaling, fingerprint(A)};
        if (!key_ || !(*key_ == k)) {
            entries_.clear();
            key_ = k;
        }
    }
    const Entry* find(std::size_t step) const {
        return step < entries_.size() ? &entries_[step] : nullptr;
    }
    void append(DenseMatrix inverse, double mu) { entries_.push_back({std::move(inverse), mu}); }

private:
    struct Key {
        Format fmt;
        std::size_t n;
        bool scaling;
        std::uint64_t hash;
        friend bool operator==(const Key&, const Key&) = default;
    };
    static std::uint64_t fingerprint(const DenseMatrix& A) {
        std::uint64_t h = 1469598103934665603ull;
        for (double v : A.data()) {
            h ^= std::bit_cast<std::uint64_t>(v);
            h *= 1099511628211ull;
        }
        return h;
    }

    std::vector<Entry> entries_;
    std::optional<Key> key_;
};

struct NewtonParams {
    PrecisionContext ctx = fp64; // solver precision u_s
    int k_max = 50;
    double rho = 0.1;
    bool scaling_enabled = true;
    InverseCache* cache = nullptr;
    // Called once per step with (k, A_{k-1}⁻¹, μ_{k-1}) as used by that step.
    std::function<void(int, const DenseMatrix&, double)> observer;
};

enum class NewtonStop { tolerance, roundoff, max_iterations, zero_rhs };

struct NewtonStats {
    int iterations = 0;
    int inversions = 0;  // inverses actually computed
    int cache_hits = 0;  // inverses taken from the cache
    int tolerance_step = 0; // first k with ‖A_k + I‖∞ ≤ τ_N, 0 if never
    int trigger_step = 0;   // step at which the two-step countdown started
    NewtonStop stop = NewtonStop::max_iterations;
    double tau = 0.0;
    int truncations = 0;
    std::vector<double> mu;            // μ_{k-1} used in step k
    std::vector<double> delta;         // δ_k
    std::vector<double> sign_residual; // ‖A_k + I‖∞
    std::vector<std::size_t> factor_cols; // widest factor after step k's truncation

    bool converged() const noexcept { return tolerance_step > 0 || stop == NewtonStop::zero_rhs; }
    double final_sign_residual() const { return sign_residual.empty() ? 0.0 : sign_residual.back(); }
};

struct CholFactor {
    DenseMatrix Z;
};

struct LdltFactor {
    DenseMatrix Z;
    DenseMatrix Y;
};

/// (‖A_k⁻¹‖_F / ‖A_k‖_F)^½ in 64-bit; nullopt when a norm is zero or non-finite.
inline std::optional<double> frobenius_scale(const DenseMatrix& Ak, const DenseMatrix& Ak_inv) {
    const double na = norm_fro(Ak);
    const double ni = norm_fro(Ak_inv);
    if (!(na > 0.0) || !(ni > 0.0) || !std::isfinite(na) || !std::isfinite(ni)) return std::nullopt;
    return std::sqrt(ni / na);
}

/// Rank truncation of a Cholesky-type factor at tolerance √u.
inline DenseMatrix rank_trunc_chol(const DenseMatrix& Z, const PrecisionContext& ctx) {
    return rrqr_truncate(Z, std::sqrt(ctx.u()), ctx);
}

/// Which eigenvalues of RYRᵀ survive an LDLᵀ truncation.
enum class SignPolicy {
    positive, // λ > u·max|λ|
    signed_,  // |λ| > u·max|λ|, for indefinite inner factors
};

/// Thin QR Z = QR, eigendecomposition RYRᵀ = VΛVᵀ, keep the eigenpairs above
/// u·‖Λ‖∞. Returns (QV, diag(λ kept)); both empty when nothing survives.
inline std::pair<DenseMatrix, DenseMatrix> rank_trunc_ldlt(const DenseMatrix& Z, const DenseMatrix& Y,
                                                           const PrecisionContext& ctx,
                                                           SignPolicy policy = SignPolicy::positive) {
    if (Z.cols() != Y.rows() || !Y.is_square())
        throw DimensionError("rank_trunc_ldlt: Z and Y shapes disagree");
    if (Z.cols() == 0) return {DenseMatrix(Z.rows(), 0), DenseMatrix(0, 0)};
    auto [Q, R] = economy_qr(Z, ctx);
    const DenseMatrix K = matmul(matmul(R, Y, ctx), R.transpose(), ctx);
    auto eig = sym_eig(K, ctx);
    double maxabs = 0.0;
    for (double l : eig.lambda) maxabs = std::max(maxabs, std::abs(l));
    const double cut = ctx.u() * maxabs;
    std::vector<std::size_t> keep;
    std::vector<double> vals;
    for (std::size_t j = 0; j < eig.lambda.size(); ++j) {
        const double l = eig.lambda[j];
        const bool ok = policy == SignPolicy::positive ? l > cut : std::abs(l) > cut;
        if (ok) {
            keep.push_back(j);
            vals.push_back(l);
        }
    }
    if (keep.empty()) return {DenseMatrix(Z.rows(), 0), DenseMatrix(0, 0)};
    return {matmul(Q, eig.Q.select_cols(keep), ctx), DenseMatrix::diagonal(vals)};
}

namespace detail {

// Runs the A-side of the sign-function Newton iteration and calls
// update(k, A_{k-1}⁻¹, μ_{k-1}) once per step for the factor-side work; update
// returns the factor width it ended the step with.
template <class Update>
NewtonStats sign_iteration(const DenseMatrix& A, const NewtonParams& p, Update&& update) {
    if (!A.is_square()) throw DimensionError("Newton solver: A is not square");
    if (p.k_max < 1) throw Error("Newton solver: k_max must be at least 1");
    const PrecisionContext& ctx = p.ctx;
    const std::size_t n = A.rows();
    NewtonStats st;
    st.tau = 10.0 * std::sqrt(static_cast<double>(n) * ctx.u());

    DenseMatrix Ak = round_matrix(A, ctx.fmt);
    if (!Ak.all_finite()) throw DivergedError(ctx.name(), 0);
    if (p.cache) p.cache->bind(A, ctx.fmt, p.scaling_enabled);

    bool frozen = !p.scaling_enabled;
    double prev_delta = -1.0;
    int countdown = -1;
    for (int k = 1; k <= p.k_max; ++k) {
        const std::size_t step = static_cast<std::size_t>(k - 1);
        DenseMatrix inv_storage;
        const DenseMatrix* inv = nullptr;
        double mu = 1.0;
        if (const auto* e = p.cache ? p.cache->find(step) : nullptr) {
            inv = &e->inverse;
            mu = e->mu;
            ++st.cache_hits;
        } else {
            try {
                inv_storage = invert(Ak, ctx);
            } catch (const OverflowError&) {
                throw DivergedError(ctx.name(), static_cast<std::size_t>(k));
            } catch (const SingularMatrixError&) {
                throw DivergedError(ctx.name(), static_cast<std::size_t>(k));
            }
            ++st.inversions;
            if (!frozen) mu = round_scalar(frobenius_scale(Ak, inv_storage).value_or(1.0), ctx.fmt);
            if (!(mu > 0.0) || !std::isfinite(mu)) mu = 1.0;
            if (p.cache) {
                p.cache->append(std::move(inv_storage), mu);
                inv = &p.cache->entries().back().inverse;
            } else {
                inv = &inv_storage;
            }
        }

        if (p.observer) p.observer(k, *inv, mu);
        DenseMatrix next = scale(axpby(mu, Ak, round_scalar(1.0 / mu, ctx.fmt), *inv, ctx), 0.5, ctx);
        if (!next.all_finite()) throw DivergedError(ctx.name(), static_cast<std::size_t>(k));
        st.factor_cols.push_back(update(k, *inv, mu));

        DenseMatrix diff = axpby(1.0, next, -1.0, Ak, fp64);
        const double delta = norm_fro(diff) / norm_fro(next);
        DenseMatrix shifted = next;
        for (std::size_t i = 0; i < n; ++i) shifted(i, i) += 1.0;
        const double sres = norm_inf(shifted);
        st.mu.push_back(mu);
        st.delta.push_back(delta);
        st.sign_residual.push_back(sres);
        st.iterations = k;
        Ak = std::move(next);

        if (delta < 1e-2) frozen = true;
        if (st.tolerance_step == 0 && sres <= st.tau) st.tolerance_step = k;
        if (countdown < 0) {
            if (sres <= st.tau) {
                countdown = 2;
                st.trigger_step = k;
                st.stop = NewtonStop::tolerance;
            } else if (prev_delta >= 0.0 && prev_delta < 1e-2 && delta > prev_delta / 2.0) {
                // δ stopped halving inside the convergence region: roundoff dominates.
                countdown = 2;
                st.trigger_step = k;
                st.stop = NewtonStop::roundoff;
            }
        } else if (--countdown == 0) {
            break;
        }
        prev_delta = delta;
    }
    if (countdown != 0) st.stop = NewtonStop::max_iterations;
    return st;
}

inline bool is_zero(const DenseMatrix& M) {
    return std::all_of(M.data().begin(), M.data().end(), [](double v) { return v == 0.0; });
}

} // namespace detail

/// Cholesky-type Newton solve for several right-hand sides sharing A.
///
/// One A-iteration drives every factor; each factor is truncated on its own.
/// Empty or all-zero right-hand sides yield an n×0 factor. Returns factors
/// Z_k/√2 stored at u_out.
inline std::pair<std::vector<CholFactor>, NewtonStats>
solve_chol_multi(const DenseMatrix& A, std::span<const DenseMatrix> rhs, const NewtonParams& p,
                 const PrecisionContext& u_out) {
    const std::size_t n = A.rows();
    const PrecisionContext& ctx = p.ctx;
    std::vector<DenseMatrix> Z;
    std::vector<bool> active;
    for (const auto& L : rhs) {
        if (L.rows() != n) throw DimensionError("solve_chol: L must have n rows");
        const bool on = L.cols() > 0 && !detail::is_zero(L);
        active.push_back(on);
        Z.push_back(on ? round_matrix(L, ctx.fmt) : DenseMatrix(n, 0));
    }
    if (std::none_of(active.begin(), active.end(), [](bool b) { return b; })) {
        NewtonStats st;
        st.stop = NewtonStop::zero_rhs;
        st.tau = 10.0 * std::sqrt(static_cast<double>(n) * ctx.u());
        std::vector<CholFactor> out(rhs.size(), CholFactor{DenseMatrix(n, 0)});
        return {std::move(out), st};
    }
    int truncations = 0;
    NewtonStats st = detail::sign_iteration(A, p, [&](int k, const DenseMatrix& inv, double mu) {
        const double s1 = round_scalar(std::sqrt(round_scalar(mu * 0.5, ctx.fmt)), ctx.fmt);
        const double s2 = round_scalar(std::sqrt(round_scalar(0.5 / mu, ctx.fmt)), ctx.fmt);
        std::size_t widest = 0;
        for (std::size_t r = 0; r < Z.size(); ++r) {
            if (!active[r]) continue;
            DenseMatrix next = hcat(scale(Z[r], s1, ctx), scale(matmul(inv, Z[r], ctx), s2, ctx));
            if (!next.all_finite()) throw DivergedError(ctx.name(), static_cast<std::size_t>(k));
            if (static_cast<double>(next.cols()) > p.rho * static_cast<double>(n)) {
                next = rank_trunc_chol(next, ctx);
                ++truncations;
            }
            Z[r] = std::move(next);
            widest = std::max(widest, Z[r].cols());
        }
        return widest;
    });
    st.truncations = truncations;
    std::vector<CholFactor> out;
    for (auto& z : Z) {
        for (double& v : z.data()) v /= std::sqrt(2.0);
        out.push_back({round_matrix(z, u_out.fmt)});
    }
    return {std::move(out), st};
}

/// Cholesky-type sign-function Newton solve of AX + XAᵀ + LLᵀ = 0.
inline std::pair<CholFactor, NewtonStats> solve_chol(const DenseMatrix& A, const DenseMatrix& L,
                                                     const NewtonParams& p,
                                                     const PrecisionContext& u_out = fp64) {
    auto [f, st] = solve_chol_multi(A, std::span<const DenseMatrix>(&L, 1), p, u_out);
    return {std::move(f.front()), st};
}

/// LDLᵀ-type sign-function Newton solve of AX + XAᵀ + LSLᵀ = 0.
///
/// Before the first truncation Y_k is kept as diag(c) ⊗ S, c being the
/// products of the per-step factors μ/2 and 1/(2μ); afterwards Y_k is an
/// explicit eigenvalue diagonal. Indefinite S keeps negative eigenvalues
/// through truncation. Returns (Z_k, Y_k/2) stored at u_out.
inline std::pair<LdltFactor, NewtonStats> solve_ldlt(const DenseMatrix& A, const DenseMatrix& L,
                                                     const DenseMatrix& S, const NewtonParams& p,
                                                     const PrecisionContext& u_out = fp64) {
    const std::size_t n = A.rows();
    const PrecisionContext& ctx = p.ctx;
    if (L.rows() != n) throw DimensionError("solve_ldlt: L must have n rows");
    if (!S.is_square() || S.rows() != L.cols()) throw DimensionError("solve_ldlt: S must be m×m");
    if (L.cols() == 0 || detail::is_zero(L) || detail::is_zero(S)) {
        NewtonStats st;
        st.stop = NewtonStop::zero_rhs;
        st.tau = 10.0 * std::sqrt(static_cast<double>(n) * ctx.u());
        return {LdltFactor{DenseMatrix(n, 0), DenseMatrix(0, 0)}, st};
    }
    const SignPolicy policy = [&] {
        const auto e = sym_eig(S, fp64);
        return e.lambda.back() < 0.0 ? SignPolicy::signed_ : SignPolicy::positive;
    }();

    DenseMatrix Z = round_matrix(L, ctx.fmt);
    DenseMatrix block = round_matrix(S, ctx.fmt);
    std::vector<double> coeffs{1.0};
    auto explicit_y = [&] {
        const std::size_t m = block.rows();
        DenseMatrix Y(coeffs.size() * m, coeffs.size() * m);
        for (std::size_t b = 0; b < coeffs.size(); ++b)
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < m; ++j)
                    Y(b * m + i, b * m + j) = round_scalar(coeffs[b] * block(i, j), ctx.fmt);
        return Y;
    };

    int truncations = 0;
    NewtonStats st = detail::sign_iteration(A, p, [&](int k, const DenseMatrix& inv, double mu) {
        Z = hcat(Z, matmul(inv, Z, ctx));
        if (!Z.all_finite()) throw DivergedError(ctx.name(), static_cast<std::size_t>(k));
        const double f1 = round_scalar(mu * 0.5, ctx.fmt);
        const double f2 = round_scalar(0.5 / mu, ctx.fmt);
        std::vector<double> next;
        next.reserve(2 * coeffs.size());
        for (double c : coeffs) next.push_back(round_scalar(f1 * c, ctx.fmt));
        for (double c : coeffs) next.push_back(round_scalar(f2 * c, ctx.fmt));
        coeffs = std::move(next);
        if (static_cast<double>(Z.cols()) > p.rho * static_cast<double>(n)) {
            auto [Zt, Yt] = rank_trunc_ldlt(Z, explicit_y(), ctx, policy);
            Z = std::move(Zt);
            coeffs.assign(Yt.rows(), 0.0);
            for (std::size_t i = 0; i < Yt.rows(); ++i) coeffs[i] = Yt(i, i);
            block = DenseMatrix::identity(1);
            ++truncations;
        }
        return Z.cols();
    });
    st.truncations = truncations;
    for (double& c : coeffs) c *= 0.5;
    DenseMatrix Y = explicit_y();
    return {LdltFactor{round_matrix(Z, u_out.fmt), round_matrix(Y, u_out.fmt)}, st};
}

} // namespace mplyap

#endif
