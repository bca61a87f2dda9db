#ifndef MPLYAP_REFINE_HPP
#define MPLYAP_REFINE_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mplyap/error.hpp"
#include "mplyap/kernels.hpp"
#include "mplyap/matrix.hpp"
#include "mplyap/newton.hpp"
#include "mplyap/precision.hpp"

namespace mplyap {

/// Precisions and tolerances of a refinement run.
///
/// Unit roundoffs must satisfy u_s ≥ u ≥ u_c and u ≥ u_r. tau_I and eta_s
/// default to n·u and 10·u when left unset.
struct IRConfig {
    PrecisionFormat us = fp32;
    PrecisionFormat u = fp64;
    PrecisionFormat ur = fp64;
    PrecisionFormat uc = fp64;
    std::optional<double> tau_I;
    int i_max = 50;
    double eta_r = 1e-4;
    std::optional<double> eta_s;
    NewtonParams newton;
    bool cache_inverses = false;

    static IRConfig with(PrecisionFormat solver, PrecisionFormat working) {
        IRConfig c;
        c.us = solver;
        c.u = c.ur = c.uc = working;
        return c;
    }

    double tau(std::size_t n) const { return tau_I.value_or(static_cast<double>(n) * u.u()); }
    double eta_s_value() const { return eta_s.value_or(10.0 * u.u()); }

    /// Throws Error when the precision ordering or a parameter range is violated.
    void validate() const {
        if (us.u() < u.u() || u.u() < uc.u() || u.u() < ur.u())
            throw Error("precision ordering violated: need u_s >= u >= u_c and u >= u_r (got us=" +
                        std::string(us.name) + " u=" + std::string(u.name) + " ur=" +
                        std::string(ur.name) + " uc=" + std::string(uc.name) + ")");
        if (tau_I && !(*tau_I > 0.0)) throw Error("tau_I must be positive");
        if (i_max < 0) throw Error("i_max must be nonnegative");
        if (!(eta_r > 0.0 && eta_r < 1.0)) throw Error("eta_r must lie in (0,1)");
        const double es = eta_s_value();
        if (!(es > 0.0 && es < 1.0)) throw Error("eta_s must lie in (0,1)");
        if (newton.k_max < 1) throw Error("k_max must be at least 1");
        if (!(newton.rho > 0.0 && newton.rho <= 1.0)) throw Error("rho must lie in (0,1]");
    }
};

enum class IRStatus { converged, stagnated, max_steps, solver_diverged };

inline const char* to_string(IRStatus s) {
    switch (s) {
    case IRStatus::converged: return "converged";
    case IRStatus::stagnated: return "stagnated";
    case IRStatus::max_steps: return "max_steps";
    case IRStatus::solver_diverged: return "solver_diverged";
    }
    return "unknown";
}

struct IRStep {
    int index = 0;              // number of corrections applied before this evaluation
    double res = 0.0;           // relative residual, 64-bit
    double res_norm = 0.0;  // ‖R‖_F from the kernel eigenvalues, absolute
    double theta = std::numeric_limits<double>::quiet_NaN(); // res_i / res_{i-1}, i ≥ 1
    int newton_iterations = 0;  // iterations of the solve that produced this iterate
    int rank = 0;
    int residual_rank = 0;      // columns kept by the residual split
    int truncations = 0;        // rank truncations inside that solve
};

struct IRReport {
    std::vector<IRStep> steps;
    IRStatus status = IRStatus::max_steps;
    int total_newton = 0;
    int max_newton = 0;
    int total_inversions = 0;
    int solver_calls = 0;
    std::string message;

    double final_res() const { return steps.empty() ? 1.0 : steps.back().res; }
    int final_rank() const { return steps.empty() ? 0 : steps.back().rank; }
    bool converged() const { return status == IRStatus::converged; }
};

struct ResidualSplit {
    DenseMatrix plus;   // L⁺
    DenseMatrix minus;  // L⁻
    double res_norm = 0.0;
    std::vector<double> lambda;
};

struct ResidualLdlt {
    DenseMatrix L;  // L^Δ
    DenseMatrix S;  // S^Δ, diagonal
    double res_norm = 0.0;
    std::vector<double> lambda;
};

namespace detail {

// T·N for N = [0 Y 0; Y 0 0; 0 0 S], with T's columns split as c | c | m.
inline DenseMatrix apply_kernel(const DenseMatrix& T, std::size_t c, const DenseMatrix* Y,
                                const DenseMatrix* S, const PrecisionContext& ctx) {
    const std::size_t m = T.cols() - 2 * c;
    DenseMatrix T1 = T.col_range(0, c), T2 = T.col_range(c, c), T3 = T.col_range(2 * c, m);
    if (Y) {
        T1 = matmul(T1, *Y, ctx);
        T2 = matmul(T2, *Y, ctx);
    }
    if (S) T3 = matmul(T3, *S, ctx);
    return hcat(T2, T1, T3);
}

inline DenseMatrix scale_columns_sqrt(DenseMatrix M, const std::vector<double>& vals,
                                      const PrecisionContext& ctx) {
    for (std::size_t j = 0; j < vals.size(); ++j) {
        const double s = round_scalar(std::sqrt(vals[j]), ctx.fmt);
        for (std::size_t i = 0; i < M.rows(); ++i) M(i, j) = round_scalar(M(i, j) * s, ctx.fmt);
    }
    return M;
}

inline double max_abs(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

inline double sum_sq_sqrt(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

// ‖Fᵀ-kernel product‖ pieces of the residual, all in 64-bit.
inline double residual_norm(const DenseMatrix& A, const DenseMatrix& L, const DenseMatrix* S,
                            const DenseMatrix& Z, const DenseMatrix* Y) {
    const DenseMatrix AZ = matmul(A, Z, fp64);
    const DenseMatrix F = hcat(Z, AZ, L);
    if (F.cols() == 0) return 0.0;
    const auto qr = economy_qr(F, fp64);
    const DenseMatrix TN = apply_kernel(qr.R, Z.cols(), Y, S, fp64);
    return norm_fro(matmul(TN, qr.R.transpose(), fp64));
}

// ‖M·Y·Mᵀ‖_F through a QR of M, in 64-bit.
inline double product_norm(const DenseMatrix& M, const DenseMatrix* Y) {
    if (M.cols() == 0) return 0.0;
    const auto qr = economy_qr(M, fp64);
    const DenseMatrix RY = Y ? matmul(qr.R, *Y, fp64) : qr.R;
    return norm_fro(matmul(RY, qr.R.transpose(), fp64));
}

} // namespace detail

/// Splits R(Z) = AZZᵀ + ZZᵀAᵀ + LLᵀ into L⁺L⁺ᵀ − L⁻L⁻ᵀ without forming it.
///
/// Eigenvalues of the kernel H = T·P·Tᵀ with |λ| below eta_r·max|λ| are
/// dropped. res_norm is √(Σλ²) over all eigenvalues.
inline ResidualSplit res_fac_chol(const DenseMatrix& A, const DenseMatrix& L, const DenseMatrix& Z,
                                  double eta_r, const PrecisionContext& ctx) {
    const std::size_t n = A.rows();
    if (L.rows() != n || Z.rows() != n) throw DimensionError("res_fac_chol: row counts differ");
    const DenseMatrix F = hcat(Z, matmul(A, Z, ctx), L);
    ResidualSplit out{DenseMatrix(n, 0), DenseMatrix(n, 0), 0.0, {}};
    if (F.cols() == 0) return out;
    const auto [U, T] = economy_qr(F, ctx);
    const DenseMatrix H = matmul(detail::apply_kernel(T, Z.cols(), nullptr, nullptr, ctx),
                                 T.transpose(), ctx);
    const auto eig = sym_eig(H, ctx);
    out.lambda = eig.lambda;
    out.res_norm = detail::sum_sq_sqrt(eig.lambda);
    const double cut = eta_r * detail::max_abs(eig.lambda);
    if (cut == 0.0) return out;
    std::vector<std::size_t> jp, jm;
    std::vector<double> lp, lm;
    for (std::size_t j = 0; j < eig.lambda.size(); ++j) {
        const double l = eig.lambda[j];
        if (l >= cut) {
            jp.push_back(j);
            lp.push_back(l);
        } else if (l <= -cut) {
            jm.push_back(j);
            lm.push_back(-l);
        }
    }
    if (!jp.empty())
        out.plus = detail::scale_columns_sqrt(matmul(U, eig.Q.select_cols(jp), ctx), lp, ctx);
    if (!jm.empty())
        out.minus = detail::scale_columns_sqrt(matmul(U, eig.Q.select_cols(jm), ctx), lm, ctx);
    return out;
}

/// Z_{i+1} with Z_{i+1}Z_{i+1}ᵀ the PSD part of Z_iZ_iᵀ + Z⁺Z⁺ᵀ − Z⁻Z⁻ᵀ,
/// dropping eigenvalues below eta_s·max|σ|.
inline DenseMatrix sol_upt_chol(const DenseMatrix& Z, const DenseMatrix& Zp, const DenseMatrix& Zm,
                                double eta_s, const PrecisionContext& ctx) {
    const DenseMatrix G = hcat(Z, Zp, Zm);
    if (G.cols() == 0) return DenseMatrix(G.rows(), 0);
    const auto [V, Gamma] = economy_qr(G, ctx);
    DenseMatrix GJ = Gamma;
    for (std::size_t i = 0; i < GJ.rows(); ++i)
        for (std::size_t j = Z.cols() + Zp.cols(); j < GJ.cols(); ++j) GJ(i, j) = -GJ(i, j);
    const auto eig = sym_eig(matmul(GJ, Gamma.transpose(), ctx), ctx);
    const double cut = eta_s * detail::max_abs(eig.lambda);
    std::vector<std::size_t> keep;
    std::vector<double> vals;
    for (std::size_t j = 0; j < eig.lambda.size(); ++j) {
        if (eig.lambda[j] > 0.0 && eig.lambda[j] >= cut) {
            keep.push_back(j);
            vals.push_back(eig.lambda[j]);
        }
    }
    if (keep.empty()) return DenseMatrix(G.rows(), 0);
    return detail::scale_columns_sqrt(matmul(V, eig.Q.select_cols(keep), ctx), vals, ctx);
}

/// LDLᵀ residual factorization: R(Z, Y) ≈ L^Δ S^Δ L^Δᵀ, L^Δ with
/// orthonormal columns, keeping |λ| ≥ eta_r·max|λ|.
inline ResidualLdlt res_fac_ldlt(const DenseMatrix& A, const DenseMatrix& L, const DenseMatrix& S,
                                 const DenseMatrix& Z, const DenseMatrix& Y, double eta_r,
                                 const PrecisionContext& ctx) {
    const std::size_t n = A.rows();
    if (L.rows() != n || Z.rows() != n) throw DimensionError("res_fac_ldlt: row counts differ");
    if (Y.rows() != Z.cols() || S.rows() != L.cols())
        throw DimensionError("res_fac_ldlt: inner factor shapes disagree");
    const DenseMatrix F = hcat(Z, matmul(A, Z, ctx), L);
    ResidualLdlt out{DenseMatrix(n, 0), DenseMatrix(0, 0), 0.0, {}};
    if (F.cols() == 0) return out;
    const auto [U, T] = economy_qr(F, ctx);
    const DenseMatrix H =
        matmul(detail::apply_kernel(T, Z.cols(), &Y, &S, ctx), T.transpose(), ctx);
    const auto eig = sym_eig(H, ctx);
    out.lambda = eig.lambda;
    out.res_norm = detail::sum_sq_sqrt(eig.lambda);
    const double cut = eta_r * detail::max_abs(eig.lambda);
    if (cut == 0.0) return out;
    std::vector<std::size_t> keep;
    std::vector<double> vals;
    for (std::size_t j = 0; j < eig.lambda.size(); ++j) {
        if (std::abs(eig.lambda[j]) >= cut) {
            keep.push_back(j);
            vals.push_back(eig.lambda[j]);
        }
    }
    out.L = matmul(U, eig.Q.select_cols(keep), ctx);
    out.S = DenseMatrix::diagonal(vals);
    return out;
}

/// LDLᵀ solution update. With psd_projection the result is the PSD part of
/// ZYZᵀ + Z^ΔY^ΔZ^Δᵀ (σ ≥ eta_s·max|σ|); without it, eigenvalues of either sign
/// with |σ| ≥ eta_s·max|σ| are kept.
inline std::pair<DenseMatrix, DenseMatrix> sol_upt_ldlt(const DenseMatrix& Z, const DenseMatrix& Y,
                                                        const DenseMatrix& Zd, const DenseMatrix& Yd,
                                                        double eta_s, const PrecisionContext& ctx,
                                                        bool psd_projection = true) {
    const DenseMatrix G = hcat(Z, Zd);
    if (G.cols() == 0) return {DenseMatrix(G.rows(), 0), DenseMatrix(0, 0)};
    const DenseMatrix Ups = blkdiag({&Y, &Yd});
    const auto [V, Gamma] = economy_qr(G, ctx);
    const auto eig = sym_eig(matmul(matmul(Gamma, Ups, ctx), Gamma.transpose(), ctx), ctx);
    const double cut = eta_s * detail::max_abs(eig.lambda);
    std::vector<std::size_t> keep;
    std::vector<double> vals;
    for (std::size_t j = 0; j < eig.lambda.size(); ++j) {
        const double s = eig.lambda[j];
        const bool ok = psd_projection ? (s > 0.0 && s >= cut) : (s != 0.0 && std::abs(s) >= cut);
        if (ok) {
            keep.push_back(j);
            vals.push_back(s);
        }
    }
    if (keep.empty()) return {DenseMatrix(G.rows(), 0), DenseMatrix(0, 0)};
    return {matmul(V, eig.Q.select_cols(keep), ctx), DenseMatrix::diagonal(vals)};
}

/// ‖AZZᵀ + ZZᵀAᵀ + LLᵀ‖_F / (‖LLᵀ‖_F + 2‖ZZᵀ‖_F‖A‖_F), in 64-bit, without
/// forming any n×n product.
inline double relative_residual(const DenseMatrix& A, const DenseMatrix& L, const DenseMatrix& Z) {
    const double num = detail::residual_norm(A, L, nullptr, Z, nullptr);
    const double den = detail::product_norm(L, nullptr) + 2.0 * detail::product_norm(Z, nullptr) * norm_fro(A);
    return den > 0.0 ? num / den : num;
}

/// LDLᵀ form: W = LSLᵀ, X = ZYZᵀ.
inline double relative_residual(const DenseMatrix& A, const DenseMatrix& L, const DenseMatrix& S,
                                const DenseMatrix& Z, const DenseMatrix& Y) {
    const double num = detail::residual_norm(A, L, &S, Z, &Y);
    const double den = detail::product_norm(L, &S) + 2.0 * detail::product_norm(Z, &Y) * norm_fro(A);
    return den > 0.0 ? num / den : num;
}

namespace detail {

inline void tally(IRReport& rep, const NewtonStats& st) {
    rep.total_newton += st.iterations;
    rep.max_newton = std::max(rep.max_newton, st.iterations);
    rep.total_inversions += st.inversions;
    ++rep.solver_calls;
}

// Evaluates θ and the stagnation rule (θ > 0.9 twice in a row).
struct StagnationMonitor {
    int streak = 0;
    bool observe(IRStep& step, const std::vector<IRStep>& history) {
        if (history.empty()) return false;
        const double prev = history.back().res;
        step.theta = prev > 0.0 ? step.res / prev : std::numeric_limits<double>::infinity();
        streak = step.theta > 0.9 ? streak + 1 : 0;
        return streak >= 2;
    }
};

} // namespace detail

/// Mixed-precision Cholesky-type refinement for AX + XAᵀ + LLᵀ = 0.
inline std::pair<CholFactor, IRReport> ir_chol(const DenseMatrix& A, const DenseMatrix& L,
                                               const IRConfig& cfg) {
    cfg.validate();
    const std::size_t n = A.rows();
    if (!A.is_square() || L.rows() != n) throw DimensionError("ir_chol: A must be n×n and L n×m");
    IRReport rep;
    InverseCache cache;
    NewtonParams np = cfg.newton;
    np.ctx = cfg.us;
    if (cfg.cache_inverses) np.cache = &cache;

    const double normA = norm_fro(A);
    const double normW = detail::product_norm(L, nullptr);
    const double tau = cfg.tau(n);

    DenseMatrix Z;
    int last_iters = 0, last_trunc = 0;
    try {
        auto [f, st] = solve_chol(A, L, np, cfg.u);
        Z = std::move(f.Z);
        detail::tally(rep, st);
        last_iters = st.iterations;
        last_trunc = st.truncations;
    } catch (const DivergedError&) {
        NewtonParams retry = np;
        retry.scaling_enabled = false;
        try {
            auto [f, st] = solve_chol(A, L, retry, cfg.u);
            Z = std::move(f.Z);
            detail::tally(rep, st);
            last_iters = st.iterations;
            last_trunc = st.truncations;
            np = retry;
        } catch (const DivergedError& e2) {
            rep.status = IRStatus::solver_diverged;
            rep.message = std::string("initial solve: ") + e2.what();
            IRStep s;
            s.res = 1.0;
            rep.steps.push_back(s);
            return {CholFactor{DenseMatrix(n, 0)}, rep};
        }
    }

    detail::StagnationMonitor mon;
    for (int i = 0;; ++i) {
        const ResidualSplit split = res_fac_chol(A, L, Z, cfg.eta_r, cfg.ur);
        IRStep step;
        step.index = i;
        step.res = relative_residual(A, L, Z);
        step.res_norm = split.res_norm;
        step.newton_iterations = last_iters;
        step.truncations = last_trunc;
        step.rank = static_cast<int>(Z.cols());
        step.residual_rank = static_cast<int>(split.plus.cols() + split.minus.cols());
        const bool stagnant = mon.observe(step, rep.steps);
        rep.steps.push_back(step);

        const double den = normW + 2.0 * detail::product_norm(Z, nullptr) * normA;
        const double rel_factored = den > 0.0 ? split.res_norm / den : split.res_norm;
        if (rel_factored <= tau) {
            rep.status = IRStatus::converged;
            break;
        }
        if (stagnant) {
            rep.status = IRStatus::stagnated;
            break;
        }
        if (i >= cfg.i_max) {
            rep.status = IRStatus::max_steps;
            break;
        }

        const std::array<DenseMatrix, 2> rhs{round_matrix(split.plus, cfg.us),
                                             round_matrix(split.minus, cfg.us)};
        try {
            auto [fs, st] = solve_chol_multi(A, rhs, np, cfg.u);
            detail::tally(rep, st);
            last_iters = st.iterations;
            last_trunc = st.truncations;
            Z = round_matrix(sol_upt_chol(Z, fs[0].Z, fs[1].Z, cfg.eta_s_value(), cfg.uc), cfg.u);
        } catch (const DivergedError& e) {
            rep.status = IRStatus::solver_diverged;
            rep.message = "refinement step " + std::to_string(i + 1) + ": " + e.what();
            break;
        }
    }
    return {CholFactor{std::move(Z)}, rep};
}

/// Mixed-precision LDLᵀ-type refinement for AX + XAᵀ + LSLᵀ = 0.
///
/// When S is indefinite the solution is indefinite too, so the update keeps
/// both signs instead of projecting onto the PSD cone.
inline std::pair<LdltFactor, IRReport> ir_ldlt(const DenseMatrix& A, const DenseMatrix& L,
                                               const DenseMatrix& S, const IRConfig& cfg) {
    cfg.validate();
    const std::size_t n = A.rows();
    if (!A.is_square() || L.rows() != n) throw DimensionError("ir_ldlt: A must be n×n and L n×m");
    if (!S.is_square() || S.rows() != L.cols()) throw DimensionError("ir_ldlt: S must be m×m");
    IRReport rep;
    InverseCache cache;
    NewtonParams np = cfg.newton;
    np.ctx = cfg.us;
    if (cfg.cache_inverses) np.cache = &cache;
    const bool psd = S.rows() == 0 || sym_eig(S, fp64).lambda.back() >= 0.0;

    const double normA = norm_fro(A);
    const double normW = detail::product_norm(L, &S);
    const double tau = cfg.tau(n);

    DenseMatrix Z, Y;
    int last_iters = 0, last_trunc = 0;
    auto initial = [&](const NewtonParams& params) {
        auto [f, st] = solve_ldlt(A, L, S, params, cfg.u);
        Z = std::move(f.Z);
        Y = std::move(f.Y);
        detail::tally(rep, st);
        last_iters = st.iterations;
        last_trunc = st.truncations;
    };
    try {
        initial(np);
    } catch (const DivergedError&) {
        NewtonParams retry = np;
        retry.scaling_enabled = false;
        try {
            initial(retry);
            np = retry;
        } catch (const DivergedError& e2) {
            rep.status = IRStatus::solver_diverged;
            rep.message = std::string("initial solve: ") + e2.what();
            IRStep s;
            s.res = 1.0;
            rep.steps.push_back(s);
            return {LdltFactor{DenseMatrix(n, 0), DenseMatrix(0, 0)}, rep};
        }
    }

    detail::StagnationMonitor mon;
    for (int i = 0;; ++i) {
        const ResidualLdlt split = res_fac_ldlt(A, L, S, Z, Y, cfg.eta_r, cfg.ur);
        IRStep step;
        step.index = i;
        step.res = relative_residual(A, L, S, Z, Y);
        step.res_norm = split.res_norm;
        step.newton_iterations = last_iters;
        step.truncations = last_trunc;
        step.rank = static_cast<int>(Z.cols());
        step.residual_rank = static_cast<int>(split.L.cols());
        const bool stagnant = mon.observe(step, rep.steps);
        rep.steps.push_back(step);

        const double den = normW + 2.0 * detail::product_norm(Z, &Y) * normA;
        const double rel_factored = den > 0.0 ? split.res_norm / den : split.res_norm;
        if (rel_factored <= tau) {
            rep.status = IRStatus::converged;
            break;
        }
        if (stagnant) {
            rep.status = IRStatus::stagnated;
            break;
        }
        if (i >= cfg.i_max) {
            rep.status = IRStatus::max_steps;
            break;
        }

        try {
            auto [fd, st] = solve_ldlt(A, round_matrix(split.L, cfg.us), round_matrix(split.S, cfg.us),
                                       np, cfg.u);
            detail::tally(rep, st);
            last_iters = st.iterations;
            last_trunc = st.truncations;
            auto [Zn, Yn] = sol_upt_ldlt(Z, Y, fd.Z, fd.Y, cfg.eta_s_value(), cfg.uc, psd);
            Z = round_matrix(Zn, cfg.u);
            Y = round_matrix(Yn, cfg.u);
        } catch (const DivergedError& e) {
            rep.status = IRStatus::solver_diverged;
            rep.message = "refinement step " + std::to_string(i + 1) + ": " + e.what();
            break;
        }
    }
    return {LdltFactor{std::move(Z), std::move(Y)}, rep};
}

} // namespace mplyap

#endif
