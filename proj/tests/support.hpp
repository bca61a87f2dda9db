#ifndef MPLYAP_TESTS_SUPPORT_HPP
#define MPLYAP_TESTS_SUPPORT_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>

#include <Eigen/Dense>

#include "mplyap/kernels.hpp"
#include "mplyap/matrix.hpp"
#include "mplyap/precision.hpp"

namespace testing_support {

using mplyap::DenseMatrix;

inline DenseMatrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& g, double sd = 1.0) {
    std::normal_distribution<double> d(0.0, sd);
    DenseMatrix M(r, c);
    for (double& v : M.data()) v = d(g);
    return M;
}

/// Nonsymmetric stable matrix: −(shift)·I plus a random perturbation of
/// spectral radius well below the shift.
inline DenseMatrix random_stable(std::size_t n, std::mt19937_64& g, double shift = 3.0) {
    DenseMatrix A = random_matrix(n, n, g, 1.0 / std::sqrt(static_cast<double>(n)));
    for (std::size_t i = 0; i < n; ++i) A(i, i) -= shift;
    return A;
}

inline DenseMatrix mul(const DenseMatrix& A, const DenseMatrix& B) {
    DenseMatrix C(A.rows(), B.cols());
    for (std::size_t i = 0; i < A.rows(); ++i)
        for (std::size_t j = 0; j < B.cols(); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < A.cols(); ++k) s += A(i, k) * B(k, j);
            C(i, j) = s;
        }
    return C;
}

inline DenseMatrix add(const DenseMatrix& A, const DenseMatrix& B, double b = 1.0) {
    DenseMatrix C = A;
    for (std::size_t i = 0; i < C.data().size(); ++i) C.data()[i] += b * B.data()[i];
    return C;
}

inline DenseMatrix gram(const DenseMatrix& Z) { return mul(Z, Z.transpose()); }

inline DenseMatrix gram(const DenseMatrix& Z, const DenseMatrix& Y) {
    return mul(mul(Z, Y), Z.transpose());
}

/// AX + XAᵀ + W, formed explicitly.
inline DenseMatrix lyap_residual(const DenseMatrix& A, const DenseMatrix& X, const DenseMatrix& W) {
    return add(add(mul(A, X), mul(X, A.transpose())), W);
}

inline double fro(const DenseMatrix& A) {
    double s = 0.0;
    for (double v : A.data()) s += v * v;
    return std::sqrt(s);
}

inline double rel_diff(const DenseMatrix& A, const DenseMatrix& B) {
    const double d = fro(add(A, B, -1.0));
    const double b = fro(B);
    return b > 0.0 ? d / b : d;
}

inline Eigen::MatrixXd to_eigen(const DenseMatrix& A) {
    Eigen::MatrixXd E(A.rows(), A.cols());
    for (std::size_t i = 0; i < A.rows(); ++i)
        for (std::size_t j = 0; j < A.cols(); ++j) E(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = A(i, j);
    return E;
}

inline DenseMatrix from_eigen(const Eigen::MatrixXd& E) {
    DenseMatrix A(static_cast<std::size_t>(E.rows()), static_cast<std::size_t>(E.cols()));
    for (std::size_t i = 0; i < A.rows(); ++i)
        for (std::size_t j = 0; j < A.cols(); ++j) A(i, j) = E(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    return A;
}

/// Nearest PSD matrix to the symmetric part of M (negative eigenvalues
/// clipped), optionally dropping eigenvalues below rel·max|λ|.
inline DenseMatrix psd_part(const DenseMatrix& M, double rel = 0.0) {
    const Eigen::MatrixXd E = to_eigen(M);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (E + E.transpose()));
    Eigen::VectorXd d = es.eigenvalues();
    const double cut = rel * d.cwiseAbs().maxCoeff();
    for (auto& v : d) v = (v > 0.0 && v >= cut) ? v : 0.0;
    return from_eigen(es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose());
}

/// X solving AX + XAᵀ + W = 0 through Eigen's LU on the Kronecker system.
inline DenseMatrix lyap_oracle(const DenseMatrix& A, const DenseMatrix& W) {
    const auto n = static_cast<Eigen::Index>(A.rows());
    const Eigen::MatrixXd a = to_eigen(A);
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n * n, n * n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            K.block(i * n, j * n, n, n) += I(i, j) * a;
            K.block(i * n, j * n, n, n) += a(i, j) * I;
        }
    const Eigen::MatrixXd w = to_eigen(W);
    const Eigen::VectorXd x = K.fullPivLu().solve(-Eigen::Map<const Eigen::VectorXd>(w.data(), n * n));
    return from_eigen(Eigen::Map<const Eigen::MatrixXd>(x.data(), n, n));
}

/// Reference rounding to a binary format with t significand bits and
/// exponent range [emin, emax]: scale |x| so one unit is the target quantum,
/// split into floor and remainder, and resolve the remainder against one half
/// with ties to the even neighbour. All steps are exact in 64-bit.
inline double reference_round(double x, int t, int emin, int emax) {
    if (std::isnan(x) || std::isinf(x) || x == 0.0) return x;
    const double a = std::fabs(x);
    int e2 = 0;
    (void)std::frexp(a, &e2); // a = f·2^e2, f ∈ [0.5, 1)
    const int E = e2 - 1;
    const int quantum = std::max(E, emin) - (t - 1);
    const double scaled = std::ldexp(a, -quantum);
    double lo = std::floor(scaled);
    const double rem = scaled - lo;
    if (rem > 0.5 || (rem == 0.5 && std::fmod(lo, 2.0) != 0.0)) lo += 1.0;
    double r = std::ldexp(lo, quantum);
    const double xmax = std::ldexp(2.0 - std::ldexp(1.0, 1 - t), emax);
    if (r > xmax) r = std::numeric_limits<double>::infinity();
    return std::copysign(r, x);
}

inline double reference_round(double x, const mplyap::PrecisionFormat& f) {
    return reference_round(x, f.t, f.emin(), f.emax());
}

} // namespace testing_support

#endif
