#ifndef MPLYAP_PROBLEMS_HPP
#define MPLYAP_PROBLEMS_HPP

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mplyap/error.hpp"
#include "mplyap/matrix.hpp"

namespace mplyap {

struct ProblemInfo {
    std::string name;
    std::size_t n = 0;
    std::size_t m = 0;
    std::optional<double> q;
    std::optional<std::uint64_t> seed;
};

/// AX + XAᵀ + LSLᵀ = 0 (S = I when absent).
struct LyapunovProblem {
    DenseMatrix A;
    DenseMatrix L;
    std::optional<DenseMatrix> S;
    ProblemInfo info;

    DenseMatrix S_or_identity() const { return S ? *S : DenseMatrix::identity(L.cols()); }
};

/// Counter-based standard normal stream.
///
/// Draw k (k = 0, 1, ...) uses the pair x = splitmix64(seed, 2⌊k/2⌋),
/// y = splitmix64(seed, 2⌊k/2⌋ + 1), with u1 = ((x >> 11) + 1)·2⁻⁵³ ∈ (0,1] and
/// u2 = (y >> 11)·2⁻⁵³; even k gives √(−2 ln u1)·cos(2πu2), odd k the sine.
/// splitmix64(seed, c) is the splitmix64 finalizer applied to
/// seed + (c + 1)·0x9E3779B97F4A7C15.
class NormalStream {
public:
    explicit NormalStream(std::uint64_t seed) : seed_(seed) {}

    static std::uint64_t splitmix64(std::uint64_t seed, std::uint64_t counter) {
        std::uint64_t z = seed + (counter + 1) * 0x9E3779B97F4A7C15ull;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    double operator()() {
        const std::uint64_t k = count_++;
        const std::uint64_t pair = k / 2;
        const double u1 = static_cast<double>((splitmix64(seed_, 2 * pair) >> 11) + 1) * 0x1p-53;
        const double u2 = static_cast<double>(splitmix64(seed_, 2 * pair + 1) >> 11) * 0x1p-53;
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * std::numbers::pi * u2;
        return (k % 2 == 0) ? r * std::cos(a) : r * std::sin(a);
    }

private:
    std::uint64_t seed_;
    std::uint64_t count_ = 0;
};

/// Symmetric orthogonal V(i,j) = √(2/(n+1))·sin(ijπ/(n+1)), 1-based i, j.
inline DenseMatrix sine_orthogonal(std::size_t n) {
    DenseMatrix V(n, n);
    const double c = std::sqrt(2.0 / static_cast<double>(n + 1));
    for (std::size_t i = 1; i <= n; ++i)
        for (std::size_t j = 1; j <= n; ++j)
            V(i - 1, j - 1) = c * std::sin(static_cast<double>(i * j) * std::numbers::pi /
                                           static_cast<double>(n + 1));
    return V;
}

/// Synthetic problem: L ~ N(0,1) (n×m, filled column by column) and
/// A = −V·diag(s)·Vᵀ with s_j = 10^{q(j−1)/(n−1)}, so A is symmetric negative
/// definite with eigenvalues −s_j.
inline LyapunovProblem gen_synthetic(std::size_t n, std::size_t m, double q, std::uint64_t seed) {
    if (n < 2) throw Error("gen_synthetic: n must be at least 2");
    if (m < 1) throw Error("gen_synthetic: m must be at least 1");
    if (!(q >= 0.0)) throw Error("gen_synthetic: q must be nonnegative");
    NormalStream rng(seed);
    DenseMatrix L(n, m);
    for (std::size_t j = 0; j < m; ++j)
        for (std::size_t i = 0; i < n; ++i) L(i, j) = rng();
    const DenseMatrix V = sine_orthogonal(n);
    std::vector<double> s(n);
    for (std::size_t j = 0; j < n; ++j)
        s[j] = std::pow(10.0, q * static_cast<double>(j) / static_cast<double>(n - 1));
    DenseMatrix A(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < n; ++k) acc += V(i, k) * s[k] * V(j, k);
            A(i, j) = A(j, i) = -acc;
        }
    }
    LyapunovProblem p{std::move(A), std::move(L), std::nullopt, {}};
    std::ostringstream name;
    name << "synthetic_n" << n << "_q" << q << "_s" << seed;
    p.info = {name.str(), n, m, q, seed};
    return p;
}

/// Dense solution of AX + XAᵀ + W = 0 through the n²×n² Kronecker system
/// (I⊗A + A⊗I)·vec(X) = −vec(W), by 64-bit LU with partial pivoting.
/// Small problems only.
inline DenseMatrix kron_oracle(const DenseMatrix& A, const DenseMatrix& W) {
    constexpr std::size_t max_n = 64;
    const std::size_t n = A.rows();
    if (!A.is_square() || W.rows() != n || W.cols() != n)
        throw DimensionError("kron_oracle: A and W must both be n×n");
    if (n > max_n) throw Error("kron_oracle: n = " + std::to_string(n) + " exceeds the limit of 64");
    const std::size_t N = n * n;
    std::vector<double> M(N * N, 0.0);
    std::vector<double> b(N);
    auto at = [&](std::size_t r, std::size_t c) -> double& { return M[r * N + c]; };
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t r = i + j * n;
            b[r] = -W(i, j);
            for (std::size_t k = 0; k < n; ++k) at(r, k + j * n) += A(i, k); // I ⊗ A
            for (std::size_t l = 0; l < n; ++l) at(r, i + l * n) += A(j, l); // A ⊗ I
        }
    }
    double scale = 0.0;
    for (double v : M) scale = std::max(scale, std::abs(v));
    for (std::size_t k = 0; k < N; ++k) {
        std::size_t p = k;
        for (std::size_t i = k + 1; i < N; ++i)
            if (std::abs(at(i, k)) > std::abs(at(p, k))) p = i;
        if (std::abs(at(p, k)) <= scale * 1e-14)
            throw Error("kron_oracle: Kronecker system is singular (A has eigenvalue pairs summing to 0)");
        if (p != k) {
            for (std::size_t c = 0; c < N; ++c) std::swap(at(k, c), at(p, c));
            std::swap(b[k], b[p]);
        }
        for (std::size_t i = k + 1; i < N; ++i) {
            const double l = at(i, k) / at(k, k);
            if (l == 0.0) continue;
            for (std::size_t c = k + 1; c < N; ++c) at(i, c) -= l * at(k, c);
            b[i] -= l * b[k];
        }
    }
    for (std::size_t k = N; k-- > 0;) {
        double s = b[k];
        for (std::size_t c = k + 1; c < N; ++c) s -= at(k, c) * b[c];
        b[k] = s / at(k, k);
    }
    DenseMatrix X(n, n);
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < n; ++i) X(i, j) = b[i + j * n];
    DenseMatrix Xs(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) Xs(i, j) = 0.5 * (X(i, j) + X(j, i));
    return Xs;
}

// ---- Matrix Market --------------------------------------------------------

/// Reads a real Matrix Market file (coordinate or array; general or
/// symmetric). Coordinate entries are densified, duplicates summed.
inline DenseMatrix read_matrix_market(std::istream& in) {
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(in, line)) throw ParseError("empty input", 1);
    ++lineno;
    std::istringstream hs(line);
    std::string banner, object, layout, field, symmetry;
    hs >> banner >> object >> layout >> field >> symmetry;
    auto lower = [](std::string s) {
        std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
        return s;
    };
    if (banner != "%%MatrixMarket" || lower(object) != "matrix")
        throw ParseError("missing '%%MatrixMarket matrix' header", lineno);
    layout = lower(layout);
    field = lower(field);
    symmetry = lower(symmetry);
    if (layout != "coordinate" && layout != "array")
        throw ParseError("unsupported layout '" + layout + "'", lineno);
    if (field != "real" && field != "integer" && field != "double")
        throw ParseError("unsupported field '" + field + "'", lineno);
    if (symmetry != "general" && symmetry != "symmetric")
        throw ParseError("unsupported symmetry '" + symmetry + "'", lineno);
    const bool sym = symmetry == "symmetric";

    auto next_data_line = [&](std::string& out) {
        while (std::getline(in, out)) {
            ++lineno;
            const auto pos = out.find_first_not_of(" \t\r");
            if (pos == std::string::npos || out[pos] == '%') continue;
            return true;
        }
        return false;
    };

    if (!next_data_line(line)) throw ParseError("missing size line", lineno + 1);
    std::istringstream ss(line);
    long long rows = -1, cols = -1, nnz = -1;
    ss >> rows >> cols;
    if (layout == "coordinate") ss >> nnz;
    if (!ss || rows < 0 || cols < 0 || (layout == "coordinate" && nnz < 0))
        throw ParseError("malformed size line", lineno);
    if (sym && rows != cols) throw ParseError("symmetric matrix must be square", lineno);
    DenseMatrix M(static_cast<std::size_t>(rows), static_cast<std::size_t>(cols));

    if (layout == "coordinate") {
        for (long long k = 0; k < nnz; ++k) {
            if (!next_data_line(line)) throw ParseError("expected " + std::to_string(nnz) + " entries", lineno + 1);
            std::istringstream es(line);
            long long i = 0, j = 0;
            double v = 0.0;
            es >> i >> j >> v;
            if (!es) throw ParseError("malformed entry", lineno);
            if (i < 1 || j < 1 || i > rows || j > cols) throw ParseError("index out of range", lineno);
            M(static_cast<std::size_t>(i - 1), static_cast<std::size_t>(j - 1)) += v;
            if (sym && i != j) M(static_cast<std::size_t>(j - 1), static_cast<std::size_t>(i - 1)) += v;
        }
    } else {
        // Column-major; symmetric arrays list the lower triangle only.
        for (long long j = 0; j < cols; ++j) {
            for (long long i = sym ? j : 0; i < rows; ++i) {
                if (!next_data_line(line)) throw ParseError("too few array entries", lineno + 1);
                std::istringstream es(line);
                double v = 0.0;
                es >> v;
                if (!es) throw ParseError("malformed value", lineno);
                M(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = v;
                if (sym) M(static_cast<std::size_t>(j), static_cast<std::size_t>(i)) = v;
            }
        }
    }
    return M;
}

inline DenseMatrix read_matrix_market(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    try {
        return read_matrix_market(in);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what(), e.line());
    }
}

/// Writes array/general format with 17 significant digits (exact round trip).
inline void write_matrix_market(std::ostream& out, const DenseMatrix& M) {
    out << "%%MatrixMarket matrix array real general\n" << M.rows() << ' ' << M.cols() << '\n';
    char buf[32];
    for (std::size_t j = 0; j < M.cols(); ++j) {
        for (std::size_t i = 0; i < M.rows(); ++i) {
            std::snprintf(buf, sizeof buf, "%.17g", M(i, j));
            out << buf << '\n';
        }
    }
}

inline void write_matrix_market(const std::filesystem::path& path, const DenseMatrix& M) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    write_matrix_market(out, M);
    if (!out) throw Error("write failed: " + path.string());
}

inline LyapunovProblem load_problem(const std::filesystem::path& path_A,
                                    const std::filesystem::path& path_L,
                                    const std::optional<std::filesystem::path>& path_S = std::nullopt) {
    LyapunovProblem p;
    p.A = read_matrix_market(path_A);
    p.L = read_matrix_market(path_L);
    if (!p.A.is_square()) throw DimensionError(path_A.string() + ": A must be square");
    if (p.L.rows() != p.A.rows())
        throw DimensionError("shape mismatch: A is " + std::to_string(p.A.rows()) + "x" +
                             std::to_string(p.A.cols()) + " but L has " + std::to_string(p.L.rows()) +
                             " rows");
    if (path_S) {
        p.S = read_matrix_market(*path_S);
        if (!p.S->is_square() || p.S->rows() != p.L.cols())
            throw DimensionError(path_S->string() + ": S must be m×m with m = columns of L");
    }
    p.info.name = path_A.stem().string();
    p.info.n = p.A.rows();
    p.info.m = p.L.cols();
    return p;
}

/// Writes A, L (and S) next to each other as <stem>_A.mtx, <stem>_L.mtx, <stem>_S.mtx.
inline void write_problem(const LyapunovProblem& p, const std::filesystem::path& dir,
                          const std::string& stem) {
    write_matrix_market(dir / (stem + "_A.mtx"), p.A);
    write_matrix_market(dir / (stem + "_L.mtx"), p.L);
    if (p.S) write_matrix_market(dir / (stem + "_S.mtx"), *p.S);
}

} // namespace mplyap

#endif
