#ifndef MPLYAP_PRECISION_HPP
#define MPLYAP_PRECISION_HPP

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

#include "mplyap/error.hpp"
#include "mplyap/matrix.hpp"

namespace mplyap {

enum class Format { bf16, fp16, fp32, fp64 };

namespace detail {
constexpr double pow2(int k) {
    double r = 1.0;
    if (k >= 0)
        for (int i = 0; i < k; ++i) r *= 2.0;
    else
        for (int i = 0; i < -k; ++i) r *= 0.5;
    return r;
}
} // namespace detail

/// A binary floating-point format: t significand bits (with the implicit
/// bit) and e exponent bits, IEEE-style bias and gradual underflow.
struct PrecisionFormat {
    Format id;
    std::string_view name;
    int t;
    int e;

    constexpr int emax() const { return (1 << (e - 1)) - 1; }
    constexpr int emin() const { return 1 - emax(); }
    constexpr double u() const { return detail::pow2(-t); }
    constexpr double x_min() const { return detail::pow2(emin()); }
    constexpr double x_max() const { return (2.0 - detail::pow2(1 - t)) * detail::pow2(emax()); }
    /// Smallest positive subnormal.
    constexpr double x_sub() const { return detail::pow2(emin() - t + 1); }

    friend constexpr bool operator==(const PrecisionFormat& a, const PrecisionFormat& b) {
        return a.id == b.id;
    }
};

inline constexpr PrecisionFormat bf16{Format::bf16, "bf16", 8, 8};
inline constexpr PrecisionFormat fp16{Format::fp16, "fp16", 11, 5};
inline constexpr PrecisionFormat fp32{Format::fp32, "fp32", 24, 8};
inline constexpr PrecisionFormat fp64{Format::fp64, "fp64", 53, 11};

inline constexpr std::array<PrecisionFormat, 4> all_formats{bf16, fp16, fp32, fp64};

inline PrecisionFormat parse_format(std::string_view name) {
    for (const auto& f : all_formats)
        if (f.name == name) return f;
    throw Error("unknown precision format '" + std::string(name) +
                "' (expected bf16, fp16, fp32 or fp64)");
}

inline constexpr PrecisionFormat format_of(Format id) {
    switch (id) {
    case Format::bf16: return bf16;
    case Format::fp16: return fp16;
    case Format::fp32: return fp32;
    case Format::fp64: break;
    }
    return fp64;
}

// Rounding functors. Each maps a double to the nearest value of the target
// format (ties to even), through the subnormal range, overflowing to ±inf.

struct ExactRounder {
    double operator()(double x) const noexcept { return x; }
};

struct Fp32Rounder {
    double operator()(double x) const noexcept { return static_cast<double>(static_cast<float>(x)); }
};

struct BitRounder {
    int t;
    int emin;
    double xmax;

    double operator()(double x) const noexcept {
        if (!std::isfinite(x) || x == 0.0) return x;
        const auto bits = std::bit_cast<std::uint64_t>(x);
        const std::uint64_t sign = bits & (std::uint64_t{1} << 63);
        const std::uint64_t mag = bits ^ sign;
        const int biased = static_cast<int>(mag >> 52);
        // Doubles below 2^-1022 are far under half the smallest subnormal of
        // every emulated format.
        if (biased == 0) return std::bit_cast<double>(sign);
        const int ex = biased - 1023;
        if (ex >= emin) {
            // Normal range: round the stored bits in place; a carry out of the
            // significand bumps the exponent, which is exactly right.
            const std::uint64_t low = (std::uint64_t{1} << (53 - t)) - 1;
            const std::uint64_t r = (mag + (low >> 1) + ((mag >> (53 - t)) & 1)) & ~low;
            const double v = std::bit_cast<double>(r);
            return std::bit_cast<double>(std::bit_cast<std::uint64_t>(v > xmax ? INFINITY : v) | sign);
        }
        const std::uint64_t m = (mag & ((std::uint64_t{1} << 52) - 1)) | (std::uint64_t{1} << 52);
        const int q = std::max(ex, emin) - t + 1; // exponent of one ulp
        const int drop = q - (ex - 52);
        std::uint64_t r = 0;
        if (drop < 64) {
            const std::uint64_t half = std::uint64_t{1} << (drop - 1);
            r = (m + (half - 1) + ((m >> drop) & 1)) >> drop;
        }
        double v = std::ldexp(static_cast<double>(r), q);
        if (v > xmax) v = INFINITY;
        return sign ? -v : v;
    }
};

/// Calls fn with the rounding functor for fmt. Kernels are instantiated once
/// per functor type so the fp64 path carries no rounding overhead.
template <class Fn>
decltype(auto) with_rounder(const PrecisionFormat& fmt, Fn&& fn) {
    switch (fmt.id) {
    case Format::fp64: return fn(ExactRounder{});
    case Format::fp32: return fn(Fp32Rounder{});
    case Format::bf16:
    case Format::fp16: break;
    }
    return fn(BitRounder{fmt.t, fmt.emin(), fmt.x_max()});
}

inline double round_scalar(double x, const PrecisionFormat& fmt) {
    return with_rounder(fmt, [x](auto rnd) { return rnd(x); });
}

inline DenseMatrix round_matrix(const DenseMatrix& A, const PrecisionFormat& fmt) {
    if (fmt.id == Format::fp64) return A;
    DenseMatrix B = A;
    with_rounder(fmt, [&](auto rnd) {
        for (double& v : B.data()) v = rnd(v);
    });
    return B;
}

enum class Op { add, sub, mul, div, sqrt };

/// fl(a op b): exact-in-double result, then rounded to fmt. For sqrt, b is ignored.
inline double fp_op(Op op, double a, double b, const PrecisionFormat& fmt) {
    double r = 0.0;
    switch (op) {
    case Op::add: r = a + b; break;
    case Op::sub: r = a - b; break;
    case Op::mul: r = a * b; break;
    case Op::div: r = a / b; break;
    case Op::sqrt: r = std::sqrt(a); break;
    }
    return round_scalar(r, fmt);
}

} // namespace mplyap

#endif
