#include <bit>
#include <cmath>
#include <cstdio>
#include <string>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "mplyap/precision.hpp"
#include "support.hpp"

using namespace mplyap;
using testing_support::reference_round;

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();

bool same_bits(double a, double b) { return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b); }

// Random doubles spread over the whole exponent range of fmt, a few binades
// either side, with full 53-bit significands.
double spread_value(std::mt19937_64& g, const PrecisionFormat& f) {
    std::uniform_int_distribution<int> ex(f.emin() - f.t - 3, f.emax() + 2);
    const double sig = 1.0 + static_cast<double>(g() >> 12) * 0x1p-52;
    const double v = std::ldexp(sig, ex(g));
    return (g() & 1) ? -v : v;
}

} // namespace

TEST(Precision, FormatParameters) {
    EXPECT_EQ(bf16.t, 8);
    EXPECT_EQ(bf16.e, 8);
    EXPECT_EQ(fp16.t, 11);
    EXPECT_EQ(fp16.e, 5);
    EXPECT_EQ(fp32.t, 24);
    EXPECT_EQ(fp32.e, 8);
    EXPECT_EQ(fp64.t, 53);
    EXPECT_EQ(fp64.e, 11);
}

TEST(Precision, DerivedQuantitiesToThreeFigures) {
    struct Row {
        PrecisionFormat f;
        double u, xmin, xmax;
    };
    // Published three-figure values; fp64's x_min = 2.2251e-308 is listed
    // truncated (2.22) rather than rounded, so allow one unit in the third figure.
    const Row rows[] = {{bf16, 3.91e-3, 1.18e-38, 3.39e38},
                        {fp16, 4.88e-4, 6.10e-5, 6.55e4},
                        {fp32, 5.96e-8, 1.18e-38, 3.40e38},
                        {fp64, 1.11e-16, 2.22e-308, 1.79e308}};
    auto agrees = [](double computed, double table) {
        const double unit = std::pow(10.0, std::floor(std::log10(table)) - 2);
        return std::fabs(computed / unit - table / unit) <= 1.0;
    };
    for (const auto& r : rows) {
        SCOPED_TRACE(std::string(r.f.name));
        EXPECT_TRUE(agrees(r.f.u(), r.u));
        EXPECT_TRUE(agrees(r.f.x_min(), r.xmin));
        EXPECT_TRUE(agrees(r.f.x_max(), r.xmax));
    }
    EXPECT_NEAR(fp64.x_max() / 1e308, 1.80, 0.005);
}

TEST(Precision, ParseFormat) {
    EXPECT_EQ(parse_format("bf16"), bf16);
    EXPECT_EQ(parse_format("fp64"), fp64);
    EXPECT_THROW(parse_format("fp8"), Error);
}

TEST(Precision, RoundScalarExamples) {
    EXPECT_EQ(round_scalar(0.0, bf16), 0.0);
    EXPECT_EQ(round_scalar(7.0e4, fp16), inf);
    EXPECT_EQ(round_scalar(-7.0e4, fp16), -inf);
    EXPECT_EQ(round_scalar(1.0 + std::ldexp(1.0, -9), bf16), 1.0);
    // 1 + 2^-8 is the tie between 1 and 1 + 2^-7; just above it rounds up.
    EXPECT_EQ(round_scalar(1.0 + std::ldexp(1.0, -8), bf16), 1.0);
    EXPECT_EQ(round_scalar(1.0 + std::ldexp(1.0, -8) + std::ldexp(1.0, -30), bf16), 1.0 + std::ldexp(1.0, -7));
    // Tie between 1+2^-7 and 1+2^-6 goes to the even significand 1+2^-6.
    EXPECT_EQ(round_scalar(1.0 + 3 * std::ldexp(1.0, -8), bf16), 1.0 + std::ldexp(1.0, -6));
}

TEST(Precision, SignedZeroAndNanPropagate) {
    EXPECT_TRUE(std::signbit(round_scalar(-0.0, fp16)));
    EXPECT_TRUE(std::signbit(round_scalar(-1e-300, bf16)));
    EXPECT_TRUE(std::isnan(round_scalar(std::nan(""), bf16)));
    EXPECT_EQ(round_scalar(inf, fp16), inf);
}

TEST(Precision, RoundMatrixExamples) {
    const DenseMatrix I = DenseMatrix::identity(3);
    EXPECT_EQ(round_matrix(I, fp16), I);

    // 6.1e-5 lies just above x_min(fp16) = 2^-14; the nearest fp16 value is
    // 2^-14 + 2^-24·k with k = round((6.1e-5 − 2^-14)/2^-24).
    const double x = 6.1e-5;
    const double xmin = std::ldexp(1.0, -14);
    const double expected = xmin + std::ldexp(std::round((x - xmin) / std::ldexp(1.0, -24)), -24);
    EXPECT_EQ(round_matrix(DenseMatrix{{x}}, fp16)(0, 0), expected);

    std::mt19937_64 g(7);
    const DenseMatrix R = testing_support::random_matrix(4, 4, g);
    EXPECT_EQ(round_matrix(R, fp64), R);
}

TEST(Precision, FpOpExamples) {
    EXPECT_EQ(fp_op(Op::add, 1.0, bf16.u() / 2, bf16), 1.0);
    EXPECT_EQ(fp_op(Op::mul, 256.0, 256.0, fp16), inf);
    const volatile double a = 0.1, b = 0.2;
    EXPECT_TRUE(same_bits(fp_op(Op::add, 0.1, 0.2, fp64), a + b));
    EXPECT_EQ(fp_op(Op::sqrt, 2.0, 0.0, bf16), round_scalar(std::sqrt(2.0), bf16));
    EXPECT_EQ(fp_op(Op::div, 1.0, 3.0, fp32), static_cast<double>(1.0f / 3.0f));
    EXPECT_EQ(fp_op(Op::sub, 1.0, 1.0, fp16), 0.0);
}

TEST(Precision, AgreesWithReferenceOnBoundaryValues) {
    for (const auto& f : all_formats) {
        SCOPED_TRACE(std::string(f.name));
        const double xsub = f.x_sub(), xmin = f.x_min(), xmax = f.x_max();
        const double ulp_max = std::ldexp(1.0, f.emax() - f.t + 1);
        std::vector<double> cases{
            0.0,          xsub,           xsub / 2,          xsub * 0.75,     xsub * 1.5,
            xsub * 2.5,   xmin,           xmin - xsub,       xmin - xsub / 2, xmin + xsub / 2,
            xmin * (1 - 1e-9), xmax,      xmax + ulp_max / 2, xmax + ulp_max / 4,
            std::nextafter(xmax + ulp_max / 2, 0.0), 1.0,   1.0 + f.u(),       1.0 + f.u() * 3,
            1.0 - f.u() / 2, 2.0 - f.u(), 1e-300,         4.9e-324};
        if (f.id == Format::fp64) cases.resize(cases.size() - 2);
        for (double c : cases) {
            for (double v : {c, -c}) {
                EXPECT_TRUE(same_bits(round_scalar(v, f), reference_round(v, f)))
                    << "x=" << v << " got " << round_scalar(v, f) << " ref " << reference_round(v, f);
            }
        }
    }
}

TEST(Precision, AgreesWithReferenceOnRandomValues) {
    std::mt19937_64 g(2024);
    for (const auto& f : all_formats) {
        int mismatches = 0;
        for (int i = 0; i < 100000; ++i) {
            const double x = spread_value(g, f);
            if (!same_bits(round_scalar(x, f), reference_round(x, f))) ++mismatches;
        }
        EXPECT_EQ(mismatches, 0) << f.name;
    }
}

TEST(Precision, MidpointsRoundToEven) {
    std::mt19937_64 g(5);
    for (const auto& f : {bf16, fp16, fp32}) {
        std::uniform_int_distribution<int> ex(f.emin() - f.t, f.emax() - f.t);
        for (int i = 0; i < 20000; ++i) {
            // k has t+1 bits and is odd, so k·2^s sits exactly between two
            // neighbours with t-bit significands.
            const std::uint64_t k = (g() >> (63 - f.t)) | (std::uint64_t{1} << f.t) | 1;
            const double x = std::ldexp(static_cast<double>(k), ex(g));
            ASSERT_TRUE(same_bits(round_scalar(x, f), reference_round(x, f))) << f.name << " x=" << x;
        }
    }
}

TEST(Precision, Idempotent) {
    std::mt19937_64 g(11);
    for (const auto& f : all_formats) {
        for (int i = 0; i < 1000000; ++i) {
            const double r = round_scalar(spread_value(g, f), f);
            ASSERT_TRUE(same_bits(round_scalar(r, f), r)) << f.name;
        }
    }
}

TEST(Precision, Monotone) {
    std::mt19937_64 g(12);
    for (const auto& f : all_formats) {
        for (int i = 0; i < 100000; ++i) {
            double x = spread_value(g, f), y = spread_value(g, f);
            if (x > y) std::swap(x, y);
            ASSERT_LE(round_scalar(x, f), round_scalar(y, f)) << f.name;
            const double xn = std::nextafter(x, inf);
            ASSERT_LE(round_scalar(x, f), round_scalar(xn, f)) << f.name;
        }
    }
}

TEST(Precision, Fp64IsIdentity) {
    std::mt19937_64 g(13);
    for (int i = 0; i < 100000; ++i) {
        const double x = std::bit_cast<double>(g());
        if (!std::isfinite(x)) continue;
        ASSERT_TRUE(same_bits(round_scalar(x, fp64), x));
    }
}

TEST(Precision, RelativeErrorBound) {
    std::mt19937_64 g(14);
    for (const auto& f : all_formats) {
        for (int i = 0; i < 100000; ++i) {
            const double x = spread_value(g, f);
            const double r = round_scalar(x, f);
            if (!std::isfinite(r) || std::fabs(x) < f.x_min()) continue;
            ASSERT_LE(std::fabs(r - x), f.u() * std::fabs(x)) << f.name << " x=" << x;
        }
    }
}
