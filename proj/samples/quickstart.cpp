// Solve a small synthetic problem with a single-precision inner solver and
// double-precision refinement, then print the per-step residuals.
#include <cstdio>

#include "mplyap/problems.hpp"
#include "mplyap/refine.hpp"

int main() {
    const auto p = mplyap::gen_synthetic(100, 3, 1.0, 42);
    const auto cfg = mplyap::IRConfig::with(mplyap::fp32, mplyap::fp64);
    const auto [factor, report] = mplyap::ir_chol(p.A, p.L, cfg);

    for (const auto& s : report.steps)
        std::printf("step %d  res %.3e  newton %d  rank %d\n", s.index, s.res, s.newton_iterations, s.rank);
    std::printf("%s after %d Newton iterations, X = Z Z^T with Z %zux%zu\n",
                mplyap::to_string(report.status), report.total_newton, factor.Z.rows(), factor.Z.cols());
    return report.converged() ? 0 : 2;
}
