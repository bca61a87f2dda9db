#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "cli_options.hpp"
#include "mplyap/harness.hpp"

using namespace mplyap;

namespace {

ReportRow sample_row(const std::string& status = "converged") {
    ReportRow r;
    r.dataset = "synthetic_n100_q0.5_s1";
    r.n = 100;
    r.q = 0.5;
    r.formulation = "chol";
    r.us = "bf16";
    r.u = "fp64";
    r.ur = "fp64";
    r.uc = "fp64";
    r.res = 1.2345678901234567e-16;
    r.iter_total = 30;
    r.iter_max = 3;
    r.rank = 42;
    r.steps = 9;
    r.status = status;
    return r;
}

std::filesystem::path scratch_dir(const std::string& tag) {
    const auto d = std::filesystem::temp_directory_path() / ("mplyap_harness_" + tag);
    std::filesystem::create_directories(d);
    return d;
}

/// −I₄ with a two-column right-hand side, written as <stem>_A.mtx / <stem>_L.mtx.
std::filesystem::path write_toy(const std::filesystem::path& dir) {
    LyapunovProblem p;
    p.A = DenseMatrix::diagonal(std::vector<double>{-1.0, -1.0, -1.0, -1.0});
    p.L = DenseMatrix{{1.0, 0.0}, {0.0, 1.0}, {1.0, 1.0}, {0.5, -0.5}};
    write_problem(p, dir, "toy");
    return dir / "toy_A.mtx";
}

RunSpec parse_args(std::vector<std::string> args) {
    args.insert(args.begin(), "mplyap");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    return cli::parse(static_cast<int>(argv.size()), argv.data());
}

} // namespace

TEST(Report, EmptyRowsGiveHeaderOnly) {
    std::ostringstream csv, md;
    emit_report({}, ReportFormat::csv, csv);
    emit_report({}, ReportFormat::markdown, md);
    EXPECT_EQ(csv.str(),
              "dataset,n,q,formulation,us,u,ur,uc,res,iter_total,iter_max_single_call,rank,"
              "refinement_steps,status\n");
    const std::string table = md.str();
    EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 2);
}

TEST(Report, CsvRoundTrip) {
    std::vector<ReportRow> rows{sample_row(), sample_row("stagnated")};
    rows[1].dataset = "has,comma \"quoted\"";
    rows[1].q.reset();
    std::stringstream s;
    emit_report(rows, ReportFormat::csv, s);
    const std::string text = s.str();
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);
    EXPECT_EQ(parse_csv_report(s), rows);
}

TEST(Report, MarkdownFormatting) {
    std::ostringstream md;
    emit_report({sample_row(), sample_row("max_steps")}, ReportFormat::markdown, md);
    const std::string out = md.str();
    EXPECT_NE(out.find("| 1.23e-16 |"), std::string::npos);
    EXPECT_NE(out.find("| 42 |"), std::string::npos);
    EXPECT_NE(out.find("| -- |"), std::string::npos);
    EXPECT_EQ(out.find("1.2345"), std::string::npos);
}

TEST(Report, ParseRejectsBadInput) {
    std::istringstream empty(""), header("a,b\n");
    EXPECT_THROW(parse_csv_report(empty), ParseError);
    EXPECT_THROW(parse_csv_report(header), ParseError);
    std::stringstream s;
    emit_report({sample_row()}, ReportFormat::csv, s);
    std::string text = s.str();
    text.replace(text.find(",30,"), 4, ",xx,");
    std::istringstream bad(text);
    EXPECT_THROW(parse_csv_report(bad), ParseError);
}

TEST(Report, ExitCodes) {
    EXPECT_EQ(exit_code_for({}), 0);
    EXPECT_EQ(exit_code_for({sample_row()}), 0);
    EXPECT_EQ(exit_code_for({sample_row(), sample_row("stagnated")}), 2);
    EXPECT_EQ(exit_code_for({sample_row("error")}), 2);
}

TEST(Harness, DefaultSweep) {
    const RunSpec s;
    EXPECT_EQ(s.n_values, std::vector<std::size_t>{100});
    EXPECT_EQ(s.q_values, (std::vector<double>{0.1, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5}));
    EXPECT_EQ(s.formulations.size(), 2u);
    ASSERT_EQ(s.combos.size(), 5u);
    for (const auto& c : s.combos) {
        EXPECT_EQ(c.ur, c.u);
        EXPECT_EQ(c.uc, c.u);
        EXPECT_GE(c.us.u(), c.u.u());
    }
    EXPECT_EQ(s.m, 3u);
}

TEST(Harness, ConfigForScalesTolerances) {
    RunSpec s;
    s.tau_scale = 2.0;
    s.eta_s_scale = 5.0;
    const IRConfig c = s.config_for({bf16, fp32, fp32, fp32}, 50);
    EXPECT_DOUBLE_EQ(c.tau(50), 2.0 * 50 * fp32.u());
    EXPECT_DOUBLE_EQ(c.eta_s_value(), 5.0 * fp32.u());
}

TEST(Harness, DeterministicAndOrderedUnderThreads) {
    RunSpec s;
    s.n_values = {20};
    s.q_values = {0.5, 1.0, 2.0};
    s.combos = {{bf16, fp64, fp64, fp64}, {fp32, fp64, fp64, fp64}};
    const auto a = run_rows(s);
    s.threads = 4;
    const auto b = run_rows(s);
    ASSERT_EQ(a.size(), 12u);
    EXPECT_EQ(a, b);
    // Problem-major, then formulation, then combination.
    EXPECT_EQ(a[0].q, 0.5);
    EXPECT_EQ(a[0].formulation, "chol");
    EXPECT_EQ(a[0].us, "bf16");
    EXPECT_EQ(a[1].us, "fp32");
    EXPECT_EQ(a[2].formulation, "ldlt");
    EXPECT_EQ(a[4].q, 1.0);
    std::ostringstream x, y;
    emit_report(a, ReportFormat::csv, x);
    emit_report(b, ReportFormat::csv, y);
    EXPECT_EQ(x.str(), y.str());
}

TEST(Harness, RunOnToyFiles) {
    const auto dir = scratch_dir("toy");
    RunSpec s;
    s.mode = Mode::bench_files;
    s.files = {cli::files_for(write_toy(dir))};
    s.combos = {{fp64, fp64, fp64, fp64}};
    s.out = dir / "report.csv";
    EXPECT_EQ(run(s), 0);
    std::ifstream in(*s.out);
    const auto rows = parse_csv_report(in);
    ASSERT_EQ(rows.size(), 2u);
    for (const auto& r : rows) {
        EXPECT_EQ(r.dataset, "toy_A");
        EXPECT_TRUE(r.converged());
        EXPECT_LE(r.res, 1e-15);
        EXPECT_FALSE(r.q.has_value());
    }
    std::filesystem::remove_all(dir);
}

TEST(Harness, IoErrorsGiveOne) {
    RunSpec s;
    s.mode = Mode::bench_files;
    s.files = {{"/nonexistent/x_A.mtx", "/nonexistent/x_L.mtx", std::nullopt}};
    std::ostringstream sink;
    EXPECT_EQ(run(s, sink), 1);
}

TEST(Harness, UnconvergedRowGivesTwo) {
    RunSpec s;
    s.n_values = {30};
    s.q_values = {1.0};
    s.formulations = {Formulation::chol};
    s.combos = {{bf16, fp64, fp64, fp64}};
    s.i_max = 1;
    std::ostringstream out;
    EXPECT_EQ(run(s, out), 2);
    EXPECT_NE(out.str().find("max_steps"), std::string::npos);
}

TEST(Cli, FlagsReachSpec) {
    const RunSpec s = parse_args({"bench-synthetic", "--n", "40", "--n", "60", "--q", "1", "--m", "2", "--seed",
                                  "9", "--formulation", "ldlt", "--us", "bf16", "--u", "fp32", "--rho", "0.2",
                                  "--tau-scale", "3", "--eta-r", "1e-5", "--eta-s-scale", "20", "--imax", "7",
                                  "--kmax", "9", "--cache-inverses", "--format", "md", "--threads", "2"});
    EXPECT_EQ(s.mode, Mode::bench_synthetic);
    EXPECT_EQ(s.n_values, (std::vector<std::size_t>{40, 60}));
    EXPECT_EQ(s.q_values, std::vector<double>{1.0});
    EXPECT_EQ(s.m, 2u);
    EXPECT_EQ(s.seeds, std::vector<std::uint64_t>{9});
    EXPECT_EQ(s.formulations, std::vector<Formulation>{Formulation::ldlt});
    ASSERT_EQ(s.combos.size(), 1u);
    EXPECT_EQ(s.combos[0].us, bf16);
    EXPECT_EQ(s.combos[0].u, fp32);
    EXPECT_EQ(s.combos[0].ur, fp32);
    EXPECT_EQ(s.combos[0].uc, fp32);
    EXPECT_DOUBLE_EQ(s.rho, 0.2);
    EXPECT_DOUBLE_EQ(s.tau_scale, 3.0);
    EXPECT_DOUBLE_EQ(s.eta_r, 1e-5);
    EXPECT_DOUBLE_EQ(s.eta_s_scale, 20.0);
    EXPECT_EQ(s.i_max, 7);
    EXPECT_EQ(s.k_max, 9);
    EXPECT_TRUE(s.cache_inverses);
    EXPECT_EQ(s.format, ReportFormat::markdown);
    EXPECT_EQ(s.threads, 2u);
}

TEST(Cli, Defaults) {
    const RunSpec s = parse_args({"bench-synthetic"});
    EXPECT_EQ(s.combos.size(), 5u);
    EXPECT_EQ(s.q_values.size(), 8u);
    EXPECT_DOUBLE_EQ(s.rho, 0.1);
    EXPECT_DOUBLE_EQ(s.eta_r, 1e-4);
    EXPECT_DOUBLE_EQ(s.eta_s_scale, 10.0);
    EXPECT_EQ(s.i_max, 50);
    EXPECT_EQ(s.k_max, 50);
    EXPECT_FALSE(s.cache_inverses);
    EXPECT_EQ(s.format, ReportFormat::csv);
}

TEST(Cli, ConfigFileWithFlagOverride) {
    const auto dir = scratch_dir("config");
    const auto cfg = dir / "run.json";
    std::ofstream(cfg) << R"({"us": "bf16", "u": "fp64", "q": [0.5, 2], "rho": 0.3, "eta_s_scale": 4,
                              "cache-inverses": true, "format": "md"})";
    const RunSpec s = parse_args({"bench-synthetic", "--config", cfg.string(), "--rho", "0.05"});
    EXPECT_EQ(s.combos.size(), 1u);
    EXPECT_EQ(s.combos[0].us, bf16);
    EXPECT_EQ(s.q_values, (std::vector<double>{0.5, 2.0}));
    EXPECT_DOUBLE_EQ(s.rho, 0.05);
    EXPECT_DOUBLE_EQ(s.eta_s_scale, 4.0);
    EXPECT_TRUE(s.cache_inverses);
    EXPECT_EQ(s.format, ReportFormat::markdown);

    std::ofstream(cfg) << R"({"colour": "blue"})";
    EXPECT_THROW(parse_args({"bench-synthetic", "--config", cfg.string()}), Error);
    std::ofstream(cfg) << "{not json";
    EXPECT_THROW(parse_args({"bench-synthetic", "--config", cfg.string()}), Error);
    std::filesystem::remove_all(dir);
}

TEST(Cli, InvalidUsage) {
    auto exit_code = [](std::vector<std::string> args) {
        try {
            parse_args(std::move(args));
        } catch (const cli::Exit& e) {
            return e.code;
        }
        return -1;
    };
    EXPECT_EQ(exit_code({"bench-synthetic", "--us", "fp8"}), 1);
    EXPECT_EQ(exit_code({}), 1);
    EXPECT_EQ(exit_code({"solve", "--A", "a.mtx"}), 1);
    EXPECT_EQ(exit_code({"bench-synthetic", "--help"}), 0);
    // Solver more precise than working precision.
    EXPECT_THROW(parse_args({"bench-synthetic", "--us", "fp64", "--u", "fp32"}), Error);
    EXPECT_THROW(parse_args({"bench-synthetic", "--q", "-1"}), Error);
    EXPECT_THROW(parse_args({"bench-synthetic", "--n", "1"}), Error);
}

TEST(Cli, SolveSubcommand) {
    const auto dir = scratch_dir("solve");
    const auto a = write_toy(dir);
    const RunSpec s = parse_args({"solve", "--A", a.string(), "--L", (dir / "toy_L.mtx").string()});
    EXPECT_EQ(s.mode, Mode::solve);
    EXPECT_EQ(s.formulations, std::vector<Formulation>{Formulation::chol});
    ASSERT_EQ(s.combos.size(), 1u);
    EXPECT_EQ(s.combos[0].us, fp32);
    EXPECT_EQ(s.combos[0].u, fp64);
    write_matrix_market(dir / "toy_S.mtx", DenseMatrix::identity(2));
    const RunSpec t = parse_args({"solve", "--A", a.string(), "--L", (dir / "toy_L.mtx").string(), "--S",
                                  (dir / "toy_S.mtx").string()});
    EXPECT_EQ(t.formulations, std::vector<Formulation>{Formulation::ldlt});
    ASSERT_TRUE(t.files[0].S.has_value());
    std::filesystem::remove_all(dir);
}

TEST(Cli, FilesForNaming) {
    const auto dir = scratch_dir("files");
    const auto a = write_toy(dir);
    auto f = cli::files_for(a);
    EXPECT_EQ(f.L, dir / "toy_L.mtx");
    EXPECT_FALSE(f.S.has_value());
    write_matrix_market(dir / "toy_S.mtx", DenseMatrix::identity(2));
    f = cli::files_for(a);
    ASSERT_TRUE(f.S.has_value());
    EXPECT_EQ(*f.S, dir / "toy_S.mtx");
    EXPECT_THROW(cli::files_for(dir / "toy.mtx"), Error);
    std::filesystem::remove_all(dir);
}
