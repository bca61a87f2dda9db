#ifndef MPLYAP_HARNESS_HPP
#define MPLYAP_HARNESS_HPP

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "mplyap/error.hpp"
#include "mplyap/precision.hpp"
#include "mplyap/problems.hpp"
#include "mplyap/refine.hpp"

namespace mplyap {

enum class Mode { solve, bench_synthetic, bench_files };
enum class Formulation { chol, ldlt };
enum class ReportFormat { csv, markdown };

inline const char* to_string(Formulation f) { return f == Formulation::chol ? "chol" : "ldlt"; }

inline Formulation parse_formulation(const std::string& s) {
    if (s == "chol") return Formulation::chol;
    if (s == "ldlt") return Formulation::ldlt;
    throw Error("unknown formulation '" + s + "' (expected chol or ldlt)");
}

struct PrecisionCombo {
    PrecisionFormat us = fp32;
    PrecisionFormat u = fp64;
    PrecisionFormat ur = fp64;
    PrecisionFormat uc = fp64;
};

/// The five solver/working combinations of the synthetic benchmark grid.
inline std::vector<PrecisionCombo> default_combos() {
    return {{bf16, fp32, fp32, fp32},
            {fp32, fp32, fp32, fp32},
            {bf16, fp64, fp64, fp64},
            {fp32, fp64, fp64, fp64},
            {fp64, fp64, fp64, fp64}};
}

struct ProblemFiles {
    std::filesystem::path A;
    std::filesystem::path L;
    std::optional<std::filesystem::path> S;
};

struct RunSpec {
    Mode mode = Mode::bench_synthetic;
    std::vector<Formulation> formulations{Formulation::chol, Formulation::ldlt};
    std::vector<PrecisionCombo> combos = default_combos();
    std::vector<std::size_t> n_values{100};
    std::vector<double> q_values{0.1, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5};
    std::vector<std::uint64_t> seeds{1};
    std::size_t m = 3;
    std::vector<ProblemFiles> files;

    double tau_scale = 1.0;
    double eta_r = 1e-4;
    double eta_s_scale = 10.0;
    double rho = 0.1;
    int i_max = 50;
    int k_max = 50;
    bool cache_inverses = false;

    std::optional<std::filesystem::path> out;
    ReportFormat format = ReportFormat::csv;
    unsigned threads = 1;

    IRConfig config_for(const PrecisionCombo& c, std::size_t n) const {
        IRConfig cfg;
        cfg.us = c.us;
        cfg.u = c.u;
        cfg.ur = c.ur;
        cfg.uc = c.uc;
        cfg.tau_I = tau_scale * static_cast<double>(n) * c.u.u();
        cfg.eta_s = eta_s_scale * c.u.u();
        cfg.eta_r = eta_r;
        cfg.i_max = i_max;
        cfg.newton.k_max = k_max;
        cfg.newton.rho = rho;
        cfg.cache_inverses = cache_inverses;
        return cfg;
    }

    /// Throws Error for an unusable spec, including any precision combination
    /// that violates u_s ≥ u ≥ u_c, u ≥ u_r.
    void validate() const {
        if (formulations.empty()) throw Error("no formulation selected");
        if (combos.empty()) throw Error("no precision combination selected");
        for (const auto& c : combos) config_for(c, 1).validate();
        if (!(tau_scale > 0.0)) throw Error("--tau-scale must be positive");
        if (!(eta_s_scale > 0.0)) throw Error("--eta-s-scale must be positive");
        if (mode == Mode::bench_synthetic) {
            if (n_values.empty() || q_values.empty() || seeds.empty())
                throw Error("bench-synthetic needs at least one n, q and seed");
            for (auto n : n_values)
                if (n < 2) throw Error("--n must be at least 2");
            for (double q : q_values)
                if (!(q >= 0.0)) throw Error("--q must be nonnegative");
            if (m < 1) throw Error("--m must be at least 1");
        } else if (files.empty()) {
            throw Error("no problem files given");
        }
    }
};

struct ReportRow {
    std::string dataset;
    std::size_t n = 0;
    std::optional<double> q;
    std::string formulation;
    std::string us, u, ur, uc;
    double res = 1.0;
    int iter_total = 0;
    int iter_max = 0;
    int rank = 0;
    int steps = 0;
    std::string status;

    bool converged() const { return status == to_string(IRStatus::converged); }
    friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

inline ReportRow solve_row(const LyapunovProblem& p, Formulation f, const PrecisionCombo& c,
                           const RunSpec& spec) {
    ReportRow row;
    row.dataset = p.info.name;
    row.n = p.A.rows();
    row.q = p.info.q;
    row.formulation = to_string(f);
    row.us = c.us.name;
    row.u = c.u.name;
    row.ur = c.ur.name;
    row.uc = c.uc.name;
    const IRConfig cfg = spec.config_for(c, p.A.rows());
    try {
        IRReport rep;
        if (f == Formulation::chol) {
            if (p.S) throw Error("problem has an S factor; use --formulation ldlt");
            rep = ir_chol(p.A, p.L, cfg).second;
        } else {
            rep = ir_ldlt(p.A, p.L, p.S_or_identity(), cfg).second;
        }
        row.res = rep.final_res();
        row.iter_total = rep.total_newton;
        row.iter_max = rep.max_newton;
        row.rank = rep.final_rank();
        row.steps = static_cast<int>(rep.steps.size()) - 1;
        row.status = to_string(rep.status);
    } catch (const Error& e) {
        row.status = "error";
        std::cerr << row.dataset << " (" << row.formulation << ", " << row.us << "/" << row.u
                  << "): " << e.what() << '\n';
    }
    return row;
}

namespace detail {

struct Job {
    const LyapunovProblem* problem;
    Formulation formulation;
    PrecisionCombo combo;
};

inline std::string fmt_double(double v, const char* f) {
    char buf[40];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    fields.push_back(std::move(cur));
    return fields;
}

} // namespace detail

/// Builds the problems and runs every (problem, formulation, combo) row.
/// Rows come back in spec order whatever order the workers finish in.
inline std::vector<ReportRow> run_rows(const RunSpec& spec) {
    spec.validate();
    std::vector<LyapunovProblem> problems;
    if (spec.mode == Mode::bench_synthetic) {
        for (auto n : spec.n_values)
            for (double q : spec.q_values)
                for (auto seed : spec.seeds) problems.push_back(gen_synthetic(n, spec.m, q, seed));
    } else {
        for (const auto& f : spec.files) problems.push_back(load_problem(f.A, f.L, f.S));
    }
    std::vector<detail::Job> jobs;
    for (const auto& p : problems)
        for (auto f : spec.formulations)
            for (const auto& c : spec.combos) jobs.push_back({&p, f, c});

    std::vector<ReportRow> rows(jobs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++)
            rows[i] = solve_row(*jobs[i].problem, jobs[i].formulation, jobs[i].combo, spec);
    };
    const unsigned nthreads = std::max(1u, std::min<unsigned>(spec.threads, static_cast<unsigned>(jobs.size())));
    if (nthreads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    }
    return rows;
}

inline const std::vector<std::string>& report_columns() {
    static const std::vector<std::string> cols{
        "dataset", "n",   "q",          "formulation",          "us",   "u",
        "ur",      "uc",  "res",        "iter_total",           "iter_max_single_call",
        "rank",    "refinement_steps", "status"};
    return cols;
}

/// CSV (full precision) or a markdown pipe table (res to 3 significant
/// digits, "--" rank for unconverged rows) with the same columns.
inline void emit_report(const std::vector<ReportRow>& rows, ReportFormat format, std::ostream& out) {
    const auto& cols = report_columns();
    if (format == ReportFormat::csv) {
        for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
        out << '\n';
        for (const auto& r : rows) {
            out << detail::csv_field(r.dataset) << ',' << r.n << ','
                << (r.q ? detail::fmt_double(*r.q, "%.17g") : "") << ',' << r.formulation << ','
                << r.us << ',' << r.u << ',' << r.ur << ',' << r.uc << ','
                << detail::fmt_double(r.res, "%.17g") << ',' << r.iter_total << ',' << r.iter_max
                << ',' << r.rank << ',' << r.steps << ',' << r.status << '\n';
        }
        return;
    }
    out << '|';
    for (const auto& c : cols) out << ' ' << c << " |";
    out << "\n|";
    for (std::size_t i = 0; i < cols.size(); ++i) out << "---|";
    out << '\n';
    for (const auto& r : rows) {
        out << "| " << r.dataset << " | " << r.n << " | " << (r.q ? detail::fmt_double(*r.q, "%g") : "")
            << " | " << r.formulation << " | " << r.us << " | " << r.u << " | " << r.ur << " | " << r.uc
            << " | " << detail::fmt_double(r.res, "%.2e") << " | " << r.iter_total << " | " << r.iter_max
            << " | " << (r.converged() ? std::to_string(r.rank) : std::string("--")) << " | "
            << r.steps << " | " << r.status << " |\n";
    }
}

inline void emit_report(const std::vector<ReportRow>& rows, ReportFormat format,
                        const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    emit_report(rows, format, out);
    if (!out) throw Error("write failed: " + path.string());
}

/// Reads back a CSV written by emit_report.
inline std::vector<ReportRow> parse_csv_report(std::istream& in) {
    std::string line;
    std::size_t lineno = 1;
    if (!std::getline(in, line)) throw ParseError("missing CSV header", 1);
    if (detail::split_csv_line(line) != report_columns()) throw ParseError("unexpected CSV header", 1);
    std::vector<ReportRow> rows;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto f = detail::split_csv_line(line);
        if (f.size() != report_columns().size()) throw ParseError("wrong field count", lineno);
        try {
            ReportRow r;
            r.dataset = f[0];
            r.n = std::stoull(f[1]);
            if (!f[2].empty()) r.q = std::stod(f[2]);
            r.formulation = f[3];
            r.us = f[4];
            r.u = f[5];
            r.ur = f[6];
            r.uc = f[7];
            r.res = std::stod(f[8]);
            r.iter_total = std::stoi(f[9]);
            r.iter_max = std::stoi(f[10]);
            r.rank = std::stoi(f[11]);
            r.steps = std::stoi(f[12]);
            r.status = f[13];
            rows.push_back(std::move(r));
        } catch (const std::logic_error&) {
            throw ParseError("malformed numeric field", lineno);
        }
    }
    return rows;
}

/// Exit code: 0 when every row converged, 2 when some did not.
inline int exit_code_for(const std::vector<ReportRow>& rows) {
    return std::all_of(rows.begin(), rows.end(), [](const ReportRow& r) { return r.converged(); }) ? 0 : 2;
}

/// Runs the spec and writes the report (stdout when no path). Usage and IO
/// problems give 1.
inline int run(const RunSpec& spec, std::ostream& stdout_stream = std::cout) {
    try {
        const auto rows = run_rows(spec);
        if (spec.out)
            emit_report(rows, spec.format, *spec.out);
        else
            emit_report(rows, spec.format, stdout_stream);
        return exit_code_for(rows);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}

} // namespace mplyap

#endif
