#ifndef MPLYAP_TOOLS_CLI_OPTIONS_HPP
#define MPLYAP_TOOLS_CLI_OPTIONS_HPP

// Command-line and config-file parsing for the mplyap tool. Kept in a header
// so the tests can drive it without spawning a process.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mplyap/harness.hpp"

namespace mplyap::cli {

struct Options {
    std::string formulation;
    std::string us, u, ur, uc;
    std::vector<std::size_t> n;
    std::vector<double> q;
    std::size_t m = 3;
    std::vector<std::uint64_t> seed;
    double rho = 0.1;
    double tau_scale = 1.0;
    double eta_r = 1e-4;
    double eta_s_scale = 10.0;
    int imax = 50;
    int kmax = 50;
    bool cache_inverses = false;
    std::string out;
    std::string format = "csv";
    unsigned threads = 1;
    std::string config;

    std::string path_A, path_L, path_S;
    std::vector<std::string> problems;
};

inline ReportFormat parse_report_format(const std::string& s) {
    if (s == "csv") return ReportFormat::csv;
    if (s == "md" || s == "markdown") return ReportFormat::markdown;
    throw Error("unknown report format '" + s + "' (expected csv or md)");
}

/// "<stem>_A.mtx" pairs with "<stem>_L.mtx" and, when present, "<stem>_S.mtx".
inline ProblemFiles files_for(const std::filesystem::path& a) {
    const std::string name = a.filename().string();
    const std::string suffix = "_A.mtx";
    if (name.size() <= suffix.size() || name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0)
        throw Error(a.string() + ": expected a file named <stem>_A.mtx");
    const std::string stem = name.substr(0, name.size() - suffix.size());
    ProblemFiles f{a, a.parent_path() / (stem + "_L.mtx"), std::nullopt};
    const auto s = a.parent_path() / (stem + "_S.mtx");
    if (std::filesystem::exists(s)) f.S = s;
    return f;
}

namespace detail {

template <class T>
void take(const nlohmann::json& j, const char* key, T& dst) {
    if (j.contains(key)) dst = j.at(key).get<T>();
}

template <class T>
void take_list(const nlohmann::json& j, const char* key, std::vector<T>& dst) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    dst = v.is_array() ? v.get<std::vector<T>>() : std::vector<T>{v.get<T>()};
}

/// Fills `o` from a JSON object whose keys are the long flag names, with
/// dashes or underscores.
inline void apply_config(const nlohmann::json& j, Options& o) {
    if (!j.is_object()) throw Error("config file must hold a JSON object");
    nlohmann::json k;
    for (auto it = j.begin(); it != j.end(); ++it) {
        std::string key = it.key();
        for (auto& c : key)
            if (c == '_') c = '-';
        k[key] = it.value();
    }
    static const std::vector<std::string> known{
        "formulation", "us",  "u",    "ur",   "uc",          "n",      "q",      "m",
        "seed",        "rho", "tau-scale", "eta-r", "eta-s-scale", "imax", "kmax",
        "cache-inverses", "out", "format", "threads"};
    for (auto it = k.begin(); it != k.end(); ++it)
        if (std::find(known.begin(), known.end(), it.key()) == known.end())
            throw Error("unknown config key '" + it.key() + "'");
    try {
        take(k, "formulation", o.formulation);
        take(k, "us", o.us);
        take(k, "u", o.u);
        take(k, "ur", o.ur);
        take(k, "uc", o.uc);
        take_list(k, "n", o.n);
        take_list(k, "q", o.q);
        take(k, "m", o.m);
        take_list(k, "seed", o.seed);
        take(k, "rho", o.rho);
        take(k, "tau-scale", o.tau_scale);
        take(k, "eta-r", o.eta_r);
        take(k, "eta-s-scale", o.eta_s_scale);
        take(k, "imax", o.imax);
        take(k, "kmax", o.kmax);
        take(k, "cache-inverses", o.cache_inverses);
        take(k, "out", o.out);
        take(k, "format", o.format);
        take(k, "threads", o.threads);
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("config file: ") + e.what());
    }
}

} // namespace detail

/// Builds the RunSpec. Precision flags that are left out fall back to the
/// five-combination grid for bench runs, or to us=fp32 with fp64 elsewhere
/// for `solve`.
inline RunSpec to_spec(Mode mode, const Options& o) {
    RunSpec s;
    s.mode = mode;
    if (!o.formulation.empty())
        s.formulations = {parse_formulation(o.formulation)};
    else if (mode == Mode::solve)
        s.formulations = {Formulation::chol};

    const bool any_precision = !o.us.empty() || !o.u.empty() || !o.ur.empty() || !o.uc.empty();
    if (any_precision || mode == Mode::solve) {
        PrecisionCombo c;
        c.u = o.u.empty() ? fp64 : parse_format(o.u);
        c.us = o.us.empty() ? (c.u.u() >= fp32.u() ? c.u : fp32) : parse_format(o.us);
        c.ur = o.ur.empty() ? c.u : parse_format(o.ur);
        c.uc = o.uc.empty() ? c.u : parse_format(o.uc);
        s.combos = {c};
    }
    if (!o.n.empty()) s.n_values = o.n;
    if (!o.q.empty()) s.q_values = o.q;
    if (!o.seed.empty()) s.seeds = o.seed;
    s.m = o.m;
    s.rho = o.rho;
    s.tau_scale = o.tau_scale;
    s.eta_r = o.eta_r;
    s.eta_s_scale = o.eta_s_scale;
    s.i_max = o.imax;
    s.k_max = o.kmax;
    s.cache_inverses = o.cache_inverses;
    if (!o.out.empty()) s.out = o.out;
    s.format = parse_report_format(o.format);
    s.threads = o.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : o.threads;

    if (mode == Mode::solve) {
        if (o.path_A.empty() || o.path_L.empty()) throw Error("solve needs --A and --L");
        ProblemFiles f{o.path_A, o.path_L, std::nullopt};
        if (!o.path_S.empty()) f.S = o.path_S;
        s.files = {f};
        if (f.S && o.formulation.empty()) s.formulations = {Formulation::ldlt};
    } else if (mode == Mode::bench_files) {
        for (const auto& p : o.problems) s.files.push_back(files_for(p));
    }
    s.validate();
    return s;
}

inline void add_common(CLI::App& app, Options& o) {
    app.add_option("--formulation", o.formulation, "chol or ldlt")->check(CLI::IsMember({"chol", "ldlt"}));
    const auto formats = CLI::IsMember({"bf16", "fp16", "fp32", "fp64"});
    app.add_option("--us", o.us, "solver precision")->check(formats);
    app.add_option("--u", o.u, "working precision")->check(formats);
    app.add_option("--ur", o.ur, "residual precision")->check(formats);
    app.add_option("--uc", o.uc, "update precision")->check(formats);
    app.add_option("--rho", o.rho, "truncation trigger, columns > rho*n");
    app.add_option("--tau-scale", o.tau_scale, "refinement tolerance as a multiple of n*u");
    app.add_option("--eta-r", o.eta_r, "residual truncation threshold");
    app.add_option("--eta-s-scale", o.eta_s_scale, "solution truncation threshold as a multiple of u");
    app.add_option("--imax", o.imax, "maximum refinement steps");
    app.add_option("--kmax", o.kmax, "maximum Newton iterations per solve");
    app.add_flag("--cache-inverses", o.cache_inverses, "reuse A-side inverses across solves");
    app.add_option("--out", o.out, "report path (default stdout)");
    app.add_option("--format", o.format, "csv or md")->check(CLI::IsMember({"csv", "md", "markdown"}));
    app.add_option("--threads", o.threads, "worker threads, 0 = all cores");
    app.add_option("--config", o.config, "JSON file with the same keys as the flags")->check(CLI::ExistingFile);
}

/// Thrown by parse after CLI11 has printed help (code 0) or a usage error (code 1).
struct Exit {
    int code;
};

/// Parses argv into a RunSpec. Throws Exit for help and command-line
/// problems, mplyap::Error for semantic ones.
inline RunSpec parse(int argc, const char* const* argv) {
    CLI::App app{"Low-rank Lyapunov solver with mixed-precision iterative refinement", "mplyap"};
    app.require_subcommand(1);
    Options o;

    auto* solve = app.add_subcommand("solve", "solve one problem given as Matrix Market files");
    add_common(*solve, o);
    solve->add_option("--A", o.path_A, "coefficient matrix")->required();
    solve->add_option("--L", o.path_L, "right-hand side factor")->required();
    solve->add_option("--S", o.path_S, "optional middle factor of W = L S L^T");

    auto* synth = app.add_subcommand("bench-synthetic", "sweep synthetic problems");
    add_common(*synth, o);
    synth->add_option("--n", o.n, "problem size (repeatable)");
    synth->add_option("--q", o.q, "log10 condition number (repeatable)");
    synth->add_option("--m", o.m, "columns of L");
    synth->add_option("--seed", o.seed, "random seed (repeatable)");

    auto* files = app.add_subcommand("bench-files", "sweep <stem>_A.mtx problems");
    add_common(*files, o);
    files->add_option("problems", o.problems, "A files; L and S are found by name")->required()->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        throw Exit{app.exit(e) == 0 ? 0 : 1};
    }

    CLI::App* sub = app.get_subcommands().front();
    const Mode mode = sub == solve ? Mode::solve : sub == synth ? Mode::bench_synthetic : Mode::bench_files;

    if (!o.config.empty()) {
        std::ifstream in(o.config);
        if (!in) throw Error("cannot open " + o.config);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(in);
        } catch (const nlohmann::json::parse_error& e) {
            throw Error(o.config + ": " + e.what());
        }
        // Start from the file and let every flag given on the command line win.
        Options merged;
        detail::apply_config(j, merged);
        auto given = [&](const char* name) { return sub->count(name) > 0; };
        if (given("--formulation")) merged.formulation = o.formulation;
        if (given("--us")) merged.us = o.us;
        if (given("--u")) merged.u = o.u;
        if (given("--ur")) merged.ur = o.ur;
        if (given("--uc")) merged.uc = o.uc;
        if (given("--rho")) merged.rho = o.rho;
        if (given("--tau-scale")) merged.tau_scale = o.tau_scale;
        if (given("--eta-r")) merged.eta_r = o.eta_r;
        if (given("--eta-s-scale")) merged.eta_s_scale = o.eta_s_scale;
        if (given("--imax")) merged.imax = o.imax;
        if (given("--kmax")) merged.kmax = o.kmax;
        if (given("--cache-inverses")) merged.cache_inverses = o.cache_inverses;
        if (given("--out")) merged.out = o.out;
        if (given("--format")) merged.format = o.format;
        if (given("--threads")) merged.threads = o.threads;
        if (mode == Mode::bench_synthetic) {
            if (given("--n")) merged.n = o.n;
            if (given("--q")) merged.q = o.q;
            if (given("--m")) merged.m = o.m;
            if (given("--seed")) merged.seed = o.seed;
        }
        merged.path_A = o.path_A;
        merged.path_L = o.path_L;
        merged.path_S = o.path_S;
        merged.problems = o.problems;
        o = std::move(merged);
    }
    return to_spec(mode, o);
}

} // namespace mplyap::cli

#endif
