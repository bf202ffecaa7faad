#pragma once

#include <complex>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <hsaw/csv.hpp>
#include <hsaw/free_process.hpp>
#include <hsaw/laplace.hpp>
#include <hsaw/lattice.hpp>
#include <hsaw/monte_carlo.hpp>
#include <hsaw/rg_flow.hpp>

// Experiment runners behind the command-line surface.  Each command consumes
// a key-value parameter map (CLI flags and config-file entries, already
// merged) and produces a CSV table with a fixed header plus metadata entries
// for the sidecar.  All parameters are validated here, before any numerics
// run, so the caller can map std::invalid_argument to a configuration error
// exit and NumericalError to a numeric failure exit.

namespace hsaw {

struct RunConfig {
    std::string command; // greens, kernel, flow, critical, invert, endtoend, mc
    std::map<std::string, std::string> params;
};

struct RunArtifacts {
    CsvTable table;
    // every parameter the run actually used, with its effective value
    std::vector<std::pair<std::string, std::string>> resolved;
    // command-specific result metadata
    std::vector<std::pair<std::string, std::string>> extra;
};

namespace detail {

inline double parse_real_param(const std::string& key, const std::string& s)
{
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw std::invalid_argument(key + ": cannot parse number '" + s + "'");
    }
}

inline long long parse_int_param(const std::string& key, const std::string& s)
{
    try {
        std::size_t used = 0;
        const long long v = std::stoll(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw std::invalid_argument(key + ": cannot parse integer '" + s + "'");
    }
}

inline std::vector<std::string> split_list(const std::string& s)
{
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        const std::size_t comma = s.find(',', start);
        const std::size_t end = comma == std::string::npos ? s.size() : comma;
        out.push_back(s.substr(start, end - start));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

} // namespace detail

// Reads parameters with defaults, records the effective value of everything
// consumed, and flags leftovers so typos in config files fail loudly.
class ParamReader {
public:
    explicit ParamReader(const std::map<std::string, std::string>& params)
        : params_(params)
    {
    }

    std::string str(const std::string& key, const std::string& def)
    {
        const auto it = params_.find(key);
        const std::string v = it == params_.end() ? def : it->second;
        record(key, v);
        return v;
    }

    double number(const std::string& key, const std::string& def)
    {
        return detail::parse_real_param(key, str(key, def));
    }

    long long integer(const std::string& key, const std::string& def)
    {
        return detail::parse_int_param(key, str(key, def));
    }

    std::vector<double> numbers(const std::string& key, const std::string& def)
    {
        std::vector<double> out;
        for (const std::string& tok : detail::split_list(str(key, def)))
            out.push_back(detail::parse_real_param(key, tok));
        return out;
    }

    std::vector<int> integers(const std::string& key, const std::string& def)
    {
        std::vector<int> out;
        for (const std::string& tok : detail::split_list(str(key, def)))
            out.push_back(static_cast<int>(detail::parse_int_param(key, tok)));
        return out;
    }

    const std::vector<std::pair<std::string, std::string>>& resolved() const
    {
        return resolved_;
    }

    void reject_unknown() const
    {
        for (const auto& [key, value] : params_)
            if (!seen_.count(key))
                throw std::invalid_argument("unknown parameter: " + key + "=" + value);
    }

private:
    void record(const std::string& key, const std::string& value)
    {
        if (seen_.insert(key).second) resolved_.emplace_back(key, value);
    }

    const std::map<std::string, std::string>& params_;
    std::vector<std::pair<std::string, std::string>> resolved_;
    std::set<std::string> seen_;
};

namespace detail {

inline LatticeParams lattice_from(ParamReader& P)
{
    const long long L = P.integer("L", "2");
    if (L < 2 || L > 64) throw std::invalid_argument("L: must lie in [2, 64]");
    return LatticeParams::make(static_cast<int>(L));
}

inline ContourSpec contour_from(ParamReader& P)
{
    ContourSpec c;
    c.b_beta = P.number("b-beta", fmt_num(c.b_beta));
    c.T_scale = P.number("t-scale", fmt_num(c.T_scale));
    c.arc_nodes = static_cast<int>(P.integer("arc-nodes", fmt_int(c.arc_nodes)));
    c.ray_nodes = static_cast<int>(P.integer("ray-nodes", fmt_int(c.ray_nodes)));
    c.ray_cutoff = P.number("ray-cutoff", fmt_num(c.ray_cutoff));
    c.validate();
    return c;
}

inline RunArtifacts run_greens(ParamReader& P)
{
    const LatticeParams p = lattice_from(P);
    const std::vector<double> mags = P.numbers("beta", "0.1,1,10");
    const double arg = P.number("beta-arg", "0");
    const std::vector<int> levels = P.integers("N", "0,1,2,3,4,5");
    for (const double m : mags)
        if (m < 0.0) throw std::invalid_argument("beta: magnitudes must be >= 0");
    for (const int N : levels)
        if (N < 0) throw std::invalid_argument("N: levels must be >= 0");

    RunArtifacts art;
    art.table.header = {"beta_re",   "beta_im",      "N",
                        "green0_re", "green0_im",    "green0_alt_re",
                        "green0_alt_im"};
    for (const double m : mags) {
        const complex_t beta = std::polar(m, arg);
        for (const int N : levels) {
            const complex_t g = green0({beta, N}, p);
            const complex_t ga = green0_alt({beta, N}, p);
            art.table.rows.push_back({fmt_num(beta.real()), fmt_num(beta.imag()),
                                      fmt_int(N), fmt_num(g.real()), fmt_num(g.imag()),
                                      fmt_num(ga.real()), fmt_num(ga.imag())});
        }
    }
    return art;
}

inline RunArtifacts run_kernel(ParamReader& P)
{
    const LatticeParams p = lattice_from(P);
    const double lambda = P.number("lambda", "0");
    const std::vector<double> Ts = P.numbers("T", "1,4,16");
    const std::vector<int> levels = P.integers("N", "0,1,2,3");
    const DomainSpec d{};
    if (!d.lambda_admissible(complex_t(lambda)) && lambda != 0.0)
        throw std::invalid_argument("lambda: outside the admissible coupling sector");
    for (const double T : Ts)
        if (!(T > 0.0)) throw std::invalid_argument("T: must be positive");
    for (const int N : levels)
        if (N < 0) throw std::invalid_argument("N: levels must be >= 0");

    RunArtifacts art;
    art.table.header = {"T",           "N",           "lambda",       "p_free",
                        "p_lambda_re", "p_lambda_im", "p_leading_re", "p_leading_im"};
    for (const double T : Ts) {
        const InteractingKernel kern(complex_t(lambda), T, d, p);
        for (const int N : levels) {
            const double pf = p0(complex_t(T), N, p).real();
            const complex_t pl = kern.evaluate(T, N).value;
            const complex_t lead = p_lambda_leading({T, N, complex_t(lambda)}, d, p);
            art.table.rows.push_back({fmt_num(T), fmt_int(N), fmt_num(lambda), fmt_num(pf),
                                      fmt_num(pl.real()), fmt_num(pl.imag()),
                                      fmt_num(lead.real()), fmt_num(lead.imag())});
        }
    }
    art.extra.emplace_back("scale_index_site_terms", "level(x)");
    art.extra.emplace_back("scale_index_moment_sums", "crossover_at_1_over_T");
    return art;
}

inline RunArtifacts run_flow(ParamReader& P)
{
    const LatticeParams p = lattice_from(P);
    const complex_t beta = std::polar(P.number("beta", "0.01"), P.number("beta-arg", "0"));
    const complex_t lambda =
        std::polar(P.number("lambda", "0.02"), P.number("lambda-arg", "0"));
    const long long steps = P.integer("steps", "60");
    if (steps < 1 || steps > 100000)
        throw std::invalid_argument("steps: must lie in [1, 100000]");

    const FlowReport fr = flow(beta, lambda, DomainSpec{}, static_cast<int>(steps), p);

    RunArtifacts art;
    art.table.header = {"k",         "beta_re",   "beta_im",    "lambda_re",  "lambda_im",
                        "dbeta_re",  "dbeta_im",  "dlambda_re", "dlambda_im"};
    for (const CouplingState& s : fr.trajectory)
        art.table.rows.push_back({fmt_int(s.step), fmt_num(s.beta.real()),
                                  fmt_num(s.beta.imag()), fmt_num(s.lambda.real()),
                                  fmt_num(s.lambda.imag()), fmt_num(s.dbeta.real()),
                                  fmt_num(s.dbeta.imag()), fmt_num(s.dlambda.real()),
                                  fmt_num(s.dlambda.imag())});
    art.extra.emplace_back("exited", fr.exited ? "true" : "false");
    if (fr.exited) art.extra.emplace_back("exit_step", fmt_int(fr.exit_step));
    return art;
}

inline RunArtifacts run_critical(ParamReader& P)
{
    const LatticeParams p = lattice_from(P);
    const std::vector<double> lambdas = P.numbers("lambda", "0.01,0.02,0.05");
    const double tol = P.number("tol", "0");
    if (tol < 0.0) throw std::invalid_argument("tol: must be >= 0");

    RunArtifacts art;
    art.table.header = {"lambda", "beta_c_re", "beta_c_im", "bracket_width", "steps_held"};
    for (const double lam : lambdas) {
        const CriticalData cd = critical_beta(complex_t(lam), DomainSpec{}, p, tol);
        art.table.rows.push_back({fmt_num(lam), fmt_num(cd.beta_c.real()),
                                  fmt_num(cd.beta_c.imag()), fmt_num(cd.bracket_width),
                                  fmt_int(cd.steps_held)});
    }
    return art;
}

inline RunArtifacts run_invert(ParamReader& P)
{
    const LatticeParams p = lattice_from(P);
    const ContourSpec c = contour_from(P);
    const std::vector<double> Ts = P.numbers("T", "1,4,16,64");
    const std::vector<int> levels = P.integers("N", "0,1,2,3,4");
    for (const double T : Ts)
        if (!(T > 0.0)) throw std::invalid_argument("T: must be positive");
    for (const int N : levels)
        if (N < 0) throw std::invalid_argument("N: levels must be >= 0");

    RunArtifacts art;
    art.table.header = {"T",           "N",
                        "p0_series",   "p0_contour_re",
                        "p0_contour_im", "error_estimate",
                        "refinements"};
    for (const double T : Ts)
        for (const int N : levels) {
            const InversionResult r = invert(
                [&](complex_t beta) { return green0({beta, N}, p); }, T, c);
            art.table.rows.push_back({fmt_num(T), fmt_int(N),
                                      fmt_num(p0(complex_t(T), N, p).real()),
                                      fmt_num(r.value.real()), fmt_num(r.value.imag()),
                                      fmt_num(r.error_estimate), fmt_int(r.refinements)});
        }
    return art;
}

inline RunArtifacts run_endtoend(ParamReader& P)
{
    const LatticeParams p = lattice_from(P);
    const double lambda = P.number("lambda", "0.02");
    const double alpha = P.number("alpha", "1");
    const std::vector<double> Ts = P.numbers("T", "4,16,64");
    const long long n_paths = P.integer("n-paths", "100000");
    const std::uint64_t seed = static_cast<std::uint64_t>(P.integer("seed", "1"));
    const DomainSpec d{};
    if (lambda < 0.0 || (lambda != 0.0 && !d.lambda_admissible(complex_t(lambda))))
        throw std::invalid_argument("lambda: must be real, >= 0, inside the sector");
    if (!(alpha > 0.0 && alpha < 2.0))
        throw std::invalid_argument("alpha: must lie in (0, 2)");
    for (const double T : Ts)
        if (!(T > 1.0)) throw std::invalid_argument("T: must exceed 1");
    if (n_paths < 1) throw std::invalid_argument("n-paths: must be >= 1");

    RunArtifacts art;
    art.table.header = {"T",          "alpha",       "lambda", "ell",    "t_eff",
                        "e2e_theory", "e2e_contour", "e2e_mc", "e2e_mc_stderr"};
    std::string ess_list;
    for (const double T : Ts) {
        const LogFactorPair lf = ell_log_factor(T, complex_t(lambda), p);
        const double ell = lf.flow.real();
        const double t_eff = t_effective(T, complex_t(lambda), d, p).real();
        const double theory = endtoend_free(t_eff, alpha, p);
        const complex_t contour = endtoend_interacting(T, alpha, complex_t(lambda), d, p);

        McConfig mc;
        mc.T = T;
        mc.lambda = lambda;
        mc.n_paths = static_cast<long>(n_paths);
        mc.seed = seed;
        mc.p = p;
        mc.alpha = alpha;
        const EndToEndEstimate e = weighted_endtoend(mc);

        art.table.rows.push_back({fmt_num(T), fmt_num(alpha), fmt_num(lambda),
                                  fmt_num(ell), fmt_num(t_eff), fmt_num(theory),
                                  fmt_num(contour.real()), fmt_num(e.estimate),
                                  fmt_num(e.std_error)});
        if (!ess_list.empty()) ess_list += ';';
        ess_list += fmt_num(e.ess);
    }
    art.extra.emplace_back("mc_ess", ess_list);
    art.extra.emplace_back("scale_index_site_terms", "level(x)");
    art.extra.emplace_back("scale_index_moment_sums", "crossover_at_1_over_T");
    return art;
}

inline RunArtifacts run_mc(ParamReader& P)
{
    const LatticeParams p = lattice_from(P);
    const double lambda = P.number("lambda", "0");
    const double alpha = P.number("alpha", "1");
    const std::vector<double> Ts = P.numbers("T", "16");
    const long long n_paths = P.integer("n-paths", "100000");
    const std::uint64_t seed = static_cast<std::uint64_t>(P.integer("seed", "1"));

    RunArtifacts art;
    art.table.header = {"T",      "lambda",        "alpha", "n_paths",    "seed",
                        "e2e_mc", "e2e_mc_stderr", "ess",   "depth_folds"};
    for (const double T : Ts) {
        McConfig mc;
        mc.T = T;
        mc.lambda = lambda;
        mc.n_paths = static_cast<long>(n_paths);
        mc.seed = seed;
        mc.p = p;
        mc.alpha = alpha;
        mc.validate();
        const EndToEndEstimate e = weighted_endtoend(mc);
        art.table.rows.push_back({fmt_num(T), fmt_num(lambda), fmt_num(alpha),
                                  fmt_int(n_paths), fmt_int(static_cast<long long>(seed)),
                                  fmt_num(e.estimate), fmt_num(e.std_error), fmt_num(e.ess),
                                  fmt_int(e.depth_folds)});
    }
    return art;
}

} // namespace detail

inline RunArtifacts run_experiment(const RunConfig& cfg)
{
    ParamReader P(cfg.params);
    RunArtifacts art;
    if (cfg.command == "greens") art = detail::run_greens(P);
    else if (cfg.command == "kernel") art = detail::run_kernel(P);
    else if (cfg.command == "flow") art = detail::run_flow(P);
    else if (cfg.command == "critical") art = detail::run_critical(P);
    else if (cfg.command == "invert") art = detail::run_invert(P);
    else if (cfg.command == "endtoend") art = detail::run_endtoend(P);
    else if (cfg.command == "mc") art = detail::run_mc(P);
    else throw std::invalid_argument("unknown command: " + cfg.command);
    P.reject_unknown();
    art.resolved = P.resolved();
    return art;
}

} // namespace hsaw
