#pragma once

#include <chrono>
#include <cmath>
#include <complex>
#include <cstdarg>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <hsaw/experiments.hpp>
#include <hsaw/free_process.hpp>
#include <hsaw/laplace.hpp>
#include <hsaw/lattice.hpp>
#include <hsaw/monte_carlo.hpp>
#include <hsaw/rg_flow.hpp>

// The library's end-to-end validation suite: fourteen numbered checks that
// exercise every module against closed forms, independent oracles, frozen
// regression constants, and cross-module consistency (series vs contour vs
// Monte Carlo).  Each check also carries a wall-clock budget.  The `validate`
// command and the standalone acceptance runner both print these results.

namespace hsaw {

struct SelftestConfig {
    long mc_paths = 1000000;  // paths for the Monte Carlo comparisons
    std::uint64_t mc_seed = 1;
};

struct CheckResult {
    int index = 0;
    std::string name;
    bool pass = false;
    std::string detail;
    double seconds = 0.0;
};

namespace selftest_detail {

inline std::string fm(const char* fmt, ...)
{
    char buf[512];
    va_list ap;
    va_start(ap, fmt);
    std::vsnprintf(buf, sizeof buf, fmt, ap);
    va_end(ap);
    return buf;
}

inline double simpson_impl(const std::function<double(double)>& f, double a, double b,
                           double fa, double fm_, double fb, double whole, double tol,
                           int depth)
{
    const double m = 0.5 * (a + b);
    const double flm = f(0.5 * (a + m)), frm = f(0.5 * (m + b));
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm_);
    const double right = (b - m) / 6.0 * (fm_ + 4.0 * frm + fb);
    if (depth <= 0) return left + right;
    if (std::abs(left + right - whole) <= 15.0 * tol)
        return left + right + (left + right - whole) / 15.0;
    return simpson_impl(f, a, m, fa, flm, fm_, left, tol / 2.0, depth - 1) +
           simpson_impl(f, m, b, fm_, frm, fb, right, tol / 2.0, depth - 1);
}

inline double simpson(const std::function<double(double)>& f, double a, double b,
                      double tol)
{
    const double fa = f(a), fb = f(b), fm_ = f(0.5 * (a + b));
    return simpson_impl(f, a, b, fa, fm_, fb, (b - a) / 6.0 * (fa + 4.0 * fm_ + fb), tol,
                        40);
}

// forward transform: int_0^inf e^{-beta T} g(T) dT, damping-tail cutoff
inline double forward_laplace(const std::function<double(double)>& g, double beta,
                              double tol)
{
    const double cut = 60.0 / beta;
    auto f = [&](double T) { return std::exp(-beta * T) * g(T); };
    const double split = std::min(1.0, cut);
    return simpson(f, 0.0, split, tol / 2.0) + simpson(f, split, cut, tol / 2.0);
}

struct Checker {
    std::vector<CheckResult> results;

    void run(int index, const std::string& name, double budget_s,
             const std::function<std::pair<bool, std::string>()>& body)
    {
        CheckResult r;
        r.index = index;
        r.name = name;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            const auto [ok, detail] = body();
            r.pass = ok;
            r.detail = detail;
        } catch (const std::exception& e) {
            r.pass = false;
            r.detail = std::string("exception: ") + e.what();
        }
        const auto t1 = std::chrono::steady_clock::now();
        r.seconds = std::chrono::duration<double>(t1 - t0).count();
        if (r.pass && r.seconds > budget_s) {
            r.pass = false;
            r.detail += fm(" [over budget %.0fs]", budget_s);
        }
        results.push_back(std::move(r));
    }
};

} // namespace selftest_detail

inline std::vector<CheckResult> run_selftest(const SelftestConfig& cfg = {})
{
    using selftest_detail::fm;
    const LatticeParams P2 = LatticeParams::make(2);
    const DomainSpec D{};
    selftest_detail::Checker ck;

    ck.run(1, "zero-killing resolvent values", 1.0, [&] {
        double worst = std::abs(green0({0.0, 0}, P2).real() / 1.25 - 1.0);
        for (int N = 1; N <= 5; ++N)
            worst = std::max(worst, std::abs(green0({0.0, N}, P2).real() /
                                                 std::pow(4.0, -N) -
                                             1.0));
        return std::make_pair(worst <= 1e-10, fm("worst rel dev %.2e (tol 1e-10)", worst));
    });

    ck.run(2, "resolvent representation equivalence", 1.0, [&] {
        // the alternative form subtracts two like-sized pieces, so it needs a
        // tighter series cut than its default to keep 1e-10 relative to the
        // small result at the large-beta corner of the grid
        const SeriesTolerance tight{1e-14, 20000};
        double worst = 0.0;
        for (double mag : {0.1, 1.0, 10.0})
            for (double arg : {0.0, std::numbers::pi / 3.0, -std::numbers::pi / 3.0})
                for (int N = 0; N <= 3; ++N) {
                    const complex_t beta = std::polar(mag, arg);
                    const complex_t g = green0({beta, N}, P2, tight);
                    const complex_t ga = green0_alt({beta, N}, P2, tight);
                    worst = std::max(worst, std::abs(ga / g - 1.0));
                }
        return std::make_pair(worst <= 1e-10,
                              fm("36 points, worst rel dev %.2e (tol 1e-10)", worst));
    });

    ck.run(3, "laplace transform round-trip (both directions)", 30.0, [&] {
        struct Probe {
            double beta;
            int N;
        };
        double worst_fwd = 0.0;
        for (const auto& pr : {Probe{1.0, 0}, Probe{1.0, 1}, Probe{0.5, 2}}) {
            const double target = green0({pr.beta, pr.N}, P2).real();
            const double integral = selftest_detail::forward_laplace(
                [&](double T) { return p0(T, pr.N, P2).real(); }, pr.beta,
                1e-12 * target);
            worst_fwd = std::max(worst_fwd, std::abs(integral / target - 1.0));
        }
        double worst_inv = 0.0;
        for (double T : {1.0, 4.0, 16.0, 64.0})
            for (int N = 0; N <= 4; ++N) {
                const InversionResult r = invert(
                    [&](complex_t beta) { return green0({beta, N}, P2); }, T);
                const complex_t exact = p0(complex_t(T), N, P2);
                worst_inv = std::max(worst_inv, std::abs(r.value / exact - 1.0));
            }
        return std::make_pair(worst_fwd <= 1e-8 && worst_inv <= 1e-8,
                              fm("forward dev %.2e, inverse dev %.2e (tol 1e-8)",
                                 worst_fwd, worst_inv));
    });

    ck.run(4, "kernel normalization and positivity", 5.0, [&] {
        double worst = 0.0;
        bool positive = true;
        for (double T : {0.25, 1.0, 4.0, 16.0}) {
            double total = p0(T, 0, P2).real();
            positive = positive && total > 0.0;
            double tail = 1.0;
            int N = 1;
            while (tail > 1e-13) {
                const double per_site = p0(T, N, P2).real();
                positive = positive && per_site > 0.0;
                total += shell_count(N, P2) * per_site;
                tail = P2.B * 4.0 * T * std::pow(0.25, N + 1) / (1.0 - 0.25);
                ++N;
            }
            worst = std::max(worst, std::abs(total - 1.0));
        }
        return std::make_pair(worst <= 1e-8 && positive,
                              fm("worst |sum-1| %.2e (tol 1e-8), positivity %s", worst,
                                 positive ? "ok" : "violated"));
    });

    ck.run(5, "kernel envelope sandwich", 5.0, [&] {
        double c1 = 1e300, c2 = 0.0;
        for (double lgT = 0.0; lgT <= 3.001; lgT += 1.0 / 3.0) {
            const double T = std::pow(10.0, lgT);
            for (int N = 0; N <= 5; ++N) {
                const double x2 = N == 0 ? 0.0 : std::pow(4.0, N);
                const double q = p0(T, N, P2).real() * T * T * std::pow(1.0 + x2 / T, 3);
                c1 = std::min(c1, q);
                c2 = std::max(c2, q);
            }
        }
        return std::make_pair(c1 > 0.0 && c2 / c1 < 50.0,
                              fm("c1 %.4g, c2 %.4g, ratio %.2f (< 50)", c1, c2, c2 / c1));
    });

    ck.run(6, "log-periodic end-to-end profile", 10.0, [&] {
        double worst = 0.0;
        for (double alpha : {0.5, 1.0, 1.5})
            for (double T : {1.0, 1.7, 3.1})
                worst = std::max(worst, std::abs(F_alpha(4.0 * T, alpha, P2) /
                                                     F_alpha(T, alpha, P2) -
                                                 1.0));
        double min_ratio = 1e300;
        for (double alpha : {0.5, 1.0, 1.5}) {
            double lo = 1e300, hi = 0.0;
            for (int i = 0; i < 64; ++i) {
                const double v = F_alpha(std::pow(4.0, i / 64.0), alpha, P2);
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            min_ratio = std::min(min_ratio, hi / lo);
        }
        return std::make_pair(worst <= 1e-10 && min_ratio > 1.0 + 5e-5,
                              fm("periodicity dev %.2e (tol 1e-10), oscillation %.6f "
                                 "(> 1.00005)",
                                 worst, min_ratio));
    });

    ck.run(7, "jump-rate constant", 1.0, [&] {
        const double c = derive_jump_constant(2);
        const double dev = std::abs(c / (64.0 / 21.0) - 1.0);
        // probe-level independence: the large-beta limit reproduces the same
        // constant from three different shells
        double probe_dev = 0.0;
        for (int N : {1, 2, 3}) {
            const double x2 = std::pow(4.0, N);
            const double probe =
                1e16 * green0({1e8, N}, P2).real() * x2 * x2 * x2;
            probe_dev = std::max(probe_dev, std::abs(probe / c - 1.0));
        }
        return std::make_pair(dev <= 1e-6 && probe_dev <= 1e-6,
                              fm("value dev %.2e, probe spread %.2e (tol 1e-6)", dev,
                                 probe_dev));
    });

    ck.run(8, "critical killing rate sweep", 5.0, [&] {
        bool ok = true;
        double worst_ratio = 0.0, worst_width = 0.0;
        int min_held = 1 << 30;
        for (double lam : {0.01, 0.02, 0.05}) {
            const CriticalData cd = critical_beta(complex_t(lam), D, P2);
            ok = ok && cd.beta_c.real() < 0.0 && cd.bracket_width < 1e-12 * lam;
            worst_width = std::max(worst_width, cd.bracket_width / lam);
            worst_ratio = std::max(worst_ratio, std::abs(cd.beta_c) / lam);
            min_held = std::min(min_held, cd.steps_held);
        }
        ok = ok && worst_ratio <= 5.0 && min_held >= 60;
        return std::make_pair(
            ok, fm("max |beta_c|/lambda %.3f (<= 5), max width/lambda %.1e (< 1e-12), "
                   "min confinement %d steps (>= 60)",
                   worst_ratio, worst_width, min_held));
    });

    ck.run(9, "coupling flow asymptotics", 10.0, [&] {
        // closed coupling model envelope, one constant across the sweep
        double c1_fit = 0.0;
        for (double lam : {0.01, 0.02, 0.05}) {
            const CriticalTrajectory ct = critical_trajectory(complex_t(lam), 220, P2);
            for (int k = 0; k <= 200; ++k) {
                const complex_t model = lambda_k_model(complex_t(lam), k, P2);
                const double env = std::norm(model) * (1.0 + std::log(1.0 + lam * k));
                c1_fit = std::max(c1_fit, std::abs(ct.lam[k] - model) / env);
            }
        }
        // auxiliary growth factor inside its e^{+-5 lambda} band
        bool band_ok = true;
        for (double lam : {0.01, 0.05}) {
            const double band = std::exp(5.0 * lam);
            for (int k = 1; k <= 100; ++k) {
                const double r = std::abs(l_k_aux(complex_t(lam), k, k, P2)) /
                                 std::abs(1.0 + 8.0 * P2.B * lam * k);
                band_ok = band_ok && r <= band && r >= 1.0 / band;
            }
        }
        // crossover scale vs its closed shape, additive gap <= 3
        double worst_gap = 0.0;
        for (double T : {10.0, 1e2, 1e3, 1e4, 1e5, 1e6}) {
            const int kh = k_hat({1.0 / T, 0.0}, {0.02, 0.0}, D, P2);
            const double lg = std::log2(1.0 + T);
            const double shape =
                0.5 * lg + 0.125 * std::log2(std::abs(1.0 + 4.0 * P2.B * 0.02 * lg));
            worst_gap = std::max(worst_gap, std::abs(kh - shape));
        }
        const bool ok = c1_fit <= 25.0 && band_ok && worst_gap <= 3.0;
        return std::make_pair(ok, fm("model envelope fit %.1f (<= 25), growth band %s, "
                                     "crossover gap %.2f (<= 3)",
                                     c1_fit, band_ok ? "ok" : "violated", worst_gap));
    });

    ck.run(10, "derivative flow vs finite differences", 5.0, [&] {
        auto run = [&](complex_t b0, complex_t l0, int n) {
            CouplingState s;
            s.beta = b0;
            s.lambda = l0;
            for (int k = 0; k < n; ++k) s = step(s, P2);
            return s;
        };
        std::mt19937 rng(20240811);
        std::uniform_real_distribution<double> mag_b(0.01, 0.15), arg_b(-2.0, 2.0);
        std::uniform_real_distribution<double> mag_l(0.002, 0.05), arg_l(-0.35, 0.35);
        double worst = 0.0;
        for (int rep = 0; rep < 20; ++rep) {
            const complex_t b0 = std::polar(mag_b(rng), arg_b(rng));
            const complex_t l0 = std::polar(mag_l(rng), arg_l(rng));
            const CouplingState s = run(b0, l0, 8);
            const complex_t h = 1e-7 * (1.0 + std::abs(b0));
            const CouplingState a = run(b0 + h, l0, 8), b = run(b0 - h, l0, 8);
            const complex_t fd_b = (a.beta - b.beta) / (2.0 * h);
            const complex_t fd_l = (a.lambda - b.lambda) / (2.0 * h);
            worst = std::max(worst, std::abs(s.dbeta - fd_b) / std::abs(fd_b));
            worst = std::max(worst,
                             std::abs(s.dlambda - fd_l) / (std::abs(fd_l) + 1e-12));
        }
        return std::make_pair(worst <= 1e-6,
                              fm("20 points, worst rel dev %.2e (tol 1e-6)", worst));
    });

    ck.run(11, "free-walk monte carlo agreement", 180.0, [&] {
        McConfig mc;
        mc.T = 16.0;
        mc.n_paths = cfg.mc_paths;
        mc.seed = cfg.mc_seed;
        mc.alpha = 1.0;
        const EndToEndEstimate e = weighted_endtoend(mc);
        const double exact = endtoend_free(mc.T, mc.alpha, P2);
        double worst_z = std::abs(e.estimate - exact) / e.std_error;
        for (int N : {0, 1, 2}) {
            const KernelEstimate k = weighted_kernel(mc, N);
            const double target = p0(complex_t(mc.T), N, P2).real();
            worst_z = std::max(worst_z, std::abs(k.estimate - target) / k.std_error);
        }
        return std::make_pair(worst_z <= 3.0,
                              fm("%ld paths, worst z %.2f (<= 3)", cfg.mc_paths, worst_z));
    });

    ck.run(12, "interacting end-to-end consistency", 300.0, [&] {
        const double lam = 0.02;
        double kappa_fit = 0.0, worst_z = 0.0;
        for (double T : {16.0, 64.0}) {
            McConfig mc;
            mc.T = T;
            mc.lambda = lam;
            mc.n_paths = cfg.mc_paths;
            mc.seed = cfg.mc_seed;
            mc.alpha = 1.0;
            const EndToEndEstimate e = weighted_endtoend(mc);
            const double contour =
                endtoend_interacting(T, 1.0, complex_t(lam), D, P2).real();
            const double t_eff = std::abs(t_effective(T, complex_t(lam), D, P2));
            const double theory = endtoend_free(t_eff, 1.0, P2);
            const double ell = std::abs(ell_log_factor(T, complex_t(lam), P2).flow);
            const double unit = lam / ell;

            // three pairwise relative gaps; MC pairs get the 3-sigma floor first
            auto pair_kappa = [&](double a, double b, double sigma3) {
                if (std::abs(a - b) <= sigma3) return 0.0;
                return std::abs(a / b - 1.0) / unit;
            };
            worst_z = std::max({worst_z,
                                std::abs(e.estimate - theory) / (3.0 * e.std_error),
                                std::abs(e.estimate - contour) / (3.0 * e.std_error)});
            kappa_fit = std::max(
                {kappa_fit, pair_kappa(e.estimate, theory, 3.0 * e.std_error),
                 pair_kappa(e.estimate, contour, 3.0 * e.std_error),
                 pair_kappa(contour, theory, 0.0)});
        }
        return std::make_pair(kappa_fit <= 10.0,
                              fm("%ld paths, fitted kappa %.2f (<= 10), worst mc gap "
                                 "%.2f x 3sigma",
                                 cfg.mc_paths, kappa_fit, worst_z));
    });

    ck.run(13, "interacting kernel leading-form band", 60.0, [&] {
        const complex_t lam(0.02, 0.0);
        double kappa_fit = 0.0;
        for (double T : {4.0, 16.0, 64.0}) {
            const InteractingKernel kern(lam, T, D, P2);
            const double t_eff = std::abs(t_effective(T, lam, D, P2));
            for (int N = 0; N <= 3; ++N) {
                const complex_t v = kern.evaluate(T, N).value;
                const complex_t lead = p_lambda_leading({T, N, lam}, D, P2);
                const double x2 = N == 0 ? 0.0 : std::pow(4.0, N);
                const double r = (t_eff + x2) / (1.0 + x2);
                const double lam_k = std::abs(lambda_k_model(lam, N, P2));
                kappa_fit = std::max(kappa_fit, std::abs(v / lead - 1.0) / (lam_k * r));
            }
        }
        return std::make_pair(kappa_fit <= 2.0,
                              fm("fitted kappa %.3f (<= 2, frozen envelope)", kappa_fit));
    });

    ck.run(14, "bit-identical rerun", 30.0, [&] {
        RunConfig rc;
        rc.command = "endtoend";
        rc.params = {{"lambda", "0.02"}, {"T", "16"},   {"alpha", "1"},
                     {"n-paths", "2000"}, {"seed", "7"}};
        const std::string a = run_experiment(rc).table.to_string();
        const std::string b = run_experiment(rc).table.to_string();
        RunConfig rm;
        rm.command = "mc";
        rm.params = {{"T", "8"}, {"n-paths", "3000"}, {"seed", "42"}};
        const std::string ma = run_experiment(rm).table.to_string();
        const std::string mb = run_experiment(rm).table.to_string();
        const bool ok = a == b && ma == mb && !a.empty() && !ma.empty();
        return std::make_pair(ok, ok ? std::string("reruns byte-identical")
                                     : std::string("rerun output differs"));
    });

    return ck.results;
}

} // namespace hsaw
