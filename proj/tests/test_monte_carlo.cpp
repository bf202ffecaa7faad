#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <vector>

#include "hsaw/free_process.hpp"
#include "hsaw/laplace.hpp"
#include "hsaw/monte_carlo.hpp"

using namespace hsaw;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {
const LatticeParams P2 = LatticeParams::make(2);
} // namespace

TEST_CASE("mc config validation rejects bad inputs", "[monte_carlo]")
{
    McConfig bad;
    bad.T = 0.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = McConfig{};
    bad.lambda = -0.01;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = McConfig{};
    bad.n_paths = 0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = McConfig{};
    bad.alpha = 2.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = McConfig{};
    bad.alpha = 0.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    CHECK_NOTHROW(McConfig{}.validate());
}

TEST_CASE("per-path stream derivation matches the reference mix", "[monte_carlo]")
{
    // splitmix64 known-answer vectors (independent reference implementation)
    CHECK(detail::splitmix64(0) == 16294208416658607535ull);
    CHECK(detail::splitmix64(1) == 10451216379200822465ull);
    CHECK(detail::splitmix64(1234567) == 6457827717110365317ull);
    CHECK(detail::splitmix64(0xDEADBEEFull) == 5395234354446855067ull);

    // neighboring path indices get unrelated streams
    auto r0 = path_rng(42, 0);
    auto r1 = path_rng(42, 1);
    CHECK(r0() != r1());

    // unit_open stays strictly inside (0, 1]
    auto rng = path_rng(9, 0);
    real_t lo = 1.0, hi = 0.0;
    for (int i = 0; i < 100000; ++i) {
        const real_t u = detail::unit_open(rng);
        lo = std::min(lo, u);
        hi = std::max(hi, u);
    }
    CHECK(lo > 0.0);
    CHECK(hi <= 1.0);
}

TEST_CASE("path bookkeeping is exact", "[monte_carlo]")
{
    McConfig cfg;
    cfg.T = 4.0;
    cfg.n_paths = 600;
    cfg.seed = 7;

    int zero_jump_paths = 0;
    for (long i = 0; i < cfg.n_paths; ++i) {
        auto rng = path_rng(cfg.seed, static_cast<std::uint64_t>(i));
        const PathRecord rec = simulate_path(cfg, rng);

        REQUIRE(rec.sites.size() == rec.jump_times.size() + 1);
        CHECK(rec.sites.front().is_zero());
        CHECK(rec.endpoint == rec.sites.back());

        real_t prev = 0.0;
        for (const real_t t : rec.jump_times) {
            CHECK(t > prev);
            CHECK(t < cfg.T);
            prev = t;
        }
        for (std::size_t j = 1; j < rec.sites.size(); ++j)
            CHECK_FALSE(rec.sites[j] == rec.sites[j - 1]);

        real_t total = 0.0;
        for (const auto& [site, t] : rec.local_times) {
            CHECK(t > 0.0);
            total += t;
        }
        CHECK_THAT(total, WithinAbs(cfg.T, 1e-12));

        if (rec.jump_times.empty()) {
            ++zero_jump_paths;
            CHECK(rec.endpoint.is_zero());
            REQUIRE(rec.local_times.size() == 1);
            CHECK(rec.local_times.begin()->first.is_zero());
            CHECK(rec.local_times.begin()->second == cfg.T);
        }
    }
    // holding at the origin for all of [0, T] has probability e^{-gamma T},
    // about 2.2% here, so a 600-path sample essentially always contains one
    CHECK(zero_jump_paths >= 1);
}

TEST_CASE("self-intersection time has the exact closed cases", "[monte_carlo]")
{
    PathRecord rec;
    rec.local_times[Site{}] = 16.0;
    CHECK(tau_squared(rec) == 256.0); // never moved: tau^2 = T^2

    // T split evenly over m distinct sites gives T^2 / m
    PathRecord split;
    for (int i = 0; i < 4; ++i) {
        Site s;
        if (i > 0) s.set_digit(0, static_cast<Site::digit_t>(i));
        split.local_times[s] = 4.0;
    }
    CHECK_THAT(tau_squared(split), WithinRel(64.0, 1e-15));

    // simulated paths stay inside the algebraic envelope
    McConfig cfg;
    cfg.T = 4.0;
    cfg.n_paths = 300;
    cfg.seed = 11;
    for (long i = 0; i < cfg.n_paths; ++i) {
        auto rng = path_rng(cfg.seed, static_cast<std::uint64_t>(i));
        const PathRecord r = simulate_path(cfg, rng);
        const real_t t2 = tau_squared(r);
        const real_t m = static_cast<real_t>(r.local_times.size());
        CHECK(t2 <= cfg.T * cfg.T * (1.0 + 1e-12));
        CHECK(t2 >= cfg.T * cfg.T / m * (1.0 - 1e-12));
    }
}

TEST_CASE("holding and jump statistics match the walk law", "[monte_carlo]")
{
    McConfig cfg;
    cfg.T = 4.0;
    cfg.n_paths = 50000;
    cfg.seed = 7;

    const real_t n = static_cast<real_t>(cfg.n_paths);
    real_t sumj = 0.0, sumj2 = 0.0;
    long zero_jump = 0;
    long first_level[8] = {0};
    long first_total = 0;
    for (long i = 0; i < cfg.n_paths; ++i) {
        auto rng = path_rng(cfg.seed, static_cast<std::uint64_t>(i));
        const PathRecord rec = simulate_path(cfg, rng);
        const real_t j = static_cast<real_t>(rec.jump_times.size());
        sumj += j;
        sumj2 += j * j;
        if (rec.jump_times.empty()) {
            ++zero_jump;
        } else {
            ++first_total;
            const int lv = rec.sites[1].level();
            if (lv < 8) ++first_level[lv];
        }
    }

    // jump count is Poisson(gamma T)
    const real_t lam = P2.gamma * cfg.T;
    const real_t mean = sumj / n;
    CHECK(std::abs(mean - lam) <= 4.0 * std::sqrt(lam / n));
    const real_t var = sumj2 / n - mean * mean;
    CHECK(var / lam > 0.9);
    CHECK(var / lam < 1.1);

    // no-jump probability e^{-gamma T}
    const real_t pz = std::exp(-lam);
    CHECK(std::abs(zero_jump / n - pz) <= 4.0 * std::sqrt(pz * (1.0 - pz) / n));

    // jump level is geometric: P(N) = (1 - L^-2) L^{-2(N-1)}
    const real_t q = 1.0 / (static_cast<real_t>(P2.L) * P2.L);
    for (int N = 1; N <= 5; ++N) {
        const real_t pN = (1.0 - q) * std::pow(q, N - 1);
        const real_t freq = static_cast<real_t>(first_level[N]) / first_total;
        CHECK(std::abs(freq - pN) <= 4.5 * std::sqrt(pN * (1.0 - pN) / first_total));
    }
}

TEST_CASE("ensemble slots match per-path records bitwise", "[monte_carlo]")
{
    McConfig cfg;
    cfg.T = 8.0;
    cfg.n_paths = 40;
    cfg.seed = 99;
    const EnsembleResult ens = run_ensemble(cfg);
    REQUIRE(ens.slots.size() == 40);
    CHECK(ens.depth_folds == 0);

    // walk the same streams in reverse order: slot content must not depend on
    // the order paths are generated in
    for (long i = cfg.n_paths - 1; i >= 0; --i) {
        auto rng = path_rng(cfg.seed, static_cast<std::uint64_t>(i));
        const PathRecord rec = simulate_path(cfg, rng);
        CHECK(tau_squared(rec) == ens.slots[static_cast<std::size_t>(i)].tau2);
        CHECK(rec.endpoint.level() == ens.slots[static_cast<std::size_t>(i)].level);
    }
}

TEST_CASE("free-walk end-to-end estimate matches the closed form", "[monte_carlo]")
{
    McConfig cfg;
    cfg.T = 16.0;
    cfg.n_paths = 100000;
    cfg.seed = 12345;
    cfg.alpha = 1.0;
    const EndToEndEstimate e = weighted_endtoend(cfg);

    const real_t exact = endtoend_free(cfg.T, cfg.alpha, P2);
    CHECK(std::abs(e.estimate - exact) <= 4.0 * e.std_error);
    CHECK(e.std_error > 0.0);
    CHECK(e.std_error < 0.1);
    CHECK(e.ess == 100000.0); // unit weights: effective size is exact
    CHECK(e.depth_folds == 0);

    // frozen stream fixture: any change to the draw sequence shows up here
    CHECK_THAT(e.estimate, WithinRel(9.9515799999999999, 1e-13));
    CHECK_THAT(e.std_error, WithinRel(0.06573298224663171, 1e-13));
}

TEST_CASE("free-walk kernel estimate matches the transition weights", "[monte_carlo]")
{
    McConfig cfg;
    cfg.T = 4.0;
    cfg.n_paths = 50000;
    cfg.seed = 2024;
    for (int N : {0, 1, 2}) {
        const KernelEstimate k = weighted_kernel(cfg, N);
        const real_t exact = p0(complex_t(cfg.T), N, P2).real();
        CAPTURE(N, k.estimate, k.std_error, exact);
        CHECK(std::abs(k.estimate - exact) <= 4.0 * k.std_error);
        CHECK(k.std_error > 0.0);
        CHECK(k.ess == 50000.0);
    }
    CHECK_THROWS_AS(weighted_kernel(cfg, -1), std::invalid_argument);
}

TEST_CASE("repulsion estimate agrees with the contour evaluation", "[monte_carlo]")
{
    McConfig cfg;
    cfg.T = 16.0;
    cfg.n_paths = 20000;
    cfg.seed = 31415;
    cfg.lambda = 0.02;
    cfg.alpha = 1.0;
    const EndToEndEstimate e = weighted_endtoend(cfg);

    const complex_t contour =
        endtoend_interacting(cfg.T, cfg.alpha, complex_t(cfg.lambda), DomainSpec{}, P2);
    CHECK(std::abs(e.estimate - contour.real()) <= 4.0 * e.std_error);

    // mild repulsion barely perturbs the weights
    CHECK(e.ess > 0.9 * static_cast<real_t>(cfg.n_paths));
    CHECK(e.ess < static_cast<real_t>(cfg.n_paths));
    CHECK_THAT(e.estimate, WithinRel(10.030081459924073, 1e-13));

    // repulsion pushes the endpoint outward relative to the free walk
    CHECK(e.estimate > endtoend_free(cfg.T, cfg.alpha, P2));
}

TEST_CASE("interacting kernel estimate has consistent normalization", "[monte_carlo]")
{
    // summing the per-site estimates back over shells must reproduce the
    // tilted mean weight: sum_x shell_count * estimate = e^{-beta_c T} mean(w)
    McConfig cfg;
    cfg.T = 4.0;
    cfg.n_paths = 5000;
    cfg.seed = 77;
    cfg.lambda = 0.02;

    const real_t beta_c =
        critical_beta(complex_t(cfg.lambda), DomainSpec{}, P2).beta_c.real();
    const EnsembleResult ens = run_ensemble(cfg);
    real_t mean_w = 0.0;
    for (const PathSummary& s : ens.slots) mean_w += std::exp(-cfg.lambda * s.tau2);
    mean_w /= static_cast<real_t>(cfg.n_paths);

    real_t recombined = 0.0;
    for (int N = 0; N <= 12; ++N) {
        const KernelEstimate k = weighted_kernel(cfg, N);
        recombined += (N == 0 ? 1.0 : shell_count(N, P2)) * k.estimate;
    }
    CHECK_THAT(recombined, WithinRel(std::exp(-beta_c * cfg.T) * mean_w, 1e-12));
}

TEST_CASE("degenerate weights are rejected", "[monte_carlo]")
{
    McConfig cfg;
    cfg.T = 16.0;
    cfg.n_paths = 50;
    cfg.seed = 5;
    cfg.lambda = 5.0;
    CHECK_THROWS_AS(weighted_endtoend(cfg), DegenerateWeightsError);
}

TEST_CASE("mc results are reproducible bitwise", "[monte_carlo]")
{
    McConfig cfg;
    cfg.T = 16.0;
    cfg.n_paths = 5000;
    cfg.seed = 31415;
    cfg.lambda = 0.02;
    cfg.alpha = 1.0;
    const EndToEndEstimate a = weighted_endtoend(cfg);
    const EndToEndEstimate b = weighted_endtoend(cfg);
    CHECK(a.estimate == b.estimate);
    CHECK(a.std_error == b.std_error);
    CHECK(a.ess == b.ess);

    const KernelEstimate ka = weighted_kernel(cfg, 1);
    const KernelEstimate kb = weighted_kernel(cfg, 1);
    CHECK(ka.estimate == kb.estimate);
    CHECK(ka.std_error == kb.std_error);
}
