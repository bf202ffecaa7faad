#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

#include <hsaw/errors.hpp>
#include <hsaw/lattice.hpp>
#include <hsaw/rg_flow.hpp>

// Continuous-time Monte Carlo of the hierarchical jump walk with local-time
// accumulation and exponential self-repulsion reweighting.  The walk holds at
// each site for an Exp(gamma) time and jumps to a site drawn with rate
// C |x-y|^-6; integrating the rate over a shell makes the jump level
// geometric, P(N) = (1 - L^-2) L^-2(N-1), and within the shell the target is
// uniform.  Repulsion enters only through the path weight e^{-lambda tau^2},
// so the sampler itself is always the free walk (importance sampling).
//
// Every path owns an rng stream derived from (seed, path index), and ensemble
// results are reduced from per-path summary slots in a fixed pairwise order,
// so outputs depend on the configuration alone, not on scheduling.

namespace hsaw {

struct McConfig {
    real_t T = 1.0;
    real_t lambda = 0.0; // repulsion strength; real and nonnegative only
    long n_paths = 1000;
    std::uint64_t seed = 0;
    LatticeParams p = LatticeParams::make(2);
    real_t alpha = 1.0;

    void validate() const
    {
        if (!(T > 0.0)) throw std::invalid_argument("McConfig: T must be positive");
        if (!(lambda >= 0.0))
            throw std::invalid_argument("McConfig: lambda must be nonnegative");
        if (n_paths < 1) throw std::invalid_argument("McConfig: n_paths must be >= 1");
        if (!(alpha > 0.0 && alpha < 2.0))
            throw std::invalid_argument("McConfig: alpha must lie in (0, 2)");
    }
};

struct PathRecord {
    std::vector<real_t> jump_times;     // increasing, in (0, T]
    std::vector<Site> sites;            // visited sequence, starting at origin
    std::map<Site, real_t> local_times; // site -> time spent, sums to T
    Site endpoint;
};

// Self-intersection local time: sum over sites of the squared occupation.
inline real_t tau_squared(const PathRecord& path)
{
    real_t s = 0.0;
    for (const auto& [site, t] : path.local_times) s += t * t;
    return s;
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

// Uniform in (0, 1], 53-bit resolution; never zero, so logs stay finite.
template <typename Rng>
inline real_t unit_open(Rng& rng)
{
    return static_cast<real_t>((rng() >> 11) + 1) * 0x1.0p-53;
}

// Draw-order core shared by the record-keeping and ensemble paths: any change
// here must keep the rng call sequence identical for both.  The visitor sees
// hold(site, duration) for every completed stay, jump(time, site) for every
// transition, and finish(endpoint) once the horizon is reached.
//
// The geometric level draw inverts a single 53-bit uniform, which cannot
// reach levels beyond log(2^53)/log(L^2) (27 for L = 2); the truncated tail
// mass ~ 4^-27 per jump is far below the 1e-12 the capacity fold tolerates.
template <typename Rng, typename Visitor>
inline void walk_path(real_t T, const LatticeParams& p, Rng& rng, Visitor& v,
                      long& depth_folds)
{
    const real_t logq = -std::log(static_cast<real_t>(p.L) * p.L);
    Site site;
    real_t t = 0.0;
    for (;;) {
        const real_t dt = -std::log(unit_open(rng)) / p.gamma;
        if (t + dt >= T) {
            v.hold(site, T - t);
            v.finish(site);
            return;
        }
        v.hold(site, dt);
        t += dt;
        int N = 1 + static_cast<int>(std::log(unit_open(rng)) / logq);
        if (N > Site::kCapacity) {
            N = Site::kCapacity;
            ++depth_folds;
        }
        site = site.add(sample_shell(N, p, rng), p);
        v.jump(t, site);
    }
}

// Pairwise (binary-tree) summation: a fixed reduction order that any worker
// partition must reproduce, and better-conditioned than a running sum.
inline real_t pairwise_sum(const real_t* a, std::size_t n)
{
    if (n <= 32) {
        real_t s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += a[i];
        return s;
    }
    const std::size_t h = n / 2;
    return pairwise_sum(a, h) + pairwise_sum(a + h, n - h);
}

inline real_t pairwise_sum(const std::vector<real_t>& a)
{
    return pairwise_sum(a.data(), a.size());
}

} // namespace detail

// The rng stream owned by one path: both layers of mixing keep neighboring
// path indices and neighboring user seeds statistically unrelated.
inline std::mt19937_64 path_rng(std::uint64_t seed, std::uint64_t path_index)
{
    return std::mt19937_64(detail::splitmix64(detail::splitmix64(seed) ^ (path_index + 1)));
}

// Exact simulation of one path on [0, T].
template <typename Rng>
inline PathRecord simulate_path(const McConfig& cfg, Rng& rng)
{
    cfg.validate();
    PathRecord rec;
    rec.sites.emplace_back();

    struct Recorder {
        PathRecord& r;
        void hold(const Site& s, real_t dt) { r.local_times[s] += dt; }
        void jump(real_t t, const Site& s)
        {
            r.jump_times.push_back(t);
            r.sites.push_back(s);
        }
        void finish(const Site& s) { r.endpoint = s; }
    } v{rec};

    long folds = 0;
    detail::walk_path(cfg.T, cfg.p, rng, v, folds);
    return rec;
}

// Per-path summary slot: everything the weighted estimators need.
struct PathSummary {
    real_t tau2 = 0.0;
    std::int32_t level = 0; // endpoint norm level, |endpoint| = L^level (0 -> origin)
};

struct EnsembleResult {
    std::vector<PathSummary> slots;
    long depth_folds = 0;
};

// Run the free-walk ensemble into summary slots, one per path index.  The
// trajectory bits match simulate_path draw for draw; local times are merged
// by canonical site order so tau^2 comes out bitwise equal to summing the
// PathRecord map.
inline EnsembleResult run_ensemble(const McConfig& cfg)
{
    cfg.validate();
    EnsembleResult out;
    out.slots.resize(static_cast<std::size_t>(cfg.n_paths));

    struct Collector {
        std::vector<std::pair<Site, real_t>>& events;
        Site end;
        void hold(const Site& s, real_t dt) { events.emplace_back(s, dt); }
        void jump(real_t, const Site&) {}
        void finish(const Site& s) { end = s; }
    };

    std::vector<std::pair<Site, real_t>> events;
    for (long i = 0; i < cfg.n_paths; ++i) {
        events.clear();
        auto rng = path_rng(cfg.seed, static_cast<std::uint64_t>(i));
        Collector v{events, Site{}};
        long folds = 0;
        detail::walk_path(cfg.T, cfg.p, rng, v, folds);
        out.depth_folds += folds;

        // stable sort keeps per-site holds in visit order, so the per-site
        // accumulation reproduces the map-based sums exactly
        std::stable_sort(events.begin(), events.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
        real_t tau2 = 0.0;
        std::size_t j = 0;
        while (j < events.size()) {
            real_t acc = events[j].second;
            std::size_t k = j + 1;
            while (k < events.size() && events[k].first == events[j].first)
                acc += events[k++].second;
            tau2 += acc * acc;
            j = k;
        }
        out.slots[static_cast<std::size_t>(i)] = {tau2, v.end.level()};
    }
    return out;
}

struct EndToEndEstimate {
    real_t estimate = 0.0;
    real_t std_error = 0.0;
    real_t ess = 0.0;    // effective sample size of the weights
    long depth_folds = 0;
};

struct KernelEstimate {
    real_t estimate = 0.0;
    real_t std_error = 0.0;
    real_t ess = 0.0;
    long depth_folds = 0;
};

namespace detail {

// Normalized weights exp(-lambda tau2 - M) with M the log-weight maximum;
// tau^2 grows like T^2, so raw weights can underflow long before the
// normalized ones lose anything.
inline std::vector<real_t> shifted_weights(const std::vector<PathSummary>& slots,
                                           real_t lambda, real_t& max_log)
{
    max_log = 0.0;
    if (lambda > 0.0) {
        real_t min_tau2 = slots.front().tau2;
        for (const PathSummary& s : slots) min_tau2 = std::min(min_tau2, s.tau2);
        max_log = -lambda * min_tau2;
    }
    std::vector<real_t> w(slots.size());
    for (std::size_t i = 0; i < slots.size(); ++i)
        w[i] = std::exp(-lambda * slots[i].tau2 - max_log);
    return w;
}

inline real_t effective_sample_size(const std::vector<real_t>& w, real_t sum_w)
{
    std::vector<real_t> w2(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) w2[i] = w[i] * w[i];
    return sum_w * sum_w / pairwise_sum(w2);
}

} // namespace detail

// Self-normalized importance estimate of the end-to-end distance,
// [ sum_i w_i |endpoint_i|^alpha / sum_i w_i ]^{1/alpha},  w_i = e^{-lambda tau2_i},
// with the delta-method standard error of the ratio propagated through the
// alpha-th root.
inline EndToEndEstimate weighted_endtoend(const McConfig& cfg)
{
    const EnsembleResult ens = run_ensemble(cfg);
    const std::size_t n = ens.slots.size();
    const real_t L = static_cast<real_t>(cfg.p.L);

    real_t max_log = 0.0;
    const std::vector<real_t> w = detail::shifted_weights(ens.slots, cfg.lambda, max_log);
    const real_t sum_w = detail::pairwise_sum(w);
    const real_t ess = detail::effective_sample_size(w, sum_w);
    if (ess < 10.0)
        throw DegenerateWeightsError("weighted_endtoend: effective sample size below 10");

    std::vector<real_t> wx(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::int32_t lev = ens.slots[i].level;
        wx[i] = lev == 0 ? 0.0 : w[i] * std::pow(L, cfg.alpha * lev);
    }
    const real_t m = detail::pairwise_sum(wx) / sum_w;
    if (!(m > 0.0))
        throw DegenerateWeightsError("weighted_endtoend: no endpoint mass off the origin");

    std::vector<real_t> dev(n);
    for (std::size_t i = 0; i < n; ++i) {
        const real_t x = ens.slots[i].level == 0
                             ? 0.0
                             : std::pow(L, cfg.alpha * ens.slots[i].level);
        const real_t d = w[i] * (x - m);
        dev[i] = d * d;
    }
    const real_t var_m = detail::pairwise_sum(dev) / (sum_w * sum_w);

    EndToEndEstimate out;
    out.estimate = std::pow(m, 1.0 / cfg.alpha);
    out.std_error = std::sqrt(var_m) / cfg.alpha * std::pow(m, 1.0 / cfg.alpha - 1.0);
    out.ess = ess;
    out.depth_folds = ens.depth_folds;
    return out;
}

// Unnormalized interacting kernel estimate at shell level x_level:
//   e^{-beta_c T} mean( w_i 1{|endpoint_i| = L^x_level} ) / shell_count,
// the per-site transition kernel tilted by the critical killing rate from
// the coupling flow.  (The tilt cancels in end-to-end ratios, so only this
// estimator consults beta_c.)
inline KernelEstimate weighted_kernel(const McConfig& cfg, int x_level)
{
    if (x_level < 0)
        throw std::invalid_argument("weighted_kernel: x_level must be >= 0");
    const EnsembleResult ens = run_ensemble(cfg);
    const std::size_t n = ens.slots.size();

    real_t max_log = 0.0;
    const std::vector<real_t> w = detail::shifted_weights(ens.slots, cfg.lambda, max_log);
    const real_t sum_w = detail::pairwise_sum(w);
    const real_t ess = detail::effective_sample_size(w, sum_w);
    if (ess < 10.0)
        throw DegenerateWeightsError("weighted_kernel: effective sample size below 10");

    const real_t beta_c =
        cfg.lambda == 0.0
            ? 0.0
            : critical_beta(complex_t(cfg.lambda), DomainSpec{}, cfg.p).beta_c.real();

    std::vector<real_t> y(n);
    for (std::size_t i = 0; i < n; ++i)
        y[i] = ens.slots[i].level == x_level ? w[i] : 0.0;
    const real_t mean_y = detail::pairwise_sum(y) / static_cast<real_t>(n);

    std::vector<real_t> dev(n);
    for (std::size_t i = 0; i < n; ++i) {
        const real_t d = y[i] - mean_y;
        dev[i] = d * d;
    }
    const real_t var_mean =
        detail::pairwise_sum(dev) / (static_cast<real_t>(n - 1) * static_cast<real_t>(n));

    const real_t scale =
        std::exp(max_log - beta_c * cfg.T) /
        (x_level == 0 ? 1.0 : shell_count(x_level, cfg.p));

    KernelEstimate out;
    out.estimate = scale * mean_y;
    out.std_error = scale * std::sqrt(var_mean);
    out.ess = ess;
    out.depth_folds = ens.depth_folds;
    return out;
}

} // namespace hsaw
