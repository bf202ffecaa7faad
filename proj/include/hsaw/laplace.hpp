#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <map>
#include <numbers>
#include <stdexcept>
#include <utility>
#include <vector>

#include <hsaw/errors.hpp>
#include <hsaw/free_process.hpp>
#include <hsaw/rg_flow.hpp>

// Contour inversion of the killing-rate transform.  The transition kernel is
// recovered from a resolvent g via
//
//     p(T, x) = (1 / 2 pi i) Int_{s Gamma} e^{beta T} g(beta) dbeta,
//
// where Gamma is the fixed reference contour made of the two rays
// {r e^{+-i b_beta} : 1 <= r <= R} joined through +1 by the arc of the unit
// circle, and s = T_scale / T dilates it so the nodes sit on the natural
// |beta T| ~ 1 scale.  With b_beta past pi/2 the factor e^{T_scale z} decays
// exponentially along the rays, so a modest cutoff R suffices.  The same
// machinery evaluates the interacting kernel by composing the resolvent with
// the effective killing rate of the coupling flow.

namespace hsaw {

struct ContourSpec {
    real_t b_beta = 5.0 * std::numbers::pi / 8.0; // ray angle, in (pi/2, 3pi/4)
    real_t T_scale = 1.0;    // nodes live on (T_scale / T) Gamma
    int arc_nodes = 64;      // base node budget on the arc
    int ray_nodes = 256;     // base node budget per ray
    real_t ray_cutoff = 0.0; // R; nonpositive means "derive from the decay bound"

    void validate() const
    {
        const real_t pi = std::numbers::pi;
        if (!(b_beta > pi / 2.0 && b_beta < 0.75 * pi))
            throw std::invalid_argument("ContourSpec: b_beta must lie in (pi/2, 3pi/4)");
        if (!(T_scale > 0.0))
            throw std::invalid_argument("ContourSpec: T_scale must be positive");
        if (arc_nodes < 4 || ray_nodes < 4)
            throw std::invalid_argument("ContourSpec: node budgets must be at least 4");
        if (ray_cutoff > 0.0 && !(ray_cutoff > 1.0))
            throw std::invalid_argument("ContourSpec: ray_cutoff must exceed 1 when given");
    }

    // Default cutoff from e^{T_scale cos(b_beta) R} < 1e-14.
    real_t effective_cutoff() const
    {
        if (ray_cutoff > 0.0) return ray_cutoff;
        return std::log(1e14) / (T_scale * (-std::cos(b_beta)));
    }
};

struct InversionResult {
    complex_t value{0.0};
    real_t error_estimate = 0.0; // |change| under the accepted node doubling
    int refinements = 0;         // doublings spent before acceptance
};

namespace detail {

// Nodes and weights of n-point Gauss-Legendre on [-1, 1], by Newton iteration
// on the three-term recurrence.
inline void gauss_legendre(int n, std::vector<real_t>& x, std::vector<real_t>& w)
{
    x.assign(n, 0.0);
    w.assign(n, 0.0);
    const real_t pi = std::numbers::pi;
    for (int i = 0; i < (n + 1) / 2; ++i) {
        real_t t = std::cos(pi * (i + 0.75) / (n + 0.5));
        real_t dp = 0.0;
        for (int it = 0; it < 64; ++it) {
            real_t pa = 1.0, pb = t;
            for (int j = 2; j <= n; ++j) {
                const real_t pc = ((2.0 * j - 1.0) * t * pb - (j - 1.0) * pa) / j;
                pa = pb;
                pb = pc;
            }
            dp = n * (t * pb - pa) / (t * t - 1.0);
            const real_t dt = pb / dp;
            t -= dt;
            if (std::abs(dt) < 1e-15) break;
        }
        x[i] = -t;
        x[n - 1 - i] = t;
        w[i] = w[n - 1 - i] = 2.0 / ((1.0 - t * t) * dp * dp);
    }
}

// Quadrature nodes z on the reference contour Gamma with weights that absorb
// both the Gauss-Legendre weight and the local dz, emitted in traversal order
// (lower ray inward, arc counterclockwise, upper ray outward).  The node
// budgets double per refinement level; the rays are paneled geometrically so
// the density scales like 1/|z| near the arc where the integrand varies.
struct ContourNodes {
    std::vector<complex_t> z;
    std::vector<complex_t> w;
};

inline ContourNodes contour_nodes(const ContourSpec& c, int level)
{
    constexpr int kOrder = 16;
    std::vector<real_t> gx, gw;
    gauss_legendre(kOrder, gx, gw);

    const real_t b = c.b_beta;
    const real_t R = c.effective_cutoff();
    const complex_t up = std::polar(1.0, b);
    const complex_t dn = std::conj(up);

    std::vector<real_t> bp{1.0};
    while (bp.back() < R) bp.push_back(std::min(2.0 * bp.back(), R));
    const int nseg = static_cast<int>(bp.size()) - 1;

    const long arc_budget = static_cast<long>(c.arc_nodes) << level;
    const long ray_budget = static_cast<long>(c.ray_nodes) << level;
    const int arc_panels = static_cast<int>(std::max<long>(1, arc_budget / kOrder));
    const int sub = static_cast<int>(std::max<long>(1, ray_budget / (kOrder * std::max(nseg, 1))));

    ContourNodes out;
    auto panel = [&](real_t a0, real_t a1, auto&& emit) {
        const real_t mid = 0.5 * (a0 + a1), half = 0.5 * (a1 - a0);
        for (int i = 0; i < kOrder; ++i) emit(mid + half * gx[i], half * gw[i]);
    };

    // Lower ray, traversed from the cutoff in toward the arc; the reversed
    // direction shows up as the sign on the weight.
    for (int s = nseg; s-- > 0;)
        for (int j = sub; j-- > 0;) {
            const real_t a0 = bp[s] + (bp[s + 1] - bp[s]) * j / sub;
            const real_t a1 = bp[s] + (bp[s + 1] - bp[s]) * (j + 1) / sub;
            panel(a0, a1, [&](real_t r, real_t wt) {
                out.z.push_back(r * dn);
                out.w.push_back(-wt * dn);
            });
        }
    for (int j = 0; j < arc_panels; ++j) {
        const real_t t0 = -b + 2.0 * b * j / arc_panels;
        const real_t t1 = -b + 2.0 * b * (j + 1) / arc_panels;
        panel(t0, t1, [&](real_t th, real_t wt) {
            const complex_t e = std::polar(1.0, th);
            out.z.push_back(e);
            out.w.push_back(wt * complex_t(0.0, 1.0) * e);
        });
    }
    for (int s = 0; s < nseg; ++s)
        for (int j = 0; j < sub; ++j) {
            const real_t a0 = bp[s] + (bp[s + 1] - bp[s]) * j / sub;
            const real_t a1 = bp[s] + (bp[s + 1] - bp[s]) * (j + 1) / sub;
            panel(a0, a1, [&](real_t r, real_t wt) {
                out.z.push_back(r * up);
                out.w.push_back(wt * up);
            });
        }
    return out;
}

} // namespace detail

// (1 / 2 pi i) Int e^{beta T} g(beta) dbeta over the dilated contour.  The
// node count doubles until two consecutive answers agree to 1e-8 relative;
// the difference is returned as the error estimate.  Nodes are summed in a
// fixed traversal order so repeated runs are bit-identical.
inline InversionResult invert(const std::function<complex_t(complex_t)>& g, real_t T,
                              const ContourSpec& c = {})
{
    c.validate();
    if (!(T > 0.0)) throw std::invalid_argument("invert: T must be positive");

    constexpr int kMaxRefine = 4;
    constexpr real_t kRelTarget = 1e-8;
    const real_t s = c.T_scale / T;
    const complex_t norm = s / complex_t(0.0, 2.0 * std::numbers::pi);

    complex_t prev{0.0};
    for (int level = 0; level <= kMaxRefine; ++level) {
        const detail::ContourNodes nodes = detail::contour_nodes(c, level);
        complex_t acc{0.0};
        for (std::size_t i = 0; i < nodes.z.size(); ++i)
            acc += nodes.w[i] * std::exp(c.T_scale * nodes.z[i]) * g(s * nodes.z[i]);
        const complex_t val = acc * norm;
        if (level > 0) {
            const real_t est = std::abs(val - prev);
            if (est <= kRelTarget * std::abs(val)) return {val, est, level};
        }
        prev = val;
    }
    throw QuadratureStallError("invert: node doubling failed to settle at 1e-8 relative");
}

struct InteractingKernelQuery {
    real_t T = 1.0;
    int x_level = 0;
    complex_t lambda{0.0};
};

// Evaluation state for the interacting kernel at fixed lambda: the critical
// trajectory tables plus a cache of limiting effective killing rates keyed by
// contour node.  All x-levels share the cache, so the per-node flow runs are
// paid once per (node, lambda) no matter how many shells are summed.
class InteractingKernel {
public:
    InteractingKernel(complex_t lambda, real_t T_hint, const DomainSpec& d,
                      const LatticeParams& p)
        : lambda_(lambda), p_(p)
    {
        d.validate();
        if (!d.lambda_admissible(lambda))
            throw std::invalid_argument("InteractingKernel: lambda outside the coupling sector");
        if (!(T_hint > 0.0))
            throw std::invalid_argument("InteractingKernel: time horizon must be positive");
        // Table depth: enough scales to carry the smallest contour node
        // |beta_hat| ~ 1/T past its crossover, plus slack for stabilization.
        const real_t l2 = std::log(static_cast<real_t>(p.L) * p.L);
        depth_ = 80 + std::max(0, static_cast<int>(std::ceil(std::log(std::max(T_hint, 1.0)) / l2)));
        ct_ = critical_trajectory(lambda_, depth_, p_);
    }

    complex_t beta_effective(complex_t beta_hat) const
    {
        const std::pair<real_t, real_t> key{beta_hat.real(), beta_hat.imag()};
        const auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;
        complex_t be;
        for (;;) {
            try {
                be = beta_eff_limit(beta_hat, ct_, p_);
                break;
            } catch (const NonConvergenceError&) {
                if (depth_ >= 32768) throw;
                depth_ *= 2;
                ct_ = critical_trajectory(lambda_, depth_, p_);
            }
        }
        cache_.emplace(key, be);
        return be;
    }

    InversionResult evaluate(real_t T, int x_level, const ContourSpec& c = {}) const
    {
        return invert(
            [this, x_level](complex_t bh) {
                return green0({beta_effective(bh), x_level}, p_);
            },
            T, c);
    }

    const CriticalTrajectory& trajectory() const { return ct_; }

private:
    complex_t lambda_;
    LatticeParams p_;
    mutable int depth_ = 0;
    mutable CriticalTrajectory ct_;
    mutable std::map<std::pair<real_t, real_t>, complex_t> cache_;
};

// Interacting kernel p_lambda(T, x): the contour integral of
// e^{beta_hat T} green0(beta_eff(beta_hat), x), i.e. the free resolvent
// composed with the limiting effective killing rate of the shifted flow.
// The composition is the leading model of the interacting resolvent; its
// dropped correction is what the comparison bands in the callers absorb.
inline complex_t p_lambda(const InteractingKernelQuery& q, const DomainSpec& d,
                          const LatticeParams& p, const ContourSpec& c = {})
{
    if (q.x_level < 0) throw std::invalid_argument("p_lambda: x_level must be >= 0");
    const InteractingKernel kern(q.lambda, q.T, d, p);
    return kern.evaluate(q.T, q.x_level, c).value;
}

// Rescaled time t = T ell(1/T)^{1/4} of the leading kernel form.
inline complex_t t_effective(real_t T, complex_t lambda, const DomainSpec& d,
                             const LatticeParams& p)
{
    if (!(T > 0.0)) throw std::invalid_argument("t_effective: T must be positive");
    if (lambda == complex_t(0.0)) return complex_t(T);
    const complex_t ell = ell_limit(complex_t(1.0 / T), lambda, d, p);
    return T * std::pow(ell, 0.25);
}

// Closed leading term ell^{1/4} p0(T ell^{1/4}, x); no contour integral.
inline complex_t p_lambda_leading(const InteractingKernelQuery& q, const DomainSpec& d,
                                  const LatticeParams& p)
{
    if (!(q.T > 0.0)) throw std::invalid_argument("p_lambda_leading: T must be positive");
    if (q.x_level < 0) throw std::invalid_argument("p_lambda_leading: x_level must be >= 0");
    if (q.lambda == complex_t(0.0)) return p0(complex_t(q.T), q.x_level, p);
    const complex_t ell = ell_limit(complex_t(1.0 / q.T), q.lambda, d, p);
    const complex_t quarter = std::pow(ell, 0.25);
    return quarter * p0(q.T * quarter, q.x_level, p);
}

// The logarithmic slowdown factor ell(1/T), twice over: once from the coupling
// flow and once from the closed-form model
//     1 + B lambda (4 log_L T + log_L |1 + lambda log_L T|),
// whose unknown O(lambda) constant is set to zero.  Callers compare the two.
struct LogFactorPair {
    complex_t flow{1.0};
    complex_t closed_form{1.0};
};

inline LogFactorPair ell_log_factor(real_t T, complex_t lambda, const LatticeParams& p)
{
    if (!(T > 1.0)) throw std::invalid_argument("ell_log_factor: T must exceed 1");
    LogFactorPair out;
    if (lambda == complex_t(0.0)) return out;
    const real_t logL = std::log(static_cast<real_t>(p.L));
    const real_t lT = std::log(T) / logL;
    out.closed_form =
        1.0 + p.B * lambda * (4.0 * lT + std::log(std::abs(1.0 + lambda * lT)) / logL);
    out.flow = ell_limit(complex_t(1.0 / T), lambda, DomainSpec{}, p);
    return out;
}

// Normalized end-to-end distance of the interacting walk,
// [ Sum_x p_lambda(T,x) |x|^alpha / Sum_x p_lambda(T,x) ]^{1/alpha},
// with the sums taken shell by shell.  Shells are cut off once the kernel
// envelope ~ t / |x|^6 (leading decay and correction band share it) times the
// shell count drops below 1e-10 of both accumulated sums.  Returned as a
// complex number: for real lambda the imaginary part is a rounding residue
// and doubles as a symmetry diagnostic.
inline complex_t endtoend_interacting(real_t T, real_t alpha, complex_t lambda,
                                      const DomainSpec& d, const LatticeParams& p,
                                      const ContourSpec& c = {})
{
    if (!(T > 0.0)) throw std::invalid_argument("endtoend_interacting: T must be positive");
    if (!(alpha > 0.0 && alpha < 2.0))
        throw std::invalid_argument("endtoend_interacting: alpha must lie in (0, 2)");

    const InteractingKernel kern(lambda, T, d, p);
    const real_t L = static_cast<real_t>(p.L);
    const real_t t_abs = std::abs(t_effective(T, lambda, d, p));
    const real_t env0 = 4.0 * L * L * t_abs * p.B;
    const int n_peak =
        1 + std::max(0, static_cast<int>(std::ceil(std::log(std::max(t_abs, 1.0)) /
                                                   std::log(L * L))));

    complex_t den = kern.evaluate(T, 0, c).value;
    complex_t num{0.0};
    constexpr int kShellCap = 240;
    bool settled = false;
    for (int N = 1; N <= kShellCap; ++N) {
        const complex_t pk = kern.evaluate(T, N, c).value;
        const real_t sc = shell_count(N, p);
        const real_t xa = std::pow(L, alpha * N);
        den += sc * pk;
        num += sc * pk * xa;
        if (N <= n_peak) continue;
        if (!(std::abs(pk) > 0.0)) { // kernel underflowed; deeper shells are flat zero
            settled = true;
            break;
        }
        // shell_count(N) L^{-6N} = B L^{-2N} exactly, so the envelope terms
        // decay geometrically and never overflow the bookkeeping.
        const real_t env_den = env0 * std::pow(L, -2.0 * N);
        const real_t env_num = env0 * std::pow(L, (alpha - 2.0) * N);
        if (env_num < 1e-10 * std::abs(num) && env_den < 1e-10 * std::abs(den)) {
            settled = true;
            break;
        }
    }
    if (!settled)
        throw NonConvergenceError("endtoend_interacting: shell sum did not truncate");
    return std::pow(num / den, 1.0 / alpha);
}

} // namespace hsaw
