#pragma once

// Coupling-constant recursion for the hierarchical interacting walk: the
// quadratic (beta, lambda) map, its derivative flow, the critical killing
// rate beta_c(lambda), the shifted flow around the critical orbit, and the
// scaling functions (k_hat, l_k, ell_k, beta_eff) built from it.

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_bin_float.hpp>

#include <hsaw/errors.hpp>
#include <hsaw/free_process.hpp>
#include <hsaw/lattice.hpp>

namespace hsaw {

// Sector domains for the couplings.  beta lives in the ball B(rho) for
// confinement purposes; lambda lives in the sector {|z| < delta,
// |arg z| < b_lambda} with the bar'd closure using delta_bar and an eps
// margin on the angle.
struct DomainSpec {
    real_t b_beta = 5.0 * std::numbers::pi / 8.0;
    real_t b_lambda = std::numbers::pi / 8.0;
    real_t eps = 0.01;        // angular safety margin
    real_t delta = 0.08;      // lambda radius (open domain)
    real_t delta_bar = 0.16;  // lambda radius (closure)
    real_t rho = 0.5;         // beta confinement ball

    void validate() const
    {
        const real_t pi = std::numbers::pi;
        if (!(b_beta > pi / 2.0))
            throw std::invalid_argument("DomainSpec: b_beta must exceed pi/2");
        if (!(b_lambda < pi / 3.0))
            throw std::invalid_argument("DomainSpec: b_lambda must stay below pi/3");
        if (!(2.0 * b_beta + 1.5 * b_lambda < 1.5 * pi))
            throw std::invalid_argument("DomainSpec: 2 b_beta + 3/2 b_lambda < 3 pi/2 violated");
        if (!(2.0 * (b_beta + eps) + 1.5 * (b_lambda + eps) < 1.5 * pi))
            throw std::invalid_argument("DomainSpec: eps margin breaks the angle budget");
        if (!(eps > 0.0) || !(delta > 0.0) || !(delta_bar > delta) || !(rho > 0.0))
            throw std::invalid_argument("DomainSpec: radii must be positive with delta_bar > delta");
    }

    bool beta_in_ball(complex_t b) const { return std::abs(b) <= rho; }

    // lambda = 0 sits on the fixed line of the recursion and counts as inside.
    bool lambda_in_closure(complex_t l) const
    {
        if (l == complex_t(0.0)) return true;
        return std::abs(l) <= delta_bar && std::abs(std::arg(l)) <= b_lambda + eps;
    }

    bool lambda_admissible(complex_t l) const
    {
        if (l == complex_t(0.0)) return true;
        return std::abs(l) < delta && std::abs(std::arg(l)) < b_lambda;
    }
};

struct CouplingState {
    int step = 0;
    complex_t beta{0.0};
    complex_t lambda{0.0};
    complex_t dbeta{1.0};    // d beta_j / d beta_0
    complex_t dlambda{0.0};  // d lambda_j / d beta_0
};

struct FlowReport {
    static constexpr int kNoExit = std::numeric_limits<int>::max();
    std::vector<CouplingState> trajectory;
    int exit_step = kNoExit;  // first j with the state outside B(rho) x closure
    bool exited = false;
};

struct CriticalData {
    complex_t beta_c{0.0};
    real_t bracket_width = 0.0;  // final uncertainty of the search
    int steps_held = 0;          // flow from beta_c confined for k <= steps_held
};

// One application of the recursion
//   lambda' = lambda - 8 B lambda^2 / (1+beta)^2
//   beta'   = L^2 [beta + 2 B lambda / (1+beta)]
// together with its exact differentials with respect to beta_0.
inline CouplingState step(const CouplingState& s, const LatticeParams& p)
{
    const complex_t den = 1.0 + s.beta;
    if (std::abs(den) <= 1e-8)
        throw DenominatorCollapseError("step: 1+beta vanished at step " + std::to_string(s.step));
    const complex_t den2 = den * den;
    const real_t L2 = static_cast<real_t>(p.L) * p.L;
    const real_t B = p.B;

    CouplingState n;
    n.step = s.step + 1;
    n.lambda = s.lambda - 8.0 * B * s.lambda * s.lambda / den2;
    n.beta = L2 * (s.beta + 2.0 * B * s.lambda / den);
    n.dlambda = s.dlambda -
                16.0 * B * (s.lambda * s.dlambda - s.lambda * s.lambda * s.dbeta / den) / den2;
    n.dbeta = L2 * (s.dbeta + 2.0 * B * (s.dlambda - s.lambda * s.dbeta / den) / den);
    return n;
}

// Iterate until the state leaves B(rho) x lambda-closure or max_steps is
// reached.  The exiting state is kept in the trajectory so callers can see
// where the orbit landed.
inline FlowReport flow(complex_t beta, complex_t lambda, const DomainSpec& d, int max_steps,
                       const LatticeParams& p)
{
    if (max_steps < 1) throw std::invalid_argument("flow: max_steps must be >= 1");
    d.validate();

    FlowReport rep;
    rep.trajectory.reserve(static_cast<size_t>(max_steps) + 1);
    CouplingState s;
    s.beta = beta;
    s.lambda = lambda;
    for (;;) {
        rep.trajectory.push_back(s);
        if (!(d.beta_in_ball(s.beta) && d.lambda_in_closure(s.lambda))) {
            rep.exited = true;
            rep.exit_step = s.step;
            break;
        }
        if (s.step >= max_steps) break;
        s = step(s, p);
    }
    return rep;
}

namespace detail {

constexpr int kCriticalMaxSteps = 200;

// Escape direction of the real-lambda flow started at beta:
//   +1  beta_k > 1/2 and increasing,
//   -1  beta_k < -1/2 or 1+beta_k < 1e-3,
//    0  still confined after max_steps.
// Templated so the bisection can run in extended precision; the lattice
// constants are rebuilt in Real to keep them exact there.
template <typename Real>
int classify_escape(Real beta, Real lambda, int L, int max_steps, int* first_outside = nullptr)
{
    using std::abs;
    using std::pow;
    const Real one(1);
    const Real B = one - pow(Real(L), -4);
    const Real L2 = Real(L) * Real(L);
    const Real half = one / 2;
    const Real tiny = one / 1000;

    for (int k = 1; k <= max_steps; ++k) {
        const Real den = one + beta;
        if (abs(den) < Real(1e-8)) {
            if (first_outside) *first_outside = k;
            return -1;
        }
        const Real lam_next = lambda - 8 * B * lambda * lambda / (den * den);
        const Real beta_next = L2 * (beta + 2 * B * lambda / den);
        const bool increasing = beta_next > beta;
        beta = beta_next;
        lambda = lam_next;
        if (beta > half && increasing) {
            if (first_outside) *first_outside = k;
            return +1;
        }
        if (beta < -half || one + beta < tiny) {
            if (first_outside) *first_outside = k;
            return -1;
        }
    }
    if (first_outside) *first_outside = max_steps + 1;
    return 0;
}

// K steps of the complex flow with derivative tracking; false when the
// denominator guard trips or the values stop being finite (the caller damps
// its search step and retries).
inline bool try_flow_K(complex_t beta0, complex_t lambda, int K, const LatticeParams& p,
                       complex_t& g, complex_t& dg)
{
    CouplingState s;
    s.beta = beta0;
    s.lambda = lambda;
    for (int k = 0; k < K; ++k) {
        if (std::abs(1.0 + s.beta) <= 1e-8) return false;
        s = step(s, p);
    }
    g = s.beta;
    dg = s.dbeta;
    return std::isfinite(g.real()) && std::isfinite(g.imag()) && std::isfinite(dg.real()) &&
           std::isfinite(dg.imag());
}

// Newton iteration on beta_K(beta0) = 0 at increasing depth K.  The root of
// beta_K differs from the critical point by O(|beta^c_K| L^{-2K}), which is
// below double rounding for K ~ 28.
inline complex_t newton_critical(complex_t seed, complex_t lambda, const LatticeParams& p,
                                 real_t* width_out)
{
    complex_t b = seed;
    real_t last_delta = std::numeric_limits<real_t>::infinity();
    for (int K : {12, 16, 20, 24, 28}) {
        for (int it = 0; it < 50; ++it) {
            complex_t g, dg;
            if (!try_flow_K(b, lambda, K, p, g, dg) || dg == complex_t(0.0)) {
                b = 0.5 * (b + seed);  // pull back toward the continuation seed
                continue;
            }
            complex_t delta = g / dg;
            const real_t cap = 0.1 * (std::abs(lambda) + std::abs(b) + 1e-6);
            if (std::abs(delta) > cap) delta *= cap / std::abs(delta);
            b -= delta;
            last_delta = std::abs(delta);
            if (last_delta <= 1e-16 * (1.0 + std::abs(b))) break;
        }
        seed = b;
    }
    complex_t g, dg;
    real_t resid = std::numeric_limits<real_t>::infinity();
    if (try_flow_K(b, lambda, 28, p, g, dg) && dg != complex_t(0.0)) resid = std::abs(g / dg);
    if (width_out) *width_out = std::max(last_delta, resid);
    return b;
}

// Confinement count of the double-precision flow started at beta_c.
inline int held_steps(complex_t beta_c, complex_t lambda, const DomainSpec& d,
                      const LatticeParams& p)
{
    CouplingState s;
    s.beta = beta_c;
    s.lambda = lambda;
    int last_held = -1;
    while (s.step <= kCriticalMaxSteps) {
        if (!d.beta_in_ball(s.beta)) break;
        last_held = s.step;
        try {
            s = step(s, p);
        } catch (const NumericalError&) {
            break;
        }
    }
    return last_held;
}

}  // namespace detail

// Critical killing rate.  Real lambda: bisection on the escape direction,
// carried out in 50-digit floats so the bracket can be driven far below
// double rounding -- that is what lets the midpoint stay confined for the
// reported number of steps.  Complex lambda: Newton continuation in arg
// lambda from the real-axis solution, in double.
inline CriticalData critical_beta(complex_t lambda, const DomainSpec& d, const LatticeParams& p,
                                  real_t tol = 0.0)
{
    d.validate();
    if (lambda == complex_t(0.0)) return CriticalData{complex_t(0.0), 0.0, detail::kCriticalMaxSteps};
    if (!d.lambda_admissible(lambda))
        throw std::invalid_argument("critical_beta: lambda outside the admissible sector");
    const real_t mag = std::abs(lambda);
    if (tol <= 0.0) tol = 1e-14 * mag;

    if (lambda.imag() == 0.0) {
        using mp_t = boost::multiprecision::cpp_bin_float_50;
        const int cap = detail::kCriticalMaxSteps;
        const mp_t lam(lambda.real());
        mp_t lo = -8 * lam, hi = 8 * lam;
        if (detail::classify_escape(lo, lam, p.L, cap) != -1 ||
            detail::classify_escape(hi, lam, p.L, cap) != +1)
            throw NoBracketError("critical_beta: [-8 lambda, 8 lambda] does not bracket the escape change");

        // Push the bracket far below the requested tolerance: every extra
        // factor L^-2 of width buys one more confined step for the midpoint.
        const mp_t target(std::min(tol, 1e-44 * mag));
        while (hi - lo > target) {
            const mp_t mid = (lo + hi) / 2;
            if (mid == lo || mid == hi) break;  // precision floor
            const int sign = detail::classify_escape(mid, lam, p.L, cap);
            if (sign == 0) {  // confined through the cap: done
                lo = mid;
                hi = mid;
                break;
            }
            (sign > 0 ? hi : lo) = mid;
        }
        const mp_t mid = (lo + hi) / 2;
        int first_out = cap + 1;
        (void)detail::classify_escape(mid, lam, p.L, cap, &first_out);

        CriticalData out;
        out.beta_c = complex_t(mid.convert_to<double>(), 0.0);
        out.bracket_width = (hi - lo).convert_to<double>();
        out.steps_held = std::min(first_out - 1, cap);
        return out;
    }

    // Complex sector: walk the argument in slices of pi/64, Newton at each.
    const real_t phi = std::arg(lambda);
    const CriticalData on_axis = critical_beta(complex_t(mag, 0.0), d, p, tol);
    complex_t bc = on_axis.beta_c;
    real_t width = on_axis.bracket_width;
    const int nphi = std::max(1, static_cast<int>(std::ceil(std::abs(phi) / (std::numbers::pi / 64.0))));
    for (int i = 1; i <= nphi; ++i) {
        const complex_t lam_i = std::polar(mag, phi * static_cast<real_t>(i) / nphi);
        bc = detail::newton_critical(bc, lam_i, p, &width);
    }
    if (!(width <= std::max(tol, 1e-9 * mag)))
        throw NonConvergenceError("critical_beta: complex-sector search stalled");

    CriticalData out;
    out.beta_c = bc;
    out.bracket_width = width;
    out.steps_held = detail::held_steps(bc, lambda, d, p);
    return out;
}

// The critical orbit (beta^c_k, lambda^c_k) as tables.  Computed by
// relaxation: the beta recursion solved backwards is contracting (factor
// L^-2 per step), so alternate forward lambda sweeps with backward beta
// sweeps until the tables stop moving.  The tail seed sits `pad` levels
// beyond the requested depth, so its error is suppressed by L^(-2 pad)
// before it can reach the returned range.
struct CriticalTrajectory {
    complex_t lambda0{0.0};
    std::vector<complex_t> beta;  // beta[k], k = 0..depth
    std::vector<complex_t> lam;   // lam[k]
    int depth() const { return static_cast<int>(beta.size()) - 1; }
};

inline CriticalTrajectory critical_trajectory(complex_t lambda, int depth, const LatticeParams& p)
{
    if (depth < 0) throw std::invalid_argument("critical_trajectory: negative depth");
    CriticalTrajectory ct;
    ct.lambda0 = lambda;
    if (lambda == complex_t(0.0)) {
        ct.beta.assign(static_cast<size_t>(depth) + 1, complex_t(0.0));
        ct.lam.assign(static_cast<size_t>(depth) + 1, complex_t(0.0));
        return ct;
    }

    const int pad = 48;
    const int K = depth + pad;
    const real_t B = p.B;
    const real_t Lm2 = 1.0 / (static_cast<real_t>(p.L) * p.L);
    std::vector<complex_t> bt(static_cast<size_t>(K) + 1), lt(static_cast<size_t>(K) + 1);

    for (int k = 0; k <= K; ++k)  // model guess to start from
        lt[static_cast<size_t>(k)] = lambda / (1.0 + 8.0 * B * lambda * static_cast<real_t>(k));
    for (int k = 0; k <= K; ++k)
        bt[static_cast<size_t>(k)] = -2.0 * B * lt[static_cast<size_t>(k)] / (1.0 - Lm2);

    auto solve_back = [&](complex_t bnext, complex_t lamk, complex_t guess) {
        // fixed point of x = L^-2 bnext - 2 B lamk/(1+x); contraction ~ 2B|lamk|
        complex_t x = guess;
        for (int it = 0; it < 60; ++it) {
            const complex_t den = 1.0 + x;
            if (std::abs(den) < 1e-8)
                throw DenominatorCollapseError("critical_trajectory: 1+beta vanished");
            const complex_t xn = Lm2 * bnext - 2.0 * B * lamk / den;
            if (std::abs(xn - x) < 1e-17 + 1e-15 * std::abs(xn)) return xn;
            x = xn;
        }
        return x;
    };

    bool converged = false;
    for (int round = 0; round < 80 && !converged; ++round) {
        lt[0] = lambda;
        for (int k = 0; k < K; ++k) {
            const complex_t den = 1.0 + bt[static_cast<size_t>(k)];
            if (std::abs(den) < 1e-8)
                throw DenominatorCollapseError("critical_trajectory: 1+beta vanished");
            lt[static_cast<size_t>(k) + 1] =
                lt[static_cast<size_t>(k)] -
                8.0 * B * lt[static_cast<size_t>(k)] * lt[static_cast<size_t>(k)] / (den * den);
        }
        // stationary tail seed: x = L^-2 x - 2 B lambda_K/(1+x)
        {
            complex_t x = bt[static_cast<size_t>(K)];
            for (int it = 0; it < 60; ++it) {
                const complex_t den = 1.0 + x;
                if (std::abs(den) < 1e-8)
                    throw DenominatorCollapseError("critical_trajectory: tail seed collapsed");
                const complex_t xn = -2.0 * B * lt[static_cast<size_t>(K)] / (den * (1.0 - Lm2));
                if (std::abs(xn - x) < 1e-17 + 1e-15 * std::abs(xn)) break;
                x = xn;
            }
            bt[static_cast<size_t>(K)] = x;
        }
        real_t worst = 0.0;
        for (int k = K - 1; k >= 0; --k) {
            const complex_t bnew = solve_back(bt[static_cast<size_t>(k) + 1],
                                              lt[static_cast<size_t>(k)], bt[static_cast<size_t>(k)]);
            worst = std::max(worst, std::abs(bnew - bt[static_cast<size_t>(k)]));
            bt[static_cast<size_t>(k)] = bnew;
        }
        converged = worst < 1e-16;
    }
    if (!converged)
        throw NonConvergenceError("critical_trajectory: relaxation failed to settle");

    bt.resize(static_cast<size_t>(depth) + 1);
    lt.resize(static_cast<size_t>(depth) + 1);
    ct.beta = std::move(bt);
    ct.lam = std::move(lt);
    return ct;
}

namespace detail {

// Walks the shifted flow in difference form.  With beta_k = beta^c_k +
// beta_hat_k and lambda_k = lambda^c_k + dlam_k, the update
//   D = dlam (1+beta^c) - lambda^c beta_hat
//   beta_hat' = L^2 [beta_hat + 2 B D / ((1+beta)(1+beta^c))]
//   dlam'     = dlam - 8 B D S / ((1+beta)^2 (1+beta^c)^2),
//   S = lambda (1+beta^c) + lambda^c (1+beta)
// is algebraically the difference of the full flow from beta^c+beta_hat and
// the critical flow, but never forms the near-cancelling large terms.  The
// derivative fields track d/d beta_hat_0 of the full flow.  Once |beta_hat|
// passes 1e30 the multiplicative lambda-corrections are below 1e-29 relative
// and the scaled variable u = L^-2k beta_hat_k is frozen; this keeps every
// consumer finite without changing any digit they can see.
class ShiftedStepper {
public:
    ShiftedStepper(complex_t beta_hat, const CriticalTrajectory& ct, const LatticeParams& p)
        : ct_(ct),
          B_(p.B),
          L2_(static_cast<real_t>(p.L) * p.L),
          Lm2_(1.0 / (static_cast<real_t>(p.L) * p.L)),
          bhat_(beta_hat),
          u_(beta_hat)
    {
    }

    int k() const { return k_; }
    bool frozen() const { return frozen_; }
    complex_t u() const { return u_; }  // L^-2k beta_hat_k
    complex_t lambda() const { return ct_.lam[static_cast<size_t>(k_)] + dlam_; }
    complex_t dbeta() const { return db_; }
    complex_t dlambda() const { return dld_; }

    complex_t beta_hat() const
    {
        if (!frozen_) return bhat_;
        return bhat_ * std::pow(L2_, static_cast<real_t>(k_ - freeze_k_));
    }

    void advance()
    {
        if (k_ >= ct_.depth())
            throw std::invalid_argument("shifted flow: critical tables too shallow");
        if (!frozen_ && std::abs(bhat_) > 1e30) {
            frozen_ = true;
            freeze_k_ = k_;
        }
        if (frozen_) {
            ++k_;
            return;
        }
        const complex_t bc = ct_.beta[static_cast<size_t>(k_)];
        const complex_t lc = ct_.lam[static_cast<size_t>(k_)];
        const complex_t beta_full = bc + bhat_;
        const complex_t lam_full = lc + dlam_;
        const complex_t den = 1.0 + beta_full;
        const complex_t denc = 1.0 + bc;
        if (std::abs(den) <= 1e-8 || std::abs(denc) <= 1e-8)
            throw DenominatorCollapseError("shifted flow: 1+beta vanished at step " +
                                           std::to_string(k_));

        const complex_t D = dlam_ * denc - lc * bhat_;
        const complex_t S = lam_full * denc + lc * den;
        const complex_t bhat_next = L2_ * (bhat_ + 2.0 * B_ * D / (den * denc));
        const complex_t dlam_next = dlam_ - 8.0 * B_ * D * S / (den * den * denc * denc);
        const complex_t db_next =
            L2_ * (db_ + 2.0 * B_ * (dld_ - lam_full * db_ / den) / den);
        const complex_t dld_next =
            dld_ - 16.0 * B_ * (lam_full * dld_ - lam_full * lam_full * db_ / den) / (den * den);

        bhat_ = bhat_next;
        dlam_ = dlam_next;
        db_ = db_next;
        dld_ = dld_next;
        ++k_;
        Lm2k_ *= Lm2_;
        u_ = bhat_ * Lm2k_;
    }

private:
    const CriticalTrajectory& ct_;
    real_t B_, L2_, Lm2_;
    int k_ = 0;
    complex_t bhat_;
    complex_t u_;
    complex_t dlam_{0.0};
    complex_t db_{1.0};
    complex_t dld_{0.0};
    real_t Lm2k_ = 1.0;
    bool frozen_ = false;
    int freeze_k_ = 0;
};

}  // namespace detail

// Difference flow around the critical orbit.  The report's beta field holds
// beta_hat_k and lambda holds the full lambda_k.  Unlike flow(), leaving the
// ball does not stop the iteration -- the scaling quantities downstream live
// beyond the exit -- but the first exit step is still recorded.
inline FlowReport shifted_flow(complex_t beta_hat, complex_t lambda, const DomainSpec& d,
                               int max_steps, const LatticeParams& p,
                               const CriticalTrajectory* tables = nullptr)
{
    if (max_steps < 1) throw std::invalid_argument("shifted_flow: max_steps must be >= 1");
    d.validate();

    CriticalTrajectory local;
    if (!tables) {
        local = critical_trajectory(lambda, max_steps, p);
        tables = &local;
    } else if (tables->depth() < max_steps) {
        throw std::invalid_argument("shifted_flow: supplied tables shallower than max_steps");
    }

    FlowReport rep;
    rep.trajectory.reserve(static_cast<size_t>(max_steps) + 1);
    detail::ShiftedStepper st(beta_hat, *tables, p);
    for (;;) {
        CouplingState s;
        s.step = st.k();
        s.beta = st.beta_hat();
        s.lambda = st.lambda();
        s.dbeta = st.dbeta();
        s.dlambda = st.dlambda();
        rep.trajectory.push_back(s);
        if (!rep.exited && !(d.beta_in_ball(s.beta) && d.lambda_in_closure(s.lambda))) {
            rep.exited = true;
            rep.exit_step = s.step;
        }
        if (st.k() >= max_steps) break;
        st.advance();
    }
    return rep;
}

// Largest k with |beta_hat_k| <= 1 (0 when even the start is outside).  For
// beta_hat = 0 the orbit never grows, so the cap is unbounded; we return
// INT_MAX so that min(k, k_hat) reduces to k for such callers.
inline int k_hat(complex_t beta_hat, complex_t lambda, const DomainSpec& d, const LatticeParams& p)
{
    d.validate();
    if (std::abs(beta_hat) >= 1.0) return 0;
    if (beta_hat == complex_t(0.0)) return std::numeric_limits<int>::max();

    int depth = 64;
    for (;;) {
        const CriticalTrajectory ct = critical_trajectory(lambda, depth, p);
        detail::ShiftedStepper st(beta_hat, ct, p);
        int last = 0;  // |beta_hat_0| < 1 here
        int grown = 0;
        while (st.k() < depth) {
            st.advance();
            const real_t a = std::abs(st.beta_hat());
            if (a <= 1.0) {
                last = st.k();
                grown = 0;
            } else if (a > 4.0 && ++grown >= 3) {
                return last;
            }
        }
        if (depth >= 1 << 16) return last;  // unreachable for sane inputs
        depth *= 4;
    }
}

// exp(sum_{j<min(k, k_hat_val)} 8B/(lambda^-1 + 8Bj)): the closed auxiliary
// growth factor; a Riemann-sum cousin of |1 + 8 B lambda k|.
inline complex_t l_k_aux(complex_t lambda, int k, int k_hat_val, const LatticeParams& p)
{
    const int kk = std::min(k, k_hat_val);
    if (lambda == complex_t(0.0) || kk <= 0) return complex_t(1.0);
    const complex_t inv = 1.0 / lambda;
    complex_t s{0.0};
    for (int j = 0; j < kk; ++j) s += 8.0 * p.B / (inv + 8.0 * p.B * static_cast<real_t>(j));
    return std::exp(s);
}

namespace detail {

// Shared worker: advance a stepper to depth k and return it.
inline ShiftedStepper stepper_at(complex_t beta_hat, int k, const CriticalTrajectory& ct,
                                 const LatticeParams& p)
{
    ShiftedStepper st(beta_hat, ct, p);
    for (int j = 0; j < k; ++j) st.advance();
    return st;
}

}  // namespace detail

// (beta_hat / (beta_hat_k L^-2k))^4.  Table-taking overload first; the
// convenience overload builds its own tables.
inline complex_t ell_k(complex_t beta_hat, int k, const CriticalTrajectory& ct,
                       const LatticeParams& p)
{
    if (beta_hat == complex_t(0.0))
        throw ZeroTrajectoryError("ell_k: zero displacement has no scaling ratio");
    const detail::ShiftedStepper st = detail::stepper_at(beta_hat, k, ct, p);
    const complex_t u = st.u();
    if (u == complex_t(0.0)) throw ZeroTrajectoryError("ell_k: trajectory collapsed to zero");
    const complex_t z = beta_hat / u;
    const complex_t z2 = z * z;
    return z2 * z2;
}

inline complex_t ell_k(complex_t beta_hat, complex_t lambda, int k, const DomainSpec& d,
                       const LatticeParams& p)
{
    d.validate();
    const CriticalTrajectory ct = critical_trajectory(lambda, k, p);
    return ell_k(beta_hat, k, ct, p);
}

// L^-2k beta_hat_k at fixed k.
inline complex_t beta_eff(complex_t beta_hat, int k, const CriticalTrajectory& ct,
                          const LatticeParams& p)
{
    if (beta_hat == complex_t(0.0))
        throw ZeroTrajectoryError("beta_eff: zero displacement");
    return detail::stepper_at(beta_hat, k, ct, p).u();
}

inline complex_t beta_eff(complex_t beta_hat, complex_t lambda, int k, const DomainSpec& d,
                          const LatticeParams& p)
{
    d.validate();
    const CriticalTrajectory ct = critical_trajectory(lambda, k, p);
    return beta_eff(beta_hat, k, ct, p);
}

// k -> infinity limit of L^-2k beta_hat_k: iterate until the step-to-step
// ratio settles within 1e-12.  The factors approach 1 once |beta_hat_k|
// outgrows the couplings, so this stabilizes a couple dozen steps past
// k_hat.
inline complex_t beta_eff_limit(complex_t beta_hat, const CriticalTrajectory& ct,
                                const LatticeParams& p)
{
    if (beta_hat == complex_t(0.0))
        throw ZeroTrajectoryError("beta_eff_limit: zero displacement");
    constexpr int kCap = 10000;
    detail::ShiftedStepper st(beta_hat, ct, p);
    complex_t prev = st.u();
    const int usable = std::min(kCap, ct.depth());
    for (int k = 1; k <= usable; ++k) {
        st.advance();
        const complex_t u = st.u();
        if (std::abs(u / prev - 1.0) < 1e-12) return u;
        prev = u;
    }
    if (usable < kCap)
        throw NonConvergenceError("beta_eff_limit: tables exhausted before stabilization");
    throw NonConvergenceError("beta_eff_limit: no stabilization within the step cap");
}

inline complex_t beta_eff_limit(complex_t beta_hat, complex_t lambda, const DomainSpec& d,
                                const LatticeParams& p)
{
    d.validate();
    if (beta_hat == complex_t(0.0))
        throw ZeroTrajectoryError("beta_eff_limit: zero displacement");
    int depth = 128;
    for (;;) {
        const CriticalTrajectory ct = critical_trajectory(lambda, depth, p);
        try {
            return beta_eff_limit(beta_hat, ct, p);
        } catch (const NonConvergenceError&) {
            if (depth >= 10000) throw;
            depth = std::min(10000, depth * 4);
        }
    }
}

// Limit of ell_k: (beta_hat / beta_eff_limit)^4.
inline complex_t ell_limit(complex_t beta_hat, complex_t lambda, const DomainSpec& d,
                           const LatticeParams& p)
{
    const complex_t be = beta_eff_limit(beta_hat, lambda, d, p);
    const complex_t z = beta_hat / be;
    const complex_t z2 = z * z;
    return z2 * z2;
}

// Closed-form coupling model lambda / (1 + 8 B lambda k_hat).
inline complex_t lambda_k_model(complex_t lambda, int k_hat_val, const LatticeParams& p)
{
    return lambda / (1.0 + 8.0 * p.B * lambda * static_cast<real_t>(k_hat_val));
}

}  // namespace hsaw
