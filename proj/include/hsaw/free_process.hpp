#pragma once

#include <cmath>
#include <complex>
#include <limits>

#include "hsaw/errors.hpp"
#include "hsaw/lattice.hpp"

namespace hsaw {

using real_t    = double;
using complex_t = std::complex<double>;

// Every series here is truncated on an a-priori geometric bound of its tail,
// never on the size of the last term, so rel_tol is an actual guarantee for
// the truncation error (floating-point rounding aside).
struct SeriesTolerance {
    real_t rel_tol = 1e-12;
    int max_terms  = 10000;
};

struct GreenQuery {
    complex_t beta;  // killing rate; must stay off the pole set [-1, 0)
    int x_level = 0; // N with |x| = L^N; 0 means x = 0
};

namespace detail {

// Distance from the ray {t e^(i arg z) : t >= 0} to the point -1; a uniform
// lower bound for |1 + z| along the whole series when arg z is fixed.
inline real_t ray_pole_clearance(const complex_t& z)
{
    const real_t a = std::abs(std::arg(z));
    if (a <= M_PI / 2) return 1.0;
    return std::sin(M_PI - a);
}

inline void check_denominator(const complex_t& d, const char* where)
{
    if (std::abs(d) < 1e-10)
        throw PoleProximityError(std::string(where) + ": denominator within 1e-10 of a pole");
}

[[noreturn]] inline void series_budget_exhausted(const char* where)
{
    throw DivergenceError(std::string(where) + ": tail bound not met within max_terms");
}

// e^z - 1 with full relative accuracy near z = 0 (std::expm1 is real-only).
inline complex_t expm1c(const complex_t& z)
{
    if (std::abs(z) > 0.5) return std::exp(z) - 1.0;
    complex_t term = z, sum = z;
    for (int k = 2; k < 40; ++k) {
        term *= z / static_cast<real_t>(k);
        sum += term;
        if (std::abs(term) <= 1e-17 * std::abs(sum)) break;
    }
    return sum;
}

} // namespace detail

// Resolvent of the free walk at mutual distance |x| = L^N.  For x != 0 the
// value is sum_{j>=0} L^-2j (1-L^-4)(1-L^(-2-2j))
//                     / (|x|^2 (1+beta|x|^2 L^-2)(1+beta|x|^2 L^2j)),
// for x = 0 it is sum_{j>=0} L^-2j (1-L^-4) / (1 + L^2j beta).
inline complex_t green0(const GreenQuery& q, const LatticeParams& p,
                        const SeriesTolerance& tol = {})
{
    const real_t L2   = static_cast<real_t>(p.L) * p.L;
    const real_t Lm2  = 1.0 / L2;
    const real_t Lm4  = Lm2 * Lm2;
    const real_t babs = std::abs(q.beta);
    const real_t clear = babs == 0.0 ? 1.0 : detail::ray_pole_clearance(q.beta);

    if (q.x_level == 0) {
        complex_t sum = 0.0;
        real_t L2k = 1.0, Lm2k = 1.0;
        for (int k = 0; k < tol.max_terms; ++k) {
            const complex_t den = 1.0 + L2k * q.beta;
            detail::check_denominator(den, "green0");
            sum += p.B * Lm2k / den;
            // Tail of the remaining terms: either the sector clearance bound
            // (ratio L^-2) or, once |beta| L^2k >= 2, the large-argument
            // bound |1+z| >= |z|/2 (ratio L^-4).
            real_t tail = p.B * Lm2k * Lm2 / ((1.0 - Lm2) * clear);
            if (babs * L2k * L2 >= 2.0) {
                const real_t t2 = 2.0 * p.B * Lm2k * Lm2 * Lm2k * Lm2 / (babs * (1.0 - Lm4));
                if (t2 < tail) tail = t2;
            }
            if (tail <= tol.rel_tol * std::abs(sum)) return sum;
            L2k *= L2;
            Lm2k *= Lm2;
        }
        detail::series_budget_exhausted("green0");
    }

    const real_t x2 = std::pow(L2, q.x_level); // |x|^2
    const complex_t dena = 1.0 + q.beta * x2 * Lm2;
    detail::check_denominator(dena, "green0");
    const complex_t pref = p.B / (x2 * dena);
    const real_t pabs = std::abs(pref);

    complex_t sum = 0.0;
    real_t Lm2j = 1.0, L2j = 1.0;
    for (int j = 0; j < tol.max_terms; ++j) {
        const complex_t den = 1.0 + q.beta * x2 * L2j;
        detail::check_denominator(den, "green0");
        sum += pref * Lm2j * (1.0 - Lm2 * Lm2j) / den;
        real_t tail = pabs * Lm2j * Lm2 / ((1.0 - Lm2) * clear);
        if (babs * x2 * L2j * L2 >= 2.0) {
            const real_t t2 = 2.0 * pabs * Lm2j * Lm2 * Lm2j * Lm2 / (babs * x2 * (1.0 - Lm4));
            if (t2 < tail) tail = t2;
        }
        if (tail <= tol.rel_tol * std::abs(sum)) return sum;
        Lm2j *= Lm2;
        L2j *= L2;
    }
    detail::series_budget_exhausted("green0");
}

// Same resolvent through the scale decomposition: for |x| = L^N, N >= 1,
//   sum_{k>=N-1} L^-2k (1-L^-4)/(1+L^2k beta)  -  L^-2(N-1)/(1+L^2(N-1) beta),
// and for x = 0 the (1-L^-4)/(1+beta) * (1 + sum_{k>=1} ...) arrangement.
// Structurally different from green0's product-denominator form, which makes
// the two a meaningful cross-check of each other.  Off the diagonal the two
// pieces cancel to leading order once |beta| |x|^2 >> 1, so relative accuracy
// degrades proportionally there; prefer green0 for evaluation.
inline complex_t green0_alt(const GreenQuery& q, const LatticeParams& p,
                            const SeriesTolerance& tol = {})
{
    const real_t L2  = static_cast<real_t>(p.L) * p.L;
    const real_t Lm2 = 1.0 / L2;
    const real_t Lm4 = Lm2 * Lm2;
    const real_t babs = std::abs(q.beta);
    const real_t clear = babs == 0.0 ? 1.0 : detail::ray_pole_clearance(q.beta);

    auto scale_sum = [&](int k0) -> complex_t {
        // sum_{k>=k0} L^-2k (1-L^-4) / (1 + L^2k beta)
        complex_t sum = 0.0;
        real_t L2k = std::pow(L2, k0), Lm2k = std::pow(Lm2, k0);
        for (int k = k0; k < k0 + tol.max_terms; ++k) {
            const complex_t den = 1.0 + L2k * q.beta;
            detail::check_denominator(den, "green0_alt");
            sum += p.B * Lm2k / den;
            real_t tail = p.B * Lm2k * Lm2 / ((1.0 - Lm2) * clear);
            if (babs * L2k * L2 >= 2.0) {
                const real_t t2 = 2.0 * p.B * Lm2k * Lm2 * Lm2k * Lm2 / (babs * (1.0 - Lm4));
                if (t2 < tail) tail = t2;
            }
            if (tail <= tol.rel_tol * std::abs(sum)) return sum;
            L2k *= L2;
            Lm2k *= Lm2;
        }
        detail::series_budget_exhausted("green0_alt");
    };

    if (q.x_level == 0) {
        const complex_t den0 = 1.0 + q.beta;
        detail::check_denominator(den0, "green0_alt");
        return p.B / den0 + scale_sum(1);
    }

    const int N = q.x_level;
    const real_t LmN1 = std::pow(Lm2, N - 1);
    const complex_t denN = 1.0 + std::pow(L2, N - 1) * q.beta;
    detail::check_denominator(denN, "green0_alt");
    return scale_sum(N - 1) - LmN1 / denN;
}

// d/dbeta of green0, computed term by term.  Diverges logarithmically as
// beta -> 0 at x = 0, which surfaces as a series-budget error there.
inline complex_t green0_dbeta(const GreenQuery& q, const LatticeParams& p,
                              const SeriesTolerance& tol = {})
{
    const real_t L2  = static_cast<real_t>(p.L) * p.L;
    const real_t Lm2 = 1.0 / L2;
    const real_t Lm4 = Lm2 * Lm2;
    const real_t babs = std::abs(q.beta);
    const real_t clear = babs == 0.0 ? 1.0 : detail::ray_pole_clearance(q.beta);

    if (q.x_level == 0) {
        // The terms -B/(1+L^2k beta)^2 have no decay until |beta| L^2k is
        // large, so a finite tail bound exists only in that regime; for
        // beta -> 0 the series genuinely diverges and exhausts the budget.
        complex_t sum = 0.0;
        real_t L2k = 1.0;
        for (int k = 0; k < tol.max_terms; ++k) {
            const complex_t den = 1.0 + L2k * q.beta;
            detail::check_denominator(den, "green0_dbeta");
            sum -= p.B / (den * den);
            if (babs * L2k * L2 >= 2.0) {
                const real_t first = 4.0 * p.B / (babs * babs * L2k * L2 * L2k * L2);
                const real_t tail = first / (1.0 - Lm4);
                if (tail <= tol.rel_tol * std::abs(sum)) return sum;
            }
            L2k *= L2;
        }
        detail::series_budget_exhausted("green0_dbeta");
    }

    const real_t x2 = std::pow(L2, q.x_level);
    const real_t a  = x2 * Lm2;
    const complex_t dena = 1.0 + q.beta * a;
    detail::check_denominator(dena, "green0_dbeta");
    const complex_t pref = p.B / (x2 * dena);
    const real_t pabs = std::abs(pref);
    const complex_t afac = a / dena;

    complex_t sum = 0.0;
    real_t Lm2j = 1.0, L2j = 1.0;
    for (int j = 0; j < tol.max_terms; ++j) {
        const real_t b = x2 * L2j;
        const complex_t den = 1.0 + q.beta * b;
        detail::check_denominator(den, "green0_dbeta");
        const complex_t term = pref * Lm2j * (1.0 - Lm2 * Lm2j) / den;
        sum -= term * (afac + b / den);
        // A finite tail bound exists once |beta| b is large: the green0 tail
        // in its L^-4 regime times sup_m |b_m/(1+b_m beta)| <= 2/|beta|.
        const real_t znext = babs * b * L2;
        if (znext >= 2.0) {
            const real_t gtail =
                2.0 * pabs * Lm2j * Lm2 * Lm2j * Lm2 / (babs * x2 * (1.0 - Lm4));
            const real_t tail = gtail * (std::abs(afac) + 2.0 / babs);
            if (tail <= tol.rel_tol * std::abs(sum)) return sum;
        }
        Lm2j *= Lm2;
        L2j *= L2;
    }
    detail::series_budget_exhausted("green0_dbeta");
}

// Scaling shape of the transition kernel:
//   f(t) = sum_{j>=0} L^-4j (1-L^-4) (e^(-L^-2j t) - e^(-L^2 t)),
// so that P(T, x) = |x|^-4 f(T/|x|^2) for x != 0.  Positive and bounded on
// t > 0, ~ C t as t -> 0 and ~ t^-2 (log-periodically modulated) as t -> inf.
inline complex_t f_shape(const complex_t& t, const LatticeParams& p,
                         const SeriesTolerance& tol = {})
{
    if (t.real() < 0.0)
        throw DivergenceError("f_shape: Re t < 0 is outside the kernel's sector");
    const real_t L2  = static_cast<real_t>(p.L) * p.L;
    const real_t Lm2 = 1.0 / L2;
    const real_t Lm4 = Lm2 * Lm2;
    const complex_t eL2t = std::exp(-L2 * t);
    const real_t tabs = std::abs(t);
    // For small |t| every difference of exponentials is ~ (L^2 - L^-2j) t
    // riding on an O(1) base, so form it through expm1 instead of
    // subtracting; otherwise the kernel loses all relative accuracy (and
    // rounds to zero outright) once |t| reaches rounding scale.
    const bool small_t = tabs * L2 < 0.5;

    complex_t sum = 0.0;
    real_t Lm4j = 1.0, Lm2j = 1.0;
    for (int j = 0; j < tol.max_terms; ++j) {
        const complex_t diff = small_t ? eL2t * detail::expm1c((L2 - Lm2j) * t)
                                       : std::exp(-Lm2j * t) - eL2t;
        sum += p.B * Lm4j * diff;
        // |e^(-at) - e^(-L^2 t)| <= min(2, |t| L^2) for Re t >= 0.
        const real_t tail = std::min(2.0, tabs * L2) * Lm4j * Lm4;
        if (tail <= tol.rel_tol * std::abs(sum)) return sum;
        Lm4j *= Lm4;
        Lm2j *= Lm2;
    }
    detail::series_budget_exhausted("f_shape");
}

// Transition kernel of the free walk started at 0, evaluated per site on the
// shell |x| = L^N (N = 0 gives the return kernel).
inline complex_t p0(const complex_t& T, int x_level, const LatticeParams& p,
                    const SeriesTolerance& tol = {})
{
    if (T.real() < 0.0)
        throw DivergenceError("p0: Re T < 0 is outside the kernel's sector");
    const real_t L2  = static_cast<real_t>(p.L) * p.L;
    const real_t Lm2 = 1.0 / L2;
    const real_t Lm4 = Lm2 * Lm2;

    if (x_level == 0) {
        complex_t sum = 0.0;
        real_t Lm4k = 1.0, Lm2k = 1.0;
        for (int k = 0; k < tol.max_terms; ++k) {
            sum += p.B * Lm4k * std::exp(-Lm2k * T);
            const real_t tail = Lm4k * Lm4; // remaining weights, |e^..| <= 1
            if (tail <= tol.rel_tol * std::abs(sum)) return sum;
            Lm4k *= Lm4;
            Lm2k *= Lm2;
        }
        detail::series_budget_exhausted("p0");
    }

    const real_t x2 = std::pow(L2, x_level);
    const real_t x4 = x2 * x2;
    return f_shape(T / x2, p, tol) / x4;
}

namespace detail {

// f(t) <= L^2 t for real t >= 0 (term-wise mean value bound), and
// f(t) <= (1 + 0.542 B (j*+1)) / t^2 with j* = ceil(log_{L^2} t) from
// e^-x <= 4 e^-2 / x^2.  These drive the a-priori tails below.
inline real_t f_alpha_env_small(real_t t, real_t alpha, const LatticeParams& p)
{
    return p.B * (static_cast<real_t>(p.L) * p.L) * std::pow(t, 1.0 - alpha / 2.0);
}

inline real_t f_alpha_env_large(real_t t, real_t alpha, const LatticeParams& p)
{
    const real_t L2 = static_cast<real_t>(p.L) * p.L;
    const real_t jstar = std::max(0.0, std::ceil(std::log(t) / std::log(L2)));
    return p.B * (1.0 + 0.542 * p.B * (jstar + 1.0)) * std::pow(t, -2.0 - alpha / 2.0);
}

} // namespace detail

// Free end-to-end moment E(|w(T)|^alpha) = T^(alpha/2) sum_{N>=1} g(T L^-2N)
// with g(t) = t^(-alpha/2) (1-L^-4) f(t).  Requires 0 < alpha < 2 so the
// small-t side of the sum converges.
inline real_t endtoend_free(real_t T, real_t alpha, const LatticeParams& p,
                            const SeriesTolerance& tol = {})
{
    if (!(T > 0.0)) throw std::invalid_argument("endtoend_free: T must be positive");
    if (!(alpha > 0.0 && alpha < 2.0))
        throw std::invalid_argument("endtoend_free: alpha must lie in (0, 2)");
    const real_t L2  = static_cast<real_t>(p.L) * p.L;
    const real_t Lm2 = 1.0 / L2;

    real_t sum = 0.0;
    real_t t = T * Lm2;
    const real_t r = std::pow(Lm2, 1.0 - alpha / 2.0);
    for (int N = 1; N <= tol.max_terms; ++N) {
        sum += p.B * std::pow(t, -alpha / 2.0) * f_shape(t, p, tol).real();
        const real_t tnext = t * Lm2;
        const real_t tail = detail::f_alpha_env_small(tnext, alpha, p) / (1.0 - r);
        if (tnext < 1.0 && tail <= tol.rel_tol * sum)
            return std::pow(T, alpha / 2.0) * sum;
        t = tnext;
    }
    detail::series_budget_exhausted("endtoend_free");
}

// Log-periodic limit profile of the rescaled end-to-end distance:
//   F(T) = [ sum_{j in Z} g(T L^-2j) ]^(1/alpha),
// the alpha-th root of the two-sided version of the endtoend_free sum.
// Satisfies F(L^2 T) = F(T) exactly.
inline real_t F_alpha(real_t T, real_t alpha, const LatticeParams& p,
                      const SeriesTolerance& tol = {})
{
    if (!(T > 0.0)) throw std::invalid_argument("F_alpha: T must be positive");
    if (!(alpha > 0.0 && alpha < 2.0))
        throw std::invalid_argument("F_alpha: alpha must lie in (0, 2)");
    const real_t L2  = static_cast<real_t>(p.L) * p.L;
    const real_t Lm2 = 1.0 / L2;

    auto g = [&](real_t t) {
        return p.B * std::pow(t, -alpha / 2.0) * f_shape(t, p, tol).real();
    };

    real_t sum = g(T);

    // Small-t side (j -> +inf): envelope B L^2 t^(1-alpha/2), geometric.
    {
        const real_t r = std::pow(Lm2, 1.0 - alpha / 2.0);
        real_t t = T * Lm2;
        for (int j = 1; j <= tol.max_terms; ++j) {
            sum += g(t);
            const real_t tnext = t * Lm2;
            const real_t tail = detail::f_alpha_env_small(tnext, alpha, p) / (1.0 - r);
            if (tnext < 1.0 && tail <= tol.rel_tol * sum) break;
            if (j == tol.max_terms) detail::series_budget_exhausted("F_alpha");
            t = tnext;
        }
    }

    // Large-t side (j -> -inf): envelope (a + b k) r^k with r = L^-(4+alpha),
    // summed in closed form: sum_{k>=1} (a+bk) r^k = r (a + b) / (1-r) + ...
    {
        const real_t r = std::pow(Lm2, 2.0 + alpha / 2.0);
        real_t t = T * L2;
        for (int j = 1; j <= tol.max_terms; ++j) {
            sum += g(t);
            const real_t tnext = t * L2;
            if (tnext > 1.0) {
                const real_t e0 = detail::f_alpha_env_large(tnext, alpha, p);
                // env(tnext L^2k) <= e0 (1 + k) r^k for k >= 0 (the log factor
                // grows by one unit per step); sum_{k>=0}(1+k) r^k closed form.
                const real_t tail = e0 * (1.0 / (1.0 - r) + r / ((1.0 - r) * (1.0 - r)));
                if (tail <= tol.rel_tol * sum) break;
            }
            if (j == tol.max_terms) detail::series_budget_exhausted("F_alpha");
            t = tnext;
        }
    }

    return std::pow(sum, 1.0 / alpha);
}

// The jump-rate constant consistent with the resolvent normalization: the
// large-beta limit of beta^2 G(beta, x) |x|^6, evaluated through the
// coefficient series L^2 (1-L^-4) sum_j L^-4j (1 - L^(-2-2j)).  Equals
// L^2 (1-L^-2)/(1-L^-6) in closed form; LatticeParams::make stores that.
inline real_t derive_jump_constant(int L, const SeriesTolerance& tol = {})
{
    const real_t L2  = static_cast<real_t>(L) * L;
    const real_t Lm2 = 1.0 / L2;
    const real_t Lm4 = Lm2 * Lm2;
    real_t sum = 0.0, Lm4j = 1.0, Lm2j = 1.0;
    for (int j = 0; j < tol.max_terms; ++j) {
        sum += L2 * (1.0 - Lm4) * Lm4j * (1.0 - Lm2 * Lm2j);
        const real_t tail = L2 * (1.0 - Lm4) * Lm4j * Lm4 / (1.0 - Lm4);
        if (tail <= tol.rel_tol * sum) return sum;
        Lm4j *= Lm4;
        Lm2j *= Lm2;
    }
    detail::series_budget_exhausted("derive_jump_constant");
}

} // namespace hsaw
