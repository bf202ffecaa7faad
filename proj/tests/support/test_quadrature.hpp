#pragma once

// Oracle-side integration helpers for the tests.  Deliberately independent
// of the library's contour machinery: plain adaptive Simpson on real
// intervals, accurate enough to cross-check Laplace-transform identities.

#include <cmath>
#include <functional>
#include <stdexcept>

namespace test_support {

inline double adaptive_simpson_impl(const std::function<double(double)>& f,
                                    double a, double b, double fa, double fm, double fb,
                                    double whole, double tol, int depth)
{
    const double m  = 0.5 * (a + b);
    const double lm = 0.5 * (a + m);
    const double rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left  = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if (depth <= 0) return left + right;
    if (std::abs(left + right - whole) <= 15.0 * tol)
        return left + right + (left + right - whole) / 15.0;
    return adaptive_simpson_impl(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) +
           adaptive_simpson_impl(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1);
}

inline double adaptive_simpson(const std::function<double(double)>& f,
                               double a, double b, double tol, int depth = 40)
{
    const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return adaptive_simpson_impl(f, a, b, fa, fm, fb, whole, tol, depth);
}

// int_0^inf e^(-beta T) g(T) dT for g bounded, cut at T = cut where the
// damping alone pushes the remainder below the requested tolerance.
inline double laplace_integral(const std::function<double(double)>& g,
                               double beta, double tol)
{
    const double cut = 60.0 / beta;
    auto f = [&](double T) { return std::exp(-beta * T) * g(T); };
    // Split near zero: the integrand varies fastest on the first unit scale.
    const double split = std::min(1.0, cut);
    return adaptive_simpson(f, 0.0, split, tol / 2.0) +
           adaptive_simpson(f, split, cut, tol / 2.0);
}

} // namespace test_support
