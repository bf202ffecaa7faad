#pragma once

#include <stdexcept>
#include <string>

namespace hsaw {

// Numerical failures are reported as exceptions so callers can distinguish
// "bad input" (caught at the CLI boundary, exit code 2) from "the evaluation
// itself broke down" (exit code 3).

struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A series denominator came within the guard distance of zero, i.e. the
// query point is essentially on the pole set [-1, 0) of the resolvent.
struct PoleProximityError : NumericalError {
    using NumericalError::NumericalError;
};

// A series failed to meet its tail bound within the term budget.
struct DivergenceError : NumericalError {
    using NumericalError::NumericalError;
};

// The coupling recursion hit 1 + beta ~ 0, where the step map is singular.
struct DenominatorCollapseError : NumericalError {
    using NumericalError::NumericalError;
};

// The critical search could not find a sign-separating initial interval.
struct NoBracketError : NumericalError {
    using NumericalError::NumericalError;
};

// An iterative solve (critical search, effective-coupling limit) ran out of
// iterations before reaching its tolerance.
struct NonConvergenceError : NumericalError {
    using NumericalError::NumericalError;
};

// An operation that normalizes by the initial shifted coupling was called
// with beta_hat = 0.
struct ZeroTrajectoryError : NumericalError {
    using NumericalError::NumericalError;
};

// Contour quadrature kept failing its node-doubling error estimate after the
// refinement budget was spent.
struct QuadratureStallError : NumericalError {
    using NumericalError::NumericalError;
};

// A site operation needed more hierarchy digits than the fixed capacity.
struct DepthOverflowError : NumericalError {
    using NumericalError::NumericalError;
};

// Importance-sampling weights collapsed (effective sample size too small).
struct DegenerateWeightsError : NumericalError {
    using NumericalError::NumericalError;
};

} // namespace hsaw
