#pragma once

#include <stdexcept>
#include <string>

namespace spherealign {

// Mean velocity too small to define a direction (|J| <= 1e-12).
struct DegenerateFieldError : std::domain_error {
    explicit DegenerateFieldError(const std::string& what) : std::domain_error(what) {}
};

// An iterative procedure (quadrature, backward shooting, bisection) failed to
// reach its tolerance. Callers map this to a distinct exit code; it is never
// silently swallowed.
struct NonConvergenceError : std::runtime_error {
    explicit NonConvergenceError(const std::string& what) : std::runtime_error(what) {}
};

// A finished run ended before the asymptotic dichotomy resolved: some particle
// had not yet stabilized its side of the limit. Longer horizons cure this;
// callers map it to its own exit code rather than reporting a false verdict.
struct InconclusiveError : std::runtime_error {
    explicit InconclusiveError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace spherealign
