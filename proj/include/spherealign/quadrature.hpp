#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace spherealign {

struct QuadratureResult {
    double value;
    double error_estimate;
    std::size_t panels;
};

// Adaptive Gauss-Kronrod (G7, K15) integration of f over [0, +infinity).
// The axis is split at the declared breakpoints (interior points where the
// integrand is nonsmooth, e.g. density jumps), and beyond max(1, largest
// breakpoint) the tail is folded onto a finite panel by r = 1/u, which turns
// algebraic decay into a smooth integrand. Panels are refined worst-first
// until the summed error estimate drops below max(abs_tol, rel_tol |value|);
// exhausting max_panels throws NonConvergenceError rather than returning a
// silently truncated value. Nodes are interior, so integrable endpoint
// singularities are never evaluated.
QuadratureResult integrate_halfline(const std::function<double(double)>& f,
                                    std::vector<double> breakpoints = {},
                                    double abs_tol = 1e-12,
                                    double rel_tol = 1e-12,
                                    std::size_t max_panels = 20000);

} // namespace spherealign
