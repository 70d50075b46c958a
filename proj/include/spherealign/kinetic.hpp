#pragma once

#include <cstddef>
#include <functional>
#include <utility>
#include <vector>

namespace spherealign {

// Normalization slack accepted by RadialDensity (quadrature is far tighter;
// the slack absorbs table densities rescaled numerically).
inline constexpr double kDensityNormTol = 1e-8;

// Radial profile h of an axisymmetric density f0(v) = h(|s(v)|) on S^{n-1},
// written in the stereographic chart from -e_n. All integrals run against
// weight(r) = h(r) r^{n-2} (1+r^2)^{-(n-1)}, the chart form of the radial
// measure; b_n is its total mass for h == 1. Construction verifies h >= 0 on
// a probe grid and the unit normalization b_n^{-1} integral weight = 1
// within kDensityNormTol. Breakpoints declare where h is not smooth so
// quadrature panels split there.
class RadialDensity {
public:
    RadialDensity(std::size_t n, std::function<double(double)> h,
                  std::vector<double> breakpoints = {});
    // Overload taking the chart-measure form weight(r) explicitly, for
    // profiles whose h carries a removable large-r blow-up that the generic
    // product would evaluate as inf/inf.
    RadialDensity(std::size_t n, std::function<double(double)> h,
                  std::function<double(double)> weight, std::vector<double> breakpoints);

    static RadialDensity uniform(std::size_t n);
    // h(r) = 1 + beta (1-r^2)/(1+r^2), i.e. f0 proportional to 1 + beta v.e_n.
    // Requires |beta| <= 1 for nonnegativity.
    static RadialDensity tilted(std::size_t n, double beta);
    // Piecewise-linear interpolation of (r[k], h[k]), zero outside the table
    // range, rescaled to unit mass.
    static RadialDensity from_table(std::size_t n, const std::vector<double>& r,
                                    const std::vector<double>& h);

    std::size_t dim() const { return n_; }
    double h(double r) const { return h_(r); }
    double weight(double r) const;
    double b_n() const { return bn_; }
    const std::vector<double>& breakpoints() const { return breakpoints_; }

private:
    std::size_t n_;
    std::function<double(double)> h_;
    std::function<double(double)> weight_;
    std::vector<double> breakpoints_;
    double bn_;
};

// b_n = integral_0^inf r^{n-2} (1+r^2)^{-(n-1)} dr, and c_n = b_n x area of
// S^{n-2} -- the constant normalizing the full (n-1)-dimensional chart
// measure once the angular directions are integrated out.
std::pair<double, double> constant_bn_cn(std::size_t n);

// Axial mean velocity of the density pushed forward by z -> z e^{-lam}:
// alpha = 1 - b_n^{-1} integral 2 r^2 e^{-2 lam} / (1 + r^2 e^{-2 lam}) weight(r) dr.
// Always in (-1, 1], and nondecreasing in lam.
double alpha_of_lambda(const RadialDensity& density, double lam);

// Solution record of lambda' = alpha(lambda), lambda(0) = 0: sampled times
// with the lambda and alpha series. Immutable; evaluation between samples is
// 4-point Lagrange.
class AxisymSolution {
public:
    AxisymSolution(std::vector<double> times, std::vector<double> lambda,
                   std::vector<double> alpha);

    double t_max() const { return times_.back(); }
    const std::vector<double>& times() const { return times_; }
    const std::vector<double>& lambda_series() const { return lambda_; }
    const std::vector<double>& alpha_series() const { return alpha_; }

    double lambda_at(double t) const;
    double alpha_at(double t) const;

private:
    std::vector<double> times_, lambda_, alpha_;
};

// RK4 on the autonomous scalar ODE lambda' = alpha(lambda) -- exact shape of
// the time dependence, since alpha depends on t only through lambda. Requires
// alpha(0) > 0 (data with an axial component toward +e_n).
AxisymSolution solve_lambda(const RadialDensity& density, double t_end, double dt = 0.02);

// Chart characteristic through z0: z(t) = z0 e^{-lambda(t)}.
std::vector<double> characteristic_map(const std::vector<double>& z0, const AxisymSolution& sol,
                                       double t);

// W1 distance to the Dirac at +e_n:
// b_n^{-1} integral 2 r e^{-lam} / sqrt(1 + r^2 e^{-2 lam}) weight(r) dr.
double w1_to_dirac(const RadialDensity& density, double lam);

// Squared W2 distance to the Dirac at +e_n; equals 2 (1 - alpha(lam))
// identically, so it is computed that way.
double w2sq_to_dirac(const RadialDensity& density, double lam);

// Closed forms of the h == 1 kernels, continued by series through their
// removable singularities at lam = 0.
//   closed_form_w1_n2:        integral r e^{-lam} / (sqrt(1+r^2 e^{-2 lam})(1+r^2)) dr
//                             = e^{-lam} artanh(s)/s,   s^2 = 1 - e^{-2 lam};
//   closed_form_w2sq_kernel:  n=2: integral r^2 e^{-2 lam} / ((1+r^2 e^{-2 lam})(1+r^2)) dr
//                                  = pi e^{-lam} / (2 (1+e^{-lam}));
//                             n=3: integral r^3 e^{-2 lam} / ((1+r^2 e^{-2 lam})(1+r^2)^2) dr
//                                  = e^{-2 lam} (2 lam - 1 + e^{-2 lam}) / (2 (1-e^{-2 lam})^2),
//                             with limit 1/4 at lam = 0.
double closed_form_w1_n2(double lam);
double closed_form_w2sq_kernel(std::size_t n, double lam);

// Density whose axial deficit 1 - alpha(t) dominates a prescribed slow decay
// g(t): h(r) = b_n (1+r^2)^{n-1} r^{-(n-2)} [ (1-g(0))/eps on (0, eps);
// -g'(ln r)/r on r >= 1 ]. Requires g smooth, decreasing to 0, g(0) < 1/2,
// and eps small enough that 2 g(0) + (2 eps^2/3)(1 - g(0)) < 1, which keeps
// alpha(0) > 0.
RadialDensity slow_decay_density(const std::function<double(double)>& g,
                                 const std::function<double(double)>& g_prime, double eps,
                                 std::size_t n);

} // namespace spherealign
