#include "spherealign/kinetic.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "spherealign/quadrature.hpp"

namespace spherealign {

namespace {

double ipow(double x, std::size_t k) {
    double out = 1.0;
    for (; k > 0; --k) out *= x;
    return out;
}

double bn_value(std::size_t n) {
    return integrate_halfline(
               [n](double r) { return ipow(r, n - 2) / ipow(1.0 + r * r, n - 1); })
        .value;
}

// 4-point Lagrange on a sorted sample grid, stencil clamped at the ends.
double lagrange4(const std::vector<double>& ts, const std::vector<double>& ys, double t) {
    const std::size_t s = ts.size();
    auto it = std::upper_bound(ts.begin(), ts.end(), t);
    std::size_t k = (it == ts.begin()) ? 0 : static_cast<std::size_t>(it - ts.begin()) - 1;
    if (k >= s - 1) k = s - 2;
    const std::size_t k0 = (k == 0) ? 0 : std::min(k - 1, s - 4);
    double out = 0.0;
    for (std::size_t i = k0; i < k0 + 4; ++i) {
        double w = 1.0;
        for (std::size_t j = k0; j < k0 + 4; ++j) {
            if (j != i) w *= (t - ts[j]) / (ts[i] - ts[j]);
        }
        out += w * ys[i];
    }
    return out;
}

} // namespace

namespace {

// h(r) r^{n-2} (1+r^2)^{-(n-1)}, arranged so neither factor overflows: for
// r > 1 the same ratio is (1/r)^n (1 + r^{-2})^{-(n-1)}.
std::function<double(double)> chart_weight(std::size_t n, std::function<double(double)> h) {
    return [n, h = std::move(h)](double r) {
        if (r <= 1.0) return h(r) * ipow(r, n - 2) / ipow(1.0 + r * r, n - 1);
        const double q = 1.0 / r;
        return h(r) * ipow(q, n) / ipow(1.0 + q * q, n - 1);
    };
}

} // namespace

RadialDensity::RadialDensity(std::size_t n, std::function<double(double)> h,
                             std::vector<double> breakpoints)
    : RadialDensity(n, h, chart_weight(n, h), std::move(breakpoints)) {}

RadialDensity::RadialDensity(std::size_t n, std::function<double(double)> h,
                             std::function<double(double)> weight,
                             std::vector<double> breakpoints)
    : n_(n), h_(std::move(h)), weight_(std::move(weight)),
      breakpoints_(std::move(breakpoints)) {
    if (n < 2) throw std::invalid_argument("RadialDensity: dimension must be >= 2");
    if (!h_ || !weight_) throw std::invalid_argument("RadialDensity: missing profile");
    std::sort(breakpoints_.begin(), breakpoints_.end());
    bn_ = bn_value(n_);

    const double span = 2.0 * std::max(1.0, breakpoints_.empty() ? 1.0 : breakpoints_.back());
    for (int k = 1; k <= 600; ++k) {
        const double r = span * static_cast<double>(k) / 600.0;
        if (h_(r) < -1e-12) {
            throw std::invalid_argument("RadialDensity: profile negative at r = " +
                                        std::to_string(r));
        }
    }
    const double mass =
        integrate_halfline([this](double r) { return weight_(r); }, breakpoints_).value / bn_;
    if (std::fabs(mass - 1.0) > kDensityNormTol) {
        throw std::invalid_argument("RadialDensity: normalization is " + std::to_string(mass) +
                                    ", not 1");
    }
}

double RadialDensity::weight(double r) const { return weight_(r); }

RadialDensity RadialDensity::uniform(std::size_t n) {
    return RadialDensity(n, [](double) { return 1.0; });
}

RadialDensity RadialDensity::tilted(std::size_t n, double beta) {
    if (std::fabs(beta) > 1.0) {
        throw std::invalid_argument("tilted: |beta| > 1 makes the density negative");
    }
    return RadialDensity(
        n, [beta](double r) { return 1.0 + beta * (1.0 - r * r) / (1.0 + r * r); });
}

RadialDensity RadialDensity::from_table(std::size_t n, const std::vector<double>& r,
                                        const std::vector<double>& h) {
    if (r.size() != h.size() || r.size() < 2) {
        throw std::invalid_argument("from_table: need matching r/h tables with >= 2 rows");
    }
    for (std::size_t k = 0; k < r.size(); ++k) {
        if (r[k] < 0.0 || h[k] < 0.0 || (k > 0 && r[k] <= r[k - 1])) {
            throw std::invalid_argument("from_table: r must increase, values must be >= 0");
        }
    }
    auto interp = [r, h](double x) {
        if (x <= r.front() || x >= r.back()) {
            return (x == r.front()) ? h.front() : (x == r.back() ? h.back() : 0.0);
        }
        const auto it = std::upper_bound(r.begin(), r.end(), x);
        const std::size_t k = static_cast<std::size_t>(it - r.begin());
        const double f = (x - r[k - 1]) / (r[k] - r[k - 1]);
        return h[k - 1] + f * (h[k] - h[k - 1]);
    };

    std::vector<double> cuts;
    for (double x : r) {
        if (x > 0.0) cuts.push_back(x);
    }
    const std::size_t nn = n;
    const double bn = bn_value(n);
    const double mass = integrate_halfline(
                            [&](double x) {
                                return interp(x) * ipow(x, nn - 2) / ipow(1.0 + x * x, nn - 1);
                            },
                            cuts)
                            .value /
                        bn;
    if (mass <= 0.0) throw std::invalid_argument("from_table: table carries no mass");
    const double scale = 1.0 / mass;
    return RadialDensity(
        n, [interp, scale](double x) { return scale * interp(x); }, cuts);
}

std::pair<double, double> constant_bn_cn(std::size_t n) {
    if (n < 2) throw std::invalid_argument("constant_bn_cn: dimension must be >= 2");
    const double bn = bn_value(n);
    // Area of the unit sphere S^{n-2} in R^{n-1}; S^0 counts its two points.
    const double m = static_cast<double>(n - 2);
    const double area = 2.0 * std::pow(M_PI, 0.5 * (m + 1.0)) / std::tgamma(0.5 * (m + 1.0));
    return {bn, bn * area};
}

namespace {

// The lam-dependent kernels bend at r = e^lam; declaring that scale keeps
// the panel refinement from stalling on an unresolved transition.
std::vector<double> cuts_with_transition(const RadialDensity& density, double lam) {
    std::vector<double> cuts = density.breakpoints();
    cuts.push_back(std::exp(std::min(lam, 300.0)));
    return cuts;
}

} // namespace

namespace {

// 1 - alpha(lam), kept as the integral itself. Forming it as a difference of
// alpha would cancel to roundoff once the deficit drops below ~1e-13, and the
// late-time distance laws live entirely in that regime, so the integral runs
// under a purely relative tolerance.
double alignment_deficit(const RadialDensity& density, double lam) {
    const double a2 = std::exp(-2.0 * lam);
    const double integral =
        integrate_halfline(
            [&](double r) {
                const double x = r * r * a2;
                return 2.0 * x / (1.0 + x) * density.weight(r);
            },
            cuts_with_transition(density, lam), 0.0)
            .value;
    return integral / density.b_n();
}

} // namespace

double alpha_of_lambda(const RadialDensity& density, double lam) {
    if (lam < 0.0) throw std::invalid_argument("alpha_of_lambda: lam must be >= 0");
    return 1.0 - alignment_deficit(density, lam);
}

AxisymSolution::AxisymSolution(std::vector<double> times, std::vector<double> lambda,
                               std::vector<double> alpha)
    : times_(std::move(times)), lambda_(std::move(lambda)), alpha_(std::move(alpha)) {
    const std::size_t s = times_.size();
    if (s < 4 || lambda_.size() != s || alpha_.size() != s) {
        throw std::invalid_argument("AxisymSolution: need >= 4 aligned samples");
    }
    if (times_[0] != 0.0 || std::fabs(lambda_[0]) > 1e-14) {
        throw std::invalid_argument("AxisymSolution: must start at t = 0, lambda = 0");
    }
    for (std::size_t k = 0; k < s; ++k) {
        if (k > 0 && times_[k] <= times_[k - 1]) {
            throw std::invalid_argument("AxisymSolution: times must increase");
        }
        if (lambda_[k] > times_[k] + 1e-9 || (k > 0 && lambda_[k] < lambda_[k - 1] - 1e-12)) {
            throw std::invalid_argument("AxisymSolution: lambda must be nondecreasing and <= t");
        }
        if (!(alpha_[k] > 0.0) || alpha_[k] > 1.0 + 1e-12 ||
            (k > 0 && alpha_[k] < alpha_[k - 1] - 1e-10)) {
            throw std::invalid_argument("AxisymSolution: alpha must be nondecreasing in (0, 1]");
        }
    }
}

double AxisymSolution::lambda_at(double t) const {
    if (t < -1e-9 || t > t_max() + 1e-9) {
        throw std::out_of_range("AxisymSolution: t outside the solved range");
    }
    return lagrange4(times_, lambda_, t);
}

double AxisymSolution::alpha_at(double t) const {
    if (t < -1e-9 || t > t_max() + 1e-9) {
        throw std::out_of_range("AxisymSolution: t outside the solved range");
    }
    return lagrange4(times_, alpha_, t);
}

AxisymSolution solve_lambda(const RadialDensity& density, double t_end, double dt) {
    if (!(t_end > 0.0) || !(dt > 0.0)) {
        throw std::invalid_argument("solve_lambda: t_end and dt must be positive");
    }
    const std::size_t steps =
        std::max<std::size_t>(3, static_cast<std::size_t>(std::ceil(t_end / dt - 1e-12)));
    const double h = t_end / static_cast<double>(steps);

    auto alpha = [&](double lam) { return alpha_of_lambda(density, lam); };
    double a0 = alpha(0.0);
    if (!(a0 > 0.0)) {
        throw std::invalid_argument("solve_lambda: alpha(0) = " + std::to_string(a0) +
                                    " <= 0 (no axial drift toward +e_n)");
    }

    std::vector<double> times{0.0}, lam_series{0.0}, alpha_series{a0};
    double lam = 0.0, a_here = a0;
    for (std::size_t k = 1; k <= steps; ++k) {
        const double k1 = a_here;
        const double k2 = alpha(lam + 0.5 * h * k1);
        const double k3 = alpha(lam + 0.5 * h * k2);
        const double k4 = alpha(lam + h * k3);
        lam += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        a_here = alpha(lam);
        times.push_back(h * static_cast<double>(k));
        lam_series.push_back(lam);
        alpha_series.push_back(a_here);
    }
    return AxisymSolution(std::move(times), std::move(lam_series), std::move(alpha_series));
}

std::vector<double> characteristic_map(const std::vector<double>& z0, const AxisymSolution& sol,
                                       double t) {
    const double factor = std::exp(-sol.lambda_at(t));
    std::vector<double> out(z0);
    for (double& c : out) c *= factor;
    return out;
}

double w1_to_dirac(const RadialDensity& density, double lam) {
    if (lam < 0.0) throw std::invalid_argument("w1_to_dirac: lam must be >= 0");
    const double a = std::exp(-lam);
    const double integral =
        integrate_halfline(
            [&](double r) {
                const double ra = r * a;
                return 2.0 * ra / std::sqrt(1.0 + ra * ra) * density.weight(r);
            },
            cuts_with_transition(density, lam), 0.0)
            .value;
    return integral / density.b_n();
}

double w2sq_to_dirac(const RadialDensity& density, double lam) {
    if (lam < 0.0) throw std::invalid_argument("w2sq_to_dirac: lam must be >= 0");
    return 2.0 * alignment_deficit(density, lam);
}

double closed_form_w1_n2(double lam) {
    if (lam < 0.0) throw std::invalid_argument("closed_form_w1_n2: lam must be >= 0");
    const double s2 = -std::expm1(-2.0 * lam);
    const double s = std::sqrt(s2);
    // artanh(s)/s continued through s = 0; for larger s use the equivalent
    // (lam + log(1+s))/s, which stays finite when s rounds to 1.
    const double ratio = (s < 1e-2) ? 1.0 + s2 / 3.0 + s2 * s2 / 5.0 + s2 * s2 * s2 / 7.0
                                    : (lam + std::log1p(s)) / s;
    return std::exp(-lam) * ratio;
}

double closed_form_w2sq_kernel(std::size_t n, double lam) {
    if (lam < 0.0) throw std::invalid_argument("closed_form_w2sq_kernel: lam must be >= 0");
    if (n == 2) {
        const double a = std::exp(-lam);
        return M_PI * a / (2.0 * (1.0 + a));
    }
    if (n == 3) {
        const double w = 2.0 * lam;
        if (w < 1e-2) {
            return 0.25 * (1.0 - w / 3.0 + w * w * w / 90.0);
        }
        // The prefactor 1 - u equals e^-w; the direct exponential keeps it
        // alive past w ~ 36 where the subtraction would round to zero.
        const double u = -std::expm1(-w);
        return std::exp(-w) * (w - u) / (2.0 * u * u);
    }
    throw std::invalid_argument("closed_form_w2sq_kernel: only n = 2 and n = 3 have printed forms");
}

RadialDensity slow_decay_density(const std::function<double(double)>& g,
                                 const std::function<double(double)>& g_prime, double eps,
                                 std::size_t n) {
    if (!g || !g_prime) throw std::invalid_argument("slow_decay_density: missing g or g'");
    if (!(eps > 0.0) || eps >= 1.0) {
        throw std::invalid_argument("slow_decay_density: eps must lie in (0, 1)");
    }
    const double g0 = g(0.0);
    if (!(g0 >= 0.0) || g0 >= 0.5) {
        throw std::invalid_argument("slow_decay_density: g(0) must lie in [0, 1/2)");
    }
    if (2.0 * g0 + (2.0 * eps * eps / 3.0) * (1.0 - g0) >= 1.0) {
        throw std::invalid_argument("slow_decay_density: eps too large to keep alpha(0) > 0");
    }
    for (double t : {0.0, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 40.0, 100.0}) {
        if (g_prime(t) > 1e-12 || g(t) < -1e-12) {
            throw std::invalid_argument("slow_decay_density: g must be nonnegative and decreasing");
        }
    }

    // A g that fails to vanish at infinity surfaces as a normalization
    // defect, which the RadialDensity constructor rejects.
    const double bn = bn_value(n);
    const std::size_t nn = n;
    auto bracket = [g0, g_prime, eps](double r) {
        if (r > 0.0 && r < eps) return (1.0 - g0) / eps;
        if (r >= 1.0) return -g_prime(std::log(r)) / r;
        return 0.0;
    };
    auto h = [bracket, bn, nn](double r) {
        return bn * ipow(1.0 + r * r, nn - 1) / ipow(r, nn - 2) * bracket(r);
    };
    // The chart factor cancels the dimensional blow-up of h exactly; handing
    // the product over in closed form keeps the far tail free of inf/inf.
    auto weight = [bracket, bn](double r) { return bn * bracket(r); };
    return RadialDensity(n, h, weight, {eps, 1.0});
}

} // namespace spherealign
