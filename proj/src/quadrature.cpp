#include "spherealign/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <stdexcept>
#include <string>

#include "spherealign/errors.hpp"

namespace spherealign {

namespace {

// Kronrod 15-point nodes (absolute values) and weights; the 7-point Gauss
// rule reuses the odd-index nodes.
constexpr double kXgk[8] = {
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
};
constexpr double kWgk[8] = {
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
};
constexpr double kWg[4] = {
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
};

struct Panel {
    double a, b;
    double value;
    double err;
    bool mapped; // integrand evaluated as f(1/u)/u^2 on [a, b] in u

    bool operator<(const Panel& o) const { return err < o.err; }
};

Panel eval_panel(const std::function<double(double)>& f, double a, double b, bool mapped) {
    const double c = 0.5 * (a + b), h = 0.5 * (b - a);
    double fv[15];
    for (int j = 0; j < 7; ++j) {
        fv[j] = c - h * kXgk[j];
        fv[j + 8] = c + h * kXgk[j];
    }
    fv[7] = c;
    for (int j = 0; j < 15; ++j) {
        const double x = fv[j];
        fv[j] = mapped ? f(1.0 / x) / (x * x) : f(x);
    }

    double resk = kWgk[7] * fv[7];
    double resabs = kWgk[7] * std::fabs(fv[7]);
    double resg = kWg[3] * fv[7];
    for (int j = 0; j < 7; ++j) {
        resk += kWgk[j] * (fv[j] + fv[j + 8]);
        resabs += kWgk[j] * (std::fabs(fv[j]) + std::fabs(fv[j + 8]));
    }
    for (int j = 0; j < 3; ++j) {
        resg += kWg[j] * (fv[2 * j + 1] + fv[2 * j + 9]);
    }

    const double mean = 0.5 * resk;
    double resasc = kWgk[7] * std::fabs(fv[7] - mean);
    for (int j = 0; j < 7; ++j) {
        resasc += kWgk[j] * (std::fabs(fv[j] - mean) + std::fabs(fv[j + 8] - mean));
    }

    double err = std::fabs(resk - resg) * h;
    resasc *= h;
    if (resasc != 0.0 && err != 0.0) {
        err = resasc * std::min(1.0, std::pow(200.0 * err / resasc, 1.5));
    }
    // Roundoff floor: a panel's estimate cannot be trusted below this.
    err = std::max(err, 1.1e-16 * 50.0 * resabs * h);

    if (!std::isfinite(resk) || !std::isfinite(err)) {
        // An overflowing sample must not poison the running sums; report the
        // panel as worthless-but-refinable so the subdivision keeps digging.
        return Panel{a, b, 0.0, std::numeric_limits<double>::infinity(), mapped};
    }
    return Panel{a, b, resk * h, err, mapped};
}

} // namespace

QuadratureResult integrate_halfline(const std::function<double(double)>& f,
                                    std::vector<double> breakpoints, double abs_tol,
                                    double rel_tol, std::size_t max_panels) {
    std::sort(breakpoints.begin(), breakpoints.end());
    breakpoints.erase(std::unique(breakpoints.begin(), breakpoints.end()), breakpoints.end());
    for (double p : breakpoints) {
        if (!(p > 0.0) || !std::isfinite(p)) {
            throw std::invalid_argument("integrate_halfline: breakpoints must be positive and finite");
        }
    }

    const double cut = breakpoints.empty() ? 1.0 : std::max(1.0, breakpoints.back());

    std::priority_queue<Panel> queue;
    double total = 0.0, total_err = 0.0;
    std::size_t panels = 0;
    std::size_t unresolved = 0; // panels whose samples came back non-finite
    auto push = [&](Panel p) {
        if (std::isfinite(p.err)) {
            total += p.value;
            total_err += p.err;
        } else {
            ++unresolved;
        }
        queue.push(p);
        ++panels;
    };

    double lo = 0.0;
    for (double p : breakpoints) {
        push(eval_panel(f, lo, p, false));
        lo = p;
    }
    if (lo < cut) push(eval_panel(f, lo, cut, false));
    push(eval_panel(f, 0.0, 1.0 / cut, true));

    while (unresolved > 0 || total_err > std::max(abs_tol, rel_tol * std::fabs(total))) {
        if (panels >= max_panels) {
            throw NonConvergenceError(
                "integrate_halfline: error estimate " + std::to_string(total_err) + " after " +
                std::to_string(panels) + " panels (tolerance " +
                std::to_string(std::max(abs_tol, rel_tol * std::fabs(total))) + ")");
        }
        Panel worst = queue.top();
        queue.pop();
        const double mid = 0.5 * (worst.a + worst.b);
        if (!(mid > worst.a) || !(mid < worst.b)) {
            // The worst panel has collapsed to adjacent doubles while its
            // error still dominates: divergent or pathological integrand.
            throw NonConvergenceError(
                "integrate_halfline: cannot refine below machine precision near " +
                std::to_string(worst.a) + " (error estimate " + std::to_string(total_err) + ")");
        }
        if (std::isfinite(worst.err)) {
            total -= worst.value;
            total_err -= worst.err;
        } else {
            --unresolved;
        }
        --panels;
        push(eval_panel(f, worst.a, mid, worst.mapped));
        push(eval_panel(f, mid, worst.b, worst.mapped));
    }

    return QuadratureResult{total, total_err, panels};
}

} // namespace spherealign
