#include "spherealign/shooting.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "spherealign/errors.hpp"

namespace spherealign {

FieldRecord::FieldRecord(std::vector<double> times, std::vector<std::vector<double>> j_values) {
    if (times.size() != j_values.size())
        throw std::invalid_argument("FieldRecord: times/values count mismatch");
    if (times.size() < 4)
        throw std::invalid_argument("FieldRecord: need at least 4 samples for cubic interpolation");
    dim_ = j_values.front().size();
    if (dim_ < 2) throw std::invalid_argument("FieldRecord: field dimension must be >= 2");

    double prev_norm = -1.0;
    j_flat_.reserve(times.size() * dim_);
    for (std::size_t k = 0; k < times.size(); ++k) {
        if (k > 0 && !(times[k] > times[k - 1]))
            throw std::invalid_argument("FieldRecord: times must be strictly increasing");
        if (j_values[k].size() != dim_)
            throw std::invalid_argument("FieldRecord: inconsistent field dimension");
        const double nk = vec::norm(j_values[k]);
        if (nk > 1.0 + 1e-12)
            throw std::invalid_argument("FieldRecord: |J| exceeds 1");
        if (nk < prev_norm - 1e-9)
            throw std::invalid_argument("FieldRecord: |J| decreases along the samples");
        prev_norm = std::max(prev_norm, nk);
        j_flat_.insert(j_flat_.end(), j_values[k].begin(), j_values[k].end());
    }
    if (vec::norm(j_values.front()) <= kDegenerateJ)
        throw DegenerateFieldError("FieldRecord: |J(0)| <= 1e-12, the flow is frozen");
    times_ = std::move(times);
}

FieldRecord FieldRecord::from_trajectory(const Trajectory& traj) {
    return FieldRecord(traj.times(), traj.j_series());
}

double FieldRecord::final_norm() const {
    std::vector<double> last(j_flat_.end() - static_cast<std::ptrdiff_t>(dim_), j_flat_.end());
    return vec::norm(last);
}

void FieldRecord::eval(double t, std::vector<double>& j_out) const {
    if (t < times_.front() - 1e-9 || t > times_.back() + 1e-9)
        throw std::out_of_range("FieldRecord: evaluation outside the recorded time range");
    t = std::clamp(t, times_.front(), times_.back());

    // Bracketing interval, then the four-sample stencil clamped at the ends.
    const std::size_t S = times_.size();
    std::size_t k = static_cast<std::size_t>(
        std::upper_bound(times_.begin(), times_.end(), t) - times_.begin());
    k = (k == 0) ? 0 : k - 1;
    if (k > S - 2) k = S - 2;
    const std::size_t k0 = (k == 0) ? 0 : std::min(k - 1, S - 4);

    double w[4];
    for (int a = 0; a < 4; ++a) {
        w[a] = 1.0;
        for (int b = 0; b < 4; ++b) {
            if (a == b) continue;
            w[a] *= (t - times_[k0 + static_cast<std::size_t>(b)]) /
                    (times_[k0 + static_cast<std::size_t>(a)] -
                     times_[k0 + static_cast<std::size_t>(b)]);
        }
    }
    j_out.assign(dim_, 0.0);
    for (int a = 0; a < 4; ++a) {
        const double* row = j_flat_.data() + (k0 + static_cast<std::size_t>(a)) * dim_;
        for (std::size_t c = 0; c < dim_; ++c) j_out[c] += w[a] * row[c];
    }
}

std::vector<double> FieldRecord::at(double t) const {
    std::vector<double> j;
    eval(t, j);
    return j;
}

namespace {

// RK4 on dv/dt = J(t) - (v.J(t))v from t0 to t1 (either direction), uniform
// substeps of at most dt, renormalizing every step. obs sees every state
// including the initial one.
template <typename Obs>
void flow_steps(const FieldRecord& field, std::vector<double>& v, double t0, double t1, double dt,
                Obs&& obs) {
    const std::size_t n = v.size();
    const double span = t1 - t0;
    const std::size_t steps = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(std::fabs(span) / dt - 1e-12)));
    const double h = span / static_cast<double>(steps);

    std::vector<double> j(n), k1(n), k2(n), k3(n), k4(n), tmp(n);
    auto rhs_at = [&](double t, const std::vector<double>& state, std::vector<double>& out) {
        field.eval(t, j);
        double d = 0.0;
        for (std::size_t c = 0; c < n; ++c) d += state[c] * j[c];
        for (std::size_t c = 0; c < n; ++c) out[c] = j[c] - d * state[c];
    };

    obs(t0, v);
    for (std::size_t s = 0; s < steps; ++s) {
        const double t = t0 + h * static_cast<double>(s);
        rhs_at(t, v, k1);
        for (std::size_t c = 0; c < n; ++c) tmp[c] = v[c] + 0.5 * h * k1[c];
        rhs_at(t + 0.5 * h, tmp, k2);
        for (std::size_t c = 0; c < n; ++c) tmp[c] = v[c] + 0.5 * h * k2[c];
        rhs_at(t + 0.5 * h, tmp, k3);
        for (std::size_t c = 0; c < n; ++c) tmp[c] = v[c] + h * k3[c];
        rhs_at(t + h, tmp, k4);
        for (std::size_t c = 0; c < n; ++c)
            v[c] += h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
        double nn = 0.0;
        for (double x : v) nn += x * x;
        nn = std::sqrt(nn);
        for (double& x : v) x /= nn;
        obs(t0 + h * static_cast<double>(s + 1), v);
    }
}

void check_range(const FieldRecord& field, double t0, double t1) {
    if (std::min(t0, t1) < field.t_min() - 1e-9 || std::max(t0, t1) > field.t_max() + 1e-9)
        throw std::out_of_range("flow_single: requested interval leaves the field's time range");
}

// Orthonormal tangent directions at v, built from the coordinate axes least
// aligned with it.
std::vector<std::vector<double>> tangent_basis(const std::vector<double>& v, std::size_t want) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return std::fabs(v[a]) < std::fabs(v[b]); });

    std::vector<std::vector<double>> basis;
    for (std::size_t idx : order) {
        std::vector<double> t(n, 0.0);
        t[idx] = 1.0;
        const double dv = v[idx];
        for (std::size_t c = 0; c < n; ++c) t[c] -= dv * v[c];
        for (const auto& b : basis) {
            const double db = vec::dot(t, b);
            for (std::size_t c = 0; c < n; ++c) t[c] -= db * b[c];
        }
        const double nn = vec::norm(t);
        if (nn < 0.5) continue;
        for (double& x : t) x /= nn;
        basis.push_back(std::move(t));
        if (basis.size() == want) break;
    }
    return basis;
}

} // namespace

UnitVector flow_single(const FieldRecord& field, const UnitVector& v0, double t0, double t1,
                       double dt) {
    if (v0.dim() != field.dim())
        throw std::invalid_argument("flow_single: vector/field dimension mismatch");
    if (!(dt > 0.0)) throw std::invalid_argument("flow_single: dt must be positive");
    check_range(field, t0, t1);
    std::vector<double> v = v0.coords();
    flow_steps(field, v, t0, t1, dt, [](double, const std::vector<double>&) {});
    return UnitVector(v);
}

VbackResult compute_vback(const FieldRecord& field, const UnitVector& omega_inf, double dt) {
    if (omega_inf.dim() != field.dim())
        throw std::invalid_argument("compute_vback: omega/field dimension mismatch");
    const double lambda = field.final_norm();
    if (lambda * field.t_max() < std::log(1e10))
        throw NonConvergenceError("compute_vback: field horizon too short, needs "
                                  "e^{-lambda T} < 1e-10 at the final sample");

    std::vector<double> minus(omega_inf.coords());
    for (double& c : minus) c = -c;
    const UnitVector start(minus);

    std::vector<double> horizons, increments;
    const double t0 = std::log(1e3) / lambda;
    horizons.push_back(t0);
    std::vector<double> w_prev = flow_single(field, start, t0, 0.0, dt).coords();
    for (;;) {
        const double tk = t0 + 5.0 * static_cast<double>(horizons.size());
        if (tk > field.t_max() + 1e-9)
            throw NonConvergenceError("compute_vback: increments still above 1e-10 at the "
                                      "field horizon (extend the run)");
        std::vector<double> w = flow_single(field, start, tk, 0.0, dt).coords();
        horizons.push_back(tk);
        increments.push_back(vec::dist(w, w_prev));
        if (increments.back() < kVbackTol)
            return VbackResult{UnitVector(w), lambda, std::move(horizons), std::move(increments)};
        w_prev = std::move(w);
    }
}

namespace {

// Forward flow recording the extreme dot product against the axis: the
// minimum when seek_min, the maximum otherwise. A coarse trace is kept so
// failing flows can be reported.
FlowCheck run_check(const FieldRecord& field, const std::vector<double>& start,
                    const std::vector<double>& axis, double t_end, double dt, bool seek_min,
                    std::string label, double threshold) {
    FlowCheck fc;
    fc.label = std::move(label);
    fc.extreme_dot = seek_min ? 2.0 : -2.0;

    const std::size_t steps =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(t_end / dt)));
    const std::size_t stride = std::max<std::size_t>(1, steps / 512);
    std::vector<double> trace_t, trace_d;
    std::size_t calls = 0;

    std::vector<double> v = start;
    flow_steps(field, v, 0.0, t_end, dt, [&](double t, const std::vector<double>& state) {
        const double d = vec::dot(state, axis);
        if (seek_min ? (d < fc.extreme_dot) : (d > fc.extreme_dot)) {
            fc.extreme_dot = d;
            fc.t_extreme = t;
        }
        if (calls++ % stride == 0) {
            trace_t.push_back(t);
            trace_d.push_back(d);
        }
    });
    fc.pass = seek_min ? (fc.extreme_dot < threshold) : (fc.extreme_dot > threshold);
    if (!fc.pass) {
        fc.trace_times = std::move(trace_t);
        fc.trace_dots = std::move(trace_d);
    }
    return fc;
}

} // namespace

VbackCheck verify_vback(const FieldRecord& field, const UnitVector& v_back,
                        const UnitVector& omega_inf, double t_end, double dt) {
    if (v_back.dim() != field.dim() || omega_inf.dim() != field.dim())
        throw std::invalid_argument("verify_vback: dimension mismatch");
    check_range(field, 0.0, t_end);

    VbackCheck check;
    check.t_end = t_end;
    const std::vector<double>& axis = omega_inf.coords();
    check.back = run_check(field, v_back.coords(), axis, t_end, dt, true, "v_back",
                           -1.0 + kVbackMargin);

    const auto basis = tangent_basis(v_back.coords(), std::min<std::size_t>(2, field.dim() - 1));
    for (std::size_t b = 0; b < basis.size(); ++b) {
        for (double sign : {+1.0, -1.0}) {
            std::vector<double> start = v_back.coords();
            for (std::size_t c = 0; c < start.size(); ++c)
                start[c] += sign * kVbackMargin * basis[b][c];
            const double nn = vec::norm(start);
            for (double& x : start) x /= nn;
            std::string label = (sign > 0 ? "+d" : "-d") + std::to_string(b + 1);
            check.displaced.push_back(run_check(field, start, axis, t_end, dt, false,
                                                std::move(label), 1.0 - kVbackMargin));
        }
    }
    check.all_pass = check.back.pass;
    for (const auto& fc : check.displaced) check.all_pass = check.all_pass && fc.pass;
    return check;
}

MeshCheck exactly_one_back_mesh(const FieldRecord& field, const UnitVector& v_back,
                                const UnitVector& omega_inf, double t_end, double radius,
                                std::size_t count, double dt) {
    if (v_back.dim() != field.dim() || omega_inf.dim() != field.dim())
        throw std::invalid_argument("exactly_one_back_mesh: dimension mismatch");
    check_range(field, 0.0, t_end);
    const std::size_t n = field.dim();
    const auto basis = tangent_basis(v_back.coords(), std::min<std::size_t>(2, n - 1));

    MeshCheck mesh;
    mesh.points = (n == 2) ? 2 : count;
    mesh.worst_max_dot = 2.0;
    const double cr = std::cos(radius), sr = std::sin(radius);
    const double two_pi = 2.0 * std::acos(-1.0);

    for (std::size_t i = 0; i < mesh.points; ++i) {
        std::vector<double> start(n);
        if (n == 2) {
            const double sgn = (i == 0) ? 1.0 : -1.0;
            for (std::size_t c = 0; c < n; ++c)
                start[c] = cr * v_back[c] + sgn * sr * basis[0][c];
        } else {
            const double ang = two_pi * static_cast<double>(i) / static_cast<double>(mesh.points);
            for (std::size_t c = 0; c < n; ++c)
                start[c] = cr * v_back[c] +
                           sr * (std::cos(ang) * basis[0][c] + std::sin(ang) * basis[1][c]);
        }
        const FlowCheck fc =
            run_check(field, start, omega_inf.coords(), t_end, dt, false, "mesh", 0.0);
        if (fc.pass) ++mesh.escaped;
        mesh.worst_max_dot = std::min(mesh.worst_max_dot, fc.extreme_dot);
    }
    mesh.all_pass = mesh.escaped == mesh.points;
    return mesh;
}

namespace {

nlohmann::json flow_check_json(const FlowCheck& fc) {
    nlohmann::json j;
    j["label"] = fc.label;
    j["extreme_dot"] = fc.extreme_dot;
    j["t_extreme"] = fc.t_extreme;
    j["pass"] = fc.pass;
    if (!fc.trace_times.empty()) {
        j["trace_times"] = fc.trace_times;
        j["trace_dots"] = fc.trace_dots;
    }
    return j;
}

} // namespace

std::string to_json_string(const VbackResult& result) {
    nlohmann::json j;
    j["v_back"] = result.v_back.coords();
    j["lambda"] = result.lambda;
    j["horizons"] = result.horizons;
    j["cauchy_increments"] = result.increments;
    return j.dump(2) + "\n";
}

std::string to_json_string(const VbackCheck& check) {
    nlohmann::json j;
    j["t_end"] = check.t_end;
    j["back"] = flow_check_json(check.back);
    j["displaced"] = nlohmann::json::array();
    for (const auto& fc : check.displaced) j["displaced"].push_back(flow_check_json(fc));
    j["all_pass"] = check.all_pass;
    return j.dump(2) + "\n";
}

std::string to_json_string(const MeshCheck& check) {
    nlohmann::json j;
    j["points"] = check.points;
    j["escaped"] = check.escaped;
    j["worst_max_dot"] = check.worst_max_dot;
    j["all_pass"] = check.all_pass;
    return j.dump(2) + "\n";
}

} // namespace spherealign
