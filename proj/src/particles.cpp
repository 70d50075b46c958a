#include "spherealign/particles.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>

namespace spherealign {

WeightedConfiguration::WeightedConfiguration(std::vector<double> weights,
                                             const std::vector<UnitVector>& points)
    : weights_(std::move(weights)) {
    if (points.empty())
        throw std::invalid_argument("WeightedConfiguration: no particles");
    if (weights_.size() != points.size())
        throw std::invalid_argument("WeightedConfiguration: weight/point count mismatch");
    dim_ = points[0].dim();
    flat_.reserve(points.size() * dim_);
    for (const auto& p : points) {
        if (p.dim() != dim_)
            throw std::invalid_argument("WeightedConfiguration: mixed dimensions");
        flat_.insert(flat_.end(), p.coords().begin(), p.coords().end());
    }
    validate();
}

WeightedConfiguration WeightedConfiguration::from_flat(std::vector<double> weights,
                                                       std::vector<double> flat,
                                                       std::size_t dim) {
    if (dim < 2) throw std::invalid_argument("WeightedConfiguration: dimension must be >= 2");
    if (weights.empty() || flat.size() != weights.size() * dim)
        throw std::invalid_argument("WeightedConfiguration: flat size mismatch");
    WeightedConfiguration cfg{TrustedState{}, std::move(weights), std::move(flat), dim};
    for (std::size_t i = 0; i < cfg.size(); ++i)
        (void)cfg.point(i); // unit-norm check
    cfg.validate();
    return cfg;
}

WeightedConfiguration::WeightedConfiguration(TrustedState, std::vector<double> weights,
                                             std::vector<double> flat, std::size_t dim)
    : weights_(std::move(weights)), flat_(std::move(flat)), dim_(dim) {}

UnitVector WeightedConfiguration::point(std::size_t i) const {
    return UnitVector(std::vector<double>(flat_.begin() + static_cast<std::ptrdiff_t>(i * dim_),
                                          flat_.begin() + static_cast<std::ptrdiff_t>((i + 1) * dim_)));
}

void WeightedConfiguration::validate() const {
    const std::size_t n = weights_.size();
    double sum = 0.0;
    for (double m : weights_) {
        if (!(m > 0.0))
            throw std::invalid_argument("WeightedConfiguration: masses must be positive");
        sum += m;
    }
    if (std::fabs(sum - 1.0) > kMassSumTol)
        throw std::invalid_argument("WeightedConfiguration: masses sum to " +
                                    std::to_string(sum) + ", expected 1 within 1e-12");
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double d2 = 0.0;
            for (std::size_t k = 0; k < dim_; ++k) {
                const double d = flat_[i * dim_ + k] - flat_[j * dim_ + k];
                d2 += d * d;
            }
            if (d2 <= kDistinctTol * kDistinctTol)
                throw std::invalid_argument(
                    "WeightedConfiguration: particles " + std::to_string(i) + " and " +
                    std::to_string(j) +
                    " coincide; merge their masses into a single particle instead");
        }
    }
}

namespace detail {

void mean_velocity_flat(const std::vector<double>& weights, const std::vector<double>& flat,
                        std::size_t dim, std::vector<double>& scratch,
                        std::vector<double>& j_out) {
    const std::size_t n = weights.size();
    j_out.assign(dim, 0.0);
    scratch.resize(n);
    for (std::size_t k = 0; k < dim; ++k) {
        for (std::size_t i = 0; i < n; ++i) scratch[i] = weights[i] * flat[i * dim + k];
        j_out[k] = vec::canonical_sum(scratch);
    }
}

namespace {

// k_out[i*dim..] = J - (v_i . J) v_i for the flat state.
void rhs_flat(const std::vector<double>& flat, std::size_t dim, const std::vector<double>& j,
              std::vector<double>& k_out) {
    const std::size_t n = flat.size() / dim;
    k_out.resize(flat.size());
    for (std::size_t i = 0; i < n; ++i) {
        const double* v = flat.data() + i * dim;
        double d = 0.0;
        for (std::size_t k = 0; k < dim; ++k) d += v[k] * j[k];
        double* out = k_out.data() + i * dim;
        for (std::size_t k = 0; k < dim; ++k) out[k] = j[k] - d * v[k];
    }
}

void renormalize_flat(std::vector<double>& flat, std::size_t dim) {
    const std::size_t n = flat.size() / dim;
    for (std::size_t i = 0; i < n; ++i) {
        double* v = flat.data() + i * dim;
        double s = 0.0;
        for (std::size_t k = 0; k < dim; ++k) s += v[k] * v[k];
        const double inv = 1.0 / std::sqrt(s);
        for (std::size_t k = 0; k < dim; ++k) v[k] *= inv;
    }
}

using detail::Rk4Scratch;

void rk4_step_impl(std::vector<double>& flat, const std::vector<double>& weights, std::size_t dim,
                   double dt, bool renorm, Rk4Scratch& s) {
    const std::size_t sz = flat.size();
    mean_velocity_flat(weights, flat, dim, s.terms, s.j);
    rhs_flat(flat, dim, s.j, s.k1);

    s.tmp.resize(sz);
    for (std::size_t q = 0; q < sz; ++q) s.tmp[q] = flat[q] + 0.5 * dt * s.k1[q];
    mean_velocity_flat(weights, s.tmp, dim, s.terms, s.j);
    rhs_flat(s.tmp, dim, s.j, s.k2);

    for (std::size_t q = 0; q < sz; ++q) s.tmp[q] = flat[q] + 0.5 * dt * s.k2[q];
    mean_velocity_flat(weights, s.tmp, dim, s.terms, s.j);
    rhs_flat(s.tmp, dim, s.j, s.k3);

    for (std::size_t q = 0; q < sz; ++q) s.tmp[q] = flat[q] + dt * s.k3[q];
    mean_velocity_flat(weights, s.tmp, dim, s.terms, s.j);
    rhs_flat(s.tmp, dim, s.j, s.k4);

    const double w = dt / 6.0;
    for (std::size_t q = 0; q < sz; ++q)
        flat[q] += w * (s.k1[q] + 2.0 * s.k2[q] + 2.0 * s.k3[q] + s.k4[q]);
    if (renorm) renormalize_flat(flat, dim);
}

} // namespace

void rk4_step(std::vector<double>& flat, const std::vector<double>& weights, std::size_t dim,
              double dt, bool renorm, Rk4Scratch& s) {
    rk4_step_impl(flat, weights, dim, dt, renorm, s);
}

void rk4_steps(std::vector<double>& flat, const std::vector<double>& weights, std::size_t dim,
               double dt, std::size_t count, bool renorm) {
    Rk4Scratch s;
    for (std::size_t k = 0; k < count; ++k) rk4_step_impl(flat, weights, dim, dt, renorm, s);
}

} // namespace detail

std::vector<double> mean_velocity(const WeightedConfiguration& cfg) {
    std::vector<double> j, scratch;
    detail::mean_velocity_flat(cfg.weights(), cfg.flat(), cfg.dim(), scratch, j);
    return j;
}

UnitVector order_parameter(const WeightedConfiguration& cfg) {
    const auto j = mean_velocity(cfg);
    if (vec::norm(j) <= kDegenerateJ)
        throw DegenerateFieldError("order_parameter: |J| <= 1e-12, direction undefined");
    return renormalize(j);
}

double energy(const WeightedConfiguration& cfg) {
    const std::size_t n = cfg.size(), d = cfg.dim();
    const auto& w = cfg.weights();
    const auto& x = cfg.flat();
    double e = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double d2 = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                const double diff = x[i * d + k] - x[j * d + k];
                d2 += diff * diff;
            }
            e += w[i] * w[j] * d2;
        }
    }
    return e;
}

std::vector<TangentVector> rhs(const WeightedConfiguration& cfg) {
    const auto j = mean_velocity(cfg);
    std::vector<TangentVector> out;
    out.reserve(cfg.size());
    for (std::size_t i = 0; i < cfg.size(); ++i)
        out.push_back(project_tangent(cfg.point(i), j));
    return out;
}

double repulsion_coefficient(const std::vector<double>& j, const UnitVector& v,
                             const UnitVector& w) {
    if (j.size() != v.dim() || v.dim() != w.dim())
        throw std::invalid_argument("repulsion_coefficient: dimension mismatch");
    double s = 0.0;
    for (std::size_t k = 0; k < j.size(); ++k) s += j[k] * (v[k] + w[k]);
    return -s;
}

Trajectory::Trajectory(std::vector<double> weights, std::size_t dim, std::vector<double> times,
                       std::vector<std::vector<double>> states,
                       std::vector<std::vector<double>> j_series)
    : weights_(std::move(weights)), dim_(dim), times_(std::move(times)),
      states_(std::move(states)), j_series_(std::move(j_series)) {
    if (times_.empty() || states_.size() != times_.size() || j_series_.size() != times_.size())
        throw std::invalid_argument("Trajectory: series length mismatch");
    for (std::size_t k = 1; k < times_.size(); ++k)
        if (!(times_[k] > times_[k - 1]))
            throw std::invalid_argument("Trajectory: times must be strictly increasing");
}

WeightedConfiguration Trajectory::state(std::size_t k) const {
    return WeightedConfiguration(WeightedConfiguration::TrustedState{}, weights_, states_[k], dim_);
}

double Trajectory::j_norm(std::size_t k) const { return vec::norm(j_series_[k]); }

UnitVector Trajectory::omega(std::size_t k) const {
    if (j_norm(k) <= kDegenerateJ)
        throw DegenerateFieldError("Trajectory::omega: |J| <= 1e-12");
    return renormalize(j_series_[k]);
}

namespace {

void append_g17(std::string& line, double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    line += buf;
}

} // namespace

void Trajectory::write_csv(std::ostream& os) const {
    const std::size_t n = particles(), d = dim_;
    std::string line = "t";
    for (std::size_t k = 1; k <= d; ++k) line += ",J_" + std::to_string(k);
    line += ",absJ,E";
    for (std::size_t i = 1; i <= n; ++i)
        for (std::size_t k = 1; k <= d; ++k)
            line += ",v_" + std::to_string(i) + "_" + std::to_string(k);
    os << line << "\n";
    for (std::size_t s = 0; s < snapshots(); ++s) {
        line.clear();
        append_g17(line, times_[s]);
        for (std::size_t k = 0; k < d; ++k) {
            line += ',';
            append_g17(line, j_series_[s][k]);
        }
        line += ',';
        append_g17(line, j_norm(s));
        line += ',';
        append_g17(line, energy(state(s)));
        for (double x : states_[s]) {
            line += ',';
            append_g17(line, x);
        }
        os << line << "\n";
    }
}

Trajectory integrate(const WeightedConfiguration& cfg0, double t_end,
                     const IntegrateOptions& opts) {
    if (!(t_end >= 0.0) || !std::isfinite(t_end))
        throw std::invalid_argument("integrate: t_end must be finite and >= 0");
    if (!(opts.dt > 0.0))
        throw std::invalid_argument("integrate: dt must be positive");

    const std::size_t dim = cfg0.dim();
    const std::size_t steps =
        t_end == 0.0 ? 0 : static_cast<std::size_t>(std::ceil(t_end / opts.dt - 1e-12));

    std::size_t stride = opts.snapshot_stride;
    if (stride == 0) {
        const std::size_t by_count = (steps + 1 + 100000 - 1) / 100000;
        const std::size_t state_sz = cfg0.size() * dim;
        const std::size_t by_mem = (steps + 1) * state_sz / 20000000 + 1;
        stride = std::max<std::size_t>(1, std::max(by_count, by_mem));
    }

    std::vector<double> flat = cfg0.flat();
    std::vector<double> times;
    std::vector<std::vector<double>> states, j_series;

    detail::Rk4Scratch scratch; // reused across steps
    std::vector<double> j, terms;
    detail::mean_velocity_flat(cfg0.weights(), flat, dim, terms, j);

    auto snapshot = [&](std::size_t step) {
        times.push_back(static_cast<double>(step) * opts.dt);
        states.push_back(flat);
        j_series.push_back(j);
    };
    snapshot(0);

    double prev_jnorm = vec::norm(j);
    for (std::size_t step = 1; step <= steps; ++step) {
        detail::rk4_step(flat, cfg0.weights(), dim, opts.dt, opts.renormalize, scratch);
        detail::mean_velocity_flat(cfg0.weights(), flat, dim, terms, j);
        const double jn = vec::norm(j);
        if (jn < prev_jnorm - 1e-9)
            throw NonConvergenceError(
                "integrate: |J| decreased by more than 1e-9 in one step; reduce dt");
        prev_jnorm = jn;
        if (step % stride == 0 || step == steps) snapshot(step);
    }
    return Trajectory(cfg0.weights(), dim, std::move(times), std::move(states),
                      std::move(j_series));
}

WeightedConfiguration random_configuration(std::mt19937_64& rng, std::size_t count,
                                           std::size_t dim, const UnitVector* hemisphere_center) {
    if (count == 0) throw std::invalid_argument("random_configuration: count must be >= 1");
    std::uniform_real_distribution<double> um(0.3, 1.3);
    std::vector<double> w(count);
    double sum = 0.0;
    for (auto& m : w) {
        m = um(rng);
        sum += m;
    }
    for (auto& m : w) m /= sum;

    std::vector<UnitVector> pts;
    pts.reserve(count);
    while (pts.size() < count) {
        UnitVector v = random_unit_vector(rng, dim);
        if (hemisphere_center != nullptr && vec::dot(v.coords(), hemisphere_center->coords()) < 0.0) {
            std::vector<double> c = v.coords();
            for (auto& x : c) x = -x;
            v = UnitVector(std::move(c));
        }
        bool distinct = true;
        for (const auto& p : pts)
            if (chord_distance(p, v) <= kDistinctTol) distinct = false;
        if (distinct) pts.push_back(std::move(v));
    }
    return WeightedConfiguration(std::move(w), pts);
}

} // namespace spherealign
