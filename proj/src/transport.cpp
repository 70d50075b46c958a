#include "spherealign/transport.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <utility>

#include <json.hpp>

#include "spherealign/errors.hpp"

namespace spherealign {

MeasureSpec::MeasureSpec(std::optional<DensityPart> density, std::vector<Atom> atoms)
    : density_(std::move(density)), atoms_(std::move(atoms)) {
    if (!density_ && atoms_.empty()) {
        throw std::invalid_argument("MeasureSpec: needs a density part or at least one atom");
    }
    if (density_) {
        if (density_->dim < 2) throw std::invalid_argument("MeasureSpec: density dim must be >= 2");
        if (!density_->h) throw std::invalid_argument("MeasureSpec: density part has no function");
        if (!(density_->envelope > 0.0) || !std::isfinite(density_->envelope)) {
            throw std::invalid_argument("MeasureSpec: envelope must be positive and finite");
        }
        if (!(density_->mass > 0.0)) {
            throw std::invalid_argument("MeasureSpec: density mass must be positive");
        }
        dim_ = density_->dim;
    } else {
        dim_ = atoms_.front().point.dim();
    }

    double total = density_ ? density_->mass : 0.0;
    for (const Atom& a : atoms_) {
        if (!(a.mass > 0.0)) throw std::invalid_argument("MeasureSpec: atom masses must be positive");
        if (a.point.dim() != dim_) throw std::invalid_argument("MeasureSpec: mixed dimensions");
        total += a.mass;
    }
    if (std::fabs(total - 1.0) > kMassSumTol) {
        throw std::invalid_argument("MeasureSpec: masses must sum to 1");
    }
    for (std::size_t i = 0; i < atoms_.size(); ++i) {
        for (std::size_t j = i + 1; j < atoms_.size(); ++j) {
            if (chord_distance(atoms_[i].point, atoms_[j].point) <= kDistinctTol) {
                throw std::invalid_argument("MeasureSpec: atom positions must be distinct");
            }
        }
    }
}

MeasureSpec MeasureSpec::atoms_only(std::vector<Atom> atoms) {
    return MeasureSpec(std::nullopt, std::move(atoms));
}

MeasureSpec MeasureSpec::tilted(std::size_t n, double beta, double density_mass,
                                std::vector<Atom> atoms) {
    if (n < 2) throw std::invalid_argument("MeasureSpec::tilted: dim must be >= 2");
    if (!(std::fabs(beta) <= 1.0)) {
        throw std::invalid_argument("MeasureSpec::tilted: |beta| <= 1 keeps the density nonnegative");
    }
    DensityPart part;
    part.dim = n;
    part.h = [beta, n](const UnitVector& v) { return 1.0 + beta * v[n - 1]; };
    part.envelope = 1.0 + std::fabs(beta);
    part.mass = density_mass;
    return MeasureSpec(std::move(part), std::move(atoms));
}

WeightedConfiguration sample(const MeasureSpec& spec, std::size_t count, std::uint64_t seed) {
    std::vector<double> weights;
    std::vector<UnitVector> points;
    for (const auto& a : spec.atoms()) {
        weights.push_back(a.mass);
        points.push_back(a.point);
    }

    if (spec.density()) {
        if (count < 1) throw std::invalid_argument("sample: count must be >= 1");
        const DensityPart& part = *spec.density();
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> level(0.0, part.envelope);
        const double w = part.mass / static_cast<double>(count);
        // Acceptance averages 1/envelope for a probability density; the cap
        // only trips on a grossly oversized envelope.
        std::size_t proposals_left = 1000 * (count + 100);
        while (points.size() < spec.atoms().size() + count) {
            if (proposals_left-- == 0) {
                throw NonConvergenceError("sample: rejection acceptance rate too low");
            }
            UnitVector v = random_unit_vector(rng, part.dim);
            const double hv = part.h(v);
            if (!(hv >= 0.0)) throw std::invalid_argument("sample: density is negative");
            if (hv > part.envelope) {
                throw std::invalid_argument("sample: density exceeds its declared envelope");
            }
            if (level(rng) < hv) {
                weights.push_back(w);
                points.push_back(std::move(v));
            }
        }
    }
    return WeightedConfiguration(std::move(weights), points);
}

TwoAtomLimit::TwoAtomLimit(UnitVector omega, double m) : omega_inf(std::move(omega)), back_mass(m) {
    if (!(m >= 0.0) || m >= 0.5) {
        throw std::invalid_argument("TwoAtomLimit: back mass must lie in [0, 1/2)");
    }
}

double w1_to_two_atom(const WeightedConfiguration& cfg, const TwoAtomLimit& limit) {
    const std::size_t n = cfg.dim();
    if (limit.omega_inf.dim() != n) {
        throw std::invalid_argument("w1_to_two_atom: dimension mismatch");
    }

    const std::size_t count = cfg.size();
    std::vector<double> d_plus(count), d_minus(count);
    for (std::size_t i = 0; i < count; ++i) {
        double sp = 0.0, sm = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const double dp = cfg.coord(i, k) - limit.omega_inf[k];
            const double dm = cfg.coord(i, k) + limit.omega_inf[k];
            sp += dp * dp;
            sm += dm * dm;
        }
        d_plus[i] = std::sqrt(sp);
        d_minus[i] = std::sqrt(sm);
    }

    // Cheapest-to-divert first; the index tiebreak keeps the pass
    // deterministic when two particles are equally torn.
    std::vector<std::size_t> order(count);
    for (std::size_t i = 0; i < count; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double ka = d_minus[a] - d_plus[a], kb = d_minus[b] - d_plus[b];
        return ka < kb || (ka == kb && a < b);
    });

    double remaining = limit.back_mass;
    double cost = 0.0;
    for (std::size_t i : order) {
        const double take = std::min(cfg.weight(i), remaining);
        remaining -= take;
        cost += take * d_minus[i] + (cfg.weight(i) - take) * d_plus[i];
    }
    return cost;
}

MassSplit mass_split(const WeightedConfiguration& cfg, const UnitVector& omega, double band) {
    if (omega.dim() != cfg.dim()) throw std::invalid_argument("mass_split: dimension mismatch");
    if (!(band >= 0.0)) throw std::invalid_argument("mass_split: band must be nonnegative");

    MassSplit split;
    for (std::size_t i = 0; i < cfg.size(); ++i) {
        double d = 0.0;
        for (std::size_t k = 0; k < cfg.dim(); ++k) d += cfg.coord(i, k) * omega[k];
        if (d >= band) split.plus += cfg.weight(i);
        else if (d <= -band) split.minus += cfg.weight(i);
    }
    split.undecided = 1.0 - (split.plus + split.minus);
    return split;
}

TwoAtomReport verify_two_atom_limit(const MeasureSpec& spec, std::size_t count,
                                    std::uint64_t seed, double horizon, double w1_tol,
                                    double dt) {
    if (!(horizon > 0.0)) throw std::invalid_argument("verify_two_atom_limit: horizon must be positive");
    if (!(w1_tol > 0.0)) throw std::invalid_argument("verify_two_atom_limit: tolerance must be positive");

    WeightedConfiguration cfg0 = sample(spec, count, seed);
    if (vec::norm(mean_velocity(cfg0)) <= kDegenerateJ) {
        throw DegenerateFieldError("verify_two_atom_limit: sampled configuration has J = 0");
    }

    IntegrateOptions opts;
    opts.dt = dt;
    Trajectory traj = integrate(cfg0, horizon, opts);
    const std::size_t last = traj.snapshots() - 1;
    const UnitVector omega = traj.omega(last);
    const std::size_t n = traj.dim();

    // The final state decides the limit: at most one particle may sit in the
    // back cap, and none may still be in flight between the caps.
    std::optional<std::size_t> back_index;
    for (std::size_t i = 0; i < traj.particles(); ++i) {
        double d = 0.0;
        for (std::size_t k = 0; k < n; ++k) d += traj.coord(last, i, k) * omega[k];
        if (d <= -0.5) {
            if (back_index) {
                throw InconclusiveError(
                    "verify_two_atom_limit: two particles in the back cap; horizon too short");
            }
            back_index = i;
        } else if (d < 0.5) {
            throw InconclusiveError("verify_two_atom_limit: particle " + std::to_string(i) +
                                    " has not stabilized (v . omega = " + std::to_string(d) + ")");
        }
    }

    TwoAtomReport report;
    report.horizon = horizon;
    report.omega_inf = omega.coords();
    report.back_index = back_index;
    report.back_mass = back_index ? traj.weights()[*back_index] : 0.0;
    report.final_j_norm = traj.j_norm(last);
    report.w1_tol = w1_tol;

    const TwoAtomLimit limit(omega, report.back_mass);
    report.times = traj.times();
    report.w1_series.reserve(traj.snapshots());
    report.j_norm_series.reserve(traj.snapshots());
    report.split_series.reserve(traj.snapshots());
    for (std::size_t k = 0; k < traj.snapshots(); ++k) {
        const WeightedConfiguration state = traj.state(k);
        report.w1_series.push_back(w1_to_two_atom(state, limit));
        report.j_norm_series.push_back(traj.j_norm(k));
        report.split_series.push_back(mass_split(state, omega));
    }
    report.final_w1 = report.w1_series.back();

    report.w1_small = report.final_w1 < w1_tol;
    report.monotone_last_half = true;
    for (std::size_t k = 0; k + 1 < traj.snapshots(); ++k) {
        if (report.times[k] < 0.5 * horizon) continue;
        if (report.w1_series[k + 1] > report.w1_series[k] + 1e-10) {
            report.monotone_last_half = false;
            break;
        }
    }
    report.back_mass_ok = report.back_mass < 0.5;
    report.j_consistent = std::fabs(report.final_j_norm - (1.0 - 2.0 * report.back_mass)) < 1e-6;
    report.all_pass = report.w1_small && report.monotone_last_half && report.back_mass_ok &&
                      report.j_consistent;
    return report;
}

std::string to_json_string(const TwoAtomReport& report) {
    nlohmann::json j;
    j["horizon"] = report.horizon;
    j["omega_inf"] = report.omega_inf;
    if (report.back_index) j["back_index"] = *report.back_index;
    else j["back_index"] = nullptr;
    j["back_mass"] = report.back_mass;
    j["final_j_norm"] = report.final_j_norm;
    j["final_w1"] = report.final_w1;
    j["w1_tol"] = report.w1_tol;
    j["w1_small"] = report.w1_small;
    j["monotone_last_half"] = report.monotone_last_half;
    j["back_mass_ok"] = report.back_mass_ok;
    j["j_consistent"] = report.j_consistent;
    const MassSplit& fin = report.split_series.back();
    j["final_split"] = {{"plus", fin.plus}, {"minus", fin.minus}, {"undecided", fin.undecided}};
    j["all_pass"] = report.all_pass;
    return j.dump(2) + "\n";
}

} // namespace spherealign
