#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <vector>

#include "spherealign/sphere.hpp"

namespace spherealign {

// Minimum chord separation between distinct particles at construction.
inline constexpr double kDistinctTol = 1e-12;
// Mass-sum tolerance.
inline constexpr double kMassSumTol = 1e-12;
// |J| below this has no direction.
inline constexpr double kDegenerateJ = 1e-12;

// N weighted unit vectors, masses positive and summing to 1. Initial data must
// be pairwise distinct (chord > 1e-12); states produced by the flow keep that
// property automatically, so trajectory snapshots skip the O(N^2) re-check.
class WeightedConfiguration {
public:
    WeightedConfiguration(std::vector<double> weights, const std::vector<UnitVector>& points);

    // Flat layout: point i occupies [i*n, (i+1)*n). Runs the full checks.
    static WeightedConfiguration from_flat(std::vector<double> weights,
                                           std::vector<double> flat, std::size_t dim);

    // Integrator snapshots: weights/layout already validated, distinctness
    // preserved by the dynamics.
    struct TrustedState {};
    WeightedConfiguration(TrustedState, std::vector<double> weights,
                          std::vector<double> flat, std::size_t dim);

    std::size_t size() const { return weights_.size(); }
    std::size_t dim() const { return dim_; }
    double weight(std::size_t i) const { return weights_[i]; }
    const std::vector<double>& weights() const { return weights_; }
    const std::vector<double>& flat() const { return flat_; }
    UnitVector point(std::size_t i) const;
    double coord(std::size_t i, std::size_t k) const { return flat_[i * dim_ + k]; }

private:
    void validate() const;

    std::vector<double> weights_;
    std::vector<double> flat_;
    std::size_t dim_ = 0;
};

// J = sum m_i v_i, accumulated in canonical order (see vec::canonical_sum).
std::vector<double> mean_velocity(const WeightedConfiguration& cfg);

// J / |J|; throws DegenerateFieldError when |J| <= 1e-12.
UnitVector order_parameter(const WeightedConfiguration& cfg);

// (1/2) sum_ij m_i m_j |v_i - v_j|^2, computed pairwise. Coincides with
// 1 - |J|^2 only through the algebra of the model; both routes are kept so
// tests can compare them.
double energy(const WeightedConfiguration& cfg);

// Right-hand side of the alignment flow: dv_i/dt = J - (v_i . J) v_i.
std::vector<TangentVector> rhs(const WeightedConfiguration& cfg);

// gamma = -J . (v + w): coefficient in d|v - w|^2/dt = gamma |v - w|^2.
double repulsion_coefficient(const std::vector<double>& j, const UnitVector& v,
                             const UnitVector& w);

struct IntegrateOptions {
    double dt = 1e-3;
    bool renormalize = true;
    // 0 = auto: smallest stride keeping <= 1e5 snapshots and the state
    // storage under ~2e7 doubles. The final step is always stored.
    std::size_t snapshot_stride = 0;
};

class Trajectory {
public:
    Trajectory(std::vector<double> weights, std::size_t dim, std::vector<double> times,
               std::vector<std::vector<double>> states, std::vector<std::vector<double>> j_series);

    std::size_t snapshots() const { return times_.size(); }
    std::size_t particles() const { return weights_.size(); }
    std::size_t dim() const { return dim_; }
    const std::vector<double>& times() const { return times_; }
    const std::vector<double>& weights() const { return weights_; }
    const std::vector<double>& state_flat(std::size_t k) const { return states_[k]; }
    WeightedConfiguration state(std::size_t k) const;
    const std::vector<double>& j_at(std::size_t k) const { return j_series_[k]; }
    const std::vector<std::vector<double>>& j_series() const { return j_series_; }
    double j_norm(std::size_t k) const;
    // Omega(t_k); throws DegenerateFieldError if |J(t_k)| <= 1e-12.
    UnitVector omega(std::size_t k) const;
    double coord(std::size_t k, std::size_t i, std::size_t c) const {
        return states_[k][i * dim_ + c];
    }

    // Header: t,J_1..J_n,absJ,E,v_1_1..v_1_n,v_2_1,... one row per snapshot,
    // 17 significant digits.
    void write_csv(std::ostream& os) const;

private:
    std::vector<double> weights_;
    std::size_t dim_;
    std::vector<double> times_;
    std::vector<std::vector<double>> states_;
    std::vector<std::vector<double>> j_series_;
};

// Classical RK4 with per-step renormalization (unless disabled) on [0, t_end];
// the last step lands on the first multiple of dt at or beyond t_end.
// Verifies |J| never decreases by more than 1e-9 per step and throws
// NonConvergenceError otherwise (signals dt too large).
Trajectory integrate(const WeightedConfiguration& cfg0, double t_end,
                     const IntegrateOptions& opts = {});

// Random configuration for experiments: masses ~ 0.3 + U(0,1) normalized,
// points uniform on the sphere (or on the hemisphere around u0 when given,
// which keeps |J(0)| away from 0).
WeightedConfiguration random_configuration(std::mt19937_64& rng, std::size_t count,
                                           std::size_t dim,
                                           const UnitVector* hemisphere_center = nullptr);

namespace detail {

// J of a flat state, canonical accumulation. scratch must hold count doubles.
void mean_velocity_flat(const std::vector<double>& weights, const std::vector<double>& flat,
                        std::size_t dim, std::vector<double>& scratch, std::vector<double>& j_out);

struct Rk4Scratch {
    std::vector<double> j, terms, k1, k2, k3, k4, tmp;
};

// One in-place RK4 step on a flat state; scratch buffers are reused across
// calls. Used by integrate() and by shooting procedures that do not need
// snapshots.
void rk4_step(std::vector<double>& flat, const std::vector<double>& weights, std::size_t dim,
              double dt, bool renorm, Rk4Scratch& scratch);

void rk4_steps(std::vector<double>& flat, const std::vector<double>& weights, std::size_t dim,
               double dt, std::size_t count, bool renorm);

} // namespace detail

} // namespace spherealign
