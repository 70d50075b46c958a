#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "spherealign/particles.hpp"
#include "spherealign/sphere.hpp"

namespace spherealign {

// Backward-shooting tolerance: the Cauchy iteration stops when successive
// backward points are closer than this chord distance.
inline constexpr double kVbackTol = 1e-10;
// Alignment margin for the verification flows: "reaches the pole" means the
// dot product with the axis passes within 1e-6 of +-1.
inline constexpr double kVbackMargin = 1e-6;

// Sampled mean-velocity field J(t), the external field of the single-vector
// flow dv/dt = P_{v perp} J(t). Evaluation between samples is piecewise cubic
// through the bracketing four samples, matching the integrator's order.
class FieldRecord {
public:
    // Requires >= 4 samples, strictly increasing times, constant dimension,
    // |J| <= 1 + 1e-12, |J| nondecreasing within 1e-9 per sample, and a
    // positive initial norm (the flow is undefined in a dead field).
    FieldRecord(std::vector<double> times, std::vector<std::vector<double>> j_values);
    static FieldRecord from_trajectory(const Trajectory& traj);

    std::size_t dim() const { return dim_; }
    std::size_t samples() const { return times_.size(); }
    double t_min() const { return times_.front(); }
    double t_max() const { return times_.back(); }
    const std::vector<double>& times() const { return times_; }
    // |J| at the last sample: the lambda this field settles to.
    double final_norm() const;

    // J(t); t must lie in [t_min, t_max] (1e-9 slack). j_out is resized.
    void eval(double t, std::vector<double>& j_out) const;
    std::vector<double> at(double t) const;

private:
    std::vector<double> times_;
    std::vector<double> j_flat_; // sample k occupies [k*dim, (k+1)*dim)
    std::size_t dim_ = 0;
};

// Solves dv/dt = P_{v perp} J(t) from (t0, v0) to t1 (backward when t1 < t0)
// with classical RK4 at uniform substeps of at most dt, renormalizing every
// step. Throws std::out_of_range when [min(t0,t1), max(t0,t1)] leaves the
// field's time range.
UnitVector flow_single(const FieldRecord& field, const UnitVector& v0, double t0, double t1,
                       double dt = 1e-3);

struct VbackResult {
    UnitVector v_back;
    double lambda = 0.0;            // field.final_norm()
    std::vector<double> horizons;   // T_k of each backward shot
    std::vector<double> increments; // chord(w_k, w_{k-1}), one fewer than horizons
};

// The unique point whose forward flow converges to -omega_inf, obtained as
// the limit of backward flows w_k = flow(-omega_inf, T_k -> 0) over the
// schedule T_k = T_0 + 5k with e^{-lambda T_0} < 1e-3. Stops when an
// increment falls below 1e-10; throws NonConvergenceError when the field's
// horizon is too short for that (it must reach e^{-lambda T} < 1e-10).
VbackResult compute_vback(const FieldRecord& field, const UnitVector& omega_inf,
                          double dt = 1e-3);

struct FlowCheck {
    std::string label;
    double extreme_dot = 0.0; // min dot for the backward point, max for the rest
    double t_extreme = 0.0;
    bool pass = false;
    // Coarse dot-product trace, filled only when the check fails.
    std::vector<double> trace_times, trace_dots;
};

struct VbackCheck {
    double t_end = 0.0;
    FlowCheck back;                   // flow from v_back: min dot < -1 + 1e-6
    std::vector<FlowCheck> displaced; // +-1e-6 tangent offsets: max dot > 1 - 1e-6
    bool all_pass = false;
};

// Checks the defining property of v_back and its instability. The criterion
// is reach-over-time, not an endpoint read: the flow from v_back is expelled
// by numerical repulsion (rate 2 lambda) soon after it dives to -omega_inf,
// and the displaced flows need longer than that grace period to align, so no
// single read-out time serves both. Failures are reported, never thrown.
VbackCheck verify_vback(const FieldRecord& field, const UnitVector& v_back,
                        const UnitVector& omega_inf, double t_end, double dt = 1e-3);

struct MeshCheck {
    std::size_t points = 0;
    std::size_t escaped = 0;      // flows whose dot with omega_inf turned positive
    double worst_max_dot = 0.0;   // smallest of the per-flow maxima
    bool all_pass = false;
};

// Isolation of the backward point: forward flows from a great-circle mesh
// around v_back (geodesic radius 1e-4) must all reach v . omega_inf > 0 by
// t_end. In dimension 2 the mesh degenerates to the two offset points.
MeshCheck exactly_one_back_mesh(const FieldRecord& field, const UnitVector& v_back,
                                const UnitVector& omega_inf, double t_end, double radius = 1e-4,
                                std::size_t count = 32, double dt = 1e-3);

std::string to_json_string(const VbackResult& result);
std::string to_json_string(const VbackCheck& check);
std::string to_json_string(const MeshCheck& check);

} // namespace spherealign
