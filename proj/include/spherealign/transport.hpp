#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "spherealign/particles.hpp"
#include "spherealign/sphere.hpp"

namespace spherealign {

// Continuous part of an initial measure: a bounded density h relative to the
// uniform probability measure on S^{n-1}, drawn by rejection sampling under
// the declared envelope sup h <= envelope.
struct DensityPart {
    std::size_t dim = 0;
    std::function<double(const UnitVector&)> h;
    double envelope = 0.0;
    double mass = 0.0; // total mass carried by the density
};

// Initial measure: optional density part plus explicit atoms. Atoms carry
// their exact mass as single particles and are never sampled -- the two-atom
// limit depends on the exact mass sitting at the backward point, which
// sampling would blur. Masses are positive and total 1 within 1e-12; atom
// positions are pairwise distinct.
class MeasureSpec {
public:
    struct Atom {
        UnitVector point;
        double mass;
    };

    MeasureSpec(std::optional<DensityPart> density, std::vector<Atom> atoms);

    static MeasureSpec atoms_only(std::vector<Atom> atoms);

    // Density h(v) = 1 + beta (v . e_n), |beta| <= 1, envelope 1 + |beta|.
    static MeasureSpec tilted(std::size_t n, double beta, double density_mass = 1.0,
                              std::vector<Atom> atoms = {});

    std::size_t dim() const { return dim_; }
    const std::optional<DensityPart>& density() const { return density_; }
    const std::vector<Atom>& atoms() const { return atoms_; }

private:
    std::optional<DensityPart> density_;
    std::vector<Atom> atoms_;
    std::size_t dim_ = 0;
};

// Empirical representative of the measure: the atoms first, in spec order and
// with their exact masses, then `count` equal-weight density samples (count is
// ignored for purely atomic specs). Deterministic for a fixed seed. Throws
// std::invalid_argument when the density exceeds its declared envelope at a
// proposed point.
WeightedConfiguration sample(const MeasureSpec& spec, std::size_t count, std::uint64_t seed);

// Limit measure (1 - m) delta_{omega} + m delta_{-omega} with m in [0, 1/2).
struct TwoAtomLimit {
    TwoAtomLimit(UnitVector omega, double m);

    UnitVector omega_inf;
    double back_mass;
};

// Exact W1 (chordal ground cost |v - w|) from the configuration to the
// two-atom limit. A transportation problem with two sinks is solved exactly
// by one exchange pass: sort the particles by |v + omega| - |v - omega|
// ascending -- the cost difference between the two destinations -- and fill
// the -omega sink to capacity m front to back, splitting at most one
// particle's mass at the boundary.
double w1_to_two_atom(const WeightedConfiguration& cfg, const TwoAtomLimit& limit);

struct MassSplit {
    double plus = 0.0;      // particles with v . omega >= band
    double minus = 0.0;     // particles with v . omega <= -band
    double undecided = 0.0; // exact complement 1 - plus - minus
};

// Diagnostic partition of mass by alignment with omega. Any fixed band works
// asymptotically, since every dot product converges to +-1; the undecided
// entry is computed as the complement so the three parts always total 1.
MassSplit mass_split(const WeightedConfiguration& cfg, const UnitVector& omega,
                     double band = 0.5);

struct TwoAtomReport {
    double horizon = 0.0;
    std::vector<double> omega_inf;         // final order parameter
    std::optional<std::size_t> back_index; // the particle settled at -omega_inf
    double back_mass = 0.0;                // its exact mass; 0 when all align
    double final_j_norm = 0.0;

    std::vector<double> times; // snapshot times
    std::vector<double> w1_series;
    std::vector<double> j_norm_series;
    std::vector<MassSplit> split_series;

    double final_w1 = 0.0;
    double w1_tol = 0.0;
    bool w1_small = false;           // final_w1 < w1_tol
    bool monotone_last_half = false; // w1 nonincreasing over [T/2, T] (1e-10 slack)
    bool back_mass_ok = false;       // back_mass < 1/2
    bool j_consistent = false;       // final |J| = 1 - 2 back_mass within 1e-6
    bool all_pass = false;
};

// Samples the measure spec, evolves it to `horizon`, infers the two-atom limit from
// the final state -- the particle inside the v . omega_inf <= -1/2 cap, if
// any, is the back atom -- and audits the weak convergence towards it.
// Throws InconclusiveError when some particle is still inside the undecided
// band at the horizon, or when more than one claims the back cap.
TwoAtomReport verify_two_atom_limit(const MeasureSpec& spec, std::size_t count,
                                    std::uint64_t seed, double horizon, double w1_tol = 1e-2,
                                    double dt = 1e-3);

std::string to_json_string(const TwoAtomReport& report);

} // namespace spherealign
