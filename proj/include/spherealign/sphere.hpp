#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "spherealign/errors.hpp"

namespace spherealign {

// Unit-norm tolerance enforced at construction of UnitVector.
inline constexpr double kUnitNormTol = 1e-12;
// Chart singularity guard: stereo_forward rejects v with v_n <= -1 + kSouthPoleTol.
inline constexpr double kSouthPoleTol = 1e-12;
// Orthogonality tolerance for TangentVector.
inline constexpr double kTangencyTol = 1e-12;

namespace vec {

double dot(const std::vector<double>& a, const std::vector<double>& b);
double norm(const std::vector<double>& a);
double dist(const std::vector<double>& a, const std::vector<double>& b);

// Fixed-order sum: sorts terms by (magnitude, sign) before accumulating.
// The order is invariant under permutation of the inputs, and a term and its
// exact negation land adjacently and cancel exactly, so mirror-symmetric
// particle configurations keep their symmetry to the last bit. Sorts in place.
double canonical_sum(std::vector<double>& terms);

} // namespace vec

// Point on S^{n-1}, n >= 2. Coordinates are stored exactly as given; the
// constructor only verifies | |v| - 1 | <= kUnitNormTol.
class UnitVector {
public:
    explicit UnitVector(std::vector<double> coords);

    // k-th coordinate axis of R^n, scaled by sign (+1 or -1).
    static UnitVector axis(std::size_t n, std::size_t k, double sign = 1.0);

    std::size_t dim() const { return c_.size(); }
    double operator[](std::size_t k) const { return c_[k]; }
    const std::vector<double>& coords() const { return c_; }

private:
    std::vector<double> c_;
};

// Vector attached to base with base . vec = 0 within kTangencyTol.
class TangentVector {
public:
    TangentVector(UnitVector base, std::vector<double> vec);

    const UnitVector& base() const { return base_; }
    const std::vector<double>& vec() const { return v_; }
    double norm() const { return vec::norm(v_); }

private:
    UnitVector base_;
    std::vector<double> v_;
};

// w / |w|; throws for |w| <= 1e-12 or n < 2.
UnitVector renormalize(const std::vector<double>& w);

// u - (v.u) v.
TangentVector project_tangent(const UnitVector& v, const std::vector<double>& u);

// Euclidean chord |v - w| in R^n.
double chord_distance(const UnitVector& v, const UnitVector& w);

// Stereographic chart from the south pole -e_n: z = P_{e_n-perp} v / (1 + v_n),
// an (n-1)-vector. Throws near v = -e_n (see kSouthPoleTol).
std::vector<double> stereo_forward(const UnitVector& v);

// Inverse chart p(z) = (2z, 1 - |z|^2) / (1 + |z|^2); accepts any z in R^{n-1},
// n - 1 >= 1.
UnitVector stereo_inverse(const std::vector<double>& z);

// Uniform draw on S^{n-1}: normalized n-vector of standard Gaussians.
UnitVector random_unit_vector(std::mt19937_64& rng, std::size_t n);

} // namespace spherealign
