#include "spherealign/sphere.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace spherealign {

namespace vec {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size())
        throw std::invalid_argument("vec::dot: dimension mismatch");
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
    return s;
}

double norm(const std::vector<double>& a) {
    double s = 0.0;
    for (double x : a) s += x * x;
    return std::sqrt(s);
}

double dist(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size())
        throw std::invalid_argument("vec::dist: dimension mismatch");
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = a[k] - b[k];
        s += d * d;
    }
    return std::sqrt(s);
}

double canonical_sum(std::vector<double>& terms) {
    std::sort(terms.begin(), terms.end(), [](double a, double b) {
        const double fa = std::fabs(a), fb = std::fabs(b);
        if (fa != fb) return fa < fb;
        return a < b;
    });
    double s = 0.0;
    for (double x : terms) s += x;
    return s;
}

} // namespace vec

UnitVector::UnitVector(std::vector<double> coords) : c_(std::move(coords)) {
    if (c_.size() < 2)
        throw std::invalid_argument("UnitVector: dimension must be >= 2");
    const double n = vec::norm(c_);
    if (std::fabs(n - 1.0) > kUnitNormTol)
        throw std::invalid_argument("UnitVector: norm deviates from 1 by " +
                                    std::to_string(n - 1.0) +
                                    " (limit 1e-12); renormalize first");
}

UnitVector UnitVector::axis(std::size_t n, std::size_t k, double sign) {
    if (k >= n) throw std::invalid_argument("UnitVector::axis: k out of range");
    std::vector<double> c(n, 0.0);
    c[k] = sign;
    return UnitVector(std::move(c));
}

TangentVector::TangentVector(UnitVector base, std::vector<double> vec)
    : base_(std::move(base)), v_(std::move(vec)) {
    if (v_.size() != base_.dim())
        throw std::invalid_argument("TangentVector: dimension mismatch");
    const double d = vec::dot(base_.coords(), v_);
    if (std::fabs(d) > kTangencyTol * std::max(1.0, vec::norm(v_)))
        throw std::invalid_argument("TangentVector: not orthogonal to base");
}

UnitVector renormalize(const std::vector<double>& w) {
    const double n = vec::norm(w);
    if (n <= 1e-12)
        throw std::invalid_argument("renormalize: vector norm below 1e-12");
    std::vector<double> c(w.size());
    for (std::size_t k = 0; k < w.size(); ++k) c[k] = w[k] / n;
    return UnitVector(std::move(c));
}

TangentVector project_tangent(const UnitVector& v, const std::vector<double>& u) {
    if (u.size() != v.dim())
        throw std::invalid_argument("project_tangent: dimension mismatch");
    const double d = vec::dot(v.coords(), u);
    std::vector<double> t(u.size());
    for (std::size_t k = 0; k < u.size(); ++k) t[k] = u[k] - d * v[k];
    return TangentVector(v, std::move(t));
}

double chord_distance(const UnitVector& v, const UnitVector& w) {
    if (v.dim() != w.dim())
        throw std::invalid_argument("chord_distance: dimension mismatch");
    return vec::dist(v.coords(), w.coords());
}

std::vector<double> stereo_forward(const UnitVector& v) {
    const std::size_t n = v.dim();
    const double vn = v[n - 1];
    if (vn <= -1.0 + kSouthPoleTol)
        throw std::domain_error("stereo_forward: point too close to chart singularity -e_n");
    std::vector<double> z(n - 1);
    for (std::size_t k = 0; k + 1 < n; ++k) z[k] = v[k] / (1.0 + vn);
    return z;
}

UnitVector stereo_inverse(const std::vector<double>& z) {
    if (z.empty())
        throw std::invalid_argument("stereo_inverse: need at least one coordinate");
    double r2 = 0.0;
    for (double x : z) r2 += x * x;
    const double den = 1.0 + r2;
    std::vector<double> v(z.size() + 1);
    for (std::size_t k = 0; k < z.size(); ++k) v[k] = 2.0 * z[k] / den;
    v[z.size()] = (1.0 - r2) / den;
    // den >= 1 keeps every component finite; renormalize to absorb the last
    // ulp so downstream constructions start from an exact-norm point.
    return renormalize(v);
}

UnitVector random_unit_vector(std::mt19937_64& rng, std::size_t n) {
    if (n < 2) throw std::invalid_argument("random_unit_vector: n must be >= 2");
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> v(n);
    while (true) {
        for (auto& x : v) x = gauss(rng);
        if (vec::norm(v) > 1e-6) break; // essentially never retries
    }
    return renormalize(v);
}

} // namespace spherealign
