#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>
#include <vector>

#include "spherealign/errors.hpp"
#include "spherealign/particles.hpp"
#include "spherealign/sphere.hpp"

using namespace spherealign;

namespace {

WeightedConfiguration pair_at_angles(double m1, double m2, double a1, double a2) {
    std::vector<UnitVector> pts;
    pts.emplace_back(std::vector<double>{std::cos(a1), std::sin(a1)});
    pts.emplace_back(std::vector<double>{std::cos(a2), std::sin(a2)});
    return WeightedConfiguration({m1, m2}, std::move(pts));
}

} // namespace

TEST_CASE("configuration validation") {
    const UnitVector e1 = UnitVector::axis(2, 0);
    const UnitVector e2 = UnitVector::axis(2, 1);

    SUBCASE("weights must be positive and sum to one") {
        CHECK_THROWS_AS(WeightedConfiguration({0.5, 0.6}, {e1, e2}), std::invalid_argument);
        CHECK_THROWS_AS(WeightedConfiguration({1.0, 0.0}, {e1, e2}), std::invalid_argument);
        CHECK_THROWS_AS(WeightedConfiguration({1.2, -0.2}, {e1, e2}), std::invalid_argument);
    }
    SUBCASE("coincident particles are rejected") {
        CHECK_THROWS_AS(WeightedConfiguration({0.5, 0.5}, {e1, e1}), std::invalid_argument);
        try {
            WeightedConfiguration({0.5, 0.5}, {e1, e1});
        } catch (const std::invalid_argument& err) {
            CHECK(std::string(err.what()).find("merge") != std::string::npos);
        }
    }
    SUBCASE("count mismatch") {
        CHECK_THROWS_AS(WeightedConfiguration({1.0}, {e1, e2}), std::invalid_argument);
    }
}

TEST_CASE("mean velocity reference values") {
    const UnitVector e1 = UnitVector::axis(3, 0);

    WeightedConfiguration cfg({0.25, 0.75}, {UnitVector({-1.0, 0.0, 0.0}), e1});
    auto j = mean_velocity(cfg);
    CHECK(j[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(j[1] == 0.0);
    CHECK(j[2] == 0.0);

    WeightedConfiguration antip({0.5, 0.5}, {UnitVector({-1.0, 0.0, 0.0}), e1});
    auto j0 = mean_velocity(antip);
    CHECK(j0[0] == 0.0);
    CHECK(j0[1] == 0.0);
    CHECK(j0[2] == 0.0);

    // The fully aligned case reduces to a single particle after mass merging:
    // J then equals that point with |J| = 1.
    WeightedConfiguration near_aligned(
        {0.5, 0.5}, {UnitVector({1.0, 0.0, 0.0}), UnitVector({0.0, 1.0, 0.0})});
    auto jn = mean_velocity(near_aligned);
    CHECK(jn[0] == 0.5);
    CHECK(jn[1] == 0.5);
}

TEST_CASE("order parameter normalizes J and rejects the degenerate case") {
    WeightedConfiguration antip({0.5, 0.5},
                                {UnitVector({-1.0, 0.0}), UnitVector({1.0, 0.0})});
    CHECK_THROWS_AS(order_parameter(antip), DegenerateFieldError);

    WeightedConfiguration cfg({0.5, 0.5},
                              {UnitVector({0.0, 1.0}), UnitVector({1.0, 0.0})});
    auto om = order_parameter(cfg);
    const double inv = 1.0 / std::sqrt(2.0);
    CHECK(om[0] == doctest::Approx(inv).epsilon(1e-15));
    CHECK(om[1] == doctest::Approx(inv).epsilon(1e-15));

    // Equal-mass pair placed symmetrically about (0.3, 0.4): J = (0.3, 0.4),
    // which normalizes to (0.6, 0.8).
    const double t = std::sqrt(0.75);
    WeightedConfiguration tilted({0.5, 0.5},
                                 {renormalize({0.3 - 0.8 * t, 0.4 + 0.6 * t}),
                                  renormalize({0.3 + 0.8 * t, 0.4 - 0.6 * t})});
    auto omt = order_parameter(tilted);
    CHECK(omt[0] == doctest::Approx(0.6).epsilon(1e-13));
    CHECK(omt[1] == doctest::Approx(0.8).epsilon(1e-13));
}

TEST_CASE("energy agrees with both defining expressions") {
    WeightedConfiguration antip({0.25, 0.75},
                                {UnitVector({-1.0, 0.0}), UnitVector({1.0, 0.0})});
    CHECK(energy(antip) == doctest::Approx(0.75).epsilon(1e-14));

    WeightedConfiguration even({0.5, 0.5},
                               {UnitVector({-1.0, 0.0}), UnitVector({1.0, 0.0})});
    CHECK(energy(even) == doctest::Approx(1.0).epsilon(1e-14));

    std::mt19937_64 rng(31);
    for (int rep = 0; rep < 50; ++rep) {
        auto cfg = random_configuration(rng, 6, 3);
        auto j = mean_velocity(cfg);
        const double jn2 = vec::dot(j, j);
        CHECK(std::fabs(energy(cfg) - (1.0 - jn2)) < 1e-12);
    }
}

TEST_CASE("right-hand side reference values") {
    SUBCASE("stationary antipodal pair") {
        WeightedConfiguration antip({0.25, 0.75},
                                    {UnitVector({-1.0, 0.0}), UnitVector({1.0, 0.0})});
        auto f = rhs(antip);
        for (const auto& tv : f)
            for (std::size_t k = 0; k < 2; ++k) CHECK(std::fabs(tv.vec()[k]) == 0.0);
    }
    SUBCASE("symmetric pair speeds") {
        const double phi = 0.7;
        auto cfg = pair_at_angles(0.5, 0.5, phi, -phi);
        auto f = rhs(cfg);
        const double expect = std::cos(phi) * std::sin(phi);
        for (const auto& tv : f) {
            double speed = std::sqrt(vec::dot(tv.vec(), tv.vec()));
            CHECK(speed == doctest::Approx(expect).epsilon(1e-13));
        }
    }
}

TEST_CASE("repulsion coefficient reference values") {
    const UnitVector om({1.0, 0.0});
    const UnitVector mom({-1.0, 0.0});
    const double lam = 0.37;
    std::vector<double> j = {lam, 0.0};
    CHECK(repulsion_coefficient(j, om, om) == doctest::Approx(-2.0 * lam).epsilon(1e-15));
    CHECK(repulsion_coefficient(j, mom, mom) == doctest::Approx(2.0 * lam).epsilon(1e-15));
    std::vector<double> z = {0.0, 0.0};
    CHECK(repulsion_coefficient(z, om, mom) == 0.0);
}

TEST_CASE("integration of the symmetric pair follows the closed-form angle law") {
    // Equal masses at angles +-phi about e1: tan(phi(t)) = tan(phi(0)) e^{-t}.
    const double phi0 = std::acos(-1.0) / 4.0;
    auto cfg = pair_at_angles(0.5, 0.5, phi0, -phi0);
    auto traj = integrate(cfg, 1.0, {});
    const auto last = traj.state(traj.snapshots() - 1);
    const double tan_phi = last.point(0)[1] / last.point(0)[0];
    CHECK(std::fabs(tan_phi - std::exp(-1.0)) < 1e-8);
}

TEST_CASE("stationary configurations stay put") {
    WeightedConfiguration antip({0.25, 0.75},
                                {UnitVector({-1.0, 0.0}), UnitVector({1.0, 0.0})});
    auto traj = integrate(antip, 2.0, {});
    for (std::size_t k = 0; k < traj.snapshots(); ++k) {
        CHECK(std::fabs(traj.j_norm(k) - 0.5) < 1e-12);
        auto st = traj.state(k);
        CHECK(std::fabs(st.point(0)[0] + 1.0) < 1e-12);
        CHECK(std::fabs(st.point(1)[0] - 1.0) < 1e-12);
    }
}

TEST_CASE("trajectory invariants on random configurations") {
    std::mt19937_64 rng(41);
    const UnitVector center = UnitVector::axis(3, 0);
    auto cfg = random_configuration(rng, 8, 3, &center);
    auto traj = integrate(cfg, 5.0, {});

    SUBCASE("norms stay pinned to the sphere") {
        for (std::size_t k = 0; k < traj.snapshots(); ++k) {
            auto st = traj.state(k);
            for (std::size_t i = 0; i < st.size(); ++i) {
                double r = std::sqrt(vec::dot(st.point(i).coords(), st.point(i).coords()));
                CHECK(std::fabs(r - 1.0) < 1e-12);
            }
        }
    }
    SUBCASE("|J| never decreases beyond integrator tolerance") {
        for (std::size_t k = 1; k < traj.snapshots(); ++k)
            CHECK(traj.j_norm(k) >= traj.j_norm(k - 1) - 1e-9);
    }
    SUBCASE("energy identity holds at every snapshot") {
        for (std::size_t k = 0; k < traj.snapshots(); ++k) {
            auto st = traj.state(k);
            const double jn = traj.j_norm(k);
            CHECK(std::fabs(energy(st) - (1.0 - jn * jn)) < 1e-12);
        }
    }
}

TEST_CASE("dissipation rate matches the quadratic tangent-speed sum") {
    std::mt19937_64 rng(43);
    auto cfg = random_configuration(rng, 5, 3);
    const double dt = 1e-3;
    IntegrateOptions opts;
    opts.dt = dt;
    opts.snapshot_stride = 1;
    auto traj = integrate(cfg, 0.2, opts);

    // Centered difference of |J|^2 against 2 sum m_i |P_{v_i} J|^2 at interior snapshots.
    for (std::size_t k = 10; k + 10 < traj.snapshots(); k += 7) {
        const double jp = traj.j_norm(k + 1), jm = traj.j_norm(k - 1);
        const double fd = (jp * jp - jm * jm) / (2.0 * dt);
        auto st = traj.state(k);
        auto f = rhs(st);
        double rate = 0.0;
        for (std::size_t i = 0; i < st.size(); ++i)
            rate += st.weight(i) * vec::dot(f[i].vec(), f[i].vec());
        rate *= 2.0;
        CHECK(std::fabs(fd - rate) < 1e-4 * std::max(1e-6, std::fabs(rate)));
    }
}

TEST_CASE("pair separations contract and expand at the predicted rate") {
    std::mt19937_64 rng(47);
    auto cfg = random_configuration(rng, 4, 2);
    const double dt = 1e-3;
    IntegrateOptions opts;
    opts.dt = dt;
    opts.snapshot_stride = 1;
    auto traj = integrate(cfg, 0.1, opts);

    for (std::size_t k = 5; k + 5 < traj.snapshots(); k += 11) {
        auto prev = traj.state(k - 1);
        auto cur = traj.state(k);
        auto next = traj.state(k + 1);
        auto j = mean_velocity(cur);
        for (std::size_t a = 0; a < cur.size(); ++a) {
            for (std::size_t b = a + 1; b < cur.size(); ++b) {
                const double dp = chord_distance(next.point(a), next.point(b));
                const double dm = chord_distance(prev.point(a), prev.point(b));
                const double fd = (dp * dp - dm * dm) / (2.0 * dt);
                const double d0 = chord_distance(cur.point(a), cur.point(b));
                const double predicted =
                    repulsion_coefficient(j, cur.point(a), cur.point(b)) * d0 * d0;
                CHECK(std::fabs(fd - predicted) < 2e-4 * std::max(1.0, std::fabs(predicted)));
            }
        }
    }
}

TEST_CASE("permuting particles permutes the trajectory bit for bit") {
    std::mt19937_64 rng(53);
    auto cfg = random_configuration(rng, 6, 3);

    std::vector<std::size_t> perm = {4, 2, 0, 5, 1, 3};
    std::vector<double> wts;
    std::vector<UnitVector> pts;
    for (std::size_t i : perm) {
        wts.push_back(cfg.weight(i));
        pts.push_back(cfg.point(i));
    }
    WeightedConfiguration shuffled(wts, pts);

    IntegrateOptions opts;
    opts.dt = 1e-3;
    opts.snapshot_stride = 25;
    auto ta = integrate(cfg, 1.0, opts);
    auto tb = integrate(shuffled, 1.0, opts);

    REQUIRE(ta.snapshots() == tb.snapshots());
    for (std::size_t k = 0; k < ta.snapshots(); ++k) {
        auto sa = ta.state(k);
        auto sb = tb.state(k);
        for (std::size_t i = 0; i < perm.size(); ++i)
            for (std::size_t c = 0; c < 3; ++c)
                CHECK(sa.point(perm[i])[c] == sb.point(i)[c]);
    }
}

TEST_CASE("rotating the initial data rotates the whole trajectory") {
    std::mt19937_64 rng(59);
    auto cfg = random_configuration(rng, 5, 3);

    // Rotation about the z axis by a fixed angle, then about x.
    const double a = 0.83, b = -0.41;
    auto rotate = [&](const std::vector<double>& v) {
        std::vector<double> r1 = {std::cos(a) * v[0] - std::sin(a) * v[1],
                                  std::sin(a) * v[0] + std::cos(a) * v[1], v[2]};
        return std::vector<double>{r1[0], std::cos(b) * r1[1] - std::sin(b) * r1[2],
                                   std::sin(b) * r1[1] + std::cos(b) * r1[2]};
    };

    std::vector<UnitVector> rpts;
    std::vector<double> wts;
    for (std::size_t i = 0; i < cfg.size(); ++i) {
        wts.push_back(cfg.weight(i));
        rpts.push_back(renormalize(rotate(cfg.point(i).coords())));
    }
    WeightedConfiguration rcfg(wts, rpts);

    IntegrateOptions opts;
    opts.dt = 1e-3;
    opts.snapshot_stride = 100;
    auto ta = integrate(cfg, 2.0, opts);
    auto tb = integrate(rcfg, 2.0, opts);

    REQUIRE(ta.snapshots() == tb.snapshots());
    for (std::size_t k = 0; k < ta.snapshots(); ++k) {
        auto sa = ta.state(k);
        auto sb = tb.state(k);
        for (std::size_t i = 0; i < sa.size(); ++i) {
            auto ri = rotate(sa.point(i).coords());
            for (std::size_t c = 0; c < 3; ++c) CHECK(std::fabs(ri[c] - sb.point(i)[c]) < 1e-10);
        }
    }
}

TEST_CASE("trajectory CSV serialization") {
    auto cfg = pair_at_angles(0.5, 0.5, 0.6, -0.6);
    IntegrateOptions opts;
    opts.dt = 0.1;
    opts.snapshot_stride = 1;
    auto traj = integrate(cfg, 0.3, opts);

    std::ostringstream os;
    traj.write_csv(os);
    std::istringstream is(os.str());
    std::string header;
    std::getline(is, header);
    CHECK(header == "t,J_1,J_2,absJ,E,v_1_1,v_1_2,v_2_1,v_2_2");

    std::string line;
    std::getline(is, line);
    double t, j1, j2, absj, e, v11, v12, v21, v22;
    REQUIRE(std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf", &t, &j1, &j2, &absj,
                        &e, &v11, &v12, &v21, &v22) == 9);
    CHECK(t == 0.0);
    CHECK(v11 == doctest::Approx(std::cos(0.6)).epsilon(1e-15));
    // Round-trip at 17 significant digits is exact for doubles.
    CHECK(j1 == mean_velocity(cfg)[0]);
    std::size_t lines = 1;
    while (std::getline(is, line))
        if (!line.empty()) ++lines;
    CHECK(lines == traj.snapshots());
}

TEST_CASE("integration step count and snapshot stride") {
    auto cfg = pair_at_angles(0.5, 0.5, 0.4, -0.4);
    IntegrateOptions opts;
    opts.dt = 1e-3;
    opts.snapshot_stride = 10;
    auto traj = integrate(cfg, 0.05, opts);
    CHECK(traj.times().front() == 0.0);
    CHECK(traj.times().back() == doctest::Approx(0.05).epsilon(1e-12));
    for (std::size_t k = 1; k < traj.snapshots(); ++k)
        CHECK(traj.times()[k] > traj.times()[k - 1]);
}
