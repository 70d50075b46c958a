#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "spherealign/asymptotics.hpp"
#include "spherealign/errors.hpp"
#include "spherealign/particles.hpp"

using namespace spherealign;

namespace {

WeightedConfiguration pair_at_angles(double m1, double m2, double a1, double a2) {
    std::vector<UnitVector> pts;
    pts.emplace_back(std::vector<double>{std::cos(a1), std::sin(a1)});
    pts.emplace_back(std::vector<double>{std::cos(a2), std::sin(a2)});
    return WeightedConfiguration({m1, m2}, std::move(pts));
}

std::vector<double> grid(double t0, double t1, std::size_t count) {
    std::vector<double> t(count);
    for (std::size_t k = 0; k < count; ++k)
        t[k] = t0 + (t1 - t0) * static_cast<double>(k) / static_cast<double>(count - 1);
    return t;
}

} // namespace

TEST_CASE("rate fitting recovers pure exponentials exactly") {
    auto t = grid(0.0, 5.0, 501);
    std::vector<double> y(t.size());
    for (std::size_t k = 0; k < t.size(); ++k) y[k] = 5.0 * std::exp(-2.0 * t[k]);
    auto fit = fit_rate(t, y, 0.0, 5.0);
    CHECK(std::fabs(fit.rate - 2.0) < 1e-10);
    CHECK(std::fabs(fit.intercept - std::log(5.0)) < 1e-10);
    CHECK(fit.count == t.size());
}

TEST_CASE("rate fitting tolerates a faster-decaying contamination") {
    auto t = grid(0.0, 10.0, 2001);
    std::vector<double> y(t.size());
    for (std::size_t k = 0; k < t.size(); ++k)
        y[k] = std::exp(-t[k]) * (1.0 + std::exp(-2.0 * t[k]));
    auto fit = fit_rate(t, y, 5.0, 10.0);
    CHECK(std::fabs(fit.rate - 1.0) < 1e-3);
}

TEST_CASE("rate fitting of a constant series gives rate zero") {
    auto t = grid(0.0, 3.0, 100);
    std::vector<double> y(t.size(), 0.7361);
    auto fit = fit_rate(t, y, 0.0, 3.0);
    CHECK(std::fabs(fit.rate) < 1e-12);
}

TEST_CASE("rate fitting rejects thin windows and floored samples") {
    auto t = grid(0.0, 1.0, 100);
    std::vector<double> y(t.size(), 0.5);
    CHECK_THROWS_AS(fit_rate(t, y, 0.99, 1.0), std::invalid_argument);
    y[50] = 1e-14;
    CHECK_THROWS_AS(fit_rate(t, y, 0.0, 1.0), std::domain_error);
}

TEST_CASE("windowed fitting truncates at the series minimum") {
    // Decay followed by regrowth, as produced by an unstable equilibrium.
    auto t = grid(0.0, 20.0, 4001);
    std::vector<double> y(t.size());
    for (std::size_t k = 0; k < t.size(); ++k)
        y[k] = std::exp(-t[k]) + 1e-9 * std::exp(t[k]);
    auto sf = try_fit_rate(t, y, 1e-10, 1e-2);
    REQUIRE(sf.status == SeriesStatus::Fitted);
    CHECK(std::fabs(sf.fit.rate - 1.0) < 0.03);
}

TEST_CASE("windowed fitting flags flat and short series") {
    auto t = grid(0.0, 1.0, 50);
    std::vector<double> zero(t.size(), 0.0);
    CHECK(try_fit_rate(t, zero, 1e-10, 1e-2).status == SeriesStatus::AtFloor);

    std::vector<double> coarse = {0.0, 1.0, 2.0};
    std::vector<double> y3 = {0.5, 1e-3, 1e-5};
    CHECK(try_fit_rate(coarse, y3, 1e-10, 1e-2).status == SeriesStatus::TooFew);
}

TEST_CASE("classification of the aligning pair") {
    auto cfg = pair_at_angles(0.5, 0.5, std::acos(-1.0) / 4.0, -std::acos(-1.0) / 4.0);
    auto traj = integrate(cfg, 30.0, {});
    auto rep = classify_regime(traj);
    REQUIRE(rep.regime == Regime::Aligned);
    CHECK(std::fabs(rep.lambda - 1.0) < 1e-8);
    CHECK(std::fabs(rep.omega_inf[0] - 1.0) < 1e-12);
    REQUIRE(rep.particle_rates.size() == 2);
    for (const auto& pr : rep.particle_rates) {
        REQUIRE(pr.status == SeriesStatus::Fitted);
        CHECK(std::fabs(pr.fit.rate - 1.0) < 0.05);
    }
    // Equal masses at mirror angles pin Omega to (1, 0) bitwise (the J_y
    // addends cancel exactly), so the Omega series never leaves its limit.
    CHECK(rep.omega_rate.status == SeriesStatus::AtFloor);

    // a_1 = -a_2 = (0, tan phi_0) up to the extraction error.
    REQUIRE(rep.a_coeffs.size() == 2);
    const double tan0 = std::tan(std::acos(-1.0) / 4.0);
    CHECK(std::fabs(rep.a_coeffs[0][1] - tan0) < 1e-6);
    CHECK(std::fabs(rep.a_coeffs[1][1] + tan0) < 1e-6);
    CHECK(std::fabs(rep.a_coeffs[0][0]) < 1e-9);
    CHECK(std::fabs(0.5 * rep.a_coeffs[0][1] + 0.5 * rep.a_coeffs[1][1]) < 1e-8);
}

TEST_CASE("classification of the stationary unequal antipodal pair") {
    WeightedConfiguration cfg({0.25, 0.75},
                              {UnitVector({-1.0, 0.0}), UnitVector({1.0, 0.0})});
    auto traj = integrate(cfg, 10.0, {});
    auto rep = classify_regime(traj);
    REQUIRE(rep.regime == Regime::OneBack);
    REQUIRE(rep.back_index.has_value());
    CHECK(*rep.back_index == 0);
    CHECK(std::fabs(rep.lambda - 0.5) < 1e-12);
    // Nothing moves: every distance series sits at its floor.
    CHECK(rep.particle_rates[0].status == SeriesStatus::AtFloor);
    CHECK(rep.particle_rates[1].status == SeriesStatus::AtFloor);
    CHECK(rep.omega_rate.status == SeriesStatus::AtFloor);
    for (const auto& row : rep.a_coeffs)
        for (double c : row) CHECK(c == 0.0);
}

TEST_CASE("classification rejects a frozen field and flags short runs") {
    WeightedConfiguration frozen({0.5, 0.5},
                                 {UnitVector({-1.0, 0.0}), UnitVector({1.0, 0.0})});
    auto traj = integrate(frozen, 1.0, {});
    CHECK_THROWS_AS(classify_regime(traj), DegenerateFieldError);

    auto cfg = pair_at_angles(0.5, 0.5, 0.8, -0.3);
    auto short_traj = integrate(cfg, 2.0, {});
    auto rep = classify_regime(short_traj);
    CHECK(rep.regime == Regime::Inconclusive);
    CHECK(!rep.note.empty());
}

TEST_CASE("asymptotics audit passes on the aligning pair") {
    auto cfg = pair_at_angles(0.5, 0.5, std::acos(-1.0) / 4.0, -std::acos(-1.0) / 4.0);
    auto traj = integrate(cfg, 30.0, {});
    auto rep = verify_alignment_asymptotics(traj);
    CHECK(rep.all_pass);
    for (const auto& c : rep.checks) {
        INFO(c.name, " measured=", c.measured, " expected=", c.expected);
        CHECK(c.pass);
    }
    auto json = to_json_string(rep);
    CHECK(json.find("\"all_pass\": true") != std::string::npos);
    CHECK(json.find("\"regime\": \"aligned\"") != std::string::npos);
}

TEST_CASE("asymptotics audit passes vacuously on the stationary pair") {
    WeightedConfiguration cfg({0.25, 0.75},
                              {UnitVector({-1.0, 0.0}), UnitVector({1.0, 0.0})});
    auto traj = integrate(cfg, 10.0, {});
    auto rep = verify_alignment_asymptotics(traj);
    CHECK(rep.all_pass);
    bool saw_lambda_mass = false;
    for (const auto& c : rep.checks) {
        if (c.name == "lambda_mass") {
            saw_lambda_mass = true;
            CHECK(!c.vacuous);
            CHECK(std::fabs(c.measured - 0.5) < 1e-12);
        }
        if (c.name == "bulk_rate" || c.name == "omega_rate" || c.name == "back_rate")
            CHECK(c.vacuous);
    }
    CHECK(saw_lambda_mass);
}

TEST_CASE("asymptotics audit on a random aligned flock") {
    std::mt19937_64 rng(71);
    const UnitVector center = UnitVector::axis(3, 0);
    auto cfg = random_configuration(rng, 10, 3, &center);
    auto traj = integrate(cfg, 30.0, {});
    auto rep = verify_alignment_asymptotics(traj);
    REQUIRE(rep.regime.regime == Regime::Aligned);
    CHECK(std::fabs(rep.regime.lambda - 1.0) < 1e-9);
    for (const auto& c : rep.checks) {
        INFO(c.name, " measured=", c.measured, " expected=", c.expected);
        CHECK(c.pass);
    }
}

TEST_CASE("bisected aiming pins the back particle near the saddle") {
    // Asymmetric bulk so nothing is pinned by symmetry.
    auto aim = aim_one_back(0.3, {0.45, 0.55}, {0.55, -0.25});
    CHECK(aim.config.weight(0) == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(aim.config.weight(1) == doctest::Approx(0.7 * 0.45).epsilon(1e-14));
    // The bracket collapses to adjacent doubles; the unstable mode of the
    // saddle grows at rate 1, so a one-ulp placement survives past t = 30.
    CHECK(aim.angle_high - aim.angle_low < 1e-12);
    CHECK(aim.escape_time > 30.0);
    const auto j0 = mean_velocity(aim.config);
    CHECK(aim.config.coord(0, 0) * j0[0] + aim.config.coord(0, 1) * j0[1] < 0.0);
}

TEST_CASE("tracked one-back run reproduces the mass-determined rates") {
    // Unequal bulk masses: an equal-mass pair is mirror-symmetric about its
    // own field axis, which pins the back particle and Omega exactly and
    // leaves nothing for the 3-lambda fits to measure.
    const double lambda = 1.0 - 2.0 * 0.2;
    auto traj = track_one_back(0.2, {0.45, 0.55}, {0.55, -0.25}, 16.0 / lambda);
    auto rep = verify_alignment_asymptotics(traj);
    REQUIRE(rep.regime.regime == Regime::OneBack);
    CHECK(*rep.regime.back_index == 0);
    CHECK(std::fabs(rep.regime.lambda - lambda) < 1e-9);
    for (const auto& c : rep.checks) {
        INFO(c.name, " measured=", c.measured, " expected=", c.expected,
             " vacuous=", c.vacuous);
        CHECK(c.pass);
        // Everything is genuinely measured on this run: bulk decay at lambda,
        // Omega and back-particle decay at 3 lambda, the expansion residual,
        // and both a_i identities.
        CHECK(!c.vacuous);
    }
    CHECK(rep.all_pass);
    auto json = to_json_string(rep);
    CHECK(json.find("\"one_back\"") != std::string::npos);
}

TEST_CASE("random configurations always classify decisively") {
    std::mt19937_64 rng(73);
    int done = 0;
    for (int rep_i = 0; rep_i < 100; ++rep_i) {
        const std::size_t n = (rep_i % 2 == 0) ? 2 : 3;
        const std::size_t count = 3 + static_cast<std::size_t>(rep_i % 5);
        const UnitVector center = UnitVector::axis(n, 0);
        auto cfg = random_configuration(rng, count, n, &center);
        const double j0 = vec::norm(mean_velocity(cfg));
        REQUIRE(j0 > 1e-12);
        IntegrateOptions opts;
        opts.dt = 2e-3;
        auto traj = integrate(cfg, 45.0 / j0, opts);
        auto rep = classify_regime(traj);
        INFO("run ", rep_i, " note: ", rep.note);
        CHECK(rep.regime != Regime::Inconclusive);
        ++done;
    }
    CHECK(done == 100);
}
