#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "pvlab/errors.hpp"
#include "pvlab/kernel.hpp"
#include "pvlab/vortex_dynamics.hpp"

using namespace pvlab;

namespace {

VortexState random_disk_state(std::size_t n, std::uint64_t seed, double radius = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    VortexState s;
    while (s.positions.size() < n) {
        const Point2 p{u(rng), u(rng)};
        if (norm2(p) < 1.0) s.positions.push_back(radius * p);
    }
    return s;
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

}  // namespace

TEST_CASE("single and pair velocities") {
    VortexState one{{{0.3, 0.4}}};
    CHECK(velocity_at(one, 0) == Point2{0.0, 0.0});
    const double d = 0.7;
    VortexState two{{{0.0, 0.0}, {d, 0.0}}};
    CHECK(norm(velocity_at(two, 0)) == doctest::Approx(1.0 / (2.0 * 2.0 * M_PI * d)).epsilon(1e-14));
    CHECK_THROWS_AS(velocity_at(VortexState{{{1.0, 1.0}, {1.0, 1.0}}}, 0), CollisionError);
    CHECK_THROWS_AS(velocity_at(two, 2), ParameterError);
}

TEST_CASE("equilateral triangle speeds") {
    VortexState s;
    for (int k = 0; k < 3; ++k) s.positions.push_back({std::cos(2 * M_PI * k / 3), std::sin(2 * M_PI * k / 3)});
    const double v0 = norm(velocity_at(s, 0));
    CHECK(norm(velocity_at(s, 1)) == doctest::Approx(v0).epsilon(1e-14));
    CHECK(norm(velocity_at(s, 2)) == doctest::Approx(v0).epsilon(1e-14));
}

TEST_CASE("weighted velocity sum vanishes") {
    for (std::size_t n : {2u, 17u, 128u}) {
        const VortexState s = random_disk_state(n, n);
        Point2 total{};
        for (std::size_t i = 0; i < n; ++i) total += (1.0 / n) * velocity_at(s, i);
        CHECK(norm(total) <= 1e-12 * n);
        std::vector<Point2> all;
        velocities(s.positions, all);
        for (std::size_t i = 0; i < n; ++i) {
            const Point2 one = velocity_at(s, i);
            CHECK(norm(all[i] - one) <= 1e-12 * norm(one));
        }
    }
}

TEST_CASE("zero-duration step is the identity") {
    const VortexState s = random_disk_state(10, 1);
    for (Method m : {Method::rk4, Method::rk45}) {
        const VortexState r = step(s, {m, 1e-3, 1e-10, s.t});
        CHECK(r.positions == s.positions);
        CHECK(r.t == s.t);
    }
}

TEST_CASE("two-vortex co-rotation period") {
    for (double d : {0.5, 1.0}) {
        const VortexState s{{{-d / 2, 0.0}, {d / 2, 0.0}}};
        const double period = 4.0 * M_PI * M_PI * d * d;
        const double t_end = 0.8 * period;
        const VortexState r = step(s, {Method::rk45, 1e-3, 1e-10, t_end});
        // Angle travelled by vortex 1 about the fixed centroid; the pair turns clockwise.
        const double angle = -std::atan2(r.positions[1].x2, r.positions[1].x1);
        const double travelled = angle < 0 ? angle + 2 * M_PI : angle;
        const double measured = 2 * M_PI * t_end / travelled;
        CHECK(rel(measured, period) < 1e-6);
        CHECK(norm(r.positions[0] - r.positions[1]) == doctest::Approx(d).epsilon(1e-9));
        // A whole period with fixed-step rk4 returns to the start.
        const VortexState q = step(s, {Method::rk4, period / 4000, 0.0, period});
        CHECK(norm(q.positions[1] - s.positions[1]) < 1e-9);
    }
}

TEST_CASE("forward then backward integration is reversible") {
    const VortexState s = random_disk_state(12, 4);
    const VortexState f = step(s, {Method::rk45, 1e-3, 1e-12, 0.5});
    const VortexState b = step(f, {Method::rk45, 1e-3, 1e-12, 0.0});
    for (std::size_t i = 0; i < s.n(); ++i) CHECK(norm(b.positions[i] - s.positions[i]) < 1e-8);
    const VortexState f4 = step(s, {Method::rk4, 1e-3, 0.0, 0.5});
    const VortexState b4 = step(f4, {Method::rk4, 1e-3, 0.0, 0.0});
    for (std::size_t i = 0; i < s.n(); ++i) CHECK(norm(b4.positions[i] - s.positions[i]) < 1e-8);
}

TEST_CASE("integration is bitwise deterministic") {
    const VortexState s = random_disk_state(40, 9);
    const VortexState a = step(s, {Method::rk45, 1e-3, 1e-9, 0.3});
    const VortexState b = step(s, {Method::rk45, 1e-3, 1e-9, 0.3});
    CHECK(a.positions == b.positions);
}

TEST_CASE("tight pairs trigger the stiffness guard") {
    const VortexState s{{{0.0, 0.0}, {1e-8, 0.0}}};
    CHECK_THROWS_AS(step(s, {Method::rk45, 1e-3, 1e-10, 1.0}), StiffnessError);
    CHECK_THROWS_AS(step(VortexState{{{0.0, 0.0}, {0.0, 0.0}}}, {Method::rk45, 1e-3, 1e-10, 1.0}), CollisionError);
}

TEST_CASE("hamiltonian values and invariance") {
    CHECK(hamiltonian({{{0.0, 0.0}, {1.0, 0.0}}}) == doctest::Approx(0.0));
    CHECK(hamiltonian({{{0.0, 0.0}, {0.5, 0.0}}}) == doctest::Approx(std::log(2.0) / (8 * M_PI)).epsilon(1e-14));
    VortexState s = random_disk_state(30, 2);
    const double h0 = hamiltonian(s);
    // Direct double sum with the ordered-pair normalization.
    double direct = 0.0;
    for (std::size_t i = 0; i < s.n(); ++i)
        for (std::size_t j = 0; j < s.n(); ++j)
            if (i != j) direct += coulomb_g(s.positions[i] - s.positions[j]);
    CHECK(h0 == doctest::Approx(direct / (2.0 * 30 * 30)).epsilon(1e-12));
    const double c = std::cos(0.7), sn = std::sin(0.7);
    for (auto& p : s.positions) p = Point2{c * p.x1 - sn * p.x2 + 3.0, sn * p.x1 + c * p.x2 - 1.0};
    CHECK(hamiltonian(s) == doctest::Approx(h0).epsilon(1e-12));
}

TEST_CASE("center of vorticity and inertia") {
    const double d = 0.6;
    auto ci = center_and_inertia({{{-d / 2, 0.0}, {d / 2, 0.0}}});
    CHECK(norm(ci.center) == 0.0);
    CHECK(ci.inertia == doctest::Approx(d * d / 4));
    ci = center_and_inertia({{{1.0, 2.0}}});
    CHECK(ci.center == Point2{1.0, 2.0});
    CHECK(ci.inertia == doctest::Approx(5.0));
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        VortexState s = random_disk_state(20, seed);
        for (auto& p : s.positions) p += Point2{0.5, -0.2};
        const auto c2 = center_and_inertia(s);
        CHECK(c2.inertia >= norm2(c2.center));
    }
}

TEST_CASE("minimal distance floor") {
    CHECK(min_distance_floor({{{-0.5, 0.0}, {0.5, 0.0}}}) == doctest::Approx(1.0));
    CHECK(min_distance_floor({{{1.0, 1.0}}}) == 1.0);
    // Very negative energy from widely spread points collapses the bound but keeps it positive in log form.
    VortexState spread = random_disk_state(400, 3, 50.0);
    CHECK(log_min_distance_floor(spread) < -100.0);
    CHECK(std::isfinite(log_min_distance_floor(spread)));
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const VortexState s = random_disk_state(8, 100 + seed, 0.3);
        CHECK(min_distance_floor(s) <= min_pairwise_distance(s));
    }
}

TEST_CASE("minimal distance floor holds along trajectories") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const VortexState s = random_disk_state(8, 200 + seed, 0.5);
        const double floor = min_distance_floor(s);
        StepStats stats;
        const Trace tr = simulate(s, {Method::rk45, 1e-3, 1e-10, 10.0}, uniform_times(0.0, 10.0, 101), default_observers(),
                                  &stats);
        CHECK(stats.min_distance_seen >= floor);
        for (std::size_t k = 0; k < tr.size(); ++k) CHECK(min_pairwise_distance(tr.state(k)) >= floor);
    }
}

TEST_CASE("conserved quantities along a simulation") {
    const VortexState s = random_disk_state(64, 11);
    const Trace tr = simulate(s, {Method::rk45, 1e-3, 1e-10, 1.0}, uniform_times(0.0, 1.0, 11));
    REQUIRE(tr.observer_names == std::vector<std::string>{"H", "M1", "M2", "I", "min_dist"});
    const double scale = std::sqrt(tr.values[0][3]);
    for (std::size_t k = 1; k < tr.size(); ++k) {
        CHECK(rel(tr.values[k][0], tr.values[0][0]) <= 1e-6);
        CHECK(std::abs(tr.values[k][1] - tr.values[0][1]) <= 1e-6 * scale);
        CHECK(std::abs(tr.values[k][2] - tr.values[0][2]) <= 1e-6 * scale);
        CHECK(rel(tr.values[k][3], tr.values[0][3]) <= 1e-6);
    }
}

TEST_CASE("two-vortex distance is constant and positions-only traces") {
    const Trace tr = simulate({{{-0.5, 0.0}, {0.5, 0.0}}}, {Method::rk45, 1e-3, 1e-10, 5.0}, uniform_times(0.0, 5.0, 21));
    for (std::size_t k = 0; k < tr.size(); ++k) CHECK(tr.values[k][4] == doctest::Approx(1.0).epsilon(1e-9));
    const Trace bare = simulate({{{-0.5, 0.0}, {0.5, 0.0}}}, {Method::rk45, 1e-3, 1e-10, 1.0}, uniform_times(0.0, 1.0, 3), {});
    CHECK(bare.observer_names.empty());
    std::ostringstream os;
    bare.write_csv(os);
    const std::string csv = os.str();
    CHECK(csv.substr(0, csv.find('\n')) == "t,x1_0,x2_0,x1_1,x2_1");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
    CHECK_THROWS_AS(simulate({{{0.0, 0.0}}}, {}, {0.0, 0.0}), ParameterError);
}
