#include <cmath>
#include <random>

#include "doctest.h"
#include "pvlab/bounds.hpp"
#include "pvlab/errors.hpp"
#include "pvlab/euler_field.hpp"
#include "pvlab/kernel.hpp"
#include "pvlab/modulated_energy.hpp"

using namespace pvlab;

namespace {

// Classical RK4 for f' = gamma f ln(1/f) with a fine fixed step.
double ode_solution(double c, double gamma, double t) {
    auto rhs = [gamma](double f) { return gamma * f * std::log(1.0 / f); };
    const int n = std::max(1, static_cast<int>(std::ceil(t / 1e-4)));
    const double h = t / n;
    double f = c;
    for (int k = 0; k < n; ++k) {
        const double k1 = rhs(f), k2 = rhs(f + 0.5 * h * k1), k3 = rhs(f + 0.5 * h * k2), k4 = rhs(f + h * k3);
        f += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
    }
    return f;
}

}  // namespace

TEST_CASE("Osgood primitive and inverse") {
    const double inv_e = std::exp(-1.0);
    CHECK(std::abs(osgood_M(inv_e)) < 1e-15);
    CHECK(osgood_M_inv(0.0) == doctest::Approx(inv_e).epsilon(1e-15));
    CHECK(osgood_M_inv(osgood_M(0.01)) == doctest::Approx(0.01).epsilon(1e-12));
    CHECK(osgood_M(std::exp(-std::exp(1.0))) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK_THROWS_AS(osgood_M(0.0), DomainError);
    CHECK_THROWS_AS(osgood_M(0.5), DomainError);
    CHECK_THROWS_AS(osgood_M_inv(INFINITY), DomainError);
}

TEST_CASE("Osgood envelope") {
    CHECK(osgood_envelope(1e-3, 2.0, 0.0).value == 1e-3);
    CHECK(osgood_envelope(1e-3, 0.0, 7.0).value == 1e-3);
    CHECK(osgood_envelope(1e-4, 1.0, 1.0).value == doctest::Approx(ode_solution(1e-4, 1.0, 1.0)).epsilon(1e-6));
    double prev = 0.0;
    for (int k = 0; k <= 50; ++k) {
        const double t = 0.1 * k;
        const Envelope e = osgood_envelope(1e-4, 1.0, t);
        CHECK(e.value == doctest::Approx(ode_solution(1e-4, 1.0, t)).epsilon(1e-6));
        // The envelope grows toward 1 and saturates once it passes 1/e.
        CHECK(e.value >= prev);
        CHECK(e.saturated == (e.value > std::exp(-1.0)));
        prev = e.value;
    }
    CHECK(osgood_envelope(1e-4, 1.0, 5.0).saturated);
    CHECK_THROWS_AS(osgood_envelope(0.5, 1.0, 1.0), ParameterError);
    CHECK_THROWS_AS(osgood_envelope(1e-3, -1.0, 1.0), ParameterError);
}

TEST_CASE("epsilon schedule") {
    EpsilonSchedule s = epsilon_schedule(0.0, 100);
    CHECK(s.eps3 == doctest::Approx(std::log(100.0) / 100.0));
    CHECK(epsilon_schedule(1.0, 100).eps3 == doctest::Approx(std::exp(-1.0)));
    s = epsilon_schedule(0.1, 1000000);
    CHECK(s.eps3 == 0.1);
    CHECK(s.eps2 == doctest::Approx(0.01));
    CHECK(s.eps1 == doctest::Approx(0.001));
    CHECK_THROWS_AS(epsilon_schedule(0.1, 2), ParameterError);
    CHECK_THROWS_AS(epsilon_schedule(-0.1, 10), ParameterError);

    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> lf(-8.0, 0.5);
    std::uniform_int_distribution<std::size_t> ln(3, 10000000);
    int checked = 0;
    for (int k = 0; k < 1000; ++k) {
        const EpsilonSchedule e = epsilon_schedule(std::pow(10.0, lf(rng)), ln(rng));
        if (e.eps3 > 0.3) continue;
        ++checked;
        CHECK(e.admissible());
    }
    CHECK(checked > 500);
}

TEST_CASE("theorem right-hand side") {
    BoundConfig cfg;
    CHECK(cfg.growth_rate() == 2.0);
    CHECK(theorem_rhs(0.3, 0.0, 100, cfg) == 0.3);
    // (1e-6 + 2 (ln 1024)^2 / 1024)^(e^-2)
    const double expected = std::pow(1e-6 + 2.0 * 48.04530139182014 / 1024.0, 0.1353352832366127);
    CHECK(theorem_rhs(1e-6, 1.0, 1024, cfg) == doctest::Approx(expected).epsilon(1e-14));
    CHECK(theorem_rhs(0.0, 1.0, std::size_t{1} << 40, cfg) < theorem_rhs(0.0, 1.0, 1 << 20, cfg));
    CHECK(theorem_rhs(0.0, 1.0, std::size_t{1} << 60, cfg) < theorem_rhs(0.0, 1.0, std::size_t{1} << 40, cfg));
    CHECK(theorem_rhs(0.0, 1.0, std::size_t{1} << 60, cfg) < 0.02);

    double prev = INFINITY;
    for (std::size_t n = 8; n < 200000; n = n * 3 / 2) {
        const double v = theorem_rhs(1e-3, 0.5, n, cfg);
        CHECK(v <= prev);
        prev = v;
    }
    CHECK(theorem_rhs(1e-3, 0.5, 100, cfg) <= theorem_rhs(2e-3, 0.5, 100, cfg));
    CHECK(theorem_rhs(1e-3, 0.5, 100, cfg) <= theorem_rhs(1e-3, 0.7, 100, cfg));
    CHECK_THROWS_AS(theorem_rhs(0.0, 1.0, 2, cfg), ParameterError);
    cfg.C = -1.0;
    CHECK_THROWS_AS(theorem_rhs(0.0, 1.0, 10, cfg), ParameterError);
}

TEST_CASE("size condition on N") {
    BoundConfig cfg;
    CHECK(n_condition(0.0, 0.0, 10, cfg));
    for (std::size_t n : {3u, 100u, 100000u}) CHECK(!n_condition(1.0, 0.0, n, cfg));
    const double f0 = 1e-3, t = 0.5;
    const auto flip = n_condition_threshold(f0, t, cfg);
    REQUIRE(flip);
    CHECK(!n_condition(f0, t, *flip - 1, cfg));
    CHECK(n_condition(f0, t, *flip, cfg));
    bool seen = false;
    for (std::size_t n = 8; n < 100 * *flip; n += std::max<std::size_t>(1, n / 50)) {
        const bool now = n_condition(f0, t, n, cfg);
        CHECK((!seen || now));
        seen = seen || now;
    }
    CHECK(!n_condition_threshold(0.5, 1.0, cfg).has_value());
}

TEST_CASE("commutator estimate right-hand side") {
    const Domain d{8.0, 128};
    const GridField b = polynomial_bump(d, 1.0);
    const VortexState s = sample_from_density(b, 64, 2);
    const EpsilonSchedule e = epsilon_schedule(0.05, 64);
    BoundConfig cfg;
    CHECK(prop_key_rhs(s, b, e, {0.0, 0.0}, 0.3, cfg) == 0.0);
    const double a = prop_key_rhs(s, b, e, {1.0, 0.5}, 0.01, cfg);
    const double c = prop_key_rhs(s, b, e, {1.0, 0.5}, -0.02, cfg);
    CHECK(c > a);
    cfg.p = 4.0;
    CHECK(prop_key_rhs(s, b, e, {1.0, 0.5}, 0.01, cfg) > 0.0);
    CHECK_THROWS_AS(prop_key_rhs(s, b, {0.1, 0.05, 0.2}, {1.0, 1.0}, 0.0, cfg), ParameterError);
}

TEST_CASE("commutator estimate with a stable fitted constant") {
    const Domain d{8.0, 256};
    const GridField b = polynomial_bump(d, 1.0);
    const VectorField u = biot_savart(b);
    const VelocityNorms norms{log_lipschitz_seminorm(u), u.sup_norm()};
    const BoundConfig cfg;
    const std::size_t n = 128;
    std::vector<double> lhs[2], rhs[2];
    for (int set = 0; set < 2; ++set)
        for (std::uint64_t k = 0; k < 10; ++k) {
            const VortexState s = sample_from_density(b, n, 40 + 10 * set + k);
            const double f = f_n_avg(s, b).f_avg;
            lhs[set].push_back(std::abs(energy_derivative_rhs(s, b)));
            rhs[set].push_back(prop_key_rhs(s, b, epsilon_schedule(std::abs(f), n), norms, f, cfg));
        }
    const ConstantFit fit = fit_constant(lhs[0], rhs[0], lhs[1], rhs[1]);
    MESSAGE("commutator constant ", fit.calibration, " / ", fit.validation);
    CHECK(fit.stable);
}

TEST_CASE("corollary right-hand side") {
    BoundConfig cfg;
    cfg.C_s = 0.7;
    const double n = 4096;
    CHECK(corollary_rhs(0.0, 0.0, 4096, -2.0, cfg) ==
          doctest::Approx(0.7 * (std::sqrt(std::log(n)) + 1.0) / std::sqrt(n)).epsilon(1e-14));
    CHECK(corollary_rhs(0.0, 0.0, std::size_t{1} << 50, -2.0, cfg) < 1e-6);
    CHECK_THROWS_AS(corollary_rhs(0.0, 1.0, 100, -1.0, cfg), ParameterError);
}

TEST_CASE("constant fitting") {
    const ConstantFit f = fit_constant({1, 2}, {1, 1}, {3, 1}, {2, 2});
    CHECK(f.calibration == 2.0);
    CHECK(f.validation == 1.5);
    CHECK(f.spread == doctest::Approx(4.0 / 3.0));
    CHECK(f.stable);
    CHECK(!fit_constant({1}, {1}, {10}, {1}).stable);
    CHECK(fit_constant({0}, {1}, {0}, {1}).stable);
    CHECK_THROWS_AS(fit_constant({1}, {0}, {1}, {1}), ParameterError);
    CHECK_THROWS_AS(fit_constant({}, {}, {1}, {1}), ParameterError);

    BoundConfig cfg;
    const std::vector<double> times{0.0, 0.5, 1.0};
    cfg.C = 0.3;
    std::vector<double> values;
    for (double t : times) values.push_back(theorem_rhs(1e-3, t, 1000, cfg));
    const auto c = fit_theorem_constant(times, values, 1e-3, 1000, cfg);
    REQUIRE(c);
    CHECK(*c == doctest::Approx(0.3).epsilon(1e-8));
    CHECK(!fit_theorem_constant({1.0}, {2.0}, 1e-3, 1000, cfg));
}

TEST_CASE("bound report serializes inputs and results") {
    BoundConfig cfg;
    const BoundReport r = bound_report(1e-3, 0.5, 1024, -2.0, cfg);
    const auto j = r.to_json();
    CHECK(j["K"].get<double>() == 2.0);
    CHECK(j["theorem_rhs"].get<double>() == r.theorem);
    CHECK(j["inputs"]["config"]["p"].get<std::string>() == "inf");
    CHECK(j["n_condition"].get<bool>() == n_condition(1e-3, 0.5, 1024, cfg));
}
