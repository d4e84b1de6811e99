#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pvlab/grid.hpp"
#include "pvlab/kernel.hpp"
#include "pvlab/vortex_dynamics.hpp"

namespace pvlab {

// M(x) = ln ln(1/x) on (0, 1/e], the Osgood primitive of r ln(1/r).
double osgood_M(double x);
double osgood_M_inv(double y);

struct Envelope {
    double value = 0.0;
    bool saturated = false;  // left (0, 1/e]
};

// c^(exp(-gamma t)), the solution of f' = gamma f ln(1/f) from f(0) = c.
Envelope osgood_envelope(double c, double gamma, double t);

struct EpsilonSchedule {
    double eps1 = 0.0, eps2 = 0.0, eps3 = 0.0;
    bool admissible() const noexcept { return 0.0 < 2.0 * eps1 && 2.0 * eps1 < eps2 && eps2 < eps3; }
};

// eps3 = clamp(fbar, ln n / n, 1/e), eps2 = eps3^2, eps1 = eps3^3.
EpsilonSchedule epsilon_schedule(double fbar, std::size_t n);

struct BoundConfig {
    double C = 1.0;
    double p = kInfinity;
    double omega_inf = 1.0;
    double omega_p = 1.0;
    double C_p = 1.0;
    double C_inf = 1.0;
    double C_s = 1.0;

    void validate() const;
    // C (|omega|^1/2 + |omega|^3/2)
    double growth_rate() const;
    nlohmann::json to_json() const;
};

double theorem_rhs(double f0, double t, std::size_t n, const BoundConfig& cfg);
bool n_condition(double f0, double t, std::size_t n, const BoundConfig& cfg);
// Smallest n >= 8 at which the size condition holds; nullopt if none below n_max.
std::optional<std::size_t> n_condition_threshold(double f0, double t, const BoundConfig& cfg,
                                                 std::size_t n_max = std::size_t{1} << 40);

struct VelocityNorms {
    double log_lipschitz = 0.0;
    double sup = 0.0;
};

// Right side of the commutator estimate at the given schedule, without its leading
// constant. f_avg is the averaged modulated energy; the density norms come from field.
double prop_key_rhs(const VortexState& state, const GridField& field, const EpsilonSchedule& sched,
                    const VelocityNorms& v, double f_avg, const BoundConfig& cfg);

double corollary_rhs(double f0, double T, std::size_t n, double s, const BoundConfig& cfg);

// Calibration/validation fit of an unknown constant in lhs <= C rhs.
struct ConstantFit {
    double calibration = 0.0;  // max lhs/rhs over the calibration set
    double validation = 0.0;   // same over the validation set
    double spread = 1.0;       // max/min of the two
    bool stable = false;       // spread <= the allowed factor
    nlohmann::json to_json() const;
};

ConstantFit fit_constant(const std::vector<double>& lhs_calibration, const std::vector<double>& rhs_calibration,
                         const std::vector<double>& lhs_validation, const std::vector<double>& rhs_validation,
                         double allowed_spread = 3.0);

// Smallest C (by bisection) with measured[k] <= theorem_rhs(f0, times[k], n) for all k, where
// measured holds |F(t)|; nullopt when no C in [1e-12, 1e12] works.
std::optional<double> fit_theorem_constant(const std::vector<double>& times, const std::vector<double>& measured,
                                           double f0, std::size_t n, BoundConfig cfg);

struct BoundReport {
    BoundConfig config;
    double f0 = 0.0;
    double t = 0.0;
    std::size_t n = 0;
    double s = -2.0;
    double growth_rate = 0.0;
    double theorem = 0.0;
    double corollary = 0.0;
    bool size_condition = false;
    std::map<std::string, double> fitted;
    nlohmann::json to_json() const;
};

BoundReport bound_report(double f0, double t, std::size_t n, double s, const BoundConfig& cfg);

}  // namespace pvlab
