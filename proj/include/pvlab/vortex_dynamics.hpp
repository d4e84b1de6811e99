#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "pvlab/point.hpp"

namespace pvlab {

// N point vortices of equal intensity 1/N.
struct VortexState {
    std::vector<Point2> positions;
    double t = 0.0;

    std::size_t n() const noexcept { return positions.size(); }
};

enum class Method { rk4, rk45 };

struct IntegratorSpec {
    Method method = Method::rk45;
    double dt = 1e-3;    // fixed step for rk4, initial guess for rk45
    double tol = 1e-10;  // rk45 local error tolerance (absolute and relative)
    double t_end = 0.0;
};

// Pairs closer than this are treated as a collision.
inline constexpr double kCollisionDistance = 1e-12;
// Adaptive steps below this raise StiffnessError.
inline constexpr double kMinAdaptiveStep = 1e-12;

struct StepStats {
    std::size_t accepted = 0;
    std::size_t rejected = 0;
    std::size_t rhs_evaluations = 0;
    // Accepted steps where dt * max speed exceeded a tenth of the minimal separation.
    std::size_t sanity_violations = 0;
    double min_distance_seen = std::numeric_limits<double>::infinity();
};

// Velocity of vortex i (0-based) induced by all the others.
Point2 velocity_at(const VortexState& state, std::size_t i);

// Velocities of all vortices; returns the minimal pairwise distance met in the sweep.
double velocities(const std::vector<Point2>& positions, std::vector<Point2>& out);

// Integrates from state.t to spec.t_end (which may lie in the past).
VortexState step(const VortexState& state, const IntegratorSpec& spec, StepStats* stats = nullptr);

double hamiltonian(const VortexState& state);

struct CenterInertia {
    Point2 center;
    double inertia = 0.0;
};
CenterInertia center_and_inertia(const VortexState& state);

double min_pairwise_distance(const VortexState& state);

// Time-independent lower bound on pairwise distances derived from conservation of
// the energy and the moment of inertia. The log form avoids underflow for large N.
double log_min_distance_floor(const VortexState& state0);
double min_distance_floor(const VortexState& state0);

struct Observer {
    std::string name;
    std::function<double(const VortexState&)> fn;
};

// H, M1, M2, I, min_dist.
std::vector<Observer> default_observers();

struct Trace {
    std::vector<std::string> observer_names;
    std::vector<double> times;
    std::vector<std::vector<Point2>> positions;
    std::vector<std::vector<double>> values;  // one row per sample, one column per observer

    std::size_t size() const noexcept { return times.size(); }
    VortexState state(std::size_t k) const { return {positions.at(k), times.at(k)}; }
    // Columns: t, x1_0, x2_0, ..., then one column per observer.
    void write_csv(std::ostream& os) const;
};

std::vector<double> uniform_times(double t0, double t1, std::size_t count);

Trace simulate(const VortexState& state0, const IntegratorSpec& spec, const std::vector<double>& sample_times,
               const std::vector<Observer>& observers = default_observers(), StepStats* stats = nullptr);

void validate_state(const VortexState& state);

}  // namespace pvlab
