#include "pvlab/vortex_dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

#include "pvlab/errors.hpp"
#include "pvlab/kernel.hpp"

namespace pvlab {

namespace {

// Neumaier accumulator.
struct Accum {
    double s = 0.0;
    double c = 0.0;
    void add(double v) noexcept {
        const double t = s + v;
        c += std::abs(s) >= std::abs(v) ? (s - t) + v : (v - t) + s;
        s = t;
    }
    double value() const noexcept { return s + c; }
};

void check_collision(double min_r2) {
    if (min_r2 < kCollisionDistance * kCollisionDistance)
        throw CollisionError("vortex separation fell below the collision threshold");
}

}  // namespace

void validate_state(const VortexState& state) {
    if (state.positions.empty()) throw ParameterError("a vortex state needs at least one vortex");
    for (const auto& p : state.positions)
        if (!is_finite(p)) throw ParameterError("non-finite vortex position");
    if (!std::isfinite(state.t)) throw ParameterError("non-finite state time");
}

Point2 velocity_at(const VortexState& state, std::size_t i) {
    const std::size_t n = state.n();
    if (i >= n) throw ParameterError("vortex index out of range");
    const Point2 xi = state.positions[i];
    Accum a1, a2;
    double min_r2 = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const double dx = xi.x1 - state.positions[j].x1;
        const double dy = xi.x2 - state.positions[j].x2;
        const double r2 = dx * dx + dy * dy;
        min_r2 = std::min(min_r2, r2);
        a1.add(dy / r2);
        a2.add(-dx / r2);
    }
    check_collision(min_r2);
    const double s = kInvTwoPi / static_cast<double>(n);
    return {s * a1.value(), s * a2.value()};
}

double velocities(const std::vector<Point2>& pos, std::vector<Point2>& out) {
    const std::size_t n = pos.size();
    out.assign(n, Point2{});
    double min_r2 = std::numeric_limits<double>::infinity();
    const double s = kInvTwoPi / static_cast<double>(n);
    // Each pair is visited once and its contribution applied to both ends.
    for (std::size_t i = 0; i < n; ++i) {
        const Point2 xi = pos[i];
        double s1 = 0.0, s2 = 0.0, local_min = min_r2;
        for (std::size_t j = i + 1; j < n; ++j) {
            const double dx = xi.x1 - pos[j].x1;
            const double dy = xi.x2 - pos[j].x2;
            const double r2 = dx * dx + dy * dy;
            local_min = std::min(local_min, r2);
            const double inv = 1.0 / r2;
            s1 += dy * inv;
            s2 -= dx * inv;
            out[j].x1 -= dy * inv;
            out[j].x2 += dx * inv;
        }
        min_r2 = local_min;
        out[i].x1 += s1;
        out[i].x2 += s2;
    }
    check_collision(min_r2);
    for (auto& v : out) v = s * v;
    return n > 1 ? std::sqrt(min_r2) : std::numeric_limits<double>::infinity();
}

namespace {

double max_speed(const std::vector<Point2>& v) {
    double s = 0.0;
    for (const auto& p : v) s = std::max(s, norm(p));
    return s;
}

void axpy(std::vector<Point2>& out, const std::vector<Point2>& y, double h,
          std::initializer_list<std::pair<double, const std::vector<Point2>*>> terms) {
    const std::size_t n = y.size();
    out.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        Point2 acc{};
        for (const auto& [c, k] : terms)
            if (c != 0.0) acc += c * (*k)[i];
        out[i] = y[i] + h * acc;
    }
}

void note_sanity(StepStats* stats, double h, double speed, double dmin) {
    if (!stats) return;
    ++stats->accepted;
    if (std::abs(h) * speed >= 0.1 * dmin) ++stats->sanity_violations;
    stats->min_distance_seen = std::min(stats->min_distance_seen, dmin);
}

VortexState run_rk4(const VortexState& s0, const IntegratorSpec& spec, StepStats* stats) {
    if (!(spec.dt > 0.0)) throw ParameterError("rk4 needs dt > 0");
    const double span = spec.t_end - s0.t;
    const auto nsteps = static_cast<std::size_t>(std::ceil(std::abs(span) / spec.dt - 1e-12));
    VortexState s = s0;
    if (nsteps == 0) return s;
    const double h = span / static_cast<double>(nsteps);
    std::vector<Point2> k1, k2, k3, k4, tmp;
    for (std::size_t it = 0; it < nsteps; ++it) {
        const double dmin = velocities(s.positions, k1);
        axpy(tmp, s.positions, 0.5 * h, {{1.0, &k1}});
        velocities(tmp, k2);
        axpy(tmp, s.positions, 0.5 * h, {{1.0, &k2}});
        velocities(tmp, k3);
        axpy(tmp, s.positions, h, {{1.0, &k3}});
        velocities(tmp, k4);
        axpy(s.positions, s.positions, h / 6.0, {{1.0, &k1}, {2.0, &k2}, {2.0, &k3}, {1.0, &k4}});
        s.t = s0.t + static_cast<double>(it + 1) * h;
        if (stats) stats->rhs_evaluations += 4;
        note_sanity(stats, h, max_speed(k1), dmin);
    }
    s.t = spec.t_end;
    return s;
}

// Dormand-Prince 5(4) tableau.
constexpr double a21 = 1.0 / 5.0;
constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0, a53 = 64448.0 / 6561.0, a54 = -212.0 / 729.0;
constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0, a63 = 46732.0 / 5247.0, a64 = 49.0 / 176.0,
                 a65 = -5103.0 / 18656.0;
constexpr double b1 = 35.0 / 384.0, b3 = 500.0 / 1113.0, b4 = 125.0 / 192.0, b5 = -2187.0 / 6784.0, b6 = 11.0 / 84.0;
constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0, e4 = 71.0 / 1920.0, e5 = -17253.0 / 339200.0,
                 e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;

VortexState run_rk45(const VortexState& s0, const IntegratorSpec& spec, StepStats* stats) {
    if (!(spec.tol > 0.0)) throw ParameterError("rk45 needs tol > 0");
    const double span = spec.t_end - s0.t;
    VortexState s = s0;
    if (span == 0.0) return s;
    const double dir = span > 0.0 ? 1.0 : -1.0;
    double h = dir * std::min(std::abs(spec.dt > 0.0 ? spec.dt : span), std::abs(span));

    std::vector<Point2> k1, k2, k3, k4, k5, k6, k7, tmp, ynew;
    double dmin = velocities(s.positions, k1);
    if (stats) ++stats->rhs_evaluations;
    const std::size_t n = s.n();
    while (dir * (spec.t_end - s.t) > 0.0) {
        const double remaining = spec.t_end - s.t;
        bool last = false;
        if (std::abs(h) >= std::abs(remaining)) {
            h = remaining;
            last = true;
        }
        axpy(tmp, s.positions, h, {{a21, &k1}});
        velocities(tmp, k2);
        axpy(tmp, s.positions, h, {{a31, &k1}, {a32, &k2}});
        velocities(tmp, k3);
        axpy(tmp, s.positions, h, {{a41, &k1}, {a42, &k2}, {a43, &k3}});
        velocities(tmp, k4);
        axpy(tmp, s.positions, h, {{a51, &k1}, {a52, &k2}, {a53, &k3}, {a54, &k4}});
        velocities(tmp, k5);
        axpy(tmp, s.positions, h, {{a61, &k1}, {a62, &k2}, {a63, &k3}, {a64, &k4}, {a65, &k5}});
        velocities(tmp, k6);
        axpy(ynew, s.positions, h, {{b1, &k1}, {b3, &k3}, {b4, &k4}, {b5, &k5}, {b6, &k6}});
        const double dnew = velocities(ynew, k7);
        if (stats) stats->rhs_evaluations += 6;

        double err2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const Point2 e = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
            const double sc1 = spec.tol * (1.0 + std::max(std::abs(s.positions[i].x1), std::abs(ynew[i].x1)));
            const double sc2 = spec.tol * (1.0 + std::max(std::abs(s.positions[i].x2), std::abs(ynew[i].x2)));
            err2 += (e.x1 / sc1) * (e.x1 / sc1) + (e.x2 / sc2) * (e.x2 / sc2);
        }
        const double err = std::sqrt(err2 / static_cast<double>(2 * n));
        if (!std::isfinite(err)) throw NumericError("non-finite error estimate in adaptive step");

        if (err <= 1.0) {
            const double speed = max_speed(k1);
            note_sanity(stats, h, speed, std::min(dmin, dnew));
            s.positions.swap(ynew);
            s.t = last ? spec.t_end : s.t + h;
            k1.swap(k7);
            dmin = dnew;
            const double fac = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
            if (!last) h *= fac;
        } else {
            if (stats) ++stats->rejected;
            h *= std::clamp(0.9 * std::pow(err, -0.25), 0.1, 0.9);
            if (std::abs(h) < kMinAdaptiveStep) throw StiffnessError("adaptive step fell below 1e-12");
        }
    }
    s.t = spec.t_end;
    return s;
}

}  // namespace

VortexState step(const VortexState& state, const IntegratorSpec& spec, StepStats* stats) {
    validate_state(state);
    if (!std::isfinite(spec.t_end)) throw ParameterError("non-finite end time");
    if (state.n() == 1) {
        VortexState s = state;
        s.t = spec.t_end;
        return s;
    }
    return spec.method == Method::rk4 ? run_rk4(state, spec, stats) : run_rk45(state, spec, stats);
}

double hamiltonian(const VortexState& state) {
    const std::size_t n = state.n();
    Accum a;
    double min_r2 = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double r2 = norm2(state.positions[i] - state.positions[j]);
            min_r2 = std::min(min_r2, r2);
            a.add(std::log(r2));
        }
    if (n > 1) check_collision(min_r2);
    // sum_{i<j} g = -(1/4pi) sum ln r^2; H = (1/N^2) sum_{i<j} g.
    const double nn = static_cast<double>(n);
    return -0.25 / kPi * a.value() / (nn * nn);
}

CenterInertia center_and_inertia(const VortexState& state) {
    Accum m1, m2, in;
    for (const auto& p : state.positions) {
        m1.add(p.x1);
        m2.add(p.x2);
        in.add(norm2(p));
    }
    const double nn = static_cast<double>(state.n());
    return {{m1.value() / nn, m2.value() / nn}, in.value() / nn};
}

double min_pairwise_distance(const VortexState& state) {
    double min_r2 = std::numeric_limits<double>::infinity();
    const std::size_t n = state.n();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) min_r2 = std::min(min_r2, norm2(state.positions[i] - state.positions[j]));
    return std::sqrt(min_r2);
}

double log_min_distance_floor(const VortexState& state0) {
    validate_state(state0);
    const std::size_t n = state0.n();
    if (n < 2) return 0.0;
    const double nn = static_cast<double>(n);
    const double pair_energy = hamiltonian(state0) * nn * nn;  // sum over unordered pairs of g
    const double inertia = center_and_inertia(state0).inertia;
    const double pairs = 0.5 * nn * (nn - 1.0);
    // Every pair separation is at most sqrt(2 N I).
    const double far_log = std::max(0.0, 0.5 * std::log(2.0 * nn * inertia));
    const double exponent = -kTwoPi * (pair_energy + pairs / kTwoPi * far_log);
    return std::min(0.0, exponent);
}

double min_distance_floor(const VortexState& state0) { return std::exp(log_min_distance_floor(state0)); }

std::vector<Observer> default_observers() {
    return {
        {"H", [](const VortexState& s) { return hamiltonian(s); }},
        {"M1", [](const VortexState& s) { return center_and_inertia(s).center.x1; }},
        {"M2", [](const VortexState& s) { return center_and_inertia(s).center.x2; }},
        {"I", [](const VortexState& s) { return center_and_inertia(s).inertia; }},
        {"min_dist", [](const VortexState& s) { return min_pairwise_distance(s); }},
    };
}

std::vector<double> uniform_times(double t0, double t1, std::size_t count) {
    if (count < 2) throw ParameterError("need at least two sample times");
    std::vector<double> ts(count);
    for (std::size_t k = 0; k < count; ++k)
        ts[k] = t0 + (t1 - t0) * static_cast<double>(k) / static_cast<double>(count - 1);
    ts.back() = t1;
    return ts;
}

Trace simulate(const VortexState& state0, const IntegratorSpec& spec, const std::vector<double>& sample_times,
               const std::vector<Observer>& observers, StepStats* stats) {
    validate_state(state0);
    Trace tr;
    for (const auto& o : observers) tr.observer_names.push_back(o.name);
    VortexState s = state0;
    for (double t : sample_times) {
        if (!tr.times.empty() && !(t > tr.times.back())) throw ParameterError("sample times must increase strictly");
        IntegratorSpec sp = spec;
        sp.t_end = t;
        s = step(s, sp, stats);
        tr.times.push_back(t);
        tr.positions.push_back(s.positions);
        std::vector<double> row;
        row.reserve(observers.size());
        for (const auto& o : observers) row.push_back(o.fn(s));
        tr.values.push_back(std::move(row));
    }
    return tr;
}

void Trace::write_csv(std::ostream& os) const {
    const std::size_t n = positions.empty() ? 0 : positions.front().size();
    os << "t";
    for (std::size_t i = 0; i < n; ++i) os << ",x1_" << i << ",x2_" << i;
    for (const auto& name : observer_names) os << ',' << name;
    os << '\n';
    char buf[40];
    auto put = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        os << buf;
    };
    for (std::size_t k = 0; k < times.size(); ++k) {
        put(times[k]);
        for (const auto& p : positions[k]) {
            os << ',';
            put(p.x1);
            os << ',';
            put(p.x2);
        }
        for (double v : values[k]) {
            os << ',';
            put(v);
        }
        os << '\n';
    }
}

}  // namespace pvlab
