#include "pvlab/euler_field.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <random>

#include "pvlab/errors.hpp"
#include "pvlab/kernel.hpp"
#include "pvlab/quadrature.hpp"

namespace pvlab {

namespace {

// Antiderivative of sqrt(R^2 - x^2) on [-R, R].
double half_chord_primitive(double x, double R) {
    const double c = std::clamp(x / R, -1.0, 1.0);
    return 0.5 * (x * std::sqrt(std::max(R * R - x * x, 0.0)) + R * R * std::asin(c));
}

// Exact area of B(0, R) intersected with [x0, x1] x [y0, y1].
double disk_rect_area(double R, double x0, double x1, double y0, double y1) {
    x0 = std::max(x0, -R);
    x1 = std::min(x1, R);
    if (x0 >= x1) return 0.0;
    // Breakpoints where the chord ends cross the rectangle's horizontal edges.
    std::vector<double> cuts{x0, x1};
    for (double y : {y0, y1})
        if (std::abs(y) < R) {
            const double c = std::sqrt(R * R - y * y);
            for (double x : {-c, c})
                if (x > x0 && x < x1) cuts.push_back(x);
        }
    std::sort(cuts.begin(), cuts.end());
    double area = 0.0;
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
        const double a = cuts[k], b = cuts[k + 1];
        if (b <= a) continue;
        const double xm = 0.5 * (a + b);
        const double s = std::sqrt(R * R - xm * xm);
        const double chord = half_chord_primitive(b, R) - half_chord_primitive(a, R);
        // Upper end min(y1, s) minus lower end max(y0, -s); each branch is fixed on the piece.
        const double upper = y1 < s ? y1 * (b - a) : chord;
        const double lower = y0 > -s ? y0 * (b - a) : -chord;
        if (std::min(y1, s) > std::max(y0, -s)) area += upper - lower;
    }
    return std::max(area, 0.0);
}

}  // namespace

GridField uniform_disk(const Domain& domain, double R, Point2 center) {
    if (!(R > 0.0)) throw ParameterError("disk radius must be positive");
    const double h = domain.spacing();
    GridField f(domain);
    for (std::int64_t iy = 0; iy < domain.m; ++iy)
        for (std::int64_t ix = 0; ix < domain.m; ++ix) {
            const Point2 c = domain.node(ix, iy) - center;
            f.at(ix, iy) = disk_rect_area(R, c.x1 - 0.5 * h, c.x1 + 0.5 * h, c.x2 - 0.5 * h, c.x2 + 0.5 * h) / (h * h);
        }
    f.normalize_mass();
    return f;
}

GridField mollified_disk(const Domain& domain, double R, double epsilon, Point2 center) {
    const GridField sharp = uniform_disk(domain, R, center);
    VectorField v(domain);
    v.u1 = sharp.values();
    const VectorField smooth = mollify_field(v, {epsilon});
    GridField f(domain, smooth.u1);
    f.normalize_mass();
    return f;
}

GridField polynomial_bump(const Domain& domain, double R, int power, Point2 center) {
    return bump_mixture(domain, {{center, R, 1.0, power}});
}

GridField bump_mixture(const Domain& domain, const std::vector<BumpSpec>& bumps) {
    if (bumps.empty()) throw ParameterError("need at least one bump");
    for (const auto& b : bumps)
        if (!(b.radius > 0.0) || b.power < 1) throw ParameterError("invalid bump parameters");
    GridField f = GridField::from_function(domain, [&](Point2 x) {
        double v = 0.0;
        for (const auto& b : bumps) {
            const double s = norm2(x - b.center) / (b.radius * b.radius);
            if (s < 1.0) v += b.weight * std::pow(1.0 - s, b.power) * (b.power + 1) / (kPi * b.radius * b.radius);
        }
        return v;
    });
    f.normalize_mass();
    return f;
}

VectorField biot_savart(const GridField& field) {
    FreeSpaceSolver solver(field.domain());
    std::vector<double> d1, d2;
    solver.solve(field.values(), nullptr, &d1, &d2);
    VectorField u(field.domain());
    for (std::size_t k = 0; k < d1.size(); ++k) {
        u.u1[k] = -d2[k];
        u.u2[k] = d1[k];
    }
    return u;
}

double velocity_divergence_sup(const GridField& field) {
    FreeSpaceSolver solver(field.domain());
    std::vector<double> div;
    solver.solve(field.values(), nullptr, nullptr, nullptr, &div);
    double s = 0.0;
    for (double v : div) s = std::max(s, std::abs(v));
    return s;
}

EulerStepper::EulerStepper(const Domain& domain, double cfl_limit)
    : domain_(domain), cfl_limit_(cfl_limit), solver_(domain), deriv_(domain) {}

void EulerStepper::rhs(const std::vector<double>& omega, std::vector<double>& out, double* umax) {
    solver_.solve(omega, nullptr, &d1_, &d2_);
    f1_.resize(omega.size());
    f2_.resize(omega.size());
    double s = 0.0;
    for (std::size_t k = 0; k < omega.size(); ++k) {
        const double u1 = -d2_[k];
        const double u2 = d1_[k];
        s = std::max(s, u1 * u1 + u2 * u2);
        f1_[k] = u1 * omega[k];
        f2_[k] = u2 * omega[k];
    }
    if (umax) *umax = std::sqrt(s);
    deriv_.negative_divergence(f1_, f2_, out);
}

double EulerStepper::max_speed(const GridField& field) { return velocity(field).sup_norm(); }

VectorField EulerStepper::velocity(const GridField& field) {
    solver_.solve(field.values(), nullptr, &d1_, &d2_);
    VectorField u(domain_);
    for (std::size_t k = 0; k < d1_.size(); ++k) {
        u.u1[k] = -d2_[k];
        u.u2[k] = d1_[k];
    }
    return u;
}

GridField EulerStepper::step(const GridField& field, double dt) {
    if (!(field.domain() == domain_)) throw ParameterError("field domain does not match the stepper");
    if (!std::isfinite(dt)) throw ParameterError("non-finite time step");
    const std::vector<double>& w0 = field.values();
    const std::size_t n = w0.size();
    std::vector<double> k1, k2, k3, k4, tmp(n);
    double umax = 0.0;
    rhs(w0, k1, &umax);
    const double courant = std::abs(dt) * umax * static_cast<double>(domain_.m) / domain_.extent;
    if (courant > cfl_limit_) throw CflError("time step violates the CFL limit");
    for (std::size_t k = 0; k < n; ++k) tmp[k] = w0[k] + 0.5 * dt * k1[k];
    rhs(tmp, k2, nullptr);
    for (std::size_t k = 0; k < n; ++k) tmp[k] = w0[k] + 0.5 * dt * k2[k];
    rhs(tmp, k3, nullptr);
    for (std::size_t k = 0; k < n; ++k) tmp[k] = w0[k] + dt * k3[k];
    rhs(tmp, k4, nullptr);
    std::vector<double> w1(n);
    for (std::size_t k = 0; k < n; ++k) w1[k] = w0[k] + dt / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]);
    return GridField(domain_, std::move(w1), field.t() + dt);
}

GridField EulerStepper::advance(const GridField& field, double t_end, double cfl_target) {
    const double span = t_end - field.t();
    if (span == 0.0) return field;
    const double umax = max_speed(field);
    const double per_unit = umax * static_cast<double>(domain_.m) / domain_.extent;
    const auto nsteps = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(std::abs(span) * per_unit / cfl_target)));
    const double dt = span / static_cast<double>(nsteps);
    GridField f = field;
    for (std::size_t s = 0; s < nsteps; ++s) f = step(f, dt);
    f.set_t(t_end);
    return f;
}

GridField euler_step(const GridField& field, double dt) { return EulerStepper(field.domain()).step(field, dt); }

namespace {

void check_trusted(const Domain& d, const std::vector<Point2>& pts) {
    const double r = d.trusted_radius() * (1.0 + 1e-12);
    for (const auto& p : pts)
        if (!is_finite(p) || norm(p) > r) throw DomainError("evaluation point outside the trusted disk B(0, L/4)");
}

}  // namespace

PointValues potential_at_points(const GridField& field, const std::vector<Point2>& points) {
    check_trusted(field.domain(), points);
    PointPotentials pp = cell_convolution_at(field.domain(), field.values(), points, true, true);
    return {std::move(pp.potential), std::move(pp.gradient)};
}

double coulomb_energy(const GridField& field) {
    const Domain& d = field.domain();
    RefinedCellConvolution conv(d, 1);
    std::vector<double> psi;
    conv.potential(field.values(), psi);
    const auto m = static_cast<std::size_t>(d.m);
    const std::size_t n = conv.size();
    const double h2 = d.spacing() * d.spacing();
    // The cell average of psi differs from its centre value by (h^2/24) Lap psi = -(h^2/24) omega.
    double s = 0.0;
    for (std::size_t iy = 0; iy < m; ++iy)
        for (std::size_t ix = 0; ix < m; ++ix) {
            const double w = field.values()[iy * m + ix];
            if (w == 0.0) continue;
            s += w * (psi[iy * n + ix] - h2 * w / 24.0);
        }
    return s * h2;
}

double log_moment(const GridField& field) {
    const Domain& d = field.domain();
    double s = 0.0;
    for (std::int64_t iy = 0; iy < d.m; ++iy)
        for (std::int64_t ix = 0; ix < d.m; ++ix) {
            const double w = field.at(ix, iy);
            if (w != 0.0) s += w * 0.5 * std::log1p(norm2(d.node(ix, iy)));
        }
    return s * d.spacing() * d.spacing();
}

FieldDiagnostics diagnose(const GridField& field) {
    return {field.t(), field.mass(), field.l2_norm(), field.sup_norm(), coulomb_energy(field), log_moment(field)};
}

void write_diagnostics_csv(std::ostream& os, const std::vector<FieldDiagnostics>& rows) {
    os << "t,mass,l2,linf,coulomb_energy,log_moment\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.t, r.mass, r.l2, r.linf,
                      r.coulomb_energy, r.log_moment);
        os << buf;
    }
}

HolderReport tracer_holder_diagnostic(const GridField& field0, Point2 x, Point2 y, double T,
                                      const HolderOptions& options) {
    if (!(T >= 0.0)) throw ParameterError("final time must be nonnegative");
    const Domain& d = field0.domain();
    EulerStepper stepper(d);
    const double umax = stepper.max_speed(field0);
    const double per_unit = umax * static_cast<double>(d.m) / d.extent;
    const auto nsteps = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(T * per_unit / options.cfl_target)));
    const double dt = T / static_cast<double>(nsteps);

    auto tracer_velocity = [&](const GridField& f, const std::vector<Point2>& pts) {
        const PointValues pv = potential_at_points(f, pts);
        std::vector<Point2> u(pts.size());
        for (std::size_t k = 0; k < pts.size(); ++k) u[k] = perp(pv.gradient[k]);
        return u;
    };
    auto ll_of = [&](const GridField& f) { return log_lipschitz_seminorm(stepper.velocity(f), options.ll_pairs, options.seed); };

    HolderReport rep;
    rep.constant = options.constant;
    const double d0 = norm(x - y);
    std::vector<Point2> pts{x, y};
    GridField f = field0;
    double lam = 0.0;
    double ll_prev = ll_of(f);
    auto record = [&](double t) {
        rep.times.push_back(t);
        const double sep = norm(pts[0] - pts[1]);
        rep.separation.push_back(sep);
        rep.ll_integral.push_back(lam);
        const double unit = d0 > 0.0 ? std::exp(1.0 - std::exp(lam)) * std::pow(d0, std::exp(-lam)) : 0.0;
        rep.bound.push_back(options.constant * unit);
        if (unit > 0.0) rep.fitted_constant = std::max(rep.fitted_constant, sep / unit);
    };
    record(0.0);
    for (std::size_t s = 0; s < nsteps; ++s) {
        const std::vector<Point2> u0 = tracer_velocity(f, pts);
        std::vector<Point2> pred(pts.size());
        for (std::size_t k = 0; k < pts.size(); ++k) pred[k] = pts[k] + dt * u0[k];
        GridField f1 = stepper.step(f, dt);
        const std::vector<Point2> u1 = tracer_velocity(f1, pred);
        for (std::size_t k = 0; k < pts.size(); ++k) pts[k] += 0.5 * dt * (u0[k] + u1[k]);
        const double ll_next = ll_of(f1);
        lam += 0.5 * dt * (ll_prev + ll_next);
        ll_prev = ll_next;
        f = std::move(f1);
        record(static_cast<double>(s + 1) * dt);
    }
    rep.precondition_met = d0 <= std::exp(1.0 - lam);
    return rep;
}

namespace {

double time_integral(const std::vector<double>& ts, const std::vector<double>& vals) {
    const std::size_t n = ts.size();
    if (n < 2) return 0.0;
    const double dt = (ts.back() - ts.front()) / static_cast<double>(n - 1);
    for (std::size_t k = 1; k < n; ++k)
        if (std::abs((ts[k] - ts[k - 1]) - dt) > 1e-9 * std::max(1.0, std::abs(dt)))
            throw ParameterError("weak-form residual needs uniformly spaced samples");
    double s = 0.0;
    if (n % 2 == 1 && n >= 3) {
        for (std::size_t k = 0; k < n; ++k) {
            const double w = (k == 0 || k == n - 1) ? 1.0 : (k % 2 ? 4.0 : 2.0);
            s += w * vals[k];
        }
        return s * dt / 3.0;
    }
    for (std::size_t k = 0; k < n; ++k) s += ((k == 0 || k == n - 1) ? 0.5 : 1.0) * vals[k];
    return s * dt;
}

}  // namespace

double weak_form_residual(const std::vector<GridField>& trajectory, const TestFunction& phi) {
    if (trajectory.size() < 2) throw ParameterError("trajectory needs at least two samples");
    const Domain& d = trajectory.front().domain();
    if (phi.support_radius > d.trusted_radius()) throw DomainError("test function support leaves the trusted disk");
    const double h2 = d.spacing() * d.spacing();
    std::vector<double> ts, a, b;
    FreeSpaceSolver solver(d);
    std::vector<double> d1, d2;
    for (const GridField& f : trajectory) {
        const double t = f.t();
        solver.solve(f.values(), nullptr, &d1, &d2);
        double sa = 0.0, sb = 0.0;
        for (std::int64_t iy = 0; iy < d.m; ++iy)
            for (std::int64_t ix = 0; ix < d.m; ++ix) {
                const std::size_t k = static_cast<std::size_t>(iy * d.m + ix);
                const double w = f.values()[k];
                if (w == 0.0) continue;
                const Point2 p = d.node(ix, iy);
                const Point2 u{-d2[k], d1[k]};
                sa += w * phi.value(t, p);
                sb += w * (phi.time_derivative(t, p) + dot(u, phi.gradient(t, p)));
            }
        ts.push_back(t);
        a.push_back(sa * h2);
        b.push_back(sb * h2);
    }
    return a.back() - a.front() - time_integral(ts, b);
}

double weak_form_residual(const Trace& trajectory, const TestFunction& phi, double trusted_radius) {
    if (trajectory.size() < 2) throw ParameterError("trajectory needs at least two samples");
    if (phi.support_radius > trusted_radius) throw DomainError("test function support leaves the trusted disk");
    std::vector<double> a, b;
    for (std::size_t k = 0; k < trajectory.size(); ++k) {
        const double t = trajectory.times[k];
        const auto& x = trajectory.positions[k];
        const std::size_t n = x.size();
        const double inv_n = 1.0 / static_cast<double>(n);
        double sa = 0.0, sdt = 0.0;
        std::vector<Point2> grads(n);
        for (std::size_t i = 0; i < n; ++i) {
            sa += phi.value(t, x[i]);
            sdt += phi.time_derivative(t, x[i]);
            grads[i] = phi.gradient(t, x[i]);
        }
        // Symmetrized interaction term, diagonal excluded.
        double sn = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                if (i == j) continue;
                sn += dot(grad_perp_g(x[i] - x[j]), grads[i] - grads[j]);
            }
        a.push_back(sa * inv_n);
        b.push_back(sdt * inv_n + 0.5 * sn * inv_n * inv_n);
    }
    return a.back() - a.front() - time_integral(trajectory.times, b);
}

VortexState sample_from_density(const GridField& field, std::size_t n, std::uint64_t seed) {
    const Domain& d = field.domain();
    double wmax = 0.0;
    std::int64_t lo_x = d.m, hi_x = -1, lo_y = d.m, hi_y = -1;
    for (std::int64_t iy = 0; iy < d.m; ++iy)
        for (std::int64_t ix = 0; ix < d.m; ++ix) {
            const double w = field.at(ix, iy);
            if (!std::isfinite(w) || w < 0.0) throw SamplingError("density must be finite and nonnegative");
            if (w > 0.0) {
                wmax = std::max(wmax, w);
                lo_x = std::min(lo_x, ix);
                hi_x = std::max(hi_x, ix);
                lo_y = std::min(lo_y, iy);
                hi_y = std::max(hi_y, iy);
            }
        }
    if (!(wmax > 0.0)) throw SamplingError("cannot sample from a zero density");
    const double h = d.spacing();
    const double x0 = d.coord(lo_x) - 0.5 * h, x1 = d.coord(hi_x) + 0.5 * h;
    const double y0 = d.coord(lo_y) - 0.5 * h, y1 = d.coord(hi_y) + 0.5 * h;
    std::mt19937_64 rng(seed);
    auto unit = [&rng] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
    VortexState s;
    s.positions.reserve(n);
    while (s.positions.size() < n) {
        const Point2 p{x0 + (x1 - x0) * unit(), y0 + (y1 - y0) * unit()};
        const double accept = unit();
        auto ix = static_cast<std::int64_t>(std::floor((p.x1 - d.coord(0)) / h + 0.5));
        auto iy = static_cast<std::int64_t>(std::floor((p.x2 - d.coord(0)) / h + 0.5));
        ix = std::clamp<std::int64_t>(ix, lo_x, hi_x);
        iy = std::clamp<std::int64_t>(iy, lo_y, hi_y);
        if (accept * wmax < field.at(ix, iy)) s.positions.push_back(p);
    }
    return s;
}

}  // namespace pvlab
