#include "pvlab/kernel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <vector>

#include "pvlab/errors.hpp"

namespace pvlab {

double coulomb_g(double r) {
    if (!(r > 0.0)) throw DomainError("coulomb_g requires r > 0");
    return -kInvTwoPi * std::log(r);
}

double coulomb_g(const Point2& x) {
    const double r2 = norm2(x);
    if (!(r2 > 0.0)) throw DomainError("coulomb_g evaluated at the origin");
    return -0.25 / kPi * std::log(r2);
}

Point2 grad_g(const Point2& x) {
    const double r2 = norm2(x);
    if (!(r2 > 0.0)) throw CollisionError("gradient of g evaluated at the origin");
    const double s = -kInvTwoPi / r2;
    return {s * x.x1, s * x.x2};
}

Point2 grad_perp_g(const Point2& x) { return perp(grad_g(x)); }

double g_truncated(const Point2& x, double eta) {
    if (!(eta > 0.0)) throw ParameterError("truncation radius must be positive");
    const double r = norm(x);
    return r >= eta ? coulomb_g(r) : g_tilde(eta);
}

Point2 grad_g_truncated(const Point2& x, double eta) {
    if (!(eta > 0.0)) throw ParameterError("truncation radius must be positive");
    if (norm2(x) < eta * eta) return {};
    return grad_g(x);
}

SelfEnergy smeared_self_energy(double eta, int quadrature_nodes) {
    if (!(eta > 0.0)) throw ParameterError("smearing radius must be positive");
    if (quadrature_nodes < 8) throw ParameterError("at least 8 circle nodes are required");

    // Average of ln|x - y| over both circles. For the outer node at angle a the inner
    // integrand is ln|phi| + s(phi) with phi the wrapped angle offset and s smooth;
    // the log part integrates exactly to 2(pi ln pi - pi).
    auto evaluate = [eta](int n) {
        const double dphi = kTwoPi / n;
        const double log_part = 2.0 * (kPi * std::log(kPi) - kPi);
        double outer = 0.0;
        for (int k = 0; k < n; ++k) {
            const double a = k * dphi;
            const Point2 xk{eta * std::cos(a), eta * std::sin(a)};
            // Trapezoid over phi in [-pi, pi]; the endpoints carry half weight.
            double inner = 0.0;
            for (int j = 0; j <= n; ++j) {
                const double phi = -kPi + j * dphi;
                const double w = (j == 0 || j == n) ? 0.5 : 1.0;
                double s;
                if (j == n / 2 && (n % 2 == 0)) {
                    s = std::log(eta);
                } else {
                    const Point2 y{eta * std::cos(a + phi), eta * std::sin(a + phi)};
                    s = 0.5 * std::log(norm2(xk - y)) - std::log(std::abs(phi));
                }
                inner += w * s;
            }
            inner = inner * dphi + log_part;
            outer += inner / kTwoPi;
        }
        const double mean_log = outer / n;
        return -kInvTwoPi * mean_log;
    };

    SelfEnergy out;
    out.value = evaluate(quadrature_nodes);
    // Second-order scheme: Richardson estimate from the half-resolution value.
    const int coarse = std::max(4, quadrature_nodes / 2 - (quadrature_nodes / 2) % 2);
    out.error_estimate = std::abs(out.value - evaluate(coarse)) / 3.0;
    out.accuracy_warning = out.error_estimate > 1e-6;
    return out;
}

double f_eta_alpha(const Point2& x, double eta, double alpha) {
    if (!(eta > 0.0) || !(eta < alpha)) throw ParameterError("f_eta_alpha requires 0 < eta < alpha");
    const double r = norm(x);
    if (r >= alpha) return 0.0;
    if (r >= eta) return -kInvTwoPi * std::log(alpha / r);
    return -kInvTwoPi * std::log(alpha / eta);
}

double f_grad_norm(double eta, double alpha, double p) {
    if (!(eta > 0.0) || !(eta < alpha)) throw ParameterError("f_grad_norm requires 0 < eta < alpha");
    if (!(p >= 1.0)) throw ParameterError("f_grad_norm requires p >= 1");
    if (std::isinf(p)) return kInvTwoPi / eta;
    if (p == 2.0) return std::sqrt(kInvTwoPi * std::log(alpha / eta));
    const double scale = std::pow(kTwoPi, (p - 1.0) / p);
    if (p < 2.0) {
        const double num = std::pow(alpha, 2.0 - p) - std::pow(eta, 2.0 - p);
        return std::pow(num / (2.0 - p), 1.0 / p) / scale;
    }
    const double num = std::pow(eta, 2.0 - p) - std::pow(alpha, 2.0 - p);
    return std::pow(num / (p - 2.0), 1.0 / p) / scale;
}

namespace {

constexpr double kPlateau = 0.25;

// C-infinity step: 1 at s <= 0, 0 at s >= 1.
double smooth_step_down(double s) {
    if (s <= 0.0) return 1.0;
    if (s >= 1.0) return 0.0;
    const double a = std::exp(-1.0 / (1.0 - s));
    const double b = std::exp(-1.0 / s);
    return a / (a + b);
}

double profile_with_radius(double r, double outer) {
    if (r <= kPlateau) return 1.0;
    if (r >= outer) return 0.0;
    return smooth_step_down((r - kPlateau) / (outer - kPlateau));
}

double profile_mass(double outer) {
    // Composite Simpson on the transition annulus.
    constexpr int n = 4000;
    const double a = kPlateau;
    const double h = (outer - a) / n;
    double s = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double r = a + i * h;
        const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        s += w * profile_with_radius(r, outer) * r;
    }
    return kPi * a * a + kTwoPi * s * h / 3.0;
}

double solve_outer_radius() {
    double lo = 0.5;
    double hi = 1.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (profile_mass(mid) < 1.0) lo = mid;
        else hi = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace

double mollifier_outer_radius() {
    static const double outer = solve_outer_radius();
    return outer;
}

double mollifier_profile(double r) { return profile_with_radius(r, mollifier_outer_radius()); }

double mollifier(const Point2& x, double epsilon) {
    if (!(epsilon > 0.0)) throw ParameterError("mollifier scale must be positive");
    return mollifier_profile(norm(x) / epsilon) / (epsilon * epsilon);
}

VectorField mollify_field(const VectorField& v, const MollifierSpec& spec) {
    const double eps = spec.epsilon;
    if (!(eps > 0.0)) throw ParameterError("mollifier scale must be positive");
    const double h = v.domain.spacing();
    if (h > 0.25 * eps) throw ResolutionError("grid spacing exceeds epsilon/4; mollification under-resolved");

    struct Tap {
        std::int64_t dx, dy;
        double w;
    };
    const double reach = mollifier_outer_radius() * eps;
    const auto kmax = static_cast<std::int64_t>(std::ceil(reach / h));
    std::vector<Tap> taps;
    for (std::int64_t b = -kmax; b <= kmax; ++b)
        for (std::int64_t a = -kmax; a <= kmax; ++a) {
            const double w = mollifier_profile(std::hypot(a * h, b * h) / eps);
            if (w > 0.0) taps.push_back({a, b, w});
        }

    const std::int64_t m = v.domain.m;
    VectorField out(v.domain);
    for (std::int64_t iy = 0; iy < m; ++iy)
        for (std::int64_t ix = 0; ix < m; ++ix) {
            double s1 = 0.0, s2 = 0.0, ws = 0.0;
            for (const Tap& t : taps) {
                const std::int64_t jx = ix + t.dx;
                const std::int64_t jy = iy + t.dy;
                if (jx < 0 || jy < 0 || jx >= m || jy >= m) continue;
                const auto k = static_cast<std::size_t>(jy * m + jx);
                s1 += t.w * v.u1[k];
                s2 += t.w * v.u2[k];
                ws += t.w;
            }
            const auto k = static_cast<std::size_t>(iy * m + ix);
            out.u1[k] = s1 / ws;
            out.u2[k] = s2 / ws;
        }
    return out;
}

namespace {

double radical_inverse(std::uint64_t k, std::uint64_t base) {
    double inv = 1.0 / static_cast<double>(base);
    double f = inv;
    double r = 0.0;
    while (k > 0) {
        r += f * static_cast<double>(k % base);
        k /= base;
        f *= inv;
    }
    return r;
}

double unit_from_bits(std::uint64_t x) { return static_cast<double>(x >> 11) * 0x1.0p-53; }

}  // namespace

double log_lipschitz_seminorm(const VectorField& v, std::size_t pair_budget, std::uint64_t seed) {
    if (pair_budget < 10000) throw ParameterError("log-Lipschitz estimate needs a pair budget of at least 1e4");
    const double h = v.domain.spacing();
    const double lo = v.domain.coord(0);
    const double hi = v.domain.coord(v.domain.m - 1);
    const double r_max = std::min(std::exp(-1.0), hi - lo);
    const double r_min = h;
    if (!(r_min < r_max)) throw DomainError("no admissible separations for the log-Lipschitz estimate");

    // Cranley-Patterson shifts of the position and angle coordinates; the separation
    // coordinate is left unshifted so that the first pair probes r = e^-1 exactly.
    std::mt19937_64 rng(seed);
    const std::array<double, 3> shift{unit_from_bits(rng()), unit_from_bits(rng()), unit_from_bits(rng())};
    const double log_ratio = std::log(r_min / r_max);

    double best = 0.0;
    std::size_t used = 0;
    for (std::size_t k = 0; k < pair_budget; ++k) {
        const auto idx = static_cast<std::uint64_t>(k);
        const double a = std::fmod(radical_inverse(idx, 2) + shift[0], 1.0);
        const double b = std::fmod(radical_inverse(idx, 3) + shift[1], 1.0);
        const double c = std::fmod(radical_inverse(idx, 5) + shift[2], 1.0);
        const double d = radical_inverse(idx, 7);
        const Point2 x{lo + a * (hi - lo), lo + b * (hi - lo)};
        const double r = r_max * std::exp(d * log_ratio);
        const double th = kTwoPi * c;
        // Try the four quarter-turn rotations of the direction; one of them points
        // into the box whenever r is below half the box width.
        Point2 dir{r * std::cos(th), r * std::sin(th)};
        Point2 y = x + dir;
        for (int turn = 0; turn < 3 && !v.contains(y); ++turn) {
            dir = perp(dir);
            y = x + dir;
        }
        if (!v.contains(y)) continue;
        ++used;
        const double diff = norm(v.interpolate(x) - v.interpolate(y));
        best = std::max(best, diff / (r * std::abs(std::log(r))));
    }
    if (used == 0) throw DomainError("no admissible pairs inside the sampled region");
    return best;
}

}  // namespace pvlab
