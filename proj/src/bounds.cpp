#include "pvlab/bounds.hpp"

#include <algorithm>
#include <cmath>

#include "pvlab/errors.hpp"

namespace pvlab {

namespace {

const double kInvE = std::exp(-1.0);

double log_factor(std::size_t n) {
    if (n < 3) throw ParameterError("n must be at least 3");
    const double nn = static_cast<double>(n);
    const double l = std::log(nn);
    return l * l / nn;
}

double density_norm(const GridField& field, double p) {
    if (std::isinf(p)) return field.sup_norm();
    const double h = field.domain().spacing();
    double s = 0.0;
    for (double v : field.values()) s += std::pow(std::abs(v), p);
    return std::pow(s * h * h, 1.0 / p);
}

}  // namespace

double osgood_M(double x) {
    if (!(x > 0.0) || x > kInvE) throw DomainError("osgood_M is defined on (0, 1/e]");
    // At x = 1/e the inner log can round just below 1.
    return std::log(std::max(1.0, -std::log(x)));
}

double osgood_M_inv(double y) {
    if (!std::isfinite(y)) throw DomainError("osgood_M_inv needs a finite argument");
    return std::exp(-std::exp(y));
}

Envelope osgood_envelope(double c, double gamma, double t) {
    if (!(c > 0.0) || !(c < kInvE)) throw ParameterError("envelope start must lie in (0, 1/e)");
    if (!(gamma >= 0.0) || !(t >= 0.0)) throw ParameterError("gamma and t must be nonnegative");
    Envelope e;
    e.value = std::pow(c, std::exp(-gamma * t));
    e.saturated = e.value > kInvE;
    return e;
}

EpsilonSchedule epsilon_schedule(double fbar, std::size_t n) {
    if (!(fbar >= 0.0)) throw ParameterError("running energy bound must be nonnegative");
    if (n < 3) throw ParameterError("schedule needs n >= 3");
    const double nn = static_cast<double>(n);
    EpsilonSchedule s;
    s.eps3 = std::clamp(fbar, std::log(nn) / nn, kInvE);
    s.eps2 = s.eps3 * s.eps3;
    s.eps1 = s.eps2 * s.eps3;
    return s;
}

void BoundConfig::validate() const {
    if (!(C > 0.0) || !std::isfinite(C)) throw ParameterError("C must be positive");
    if (!(p > 2.0)) throw ParameterError("p must exceed 2");
    if (!(omega_inf > 0.0) || !(omega_p > 0.0)) throw ParameterError("density norms must be positive");
    if (!(C_p > 0.0) || !(C_inf > 0.0) || !(C_s > 0.0)) throw ParameterError("constants must be positive");
}

double BoundConfig::growth_rate() const {
    validate();
    return C * (std::sqrt(omega_inf) + std::pow(omega_inf, 1.5));
}

nlohmann::json BoundConfig::to_json() const {
    return {{"C", C},
            {"p", std::isinf(p) ? nlohmann::json("inf") : nlohmann::json(p)},
            {"omega_inf", omega_inf},
            {"omega_p", omega_p},
            {"C_p", C_p},
            {"C_inf", C_inf},
            {"C_s", C_s}};
}

double theorem_rhs(double f0, double t, std::size_t n, const BoundConfig& cfg) {
    if (!(f0 >= 0.0) || !(t >= 0.0)) throw ParameterError("f0 and t must be nonnegative");
    const double k = cfg.growth_rate();
    return std::pow(f0 + k * t * log_factor(n), std::exp(-k * t));
}

bool n_condition(double f0, double t, std::size_t n, const BoundConfig& cfg) {
    if (!(t >= 0.0)) throw ParameterError("t must be nonnegative");
    const double k = cfg.growth_rate();
    return k * t * log_factor(n) + f0 < std::exp(-std::exp(k * t));
}

std::optional<std::size_t> n_condition_threshold(double f0, double t, const BoundConfig& cfg, std::size_t n_max) {
    std::size_t lo = 8;
    if (n_condition(f0, t, lo, cfg)) return lo;
    std::size_t hi = 16;
    while (!n_condition(f0, t, hi, cfg)) {
        lo = hi;
        if (hi >= n_max) return std::nullopt;
        hi = std::min(2 * hi, n_max);
    }
    while (hi - lo > 1) {
        const std::size_t mid = lo + (hi - lo) / 2;
        if (n_condition(f0, t, mid, cfg)) hi = mid;
        else lo = mid;
    }
    return hi;
}

double prop_key_rhs(const VortexState& state, const GridField& field, const EpsilonSchedule& sched,
                    const VelocityNorms& v, double f_avg, const BoundConfig& cfg) {
    cfg.validate();
    if (!sched.admissible()) throw ParameterError("schedule violates 0 < 2 eps1 < eps2 < eps3");
    if (!std::isfinite(v.log_lipschitz) || !std::isfinite(v.sup) || v.log_lipschitz < 0.0 || v.sup < 0.0)
        throw ParameterError("velocity norms must be finite and nonnegative");
    const double nn = static_cast<double>(state.n());
    if (nn < 1.0) throw ParameterError("empty vortex state");
    const double p = cfg.p;
    const bool bounded = std::isinf(p);
    const double mu_p = density_norm(field, p);
    const double mu_inf = field.sup_norm();
    const double l1 = std::abs(std::log(sched.eps1));
    const double l2 = std::abs(std::log(sched.eps2));
    const double l3 = std::abs(std::log(sched.eps3));
    const double decay = bounded ? 2.0 : 2.0 * (p - 1.0) / p;
    const double mu_root = bounded ? std::sqrt(mu_p) : std::pow(mu_p, p / (2.0 * (p - 1.0)));
    const double near = bounded ? sched.eps1 : std::pow(sched.eps1, (p - 2.0) / p);

    double total = v.log_lipschitz * l2 * std::abs(f_avg);
    total += v.log_lipschitz * l1 * l2 / nn;
    total += cfg.C_p * v.log_lipschitz * std::pow(sched.eps3, decay) * l3;
    total += sched.eps1 * v.sup / (sched.eps3 * sched.eps3);
    total += sched.eps2 * l2 * v.log_lipschitz / sched.eps3;
    total += sched.eps2 * l2 * cfg.C_p * v.log_lipschitz * mu_root;
    total += v.sup * (cfg.C_p * mu_p * near + (bounded ? cfg.C_inf * mu_inf * sched.eps1 * l1 : 0.0));
    return total;
}

double corollary_rhs(double f0, double T, std::size_t n, double s, const BoundConfig& cfg) {
    if (!(s < -1.0)) throw ParameterError("Sobolev order must be below -1");
    const double nn = static_cast<double>(n);
    const double first = theorem_rhs(f0, T, n, cfg);
    return first + cfg.C_s * (std::sqrt(std::log(nn)) + cfg.omega_inf) / std::sqrt(nn);
}

nlohmann::json ConstantFit::to_json() const {
    return {{"calibration", calibration}, {"validation", validation}, {"spread", spread}, {"stable", stable}};
}

ConstantFit fit_constant(const std::vector<double>& lhs_calibration, const std::vector<double>& rhs_calibration,
                         const std::vector<double>& lhs_validation, const std::vector<double>& rhs_validation,
                         double allowed_spread) {
    auto max_ratio = [](const std::vector<double>& lhs, const std::vector<double>& rhs) {
        if (lhs.empty() || lhs.size() != rhs.size()) throw ParameterError("fit sets must be nonempty and paired");
        double best = 0.0;
        for (std::size_t k = 0; k < lhs.size(); ++k) {
            if (!(rhs[k] > 0.0) || !std::isfinite(lhs[k])) throw ParameterError("fit needs positive right sides");
            best = std::max(best, lhs[k] / rhs[k]);
        }
        return best;
    };
    ConstantFit fit;
    fit.calibration = max_ratio(lhs_calibration, rhs_calibration);
    fit.validation = max_ratio(lhs_validation, rhs_validation);
    const double hi = std::max(fit.calibration, fit.validation);
    const double lo = std::min(fit.calibration, fit.validation);
    if (hi == 0.0) fit.spread = 1.0;
    else if (lo == 0.0) fit.spread = kInfinity;
    else fit.spread = hi / lo;
    fit.stable = fit.spread <= allowed_spread;
    return fit;
}

std::optional<double> fit_theorem_constant(const std::vector<double>& times, const std::vector<double>& measured,
                                           double f0, std::size_t n, BoundConfig cfg) {
    if (times.size() != measured.size() || times.empty()) throw ParameterError("times and values must pair up");
    auto holds = [&](double c) {
        cfg.C = c;
        for (std::size_t k = 0; k < times.size(); ++k)
            if (measured[k] > theorem_rhs(f0, times[k], n, cfg)) return false;
        return true;
    };
    double lo = std::log(1e-12), hi = std::log(1e12);
    if (!holds(std::exp(hi))) return std::nullopt;
    if (holds(std::exp(lo))) return std::exp(lo);
    for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (holds(std::exp(mid))) hi = mid;
        else lo = mid;
    }
    return std::exp(hi);
}

BoundReport bound_report(double f0, double t, std::size_t n, double s, const BoundConfig& cfg) {
    BoundReport r;
    r.config = cfg;
    r.f0 = f0;
    r.t = t;
    r.n = n;
    r.s = s;
    r.growth_rate = cfg.growth_rate();
    r.theorem = theorem_rhs(f0, t, n, cfg);
    r.corollary = corollary_rhs(f0, t, n, s, cfg);
    r.size_condition = n_condition(f0, t, n, cfg);
    return r;
}

nlohmann::json BoundReport::to_json() const {
    nlohmann::json j;
    j["inputs"] = {{"f0", f0}, {"t", t}, {"N", n}, {"s", s}, {"config", config.to_json()}};
    j["K"] = growth_rate;
    j["theorem_rhs"] = theorem;
    j["corollary_rhs"] = corollary;
    j["n_condition"] = size_condition;
    j["fitted_constants"] = fitted;
    return j;
}

}  // namespace pvlab
