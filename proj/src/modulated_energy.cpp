#include "pvlab/modulated_energy.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <unordered_map>

#include "pvlab/errors.hpp"
#include "pvlab/euler_field.hpp"
#include "pvlab/kernel.hpp"
#include "pvlab/quadrature.hpp"
#include "pvlab/spectral.hpp"

namespace pvlab {

namespace {

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

double decay_exponent(double p) {
    if (!(p > 2.0)) throw ParameterError("integrability exponent must exceed 2");
    return std::isinf(p) ? 2.0 : 2.0 * (p - 1.0) / p;
}

}  // namespace

// ---- truncation vectors --------------------------------------------------------

TruncationVector TruncationVector::uniform(std::size_t n, double eta) { return {std::vector<double>(n, eta)}; }

double TruncationVector::max() const {
    if (eta.empty()) throw ParameterError("empty truncation vector");
    return *std::max_element(eta.begin(), eta.end());
}

double TruncationVector::min() const {
    if (eta.empty()) throw ParameterError("empty truncation vector");
    return *std::min_element(eta.begin(), eta.end());
}

void TruncationVector::validate(std::size_t n) const {
    if (eta.size() != n) throw ParameterError("truncation vector length differs from the vortex count");
    for (double e : eta)
        if (!std::isfinite(e) || !(e > 0.0)) throw ParameterError("truncation radii must be finite and positive");
}

// ---- modulated energy ----------------------------------------------------------

nlohmann::json EnergyReport::to_json() const {
    nlohmann::json j;
    j["pair_sum"] = pair_sum;
    j["cross"] = cross;
    j["continuum"] = continuum;
    j["f_avg"] = f_avg;
    j["renormalized"] = renormalized ? nlohmann::json(*renormalized) : nlohmann::json(nullptr);
    j["N"] = n;
    j["t"] = t;
    j["grid_m"] = grid_m;
    j["f_n"] = f_n();
    if (eta_min) j["eta"] = {{"min", *eta_min}, {"max", *eta_max}};
    else j["eta"] = nullptr;
    return j;
}

EnergyReport f_n_avg(const VortexState& state, const GridField& field) {
    validate_state(state);
    const std::size_t n = state.n();
    const double nn = static_cast<double>(n);
    EnergyReport r;
    r.n = n;
    r.t = state.t;
    r.grid_m = field.m();
    Accum pair;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const Point2 d = state.positions[i] - state.positions[j];
            if (norm2(d) == 0.0) throw CollisionError("coincident vortices in the modulated energy");
            pair.add(2.0 * coulomb_g(d));
        }
    r.pair_sum = pair.value() / (nn * nn);
    const PointValues pv = potential_at_points(field, state.positions);
    Accum cross;
    for (double v : pv.potential) cross.add(v);
    r.cross = -2.0 * cross.value() / nn;
    r.continuum = coulomb_energy(field);
    r.f_avg = r.pair_sum + r.cross + r.continuum;
    return r;
}

EnergyReport f_n_avg(const VortexState& state, const GridField& field, const TruncationVector& eta, int resolution) {
    EnergyReport r = f_n_avg(state, field);
    const double nn = static_cast<double>(state.n());
    double self = 0.0;
    for (double e : eta.eta) self += g_tilde(e);
    r.renormalized = (h_field_energy(state, field, eta, resolution) - self) / (nn * nn);
    r.eta_min = eta.min();
    r.eta_max = eta.max();
    return r;
}

namespace {

// Integral of |sum_i grad g_{eta_i}(x - x_i) - c grad(g * field)|^2 over the plane.
double gradient_energy(const std::vector<Point2>& pts, const std::vector<double>& eta, const GridField& field, double c,
                       int q) {
    const Domain& d = field.domain();
    if (field.support_radius() > d.trusted_radius())
        throw DomainError("field support leaves the trusted disk B(0, L/4)");
    for (const auto& p : pts)
        if (!is_finite(p) || norm(p) > d.trusted_radius()) throw DomainError("vortex outside the trusted disk");

    RefinedCellConvolution conv(d, q);
    const double hf = conv.spacing();
    for (double e : eta)
        if (!(e > 2.0 * hf)) throw ResolutionError("truncation radius must exceed two quadrature cells");
    std::vector<double> d1, d2;
    conv.gradient(field.values(), d1, d2);
    const auto n = static_cast<std::int64_t>(conv.size());
    const double origin = conv.coord(0);

    auto source_field = [&](Point2 x) {
        Point2 s{};
        for (std::size_t i = 0; i < pts.size(); ++i) s += grad_g_truncated(x - pts[i], eta[i]);
        return s;
    };
    auto psi_grad_at = [&](Point2 x) {
        const double fx = (x.x1 - origin) / hf, fy = (x.x2 - origin) / hf;
        const auto jx = static_cast<std::int64_t>(std::floor(fx));
        const auto jy = static_cast<std::int64_t>(std::floor(fy));
        const double tx = fx - static_cast<double>(jx), ty = fy - static_cast<double>(jy);
        auto at = [&](const std::vector<double>& a, std::int64_t ix, std::int64_t iy) {
            return a[static_cast<std::size_t>(iy * n + ix)];
        };
        auto lerp = [&](const std::vector<double>& a) {
            return (1 - tx) * (1 - ty) * at(a, jx, jy) + tx * (1 - ty) * at(a, jx + 1, jy) +
                   (1 - tx) * ty * at(a, jx, jy + 1) + tx * ty * at(a, jx + 1, jy + 1);
        };
        return Point2{lerp(d1), lerp(d2)};
    };

    // Cells near a smearing circle are subdivided so that sub-cells are at most eta/16.
    std::unordered_map<std::int64_t, int> refine;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const int r = std::max(4, static_cast<int>(std::ceil(16.0 * hf / eta[i])));
        const double reach = 4.0 * eta[i] + hf;
        const auto lo_x = static_cast<std::int64_t>(std::floor((pts[i].x1 - reach - origin) / hf));
        const auto lo_y = static_cast<std::int64_t>(std::floor((pts[i].x2 - reach - origin) / hf));
        const auto span = static_cast<std::int64_t>(std::ceil(2.0 * reach / hf)) + 2;
        for (std::int64_t jy = lo_y; jy <= lo_y + span; ++jy)
            for (std::int64_t jx = lo_x; jx <= lo_x + span; ++jx) {
                if (jx < 0 || jy < 0 || jx >= n || jy >= n) continue;
                const Point2 cc{conv.coord(jx), conv.coord(jy)};
                if (norm(cc - pts[i]) > reach) continue;
                int& slot = refine[jy * n + jx];
                slot = std::max(slot, r);
            }
    }

    const double rho = 0.7 * d.extent;
    Accum total;
    for (std::int64_t jy = 0; jy < n; ++jy) {
        const double y = conv.wrapped_coord(jy);
        if (std::abs(y) >= rho) continue;
        for (std::int64_t jx = 0; jx < n; ++jx) {
            const double x = conv.wrapped_coord(jx);
            if (x * x + y * y >= rho * rho) continue;
            const std::int64_t key = jy * n + jx;
            const auto it = refine.find(key);
            if (it == refine.end()) {
                const Point2 g{d1[static_cast<std::size_t>(key)], d2[static_cast<std::size_t>(key)]};
                total.add(norm2(source_field({x, y}) - c * g) * hf * hf);
                continue;
            }
            const int r = it->second;
            const double sub = hf / r;
            double acc = 0.0;
            for (int b = 0; b < r; ++b)
                for (int a = 0; a < r; ++a) {
                    const Point2 p{x - 0.5 * hf + (a + 0.5) * sub, y - 0.5 * hf + (b + 0.5) * sub};
                    acc += norm2(source_field(p) - c * psi_grad_at(p));
                }
            total.add(acc * sub * sub);
        }
    }

    // Exterior of the disk: the potential is harmonic there with vanishing monopole;
    // pi sum_n n |a_n|^2 rho^(-2n), a_n = (1/(2 pi n)) (sum z_i^n - c int z^n field).
    double reach = field.support_radius();
    for (const auto& p : pts) reach = std::max(reach, norm(p));
    const double ratio = reach / rho;
    const int order = ratio <= 0.0 ? 1 : std::clamp(static_cast<int>(std::ceil(std::log(1e-17) / (2.0 * std::log(ratio)))), 1, 200);
    std::vector<std::complex<double>> moments(static_cast<std::size_t>(order) + 1, 0.0);
    for (const auto& p : pts) {
        const std::complex<double> z(p.x1, p.x2);
        std::complex<double> zn = 1.0;
        for (int k = 1; k <= order; ++k) {
            zn *= z;
            moments[static_cast<std::size_t>(k)] += zn;
        }
    }
    const double gx[3] = {-std::sqrt(0.6), 0.0, std::sqrt(0.6)};
    const double gw[3] = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
    const double h = d.spacing();
    for (std::int64_t iy = 0; iy < d.m; ++iy)
        for (std::int64_t ix = 0; ix < d.m; ++ix) {
            const double w = field.at(ix, iy);
            if (w == 0.0) continue;
            const Point2 ctr = d.node(ix, iy);
            for (int b = 0; b < 3; ++b)
                for (int a = 0; a < 3; ++a) {
                    const std::complex<double> z(ctr.x1 + 0.5 * h * gx[a], ctr.x2 + 0.5 * h * gx[b]);
                    const double wt = c * w * gw[a] * gw[b] * 0.25 * h * h;
                    std::complex<double> zn = 1.0;
                    for (int k = 1; k <= order; ++k) {
                        zn *= z;
                        moments[static_cast<std::size_t>(k)] -= wt * zn;
                    }
                }
        }
    double tail = 0.0;
    for (int k = 1; k <= order; ++k) {
        const double ak = std::abs(moments[static_cast<std::size_t>(k)]) / (kTwoPi * k);
        tail += kPi * k * ak * ak * std::pow(rho, -2.0 * k);
    }
    return total.value() + tail;
}

}  // namespace

double h_field_energy(const VortexState& state, const GridField& field, const TruncationVector& eta, int resolution) {
    validate_state(state);
    eta.validate(state.n());
    if (std::abs(field.mass() - 1.0) > 1e-8) throw ParameterError("field must have unit mass");
    return gradient_energy(state.positions, eta.eta, field, static_cast<double>(state.n()), resolution);
}

double field_gradient_energy(const GridField& nu, int resolution) {
    double total_variation = 0.0;
    for (double v : nu.values()) total_variation += std::abs(v);
    total_variation *= nu.domain().spacing() * nu.domain().spacing();
    if (std::abs(nu.mass()) > 1e-9 * std::max(total_variation, 1e-300))
        throw ParameterError("field gradient energy needs a density of zero total mass");
    return gradient_energy({}, {}, nu, 1.0, resolution);
}

// ---- truncation radii and counting ---------------------------------------------

TruncationVector r_vector(const VortexState& state, double eps1) {
    validate_state(state);
    if (!(eps1 > 0.0)) throw ParameterError("eps1 must be positive");
    const std::size_t n = state.n();
    TruncationVector r{std::vector<double>(n, eps1)};
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double dist = norm(state.positions[i] - state.positions[j]);
            if (dist == 0.0) throw CollisionError("coincident vortices");
            r.eta[i] = std::min(r.eta[i], 0.25 * dist);
            r.eta[j] = std::min(r.eta[j], 0.25 * dist);
        }
    return r;
}

namespace {

// Visits each ordered pair (i, j), i != j, with |x_i - x_j| <= eps through a cell list.
template <class F>
void for_close_pairs(const VortexState& state, double eps, F&& visit) {
    if (!(eps > 0.0) || !std::isfinite(eps)) throw ParameterError("distance threshold must be positive");
    struct KeyHash {
        std::size_t operator()(const std::pair<std::int64_t, std::int64_t>& k) const noexcept {
            return std::hash<std::int64_t>()(k.first * 0x9E3779B97F4A7C15LL ^ k.second);
        }
    };
    std::unordered_map<std::pair<std::int64_t, std::int64_t>, std::vector<std::size_t>, KeyHash> cells;
    auto key_of = [eps](Point2 p) {
        return std::pair{static_cast<std::int64_t>(std::floor(p.x1 / eps)),
                         static_cast<std::int64_t>(std::floor(p.x2 / eps))};
    };
    for (std::size_t i = 0; i < state.n(); ++i) cells[key_of(state.positions[i])].push_back(i);
    const double eps2 = eps * eps;
    for (std::size_t i = 0; i < state.n(); ++i) {
        const auto [kx, ky] = key_of(state.positions[i]);
        for (std::int64_t dy = -1; dy <= 1; ++dy)
            for (std::int64_t dx = -1; dx <= 1; ++dx) {
                const auto it = cells.find({kx + dx, ky + dy});
                if (it == cells.end()) continue;
                for (std::size_t j : it->second) {
                    if (j == i) continue;
                    const double r2 = norm2(state.positions[i] - state.positions[j]);
                    if (r2 <= eps2) visit(i, j, r2);
                }
            }
    }
}

}  // namespace

std::size_t count_close_pairs(const VortexState& state, double eps3) {
    std::size_t count = 0;
    for_close_pairs(state, eps3, [&](std::size_t, std::size_t, double) { ++count; });
    return count;
}

double close_pair_energy(const VortexState& state, double eps3) {
    Accum s;
    for_close_pairs(state, eps3, [&](std::size_t, std::size_t, double r2) {
        if (r2 == 0.0) throw CollisionError("coincident vortices");
        s.add(-0.25 / kPi * std::log(r2));
    });
    return s.value();
}

double counting_rhs(double f_n, std::size_t n, double eps3, double p, double c_p, double omega_p) {
    const double nn = static_cast<double>(n);
    return f_n + nn * g_tilde(eps3) + c_p * nn * nn * omega_p * std::pow(eps3, decay_exponent(p));
}

double close_pair_energy_rhs(double f_n, std::size_t n, double eps3, double p, double c_p, double omega_p) {
    const double nn = static_cast<double>(n);
    const double g2 = g_tilde(2.0 * eps3);
    return g2 * (f_n + nn * g2 + c_p * nn * nn * omega_p * std::pow(eps3, decay_exponent(p)));
}

double renormalization_constant_needed(const VortexState& state, double f_n, double renormalized_energy,
                                       const TruncationVector& eta, double p, double omega_p) {
    eta.validate(state.n());
    const std::size_t n = state.n();
    Accum lhs;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            lhs.add(std::max(0.0, coulomb_g(state.positions[i] - state.positions[j]) - g_tilde(eta.eta[i])));
        }
    double denom = 0.0;
    for (double e : eta.eta) denom += std::pow(e, decay_exponent(p));
    denom *= static_cast<double>(n) * omega_p;
    return std::max(0.0, (lhs.value() - (f_n - renormalized_energy)) / denom);
}

double r_sum_constant_needed(const VortexState& state, double f_n, double eps1, double p, double omega_p) {
    const TruncationVector r = r_vector(state, eps1);
    const double nn = static_cast<double>(state.n());
    double lhs = 0.0;
    for (double e : r.eta) lhs += g_tilde(e);
    const double rest = f_n + nn * (2.0 * g_tilde(eps1) - g_tilde(4.0));
    return std::max(0.0, (lhs - rest) / (omega_p * nn * nn * std::pow(eps1, decay_exponent(p))));
}

// ---- Sobolev distance ----------------------------------------------------------

void PolarSpectrum::resolve_cut(double extent) {
    if (!(opts_.s < -1.0)) throw ParameterError("Sobolev order must be below -1");
    if (opts_.angles < 1 || opts_.radial < 2 || opts_.radial % 2 != 0)
        throw ParameterError("need at least one angle and an even number of radial intervals");
    if (opts_.freq_cut <= 0.0) opts_.freq_cut = 64.0 * kTwoPi / extent;
}

namespace {

// Accumulates sum_k w_k exp(-i p_k r) at r = 0, dr, ..., radial*dr along one direction.
void radial_transform(const std::vector<double>& proj, const std::vector<double>& w, double dr, int radial, double* re,
                      double* im) {
    const std::size_t m = proj.size();
    std::vector<double> cr(m, 1.0), ci(m, 0.0), zr(m), zi(m);
    for (std::size_t k = 0; k < m; ++k) {
        zr[k] = std::cos(proj[k] * dr);
        zi[k] = -std::sin(proj[k] * dr);
    }
    for (int j = 0; j <= radial; ++j) {
        double sr = 0.0, si = 0.0;
        for (std::size_t k = 0; k < m; ++k) {
            sr += w[k] * cr[k];
            si += w[k] * ci[k];
            const double nr = cr[k] * zr[k] - ci[k] * zi[k];
            const double ni = cr[k] * zi[k] + ci[k] * zr[k];
            cr[k] = nr;
            ci[k] = ni;
        }
        re[j] = sr;
        im[j] = si;
        // Restart the recurrence from exact phases every 64 steps to bound drift.
        if ((j + 1) % 64 == 0)
            for (std::size_t k = 0; k < m; ++k) {
                cr[k] = std::cos(proj[k] * dr * (j + 1));
                ci[k] = -std::sin(proj[k] * dr * (j + 1));
            }
    }
}

double sinc(double x) { return std::abs(x) < 1e-8 ? 1.0 - x * x / 6.0 : std::sin(x) / x; }

}  // namespace

PolarSpectrum::PolarSpectrum(const GridField& field, const HsOptions& options) : opts_(options) {
    resolve_cut(field.domain().extent);
    const Domain& d = field.domain();
    const double h = d.spacing();
    std::vector<Point2> pos;
    std::vector<double> w;
    for (std::int64_t iy = 0; iy < d.m; ++iy)
        for (std::int64_t ix = 0; ix < d.m; ++ix)
            if (field.at(ix, iy) != 0.0) {
                pos.push_back(d.node(ix, iy));
                w.push_back(field.at(ix, iy) * h * h);
            }
    const int na = opts_.angles, nr = opts_.radial;
    const double dr = opts_.freq_cut / nr;
    re_.assign(static_cast<std::size_t>(na) * (nr + 1), 0.0);
    im_.assign(re_.size(), 0.0);
    std::vector<double> proj(pos.size());
    for (int a = 0; a < na; ++a) {
        const double th = kPi * a / na;
        const double c = std::cos(th), s = std::sin(th);
        for (std::size_t k = 0; k < pos.size(); ++k) proj[k] = pos[k].x1 * c + pos[k].x2 * s;
        double* pr = re_.data() + static_cast<std::size_t>(a) * (nr + 1);
        double* pi = im_.data() + static_cast<std::size_t>(a) * (nr + 1);
        radial_transform(proj, w, dr, nr, pr, pi);
        // Transform of the cell indicator.
        for (int j = 0; j <= nr; ++j) {
            const double r = j * dr;
            const double f = sinc(0.5 * h * r * c) * sinc(0.5 * h * r * s);
            pr[j] *= f;
            pi[j] *= f;
        }
    }
}

PolarSpectrum::PolarSpectrum(const std::vector<Point2>& atoms, const std::vector<double>& weights,
                             const HsOptions& options)
    : opts_(options), atoms_(atoms), atom_weights_(weights) {
    if (atoms.size() != weights.size()) throw ParameterError("atoms and weights differ in length");
    resolve_cut(opts_.extent);
    const int na = opts_.angles, nr = opts_.radial;
    const double dr = opts_.freq_cut / nr;
    re_.assign(static_cast<std::size_t>(na) * (nr + 1), 0.0);
    im_.assign(re_.size(), 0.0);
    std::vector<double> proj(atoms.size());
    for (int a = 0; a < na; ++a) {
        const double th = kPi * a / na;
        const double c = std::cos(th), s = std::sin(th);
        for (std::size_t k = 0; k < atoms.size(); ++k) proj[k] = atoms[k].x1 * c + atoms[k].x2 * s;
        radial_transform(proj, weights, dr, nr, re_.data() + static_cast<std::size_t>(a) * (nr + 1),
                         im_.data() + static_cast<std::size_t>(a) * (nr + 1));
    }
}

PolarSpectrum PolarSpectrum::empirical(const VortexState& state, const HsOptions& options) {
    validate_state(state);
    return PolarSpectrum(state.positions, std::vector<double>(state.n(), 1.0 / static_cast<double>(state.n())), options);
}

HsResult hs_distance(const PolarSpectrum& a, const PolarSpectrum& b) {
    const HsOptions& oa = a.options();
    const HsOptions& ob = b.options();
    if (oa.s != ob.s || oa.freq_cut != ob.freq_cut || oa.angles != ob.angles || oa.radial != ob.radial)
        throw ParameterError("spectra were sampled on different frequency grids");
    const int na = oa.angles, nr = oa.radial;
    const double cut = oa.freq_cut;
    const double dr = cut / nr;
    std::vector<double> radial_weight(static_cast<std::size_t>(nr) + 1);
    for (int j = 0; j <= nr; ++j) {
        const double r = j * dr;
        const double simpson = (j == 0 || j == nr) ? 1.0 : (j % 2 ? 4.0 : 2.0);
        radial_weight[static_cast<std::size_t>(j)] = simpson * dr / 3.0 * r * std::pow(1.0 + r * r, oa.s);
    }
    Accum sum;
    for (int q = 0; q < na; ++q) {
        double line = 0.0;
        for (int j = 0; j <= nr; ++j) {
            const std::size_t k = static_cast<std::size_t>(q) * (nr + 1) + j;
            const double dre = a.re()[k] - b.re()[k];
            const double dim = a.im()[k] - b.im()[k];
            line += radial_weight[static_cast<std::size_t>(j)] * (dre * dre + dim * dim);
        }
        sum.add(line);
    }
    // Angles cover [0, pi); the other half mirrors it.
    const double value = sum.value() * 2.0 * (kPi / na) / (4.0 * kPi * kPi);
    HsResult out;
    // Beyond the cut the atoms decorrelate; only the net weight at each location survives.
    std::map<std::pair<double, double>, double> net;
    for (std::size_t k = 0; k < a.atoms().size(); ++k) net[{a.atoms()[k].x1, a.atoms()[k].x2}] += a.atom_weights()[k];
    for (std::size_t k = 0; k < b.atoms().size(); ++k) net[{b.atoms()[k].x1, b.atoms()[k].x2}] -= b.atom_weights()[k];
    double atoms = 0.0;
    for (const auto& [pos, w] : net) atoms += w * w;
    out.tail = atoms / kTwoPi * std::pow(1.0 + cut * cut, oa.s + 1.0) / (-2.0 * oa.s - 2.0);
    const double total = value + out.tail;
    out.distance = std::sqrt(std::max(total, 0.0));
    out.truncated = out.tail > 1e-8 * total;
    return out;
}

HsResult hs_distance(const VortexState& state, const GridField& field, const HsOptions& options) {
    const PolarSpectrum f(field, options);
    return hs_distance(PolarSpectrum::empirical(state, f.options()), f);
}

HsResult hs_distance(const GridField& a, const GridField& b, const HsOptions& options) {
    const PolarSpectrum fa(a, options);
    return hs_distance(fa, PolarSpectrum(b, fa.options()));
}

HsResult hs_distance(const VortexState& a, const VortexState& b, const HsOptions& options) {
    const PolarSpectrum sa = PolarSpectrum::empirical(a, options);
    return hs_distance(sa, PolarSpectrum::empirical(b, sa.options()));
}

double hs_bound_rhs(double f_avg, std::size_t n, double omega_p) {
    const double nn = static_cast<double>(n);
    return std::sqrt(std::abs(f_avg)) + std::sqrt(std::log(nn) / nn) + (1.0 + omega_p) / std::sqrt(nn);
}

// ---- stress-energy identity ----------------------------------------------------

std::pair<double, double> se_divergence_check(const VectorField& v, const GridField& mu, const GridField& nu) {
    const Domain& d = mu.domain();
    if (!(nu.domain() == d) || !(v.domain == d)) throw ParameterError("inputs must share one domain");
    const std::int64_t m = d.m;
    const double h = d.spacing();

    // Lipschitz at grid scale: one-cell difference quotients must not outgrow two-cell ones.
    double lip1 = 0.0, lip2 = 0.0;
    for (std::int64_t iy = 0; iy + 2 < m; ++iy)
        for (std::int64_t ix = 0; ix + 2 < m; ++ix) {
            const Point2 a = v.at(ix, iy);
            if (!is_finite(a)) throw ParameterError("vector field has non-finite samples");
            lip1 = std::max({lip1, norm(v.at(ix + 1, iy) - a), norm(v.at(ix, iy + 1) - a)});
            lip2 = std::max({lip2, 0.5 * norm(v.at(ix + 2, iy) - a), 0.5 * norm(v.at(ix, iy + 2) - a)});
        }
    if (lip1 > 1.5 * lip2 + 1e-14 * (1.0 + lip2)) throw ParameterError("vector field is not Lipschitz at grid scale");

    // Left side: direct double quadrature over the supports.
    struct Cell {
        Point2 x, v;
        double w;
        std::int64_t id;
    };
    auto cells_of = [&](const GridField& f) {
        std::vector<Cell> out;
        for (std::int64_t iy = 0; iy < m; ++iy)
            for (std::int64_t ix = 0; ix < m; ++ix)
                if (f.at(ix, iy) != 0.0) out.push_back({d.node(ix, iy), v.at(ix, iy), f.at(ix, iy) * h * h, iy * m + ix});
        return out;
    };
    const std::vector<Cell> cm = cells_of(mu), cn = cells_of(nu);
    Accum lhs;
    for (const Cell& a : cm) {
        double row = 0.0;
        for (const Cell& b : cn) {
            if (a.id == b.id) continue;
            const Point2 dx = a.x - b.x;
            row += b.w * dot(a.v - b.v, grad_g(dx));
        }
        lhs.add(a.w * row);
    }

    // Right side: contraction of grad v with the stress-energy tensor of the potentials.
    FreeSpaceSolver solver(d);
    std::vector<double> p1, p2, q1, q2;
    solver.solve(mu.values(), nullptr, &p1, &p2);
    solver.solve(nu.values(), nullptr, &q1, &q2);
    auto diff = [&](const std::vector<double>& f, std::int64_t ix, std::int64_t iy, bool along_x) {
        auto at = [&](std::int64_t dx) {
            const std::int64_t jx = along_x ? ix + dx : ix, jy = along_x ? iy : iy + dx;
            return f[static_cast<std::size_t>(jy * m + jx)];
        };
        return (at(-2) - 8.0 * at(-1) + 8.0 * at(1) - at(2)) / (12.0 * h);
    };
    Accum rhs;
    for (std::int64_t iy = 2; iy < m - 2; ++iy)
        for (std::int64_t ix = 2; ix < m - 2; ++ix) {
            const auto k = static_cast<std::size_t>(iy * m + ix);
            const double dot_pq = p1[k] * q1[k] + p2[k] * q2[k];
            const double t11 = 2.0 * p1[k] * q1[k] - dot_pq;
            const double t22 = 2.0 * p2[k] * q2[k] - dot_pq;
            const double t12 = p1[k] * q2[k] + p2[k] * q1[k];
            const double v11 = diff(v.u1, ix, iy, true), v12 = diff(v.u2, ix, iy, true);
            const double v21 = diff(v.u1, ix, iy, false), v22 = diff(v.u2, ix, iy, false);
            // d_i v_j T^{ij}
            rhs.add((v11 * t11 + v12 * t12 + v21 * t12 + v22 * t22) * h * h);
        }
    return {lhs.value(), rhs.value()};
}

// ---- energy derivative ---------------------------------------------------------

DerivativeTerms energy_derivative_terms(const VortexState& state, const GridField& field) {
    validate_state(state);
    if (std::abs(field.mass()) < 1e-12) throw ParameterError("field of zero mass carries no velocity");
    const Domain& d = field.domain();
    const std::size_t n = state.n();
    const double nn = static_cast<double>(n);
    const PointValues pv = potential_at_points(field, state.positions);
    std::vector<Point2> u(n);
    for (std::size_t i = 0; i < n; ++i) u[i] = perp(pv.gradient[i]);

    DerivativeTerms out;
    Accum pair;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            pair.add(2.0 * dot(grad_g(state.positions[i] - state.positions[j]), u[i] - u[j]));
    out.pair = pair.value() / (nn * nn);

    FreeSpaceSolver solver(d);
    std::vector<double> d1, d2;
    solver.solve(field.values(), nullptr, &d1, &d2);
    std::vector<double> w1(d.size()), w2(d.size());
    Accum cont;
    for (std::size_t k = 0; k < d.size(); ++k) {
        const double w = field.values()[k];
        const double u1 = -d2[k], u2 = d1[k];
        w1[k] = u1 * w;
        w2[k] = u2 * w;
        cont.add(w * (u1 * d1[k] + u2 * d2[k]));
    }
    out.continuum = 2.0 * cont.value() * d.spacing() * d.spacing();
    if (std::abs(out.continuum) > 1e-10) throw NumericError("continuum term failed to vanish");

    const PointPotentials g1 = cell_convolution_at(d, w1, state.positions, false, true);
    const PointPotentials g2 = cell_convolution_at(d, w2, state.positions, false, true);
    Accum cross;
    for (std::size_t i = 0; i < n; ++i) {
        const double transport = g1.gradient[i].x1 + g2.gradient[i].x2;
        cross.add(dot(u[i], pv.gradient[i]) - transport);
    }
    out.cross = -2.0 * cross.value() / nn;
    out.total = out.pair + out.cross + out.continuum;
    return out;
}

double energy_derivative_rhs(const VortexState& state, const GridField& field) {
    return energy_derivative_terms(state, field).total;
}

}  // namespace pvlab
