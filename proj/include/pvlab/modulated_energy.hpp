#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "json.hpp"
#include "pvlab/grid.hpp"
#include "pvlab/point.hpp"
#include "pvlab/vortex_dynamics.hpp"

namespace pvlab {

// Per-vortex smearing radii.
struct TruncationVector {
    std::vector<double> eta;

    static TruncationVector uniform(std::size_t n, double eta);
    std::size_t size() const noexcept { return eta.size(); }
    double max() const;
    double min() const;
    // Throws unless every entry is finite and positive and the count matches n.
    void validate(std::size_t n) const;
};

struct EnergyReport {
    double pair_sum = 0.0;    // sum_{i != j} g(x_i - x_j) / N^2
    double cross = 0.0;       // -(2/N) sum_i (g * omega)(x_i)
    double continuum = 0.0;   // double integral of g omega omega
    double f_avg = 0.0;       // pair_sum + cross + continuum
    std::optional<double> renormalized;  // (field energy - sum g~(eta_i)) / N^2
    std::size_t n = 0;
    double t = 0.0;
    std::int64_t grid_m = 0;
    std::optional<double> eta_min, eta_max;

    double f_n() const noexcept { return static_cast<double>(n) * static_cast<double>(n) * f_avg; }
    nlohmann::json to_json() const;
};

// Modulated energy of the empirical measure against the field.
EnergyReport f_n_avg(const VortexState& state, const GridField& field);
// Adds the renormalized approximant computed with h_field_energy.
EnergyReport f_n_avg(const VortexState& state, const GridField& field, const TruncationVector& eta, int resolution = 4);

// Integral of |grad H|^2 with H = sum_i g_{eta_i}(. - x_i) - N (g * omega), on a q-fold
// refined cell grid with extra subdivision near each smearing circle and a multipole
// tail outside radius 0.7 L.
double h_field_energy(const VortexState& state, const GridField& field, const TruncationVector& eta,
                      int resolution = 4);
// Integral of |grad (g * nu)|^2 for a signed density of zero total mass.
double field_gradient_energy(const GridField& nu, int resolution = 4);

// r_i = min(min_{j != i} |x_i - x_j| / 4, eps1).
TruncationVector r_vector(const VortexState& state, double eps1);

// Ordered pairs (i, j), i != j, with |x_i - x_j| <= eps3.
std::size_t count_close_pairs(const VortexState& state, double eps3);
// Sum of g(x_i - x_j) over the same ordered pairs.
double close_pair_energy(const VortexState& state, double eps3);

// Right-hand sides of the counting estimates without the leading absolute constant.
// p may be kInfinity; omega_p is the L^p norm of the field.
double counting_rhs(double f_n, std::size_t n, double eps3, double p, double c_p, double omega_p);
double close_pair_energy_rhs(double f_n, std::size_t n, double eps3, double p, double c_p, double omega_p);

// Smallest C_p making the renormalization inequality hold for the given data.
double renormalization_constant_needed(const VortexState& state, double f_n, double renormalized_energy,
                                       const TruncationVector& eta, double p, double omega_p);
// Smallest C_p making the bound on sum g~(r_i) hold.
double r_sum_constant_needed(const VortexState& state, double f_n, double eps1, double p, double omega_p);

// Frequency-space Sobolev distance of negative order.
struct HsOptions {
    double s = -2.0;
    double freq_cut = 0.0;  // <= 0 selects 64 (2 pi / L)
    int angles = 256;       // nodes on [0, pi); the spectrum of a real measure is even
    int radial = 512;       // Simpson intervals on [0, freq_cut]
    double extent = 8.0;    // L used for the default cut when no field is involved
};

struct HsResult {
    double distance = 0.0;
    double tail = 0.0;        // incoherent contribution added beyond the cut
    bool truncated = false;   // tail exceeds 1e-8 of the squared distance
};

// Fourier transform of a measure sampled on a polar frequency grid.
class PolarSpectrum {
public:
    PolarSpectrum(const GridField& field, const HsOptions& options);
    PolarSpectrum(const std::vector<Point2>& atoms, const std::vector<double>& weights, const HsOptions& options);
    static PolarSpectrum empirical(const VortexState& state, const HsOptions& options);

    const HsOptions& options() const noexcept { return opts_; }
    const std::vector<Point2>& atoms() const noexcept { return atoms_; }
    const std::vector<double>& atom_weights() const noexcept { return atom_weights_; }
    const std::vector<double>& re() const noexcept { return re_; }
    const std::vector<double>& im() const noexcept { return im_; }

private:
    void resolve_cut(double extent);
    HsOptions opts_;
    std::vector<Point2> atoms_;
    std::vector<double> atom_weights_;
    std::vector<double> re_, im_;  // angle-major, (radial + 1) entries per angle
};

HsResult hs_distance(const PolarSpectrum& a, const PolarSpectrum& b);
HsResult hs_distance(const VortexState& state, const GridField& field, const HsOptions& options = {});
HsResult hs_distance(const GridField& a, const GridField& b, const HsOptions& options = {});
HsResult hs_distance(const VortexState& a, const VortexState& b, const HsOptions& options = {});

// Right-hand side of the Sobolev estimate without its constant.
double hs_bound_rhs(double f_avg, std::size_t n, double omega_p);

// Both sides of the stress-energy identity for a sampled Lipschitz field v and
// densities mu, nu on the same domain.
std::pair<double, double> se_divergence_check(const VectorField& v, const GridField& mu, const GridField& nu);

// Time derivative of the modulated energy along the coupled flows.
struct DerivativeTerms {
    double pair = 0.0;
    double cross = 0.0;
    double continuum = 0.0;  // vanishes identically; reported for the check
    double total = 0.0;
};
DerivativeTerms energy_derivative_terms(const VortexState& state, const GridField& field);
double energy_derivative_rhs(const VortexState& state, const GridField& field);

}  // namespace pvlab
