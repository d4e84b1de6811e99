#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>

#include "pvlab/grid.hpp"
#include "pvlab/point.hpp"

namespace pvlab {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;
inline constexpr double kInvTwoPi = 1.0 / kTwoPi;
inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

// Planar Coulomb potential -(1/2pi) ln r.
double coulomb_g(double r);
double coulomb_g(const Point2& x);
// Value of the potential on the circle of radius eta.
inline double g_tilde(double eta) { return coulomb_g(eta); }

// Gradient -(1/2pi) x/|x|^2.
Point2 grad_g(const Point2& x);
// (-d2 g, d1 g): the velocity induced by a unit point vortex at the origin.
Point2 grad_perp_g(const Point2& x);

// Potential capped at its value on the circle of radius eta.
double g_truncated(const Point2& x, double eta);
Point2 grad_g_truncated(const Point2& x, double eta);

struct SelfEnergy {
    double value = 0.0;
    double error_estimate = 0.0;
    bool accuracy_warning = false;
};

// Interaction energy of the uniform probability measure on a circle of radius eta
// with itself, by product-trapezoid quadrature with the log singularity removed.
SelfEnergy smeared_self_energy(double eta, int quadrature_nodes = 512);

// Difference g_alpha - g_eta of two truncations; nonpositive with support in B(0, alpha).
double f_eta_alpha(const Point2& x, double eta, double alpha);
// L^p norm of grad f_{eta,alpha}; p may be kInfinity.
double f_grad_norm(double eta, double alpha, double p);

struct MollifierSpec {
    double epsilon = 0.01;
};

// Radial profile of the bump: equal to 1 for r <= 1/4, smooth and nonincreasing,
// zero beyond mollifier_outer_radius() < 1, and of unit mass on the plane.
double mollifier_profile(double r);
double mollifier_outer_radius();
// eps^-2 chi(x/eps)
double mollifier(const Point2& x, double epsilon);

// Discrete convolution with the rescaled bump; weights are renormalized to unit
// discrete mass, and truncated at the edges of the sampled box.
VectorField mollify_field(const VectorField& v, const MollifierSpec& spec);

// Lower estimate of the log-Lipschitz seminorm from a deterministic low-discrepancy
// sample of point pairs with separations in [h, e^-1].
double log_lipschitz_seminorm(const VectorField& v, std::size_t pair_budget = 100000, std::uint64_t seed = 0);

}  // namespace pvlab
