#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <vector>

#include "pvlab/grid.hpp"
#include "pvlab/point.hpp"
#include "pvlab/spectral.hpp"
#include "pvlab/vortex_dynamics.hpp"

namespace pvlab {

// ---- initial data -------------------------------------------------------------

// Indicator of the disk B(center, R) by cell coverage, normalized to unit mass.
GridField uniform_disk(const Domain& domain, double R, Point2 center = {});
// The same disk convolved with the rescaled bump of width epsilon (>= 4 h).
GridField mollified_disk(const Domain& domain, double R, double epsilon, Point2 center = {});
// c (1 - |x-center|^2/R^2)^power on the disk, normalized to unit mass.
GridField polynomial_bump(const Domain& domain, double R, int power = 8, Point2 center = {});
// Sum of weighted bumps; the result is normalized to unit mass.
struct BumpSpec {
    Point2 center;
    double radius = 0.5;
    double weight = 1.0;
    int power = 8;
};
GridField bump_mixture(const Domain& domain, const std::vector<BumpSpec>& bumps);

// ---- velocity -----------------------------------------------------------------

// u = grad_perp (g * omega) on the box nodes.
VectorField biot_savart(const GridField& field);
// Sup norm of the spectral divergence of the velocity.
double velocity_divergence_sup(const GridField& field);

// Pseudospectral transport of vorticity with classical RK4 in time.
class EulerStepper {
public:
    explicit EulerStepper(const Domain& domain, double cfl_limit = 0.5);

    const Domain& domain() const noexcept { return domain_; }
    double max_speed(const GridField& field);
    // dt may be negative; throws CflError when |dt| max|u| m / L exceeds the limit.
    GridField step(const GridField& field, double dt);
    VectorField velocity(const GridField& field);
    // Advances to t_end with equal substeps sized from the CFL target.
    GridField advance(const GridField& field, double t_end, double cfl_target = 0.4);

private:
    void rhs(const std::vector<double>& omega, std::vector<double>& out, double* umax);

    Domain domain_;
    double cfl_limit_;
    FreeSpaceSolver solver_;
    PeriodicDerivative deriv_;
    std::vector<double> d1_, d2_, f1_, f2_;
};

GridField euler_step(const GridField& field, double dt);

// ---- quadrature diagnostics -----------------------------------------------------

struct PointValues {
    std::vector<double> potential;  // (g * omega)(p)
    std::vector<Point2> gradient;   // (grad g * omega)(p)
};
// Direct cell quadrature with the free-space kernel; points must lie in B(0, L/4).
PointValues potential_at_points(const GridField& field, const std::vector<Point2>& points);

// Double integral of g(x-y) omega(x) omega(y) for the cell-wise constant density.
double coulomb_energy(const GridField& field);
// Integral of ln(1+|x|^2)^(1/2) omega.
double log_moment(const GridField& field);

struct FieldDiagnostics {
    double t = 0.0;
    double mass = 0.0;
    double l2 = 0.0;
    double linf = 0.0;
    double coulomb_energy = 0.0;
    double log_moment = 0.0;
};
FieldDiagnostics diagnose(const GridField& field);
void write_diagnostics_csv(std::ostream& os, const std::vector<FieldDiagnostics>& rows);

// ---- flow-map regularity ----------------------------------------------------------

struct HolderReport {
    std::vector<double> times;
    std::vector<double> separation;
    std::vector<double> ll_integral;  // running integral of the measured log-Lipschitz seminorm
    std::vector<double> bound;        // with the configured constant
    double constant = 1.0;
    double fitted_constant = 0.0;     // smallest constant for which the bound holds at every sample
    bool precondition_met = true;     // |x-y| <= exp(1 - integral) at the final time
};

struct HolderOptions {
    double constant = 1.0;
    double cfl_target = 0.4;
    std::size_t ll_pairs = 20000;
    std::uint64_t seed = 0;
};

HolderReport tracer_holder_diagnostic(const GridField& field0, Point2 x, Point2 y, double T,
                                      const HolderOptions& options = {});

// ---- weak formulation -------------------------------------------------------------

struct TestFunction {
    std::function<double(double, Point2)> value;
    std::function<double(double, Point2)> time_derivative;
    std::function<Point2(double, Point2)> gradient;
    double support_radius = 1.0;  // spatial support inside B(0, support_radius)
};

// Residual of the weak vorticity identity between the first and last sample of a
// uniformly sampled trajectory, with Simpson (odd sample counts) or trapezoid time
// quadrature.
double weak_form_residual(const std::vector<GridField>& trajectory, const TestFunction& phi);
double weak_form_residual(const Trace& trajectory, const TestFunction& phi, double trusted_radius);

// ---- sampling ---------------------------------------------------------------------

// n i.i.d. draws from the cell-wise constant density by rejection against its maximum.
VortexState sample_from_density(const GridField& field, std::size_t n, std::uint64_t seed);

}  // namespace pvlab
