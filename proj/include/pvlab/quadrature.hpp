#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include "pvlab/grid.hpp"
#include "pvlab/point.hpp"

namespace pvlab {

// Integrals of g and grad g over the rectangle [a1,b1] x [a2,b2] (in the argument of g).
double log_kernel_rect(double a1, double b1, double a2, double b2);
Point2 grad_kernel_rect(double a1, double b1, double a2, double b2);

// Offsets (in cells, sup norm) treated by exact rectangle integration.
inline constexpr std::int64_t kNearCells = 4;

struct PointPotentials {
    std::vector<double> potential;
    std::vector<Point2> gradient;
};

// Convolution of g and grad g with a density that is constant on each cell of the
// domain, evaluated at arbitrary points; cells within kNearCells of a point are
// integrated exactly, the rest by the midpoint rule.
PointPotentials cell_convolution_at(const Domain& domain, const std::vector<double>& weights,
                                    const std::vector<Point2>& points, bool want_potential = true,
                                    bool want_gradient = true);

// The same quadrature evaluated at the centres of a q-fold refined grid over the
// padded period [-L, L)^2 by FFT convolution. Node j sits at -L/2 - h/2 + (j+1/2) h/q.
class RefinedCellConvolution {
public:
    RefinedCellConvolution(const Domain& domain, int q);

    std::size_t size() const noexcept { return n_; }
    double spacing() const noexcept { return hf_; }
    double coord(std::int64_t j) const noexcept;
    // Wrapped coordinate in [-L, L).
    double wrapped_coord(std::int64_t j) const noexcept;

    void potential(const std::vector<double>& weights, std::vector<double>& out) const;
    void gradient(const std::vector<double>& weights, std::vector<double>& d1, std::vector<double>& d2) const;

private:
    void convolve(const std::vector<double>& weights, const std::vector<std::complex<double>>& kernel_hat,
                  std::vector<double>& out) const;

    Domain domain_;
    int q_;
    std::size_t n_;
    double hf_;
    std::vector<std::complex<double>> pot_hat_, d1_hat_, d2_hat_;
};

}  // namespace pvlab
