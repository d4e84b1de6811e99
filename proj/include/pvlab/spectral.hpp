#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <vector>

#include "pvlab/grid.hpp"

namespace pvlab {

// Owning 2D real<->complex FFTW plan pair on an n x n grid.
class RealFft2d {
public:
    explicit RealFft2d(std::size_t n);
    ~RealFft2d();
    RealFft2d(const RealFft2d&) = delete;
    RealFft2d& operator=(const RealFft2d&) = delete;
    RealFft2d(RealFft2d&&) noexcept;
    RealFft2d& operator=(RealFft2d&&) noexcept;

    std::size_t n() const noexcept;
    std::size_t half() const noexcept { return n() / 2 + 1; }
    // Unnormalized transforms; the spectrum is row-major n x (n/2+1).
    void forward(const double* in, std::complex<double>* out);
    // Does not modify its input.
    void inverse(const std::complex<double>* in, double* out);

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// Free-space solve of -Lap psi = omega for densities supported in the trusted disk,
// using the spectrum of the logarithmic kernel truncated at radius L on a grid
// zero-padded to period 2L.
class FreeSpaceSolver {
public:
    explicit FreeSpaceSolver(const Domain& domain);

    const Domain& domain() const noexcept { return domain_; }

    // Any of the outputs may be null; outputs are sampled on the box nodes.
    void solve(const std::vector<double>& omega, std::vector<double>* psi, std::vector<double>* d1psi,
               std::vector<double>* d2psi, std::vector<double>* divergence = nullptr);

    // Gradient of psi on the padded period [-L, L)^2 refined by an integer factor;
    // arrays are (2 m q)^2, node j sits at -L/2 + j h/q taken modulo 2L.
    void gradient_refined(const std::vector<double>& omega, int q, std::vector<double>& d1psi,
                          std::vector<double>& d2psi);

private:
    void load(const std::vector<double>& omega);

    Domain domain_;
    std::size_t np_;  // padded size 2m
    RealFft2d fft_;
    std::vector<double> kernel_hat_;  // truncated kernel spectrum, np x (np/2+1)
    std::vector<double> real_buf_;
    std::vector<std::complex<double>> spec_, work_;
};

// Spectral derivative of a box-periodic field; components beyond the 2/3 band are dropped.
class PeriodicDerivative {
public:
    explicit PeriodicDerivative(const Domain& domain);
    // out = -(d1 f1 + d2 f2)
    void negative_divergence(const std::vector<double>& f1, const std::vector<double>& f2, std::vector<double>& out);

private:
    Domain domain_;
    RealFft2d fft_;
    std::vector<std::complex<double>> s1_, s2_;
};

}  // namespace pvlab
