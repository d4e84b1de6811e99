#include "pvlab/quadrature.hpp"

#include <cmath>

#include "pvlab/errors.hpp"
#include "pvlab/kernel.hpp"
#include "pvlab/spectral.hpp"

namespace pvlab {

namespace {

// x^2 atan(y/x), continuous at x = 0.
double sq_atan(double x, double y) { return x == 0.0 ? 0.0 : x * x * std::atan(y / x); }
double lin_atan(double x, double y) { return x == 0.0 ? 0.0 : x * std::atan(y / x); }
double xlog(double x, double r2) { return x == 0.0 ? 0.0 : x * std::log(r2); }

// Mixed antiderivative of (1/2) ln(x^2 + y^2).
double mixed_primitive(double x, double y) {
    const double r2 = x * x + y * y;
    const double xy_log = (x == 0.0 || y == 0.0) ? 0.0 : x * y * std::log(r2);
    return 0.5 * (xy_log - 3.0 * x * y + sq_atan(x, y) + sq_atan(y, x));
}

// Antiderivative in y of (1/2) ln(x^2 + y^2).
double line_primitive(double x, double y) {
    const double r2 = x * x + y * y;
    return 0.5 * xlog(y, r2) - y + lin_atan(x, y);
}

}  // namespace

double log_kernel_rect(double a1, double b1, double a2, double b2) {
    const double s = mixed_primitive(b1, b2) - mixed_primitive(a1, b2) - mixed_primitive(b1, a2) + mixed_primitive(a1, a2);
    return -kInvTwoPi * s;
}

Point2 grad_kernel_rect(double a1, double b1, double a2, double b2) {
    const double i1 = line_primitive(b1, b2) - line_primitive(b1, a2) - line_primitive(a1, b2) + line_primitive(a1, a2);
    const double i2 = line_primitive(b2, b1) - line_primitive(b2, a1) - line_primitive(a2, b1) + line_primitive(a2, a1);
    return {-kInvTwoPi * i1, -kInvTwoPi * i2};
}

PointPotentials cell_convolution_at(const Domain& domain, const std::vector<double>& weights,
                                    const std::vector<Point2>& points, bool want_potential, bool want_gradient) {
    if (weights.size() != domain.size()) throw ParameterError("weight array does not match the domain");
    struct Cell {
        double x1, x2, w;
    };
    std::vector<Cell> cells;
    for (std::int64_t iy = 0; iy < domain.m; ++iy)
        for (std::int64_t ix = 0; ix < domain.m; ++ix) {
            const double w = weights[static_cast<std::size_t>(iy * domain.m + ix)];
            if (w != 0.0) cells.push_back({domain.coord(ix), domain.coord(iy), w});
        }
    const double h = domain.spacing();
    const double h2 = h * h;
    const double near = (static_cast<double>(kNearCells) + 0.5) * h;

    PointPotentials out;
    if (want_potential) out.potential.assign(points.size(), 0.0);
    if (want_gradient) out.gradient.assign(points.size(), Point2{});
    for (std::size_t k = 0; k < points.size(); ++k) {
        const Point2 p = points[k];
        double pot = 0.0, g1 = 0.0, g2 = 0.0;
        for (const Cell& c : cells) {
            const double d1 = p.x1 - c.x1;
            const double d2 = p.x2 - c.x2;
            if (std::abs(d1) <= near && std::abs(d2) <= near) {
                const double a1 = d1 - 0.5 * h, b1 = d1 + 0.5 * h, a2 = d2 - 0.5 * h, b2 = d2 + 0.5 * h;
                if (want_potential) pot += c.w * log_kernel_rect(a1, b1, a2, b2);
                if (want_gradient) {
                    const Point2 g = grad_kernel_rect(a1, b1, a2, b2);
                    g1 += c.w * g.x1;
                    g2 += c.w * g.x2;
                }
            } else {
                const double r2 = d1 * d1 + d2 * d2;
                if (want_potential) pot += c.w * h2 * (-0.25 / kPi) * std::log(r2);
                if (want_gradient) {
                    const double s = -c.w * h2 * kInvTwoPi / r2;
                    g1 += s * d1;
                    g2 += s * d2;
                }
            }
        }
        if (want_potential) out.potential[k] = pot;
        if (want_gradient) out.gradient[k] = {g1, g2};
    }
    return out;
}

RefinedCellConvolution::RefinedCellConvolution(const Domain& domain, int q)
    : domain_(domain), q_(q), n_(static_cast<std::size_t>(2 * domain.m * q)), hf_(domain.spacing() / q) {
    if (q < 1) throw ParameterError("refinement factor must be >= 1");
    domain_.validate();
    std::vector<double> kp(n_ * n_), k1(n_ * n_), k2(n_ * n_);
    const auto half = static_cast<std::int64_t>(n_ / 2);
    const double h2 = hf_ * hf_;
    for (std::size_t jy = 0; jy < n_; ++jy)
        for (std::size_t jx = 0; jx < n_; ++jx) {
            auto ox = static_cast<std::int64_t>(jx);
            auto oy = static_cast<std::int64_t>(jy);
            if (ox >= half) ox -= static_cast<std::int64_t>(n_);
            if (oy >= half) oy -= static_cast<std::int64_t>(n_);
            const double d1 = static_cast<double>(ox) * hf_;
            const double d2 = static_cast<double>(oy) * hf_;
            const std::size_t k = jy * n_ + jx;
            if (std::abs(ox) <= kNearCells && std::abs(oy) <= kNearCells) {
                const double a1 = d1 - 0.5 * hf_, b1 = d1 + 0.5 * hf_, a2 = d2 - 0.5 * hf_, b2 = d2 + 0.5 * hf_;
                kp[k] = log_kernel_rect(a1, b1, a2, b2);
                const Point2 g = grad_kernel_rect(a1, b1, a2, b2);
                k1[k] = g.x1;
                k2[k] = g.x2;
            } else {
                const double r2 = d1 * d1 + d2 * d2;
                kp[k] = h2 * (-0.25 / kPi) * std::log(r2);
                k1[k] = -h2 * kInvTwoPi * d1 / r2;
                k2[k] = -h2 * kInvTwoPi * d2 / r2;
            }
        }
    RealFft2d fft(n_);
    const std::size_t hs = n_ / 2 + 1;
    pot_hat_.resize(n_ * hs);
    d1_hat_.resize(n_ * hs);
    d2_hat_.resize(n_ * hs);
    fft.forward(kp.data(), pot_hat_.data());
    fft.forward(k1.data(), d1_hat_.data());
    fft.forward(k2.data(), d2_hat_.data());
}

double RefinedCellConvolution::coord(std::int64_t j) const noexcept {
    return -0.5 * domain_.extent - 0.5 * domain_.spacing() + (static_cast<double>(j) + 0.5) * hf_;
}

double RefinedCellConvolution::wrapped_coord(std::int64_t j) const noexcept {
    double x = coord(j);
    if (x >= domain_.extent) x -= 2.0 * domain_.extent;
    return x;
}

void RefinedCellConvolution::convolve(const std::vector<double>& weights,
                                      const std::vector<std::complex<double>>& kernel_hat,
                                      std::vector<double>& out) const {
    const auto m = static_cast<std::size_t>(domain_.m);
    if (weights.size() != m * m) throw ParameterError("weight array does not match the domain");
    const auto q = static_cast<std::size_t>(q_);
    std::vector<double> src(n_ * n_, 0.0);
    for (std::size_t iy = 0; iy < m; ++iy)
        for (std::size_t ix = 0; ix < m; ++ix) {
            const double w = weights[iy * m + ix];
            if (w == 0.0) continue;
            for (std::size_t b = 0; b < q; ++b)
                for (std::size_t a = 0; a < q; ++a) src[(iy * q + b) * n_ + ix * q + a] = w;
        }
    RealFft2d fft(n_);
    std::vector<std::complex<double>> s(n_ * (n_ / 2 + 1));
    fft.forward(src.data(), s.data());
    const double scale = 1.0 / static_cast<double>(n_ * n_);
    for (std::size_t k = 0; k < s.size(); ++k) s[k] *= kernel_hat[k] * scale;
    out.resize(n_ * n_);
    fft.inverse(s.data(), out.data());
}

void RefinedCellConvolution::potential(const std::vector<double>& weights, std::vector<double>& out) const {
    convolve(weights, pot_hat_, out);
}

void RefinedCellConvolution::gradient(const std::vector<double>& weights, std::vector<double>& d1,
                                      std::vector<double>& d2) const {
    convolve(weights, d1_hat_, d1);
    convolve(weights, d2_hat_, d2);
}

}  // namespace pvlab
