#include "pvlab/spectral.hpp"

#include <fftw3.h>

#include <cmath>
#include <mutex>

#include "pvlab/errors.hpp"
#include "pvlab/kernel.hpp"

namespace pvlab {

namespace {
// FFTW's planner is not reentrant.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}
}  // namespace

struct RealFft2d::Impl {
    std::size_t n = 0;
    double* rbuf = nullptr;
    fftw_complex* cbuf = nullptr;
    fftw_plan fwd = nullptr;
    fftw_plan inv = nullptr;

    explicit Impl(std::size_t size) : n(size) {
        const std::size_t h = n / 2 + 1;
        rbuf = static_cast<double*>(fftw_malloc(sizeof(double) * n * n));
        cbuf = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n * h));
        if (!rbuf || !cbuf) throw Error("FFT buffer allocation failed");
        std::lock_guard lock(planner_mutex());
        const int ni = static_cast<int>(n);
        fwd = fftw_plan_dft_r2c_2d(ni, ni, rbuf, cbuf, FFTW_ESTIMATE);
        inv = fftw_plan_dft_c2r_2d(ni, ni, cbuf, rbuf, FFTW_ESTIMATE);
        if (!fwd || !inv) throw Error("FFT planning failed");
    }
    ~Impl() {
        std::lock_guard lock(planner_mutex());
        if (fwd) fftw_destroy_plan(fwd);
        if (inv) fftw_destroy_plan(inv);
        fftw_free(rbuf);
        fftw_free(cbuf);
    }
};

RealFft2d::RealFft2d(std::size_t n) : impl_(std::make_unique<Impl>(n)) {}
RealFft2d::~RealFft2d() = default;
RealFft2d::RealFft2d(RealFft2d&&) noexcept = default;
RealFft2d& RealFft2d::operator=(RealFft2d&&) noexcept = default;

std::size_t RealFft2d::n() const noexcept { return impl_->n; }

void RealFft2d::forward(const double* in, std::complex<double>* out) {
    const std::size_t n = impl_->n;
    std::copy(in, in + n * n, impl_->rbuf);
    fftw_execute(impl_->fwd);
    const auto* c = reinterpret_cast<const std::complex<double>*>(impl_->cbuf);
    std::copy(c, c + n * half(), out);
}

void RealFft2d::inverse(const std::complex<double>* in, double* out) {
    const std::size_t n = impl_->n;
    auto* c = reinterpret_cast<std::complex<double>*>(impl_->cbuf);
    std::copy(in, in + n * half(), c);
    fftw_execute(impl_->inv);
    std::copy(impl_->rbuf, impl_->rbuf + n * n, out);
}

namespace {

// Fourier transform of -(1/2pi) ln|x| restricted to |x| <= R.
double truncated_log_kernel_hat(double k, double R) {
    const double lnR = std::log(R);
    if (k * R < 1e-6) {
        const double kr2 = (k * R) * (k * R);
        // Series through second order in kR.
        return R * R / 4.0 - R * R * lnR / 2.0 - kr2 * R * R * (1.0 / 64.0 - lnR / 16.0);
    }
    const double j0 = std::cyl_bessel_j(0.0, k * R);
    const double j1 = std::cyl_bessel_j(1.0, k * R);
    return (1.0 - j0) / (k * k) - R * lnR * j1 / k;
}

long signed_index(std::size_t k, std::size_t n) {
    return k <= n / 2 ? static_cast<long>(k) : static_cast<long>(k) - static_cast<long>(n);
}

}  // namespace

FreeSpaceSolver::FreeSpaceSolver(const Domain& domain)
    : domain_(domain), np_(static_cast<std::size_t>(2 * domain.m)), fft_(np_) {
    domain_.validate();
    const std::size_t h = np_ / 2 + 1;
    const double period = 2.0 * domain_.extent;
    const double R = domain_.extent;
    kernel_hat_.resize(np_ * h);
    for (std::size_t ky = 0; ky < np_; ++ky)
        for (std::size_t kx = 0; kx < h; ++kx) {
            const double k1 = kTwoPi * static_cast<double>(kx) / period;
            const double k2 = kTwoPi * static_cast<double>(signed_index(ky, np_)) / period;
            kernel_hat_[ky * h + kx] = truncated_log_kernel_hat(std::hypot(k1, k2), R);
        }
    real_buf_.resize(np_ * np_);
    spec_.resize(np_ * h);
    work_.resize(np_ * h);
}

void FreeSpaceSolver::load(const std::vector<double>& omega) {
    const auto m = static_cast<std::size_t>(domain_.m);
    if (omega.size() != m * m) throw ParameterError("field size does not match the solver domain");
    std::fill(real_buf_.begin(), real_buf_.end(), 0.0);
    for (std::size_t iy = 0; iy < m; ++iy)
        for (std::size_t ix = 0; ix < m; ++ix) real_buf_[iy * np_ + ix] = omega[iy * m + ix];
    fft_.forward(real_buf_.data(), spec_.data());
    // h^2 turns the DFT into the continuous transform; 1/P^2 is the inverse series weight.
    const double h = domain_.spacing();
    const double period = 2.0 * domain_.extent;
    const double scale = h * h / (period * period);
    for (std::size_t k = 0; k < spec_.size(); ++k) {
        if (!std::isfinite(spec_[k].real()) || !std::isfinite(spec_[k].imag()))
            throw NumericError("non-finite vorticity spectrum");
        spec_[k] *= kernel_hat_[k] * scale;
    }
}

void FreeSpaceSolver::solve(const std::vector<double>& omega, std::vector<double>* psi, std::vector<double>* d1psi,
                            std::vector<double>* d2psi, std::vector<double>* divergence) {
    load(omega);
    const auto m = static_cast<std::size_t>(domain_.m);
    const std::size_t h = np_ / 2 + 1;
    const double period = 2.0 * domain_.extent;
    auto extract = [&](std::vector<double>* out) {
        fft_.inverse(work_.data(), real_buf_.data());
        out->resize(m * m);
        for (std::size_t iy = 0; iy < m; ++iy)
            for (std::size_t ix = 0; ix < m; ++ix) (*out)[iy * m + ix] = real_buf_[iy * np_ + ix];
    };
    using cd = std::complex<double>;
    auto derivative = [&](int axis) {
        for (std::size_t ky = 0; ky < np_; ++ky)
            for (std::size_t kx = 0; kx < h; ++kx) {
                const bool nyq = (ky == np_ / 2) || (kx == np_ / 2);
                const double k = axis == 1 ? kTwoPi * static_cast<double>(kx) / period
                                           : kTwoPi * static_cast<double>(signed_index(ky, np_)) / period;
                work_[ky * h + kx] = nyq ? cd{} : cd{0.0, k} * spec_[ky * h + kx];
            }
    };
    if (psi) {
        work_ = spec_;
        extract(psi);
    }
    if (d1psi) {
        derivative(1);
        extract(d1psi);
    }
    if (d2psi) {
        derivative(2);
        extract(d2psi);
    }
    if (divergence) {
        // div of (-d2 psi, d1 psi) evaluated spectrally.
        for (std::size_t ky = 0; ky < np_; ++ky)
            for (std::size_t kx = 0; kx < h; ++kx) {
                const bool nyq = (ky == np_ / 2) || (kx == np_ / 2);
                const double k1 = kTwoPi * static_cast<double>(kx) / period;
                const double k2 = kTwoPi * static_cast<double>(signed_index(ky, np_)) / period;
                const cd s = spec_[ky * h + kx];
                const cd u1 = cd{0.0, -k2} * s;
                const cd u2 = cd{0.0, k1} * s;
                work_[ky * h + kx] = nyq ? cd{} : cd{0.0, k1} * u1 + cd{0.0, k2} * u2;
            }
        extract(divergence);
    }
}

void FreeSpaceSolver::gradient_refined(const std::vector<double>& omega, int q, std::vector<double>& d1psi,
                                       std::vector<double>& d2psi) {
    if (q < 1) throw ParameterError("refinement factor must be >= 1");
    load(omega);
    const std::size_t nf = np_ * static_cast<std::size_t>(q);
    const std::size_t hf = nf / 2 + 1;
    const std::size_t h = np_ / 2 + 1;
    const double period = 2.0 * domain_.extent;
    RealFft2d fine(nf);
    std::vector<std::complex<double>> fs(nf * hf);
    auto fill = [&](int axis, std::vector<double>& out) {
        std::fill(fs.begin(), fs.end(), std::complex<double>{});
        for (std::size_t ky = 0; ky < np_; ++ky) {
            if (ky == np_ / 2) continue;
            const long sy = signed_index(ky, np_);
            const std::size_t fy = sy >= 0 ? static_cast<std::size_t>(sy) : static_cast<std::size_t>(sy + static_cast<long>(nf));
            for (std::size_t kx = 0; kx + 1 < h; ++kx) {
                const double k = axis == 1 ? kTwoPi * static_cast<double>(kx) / period : kTwoPi * static_cast<double>(sy) / period;
                fs[fy * hf + kx] = std::complex<double>{0.0, k} * spec_[ky * h + kx];
            }
        }
        out.resize(nf * nf);
        fine.inverse(fs.data(), out.data());
    };
    fill(1, d1psi);
    fill(2, d2psi);
}

PeriodicDerivative::PeriodicDerivative(const Domain& domain)
    : domain_(domain), fft_(static_cast<std::size_t>(domain.m)) {
    const auto m = static_cast<std::size_t>(domain.m);
    s1_.resize(m * (m / 2 + 1));
    s2_.resize(m * (m / 2 + 1));
}

void PeriodicDerivative::negative_divergence(const std::vector<double>& f1, const std::vector<double>& f2,
                                             std::vector<double>& out) {
    const auto m = static_cast<std::size_t>(domain_.m);
    const std::size_t h = m / 2 + 1;
    fft_.forward(f1.data(), s1_.data());
    fft_.forward(f2.data(), s2_.data());
    const double k0 = kTwoPi / domain_.extent;
    const long cut = static_cast<long>(m) / 3;
    for (std::size_t ky = 0; ky < m; ++ky) {
        const long sy = signed_index(ky, m);
        for (std::size_t kx = 0; kx < h; ++kx) {
            const long sx = static_cast<long>(kx);
            std::complex<double>& a = s1_[ky * h + kx];
            if (std::abs(sy) > cut || sx > cut) {
                a = 0.0;
                continue;
            }
            const std::complex<double> b = s2_[ky * h + kx];
            a = -std::complex<double>{0.0, k0 * static_cast<double>(sx)} * a - std::complex<double>{0.0, k0 * static_cast<double>(sy)} * b;
            a /= static_cast<double>(m * m);
        }
    }
    out.resize(m * m);
    fft_.inverse(s1_.data(), out.data());
}

}  // namespace pvlab
