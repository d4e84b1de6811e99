#include "pvlab/grid.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "pvlab/errors.hpp"

namespace pvlab {

bool is_power_of_two(std::int64_t m) noexcept { return m > 0 && std::has_single_bit(static_cast<std::uint64_t>(m)); }

void Domain::validate() const {
    if (!(extent > 0.0) || !std::isfinite(extent)) throw ParameterError("domain extent must be positive and finite");
    if (!is_power_of_two(m) || m < 4) throw ParameterError("grid size must be a power of two >= 4");
}

GridField::GridField(Domain domain, double t) : domain_(domain), t_(t), values_(domain.size(), 0.0) { domain_.validate(); }

GridField::GridField(Domain domain, std::vector<double> values, double t)
    : domain_(domain), t_(t), values_(std::move(values)) {
    domain_.validate();
    if (values_.size() != domain_.size()) throw ParameterError("grid field value count does not match m*m");
}

GridField GridField::from_function(const Domain& domain, const std::function<double(Point2)>& f, double t) {
    GridField g(domain, t);
    for (std::int64_t iy = 0; iy < domain.m; ++iy)
        for (std::int64_t ix = 0; ix < domain.m; ++ix) g.at(ix, iy) = f(domain.node(ix, iy));
    return g;
}

double GridField::mass() const {
    const double h = domain_.spacing();
    double s = 0.0;
    double c = 0.0;
    for (double v : values_) {
        // Neumaier summation keeps the mass check meaningful at the 1e-12 level.
        const double tsum = s + v;
        c += std::abs(s) >= std::abs(v) ? (s - tsum) + v : (v - tsum) + s;
        s = tsum;
    }
    return (s + c) * h * h;
}

double GridField::l2_norm() const {
    const double h = domain_.spacing();
    double s = 0.0;
    for (double v : values_) s += v * v;
    return std::sqrt(s) * h;
}

double GridField::max_value() const { return values_.empty() ? 0.0 : *std::max_element(values_.begin(), values_.end()); }

double GridField::sup_norm() const {
    double s = 0.0;
    for (double v : values_) s = std::max(s, std::abs(v));
    return s;
}

double GridField::support_radius() const {
    const double h = domain_.spacing();
    double r2 = -1.0;
    for (std::int64_t iy = 0; iy < domain_.m; ++iy)
        for (std::int64_t ix = 0; ix < domain_.m; ++ix)
            if (at(ix, iy) != 0.0) r2 = std::max(r2, norm2(domain_.node(ix, iy)));
    if (r2 < 0.0) return 0.0;
    return std::sqrt(r2) + h / std::sqrt(2.0);
}

void GridField::normalize_mass() {
    const double mtot = mass();
    if (!(std::abs(mtot) > 0.0) || !std::isfinite(mtot)) throw DomainError("cannot normalize a field of zero mass");
    for (double& v : values_) v /= mtot;
}

bool GridField::is_probability(double tol) const {
    for (double v : values_)
        if (!std::isfinite(v) || v < 0.0) return false;
    return std::abs(mass() - 1.0) <= tol;
}

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <class T>
void put_le(std::ostream& os, T v) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    os.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <class T>
T get_le(std::istream& is) {
    unsigned char b[sizeof(T)];
    if (!is.read(reinterpret_cast<char*>(b), sizeof(T))) throw ParameterError("truncated grid field stream");
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    T v;
    std::memcpy(&v, b, sizeof(T));
    return v;
}

}  // namespace

void GridField::write_binary(std::ostream& os) const {
    put_le<double>(os, domain_.extent);
    put_le<std::int64_t>(os, domain_.m);
    put_le<double>(os, t_);
    for (double v : values_) put_le<double>(os, v);
    if (!os) throw Error("failed to write grid field");
}

GridField GridField::read_binary(std::istream& is) {
    Domain d;
    d.extent = get_le<double>(is);
    d.m = get_le<std::int64_t>(is);
    const double t = get_le<double>(is);
    d.validate();
    std::vector<double> v(d.size());
    for (double& x : v) x = get_le<double>(is);
    return GridField(d, std::move(v), t);
}

void GridField::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open " + path + " for writing");
    write_binary(os);
}

GridField GridField::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ParameterError("cannot open grid field file " + path);
    return read_binary(is);
}

VectorField VectorField::from_function(const Domain& domain, const std::function<Point2(Point2)>& f) {
    VectorField v(domain);
    for (std::int64_t iy = 0; iy < domain.m; ++iy)
        for (std::int64_t ix = 0; ix < domain.m; ++ix) {
            const Point2 u = f(domain.node(ix, iy));
            const auto k = static_cast<std::size_t>(iy * domain.m + ix);
            v.u1[k] = u.x1;
            v.u2[k] = u.x2;
        }
    return v;
}

bool VectorField::contains(Point2 p) const noexcept {
    const double lo = domain.coord(0);
    const double hi = domain.coord(domain.m - 1);
    return p.x1 >= lo && p.x1 <= hi && p.x2 >= lo && p.x2 <= hi;
}

Point2 VectorField::interpolate(Point2 p) const {
    if (!contains(p)) throw DomainError("interpolation point outside the sampled region");
    const double h = domain.spacing();
    const double fx = (p.x1 - domain.coord(0)) / h;
    const double fy = (p.x2 - domain.coord(0)) / h;
    auto ix = static_cast<std::int64_t>(std::floor(fx));
    auto iy = static_cast<std::int64_t>(std::floor(fy));
    ix = std::clamp<std::int64_t>(ix, 0, domain.m - 2);
    iy = std::clamp<std::int64_t>(iy, 0, domain.m - 2);
    const double ax = fx - static_cast<double>(ix);
    const double ay = fy - static_cast<double>(iy);
    const Point2 a = at(ix, iy), b = at(ix + 1, iy), c = at(ix, iy + 1), d = at(ix + 1, iy + 1);
    return (1 - ax) * (1 - ay) * a + ax * (1 - ay) * b + (1 - ax) * ay * c + ax * ay * d;
}

double VectorField::sup_norm() const {
    double s = 0.0;
    for (std::size_t k = 0; k < u1.size(); ++k) s = std::max(s, std::hypot(u1[k], u2[k]));
    return s;
}

}  // namespace pvlab
