#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "pvlab/point.hpp"

namespace pvlab {

// Square box [-L/2, L/2)^2 sampled at m nodes per side; node k sits at -L/2 + k*h.
struct Domain {
    double extent = 8.0;
    std::int64_t m = 256;

    double spacing() const noexcept { return extent / static_cast<double>(m); }
    double coord(std::int64_t k) const noexcept { return -0.5 * extent + static_cast<double>(k) * spacing(); }
    Point2 node(std::int64_t ix, std::int64_t iy) const noexcept { return {coord(ix), coord(iy)}; }
    std::size_t size() const noexcept { return static_cast<std::size_t>(m * m); }
    // Radius of the disk inside which free-space potentials are trusted.
    double trusted_radius() const noexcept { return 0.25 * extent; }

    void validate() const;
    friend bool operator==(const Domain&, const Domain&) = default;
};

bool is_power_of_two(std::int64_t m) noexcept;

// Scalar density on a Domain; values are stored row-major as values[iy*m + ix]
// and represent the density at each node (cell average for cell-coverage data).
class GridField {
public:
    GridField() = default;
    explicit GridField(Domain domain, double t = 0.0);
    GridField(Domain domain, std::vector<double> values, double t = 0.0);

    static GridField from_function(const Domain& domain, const std::function<double(Point2)>& f, double t = 0.0);

    const Domain& domain() const noexcept { return domain_; }
    double t() const noexcept { return t_; }
    void set_t(double t) noexcept { t_ = t; }
    std::int64_t m() const noexcept { return domain_.m; }

    double& at(std::int64_t ix, std::int64_t iy) { return values_[static_cast<std::size_t>(iy * domain_.m + ix)]; }
    double at(std::int64_t ix, std::int64_t iy) const { return values_[static_cast<std::size_t>(iy * domain_.m + ix)]; }
    const std::vector<double>& values() const noexcept { return values_; }
    std::vector<double>& values() noexcept { return values_; }

    double mass() const;
    double l2_norm() const;
    double max_value() const;
    double sup_norm() const;
    // Largest node distance from the origin carrying a nonzero value.
    double support_radius() const;

    // Rescale so that the grid mass equals one; throws on zero mass.
    void normalize_mass();
    // Nonnegative, finite and of unit mass within tol.
    bool is_probability(double tol = 1e-10) const;

    void write_binary(std::ostream& os) const;
    static GridField read_binary(std::istream& is);
    void save(const std::string& path) const;
    static GridField load(const std::string& path);

    friend bool operator==(const GridField&, const GridField&) = default;

private:
    Domain domain_{};
    double t_ = 0.0;
    std::vector<double> values_;
};

// Planar vector field sampled on the nodes of a Domain.
struct VectorField {
    Domain domain{};
    std::vector<double> u1;
    std::vector<double> u2;

    VectorField() = default;
    explicit VectorField(const Domain& d) : domain(d), u1(d.size(), 0.0), u2(d.size(), 0.0) {}

    static VectorField from_function(const Domain& domain, const std::function<Point2(Point2)>& f);

    Point2 at(std::int64_t ix, std::int64_t iy) const {
        const auto k = static_cast<std::size_t>(iy * domain.m + ix);
        return {u1[k], u2[k]};
    }
    // Bilinear interpolation; p must lie inside the node hull.
    Point2 interpolate(Point2 p) const;
    bool contains(Point2 p) const noexcept;
    double sup_norm() const;
};

}  // namespace pvlab
