#pragma once

#include <cmath>

namespace pvlab {

struct Point2 {
    double x1 = 0.0;
    double x2 = 0.0;

    constexpr Point2& operator+=(const Point2& o) noexcept {
        x1 += o.x1;
        x2 += o.x2;
        return *this;
    }
    constexpr Point2& operator-=(const Point2& o) noexcept {
        x1 -= o.x1;
        x2 -= o.x2;
        return *this;
    }
    constexpr Point2& operator*=(double s) noexcept {
        x1 *= s;
        x2 *= s;
        return *this;
    }
    friend constexpr Point2 operator+(Point2 a, const Point2& b) noexcept { return a += b; }
    friend constexpr Point2 operator-(Point2 a, const Point2& b) noexcept { return a -= b; }
    friend constexpr Point2 operator-(const Point2& a) noexcept { return {-a.x1, -a.x2}; }
    friend constexpr Point2 operator*(double s, Point2 a) noexcept { return a *= s; }
    friend constexpr Point2 operator*(Point2 a, double s) noexcept { return a *= s; }
    friend constexpr bool operator==(const Point2&, const Point2&) = default;
};

constexpr double dot(const Point2& a, const Point2& b) noexcept { return a.x1 * b.x1 + a.x2 * b.x2; }
inline double norm(const Point2& a) noexcept { return std::hypot(a.x1, a.x2); }
constexpr double norm2(const Point2& a) noexcept { return a.x1 * a.x1 + a.x2 * a.x2; }
// Rotation by +90 degrees.
constexpr Point2 perp(const Point2& a) noexcept { return {-a.x2, a.x1}; }
inline bool is_finite(const Point2& a) noexcept { return std::isfinite(a.x1) && std::isfinite(a.x2); }

}  // namespace pvlab
