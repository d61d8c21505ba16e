#pragma once

#include <Eigen/Core>

#include <cmath>
#include <numbers>
#include <string>
#include <string_view>

namespace ecfem {

using Vec2 = Eigen::Vector2d;

enum class DomainKind { LShape, Pacman, Slit };

/// Side tag for points on the slit line. Only meaningful for DomainKind::Slit.
enum class Side : int { None = 0, Upper = 1, Lower = 2 };

/// Benchmark domain with the re-entrant corner at the origin. The corner edges
/// lie on the rays theta = 0 (positive x-axis) and theta = omega.
struct DomainSpec {
    DomainKind kind = DomainKind::LShape;
    double omega = 1.5 * std::numbers::pi;

    static DomainSpec make(DomainKind kind);
    static DomainSpec parse(std::string_view name);

    std::string name() const;
    /// Exact area of the polygon.
    double area() const;
    /// Exact boundary length (both slit sides counted for the slit domain).
    double perimeter() const;
};

struct Polar {
    double r = 0.0;
    double theta = 0.0;
};

/// Polar coordinates in the local corner frame, theta in [0, omega].
/// On the slit line the side tag decides between theta = 0 and theta = 2*pi;
/// throws BranchAmbiguous when it is needed but Side::None is given.
Polar to_polar(const DomainSpec& domain, const Vec2& p, Side side = Side::None);

/// True if p lies on one of the two corner edges (rays theta = 0, theta = omega).
bool on_corner_ray(const DomainSpec& domain, const Vec2& p, double tol = 1e-12);

inline double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

inline double signed_area(const Vec2& a, const Vec2& b, const Vec2& c)
{
    return 0.5 * cross2(b - a, c - a);
}

} // namespace ecfem
