#include "ecfem/geometry.hpp"

#include "ecfem/errors.hpp"

#include <cmath>

namespace ecfem {

namespace {
constexpr double pi = std::numbers::pi;
}

DomainSpec DomainSpec::make(DomainKind kind)
{
    switch (kind) {
    case DomainKind::LShape: return {kind, 1.5 * pi};
    case DomainKind::Pacman: return {kind, 1.75 * pi};
    case DomainKind::Slit: return {kind, 2.0 * pi};
    }
    throw PreconditionViolation("unknown domain kind");
}

DomainSpec DomainSpec::parse(std::string_view name)
{
    if (name == "lshape") return make(DomainKind::LShape);
    if (name == "pacman") return make(DomainKind::Pacman);
    if (name == "slit") return make(DomainKind::Slit);
    throw ConfigError("unknown domain '" + std::string(name) + "' (expected lshape|pacman|slit)");
}

std::string DomainSpec::name() const
{
    switch (kind) {
    case DomainKind::LShape: return "lshape";
    case DomainKind::Pacman: return "pacman";
    case DomainKind::Slit: return "slit";
    }
    return "?";
}

double DomainSpec::area() const
{
    switch (kind) {
    case DomainKind::LShape: return 3.0;
    case DomainKind::Pacman: return 3.5;
    case DomainKind::Slit: return 4.0;
    }
    return 0.0;
}

double DomainSpec::perimeter() const
{
    switch (kind) {
    case DomainKind::LShape: return 8.0;
    case DomainKind::Pacman: return 8.0 + std::sqrt(2.0);
    case DomainKind::Slit: return 10.0;
    }
    return 0.0;
}

Polar to_polar(const DomainSpec& domain, const Vec2& p, Side side)
{
    const double r = std::hypot(p.x(), p.y());
    if (r == 0.0) return {0.0, 0.0};
    if (domain.kind == DomainKind::Slit && p.y() == 0.0 && p.x() > 0.0) {
        if (side == Side::Upper) return {r, 0.0};
        if (side == Side::Lower) return {r, 2.0 * pi};
        throw BranchAmbiguous("point on the slit needs an upper/lower side tag");
    }
    double theta = std::atan2(p.y(), p.x());
    if (theta < 0.0) theta += 2.0 * pi;
    // atan2 returns +-0 or values a few ulps off the exact edge angle; clamp
    // to the admissible range so sin(lambda*theta) vanishes on the edges.
    if (theta > domain.omega) theta = domain.omega;
    return {r, theta};
}

bool on_corner_ray(const DomainSpec& domain, const Vec2& p, double tol)
{
    if (std::abs(p.y()) <= tol && p.x() >= -tol) return true;
    const Vec2 d(std::cos(domain.omega), std::sin(domain.omega));
    return std::abs(cross2(d, p)) <= tol && d.dot(p) >= -tol;
}

} // namespace ecfem
