#include "ecfem/mesh.hpp"

#include "ecfem/errors.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <tuple>
#include <utility>

namespace ecfem {

namespace {

using EdgeKey = std::pair<int, int>;

EdgeKey edge_key(int a, int b) { return a < b ? EdgeKey{a, b} : EdgeKey{b, a}; }

bool on_slit_line(const Vec2& p) { return p.y() == 0.0 && p.x() > 0.0; }

class MeshBuilder {
public:
    int add(const Vec2& p, Side side = Side::None)
    {
        const auto key = std::make_tuple(std::llround(p.x() * 1e9), std::llround(p.y() * 1e9), static_cast<int>(side));
        auto [it, inserted] = index_.try_emplace(key, static_cast<int>(vertices_.size()));
        if (inserted) {
            vertices_.push_back(p);
            sides_.push_back(side);
        }
        return it->second;
    }

    void triangle(int a, int b, int c)
    {
        if (signed_area(vertices_[a], vertices_[b], vertices_[c]) < 0.0) std::swap(b, c);
        triangles_.push_back({a, b, c});
    }

    /// Unit square with lower-left corner (x0, y0), split by both diagonals.
    void criss_cross(double x0, double y0, bool slit)
    {
        const Side side = (slit && y0 < 0.0) ? Side::Lower : Side::Upper;
        auto vertex = [&](double x, double y) {
            const Vec2 p(x, y);
            return add(p, slit && on_slit_line(p) ? side : Side::None);
        };
        const int p00 = vertex(x0, y0);
        const int p10 = vertex(x0 + 1.0, y0);
        const int p11 = vertex(x0 + 1.0, y0 + 1.0);
        const int p01 = vertex(x0, y0 + 1.0);
        const int c = vertex(x0 + 0.5, y0 + 0.5);
        triangle(p00, p10, c);
        triangle(p10, p11, c);
        triangle(p11, p01, c);
        triangle(p01, p00, c);
    }

    std::vector<Vec2> vertices_;
    std::vector<Side> sides_;
    std::vector<Triangle> triangles_;

private:
    std::map<std::tuple<long long, long long, int>, int> index_;
};

std::vector<BoundaryEdge> find_boundary_edges(const DomainSpec& domain, const std::vector<Vec2>& vertices,
                                              const std::vector<Triangle>& triangles)
{
    std::map<EdgeKey, std::pair<int, EdgeKey>> count; // key -> (uses, oriented edge)
    for (const auto& t : triangles) {
        for (int e = 0; e < 3; ++e) {
            const int a = t[e];
            const int b = t[(e + 1) % 3];
            auto& entry = count[edge_key(a, b)];
            ++entry.first;
            entry.second = {a, b};
        }
    }
    std::vector<BoundaryEdge> edges;
    for (const auto& [key, entry] : count) {
        if (entry.first != 1) continue;
        const auto [a, b] = entry.second;
        const Vec2 mid = 0.5 * (vertices[a] + vertices[b]);
        const bool corner = on_corner_ray(domain, vertices[a]) && on_corner_ray(domain, vertices[b]) &&
                            on_corner_ray(domain, mid);
        edges.push_back({a, b, corner ? BoundaryMarker::CornerEdge : BoundaryMarker::Far});
    }
    return edges;
}

double compute_h(const Mesh2D& mesh)
{
    double h = 0.0;
    for (int t = 0; t < mesh.num_triangles(); ++t) h = std::max(h, mesh.diameter(t));
    return h;
}

int find_origin(const std::vector<Vec2>& vertices)
{
    for (std::size_t i = 0; i < vertices.size(); ++i)
        if (vertices[i].norm() == 0.0) return static_cast<int>(i);
    throw PreconditionViolation("mesh has no vertex at the origin");
}

void build_lshape(MeshBuilder& b)
{
    b.criss_cross(-1.0, -1.0, false);
    b.criss_cross(-1.0, 0.0, false);
    b.criss_cross(0.0, 0.0, false);
}

void build_slit(MeshBuilder& b)
{
    b.criss_cross(-1.0, -1.0, true);
    b.criss_cross(0.0, -1.0, true);
    b.criss_cross(-1.0, 0.0, true);
    b.criss_cross(0.0, 0.0, true);
}

// n congruent isosceles triangles (apex angle pi/4, legs 1) at the origin; every
// wedge between two rim points is closed by one triangle through the square
// corner next to the diagonal rim point.
void build_fan(MeshBuilder& b, const DomainSpec& spec)
{
    const int n = static_cast<int>(std::lround(spec.omega / (std::numbers::pi / 4.0)));
    const bool slit = spec.kind == DomainKind::Slit;
    const int origin = b.add(Vec2(0, 0));
    std::vector<int> rim(n + 1);
    std::vector<Vec2> pos(n + 1);
    for (int m = 0; m <= n; ++m) {
        const double angle = m * std::numbers::pi / 4.0;
        pos[m] = Vec2(std::cos(angle), std::sin(angle));
        // exact coordinates on the axes
        if (m % 2 == 0) pos[m] = Vec2(std::round(pos[m].x()), std::round(pos[m].y()));
        Side side = Side::None;
        if (slit && m == 0) side = Side::Upper;
        if (slit && m == n) side = Side::Lower;
        rim[m] = b.add(pos[m], side);
    }
    for (int m = 0; m < n; ++m) {
        const int diag = (m % 2 == 1) ? m : m + 1;
        const Vec2 q = pos[diag] * std::sqrt(2.0);
        const int corner = b.add(Vec2(std::round(q.x()), std::round(q.y())));
        b.triangle(origin, rim[m], rim[m + 1]);
        b.triangle(rim[m], corner, rim[m + 1]);
    }
}

// Fan of seven congruent isosceles triangles (apex angle pi/4, legs 1/2) at the
// origin; rim point m sits on the segment from the origin to boundary vertex m.
void build_pacman(MeshBuilder& b)
{
    const std::array<Vec2, 8> outer{Vec2(1, 0), Vec2(1, 1), Vec2(0, 1), Vec2(-1, 1),
                                    Vec2(-1, 0), Vec2(-1, -1), Vec2(0, -1), Vec2(1, -1)};
    constexpr double rim_radius = 0.5;
    const int origin = b.add(Vec2(0, 0));
    std::array<int, 8> rim{};
    std::array<int, 8> bnd{};
    for (int m = 0; m < 8; ++m) {
        const double angle = m * std::numbers::pi / 4.0;
        rim[m] = b.add(Vec2(rim_radius * std::cos(angle), rim_radius * std::sin(angle)));
        bnd[m] = b.add(outer[m]);
    }
    for (int m = 0; m < 7; ++m) b.triangle(origin, rim[m], rim[m + 1]);
    for (int m = 0; m < 7; ++m) {
        const Vec2& r0 = b.vertices_[rim[m]];
        const Vec2& r1 = b.vertices_[rim[m + 1]];
        const Vec2& b0 = b.vertices_[bnd[m]];
        const Vec2& b1 = b.vertices_[bnd[m + 1]];
        if ((r0 - b1).norm() <= (b0 - r1).norm() + 1e-14) {
            b.triangle(rim[m], bnd[m], bnd[m + 1]);
            b.triangle(rim[m], bnd[m + 1], rim[m + 1]);
        } else {
            b.triangle(rim[m], bnd[m], rim[m + 1]);
            b.triangle(bnd[m], bnd[m + 1], rim[m + 1]);
        }
    }
}

// Rim vertices moved for the symmetry-breaking variants. Positions are chosen
// so that all triangles keep a positive area.
void apply_variant(const DomainSpec& spec, PatchVariant variant, std::vector<Vec2>& vertices)
{
    if (variant == PatchVariant::Standard || variant == PatchVariant::Fan) return;
    auto move = [&](const Vec2& from, const Vec2& to) {
        for (auto& v : vertices)
            if ((v - from).norm() < 1e-12) v = to;
    };
    switch (spec.kind) {
    case DomainKind::LShape:
        // bisector is theta = 3pi/4; (0.5,0.5) and (-0.5,-0.5) are mirror images
        if (variant == PatchVariant::Mirror) {
            move(Vec2(0.5, 0.5), Vec2(0.6, 0.6));
            move(Vec2(-0.5, -0.5), Vec2(-0.6, -0.6));
        } else {
            move(Vec2(0.5, 0.5), Vec2(0.58, 0.52));
        }
        break;
    case DomainKind::Slit:
        // bisector is theta = pi; (0.5,0.5) and (0.5,-0.5) are mirror images
        if (variant == PatchVariant::Mirror) {
            move(Vec2(0.5, 0.5), Vec2(0.6, 0.6));
            move(Vec2(0.5, -0.5), Vec2(0.6, -0.6));
        } else {
            move(Vec2(0.5, 0.5), Vec2(0.58, 0.52));
        }
        break;
    case DomainKind::Pacman: {
        // rim points m and 7-m are mirror images about theta = 7pi/8
        const double c = std::sqrt(0.5);
        const Vec2 r2(0.0, 0.5);
        const Vec2 r5(-0.5 * c, -0.5 * c);
        if (variant == PatchVariant::Mirror) {
            move(r2, 1.3 * r2);
            move(r5, 1.3 * r5);
        } else {
            move(r2, Vec2(0.08, 0.62));
        }
        break;
    }
    }
}

} // namespace

std::array<Vec2, 3> Mesh2D::corners(int t) const
{
    const auto& tri = triangles[t];
    return {vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]};
}

Vec2 Mesh2D::centroid(int t) const
{
    const auto c = corners(t);
    return (c[0] + c[1] + c[2]) / 3.0;
}

double Mesh2D::area(int t) const
{
    const auto c = corners(t);
    return signed_area(c[0], c[1], c[2]);
}

double Mesh2D::diameter(int t) const
{
    const auto c = corners(t);
    return std::max({(c[0] - c[1]).norm(), (c[1] - c[2]).norm(), (c[2] - c[0]).norm()});
}

Side Mesh2D::element_side(int t) const
{
    if (domain.kind != DomainKind::Slit) return Side::None;
    return centroid(t).y() > 0.0 ? Side::Upper : Side::Lower;
}

int Mesh2D::corner_local_index(int t) const
{
    for (int i = 0; i < 3; ++i)
        if (triangles[t][i] == corner_vertex) return i;
    return -1;
}

std::vector<int> Mesh2D::corner_patch() const
{
    std::vector<int> patch;
    for (int t = 0; t < num_triangles(); ++t)
        if (corner_local_index(t) >= 0) patch.push_back(t);
    return patch;
}

Mesh2D generate_initial_mesh(const DomainSpec& spec, PatchVariant variant)
{
    MeshBuilder b;
    const bool fan = variant == PatchVariant::Fan || (spec.kind == DomainKind::Pacman && variant == PatchVariant::Standard);
    if (fan)
        build_fan(b, spec);
    else
        switch (spec.kind) {
        case DomainKind::LShape: build_lshape(b); break;
        case DomainKind::Pacman: build_pacman(b); break;
        case DomainKind::Slit: build_slit(b); break;
        }
    Mesh2D mesh;
    mesh.domain = spec;
    mesh.vertices = std::move(b.vertices_);
    mesh.sides = std::move(b.sides_);
    mesh.triangles = std::move(b.triangles_);
    apply_variant(spec, variant, mesh.vertices);
    mesh.boundary_edges = find_boundary_edges(spec, mesh.vertices, mesh.triangles);
    mesh.corner_vertex = find_origin(mesh.vertices);
    mesh.level = 1;
    mesh.h = compute_h(mesh);
    return mesh;
}

Mesh2D refine_uniform(const Mesh2D& mesh)
{
    Mesh2D fine;
    fine.domain = mesh.domain;
    fine.vertices = mesh.vertices;
    fine.sides = mesh.sides;
    fine.corner_vertex = mesh.corner_vertex;
    fine.level = mesh.level + 1;
    fine.h = 0.5 * mesh.h;

    std::map<EdgeKey, int> midpoint;
    auto mid = [&](int a, int b) {
        auto [it, inserted] = midpoint.try_emplace(edge_key(a, b), -1);
        if (inserted) {
            const Vec2 p = 0.5 * (mesh.vertices[a] + mesh.vertices[b]);
            Side side = Side::None;
            if (mesh.domain.kind == DomainKind::Slit && on_slit_line(p))
                side = mesh.sides[a] != Side::None ? mesh.sides[a] : mesh.sides[b];
            it->second = static_cast<int>(fine.vertices.size());
            fine.vertices.push_back(p);
            fine.sides.push_back(side);
        }
        return it->second;
    };

    fine.triangles.reserve(4 * mesh.triangles.size());
    for (const auto& t : mesh.triangles) {
        const int m01 = mid(t[0], t[1]);
        const int m12 = mid(t[1], t[2]);
        const int m20 = mid(t[2], t[0]);
        fine.triangles.push_back({t[0], m01, m20});
        fine.triangles.push_back({m01, t[1], m12});
        fine.triangles.push_back({m20, m12, t[2]});
        fine.triangles.push_back({m01, m12, m20});
    }
    fine.boundary_edges.reserve(2 * mesh.boundary_edges.size());
    for (const auto& e : mesh.boundary_edges) {
        const int m = midpoint.at(edge_key(e.a, e.b));
        fine.boundary_edges.push_back({e.a, m, e.marker});
        fine.boundary_edges.push_back({m, e.b, e.marker});
    }
    return fine;
}

Mesh2D generate_mesh(const DomainSpec& spec, int level, PatchVariant variant)
{
    if (level < 1) throw PreconditionViolation("mesh level must be >= 1");
    Mesh2D mesh = generate_initial_mesh(spec, variant);
    while (mesh.level < level) mesh = refine_uniform(mesh);
    return mesh;
}

int count_edges(const Mesh2D& mesh)
{
    std::set<EdgeKey> edges;
    for (const auto& t : mesh.triangles)
        for (int e = 0; e < 3; ++e) edges.insert(edge_key(t[e], t[(e + 1) % 3]));
    return static_cast<int>(edges.size());
}

ConformityReport check_conformity(const Mesh2D& mesh, double rel_tol)
{
    auto fail = [](std::string msg) { return ConformityReport{false, std::move(msg)}; };
    double area = 0.0;
    for (int t = 0; t < mesh.num_triangles(); ++t) {
        const double a = mesh.area(t);
        if (!(a > 0.0)) return fail("triangle " + std::to_string(t) + " has non-positive area");
        area += a;
    }
    const double expected_area = mesh.domain.area();
    if (std::abs(area - expected_area) > rel_tol * expected_area * 10.0)
        return fail("area sum " + std::to_string(area) + " differs from polygon area");

    std::map<std::pair<int, int>, int> oriented;
    for (const auto& t : mesh.triangles)
        for (int e = 0; e < 3; ++e) ++oriented[{t[e], t[(e + 1) % 3]}];
    double boundary_length = 0.0;
    for (const auto& [edge, n] : oriented) {
        if (n != 1) return fail("edge used twice with the same orientation");
        if (oriented.count({edge.second, edge.first}) == 0)
            boundary_length += (mesh.vertices[edge.first] - mesh.vertices[edge.second]).norm();
    }
    const double perimeter = mesh.domain.perimeter();
    if (std::abs(boundary_length - perimeter) > rel_tol * perimeter * 10.0)
        return fail("boundary length " + std::to_string(boundary_length) + " differs from perimeter (hanging node?)");
    return {};
}

std::vector<int> CornerLayers::support() const
{
    std::vector<int> all;
    for (const auto& l : layers) all.insert(all.end(), l.begin(), l.end());
    std::sort(all.begin(), all.end());
    return all;
}

CornerLayers corner_layers(const Mesh2D& mesh, int count)
{
    if (count < 1) throw PreconditionViolation("corner_layers: count must be >= 1");

    std::set<std::pair<int, int>> far_edges;
    for (const auto& e : mesh.boundary_edges)
        if (e.marker == BoundaryMarker::Far) far_edges.insert(std::minmax(e.a, e.b));
    std::vector<std::vector<int>> vertex_triangles(mesh.vertices.size());
    for (int t = 0; t < mesh.num_triangles(); ++t)
        for (int v : mesh.triangles[t]) vertex_triangles[v].push_back(t);

    std::vector<int> layer_of(mesh.triangles.size(), 0);
    CornerLayers result;
    std::vector<int> current = vertex_triangles[mesh.corner_vertex];
    std::sort(current.begin(), current.end());
    for (int i = 1; i <= count; ++i) {
        if (current.empty()) throw LayersTooLarge("corner layer " + std::to_string(i) + " is empty");
        double rmin = std::numeric_limits<double>::infinity();
        double rmax = 0.0;
        for (int t : current) {
            layer_of[t] = i;
            for (int e = 0; e < 3; ++e)
                if (far_edges.count(std::minmax(mesh.triangles[t][e], mesh.triangles[t][(e + 1) % 3])))
                    throw LayersTooLarge("corner layer " + std::to_string(i) + " reaches the far boundary at level " +
                                         std::to_string(mesh.level));
            for (int v : mesh.triangles[t]) {
                if (v == mesh.corner_vertex) continue;
                const double r = mesh.vertices[v].norm();
                rmin = std::min(rmin, r);
                rmax = std::max(rmax, r);
            }
        }
        if (i == 1) rmin = 0.0;
        result.layers.push_back(current);
        result.inner_radius.push_back(rmin);
        result.outer_radius.push_back(rmax);
        result.kappa.push_back((rmax - rmin) / mesh.h);

        std::set<int> next;
        for (int t : current)
            for (int v : mesh.triangles[t])
                for (int n : vertex_triangles[v])
                    if (layer_of[n] == 0) next.insert(n);
        current.assign(next.begin(), next.end());
    }
    return result;
}

const char* to_string(PatchVariant v)
{
    switch (v) {
    case PatchVariant::Standard: return "standard";
    case PatchVariant::Fan: return "fan";
    case PatchVariant::Mirror: return "mirror";
    case PatchVariant::Skewed: return "skewed";
    }
    return "?";
}

PatchVariant parse_patch_variant(std::string_view name)
{
    if (name == "standard") return PatchVariant::Standard;
    if (name == "fan") return PatchVariant::Fan;
    if (name == "mirror") return PatchVariant::Mirror;
    if (name == "skewed") return PatchVariant::Skewed;
    throw ConfigError("unknown mesh variant '" + std::string(name) + "' (expected standard|fan|mirror|skewed)");
}

const char* to_string(SymmetryClass c)
{
    switch (c) {
    case SymmetryClass::G1: return "G1";
    case SymmetryClass::G2: return "G2";
    case SymmetryClass::G3: return "G3";
    }
    return "?";
}

SymmetryClass classify_corner_symmetry(const Mesh2D& mesh, double tol)
{
    const auto patch = mesh.corner_patch();
    if (patch.empty()) throw PreconditionViolation("empty corner patch");
    const double omega = mesh.domain.omega;

    // Non-corner vertices of each patch triangle, ordered by local polar angle.
    struct Wedge {
        double theta0, theta1;
        Vec2 p0, p1;
    };
    std::vector<Wedge> wedges;
    for (int t : patch) {
        const int c = mesh.corner_local_index(t);
        const Vec2 a = mesh.vertices[mesh.triangles[t][(c + 1) % 3]];
        const Vec2 b = mesh.vertices[mesh.triangles[t][(c + 2) % 3]];
        const Side side = mesh.element_side(t);
        // the vertex on the slit line belongs to this triangle's side
        const double ta = to_polar(mesh.domain, a, side).theta;
        const double tb = to_polar(mesh.domain, b, side).theta;
        wedges.push_back(ta < tb ? Wedge{ta, tb, a, b} : Wedge{tb, ta, b, a});
    }
    std::sort(wedges.begin(), wedges.end(), [](const Wedge& x, const Wedge& y) { return x.theta0 < y.theta0; });

    auto rotate = [](const Vec2& p, double phi) {
        return Vec2(std::cos(phi) * p.x() - std::sin(phi) * p.y(), std::sin(phi) * p.x() + std::cos(phi) * p.y());
    };
    auto same_pair = [&](const Vec2& a0, const Vec2& a1, const Vec2& b0, const Vec2& b1) {
        return ((a0 - b0).norm() <= tol && (a1 - b1).norm() <= tol) ||
               ((a0 - b1).norm() <= tol && (a1 - b0).norm() <= tol);
    };

    const int n = static_cast<int>(wedges.size());
    const double step = omega / n;
    bool g3 = true;
    for (int m = 0; m < n && g3; ++m) {
        const Vec2 q0 = rotate(wedges[0].p0, m * step);
        const Vec2 q1 = rotate(wedges[0].p1, m * step);
        g3 = same_pair(q0, q1, wedges[m].p0, wedges[m].p1);
    }
    if (g3) return SymmetryClass::G3;

    // reflection across the bisector theta = omega/2
    const Eigen::Matrix2d reflect{{std::cos(omega), std::sin(omega)}, {std::sin(omega), -std::cos(omega)}};
    for (const auto& w : wedges) {
        const Vec2 q0 = reflect * w.p0;
        const Vec2 q1 = reflect * w.p1;
        const bool found = std::any_of(wedges.begin(), wedges.end(),
                                       [&](const Wedge& o) { return same_pair(q0, q1, o.p0, o.p1); });
        if (!found) return SymmetryClass::G1;
    }
    return SymmetryClass::G2;
}

std::vector<int> triangles_inside(const Mesh2D& mesh, std::span<const std::array<Vec2, 3>> region)
{
    std::vector<int> inside;
    for (int t = 0; t < mesh.num_triangles(); ++t) {
        const Vec2 c = mesh.centroid(t);
        for (const auto& tri : region) {
            const double a0 = signed_area(tri[0], tri[1], c);
            const double a1 = signed_area(tri[1], tri[2], c);
            const double a2 = signed_area(tri[2], tri[0], c);
            if (a0 > 0.0 && a1 > 0.0 && a2 > 0.0) {
                inside.push_back(t);
                break;
            }
        }
    }
    return inside;
}

void write_mesh(std::ostream& os, const Mesh2D& mesh)
{
    os.precision(17);
    os << mesh.vertices.size() << ' ' << mesh.triangles.size() << ' ' << mesh.boundary_edges.size() << '\n';
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
        os << mesh.vertices[i].x() << ' ' << mesh.vertices[i].y();
        if (mesh.sides[i] == Side::Upper) os << " upper";
        if (mesh.sides[i] == Side::Lower) os << " lower";
        os << '\n';
    }
    for (const auto& t : mesh.triangles) os << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
    for (const auto& e : mesh.boundary_edges) os << e.a << ' ' << e.b << ' ' << static_cast<int>(e.marker) << '\n';
}

Mesh2D read_mesh(std::istream& is, const DomainSpec& domain, int level)
{
    std::size_t nv = 0, nt = 0, ne = 0;
    std::string line;
    if (!std::getline(is, line)) throw Error("read_mesh: missing header");
    std::istringstream header(line);
    if (!(header >> nv >> nt >> ne)) throw Error("read_mesh: malformed header");

    Mesh2D mesh;
    mesh.domain = domain;
    mesh.level = level;
    for (std::size_t i = 0; i < nv; ++i) {
        if (!std::getline(is, line)) throw Error("read_mesh: truncated vertex block");
        std::istringstream ls(line);
        double x = 0, y = 0;
        if (!(ls >> x >> y)) throw Error("read_mesh: malformed vertex line");
        std::string tag;
        Side side = Side::None;
        if (ls >> tag) {
            if (tag == "upper") side = Side::Upper;
            else if (tag == "lower") side = Side::Lower;
            else throw Error("read_mesh: unknown side tag '" + tag + "'");
        }
        mesh.vertices.emplace_back(x, y);
        mesh.sides.push_back(side);
    }
    for (std::size_t i = 0; i < nt; ++i) {
        Triangle t{};
        if (!(is >> t[0] >> t[1] >> t[2])) throw Error("read_mesh: malformed triangle line");
        for (int v : t)
            if (v < 0 || static_cast<std::size_t>(v) >= nv) throw Error("read_mesh: vertex index out of range");
        mesh.triangles.push_back(t);
    }
    for (std::size_t i = 0; i < ne; ++i) {
        int a = 0, b = 0, m = 0;
        if (!(is >> a >> b >> m)) throw Error("read_mesh: malformed boundary edge line");
        if (m != 1 && m != 2) throw Error("read_mesh: unknown boundary marker");
        mesh.boundary_edges.push_back({a, b, static_cast<BoundaryMarker>(m)});
    }
    mesh.corner_vertex = find_origin(mesh.vertices);
    mesh.h = compute_h(mesh);
    return mesh;
}

} // namespace ecfem
