#pragma once

#include "ecfem/geometry.hpp"

#include <array>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ecfem {

enum class BoundaryMarker : int {
    CornerEdge = 1, ///< on one of the rays theta = 0 or theta = omega
    Far = 2,        ///< any other part of the boundary
};

struct BoundaryEdge {
    int a = 0;
    int b = 0;
    BoundaryMarker marker = BoundaryMarker::Far;
};

using Triangle = std::array<int, 3>;

/// Conforming triangulation of a benchmark domain. Immutable after construction.
///
/// For the slit domain every vertex on {(x,0): 0 < x <= 1} exists twice, once
/// with Side::Upper (used by triangles above the slit) and once with
/// Side::Lower, so the two slit sides never share an edge.
struct Mesh2D {
    DomainSpec domain;
    std::vector<Vec2> vertices;
    std::vector<Side> sides;
    std::vector<Triangle> triangles;
    std::vector<BoundaryEdge> boundary_edges;
    int corner_vertex = -1;
    int level = 1;
    double h = 0.0;

    int num_vertices() const { return static_cast<int>(vertices.size()); }
    int num_triangles() const { return static_cast<int>(triangles.size()); }

    std::array<Vec2, 3> corners(int t) const;
    Vec2 centroid(int t) const;
    double area(int t) const;
    double diameter(int t) const;
    /// Side used to resolve the polar angle of points in triangle t.
    Side element_side(int t) const;
    /// Local index (0..2) of the corner vertex in triangle t, or -1.
    int corner_local_index(int t) const;
    /// Indices of the triangles having the re-entrant corner as a vertex.
    std::vector<int> corner_patch() const;
};

/// Shape of the level-1 corner patch.
enum class PatchVariant {
    Standard, ///< criss-cross squares (lshape, slit), the fan for pacman
    Fan,      ///< omega/(pi/4) congruent triangles of leg 1 at the corner, closed by one triangle per wedge
    Mirror,   ///< two rim vertices moved symmetrically about the bisector
    Skewed,   ///< one rim vertex moved, no symmetry left
};

const char* to_string(PatchVariant v);
/// "standard", "fan", "mirror", "skewed"; throws ConfigError otherwise.
PatchVariant parse_patch_variant(std::string_view name);

Mesh2D generate_initial_mesh(const DomainSpec& spec, PatchVariant variant = PatchVariant::Standard);

/// Red refinement: every triangle split into four by its edge midpoints.
Mesh2D refine_uniform(const Mesh2D& mesh);

/// Level-`level` mesh obtained from the initial mesh by uniform refinement.
Mesh2D generate_mesh(const DomainSpec& spec, int level, PatchVariant variant = PatchVariant::Standard);

/// Number of distinct edges (slit sides counted separately).
int count_edges(const Mesh2D& mesh);

struct ConformityReport {
    bool ok = true;
    std::string message;
};

/// Positive orientation, edges shared by at most two oppositely oriented
/// triangles, boundary length equal to the polygon perimeter, area sum equal
/// to the polygon area.
ConformityReport check_conformity(const Mesh2D& mesh, double rel_tol = 1e-12);

struct CornerLayers {
    std::vector<std::vector<int>> layers; ///< S_h^1 ... S_h^K (triangle indices)
    std::vector<double> inner_radius;     ///< min vertex radius per layer
    std::vector<double> outer_radius;     ///< max vertex radius per layer
    std::vector<double> kappa;            ///< (outer - inner) / h per layer, diagnostic only

    int count() const { return static_cast<int>(layers.size()); }
    /// Union of all layers, sorted.
    std::vector<int> support() const;
};

/// Radial element layers around the corner: S^1 holds the triangles touching
/// the corner, S^i the triangles outside S^1..S^{i-1} sharing a vertex with S^{i-1}.
/// Throws LayersTooLarge if a layer triangle has an edge on the far boundary.
CornerLayers corner_layers(const Mesh2D& mesh, int count);

enum class SymmetryClass { G1 = 1, G2 = 2, G3 = 3 };

const char* to_string(SymmetryClass c);

/// Strongest symmetry of the corner patch: G3 (rotations of one triangle by
/// omega/n), G2 (mirror image about theta = omega/2), otherwise G1.
SymmetryClass classify_corner_symmetry(const Mesh2D& mesh, double tol = 1e-12);

/// Triangles of `mesh` lying inside the union of the given coarse triangles
/// (by centroid), e.g. the descendants of a level-1 corner patch.
std::vector<int> triangles_inside(const Mesh2D& mesh, std::span<const std::array<Vec2, 3>> region);

/// Plain-text format: "nv nt ne", nv lines "x y [side]", nt lines "i0 i1 i2",
/// ne lines "i j marker".
void write_mesh(std::ostream& os, const Mesh2D& mesh);
Mesh2D read_mesh(std::istream& is, const DomainSpec& domain, int level = 1);

} // namespace ecfem
