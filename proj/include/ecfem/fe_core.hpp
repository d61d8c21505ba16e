#pragma once

#include "ecfem/geometry.hpp"

#include <Eigen/Dense>

#include <array>
#include <functional>
#include <vector>

namespace ecfem {

/// Nodal Lagrange element of order 1..4 on the reference triangle
/// {(0,0), (1,0), (0,1)}.
///
/// Node order: the three vertices, then k-1 nodes on each edge
/// (v0->v1, v1->v2, v2->v0, in traversal direction), then interior lattice
/// points row by row.
class ReferenceElement {
public:
    explicit ReferenceElement(int order);

    int order() const { return order_; }
    int num_nodes() const { return static_cast<int>(nodes_.size()); }
    const std::vector<Vec2>& nodes() const { return nodes_; }

    /// Shape function values at reference point p.
    Eigen::VectorXd values(const Vec2& p) const;
    /// Reference gradients, one row per shape function.
    Eigen::MatrixX2d gradients(const Vec2& p) const;

private:
    int order_;
    std::vector<Vec2> nodes_;
    std::vector<std::array<int, 3>> multi_index_;
};

/// Shared reference element for order k (k in 1..4).
const ReferenceElement& reference_element(int order);

/// Quadrature on the reference triangle. Weights sum to 1/2.
struct QuadratureRule {
    std::vector<Vec2> points;
    std::vector<double> weights;
    int degree = 0;

    std::size_t size() const { return points.size(); }
    /// Barycentric coordinates (l0, l1, l2) of point i.
    Eigen::Vector3d barycentric(std::size_t i) const;
};

/// Gauss-Legendre nodes and weights on [0, 1].
void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights);

/// Collapsed (conical product) Gauss rule exact for polynomials of total
/// degree <= `degree`. Cached; thread-safe.
const QuadratureRule& triangle_rule(int degree);

/// Quadrature points and weights in physical coordinates.
struct PhysicalQuadrature {
    std::vector<Vec2> points;
    std::vector<double> weights;
};

struct GradedQuadratureConfig {
    double ratio = 0.5;    ///< geometric shell ratio toward the corner
    int max_depth = 40;    ///< maximal number of shells
    double rel_tol = 1e-12;
    int min_points = 10;   ///< lower bound for Gauss points per shell direction
};

/// Shell quadrature for a triangle whose vertex `corner` (0..2) is a point
/// singularity of the integrand: the collapsed radial coordinate is split
/// geometrically and each shell gets a Gauss rule of the given degree (the
/// innermost remainder included).
PhysicalQuadrature graded_points(const std::array<Vec2, 3>& tri, int corner, int degree,
                                 const GradedQuadratureConfig& cfg = {});

/// Plain rule mapped to the triangle.
PhysicalQuadrature mapped_points(const std::array<Vec2, 3>& tri, const QuadratureRule& rule);

struct GradedResult {
    double value = 0.0;
    bool converged = false;
    int depth = 0;
};

/// Adaptive version: adds shells until the last one contributes less than
/// rel_tol of the accumulated absolute shell sum, or max_depth is hit.
GradedResult integrate_graded(const std::function<double(const Vec2&)>& f, const std::array<Vec2, 3>& tri,
                              int corner, int degree, const GradedQuadratureConfig& cfg = {});

/// Element stiffness matrix (exact for affine elements). Throws DegenerateTriangle.
Eigen::MatrixXd local_stiffness(const std::array<Vec2, 3>& tri, int order);

/// Affine map data of a triangle: x = v0 + J * xi.
struct AffineMap {
    Vec2 origin;
    Eigen::Matrix2d jacobian;
    Eigen::Matrix2d inverse_transpose;
    double det = 0.0;

    explicit AffineMap(const std::array<Vec2, 3>& tri);
    Vec2 to_physical(const Vec2& xi) const { return origin + jacobian * xi; }
    Vec2 to_reference(const Vec2& x) const;
};

} // namespace ecfem
