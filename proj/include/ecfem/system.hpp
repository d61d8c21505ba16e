#pragma once

#include "ecfem/analytic.hpp"
#include "ecfem/fe_core.hpp"
#include "ecfem/mesh.hpp"

#include <Eigen/Sparse>

#include <functional>
#include <iosfwd>
#include <limits>
#include <memory>
#include <span>
#include <vector>

namespace ecfem {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// Global numbering of the P_k nodes: vertices first, then the k-1 nodes of
/// every edge (edges sorted by their vertex pair, nodes running from the lower
/// to the higher vertex index), then the interior nodes triangle by triangle.
struct DofMap {
    int order = 1;
    int num_vertex_dofs = 0;
    int num_edge_dofs = 0;
    int num_interior_dofs = 0;
    std::vector<std::vector<int>> cell_dofs; ///< per triangle, in ReferenceElement node order
    std::vector<Vec2> nodes;
    std::vector<Side> node_sides;
    std::vector<char> boundary;

    int size() const { return static_cast<int>(nodes.size()); }
};

DofMap build_dofmap(const Mesh2D& mesh, int order);

/// Mesh plus numbering; shared by all discrete functions living on it.
struct FESpace {
    Mesh2D mesh;
    DofMap dofs;

    int order() const { return dofs.order; }
    static std::shared_ptr<const FESpace> make(Mesh2D mesh, int order);
};

/// Which quadrature an element gets: graded shells if it touches the corner,
/// a high-degree rule if it is close to it, the plain rule otherwise.
struct QuadraturePolicy {
    int degree = 8;
    int near_degree = 24;
    double near_factor = 2.0; ///< "close" = corner within near_factor diameters of the centroid
    GradedQuadratureConfig graded{};

    static QuadraturePolicy for_order(int order) { return {2 * order + 4}; }
};

struct ElementQuadrature {
    std::vector<Vec2> ref;  ///< reference coordinates
    std::vector<Vec2> phys; ///< physical coordinates
    std::vector<double> weights;

    std::size_t size() const { return weights.size(); }
};

ElementQuadrature element_quadrature(const Mesh2D& mesh, int t, const QuadraturePolicy& policy);

SparseMatrix assemble_stiffness(const FESpace& space);

/// sum_T in elements of the integral of w(x) grad u . grad v, with the given
/// quadrature per element.
SparseMatrix assemble_weighted_stiffness(const FESpace& space, std::span<const int> elements,
                                         const std::function<double(const Vec2&)>& weight,
                                         const std::function<ElementQuadrature(int)>& quadrature);

using PointFunction = std::function<double(const Vec2&, Side)>;
using VectorFunction = std::function<Vec2(const Vec2&, Side)>;

/// Weak form a(w, v) = (f, v) + (G, grad v) with w = g_D on the boundary.
/// Empty functions mean zero.
struct ProblemSpec {
    PointFunction f;
    VectorFunction flux;
    double flux_radius = std::numeric_limits<double>::infinity(); ///< flux vanishes for r >= flux_radius
    PointFunction trace;

    /// Harmonic problem with the trace of u.
    static ProblemSpec dirichlet(const ExactSolution& u);
};

Eigen::VectorXd assemble_load(const FESpace& space, const ProblemSpec& prob, const QuadraturePolicy& policy);

/// Nodal interpolant of a field at the DoF nodes.
Eigen::VectorXd interpolate(const FESpace& space, const PointFunction& fn);

/// Split of the DoFs into free (interior) and constrained (boundary) ones.
struct DirichletMap {
    std::vector<int> free_dofs;
    std::vector<int> reduced; ///< full index -> reduced index, -1 on the boundary
    SparseMatrix restriction; ///< free x full selection matrix

    int num_free() const { return static_cast<int>(free_dofs.size()); }
};

DirichletMap make_dirichlet_map(const DofMap& dofs);

/// A_ff of a full matrix.
SparseMatrix reduce_matrix(const DirichletMap& map, const SparseMatrix& A);

/// Reduced right-hand side b_f - A_fb g_b for full load b and boundary values g.
Eigen::VectorXd reduce_rhs(const DirichletMap& map, const SparseMatrix& A, const Eigen::VectorXd& b,
                           const Eigen::VectorXd& boundary_values);

/// Full vector: boundary values where constrained, x elsewhere.
Eigen::VectorXd expand_solution(const DirichletMap& map, const Eigen::VectorXd& x,
                                const Eigen::VectorXd& boundary_values);

struct SolverOptions {
    double tol = 1e-13; ///< normwise backward error ||r|| / (||A|| ||x|| + ||b||), infinity norms
    int max_refinements = 8;
};

/// Sparse Cholesky (CHOLMOD supernodal) with iterative refinement. The
/// symbolic analysis is kept when factorize() is called again on a matrix with
/// the same pattern.
class SpdSolver {
public:
    explicit SpdSolver(SolverOptions opts = {});
    ~SpdSolver();
    SpdSolver(SpdSolver&&) noexcept;
    SpdSolver& operator=(SpdSolver&&) noexcept;

    /// Throws NotPositiveDefinite.
    void factorize(const SparseMatrix& A);
    /// Throws MaxIterations if the backward error stays above tol.
    Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
    double last_backward_error() const { return last_error_; }
    int size() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    SolverOptions opts_;
    mutable double last_error_ = 0.0;
};

Eigen::VectorXd solve_spd(const SparseMatrix& A, const Eigen::VectorXd& b, const SolverOptions& opts = {});

/// Coefficient vector over an FESpace.
class DiscreteFunction {
public:
    DiscreteFunction(std::shared_ptr<const FESpace> space, Eigen::VectorXd coeffs);

    const FESpace& space() const { return *space_; }
    std::shared_ptr<const FESpace> space_ptr() const { return space_; }
    const Eigen::VectorXd& coeffs() const { return coeffs_; }

    /// Value and gradient at physical point x of triangle t.
    FieldValue eval(int t, const Vec2& x) const;
    /// Same at a reference point of triangle t.
    FieldValue eval_reference(int t, const Vec2& xi) const;

    /// "dof,x,y,value" lines with header.
    void write_csv(std::ostream& os) const;

private:
    std::shared_ptr<const FESpace> space_;
    Eigen::VectorXd coeffs_;
};

/// Solution of (A - C) u = load with Dirichlet data prob.trace. `C` may be an
/// empty matrix (standard Galerkin).
DiscreteFunction solve_modified(const std::shared_ptr<const FESpace>& space, const SparseMatrix& A,
                                const SparseMatrix& C, const ProblemSpec& prob, const QuadraturePolicy& policy,
                                const SolverOptions& opts = {});

} // namespace ecfem
