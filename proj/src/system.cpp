#include "ecfem/system.hpp"

#include "ecfem/errors.hpp"

#include <Eigen/CholmodSupport>

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>

namespace ecfem {

DofMap build_dofmap(const Mesh2D& mesh, int order)
{
    const ReferenceElement& ref = reference_element(order);
    const int k = order;
    const int nv = mesh.num_vertices();
    const int nt = mesh.num_triangles();

    DofMap d;
    d.order = k;
    d.cell_dofs.assign(nt, std::vector<int>(ref.num_nodes(), -1));

    std::map<std::pair<int, int>, int> edge_id;
    for (const auto& tri : mesh.triangles)
        for (int e = 0; e < 3; ++e) {
            const int a = tri[e], b = tri[(e + 1) % 3];
            edge_id.emplace(std::minmax(a, b), 0);
        }
    int next = 0;
    for (auto& [key, id] : edge_id) id = next++;
    const int ne = next;

    d.num_vertex_dofs = nv;
    d.num_edge_dofs = (k - 1) * ne;
    d.num_interior_dofs = (k - 1) * (k - 2) / 2 * nt;
    const int n = nv + d.num_edge_dofs + d.num_interior_dofs;
    d.nodes.assign(n, Vec2::Zero());
    d.node_sides.assign(n, Side::None);
    d.boundary.assign(n, 0);
    std::vector<char> seen(n, 0);

    const int per_interior = (k - 1) * (k - 2) / 2;
    for (int t = 0; t < nt; ++t) {
        const auto& tri = mesh.triangles[t];
        auto& cd = d.cell_dofs[t];
        int local = 0;
        for (int i = 0; i < 3; ++i) cd[local++] = tri[i];
        for (int e = 0; e < 3; ++e) {
            const int a = tri[e], b = tri[(e + 1) % 3];
            const int base = nv + (k - 1) * edge_id.at(std::minmax(a, b));
            for (int j = 1; j < k; ++j) cd[local++] = base + (a < b ? j - 1 : k - 1 - j);
        }
        for (int j = 0; j < per_interior; ++j) cd[local++] = nv + d.num_edge_dofs + per_interior * t + j;

        const AffineMap map(mesh.corners(t));
        const Side side = mesh.element_side(t);
        for (int m = 0; m < ref.num_nodes(); ++m) {
            const int g = cd[m];
            if (seen[g]) continue;
            seen[g] = 1;
            d.nodes[g] = map.to_physical(ref.nodes()[m]);
            d.node_sides[g] = side;
        }
    }
    for (int v = 0; v < nv; ++v) d.nodes[v] = mesh.vertices[v];

    for (const auto& be : mesh.boundary_edges) {
        d.boundary[be.a] = d.boundary[be.b] = 1;
        const int base = nv + (k - 1) * edge_id.at(std::minmax(be.a, be.b));
        for (int j = 0; j < k - 1; ++j) d.boundary[base + j] = 1;
    }
    return d;
}

std::shared_ptr<const FESpace> FESpace::make(Mesh2D mesh, int order)
{
    auto s = std::make_shared<FESpace>();
    s->dofs = build_dofmap(mesh, order);
    s->mesh = std::move(mesh);
    return s;
}

ElementQuadrature element_quadrature(const Mesh2D& mesh, int t, const QuadraturePolicy& policy)
{
    const auto tri = mesh.corners(t);
    const AffineMap map(tri);
    ElementQuadrature q;
    const int c = mesh.corner_local_index(t);
    if (c >= 0) {
        const PhysicalQuadrature pq = graded_points(tri, c, policy.degree, policy.graded);
        q.phys = pq.points;
        q.weights = pq.weights;
        q.ref.reserve(q.phys.size());
        for (const auto& x : q.phys) q.ref.push_back(map.to_reference(x));
        return q;
    }
    const Vec2 corner = mesh.vertices[mesh.corner_vertex];
    const bool near = (mesh.centroid(t) - corner).norm() < policy.near_factor * mesh.diameter(t);
    const QuadratureRule& rule = triangle_rule(near ? std::max(policy.near_degree, policy.degree) : policy.degree);
    q.ref = rule.points;
    q.phys.reserve(rule.size());
    q.weights.reserve(rule.size());
    for (std::size_t i = 0; i < rule.size(); ++i) {
        q.phys.push_back(map.to_physical(rule.points[i]));
        q.weights.push_back(rule.weights[i] * map.det);
    }
    return q;
}

namespace {

void add_local(std::vector<Eigen::Triplet<double>>& trip, const std::vector<int>& dofs, const Eigen::MatrixXd& K)
{
    for (std::size_t i = 0; i < dofs.size(); ++i)
        for (std::size_t j = 0; j < dofs.size(); ++j) trip.emplace_back(dofs[i], dofs[j], K(i, j));
}

} // namespace

SparseMatrix assemble_stiffness(const FESpace& space)
{
    const Mesh2D& mesh = space.mesh;
    const int nloc = reference_element(space.order()).num_nodes();
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(mesh.num_triangles()) * nloc * nloc);
    for (int t = 0; t < mesh.num_triangles(); ++t)
        add_local(trip, space.dofs.cell_dofs[t], local_stiffness(mesh.corners(t), space.order()));
    SparseMatrix A(space.dofs.size(), space.dofs.size());
    A.setFromTriplets(trip.begin(), trip.end());
    return A;
}

SparseMatrix assemble_weighted_stiffness(const FESpace& space, std::span<const int> elements,
                                         const std::function<double(const Vec2&)>& weight,
                                         const std::function<ElementQuadrature(int)>& quadrature)
{
    const Mesh2D& mesh = space.mesh;
    const ReferenceElement& ref = reference_element(space.order());
    const int nloc = ref.num_nodes();
    std::vector<Eigen::Triplet<double>> trip;
    for (int t : elements) {
        const AffineMap map(mesh.corners(t));
        const ElementQuadrature q = quadrature(t);
        Eigen::MatrixXd K = Eigen::MatrixXd::Zero(nloc, nloc);
        for (std::size_t i = 0; i < q.size(); ++i) {
            const Eigen::MatrixX2d g = ref.gradients(q.ref[i]) * map.inverse_transpose.transpose();
            K.noalias() += (q.weights[i] * weight(q.phys[i])) * g * g.transpose();
        }
        add_local(trip, space.dofs.cell_dofs[t], K);
    }
    SparseMatrix A(space.dofs.size(), space.dofs.size());
    A.setFromTriplets(trip.begin(), trip.end());
    return A;
}

ProblemSpec ProblemSpec::dirichlet(const ExactSolution& u)
{
    ProblemSpec p;
    p.trace = [u](const Vec2& x, Side side) { return dirichlet_trace(u, x, side); };
    return p;
}

Eigen::VectorXd assemble_load(const FESpace& space, const ProblemSpec& prob, const QuadraturePolicy& policy)
{
    const Mesh2D& mesh = space.mesh;
    const ReferenceElement& ref = reference_element(space.order());
    Eigen::VectorXd b = Eigen::VectorXd::Zero(space.dofs.size());
    if (!prob.f && !prob.flux) return b;
    const Vec2 corner = mesh.vertices[mesh.corner_vertex];
    for (int t = 0; t < mesh.num_triangles(); ++t) {
        const auto tri = mesh.corners(t);
        bool use_flux = static_cast<bool>(prob.flux);
        if (use_flux && std::isfinite(prob.flux_radius)) {
            double rmin = std::numeric_limits<double>::infinity();
            for (const auto& p : tri) rmin = std::min(rmin, (p - corner).norm());
            use_flux = rmin - mesh.diameter(t) < prob.flux_radius;
        }
        if (!prob.f && !use_flux) continue;
        const AffineMap map(tri);
        const Side side = mesh.element_side(t);
        const ElementQuadrature q = element_quadrature(mesh, t, policy);
        Eigen::VectorXd local = Eigen::VectorXd::Zero(ref.num_nodes());
        for (std::size_t i = 0; i < q.size(); ++i) {
            if (prob.f) local += (q.weights[i] * prob.f(q.phys[i], side)) * ref.values(q.ref[i]);
            if (use_flux) {
                const Eigen::MatrixX2d g = ref.gradients(q.ref[i]) * map.inverse_transpose.transpose();
                local += q.weights[i] * (g * prob.flux(q.phys[i], side));
            }
        }
        const auto& cd = space.dofs.cell_dofs[t];
        for (std::size_t m = 0; m < cd.size(); ++m) b(cd[m]) += local(m);
    }
    return b;
}

Eigen::VectorXd interpolate(const FESpace& space, const PointFunction& fn)
{
    Eigen::VectorXd v(space.dofs.size());
    for (int i = 0; i < space.dofs.size(); ++i) v(i) = fn(space.dofs.nodes[i], space.dofs.node_sides[i]);
    return v;
}

DirichletMap make_dirichlet_map(const DofMap& dofs)
{
    DirichletMap m;
    m.reduced.assign(dofs.size(), -1);
    for (int i = 0; i < dofs.size(); ++i)
        if (!dofs.boundary[i]) {
            m.reduced[i] = m.num_free();
            m.free_dofs.push_back(i);
        }
    m.restriction.resize(m.num_free(), dofs.size());
    std::vector<Eigen::Triplet<double>> trip;
    for (int r = 0; r < m.num_free(); ++r) trip.emplace_back(r, m.free_dofs[r], 1.0);
    m.restriction.setFromTriplets(trip.begin(), trip.end());
    return m;
}

SparseMatrix reduce_matrix(const DirichletMap& map, const SparseMatrix& A)
{
    SparseMatrix R = map.restriction * A * SparseMatrix(map.restriction.transpose());
    R.makeCompressed();
    return R;
}

Eigen::VectorXd reduce_rhs(const DirichletMap& map, const SparseMatrix& A, const Eigen::VectorXd& b,
                           const Eigen::VectorXd& boundary_values)
{
    Eigen::VectorXd g = boundary_values;
    for (int i : map.free_dofs) g(i) = 0.0;
    return map.restriction * (b - A * g);
}

Eigen::VectorXd expand_solution(const DirichletMap& map, const Eigen::VectorXd& x,
                                const Eigen::VectorXd& boundary_values)
{
    Eigen::VectorXd u = boundary_values;
    for (int r = 0; r < map.num_free(); ++r) u(map.free_dofs[r]) = x(r);
    return u;
}

struct SpdSolver::Impl {
    Eigen::CholmodSupernodalLLT<SparseMatrix, Eigen::Lower> llt;
    SparseMatrix A;
    std::vector<int> outer, inner;
    bool analyzed = false;
    double norm_inf = 0.0;
};

SpdSolver::SpdSolver(SolverOptions opts) : impl_(std::make_unique<Impl>()), opts_(opts) {}
SpdSolver::~SpdSolver() = default;
SpdSolver::SpdSolver(SpdSolver&&) noexcept = default;
SpdSolver& SpdSolver::operator=(SpdSolver&&) noexcept = default;

int SpdSolver::size() const { return static_cast<int>(impl_->A.rows()); }

void SpdSolver::factorize(const SparseMatrix& A)
{
    if (A.rows() != A.cols()) throw PreconditionViolation("solver needs a square matrix");
    Impl& m = *impl_;
    m.A = A;
    m.A.makeCompressed();
    const std::vector<int> outer(m.A.outerIndexPtr(), m.A.outerIndexPtr() + m.A.outerSize() + 1);
    const std::vector<int> inner(m.A.innerIndexPtr(), m.A.innerIndexPtr() + m.A.nonZeros());
    if (!m.analyzed || outer != m.outer || inner != m.inner) {
        m.llt.analyzePattern(m.A);
        m.outer = outer;
        m.inner = inner;
        m.analyzed = true;
    }
    m.llt.factorize(m.A);
    if (m.llt.info() != Eigen::Success) throw NotPositiveDefinite("Cholesky factorization failed: matrix not SPD");
    m.norm_inf = 0.0;
    for (int j = 0; j < m.A.outerSize(); ++j)
        m.norm_inf = std::max(m.norm_inf, m.A.col(j).cwiseAbs().sum()); // symmetric: column sums = row sums
}

Eigen::VectorXd SpdSolver::solve(const Eigen::VectorXd& b) const
{
    const Impl& m = *impl_;
    if (b.size() != m.A.rows()) throw PreconditionViolation("right-hand side has the wrong length");
    Eigen::VectorXd x = m.llt.solve(b);
    const double bn = b.lpNorm<Eigen::Infinity>();
    auto backward = [&](const Eigen::VectorXd& r, const Eigen::VectorXd& y) {
        const double denom = m.norm_inf * y.lpNorm<Eigen::Infinity>() + bn;
        return denom > 0.0 ? r.lpNorm<Eigen::Infinity>() / denom : 0.0;
    };
    Eigen::VectorXd r = b - m.A * x;
    double err = backward(r, x);
    for (int it = 0; it < opts_.max_refinements && err > opts_.tol * 1e-2; ++it) {
        Eigen::VectorXd y = x + m.llt.solve(r);
        Eigen::VectorXd ry = b - m.A * y;
        const double ey = backward(ry, y);
        if (!(ey < err)) break;
        x = std::move(y);
        r = std::move(ry);
        err = ey;
    }
    last_error_ = err;
    if (!std::isfinite(err) || err > opts_.tol)
        throw MaxIterations("iterative refinement did not reach the solver tolerance");
    return x;
}

Eigen::VectorXd solve_spd(const SparseMatrix& A, const Eigen::VectorXd& b, const SolverOptions& opts)
{
    SpdSolver s(opts);
    s.factorize(A);
    return s.solve(b);
}

DiscreteFunction::DiscreteFunction(std::shared_ptr<const FESpace> space, Eigen::VectorXd coeffs)
    : space_(std::move(space)), coeffs_(std::move(coeffs))
{
    if (!space_ || coeffs_.size() != space_->dofs.size())
        throw PreconditionViolation("coefficient vector does not match the DoF count");
}

FieldValue DiscreteFunction::eval_reference(int t, const Vec2& xi) const
{
    const ReferenceElement& ref = reference_element(space_->order());
    const AffineMap map(space_->mesh.corners(t));
    const auto& cd = space_->dofs.cell_dofs[t];
    const Eigen::VectorXd v = ref.values(xi);
    const Eigen::MatrixX2d g = ref.gradients(xi);
    FieldValue out;
    Vec2 gref = Vec2::Zero();
    for (std::size_t m = 0; m < cd.size(); ++m) {
        out.value += coeffs_(cd[m]) * v(m);
        gref += coeffs_(cd[m]) * g.row(m).transpose();
    }
    out.grad = map.inverse_transpose * gref;
    return out;
}

FieldValue DiscreteFunction::eval(int t, const Vec2& x) const
{
    const AffineMap map(space_->mesh.corners(t));
    return eval_reference(t, map.to_reference(x));
}

void DiscreteFunction::write_csv(std::ostream& os) const
{
    os << "dof,x,y,value\n";
    os.precision(17);
    for (int i = 0; i < space_->dofs.size(); ++i)
        os << i << ',' << space_->dofs.nodes[i].x() << ',' << space_->dofs.nodes[i].y() << ',' << coeffs_(i) << '\n';
}

DiscreteFunction solve_modified(const std::shared_ptr<const FESpace>& space, const SparseMatrix& A,
                                const SparseMatrix& C, const ProblemSpec& prob, const QuadraturePolicy& policy,
                                const SolverOptions& opts)
{
    const SparseMatrix Ah = C.nonZeros() > 0 ? SparseMatrix(A - C) : A;
    const DirichletMap dm = make_dirichlet_map(space->dofs);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(space->dofs.size());
    if (prob.trace)
        for (int i = 0; i < space->dofs.size(); ++i)
            if (space->dofs.boundary[i]) g(i) = prob.trace(space->dofs.nodes[i], space->dofs.node_sides[i]);
    const Eigen::VectorXd b = assemble_load(*space, prob, policy);
    const Eigen::VectorXd x = solve_spd(reduce_matrix(dm, Ah), reduce_rhs(dm, Ah, b, g), opts);
    return DiscreteFunction(space, expand_solution(dm, x, g));
}

} // namespace ecfem
