#include "ecfem/analysis.hpp"

#include "ecfem/errors.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>

namespace ecfem {

ElementField element_field(const DiscreteFunction& uh)
{
    return [uh](int t, const Vec2& xi, const Vec2&) { return uh.eval_reference(t, xi); };
}

double weighted_error(const Mesh2D& mesh, const ElementField& approx, const ScalarField& exact,
                      const WeightedNorm& norm, const QuadraturePolicy& policy)
{
    if (norm.deriv != 0 && norm.deriv != 1) throw PreconditionViolation("norm derivative order must be 0 or 1");
    const Vec2 corner = mesh.vertices[mesh.corner_vertex];
    double sum = 0.0;
    for (int t = 0; t < mesh.num_triangles(); ++t) {
        const Side side = mesh.element_side(t);
        const ElementQuadrature q = element_quadrature(mesh, t, policy);
        double local = 0.0;
        for (std::size_t p = 0; p < q.size(); ++p) {
            const FieldValue a = approx(t, q.ref[p], q.phys[p]);
            const FieldValue u = exact(q.phys[p], side);
            const double e2 = norm.deriv == 0 ? std::pow(u.value - a.value, 2) : (u.grad - a.grad).squaredNorm();
            const double wt = norm.alpha == 0.0 ? 1.0 : std::pow((q.phys[p] - corner).norm(), 2.0 * norm.alpha);
            local += q.weights[p] * wt * e2;
        }
        sum += local;
    }
    return std::sqrt(sum);
}

double weighted_error(const DiscreteFunction& uh, const ScalarField& exact, const WeightedNorm& norm,
                      const QuadraturePolicy& policy)
{
    return weighted_error(uh.space().mesh, element_field(uh), exact, norm, policy);
}

double ErrorReport::rate(std::size_t row, int column) const
{
    if (row == 0 || row >= rows.size()) return std::numeric_limits<double>::quiet_NaN();
    auto pick = [column](const ErrorRow& r) {
        return column == 0 ? r.err_L2 : column == 1 ? r.err_L2a : r.err_H1a;
    };
    return std::log2(pick(rows[row - 1]) / pick(rows[row]));
}

void ErrorReport::write_csv(std::ostream& os) const
{
    for (const auto& n : notes) os << "# " << n << '\n';
    os.precision(17);
    os << "# alpha=" << alpha << "; err_L2 = ||u-u_h||_0, err_L2a = ||r^alpha (u-u_h)||_0, "
       << "err_H1a = ||r^alpha grad(u-u_h)||_0; h relative to level 1; rate = log2 of consecutive error ratios\n";
    os << "level,h,dofs,err_L2,rate_L2,err_L2a,rate_L2a,err_H1a,rate_H1a";
    for (const auto& n : extra_names) os << ',' << n;
    os << '\n';
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const ErrorRow& r = rows[i];
        os << r.level << ',' << r.h << ',' << r.dofs;
        const double e[3] = {r.err_L2, r.err_L2a, r.err_H1a};
        for (int c = 0; c < 3; ++c) {
            os << ',' << e[c] << ',';
            if (i > 0) os << rate(i, c);
        }
        for (std::size_t c = 0; c < extra_names.size(); ++c) {
            os << ',';
            if (c < r.extra.size()) os << r.extra[c];
        }
        os << '\n';
    }
}

ErrorRow measure_errors(const DiscreteFunction& uh, const ScalarField& exact, double alpha,
                        const QuadraturePolicy& policy)
{
    ErrorRow r;
    r.level = uh.space().mesh.level;
    r.h = uh.space().mesh.h;
    r.dofs = uh.space().dofs.size();
    r.err_L2 = weighted_error(uh, exact, {0.0, 0}, policy);
    r.err_L2a = weighted_error(uh, exact, {alpha, 0}, policy);
    r.err_H1a = weighted_error(uh, exact, {alpha, 1}, policy);
    return r;
}

ErrorReport convergence_table(const ConvergenceConfig& config, int first_level, int last_level)
{
    if (first_level < 1 || last_level < first_level) throw PreconditionViolation("bad level range");
    const ExactSolution u = ExactSolution::manufactured(config.domain);
    const ProblemSpec prob = ProblemSpec::dirichlet(u);
    ErrorReport report;
    report.alpha = config.alpha;
    for (int level = first_level; level <= last_level; ++level) {
        const auto space = FESpace::make(generate_mesh(config.domain, level, config.patch), config.order);
        const SparseMatrix A = assemble_stiffness(*space);
        SparseMatrix C(A.rows(), A.cols());
        if (config.variant != CorrectionVariant::None && config.gamma.size() > 0)
            C = assemble_correction(*space, make_correction(space->mesh, config.variant,
                                                            static_cast<int>(config.gamma.size()), config.gamma));
        const DiscreteFunction uh = solve_modified(space, A, C, prob, config.quad, config.solver);
        report.rows.push_back(measure_errors(uh, u.field(), config.alpha, config.quad));
    }
    return report;
}

namespace {

double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b)
{
    const Vec2 d = b - a;
    const double s = std::clamp((p - a).dot(d) / d.squaredNorm(), 0.0, 1.0);
    return (p - (a + s * d)).norm();
}

} // namespace

double extract_sif(const ElementField& uh, const Mesh2D& mesh, int order, int i, const Cutoff& cutoff,
                   const PointFunction& f)
{
    cutoff.validate();
    const Vec2 corner = mesh.vertices[mesh.corner_vertex];
    double far = std::numeric_limits<double>::infinity();
    for (const auto& e : mesh.boundary_edges)
        if (e.marker == BoundaryMarker::Far)
            far = std::min(far, point_segment_distance(corner, mesh.vertices[e.a], mesh.vertices[e.b]));
    if (cutoff.a >= far) {
        std::ostringstream msg;
        msg << "cutoff radius " << cutoff.a << " reaches the far boundary at distance " << far;
        throw CutoffOutsideDomain(msg.str());
    }
    const SingularFunction dual = SingularFunction::dual_of(mesh.domain, i, cutoff);
    const QuadratureRule& rule = triangle_rule(2 * order + 6);
    double sum = 0.0;
    for (int t = 0; t < mesh.num_triangles(); ++t) {
        const auto tri = mesh.corners(t);
        double rmin = std::numeric_limits<double>::infinity(), rmax = 0.0;
        for (int e = 0; e < 3; ++e) {
            rmin = std::min(rmin, point_segment_distance(corner, tri[e], tri[(e + 1) % 3]));
            rmax = std::max(rmax, (tri[e] - corner).norm());
        }
        if (rmax < cutoff.b || rmin > cutoff.a) continue;
        const Side side = mesh.element_side(t);
        const AffineMap map(tri);
        double local = 0.0;
        for (std::size_t p = 0; p < rule.size(); ++p) {
            const Vec2 x = map.to_physical(rule.points[p]);
            const double r = (x - corner).norm();
            if (r < cutoff.b || r > cutoff.a) continue;
            const SingularEval d = dual.eval(x, side);
            double v = uh(t, rule.points[p], x).value * d.laplacian;
            if (f) v += f(x, side) * d.value;
            local += rule.weights[p] * map.det * v;
        }
        sum += local;
    }
    return sum / (i * std::numbers::pi);
}

double extract_sif(const DiscreteFunction& uh, int i, const Cutoff& cutoff, const PointFunction& f)
{
    return extract_sif(element_field(uh), uh.space().mesh, uh.space().order(), i, cutoff, f);
}

PostProcessed::PostProcessed(DiscreteFunction uh, SIFSet sifs, std::vector<DiscreteFunction> s_solutions)
    : uh_(std::move(uh)), sifs_(std::move(sifs)), s_(std::move(s_solutions))
{
    if (static_cast<std::size_t>(sifs_.mu.size()) != s_.size()) {
        std::ostringstream msg;
        msg << sifs_.mu.size() << " stress intensity factors but " << s_.size() << " singular solutions";
        throw IndexMismatch(msg.str());
    }
    for (const auto& s : s_)
        if (s.space_ptr() != uh_.space_ptr()) throw IndexMismatch("singular solutions live on another space");
    for (std::size_t i = 0; i < s_.size(); ++i)
        exact_.push_back(SingularFunction::primal(uh_.space().mesh.domain, static_cast<int>(i) + 1));
}

FieldValue PostProcessed::eval(int t, const Vec2& xi, const Vec2& x) const
{
    FieldValue out = uh_.eval_reference(t, xi);
    const Side side = uh_.space().mesh.element_side(t);
    for (std::size_t i = 0; i < s_.size(); ++i) {
        const double mu = sifs_.mu(static_cast<Eigen::Index>(i));
        if (mu == 0.0) continue;
        const SingularEval s = exact_[i].eval(x, side);
        const FieldValue sh = s_[i].eval_reference(t, xi);
        out.value += mu * (s.value - sh.value);
        out.grad += mu * (s.grad - sh.grad);
    }
    return out;
}

ElementField PostProcessed::field() const
{
    return [this](int t, const Vec2& xi, const Vec2& x) { return eval(t, xi, x); };
}

PostProcessed postprocess(DiscreteFunction uh, SIFSet sifs, std::vector<DiscreteFunction> s_solutions)
{
    return PostProcessed(std::move(uh), std::move(sifs), std::move(s_solutions));
}

OrthoValue interp_ortho(const FESpace& space, int i, int j, std::span<const int> region,
                        const QuadraturePolicy& policy)
{
    const Mesh2D& mesh = space.mesh;
    const SingularFunction si = SingularFunction::primal(mesh.domain, i);
    const SingularFunction sj = SingularFunction::primal(mesh.domain, j);
    const DiscreteFunction Is(std::make_shared<const FESpace>(space),
                              interpolate(space, [&si](const Vec2& x, Side side) { return si.eval(x, side).value; }));
    OrthoValue out;
    double ni = 0.0, nj = 0.0;
    for (int t : region) {
        const Side side = mesh.element_side(t);
        const ElementQuadrature q = element_quadrature(mesh, t, policy);
        double v = 0.0, a = 0.0, b = 0.0;
        for (std::size_t p = 0; p < q.size(); ++p) {
            const Vec2 gj = sj.eval(q.phys[p], side).grad;
            const Vec2 gi = si.eval(q.phys[p], side).grad;
            v += q.weights[p] * gj.dot(Is.eval_reference(t, q.ref[p]).grad);
            a += q.weights[p] * gi.squaredNorm();
            b += q.weights[p] * gj.squaredNorm();
        }
        out.value += v;
        ni += a;
        nj += b;
    }
    out.norm_i = std::sqrt(ni);
    out.norm_j = std::sqrt(nj);
    return out;
}

std::vector<int> corner_region(const Mesh2D& fine, const Mesh2D& level_one, int layers)
{
    const CornerLayers cl = corner_layers(level_one, layers);
    std::vector<std::array<Vec2, 3>> tris;
    for (int t : cl.support()) tris.push_back(level_one.corners(t));
    return triangles_inside(fine, tris);
}

namespace {

Eigen::MatrixXd start_block(int n, int m, unsigned seed)
{
    std::mt19937 gen(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    Eigen::MatrixXd X(n, m);
    for (int j = 0; j < m; ++j)
        for (int i = 0; i < n; ++i) X(i, j) = dist(gen);
    return X;
}

// Block power iteration with a Rayleigh-Ritz step; returns the dominant
// eigenvalue of the operator. Clustered top eigenvalues stay inside the block.
template <class Apply>
double iterate(int n, Apply&& apply, const SpectralOptions& opts, const char* what)
{
    const int m = std::min(n, opts.block);
    Eigen::MatrixXd Y = start_block(n, m, opts.seed);
    double theta = 0.0;
    int stable = 0;
    for (int it = 0; it < opts.max_iterations; ++it) {
        const Eigen::MatrixXd Q = Eigen::HouseholderQR<Eigen::MatrixXd>(Y).householderQ() * Eigen::MatrixXd::Identity(n, m);
        Eigen::MatrixXd Z(n, m);
        for (int j = 0; j < m; ++j) Z.col(j) = apply(Eigen::VectorXd(Q.col(j)));
        Eigen::MatrixXd H = Q.transpose() * Z;
        H = 0.5 * (H + H.transpose());
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
        const double next = es.eigenvalues()(m - 1);
        const Eigen::VectorXd s = es.eigenvectors().col(m - 1);
        const double res = (Z * s - next * (Q * s)).norm();
        stable = std::abs(next - theta) <= opts.tol * std::abs(next) ? stable + 1 : 0;
        theta = next;
        if (stable >= 3 && res <= std::sqrt(opts.tol) * std::abs(next)) return theta;
        Y = Z;
    }
    std::ostringstream msg;
    msg << what << " did not converge in " << opts.max_iterations << " iterations";
    throw MaxIterations(msg.str());
}

} // namespace

double largest_eigenvalue(const SparseMatrix& A, const SpectralOptions& opts)
{
    return iterate(static_cast<int>(A.rows()), [&A](const Eigen::VectorXd& x) { Eigen::VectorXd y = A * x; return y; },
                   opts, "power iteration");
}

double smallest_eigenvalue(const SparseMatrix& A, const SpectralOptions& opts)
{
    SpdSolver solver;
    solver.factorize(A);
    const double mu = iterate(static_cast<int>(A.rows()), [&solver](const Eigen::VectorXd& x) { return solver.solve(x); },
                              opts, "inverse iteration");
    return 1.0 / mu;
}

SpectralRatio spectral_ratio(const SparseMatrix& corrected, const SparseMatrix& standard, const SpectralOptions& opts)
{
    if (corrected.rows() != standard.rows() || corrected.cols() != standard.cols())
        throw PreconditionViolation("spectral ratio needs matrices on the same DoF set");
    SpectralRatio out;
    out.lambda_min_standard = smallest_eigenvalue(standard, opts);
    out.lambda_max_standard = largest_eigenvalue(standard, opts);
    if ((corrected - standard).norm() == 0.0) return out;
    out.min_ratio = smallest_eigenvalue(corrected, opts) / out.lambda_min_standard;
    out.max_ratio = largest_eigenvalue(corrected, opts) / out.lambda_max_standard;
    return out;
}

std::vector<double> observed_rates(const std::vector<double>& errors)
{
    std::vector<double> r;
    for (std::size_t i = 1; i < errors.size(); ++i) r.push_back(std::log2(errors[i - 1] / errors[i]));
    return r;
}

} // namespace ecfem
