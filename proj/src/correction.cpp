#include "ecfem/correction.hpp"

#include "ecfem/errors.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

namespace ecfem {

const char* to_string(CorrectionVariant v)
{
    switch (v) {
    case CorrectionVariant::None: return "none";
    case CorrectionVariant::Layer: return "layer";
    case CorrectionVariant::Function: return "function";
    }
    return "?";
}

CorrectionVariant parse_variant(std::string_view name)
{
    if (name == "none") return CorrectionVariant::None;
    if (name == "layer") return CorrectionVariant::Layer;
    if (name == "function") return CorrectionVariant::Function;
    throw ConfigError("unknown correction '" + std::string(name) + "' (expected none|layer|function)");
}

int correction_order(int k, double omega)
{
    if (k < 1) throw PreconditionViolation("order must be >= 1");
    if (!(omega > std::numbers::pi && omega <= 2.0 * std::numbers::pi))
        throw PreconditionViolation("corner angle must lie in (pi, 2pi]");
    const double q = (k + 1) * omega / (2.0 * std::numbers::pi);
    const double n = std::round(q);
    if (std::abs(q - n) < 1e-12) return static_cast<int>(n) - 1;
    return static_cast<int>(std::floor(q));
}

const std::vector<int>& CorrectionSpec::elements(int j) const
{
    if (variant == CorrectionVariant::Layer) return support.layers.at(j);
    return support.layers.at(0);
}

CorrectionSpec make_correction(const Mesh2D& mesh, CorrectionVariant variant, int K, const Eigen::VectorXd& gamma)
{
    CorrectionSpec s;
    s.variant = variant;
    s.K = variant == CorrectionVariant::None ? 0 : K;
    if (variant == CorrectionVariant::None) return s;
    if (K < 1) throw PreconditionViolation("correction order must be >= 1");
    s.gamma = gamma.size() == 0 ? Eigen::VectorXd::Zero(K) : gamma;
    if (s.gamma.size() != K) throw PreconditionViolation("gamma has the wrong length");
    s.support = corner_layers(mesh, variant == CorrectionVariant::Layer ? K : 1);
    s.function_radius = s.support.outer_radius.front();
    return s;
}

namespace {

double poly_margin(const Eigen::VectorXd& gamma, double t)
{
    double v = 1.0, p = 1.0;
    for (int i = 0; i < gamma.size(); ++i) {
        v -= gamma(i) * p;
        p *= t;
    }
    return v;
}

} // namespace

EllipticityVerdict validate_ellipticity(CorrectionVariant variant, const Eigen::VectorXd& gamma)
{
    EllipticityVerdict v;
    if (variant == CorrectionVariant::None || gamma.size() == 0) return v;
    if (!gamma.allFinite()) return {false, -1.0, "gamma is not finite"};
    if (variant == CorrectionVariant::Layer) {
        v.margin = 1.0 - gamma.cwiseAbs().maxCoeff();
        v.ok = v.margin > 0.0;
        if (!v.ok) v.message = "layer correction needs max|gamma_i| < 1";
        return v;
    }
    constexpr int samples = 10000;
    int best = 0;
    double fmin = poly_margin(gamma, 0.0);
    for (int s = 1; s <= samples; ++s) {
        const double f = poly_margin(gamma, static_cast<double>(s) / samples);
        if (f < fmin) {
            fmin = f;
            best = s;
        }
    }
    // golden section on the bracket around the best sample
    double lo = std::max(0, best - 1) / static_cast<double>(samples);
    double hi = std::min(samples, best + 1) / static_cast<double>(samples);
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    for (int it = 0; it < 100; ++it) {
        const double a = hi - gr * (hi - lo);
        const double b = lo + gr * (hi - lo);
        if (poly_margin(gamma, a) < poly_margin(gamma, b))
            hi = b;
        else
            lo = a;
    }
    fmin = std::min({fmin, poly_margin(gamma, 0.5 * (lo + hi)), poly_margin(gamma, 1.0)});
    v.margin = fmin;
    v.ok = fmin > 0.0;
    if (!v.ok) v.message = "function correction needs 1 - sum gamma_i t^(i-1) > 0 on [0,1]";
    return v;
}

std::vector<SparseMatrix> correction_parts(const FESpace& space, const CorrectionSpec& spec)
{
    std::vector<SparseMatrix> parts;
    if (spec.variant == CorrectionVariant::None) return parts;
    const Mesh2D& mesh = space.mesh;
    const int k = space.order();
    for (int j = 0; j < spec.K; ++j) {
        const auto& elems = spec.elements(j);
        if (spec.variant == CorrectionVariant::Layer) {
            const QuadratureRule& rule = triangle_rule(2 * (k - 1));
            parts.push_back(assemble_weighted_stiffness(
                space, elems, [](const Vec2&) { return 1.0; },
                [&](int t) {
                    const AffineMap map(mesh.corners(t));
                    ElementQuadrature q;
                    q.ref = rule.points;
                    for (std::size_t i = 0; i < rule.size(); ++i) {
                        q.phys.push_back(map.to_physical(rule.points[i]));
                        q.weights.push_back(rule.weights[i] * map.det);
                    }
                    return q;
                }));
        } else {
            const double R = spec.function_radius;
            const Vec2 corner = mesh.vertices[mesh.corner_vertex];
            // collapsed rule anchored at the corner: rhat^(j) is polynomial along rays
            GradedQuadratureConfig cfg;
            cfg.max_depth = 0;
            cfg.min_points = 12;
            const int degree = 2 * (k - 1) + (spec.K - 1) + 2;
            parts.push_back(assemble_weighted_stiffness(
                space, elems, [&, j](const Vec2& x) { return std::pow((x - corner).norm() / R, j); },
                [&](int t) {
                    const auto tri = mesh.corners(t);
                    const AffineMap map(tri);
                    const PhysicalQuadrature pq = graded_points(tri, mesh.corner_local_index(t), degree, cfg);
                    ElementQuadrature q;
                    q.phys = pq.points;
                    q.weights = pq.weights;
                    for (const auto& x : q.phys) q.ref.push_back(map.to_reference(x));
                    return q;
                }));
        }
    }
    return parts;
}

SparseMatrix combine_parts(const std::vector<SparseMatrix>& parts, const Eigen::VectorXd& gamma, int size)
{
    SparseMatrix C(size, size);
    for (std::size_t j = 0; j < parts.size(); ++j)
        if (gamma(j) != 0.0) C += gamma(j) * parts[j];
    return C;
}

SparseMatrix assemble_correction(const FESpace& space, const CorrectionSpec& spec)
{
    if (spec.variant == CorrectionVariant::None) return SparseMatrix(space.dofs.size(), space.dofs.size());
    return combine_parts(correction_parts(space, spec), spec.gamma, space.dofs.size());
}

double PollutionEval::scaled_residual() const
{
    double r = 0.0;
    for (int i = 0; i < g.size(); ++i) r = std::max(r, std::abs(g(i)) / energy(i));
    return r;
}

struct PollutionProblem::SingularData {
    Eigen::VectorXd load;   ///< reduced a(s_i, phi)
    double energy = 0.0;    ///< a(s_i, s_i)
    std::vector<Vec2> grad; ///< grad s_i at all stored points, element by element
    Eigen::VectorXd solution;
    bool solved = false;
};

PollutionProblem::PollutionProblem(std::shared_ptr<const FESpace> space, CorrectionVariant variant, int K,
                                   PollutionOptions opts)
    : space_(std::move(space)), opts_(std::move(opts)), solver_(opts_.solver)
{
    if (variant == CorrectionVariant::None) throw PreconditionViolation("pollution needs a correction variant");
    const Mesh2D& mesh = space_->mesh;
    spec_ = make_correction(mesh, variant, K);

    // s_i vanishes on the corner edges; elsewhere its Neumann data enter through a(s_i, v)
    DofMap constrained = space_->dofs;
    for (int i = 0; i < constrained.size(); ++i)
        constrained.boundary[i] = constrained.boundary[i] && on_corner_ray(mesh.domain, constrained.nodes[i], 1e-12);
    dmap_ = make_dirichlet_map(constrained);
    A_ = reduce_matrix(dmap_, assemble_stiffness(*space_));
    for (const auto& C : correction_parts(*space_, spec_)) parts_.push_back(reduce_matrix(dmap_, C));

    const ReferenceElement& ref = reference_element(space_->order());
    plain_ = &triangle_rule(opts_.quad.degree);
    for (const auto& p : plain_->points) plain_grad_.push_back(ref.gradients(p));
    const Vec2 corner = mesh.vertices[mesh.corner_vertex];
    special_.assign(mesh.num_triangles(), -1);
    offset_.assign(mesh.num_triangles() + 1, 0);
    for (int t = 0; t < mesh.num_triangles(); ++t) {
        const bool near = mesh.corner_local_index(t) >= 0 ||
                          (mesh.centroid(t) - corner).norm() < opts_.quad.near_factor * mesh.diameter(t);
        std::size_t n = plain_->size();
        if (near) {
            special_[t] = static_cast<int>(quad_.size());
            quad_.push_back(element_quadrature(mesh, t, opts_.quad));
            n = quad_.back().size();
        }
        offset_[t + 1] = offset_[t] + static_cast<int>(n);
    }
}

PollutionProblem::~PollutionProblem() = default;

const SparseMatrix& PollutionProblem::standard_matrix() const { return A_; }

template <class F>
void PollutionProblem::for_each_point(int t, F&& f) const
{
    const Mesh2D& mesh = space_->mesh;
    const AffineMap map(mesh.corners(t));
    const int start = offset_[t];
    if (special_[t] >= 0) {
        const ElementQuadrature& q = quad_[special_[t]];
        const ReferenceElement& ref = reference_element(space_->order());
        for (std::size_t p = 0; p < q.size(); ++p)
            f(start + static_cast<int>(p), q.phys[p], q.weights[p], ref.gradients(q.ref[p]), map);
    } else {
        for (std::size_t p = 0; p < plain_->size(); ++p)
            f(start + static_cast<int>(p), map.to_physical(plain_->points[p]), plain_->weights[p] * map.det,
              plain_grad_[p], map);
    }
}

PollutionProblem::SingularData& PollutionProblem::singular(int i)
{
    auto& slot = singular_[i];
    if (slot) return *slot;
    slot = std::make_unique<SingularData>();
    SingularData& d = *slot;
    const Mesh2D& mesh = space_->mesh;
    const SingularFunction s = SingularFunction::primal(mesh.domain, i);
    Eigen::VectorXd load = Eigen::VectorXd::Zero(space_->dofs.size());
    d.grad.resize(offset_.back());
    const int nloc = reference_element(space_->order()).num_nodes();
    for (int t = 0; t < mesh.num_triangles(); ++t) {
        const Side side = mesh.element_side(t);
        Eigen::VectorXd local = Eigen::VectorXd::Zero(nloc);
        for_each_point(t, [&](int idx, const Vec2& x, double w, const Eigen::MatrixX2d& gref, const AffineMap& map) {
            const Vec2 g = s.eval(x, side).grad;
            d.grad[idx] = g;
            d.energy += w * g.squaredNorm();
            local += w * (gref * (map.inverse_transpose.transpose() * g));
        });
        const auto& cd = space_->dofs.cell_dofs[t];
        for (int m = 0; m < nloc; ++m) load(cd[m]) += local(m);
    }
    d.load = dmap_.restriction * load;
    return d;
}

SparseMatrix PollutionProblem::corrected_matrix(const Eigen::VectorXd& gamma) const
{
    if (gamma.size() != spec_.K) throw PreconditionViolation("gamma has the wrong length");
    SparseMatrix M = A_;
    for (int j = 0; j < spec_.K; ++j)
        if (gamma(j) != 0.0) M -= gamma(j) * parts_[j];
    return M;
}

void PollutionProblem::factorize(const Eigen::VectorXd& gamma)
{
    if (factored_ && gamma.size() == factored_gamma_.size() && gamma == factored_gamma_) return;
    // keep the sparsity pattern fixed so the symbolic analysis is reused
    SparseMatrix M = A_;
    for (int j = 0; j < spec_.K; ++j) M -= gamma(j) * parts_[j];
    solver_.factorize(M);
    factored_gamma_ = gamma;
    factored_ = true;
    for (auto& [i, d] : singular_) d->solved = false;
}

Eigen::VectorXd PollutionProblem::solve(int i)
{
    SingularData& d = singular(i);
    if (!d.solved) {
        d.solution = solver_.solve(d.load);
        d.solved = true;
    }
    return d.solution;
}

double PollutionProblem::energy(int i) { return singular(i).energy; }

// a(s_i - s_i^m, s_j - s_j^m) - c_h(s_i^m, s_j^m), a(.,.) by element quadrature
double PollutionProblem::defect(int i, int j, const Eigen::VectorXd& xi, const Eigen::VectorXd& xj)
{
    const Mesh2D& mesh = space_->mesh;
    const SingularData& di = singular(i);
    const SingularData& dj = singular(j);
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(space_->dofs.size());
    const Eigen::VectorXd ui = expand_solution(dmap_, xi, zero);
    const Eigen::VectorXd uj = expand_solution(dmap_, xj, zero);
    const int nloc = reference_element(space_->order()).num_nodes();
    Eigen::VectorXd ci(nloc), cj(nloc);
    double sum = 0.0;
    for (int t = 0; t < mesh.num_triangles(); ++t) {
        const auto& cd = space_->dofs.cell_dofs[t];
        for (int m = 0; m < nloc; ++m) {
            ci(m) = ui(cd[m]);
            cj(m) = uj(cd[m]);
        }
        double local = 0.0;
        for_each_point(t, [&](int idx, const Vec2&, double w, const Eigen::MatrixX2d& gref, const AffineMap& map) {
            const Vec2 ei = di.grad[idx] - map.inverse_transpose * (gref.transpose() * ci);
            const Vec2 ej = dj.grad[idx] - map.inverse_transpose * (gref.transpose() * cj);
            local += w * ei.dot(ej);
        });
        sum += local;
    }
    double c = 0.0;
    for (int m = 0; m < spec_.K; ++m) c += factored_gamma_(m) * xi.dot(parts_[m] * xj);
    return sum - c;
}

PollutionEval PollutionProblem::evaluate(const Eigen::VectorXd& gamma, bool jacobian)
{
    if (gamma.size() != spec_.K) throw PreconditionViolation("gamma has the wrong length");
    factorize(gamma);
    const int K = spec_.K;
    PollutionEval ev;
    ev.g.resize(K);
    ev.g_identity.resize(K);
    ev.energy.resize(K);
    std::vector<Eigen::VectorXd> xs;
    for (int i = 1; i <= K; ++i) {
        const Eigen::VectorXd x = solve(i);
        const SingularData& d = singular(i);
        ev.energy(i - 1) = d.energy;
        ev.g_identity(i - 1) = d.energy - d.load.dot(x);
        ev.g(i - 1) = defect(i, i, x, x);
        ev.max_mismatch = std::max(ev.max_mismatch, std::abs(ev.g(i - 1) - ev.g_identity(i - 1)) / d.energy);
        xs.push_back(x);
    }
    if (ev.max_mismatch > opts_.identity_tol) {
        std::ostringstream msg;
        msg << "pollution identity violated: relative mismatch " << ev.max_mismatch;
        throw IdentityMismatch(msg.str());
    }
    if (jacobian) {
        ev.J.resize(K, K);
        for (int i = 0; i < K; ++i)
            for (int j = 0; j < K; ++j) ev.J(i, j) = -xs[i].dot(parts_[j] * xs[i]);
    }
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(space_->dofs.size());
    for (const auto& x : xs) ev.solutions.push_back(expand_solution(dmap_, x, zero));
    return ev;
}

double PollutionProblem::mixed(const Eigen::VectorXd& gamma, int i, int j, double* identity)
{
    if (gamma.size() != spec_.K) throw PreconditionViolation("gamma has the wrong length");
    factorize(gamma);
    const Eigen::VectorXd xi = solve(i);
    const Eigen::VectorXd xj = solve(j);
    const double def = defect(i, j, xi, xj);
    const SingularData& di = singular(i);
    const SingularData& dj = singular(j);
    double aij = 0.0;
    for (int t = 0; t < space_->mesh.num_triangles(); ++t)
        for_each_point(t, [&](int idx, const Vec2&, double w, const Eigen::MatrixX2d&, const AffineMap&) {
            aij += w * di.grad[idx].dot(dj.grad[idx]);
        });
    const double id = aij - dj.load.dot(xi);
    if (identity) *identity = id;
    const double scale = std::sqrt(di.energy * dj.energy);
    if (std::abs(def - id) > opts_.identity_tol * scale) {
        std::ostringstream msg;
        msg << "mixed pollution identity violated: relative mismatch " << std::abs(def - id) / scale;
        throw IdentityMismatch(msg.str());
    }
    return def;
}

namespace {

bool admissible(CorrectionVariant variant, const Eigen::VectorXd& gamma, double xi)
{
    if (!gamma.allFinite()) return false;
    if (variant == CorrectionVariant::Layer) return gamma.cwiseAbs().maxCoeff() <= xi;
    return validate_ellipticity(variant, gamma).ok;
}

} // namespace

GammaSolveResult solve_gamma(PollutionProblem& problem, const Eigen::VectorXd& gamma0, const NewtonOptions& opts)
{
    const CorrectionVariant variant = problem.spec().variant;
    if (gamma0.size() != problem.K()) throw PreconditionViolation("initial gamma has the wrong length");
    if (!admissible(variant, gamma0, opts.xi)) throw InadmissibleStart("initial gamma is not admissible");

    GammaSolveResult res;
    res.gamma = gamma0;
    res.eval = problem.evaluate(res.gamma);
    res.residual = res.eval.scaled_residual();
    res.max_mismatch = res.eval.max_mismatch;
    res.history.push_back(res.residual);

    // g shrinks with the layer energy on fine levels, so the residual test alone
    // accepts a stale warm start; the step has to be small as well
    for (;;) {
        const Eigen::VectorXd step = res.eval.J.fullPivLu().solve(-res.eval.g);
        const double scale = std::max(1.0, res.gamma.cwiseAbs().maxCoeff());
        if (res.residual <= opts.tol && step.cwiseAbs().maxCoeff() <= opts.step_tol * scale) break;
        if (res.iterations >= opts.max_iterations)
            throw NewtonDiverged("Newton iteration cap reached, residual " + std::to_string(res.residual));
        double t = 1.0;
        bool accepted = false;
        for (int halving = 0; halving <= opts.max_halvings; ++halving, t *= 0.5) {
            const Eigen::VectorXd trial = res.gamma + t * step;
            if (!admissible(variant, trial, opts.xi)) continue;
            PollutionEval ev = problem.evaluate(trial);
            res.max_mismatch = std::max(res.max_mismatch, ev.max_mismatch);
            const double r = ev.scaled_residual();
            if (r < res.residual) {
                res.gamma = trial;
                res.eval = std::move(ev);
                res.residual = r;
                accepted = true;
                break;
            }
        }
        ++res.iterations;
        res.history.push_back(res.residual);
        if (!accepted) {
            if (res.residual <= opts.floor_tol) break; // round-off floor
            throw NewtonDiverged("no damped Newton step reduces the pollution, residual " +
                                 std::to_string(res.residual));
        }
    }
    // leave the problem factored at the returned gamma
    problem.evaluate(res.gamma, false);
    return res;
}

double newton_scalar(const std::function<double(double)>& g, const std::function<double(double)>& dg, double x0,
                     double tol, int max_iterations)
{
    double x = x0;
    for (int it = 0; it < max_iterations; ++it) {
        const double gx = g(x);
        if (std::abs(gx) <= tol) return x;
        const double d = dg(x);
        if (d == 0.0 || !std::isfinite(d)) throw NewtonDiverged("zero derivative in scalar Newton");
        double t = 1.0;
        double xn = x - gx / d;
        while (std::abs(g(xn)) >= std::abs(gx) && t > 1e-12) {
            t *= 0.5;
            xn = x - t * gx / d;
        }
        x = xn;
    }
    if (std::abs(g(x)) <= tol) return x;
    throw NewtonDiverged("scalar Newton iteration cap reached");
}

double GammaFit::relative_residual() const
{
    double r = 0.0;
    for (int j = 0; j < residual.size(); ++j)
        r = std::max(r, first_deviation(j) > 0.0 ? residual(j) / first_deviation(j)
                                                 : (residual(j) > 0.0 ? std::numeric_limits<double>::infinity() : 0.0));
    return r;
}

GammaFit fit_gamma_star(const std::vector<double>& h, const std::vector<Eigen::VectorXd>& gammas, double rate)
{
    if (h.size() != gammas.size()) throw PreconditionViolation("h and gamma sequences differ in length");
    if (h.size() < 3) throw InsufficientLevels("gamma fit needs at least 3 levels");
    const int n = static_cast<int>(h.size());
    const int K = static_cast<int>(gammas.front().size());
    Eigen::MatrixXd B(n, 2);
    for (int l = 0; l < n; ++l) {
        B(l, 0) = 1.0;
        B(l, 1) = std::pow(h[l], rate);
    }
    const auto qr = B.colPivHouseholderQr();
    GammaFit fit;
    fit.rate = rate;
    fit.levels = n;
    fit.gamma_star.resize(K);
    fit.c.resize(K);
    fit.residual.resize(K);
    fit.first_deviation.resize(K);
    for (int j = 0; j < K; ++j) {
        Eigen::VectorXd y(n);
        for (int l = 0; l < n; ++l) y(l) = gammas[l](j);
        const Eigen::Vector2d coef = qr.solve(y);
        fit.gamma_star(j) = coef(0);
        fit.c(j) = coef(1);
        fit.residual(j) = (B * coef - y).cwiseAbs().maxCoeff();
        fit.first_deviation(j) = std::abs(y(0) - coef(0));
    }
    return fit;
}

double gamma_fit_rate(int k, double omega)
{
    return 2.0 * (k - singular_exponent(omega, correction_order(k, omega)));
}

void write_gamma_csv(std::ostream& os, const std::vector<int>& levels, const std::vector<Eigen::VectorXd>& gammas,
                     const std::vector<double>& residuals, const GammaFit* fit)
{
    const int K = gammas.empty() ? 0 : static_cast<int>(gammas.front().size());
    os << "level,h";
    for (int j = 1; j <= K; ++j) os << ",gamma_" << j;
    os << ",residual\n";
    os.precision(17);
    for (std::size_t l = 0; l < levels.size(); ++l) {
        os << levels[l] << ',' << level_h(levels[l]);
        for (int j = 0; j < K; ++j) os << ',' << gammas[l](j);
        os << ',' << residuals[l] << '\n';
    }
    if (fit) {
        os << "fit," << fit->rate;
        for (int j = 0; j < K; ++j) os << ',' << fit->gamma_star(j);
        os << ',' << fit->residual.maxCoeff() << '\n';
        os << "fit_c," << fit->rate;
        for (int j = 0; j < K; ++j) os << ',' << fit->c(j);
        os << ",\n";
    }
}

Eigen::VectorXd read_gamma_csv(std::istream& is)
{
    std::string line;
    std::vector<double> last;
    std::vector<double> fit;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#' || line.rfind("level", 0) == 0) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() < 4) throw ConfigError("malformed gamma file line: " + line);
        std::vector<double> g;
        try {
            for (std::size_t c = 2; c + 1 < cells.size(); ++c) g.push_back(std::stod(cells[c]));
        } catch (const std::exception&) {
            throw ConfigError("malformed gamma file line: " + line);
        }
        if (cells[0] == "fit")
            fit = g;
        else if (cells[0] != "fit_c")
            last = g;
    }
    const auto& use = fit.empty() ? last : fit;
    if (use.empty()) throw ConfigError("gamma file has no data rows");
    return Eigen::Map<const Eigen::VectorXd>(use.data(), static_cast<Eigen::Index>(use.size()));
}

} // namespace ecfem
