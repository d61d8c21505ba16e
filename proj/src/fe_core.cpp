#include "ecfem/fe_core.hpp"

#include "ecfem/errors.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>

namespace ecfem {

ReferenceElement::ReferenceElement(int order) : order_(order)
{
    if (order < 1 || order > 4) throw PreconditionViolation("element order must be in 1..4");
    const int k = order;
    // multi-index (a0, a1, a2), a0 + a1 + a2 = k; point = (a1, a2) / k
    auto push = [&](int a1, int a2) {
        multi_index_.push_back({k - a1 - a2, a1, a2});
        nodes_.emplace_back(static_cast<double>(a1) / k, static_cast<double>(a2) / k);
    };
    push(0, 0);
    push(k, 0);
    push(0, k);
    for (int j = 1; j < k; ++j) push(j, 0);     // v0 -> v1
    for (int j = 1; j < k; ++j) push(k - j, j); // v1 -> v2
    for (int j = 1; j < k; ++j) push(0, k - j); // v2 -> v0
    for (int a2 = 1; a2 < k; ++a2)
        for (int a1 = 1; a1 + a2 < k; ++a1) push(a1, a2);
}

namespace {

// P(l) = prod_{j<a} (k l - j) / (j + 1) and its derivative.
void lagrange_factor(int k, int a, double l, double& value, double& deriv)
{
    value = 1.0;
    deriv = 0.0;
    for (int j = 0; j < a; ++j) {
        const double f = (k * l - j) / (j + 1);
        const double df = static_cast<double>(k) / (j + 1);
        deriv = deriv * f + value * df;
        value *= f;
    }
}

} // namespace

Eigen::VectorXd ReferenceElement::values(const Vec2& p) const
{
    const std::array<double, 3> lam{1.0 - p.x() - p.y(), p.x(), p.y()};
    Eigen::VectorXd v(num_nodes());
    for (int n = 0; n < num_nodes(); ++n) {
        double prod = 1.0;
        for (int m = 0; m < 3; ++m) {
            double f = 0, df = 0;
            lagrange_factor(order_, multi_index_[n][m], lam[m], f, df);
            prod *= f;
        }
        v(n) = prod;
    }
    return v;
}

Eigen::MatrixX2d ReferenceElement::gradients(const Vec2& p) const
{
    const std::array<double, 3> lam{1.0 - p.x() - p.y(), p.x(), p.y()};
    Eigen::MatrixX2d g(num_nodes(), 2);
    for (int n = 0; n < num_nodes(); ++n) {
        std::array<double, 3> f{}, df{};
        for (int m = 0; m < 3; ++m) lagrange_factor(order_, multi_index_[n][m], lam[m], f[m], df[m]);
        // d lam0 / dxi = d lam0 / deta = -1
        g(n, 0) = -df[0] * f[1] * f[2] + f[0] * df[1] * f[2];
        g(n, 1) = -df[0] * f[1] * f[2] + f[0] * f[1] * df[2];
    }
    return g;
}

const ReferenceElement& reference_element(int order)
{
    static const std::array<ReferenceElement, 4> elements{ReferenceElement(1), ReferenceElement(2),
                                                          ReferenceElement(3), ReferenceElement(4)};
    if (order < 1 || order > 4) throw PreconditionViolation("element order must be in 1..4");
    return elements[order - 1];
}

Eigen::Vector3d QuadratureRule::barycentric(std::size_t i) const
{
    return {1.0 - points[i].x() - points[i].y(), points[i].x(), points[i].y()};
}

void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights)
{
    if (n < 1) throw PreconditionViolation("gauss_legendre: n must be >= 1");
    nodes.assign(n, 0.0);
    weights.assign(n, 0.0);
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p0 = 1.0, p1 = x;
            for (int j = 2; j <= n; ++j) {
                const double p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        // recompute derivative at the converged node
        double p0 = 1.0, p1 = x;
        for (int j = 2; j <= n; ++j) {
            const double p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
            p0 = p1;
            p1 = p2;
        }
        dp = n * (x * p1 - p0) / (x * x - 1.0);
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        // map [-1,1] -> [0,1]
        nodes[i] = 0.5 * (1.0 - x);
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = weights[n - 1 - i] = 0.5 * w;
    }
}

const QuadratureRule& triangle_rule(int degree)
{
    static std::mutex mutex;
    static std::map<int, std::unique_ptr<QuadratureRule>> cache;
    degree = std::max(degree, 1);
    std::lock_guard lock(mutex);
    auto& slot = cache[degree];
    if (!slot) {
        auto rule = std::make_unique<QuadratureRule>();
        rule->degree = degree;
        std::vector<double> xu, wu, xv, wv;
        gauss_legendre((degree + 2 + 1) / 2, xu, wu); // extra power from the Jacobian u
        gauss_legendre((degree + 1 + 1) / 2, xv, wv);
        for (std::size_t i = 0; i < xu.size(); ++i)
            for (std::size_t j = 0; j < xv.size(); ++j) {
                rule->points.emplace_back(xu[i] * (1.0 - xv[j]), xu[i] * xv[j]);
                rule->weights.push_back(wu[i] * wv[j] * xu[i]);
            }
        slot = std::move(rule);
    }
    return *slot;
}

AffineMap::AffineMap(const std::array<Vec2, 3>& tri) : origin(tri[0])
{
    jacobian.col(0) = tri[1] - tri[0];
    jacobian.col(1) = tri[2] - tri[0];
    det = jacobian.determinant();
    if (!(det > 0.0)) throw DegenerateTriangle("triangle has non-positive area");
    inverse_transpose = jacobian.inverse().transpose();
}

Vec2 AffineMap::to_reference(const Vec2& x) const { return jacobian.inverse() * (x - origin); }

PhysicalQuadrature mapped_points(const std::array<Vec2, 3>& tri, const QuadratureRule& rule)
{
    const AffineMap map(tri);
    PhysicalQuadrature q;
    q.points.reserve(rule.size());
    q.weights.reserve(rule.size());
    for (std::size_t i = 0; i < rule.size(); ++i) {
        q.points.push_back(map.to_physical(rule.points[i]));
        q.weights.push_back(rule.weights[i] * map.det);
    }
    return q;
}

namespace {

struct ShellRule {
    std::vector<double> xu, wu, xv, wv;
};

ShellRule shell_rule(int degree, int min_points)
{
    ShellRule r;
    gauss_legendre(std::max((degree + 3) / 2, min_points), r.xu, r.wu);
    gauss_legendre(std::max((degree + 2) / 2, min_points + 2), r.xv, r.wv);
    return r;
}

// Points of shell u in [lo, hi] for the collapsed map anchored at the corner.
void append_shell(const ShellRule& r, const Vec2& c, const Vec2& e1, const Vec2& e2, double jac, double lo, double hi,
                  PhysicalQuadrature& q)
{
    const double len = hi - lo;
    for (std::size_t i = 0; i < r.xu.size(); ++i) {
        const double u = lo + len * r.xu[i];
        for (std::size_t j = 0; j < r.xv.size(); ++j) {
            const double v = r.xv[j];
            q.points.push_back(c + u * ((1.0 - v) * e1 + v * e2));
            q.weights.push_back(r.wu[i] * len * r.wv[j] * u * jac);
        }
    }
}

} // namespace

PhysicalQuadrature graded_points(const std::array<Vec2, 3>& tri, int corner, int degree,
                                 const GradedQuadratureConfig& cfg)
{
    if (!(cfg.ratio > 0.0 && cfg.ratio < 1.0)) throw PreconditionViolation("graded ratio must be in (0,1)");
    const Vec2 c = tri[corner];
    const Vec2 e1 = tri[(corner + 1) % 3] - c;
    const Vec2 e2 = tri[(corner + 2) % 3] - c;
    const double jac = cross2(e1, e2);
    if (!(jac > 0.0)) throw DegenerateTriangle("triangle has non-positive area");
    const ShellRule r = shell_rule(degree, cfg.min_points);
    PhysicalQuadrature q;
    double hi = 1.0;
    for (int d = 0; d < cfg.max_depth; ++d) {
        const double lo = hi * cfg.ratio;
        append_shell(r, c, e1, e2, jac, lo, hi, q);
        hi = lo;
    }
    append_shell(r, c, e1, e2, jac, 0.0, hi, q);
    return q;
}

GradedResult integrate_graded(const std::function<double(const Vec2&)>& f, const std::array<Vec2, 3>& tri, int corner,
                              int degree, const GradedQuadratureConfig& cfg)
{
    if (!(cfg.ratio > 0.0 && cfg.ratio < 1.0)) throw PreconditionViolation("graded ratio must be in (0,1)");
    const Vec2 c = tri[corner];
    const Vec2 e1 = tri[(corner + 1) % 3] - c;
    const Vec2 e2 = tri[(corner + 2) % 3] - c;
    const double jac = cross2(e1, e2);
    if (!(jac > 0.0)) throw DegenerateTriangle("triangle has non-positive area");
    const ShellRule r = shell_rule(degree, cfg.min_points);

    GradedResult result;
    double abs_sum = 0.0;
    double hi = 1.0;
    int small_in_a_row = 0;
    PhysicalQuadrature q;
    for (int d = 0; d < cfg.max_depth; ++d) {
        const double lo = hi * cfg.ratio;
        q.points.clear();
        q.weights.clear();
        append_shell(r, c, e1, e2, jac, lo, hi, q);
        double shell = 0.0;
        for (std::size_t i = 0; i < q.points.size(); ++i) shell += q.weights[i] * f(q.points[i]);
        result.value += shell;
        abs_sum += std::abs(shell);
        result.depth = d + 1;
        hi = lo;
        small_in_a_row = (std::abs(shell) <= cfg.rel_tol * abs_sum) ? small_in_a_row + 1 : 0;
        if (small_in_a_row >= 2) {
            result.converged = true;
            break;
        }
    }
    q.points.clear();
    q.weights.clear();
    append_shell(r, c, e1, e2, jac, 0.0, hi, q);
    double rest = 0.0;
    for (std::size_t i = 0; i < q.points.size(); ++i) rest += q.weights[i] * f(q.points[i]);
    result.value += rest;
    if (!result.converged && std::abs(rest) <= cfg.rel_tol * std::max(abs_sum, 1e-300)) result.converged = true;
    return result;
}

Eigen::MatrixXd local_stiffness(const std::array<Vec2, 3>& tri, int order)
{
    const AffineMap map(tri);
    const ReferenceElement& ref = reference_element(order);
    const QuadratureRule& rule = triangle_rule(2 * (order - 1));
    const int n = ref.num_nodes();
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t q = 0; q < rule.size(); ++q) {
        const Eigen::MatrixX2d g = ref.gradients(rule.points[q]) * map.inverse_transpose.transpose();
        K.noalias() += (rule.weights[q] * map.det) * g * g.transpose();
    }
    return K;
}

} // namespace ecfem
