#include "ecfem/analytic.hpp"

#include "ecfem/errors.hpp"
#include "ecfem/fe_core.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace ecfem {

double singular_exponent(double omega, int index)
{
    if (index < 1) throw PreconditionViolation("singular function index must be >= 1");
    if (!(omega > std::numbers::pi && omega <= 2.0 * std::numbers::pi))
        throw PreconditionViolation("corner angle must lie in (pi, 2pi]");
    return index * std::numbers::pi / omega;
}

void Cutoff::validate() const
{
    if (!(b > 0.0 && b < a)) throw PreconditionViolation("cutoff radii must satisfy 0 < b < a");
}

Cutoff::Profile Cutoff::eval(double r) const
{
    if (r <= b) return {1.0, 0.0, 0.0};
    if (r >= a) return {0.0, 0.0, 0.0};
    const double w = a - b;
    const double t = (r - b) / w;
    const double s = 1.0 - t;
    // S(t) = A / (A + B), A = exp(-1/t), B = exp(-1/(1-t))
    const double A = std::exp(-1.0 / t);
    const double B = std::exp(-1.0 / s);
    const double dA = A / (t * t);
    const double dB = -B / (s * s);
    const double d2A = A * (1.0 - 2.0 * t) / (t * t * t * t);
    const double d2B = B * (2.0 * t - 1.0) / (s * s * s * s);
    const double D = A + B;
    const double dD = dA + dB;
    const double N = dA * B - A * dB;
    const double dN = d2A * B - A * d2B;
    const double S = A / D;
    const double dS = N / (D * D);
    const double d2S = (dN * D - 2.0 * N * dD) / (D * D * D);
    return {1.0 - S, -dS / w, -d2S / (w * w)};
}

SingularFunction::SingularFunction(const DomainSpec& domain, int index, bool dual, std::optional<Cutoff> cutoff)
    : domain_(domain), index_(index), lambda_(singular_exponent(domain.omega, index)), dual_(dual),
      cutoff_(std::move(cutoff))
{
    if (dual_ && !cutoff_) throw PreconditionViolation("dual singular functions need a cutoff");
    if (cutoff_) cutoff_->validate();
}

double SingularFunction::support_radius() const
{
    return cutoff_ ? cutoff_->a : std::numeric_limits<double>::infinity();
}

SingularEval SingularFunction::eval(const Vec2& p, Side side) const
{
    const Polar pc = to_polar(domain_, p, side);
    const double r = pc.r;
    const double lt = lambda_ * pc.theta;
    const double sn = std::sin(lt);
    const double cs = std::cos(lt);

    SingularEval out;
    if (r == 0.0) {
        if (dual_) throw PreconditionViolation("dual singular function evaluated at the corner");
        out.gradient_unbounded = lambda_ < 1.0;
        if (lambda_ == 1.0) out.grad = Vec2(0.0, 1.0);
        return out;
    }
    if (cutoff_ && r >= cutoff_->a) return out;

    // w = r^p sin(lambda theta), harmonic for p = +-lambda
    const double p_exp = dual_ ? -lambda_ : lambda_;
    const double rp = std::pow(r, p_exp);
    const double w = rp * sn;
    const double dw_dr = p_exp * rp / r * sn;
    const double dw_dt_over_r = lambda_ * rp / r * cs;
    const double ct = std::cos(pc.theta);
    const double st = std::sin(pc.theta);
    const Vec2 er(ct, st);
    const Vec2 et(-st, ct);
    const Vec2 grad_w = dw_dr * er + dw_dt_over_r * et;

    if (!cutoff_) {
        out.value = w;
        out.grad = grad_w;
        return out;
    }
    const Cutoff::Profile eta = cutoff_->eval(r);
    out.value = eta.eta * w;
    out.grad = eta.eta * grad_w + eta.d1 * w * er;
    out.laplacian = (eta.d2 + eta.d1 / r) * w + 2.0 * eta.d1 * dw_dr;
    return out;
}

FieldValue SingularFunction::field(const Vec2& p, Side side) const
{
    const SingularEval e = eval(p, side);
    return {e.value, e.grad};
}

ExactSolution ExactSolution::manufactured(const DomainSpec& domain, int num_terms)
{
    std::vector<std::pair<double, SingularFunction>> terms;
    for (int i = 1; i <= num_terms; ++i) terms.emplace_back(1.0, SingularFunction::primal(domain, i));
    return ExactSolution(std::move(terms));
}

FieldValue ExactSolution::eval(const Vec2& p, Side side) const
{
    FieldValue out;
    for (const auto& [mu, s] : terms_) {
        const SingularEval e = s.eval(p, side);
        out.value += mu * e.value;
        out.grad += mu * e.grad;
    }
    return out;
}

ScalarField ExactSolution::field() const
{
    return [u = *this](const Vec2& p, Side side) { return u.eval(p, side); };
}

double annulus_pairing(const DomainSpec& domain, int i, int j, const Cutoff& cutoff, int n)
{
    const SingularFunction sj = SingularFunction::primal(domain, j);
    const SingularFunction dual = SingularFunction::dual_of(domain, i, cutoff);
    std::vector<double> x, w;
    gauss_legendre(n, x, w);
    double sum = 0.0;
    for (int p = 0; p < n; ++p) {
        const double r = cutoff.b + (cutoff.a - cutoff.b) * x[p];
        const double wr = (cutoff.a - cutoff.b) * w[p];
        for (int q = 0; q < n; ++q) {
            const double th = domain.omega * x[q];
            const double wt = domain.omega * w[q];
            const Vec2 pt(r * std::cos(th), r * std::sin(th));
            const Side side = th < std::numbers::pi ? Side::Upper : Side::Lower;
            sum += wr * wt * r * sj.eval(pt, side).value * dual.eval(pt, side).laplacian;
        }
    }
    return sum / (i * std::numbers::pi);
}

double dirichlet_trace(const ExactSolution& u, const Vec2& boundary_point, Side side)
{
    if (!u.terms().empty() && on_corner_ray(u.terms().front().second.domain(), boundary_point, 0.0)) {
        // sin(lambda * 0) = sin(i * pi) = 0 on both corner edges
        return 0.0;
    }
    return u.eval(boundary_point, side).value;
}

} // namespace ecfem
