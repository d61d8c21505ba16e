#pragma once

#include "ecfem/geometry.hpp"

#include <functional>
#include <optional>
#include <utility>
#include <vector>

namespace ecfem {

/// lambda_i = i*pi/omega.
double singular_exponent(double omega, int index);

/// Smooth radial cutoff: eta = 1 for r <= b, eta = 0 for r >= a, C-infinity
/// blend in between built from exp(-1/t).
struct Cutoff {
    double a = 0.8;
    double b = 0.4;

    struct Profile {
        double eta = 0.0;
        double d1 = 0.0; ///< d eta / dr
        double d2 = 0.0; ///< d^2 eta / dr^2
    };
    Profile eval(double r) const;
    void validate() const;
};

/// Value and Cartesian gradient of a scalar function.
struct FieldValue {
    double value = 0.0;
    Vec2 grad = Vec2::Zero();
};

/// Scalar field evaluated at a point; the side tag resolves slit points.
using ScalarField = std::function<FieldValue(const Vec2&, Side)>;

struct SingularEval {
    double value = 0.0;
    Vec2 grad = Vec2::Zero();
    double laplacian = 0.0;
    bool gradient_unbounded = false; ///< set at r = 0 when the exponent is < 1
};

/// s_i = eta(r) r^{lambda_i} sin(lambda_i theta) (primal) or
/// s_{-i} = eta(r) r^{-lambda_i} sin(lambda_i theta) (dual, cutoff mandatory).
/// The primal form may be used without cutoff.
class SingularFunction {
public:
    SingularFunction(const DomainSpec& domain, int index, bool dual = false, std::optional<Cutoff> cutoff = {});

    static SingularFunction primal(const DomainSpec& domain, int index) { return {domain, index}; }
    static SingularFunction cut(const DomainSpec& domain, int index, const Cutoff& c = {}) { return {domain, index, false, c}; }
    static SingularFunction dual_of(const DomainSpec& domain, int index, const Cutoff& c = {}) { return {domain, index, true, c}; }

    int index() const { return index_; }
    double lambda() const { return lambda_; }
    bool is_dual() const { return dual_; }
    const std::optional<Cutoff>& cutoff() const { return cutoff_; }
    const DomainSpec& domain() const { return domain_; }
    /// Radius beyond which the function vanishes (infinity without cutoff).
    double support_radius() const;

    SingularEval eval(const Vec2& p, Side side = Side::None) const;
    FieldValue field(const Vec2& p, Side side = Side::None) const;

private:
    DomainSpec domain_;
    int index_;
    double lambda_;
    bool dual_;
    std::optional<Cutoff> cutoff_;
};

/// u = sum_i mu_i s_i with uncut primal singular functions; harmonic, so the
/// right-hand side is zero and the data enters through the Dirichlet trace.
class ExactSolution {
public:
    ExactSolution() = default;
    explicit ExactSolution(std::vector<std::pair<double, SingularFunction>> terms) : terms_(std::move(terms)) {}

    /// s_1 + s_2 + s_3 + s_4.
    static ExactSolution manufactured(const DomainSpec& domain, int num_terms = 4);

    const std::vector<std::pair<double, SingularFunction>>& terms() const { return terms_; }
    FieldValue eval(const Vec2& p, Side side = Side::None) const;
    ScalarField field() const;

private:
    std::vector<std::pair<double, SingularFunction>> terms_;
};

/// (1/(i pi)) * integral of s_j Delta s_{-i} over the annulus b <= r <= a, by a
/// tensor Gauss rule in polar coordinates (n points per direction). Equals delta_ij.
double annulus_pairing(const DomainSpec& domain, int i, int j, const Cutoff& cutoff = {}, int n = 64);

/// u restricted to the boundary; exactly zero on the two corner edges.
double dirichlet_trace(const ExactSolution& u, const Vec2& boundary_point, Side side = Side::None);

} // namespace ecfem
