#include "ecfem/analytic.hpp"
#include "ecfem/errors.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace ecfem;

namespace {

const DomainKind kDomains[] = {DomainKind::LShape, DomainKind::Pacman, DomainKind::Slit};

Vec2 polar_point(double r, double th) { return {r * std::cos(th), r * std::sin(th)}; }

Side side_of(double th) { return th < std::numbers::pi ? Side::Upper : Side::Lower; }

} // namespace

TEST(Analytic, Exponents)
{
    EXPECT_NEAR(singular_exponent(1.5 * std::numbers::pi, 1), 2.0 / 3.0, 1e-15);
    EXPECT_NEAR(singular_exponent(1.75 * std::numbers::pi, 2), 8.0 / 7.0, 1e-15);
    EXPECT_NEAR(singular_exponent(2.0 * std::numbers::pi, 3), 1.5, 1e-15);
}

TEST(Analytic, CutoffProfile)
{
    const Cutoff c;
    EXPECT_EQ(c.eval(0.1).eta, 1.0);
    EXPECT_EQ(c.eval(c.b).eta, 1.0);
    EXPECT_EQ(c.eval(c.a).eta, 0.0);
    EXPECT_EQ(c.eval(0.95).eta, 0.0);
    for (double r = 0.41; r < 0.8; r += 0.037) {
        const double h = 1e-5;
        const auto p = c.eval(r);
        EXPECT_NEAR(p.d1, (c.eval(r + h).eta - c.eval(r - h).eta) / (2 * h), 1e-6);
        EXPECT_NEAR(p.d2, (c.eval(r + h).d1 - c.eval(r - h).d1) / (2 * h), 1e-5);
        EXPECT_GE(p.eta, 0.0);
        EXPECT_LE(p.eta, 1.0);
    }
    Cutoff bad{0.3, 0.5};
    EXPECT_THROW(bad.validate(), PreconditionViolation);
}

TEST(Analytic, PrimalIsHarmonicAndVanishesOnCornerEdges)
{
    for (auto kind : kDomains) {
        const DomainSpec d = DomainSpec::make(kind);
        for (int i = 1; i <= 4; ++i) {
            const SingularFunction s = SingularFunction::primal(d, i);
            EXPECT_NEAR(s.eval(polar_point(0.7, 0.0), Side::Upper).value, 0.0, 1e-15);
            EXPECT_NEAR(s.eval(polar_point(0.7, d.omega), Side::Lower).value, 0.0, 1e-14);
            const double th = 0.3 * d.omega;
            const Vec2 p = polar_point(0.5, th);
            const double h = 1e-4;
            auto v = [&](const Vec2& q) { return s.eval(q, side_of(th)).value; };
            const double lap = (v(p + Vec2(h, 0)) + v(p - Vec2(h, 0)) + v(p + Vec2(0, h)) + v(p - Vec2(0, h)) - 4 * v(p)) / (h * h);
            EXPECT_NEAR(lap, 0.0, 1e-5);
            EXPECT_EQ(s.eval(p).laplacian, 0.0);
            const Vec2 g = s.eval(p, side_of(th)).grad;
            EXPECT_NEAR(g.x(), (v(p + Vec2(h, 0)) - v(p - Vec2(h, 0))) / (2 * h), 1e-7);
            EXPECT_NEAR(g.y(), (v(p + Vec2(0, h)) - v(p - Vec2(0, h))) / (2 * h), 1e-7);
        }
    }
}

TEST(Analytic, DualLaplacianMatchesFiniteDifferences)
{
    for (auto kind : kDomains) {
        const DomainSpec d = DomainSpec::make(kind);
        const SingularFunction s = SingularFunction::dual_of(d, 1);
        for (double r : {0.45, 0.55, 0.7}) {
            const double th = 0.6 * d.omega;
            const Vec2 p = polar_point(r, th);
            const double h = 1e-4;
            auto v = [&](const Vec2& q) { return s.eval(q, side_of(th)).value; };
            const double lap = (v(p + Vec2(h, 0)) + v(p - Vec2(h, 0)) + v(p + Vec2(0, h)) + v(p - Vec2(0, h)) - 4 * v(p)) / (h * h);
            const double exact = s.eval(p, side_of(th)).laplacian;
            EXPECT_NEAR(lap, exact, 1e-4 * std::max(1.0, std::abs(exact)));
        }
        EXPECT_EQ(s.eval(polar_point(0.3, 1.0)).laplacian, 0.0);
    }
}

TEST(Analytic, DualNeedsCutoffAndRejectsTheOrigin)
{
    const DomainSpec d = DomainSpec::parse("lshape");
    EXPECT_THROW(SingularFunction(d, 1, true), PreconditionViolation);
    EXPECT_THROW(SingularFunction::dual_of(d, 1).eval(Vec2(0, 0)), PreconditionViolation);
    EXPECT_TRUE(SingularFunction::primal(d, 1).eval(Vec2(0, 0)).gradient_unbounded);
}

TEST(Analytic, SlitBranchFromSideTag)
{
    const DomainSpec d = DomainSpec::parse("slit");
    const SingularFunction s = SingularFunction::primal(d, 1);
    // sin(theta/2): 0 on the upper side of the slit, sin(pi) = 0 below, gradients differ in sign
    const Vec2 p(0.5, 0.0);
    const Vec2 gu = s.eval(p, Side::Upper).grad;
    const Vec2 gl = s.eval(p, Side::Lower).grad;
    EXPECT_NEAR(gu.y(), -gl.y(), 1e-14);
    EXPECT_GT(std::abs(gu.y()), 0.1);
    EXPECT_THROW(s.eval(p, Side::None), BranchAmbiguous);
}

TEST(Analytic, AnnulusPairingIsKronecker)
{
    for (auto kind : kDomains) {
        const DomainSpec d = DomainSpec::make(kind);
        for (int i = 1; i <= 3; ++i)
            for (int j = 1; j <= 4; ++j) EXPECT_NEAR(annulus_pairing(d, i, j), i == j ? 1.0 : 0.0, 1e-8);
    }
}

TEST(Analytic, ManufacturedSolutionAndTrace)
{
    const DomainSpec d = DomainSpec::parse("pacman");
    const ExactSolution u = ExactSolution::manufactured(d);
    ASSERT_EQ(u.terms().size(), 4u);
    const Vec2 p = polar_point(0.6, 1.1);
    double sum = 0.0;
    for (int i = 1; i <= 4; ++i) sum += SingularFunction::primal(d, i).eval(p).value;
    EXPECT_NEAR(u.eval(p).value, sum, 1e-15);
    EXPECT_NEAR(dirichlet_trace(u, Vec2(0.5, -0.5)), 0.0, 1e-15);
    EXPECT_EQ(dirichlet_trace(u, Vec2(0.3, 0.0)), 0.0);
    EXPECT_NEAR(dirichlet_trace(u, Vec2(1.0, 0.4)), u.eval(Vec2(1.0, 0.4)).value, 1e-15);
}
