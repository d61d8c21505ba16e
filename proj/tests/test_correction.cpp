#include "ecfem/correction.hpp"
#include "ecfem/errors.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

using namespace ecfem;

namespace {

constexpr double pi = std::numbers::pi;

PollutionOptions options(int k)
{
    PollutionOptions o;
    o.quad = QuadraturePolicy::for_order(k);
    return o;
}

} // namespace

TEST(Correction, OrderTable)
{
    const int expected[3][3] = {{2, 2, 2}, {2, 3, 3}, {3, 4, 4}};
    const double omegas[3] = {1.5 * pi, 1.75 * pi, 2.0 * pi};
    for (int k = 2; k <= 4; ++k)
        for (int w = 0; w < 3; ++w) EXPECT_EQ(correction_order(k, omegas[w]), expected[k - 2][w]) << k << " " << w;
    EXPECT_EQ(correction_order(1, 1.5 * pi), 1);
    EXPECT_THROW(correction_order(2, 0.5 * pi), PreconditionViolation);
}

TEST(Correction, VariantNames)
{
    for (auto v : {CorrectionVariant::None, CorrectionVariant::Layer, CorrectionVariant::Function})
        EXPECT_EQ(parse_variant(to_string(v)), v);
    EXPECT_THROW(parse_variant("layers"), ConfigError);
}

TEST(Correction, Ellipticity)
{
    Eigen::VectorXd g(2);
    g << 0.5, -0.9;
    EXPECT_TRUE(validate_ellipticity(CorrectionVariant::Layer, g).ok);
    g << 1.0, 0.0;
    EXPECT_FALSE(validate_ellipticity(CorrectionVariant::Layer, g).ok);
    // 1 - 0.5 - 0.6 t < 0 near t = 1
    g << 0.5, 0.6;
    const auto v = validate_ellipticity(CorrectionVariant::Function, g);
    EXPECT_FALSE(v.ok);
    EXPECT_NEAR(v.margin, -0.1, 1e-12);
    Eigen::VectorXd q(3);
    q << 0.2, 1.6, -1.0; // minimum of 0.8 - 1.6t + t^2 at t = 0.8: 0.16
    const auto w = validate_ellipticity(CorrectionVariant::Function, q);
    EXPECT_TRUE(w.ok);
    EXPECT_NEAR(w.margin, 0.16, 1e-10);
}

TEST(Correction, PartsAreBoundedByTheStiffness)
{
    const auto space = FESpace::make(generate_mesh(DomainSpec::parse("pacman"), 3), 2);
    const SparseMatrix A = assemble_stiffness(*space);
    std::mt19937 gen(11);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Eigen::VectorXd x(A.rows());
    for (int i = 0; i < x.size(); ++i) x(i) = u(gen);
    for (auto variant : {CorrectionVariant::Layer, CorrectionVariant::Function}) {
        const auto parts = correction_parts(*space, make_correction(space->mesh, variant, 3));
        ASSERT_EQ(parts.size(), 3u);
        double sum = 0.0;
        for (const auto& C : parts) {
            EXPECT_LT((Eigen::MatrixXd(C) - Eigen::MatrixXd(C).transpose()).cwiseAbs().maxCoeff(), 1e-14);
            const double e = x.dot(C * x);
            EXPECT_GE(e, 0.0);
            EXPECT_LE(e, x.dot(A * x));
            sum += e;
        }
        if (variant == CorrectionVariant::Layer) EXPECT_LE(sum, x.dot(A * x));
    }
    // first function part equals the first layer part
    const auto l = correction_parts(*space, make_correction(space->mesh, CorrectionVariant::Layer, 1));
    const auto f = correction_parts(*space, make_correction(space->mesh, CorrectionVariant::Function, 1));
    EXPECT_LT((Eigen::MatrixXd(l[0]) - Eigen::MatrixXd(f[0])).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(Correction, FunctionWeightIsIntegratedExactly)
{
    // constant gradient u = x: c_j(u, u) = integral over S^1 of (r/R)^(j-1)
    const auto space = FESpace::make(generate_mesh(DomainSpec::parse("lshape"), 2), 1);
    const CorrectionSpec spec = make_correction(space->mesh, CorrectionVariant::Function, 2);
    const auto parts = correction_parts(*space, spec);
    Eigen::VectorXd x(space->dofs.size());
    for (int i = 0; i < x.size(); ++i) x(i) = space->dofs.nodes[i].x();
    double oracle = 0.0;
    for (int t : spec.elements(1)) {
        const GradedResult r = integrate_graded([&](const Vec2& p) { return p.norm() / spec.function_radius; },
                                                space->mesh.corners(t), space->mesh.corner_local_index(t), 12);
        oracle += r.value;
    }
    EXPECT_NEAR(x.dot(parts[1] * x), oracle, 1e-12);
}

TEST(Pollution, DefinitionAndIdentityAgree)
{
    for (const char* name : {"lshape", "pacman", "slit"}) {
        const DomainSpec d = DomainSpec::parse(name);
        const auto space = FESpace::make(generate_mesh(d, 3), 2);
        for (auto variant : {CorrectionVariant::Layer, CorrectionVariant::Function}) {
            PollutionProblem p(space, variant, 2, options(2));
            Eigen::VectorXd g(2);
            g << 0.02, -0.01;
            const PollutionEval ev = p.evaluate(g);
            EXPECT_LE(ev.max_mismatch, 1e-10) << name;
            for (int i = 0; i < 2; ++i) EXPECT_GT(ev.energy(i), 0.0);
        }
    }
}

TEST(Pollution, EnergyMatchesPolarIntegral)
{
    // a(s_1, s_1) over the unit-square L-shape: boundary integral of s ds/dn over the far boundary
    const DomainSpec d = DomainSpec::parse("lshape");
    const auto space = FESpace::make(generate_mesh(d, 2), 2);
    PollutionProblem p(space, CorrectionVariant::Layer, 2, options(2));
    const SingularFunction s = SingularFunction::primal(d, 1);
    std::vector<double> x, w;
    gauss_legendre(400, x, w);
    double oracle = 0.0;
    const Vec2 path[5] = {Vec2(1, 0), Vec2(1, 1), Vec2(-1, 1), Vec2(-1, -1), Vec2(0, -1)};
    const Vec2 normals[4] = {Vec2(1, 0), Vec2(0, 1), Vec2(-1, 0), Vec2(0, -1)};
    for (int e = 0; e < 4; ++e) {
        const Vec2 a = path[e], b = path[e + 1];
        for (std::size_t q = 0; q < x.size(); ++q) {
            const Vec2 pt = a + x[q] * (b - a);
            const SingularEval v = s.eval(pt);
            oracle += w[q] * (b - a).norm() * v.value * v.grad.dot(normals[e]);
        }
    }
    EXPECT_NEAR(p.energy(1), oracle, 1e-9 * oracle);
}

TEST(Pollution, JacobianMatchesFiniteDifferences)
{
    const auto space = FESpace::make(generate_mesh(DomainSpec::parse("pacman"), 3), 2);
    std::mt19937 gen(2024);
    std::uniform_real_distribution<double> u(-0.1, 0.1);
    for (auto variant : {CorrectionVariant::Layer, CorrectionVariant::Function}) {
        PollutionProblem p(space, variant, 2, options(2));
        for (int trial = 0; trial < 3; ++trial) {
            Eigen::VectorXd g(2);
            g << u(gen), u(gen);
            const PollutionEval ev = p.evaluate(g);
            for (int j = 0; j < 2; ++j) {
                const double h = 1e-6;
                Eigen::VectorXd gp = g, gm = g;
                gp(j) += h;
                gm(j) -= h;
                const Eigen::VectorXd fd = (p.evaluate(gp, false).g - p.evaluate(gm, false).g) / (2 * h);
                for (int i = 0; i < 2; ++i) {
                    EXPECT_NEAR(ev.J(i, j), fd(i), 1e-6 * std::abs(ev.J(i, j)));
                    EXPECT_LT(ev.J(i, j), 0.0);
                }
            }
        }
    }
}

TEST(Pollution, NewtonFindsTheRoot)
{
    const auto space = FESpace::make(generate_mesh(DomainSpec::parse("lshape"), 3, PatchVariant::Fan), 2);
    PollutionProblem p(space, CorrectionVariant::Layer, 2, options(2));
    const GammaSolveResult r = solve_gamma(p, Eigen::VectorXd::Zero(2));
    EXPECT_LE(r.residual, 1e-12);
    EXPECT_LE(r.max_mismatch, 1e-10);
    EXPECT_NEAR(r.gamma(0), 0.03152875, 1e-7);
    EXPECT_NEAR(r.gamma(1), -0.00554378, 1e-7);
}

TEST(Pollution, InadmissibleStartRejected)
{
    const auto space = FESpace::make(generate_mesh(DomainSpec::parse("lshape"), 2), 2);
    PollutionProblem p(space, CorrectionVariant::Layer, 2, options(2));
    Eigen::VectorXd g(2);
    g << 1.5, 0.0;
    EXPECT_THROW(solve_gamma(p, g), InadmissibleStart);
}

TEST(Newton, ScalarToy)
{
    const double x = newton_scalar([](double t) { return std::exp(-t) - 0.5; }, [](double t) { return -std::exp(-t); }, 0.0);
    EXPECT_NEAR(x, std::log(2.0), 1e-14);
}

TEST(Fit, RecoversSyntheticSequence)
{
    std::vector<double> h;
    std::vector<Eigen::VectorXd> g;
    Eigen::VectorXd star(2), c(2);
    star << 0.03, -0.005;
    c << -1e-4, 4e-5;
    for (int l = 3; l <= 7; ++l) {
        h.push_back(level_h(l));
        g.push_back(star + c * std::pow(h.back(), 4.0 / 3.0));
    }
    const GammaFit f = fit_gamma_star(h, g, 4.0 / 3.0);
    EXPECT_LT((f.gamma_star - star).norm(), 1e-15);
    EXPECT_LT((f.c - c).norm(), 1e-13);
    EXPECT_LT(f.relative_residual(), 1e-9);
    EXPECT_THROW(fit_gamma_star({0.5, 0.25}, {star, star}, 1.0), InsufficientLevels);
    EXPECT_NEAR(gamma_fit_rate(2, 1.5 * pi), 4.0 / 3.0, 1e-14);
}

TEST(Fit, CsvRoundTrip)
{
    std::vector<int> levels{3, 4, 5};
    std::vector<Eigen::VectorXd> g;
    for (int l : levels) {
        Eigen::VectorXd v(2);
        v << 0.1 / l, -0.01 * l;
        g.push_back(v);
    }
    std::vector<double> h;
    for (int l : levels) h.push_back(level_h(l));
    const GammaFit f = fit_gamma_star(h, g, 1.0);
    std::stringstream ss;
    write_gamma_csv(ss, levels, g, {1e-14, 1e-14, 1e-14}, &f);
    EXPECT_EQ(ss.str().substr(0, ss.str().find('\n')), "level,h,gamma_1,gamma_2,residual");
    EXPECT_EQ(read_gamma_csv(ss), f.gamma_star);
    std::stringstream plain;
    write_gamma_csv(plain, levels, g, {0, 0, 0}, nullptr);
    EXPECT_EQ(read_gamma_csv(plain), g.back());
}
