#include "ecfem/driver.hpp"
#include "ecfem/errors.hpp"

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace ecfem;

namespace {

struct Verdict {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what)
    {
        if (!ok) {
            pass = false;
            detail << " [" << what << "]";
        }
    }
};

std::vector<Verdict> verdicts(11);

void report(int id, const char* title)
{
    Verdict& v = verdicts[id];
    std::printf("criterion %2d %s: %s%s\n", id, v.pass ? "PASS" : "FAIL", title, v.detail.str().c_str());
    std::fflush(stdout);
}

std::string fmt(double x, int prec = 4)
{
    std::ostringstream os;
    os.precision(prec);
    os << x;
    return os.str();
}

// log2(e_first / e_last) / (levels - 1) over the last n rows
double tail_rate(const std::vector<double>& e, int n)
{
    const std::size_t m = e.size();
    return std::log2(e[m - n] / e[m - 1]) / (n - 1);
}

std::vector<double> column(const ErrorReport& r, int which)
{
    std::vector<double> out;
    for (const auto& row : r.rows) out.push_back(which == 0 ? row.err_L2 : which == 1 ? row.err_L2a : row.err_H1a);
    return out;
}

std::vector<double> extra_column(const ErrorReport& r, const std::string& name)
{
    std::size_t c = 0;
    while (c < r.extra_names.size() && r.extra_names[c] != name) ++c;
    std::vector<double> out;
    for (const auto& row : r.rows) out.push_back(c < row.extra.size() ? row.extra[c] : std::nan(""));
    return out;
}

RunConfig config(const std::string& domain, int k, CorrectionVariant v, PatchVariant patch = PatchVariant::Standard)
{
    RunConfig c;
    c.domain = DomainSpec::parse(domain);
    c.patch = patch;
    c.order = k;
    c.correction = v;
    c.first_level = 2;
    c.last_level = c.cap();
    c.gamma.kind = v == CorrectionVariant::None ? GammaSource::Kind::Zero : GammaSource::Kind::Fit;
    return c;
}

std::string label(const RunConfig& c)
{
    return std::string(c.domain.name()) + " k=" + std::to_string(c.order) + " " + to_string(c.correction);
}

const char* kDomainNames[] = {"lshape", "pacman", "slit"};

void patch_tests()
{
    Verdict& v = verdicts[1];
    double worst = 0.0;
    for (const char* name : kDomainNames)
        for (int k = 1; k <= 4; ++k) {
            const auto space = FESpace::make(generate_mesh(DomainSpec::parse(name), 3), k);
            const SparseMatrix A = assemble_stiffness(*space);
            const SparseMatrix C(A.rows(), A.cols());
            const QuadraturePolicy quad = QuadraturePolicy::for_order(k);
            std::vector<ScalarField> fields{[](const Vec2& x, Side) { return FieldValue{x.x(), Vec2(1.0, 0.0)}; }};
            if (k >= 2)
                fields.push_back([](const Vec2& x, Side) {
                    return FieldValue{x.x() * x.x() - x.y() * x.y(), Vec2(2 * x.x(), -2 * x.y())};
                });
            for (const auto& u : fields) {
                ProblemSpec prob;
                prob.trace = [u](const Vec2& x, Side s) { return u(x, s).value; };
                const DiscreteFunction uh = solve_modified(space, A, C, prob, quad);
                const double e = weighted_error(uh, u, {0.0, 0}, quad);
                worst = std::max(worst, e);
                v.require(e <= 1e-10, std::string(name) + " k=" + std::to_string(k) + " err " + fmt(e));
            }
        }
    v.detail << " max plain L2 error " << fmt(worst, 3);
}

void pollution_rates()
{
    Verdict& v = verdicts[2];
    const std::pair<const char*, double> cases[] = {{"lshape", 4.0 / 3.0}, {"pacman", 8.0 / 7.0}};
    for (const auto& [name, expected] : cases) {
        RunConfig c = config(name, 2, CorrectionVariant::None);
        c.first_level = 4;
        c.last_level = 7;
        const ErrorReport r = run_convergence(c, Eigen::VectorXd::Zero(c.K()));
        const double rate = tail_rate(column(r, 0), 4);
        v.detail << ' ' << name << " rate " << fmt(rate) << " (expected " << fmt(expected) << ")";
        v.require(std::abs(rate - expected) <= 0.07, std::string(name) + " off by more than 0.07");
    }
}

struct FittedRun {
    RunConfig config;
    GammaSequence sequence;
    Eigen::VectorXd gamma;
    ErrorReport table;
    bool ok = false;
    std::string failure;
};

FittedRun fitted_run(RunConfig c)
{
    FittedRun out;
    out.config = c;
    try {
        std::optional<GammaSequence> seq;
        out.gamma = resolve_gamma(c, &seq);
        out.sequence = std::move(*seq);
        RunConfig conv = c;
        conv.first_level = c.cap() - 3;
        out.table = run_convergence(conv, out.gamma);
        out.ok = true;
    } catch (const Error& e) {
        out.failure = e.what();
    }
    return out;
}

// rate criterion of the corrected tables; empty string when met
std::string rate_check(const FittedRun& run)
{
    if (!run.ok) return "failed: " + run.failure;
    const int k = run.config.order;
    std::ostringstream bad;
    const double l2a = tail_rate(column(run.table, 1), 3);
    if (std::abs(l2a - (k + 1)) > 0.15) bad << "L2a rate " << fmt(l2a);
    if (k == 2) {
        const double h1a = tail_rate(column(run.table, 2), 3);
        if (std::abs(h1a - k) > 0.1) bad << (bad.str().empty() ? "" : ", ") << "H1a rate " << fmt(h1a);
    }
    return bad.str();
}

void corrected_rates(const std::vector<FittedRun>& layer)
{
    Verdict& v = verdicts[3];
    for (const auto& run : layer) {
        const std::string bad = rate_check(run);
        if (run.ok) {
            v.detail << ' ' << run.config.domain.name() << "/k" << run.config.order << ' '
                     << fmt(tail_rate(column(run.table, 1), 3), 3);
            if (run.config.order == 2) v.detail << '/' << fmt(tail_rate(column(run.table, 2), 3), 3);
        }
        v.require(bad.empty(), label(run.config) + ": " + bad);
    }
}

void gamma_fits(const std::vector<FittedRun>& runs)
{
    Verdict& v = verdicts[4];
    double worst = 0.0;
    for (const auto& run : runs) {
        if (!run.ok || !run.sequence.fit) {
            v.require(false, label(run.config) + ": no fit");
            continue;
        }
        const double rel = run.sequence.fit->relative_residual();
        worst = std::max(worst, rel);
        v.require(rel <= 0.05, label(run.config) + " residual " + fmt(rel, 3));
    }
    v.detail << " worst fit residual " << fmt(worst, 3) << ';';

    const FittedRun fan = fitted_run(config("lshape", 2, CorrectionVariant::Layer, PatchVariant::Fan));
    if (!fan.ok) {
        v.require(false, "lshape fan: " + fan.failure);
        return;
    }
    const double d = std::max(std::abs(fan.gamma(0) - 0.031521), std::abs(fan.gamma(1) + 0.005534));
    v.detail << " lshape fan gamma* (" << fmt(fan.gamma(0), 7) << ", " << fmt(fan.gamma(1), 7) << ") deviation "
             << fmt(d, 2);
    v.require(d <= 5e-4, "lshape fan gamma* deviation");
    for (const auto& run : runs)
        if (run.ok && run.config.domain.kind == DomainKind::LShape && run.config.order == 2 &&
            run.config.correction == CorrectionVariant::Layer)
            v.detail << "; criss-cross gamma* (" << fmt(run.gamma(0), 7) << ", " << fmt(run.gamma(1), 7)
                     << ") informational";
}

void pollution_function(const std::vector<FittedRun>& runs)
{
    Verdict& v = verdicts[5];
    double mismatch = 0.0;
    double jac = 0.0;
    double jmax = -std::numeric_limits<double>::infinity();
    std::mt19937 gen(7);
    std::uniform_real_distribution<double> u(-0.2, 0.2);
    for (const auto& run : runs) {
        if (!run.ok) continue;
        mismatch = std::max(mismatch, run.sequence.max_mismatch);
        const RunConfig& c = run.config;
        PollutionOptions opts;
        opts.quad = c.quad();
        opts.solver = c.solver();
        const int level = run.sequence.levels.front() + 1;
        const auto space = FESpace::make(generate_mesh(c.domain, level, c.patch), c.order);
        PollutionProblem p(space, c.correction, c.K(), opts);
        for (int trial = 0; trial < 3; ++trial) {
            Eigen::VectorXd g = run.gamma;
            for (Eigen::Index i = 0; i < g.size(); ++i) g(i) *= 1.0 + u(gen);
            if (!validate_ellipticity(c.correction, g).ok) {
                --trial;
                continue;
            }
            const PollutionEval ev = p.evaluate(g);
            mismatch = std::max(mismatch, ev.max_mismatch);
            jmax = std::max(jmax, ev.J.maxCoeff());
            for (Eigen::Index j = 0; j < g.size(); ++j) {
                const double h = 1e-5 * std::max(1.0, std::abs(g(j)));
                Eigen::VectorXd gp = g, gm = g;
                gp(j) += h;
                gm(j) -= h;
                const Eigen::VectorXd fd = (p.evaluate(gp, false).g - p.evaluate(gm, false).g) / (2 * h);
                for (Eigen::Index i = 0; i < g.size(); ++i)
                    jac = std::max(jac, std::abs(ev.J(i, j) - fd(i)) / std::abs(ev.J(i, j)));
            }
        }
    }
    v.detail << " max identity mismatch " << fmt(mismatch, 2) << ", max Jacobian FD deviation " << fmt(jac, 2)
             << ", largest Jacobian entry " << fmt(jmax, 3);
    v.require(mismatch <= 1e-10, "identity mismatch");
    v.require(jac <= 1e-6, "Jacobian vs finite differences");
    v.require(jmax < 0.0, "Jacobian sign");
}

void postprocessing(const std::vector<FittedRun>& runs)
{
    Verdict& v = verdicts[6];
    for (const auto& run : runs) {
        if (!run.ok) continue;
        RunConfig c = run.config;
        c.first_level = c.cap() - 3;
        c.postprocess = true;
        const int k = c.order;
        try {
            const ErrorReport r = run_convergence(c, run.gamma);
            const double rmu = tail_rate(extra_column(r, "err_mu"), 3);
            const double rpos = tail_rate(extra_column(r, "err_pos_L2"), 3);
            v.detail << ' ' << c.domain.name() << "/k" << k << ' ' << fmt(rmu, 3) << '/' << fmt(rpos, 3);
            v.require(rmu >= k + 0.7, label(c) + " mu rate");
            v.require(rpos >= k + 0.7, label(c) + " u_pos rate");
        } catch (const Error& e) {
            v.require(false, label(c) + ": " + e.what());
        }
    }
    double worst = 0.0;
    for (const char* name : kDomainNames) {
        const DomainSpec d = DomainSpec::parse(name);
        for (int i = 1; i <= 4; ++i)
            for (int j = 1; j <= 4; ++j) worst = std::max(worst, std::abs(annulus_pairing(d, i, j) - (i == j)));
    }
    v.detail << "; annulus oracle deviation " << fmt(worst, 2);
    v.require(worst <= 1e-8, "annulus oracle");
}

void orthogonality()
{
    Verdict& v = verdicts[7];
    double worst = 0.0;
    for (const char* name : {"lshape", "slit"}) {
        RunConfig c = config(name, 2, CorrectionVariant::Layer);
        c.first_level = 1;
        c.last_level = 5;
        for (const auto& row : run_ortho(c, Eigen::VectorXd::Zero(c.K())))
            if (row.i == 1 && row.j == 3) worst = std::max(worst, std::abs(row.ortho.relative()));
    }
    v.detail << " criss-cross max |ortho| " << fmt(worst, 2);
    v.require(worst <= 1e-12, "criss-cross interpolation orthogonality");

    RunConfig c = config("pacman", 2, CorrectionVariant::Layer, PatchVariant::Skewed);
    c.last_level = 6;
    const Eigen::VectorXd gamma = resolve_gamma(c);
    std::vector<double> mixed;
    for (const auto& row : run_ortho(c, gamma))
        if (row.i == 1 && row.j == 3) mixed.push_back(std::abs(row.mixed));
    const double rate = tail_rate(mixed, 3);
    v.detail << "; skewed pacman mixed pollution rate " << fmt(rate, 3);
    v.require(rate <= 2.4, "skewed pacman mixed rate");
}

void conditioning(const std::vector<FittedRun>& runs)
{
    Verdict& v = verdicts[8];
    int solved = 0;
    for (const auto& run : runs) {
        if (run.ok) ++solved;
        v.require(run.ok, label(run.config) + ": " + run.failure);
    }
    v.detail << ' ' << solved << '/' << runs.size() << " fitted configurations solved;";
    for (auto variant : {CorrectionVariant::Layer, CorrectionVariant::Function}) {
        RunConfig c = config("pacman", 2, variant);
        c.first_level = 2;
        c.last_level = 4;
        Eigen::VectorXd gamma;
        for (const auto& run : runs)
            if (run.ok && run.config.domain.kind == DomainKind::Pacman && run.config.order == 2 &&
                run.config.correction == variant)
                gamma = run.gamma;
        if (gamma.size() == 0) {
            v.require(false, std::string("no gamma for pacman ") + to_string(variant));
            continue;
        }
        for (const auto& row : run_spectrum(c, gamma)) {
            v.detail << ' ' << to_string(variant) << '/' << row.level << ' ' << fmt(row.ratio.min_ratio, 5) << '/'
                     << fmt(row.ratio.max_ratio, 6);
            v.require(row.ratio.min_ratio >= 0.97 && row.ratio.min_ratio <= 1.0, "min ratio");
            v.require(std::abs(row.ratio.max_ratio - 1.0) <= 1e-3, "max ratio");
        }
    }
}

void layer_vs_function(const std::vector<FittedRun>& layer, const std::vector<FittedRun>& function)
{
    Verdict& v = verdicts[9];
    for (const auto& run : function) {
        const std::string bad = rate_check(run);
        v.require(bad.empty(), label(run.config) + ": " + bad);
    }
    bool layer_ok = true;
    for (const auto& run : layer) layer_ok = layer_ok && rate_check(run).empty();
    v.require(layer_ok, "layer rates (see criterion 3)");
    for (std::size_t n = 0; n < layer.size(); ++n) {
        if (layer[n].config.order != 4 || !layer[n].ok || !function[n].ok) continue;
        const auto el = column(layer[n].table, 1);
        const auto ef = column(function[n].table, 1);
        double lo = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < el.size(); ++i) lo = std::min(lo, el[i] / ef[i]);
        v.detail << ' ' << layer[n].config.domain.name() << "/k4 min L2a ratio " << fmt(lo, 3);
        v.require(lo > 1.0, std::string(layer[n].config.domain.name()) + " k=4 ratio");
    }
}

std::string csv_bundle()
{
    std::ostringstream os;
    RunConfig c = config("pacman", 2, CorrectionVariant::Layer);
    c.last_level = 5;
    const GammaSequence seq = compute_gamma_sequence(c);
    write_gamma_csv(os, seq.levels, seq.gammas, seq.residuals, seq.fit ? &*seq.fit : nullptr);
    RunConfig conv = c;
    conv.first_level = 3;
    conv.postprocess = true;
    run_convergence(conv, seq.fit->gamma_star).write_csv(os);
    RunConfig spec = c;
    spec.last_level = 3;
    write_spectrum_csv(os, run_spectrum(spec, seq.fit->gamma_star), spec.correction);
    return os.str();
}

void determinism()
{
    Verdict& v = verdicts[10];
    const std::string a = csv_bundle();
    const std::string b = csv_bundle();
    v.detail << ' ' << a.size() << " bytes compared";
    v.require(a == b, "CSV output differs between runs");
}

template <class F>
void guarded(int id, const char* title, F&& f)
{
    const auto t0 = std::chrono::steady_clock::now();
    try {
        f();
    } catch (const std::exception& e) {
        verdicts[id].require(false, std::string("exception: ") + e.what());
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    verdicts[id].detail << " (" << fmt(s, 3) << " s)";
    report(id, title);
}

} // namespace

int main()
{
    guarded(1, "patch tests", patch_tests);
    guarded(2, "uncorrected pollution rates", pollution_rates);

    std::vector<FittedRun> layer, function;
    const auto t0 = std::chrono::steady_clock::now();
    for (int k = 2; k <= 4; ++k)
        for (const char* name : kDomainNames) {
            layer.push_back(fitted_run(config(name, k, CorrectionVariant::Layer)));
            function.push_back(fitted_run(config(name, k, CorrectionVariant::Function)));
        }
    std::printf("fitted runs: %.1f s\n",
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    std::vector<FittedRun> all = layer;
    all.insert(all.end(), function.begin(), function.end());

    guarded(3, "corrected rates with fitted gamma*", [&] { corrected_rates(layer); });
    guarded(4, "gamma extrapolation", [&] { gamma_fits(all); });
    guarded(5, "pollution function", [&] { pollution_function(all); });
    guarded(6, "post-processing", [&] { postprocessing(layer); });
    guarded(7, "interpolation orthogonality", orthogonality);
    guarded(8, "ellipticity and conditioning", [&] { conditioning(all); });
    guarded(9, "layer vs function", [&] { layer_vs_function(layer, function); });
    guarded(10, "determinism", determinism);

    int failed = 0;
    for (int id = 1; id <= 10; ++id) failed += verdicts[id].pass ? 0 : 1;
    std::printf("%d of 10 criteria passed\n", 10 - failed);
    return failed == 0 ? 0 : 1;
}
