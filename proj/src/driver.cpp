#include "ecfem/driver.hpp"

#include "ecfem/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

namespace ecfem {

namespace {

double parse_double(const std::string& s)
{
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != s.size()) throw ConfigError("not a number: '" + s + "'");
    return v;
}

int parse_int(const std::string& s)
{
    int v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) throw ConfigError("not an integer: '" + s + "'");
    return v;
}

} // namespace

GammaSource GammaSource::parse(const std::string& text)
{
    GammaSource g;
    if (text.empty()) throw ConfigError("empty gamma");
    if (text == "0") return g;
    if (text == "fit") {
        g.kind = Kind::Fit;
        return g;
    }
    if (text.front() == '@') {
        g.kind = Kind::File;
        g.path = text.substr(1);
        if (g.path.empty()) throw ConfigError("gamma file name missing after '@'");
        return g;
    }
    g.kind = Kind::Literal;
    std::vector<double> v;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) v.push_back(parse_double(item));
    g.values = Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
    return g;
}

std::pair<int, int> parse_level_range(const std::string& text)
{
    const auto dots = text.find("..");
    if (dots == std::string::npos) {
        const int l = parse_int(text);
        return {l, l};
    }
    return {parse_int(text.substr(0, dots)), parse_int(text.substr(dots + 2))};
}

int RunConfig::K() const
{
    if (correction == CorrectionVariant::None) return 0;
    return correction_order(order, domain.omega);
}

double RunConfig::alpha_value() const
{
    return alpha ? *alpha : order - singular_exponent(domain.omega, 1);
}

int RunConfig::cap() const
{
    if (level_cap) return *level_cap;
    return order <= 2 ? 7 : 6;
}

QuadraturePolicy RunConfig::quad() const
{
    QuadraturePolicy q = QuadraturePolicy::for_order(order);
    if (quad_degree) q.degree = *quad_degree;
    return q;
}

SolverOptions RunConfig::solver() const
{
    SolverOptions s;
    s.tol = solver_tol;
    return s;
}

void RunConfig::validate() const
{
    if (order < 1 || order > 4) throw ConfigError("order must be 1..4");
    if (first_level < 1 || last_level < first_level) throw ConfigError("level range must satisfy 1 <= A <= B");
    if (last_level > cap()) {
        std::ostringstream msg;
        msg << "level " << last_level << " exceeds the level cap " << cap() << " for order " << order;
        throw ConfigError(msg.str());
    }
    if (quad_degree && *quad_degree < 1) throw ConfigError("quadrature degree must be positive");
    if (!(solver_tol > 0.0)) throw ConfigError("solver tolerance must be positive");
    if (gamma.kind == GammaSource::Kind::Literal) {
        if (correction == CorrectionVariant::None)
            throw ConfigError("a gamma vector needs --correction layer or function");
        if (gamma.values.size() != K()) {
            std::ostringstream msg;
            msg << "gamma has " << gamma.values.size() << " entries but K = " << K() << " for order " << order
                << " on " << domain.name();
            throw ConfigError(msg.str());
        }
    }
    if (gamma.kind == GammaSource::Kind::Fit && correction == CorrectionVariant::None)
        throw ConfigError("--gamma fit needs --correction layer or function");
}

int first_gamma_level(const DomainSpec& domain, PatchVariant patch, CorrectionVariant variant, int K)
{
    const int layers = variant == CorrectionVariant::Layer ? K : 1;
    for (int level = 2; level <= 8; ++level) {
        try {
            corner_layers(generate_mesh(domain, level, patch), layers);
            return level;
        } catch (const LayersTooLarge&) {
        }
    }
    throw LayersTooLarge("no level up to 8 holds the requested corner layers");
}

GammaSequence compute_gamma_sequence(const DomainSpec& domain, PatchVariant patch, int order,
                                     CorrectionVariant variant, int first, int last, const PollutionOptions& opts,
                                     const NewtonOptions& newton)
{
    const int K = correction_order(order, domain.omega);
    GammaSequence seq;
    Eigen::VectorXd gamma = Eigen::VectorXd::Zero(K);
    for (int level = first; level <= last; ++level) {
        const auto space = FESpace::make(generate_mesh(domain, level, patch), order);
        PollutionProblem problem(space, variant, K, opts);
        GammaSolveResult r;
        try {
            r = solve_gamma(problem, gamma, newton);
        } catch (const NewtonDiverged& e) {
            std::ostringstream msg;
            msg << "level " << level << ": " << e.what();
            throw NewtonDiverged(msg.str());
        }
        gamma = r.gamma;
        seq.levels.push_back(level);
        seq.gammas.push_back(r.gamma);
        seq.residuals.push_back(r.residual);
        seq.iterations.push_back(r.iterations);
        seq.max_mismatch = std::max(seq.max_mismatch, r.max_mismatch);
    }
    std::vector<double> h;
    std::vector<Eigen::VectorXd> g;
    for (std::size_t i = 0; i < seq.levels.size(); ++i)
        if (seq.levels[i] >= 3) {
            h.push_back(level_h(seq.levels[i]));
            g.push_back(seq.gammas[i]);
        }
    if (h.size() < 3) {
        h.clear();
        g = seq.gammas;
        for (int l : seq.levels) h.push_back(level_h(l));
    }
    if (h.size() >= 3) seq.fit = fit_gamma_star(h, g, gamma_fit_rate(order, domain.omega));
    return seq;
}

GammaSequence compute_gamma_sequence(const RunConfig& config)
{
    if (config.correction == CorrectionVariant::None) throw ConfigError("gamma needs --correction layer or function");
    PollutionOptions opts;
    opts.quad = config.quad();
    opts.solver = config.solver();
    const int first = std::max(config.first_level,
                               first_gamma_level(config.domain, config.patch, config.correction, config.K()));
    if (first > config.last_level) throw ConfigError("level range too coarse for the corner layers");
    return compute_gamma_sequence(config.domain, config.patch, config.order, config.correction, first,
                                  config.last_level, opts);
}

Eigen::VectorXd resolve_gamma(const RunConfig& config, std::optional<GammaSequence>* sequence)
{
    const int K = config.K();
    switch (config.gamma.kind) {
    case GammaSource::Kind::Zero: return Eigen::VectorXd::Zero(K);
    case GammaSource::Kind::Literal: return config.gamma.values;
    case GammaSource::Kind::File: {
        std::ifstream in(config.gamma.path);
        if (!in) throw ConfigError("cannot open gamma file '" + config.gamma.path + "'");
        Eigen::VectorXd g = read_gamma_csv(in);
        if (g.size() != K) {
            std::ostringstream msg;
            msg << "gamma file has " << g.size() << " entries but K = " << K;
            throw ConfigError(msg.str());
        }
        return g;
    }
    case GammaSource::Kind::Fit: {
        GammaSequence seq = compute_gamma_sequence(config);
        if (!seq.fit) throw InsufficientLevels("fitting gamma* needs at least three levels");
        Eigen::VectorXd g = seq.fit->gamma_star;
        if (sequence) *sequence = std::move(seq);
        return g;
    }
    }
    return Eigen::VectorXd::Zero(K);
}

namespace {

SparseMatrix correction_matrix(const FESpace& space, CorrectionVariant variant, const Eigen::VectorXd& gamma)
{
    const int n = space.dofs.size();
    if (variant == CorrectionVariant::None || gamma.size() == 0 || gamma.isZero(0.0)) return SparseMatrix(n, n);
    return assemble_correction(space, make_correction(space.mesh, variant, static_cast<int>(gamma.size()), gamma));
}

void check_ellipticity(CorrectionVariant variant, const Eigen::VectorXd& gamma)
{
    const EllipticityVerdict v = validate_ellipticity(variant, gamma);
    if (!v.ok) throw InadmissibleStart(v.message);
}

} // namespace

ErrorReport run_convergence(const RunConfig& config, const Eigen::VectorXd& gamma)
{
    check_ellipticity(config.correction, gamma);
    const ExactSolution u = ExactSolution::manufactured(config.domain);
    const ProblemSpec prob = ProblemSpec::dirichlet(u);
    const QuadraturePolicy quad = config.quad();
    const double alpha = config.alpha_value();
    const int npos = correction_order(config.order, config.domain.omega);
    ErrorReport report;
    report.alpha = alpha;
    {
        std::ostringstream n;
        n.precision(17);
        n << "domain=" << config.domain.name() << " patch=" << to_string(config.patch) << " order=" << config.order
          << " correction=" << to_string(config.correction) << " gamma=";
        for (Eigen::Index i = 0; i < gamma.size(); ++i) n << (i ? "," : "") << gamma(i);
        if (gamma.size() == 0) n << "0";
        report.notes.push_back(n.str());
    }
    if (config.postprocess) {
        for (int i = 1; i <= npos; ++i) report.extra_names.push_back("mu_" + std::to_string(i));
        report.extra_names.insert(report.extra_names.end(), {"err_mu", "err_pos_L2", "err_pos_H1"});
        report.notes.push_back("mu_i: extracted stress intensity factors (exact value 1); err_mu = max_i |mu_i - 1|; "
                               "err_pos_*: plain L2 / H1-seminorm errors of the post-processed solution");
    }
    for (int level = config.first_level; level <= config.last_level; ++level) {
        const auto space = FESpace::make(generate_mesh(config.domain, level, config.patch), config.order);
        const SparseMatrix A = assemble_stiffness(*space);
        const SparseMatrix C = correction_matrix(*space, config.correction, gamma);
        const DiscreteFunction uh = solve_modified(space, A, C, prob, quad, config.solver());
        ErrorRow row = measure_errors(uh, u.field(), alpha, quad);
        if (config.postprocess) {
            SIFSet sifs;
            sifs.mu.resize(npos);
            std::vector<DiscreteFunction> s;
            double err_mu = 0.0;
            for (int i = 1; i <= npos; ++i) {
                sifs.mu(i - 1) = extract_sif(uh, i, sifs.cutoff);
                err_mu = std::max(err_mu, std::abs(sifs.mu(i - 1) - 1.0));
                const ExactSolution si({{1.0, SingularFunction::primal(config.domain, i)}});
                s.push_back(solve_modified(space, A, C, ProblemSpec::dirichlet(si), quad, config.solver()));
                row.extra.push_back(sifs.mu(i - 1));
            }
            const PostProcessed pos(uh, sifs, std::move(s));
            row.extra.push_back(err_mu);
            row.extra.push_back(weighted_error(space->mesh, pos.field(), u.field(), {0.0, 0}, quad));
            row.extra.push_back(weighted_error(space->mesh, pos.field(), u.field(), {0.0, 1}, quad));
        }
        report.rows.push_back(std::move(row));
    }
    return report;
}

std::vector<OrthoRow> run_ortho(const RunConfig& config, const Eigen::VectorXd& gamma)
{
    const QuadraturePolicy quad = config.quad();
    const Mesh2D level_one = generate_mesh(config.domain, 1, config.patch);
    const double limit = config.order + 1;
    const int K = correction_order(config.order, config.domain.omega);
    const CorrectionVariant variant =
        config.correction == CorrectionVariant::None ? CorrectionVariant::Layer : config.correction;
    Eigen::VectorXd g = gamma.size() == K ? gamma : Eigen::VectorXd::Zero(K);
    std::vector<std::pair<int, int>> pairs;
    for (int i = 1; singular_exponent(config.domain.omega, i) * 2 < limit; ++i)
        for (int j = i + 1; singular_exponent(config.domain.omega, i) + singular_exponent(config.domain.omega, j) < limit;
             ++j)
            pairs.emplace_back(i, j);
    PollutionOptions opts;
    opts.quad = quad;
    opts.solver = config.solver();
    std::vector<OrthoRow> rows;
    for (int level = config.first_level; level <= config.last_level; ++level) {
        const auto space = FESpace::make(generate_mesh(config.domain, level, config.patch), config.order);
        const std::vector<int> region = corner_region(space->mesh, level_one);
        std::optional<PollutionProblem> problem;
        if (level >= 2) problem.emplace(space, variant, K, opts);
        for (const auto& [i, j] : pairs) {
            OrthoRow r;
            r.level = level;
            r.i = i;
            r.j = j;
            r.ortho = interp_ortho(*space, i, j, region, quad);
            r.mixed = problem ? problem->mixed(g, i, j) : std::nan("");
            rows.push_back(r);
        }
    }
    return rows;
}

void write_ortho_csv(std::ostream& os, const std::vector<OrthoRow>& rows)
{
    os.precision(17);
    os << "# ortho = integral over the level-1 corner patch of grad s_j . grad I_h s_i; "
          "ortho_relative = ortho / (||grad s_i|| ||grad s_j||); mixed = g~_h(s_i, s_j)\n";
    os << "level,i,j,ortho,ortho_relative,mixed\n";
    for (const auto& r : rows)
        os << r.level << ',' << r.i << ',' << r.j << ',' << r.ortho.value << ',' << r.ortho.relative() << ','
           << r.mixed << '\n';
}

std::pair<SparseMatrix, SparseMatrix> reduced_systems(const FESpace& space, CorrectionVariant variant,
                                                      const Eigen::VectorXd& gamma)
{
    const DirichletMap dm = make_dirichlet_map(space.dofs);
    const SparseMatrix A = assemble_stiffness(space);
    const SparseMatrix C = correction_matrix(space, variant, gamma);
    const SparseMatrix corrected = C.nonZeros() > 0 ? SparseMatrix(A - C) : A;
    return {reduce_matrix(dm, corrected), reduce_matrix(dm, A)};
}

std::vector<SpectrumRow> run_spectrum(const RunConfig& config, const Eigen::VectorXd& gamma,
                                      const SpectralOptions& opts)
{
    check_ellipticity(config.correction, gamma);
    std::vector<SpectrumRow> rows;
    for (int level = config.first_level; level <= config.last_level; ++level) {
        const auto space = FESpace::make(generate_mesh(config.domain, level, config.patch), config.order);
        const auto [corrected, standard] = reduced_systems(*space, config.correction, gamma);
        rows.push_back({level, spectral_ratio(corrected, standard, opts)});
    }
    return rows;
}

void write_spectrum_csv(std::ostream& os, const std::vector<SpectrumRow>& rows, CorrectionVariant variant)
{
    os.precision(17);
    os << "# correction=" << to_string(variant)
       << "; min_ratio = lambda_min(A - C) / lambda_min(A), max_ratio = lambda_max(A - C) / lambda_max(A)\n";
    os << "level,min_ratio,max_ratio,lambda_min_standard,lambda_max_standard\n";
    for (const auto& r : rows)
        os << r.level << ',' << r.ratio.min_ratio << ',' << r.ratio.max_ratio << ',' << r.ratio.lambda_min_standard
           << ',' << r.ratio.lambda_max_standard << '\n';
}

} // namespace ecfem
