#include "ecfem/driver.hpp"
#include "ecfem/errors.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <memory>

using namespace ecfem;

namespace {

struct Options {
    std::string domain = "lshape";
    std::string patch = "standard";
    int order = 2;
    std::string levels = "2..5";
    std::string correction = "layer";
    std::string gamma = "0";
    std::string alpha = "auto";
    bool postprocess = false;
    bool ortho = false;
    std::string out;
    int quad_degree = 0;
    double solver_tol = 1e-13;
    int level_cap = 0;
};

RunConfig make_config(const Options& o)
{
    RunConfig c;
    try {
        c.domain = DomainSpec::parse(o.domain);
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    c.patch = parse_patch_variant(o.patch);
    c.order = o.order;
    std::tie(c.first_level, c.last_level) = parse_level_range(o.levels);
    c.correction = parse_variant(o.correction);
    c.gamma = GammaSource::parse(o.gamma);
    if (o.alpha != "auto") {
        try {
            c.alpha = std::stod(o.alpha);
        } catch (const std::exception&) {
            throw ConfigError("alpha must be 'auto' or a number");
        }
    }
    if (o.quad_degree > 0) c.quad_degree = o.quad_degree;
    if (o.level_cap > 0) c.level_cap = o.level_cap;
    c.solver_tol = o.solver_tol;
    c.postprocess = o.postprocess;
    c.ortho = o.ortho;
    c.validate();
    return c;
}

class Output {
public:
    explicit Output(const std::string& path)
    {
        if (path.empty() || path == "-") return;
        file_ = std::make_unique<std::ofstream>(path);
        if (!*file_) throw ConfigError("cannot write '" + path + "'");
    }
    std::ostream& stream() { return file_ ? *file_ : std::cout; }

private:
    std::unique_ptr<std::ofstream> file_;
};

int cmd_gamma(const RunConfig& c, const std::string& out)
{
    if (c.correction == CorrectionVariant::None) throw ConfigError("gamma needs --correction layer or function");
    const GammaSequence seq = compute_gamma_sequence(c);
    Output o(out);
    auto& os = o.stream();
    os << "# domain=" << c.domain.name() << " patch=" << to_string(c.patch) << " order=" << c.order
       << " correction=" << to_string(c.correction) << " K=" << c.K()
       << " fit rate=" << gamma_fit_rate(c.order, c.domain.omega) << "; h relative to level 1; residual = max_i |g_i| / a(s_i,s_i)\n";
    write_gamma_csv(os, seq.levels, seq.gammas, seq.residuals, seq.fit ? &*seq.fit : nullptr);
    if (seq.fit) {
        std::cerr.precision(12);
        std::cerr << "gamma* =";
        for (Eigen::Index i = 0; i < seq.fit->gamma_star.size(); ++i) std::cerr << ' ' << seq.fit->gamma_star(i);
        std::cerr << "  (relative fit residual " << seq.fit->relative_residual() << ")\n";
    }
    return 0;
}

int cmd_converge(const RunConfig& c, const std::string& out)
{
    const Eigen::VectorXd gamma = resolve_gamma(c);
    Output o(out);
    if (c.ortho) {
        write_ortho_csv(o.stream(), run_ortho(c, gamma));
        return 0;
    }
    run_convergence(c, gamma).write_csv(o.stream());
    return 0;
}

int cmd_spectrum(const RunConfig& c, const std::string& out)
{
    const Eigen::VectorXd gamma = resolve_gamma(c);
    const auto rows = run_spectrum(c, gamma);
    Output o(out);
    write_spectrum_csv(o.stream(), rows, c.correction);
    return 0;
}

int cmd_mesh(const RunConfig& c, const std::string& out)
{
    Output o(out);
    write_mesh(o.stream(), generate_mesh(c.domain, c.last_level, c.patch));
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Energy-corrected finite elements for corner singularities"};
    app.set_config("--config", "", "key=value file mirroring the flags (flags override it)");
    app.require_subcommand(1);
    app.fallthrough();
    Options o;
    app.add_option("--domain", o.domain, "lshape | pacman | slit");
    app.add_option("--patch", o.patch, "standard | fan | mirror | skewed");
    app.add_option("--order", o.order, "polynomial order k (1..4)");
    app.add_option("--levels", o.levels, "A..B");
    app.add_option("--correction", o.correction, "layer | function | none");
    app.add_option("--gamma", o.gamma, "0 | fit | v1,v2,.. | @file");
    app.add_option("--alpha", o.alpha, "auto (k - lambda_1) or a value");
    app.add_flag("--postprocess", o.postprocess, "add SIF and post-processed error columns");
    app.add_flag("--ortho", o.ortho, "interpolation orthogonality instead of the error table");
    app.add_option("--out", o.out, "output file (stdout if empty)");
    app.add_option("--quad-degree", o.quad_degree, "plain quadrature degree (default 2k+4)");
    app.add_option("--solver-tol", o.solver_tol, "backward error tolerance of the linear solver");
    app.add_option("--level-cap", o.level_cap, "highest admissible level (default 7 for k <= 2, 6 otherwise)");

    auto* gamma = app.add_subcommand("gamma", "gamma_h per level and the fit for gamma*");
    auto* converge = app.add_subcommand("converge", "error table of the manufactured solution");
    auto* spectrum = app.add_subcommand("spectrum", "extreme eigenvalue ratios corrected / standard");
    auto* mesh = app.add_subcommand("mesh", "write the mesh of the last level");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        const RunConfig c = make_config(o);
        if (gamma->parsed()) return cmd_gamma(c, o.out);
        if (converge->parsed()) return cmd_converge(c, o.out);
        if (spectrum->parsed()) return cmd_spectrum(c, o.out);
        if (mesh->parsed()) return cmd_mesh(c, o.out);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const Error& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 3;
    }
    return 2;
}
