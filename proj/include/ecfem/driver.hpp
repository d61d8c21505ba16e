#pragma once

#include "ecfem/analysis.hpp"
#include "ecfem/correction.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace ecfem {

struct GammaSource {
    enum class Kind { Zero, Fit, Literal, File };
    Kind kind = Kind::Zero;
    Eigen::VectorXd values; ///< Literal
    std::string path;       ///< File

    /// "0", "fit", "v1,v2,..", "@file". Throws ConfigError.
    static GammaSource parse(const std::string& text);
};

struct RunConfig {
    DomainSpec domain;
    PatchVariant patch = PatchVariant::Standard;
    int order = 2;
    int first_level = 2;
    int last_level = 5;
    CorrectionVariant correction = CorrectionVariant::Layer;
    GammaSource gamma;
    std::optional<double> alpha; ///< default k - lambda_1
    std::optional<int> quad_degree;
    double solver_tol = 1e-13;
    std::optional<int> level_cap; ///< default 7 for k <= 2, 6 otherwise
    bool postprocess = false;
    bool ortho = false;

    int K() const;
    double alpha_value() const;
    int cap() const;
    QuadraturePolicy quad() const;
    SolverOptions solver() const;
    /// Throws ConfigError on inconsistent settings (level range, literal gamma length, ...).
    void validate() const;
};

/// "A..B" or "A". Throws ConfigError.
std::pair<int, int> parse_level_range(const std::string& text);

struct GammaSequence {
    std::vector<int> levels;
    std::vector<Eigen::VectorXd> gammas;
    std::vector<double> residuals;
    std::vector<int> iterations;
    double max_mismatch = 0.0;
    std::optional<GammaFit> fit;
};

/// First level on which K corner layers exist (at least 2).
int first_gamma_level(const DomainSpec& domain, PatchVariant patch, CorrectionVariant variant, int K);

/// gamma_h on every level of [first, last] with warm starts, then the fit over
/// the levels >= 3 (all levels if fewer than three of them).
GammaSequence compute_gamma_sequence(const DomainSpec& domain, PatchVariant patch, int order,
                                     CorrectionVariant variant, int first, int last, const PollutionOptions& opts,
                                     const NewtonOptions& newton = {});
GammaSequence compute_gamma_sequence(const RunConfig& config);

/// gamma* of the configuration (zeros for None / Zero). Runs the gamma sequence for Fit.
Eigen::VectorXd resolve_gamma(const RunConfig& config, std::optional<GammaSequence>* sequence = nullptr);

/// Manufactured-solution table, with SIF and u^pos columns when config.postprocess.
ErrorReport run_convergence(const RunConfig& config, const Eigen::VectorXd& gamma);

struct OrthoRow {
    int level = 0;
    int i = 0;
    int j = 0;
    OrthoValue ortho;
    double mixed = 0.0; ///< g~_h(s_i, s_j) at the given gamma
};

/// Interpolation orthogonality over the level-1 corner patch and mixed pollution
/// for all pairs i < j with lambda_i + lambda_j < k + 1.
std::vector<OrthoRow> run_ortho(const RunConfig& config, const Eigen::VectorXd& gamma);
void write_ortho_csv(std::ostream& os, const std::vector<OrthoRow>& rows);

struct SpectrumRow {
    int level = 0;
    SpectralRatio ratio;
};

std::vector<SpectrumRow> run_spectrum(const RunConfig& config, const Eigen::VectorXd& gamma,
                                      const SpectralOptions& opts = {});
void write_spectrum_csv(std::ostream& os, const std::vector<SpectrumRow>& rows, CorrectionVariant variant);

/// Corrected reduced matrix and standard reduced matrix of one level.
std::pair<SparseMatrix, SparseMatrix> reduced_systems(const FESpace& space, CorrectionVariant variant,
                                                      const Eigen::VectorXd& gamma);

} // namespace ecfem
