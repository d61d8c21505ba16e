#pragma once

#include "ecfem/analytic.hpp"
#include "ecfem/correction.hpp"
#include "ecfem/system.hpp"

#include <Eigen/Dense>

#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace ecfem {

/// ||r^alpha e||_0 (deriv = 0) or ||r^alpha grad e||_0 (deriv = 1).
struct WeightedNorm {
    double alpha = 0.0;
    int deriv = 0;
};

/// Approximation evaluated on triangle t at reference point xi / physical point x.
using ElementField = std::function<FieldValue(int t, const Vec2& xi, const Vec2& x)>;

ElementField element_field(const DiscreteFunction& uh);

/// Weighted error of an element field against a pointwise exact field, graded
/// quadrature on the corner elements.
double weighted_error(const Mesh2D& mesh, const ElementField& approx, const ScalarField& exact,
                      const WeightedNorm& norm, const QuadraturePolicy& policy);
double weighted_error(const DiscreteFunction& uh, const ScalarField& exact, const WeightedNorm& norm,
                      const QuadraturePolicy& policy);

struct ErrorRow {
    int level = 0;
    double h = 0.0;
    int dofs = 0;
    double err_L2 = 0.0;
    double err_L2a = 0.0;
    double err_H1a = 0.0;
    std::vector<double> extra; ///< values of ErrorReport::extra_names
};

struct ErrorReport {
    double alpha = 0.0;
    std::vector<ErrorRow> rows;
    std::vector<std::string> notes; ///< written as leading "# " lines
    std::vector<std::string> extra_names; ///< additional columns after the standard ones

    /// log2(e_{l-1}/e_l) for row l >= 1 (NaN for row 0). column: 0 L2, 1 L2a, 2 H1a.
    double rate(std::size_t row, int column) const;
    void write_csv(std::ostream& os) const;
};

/// Errors of one solution in the three table norms.
ErrorRow measure_errors(const DiscreteFunction& uh, const ScalarField& exact, double alpha,
                        const QuadraturePolicy& policy);

struct ConvergenceConfig {
    DomainSpec domain;
    PatchVariant patch = PatchVariant::Standard;
    int order = 2;
    CorrectionVariant variant = CorrectionVariant::None;
    Eigen::VectorXd gamma; ///< same gamma on every level
    double alpha = 0.0;
    QuadraturePolicy quad = QuadraturePolicy::for_order(2);
    SolverOptions solver{};
};

/// Corrected solves of the manufactured problem, one row per level.
ErrorReport convergence_table(const ConvergenceConfig& config, int first_level, int last_level);

/// mu_i^h and the cutoff used.
struct SIFSet {
    Eigen::VectorXd mu;
    Cutoff cutoff;
};

/// mu_i^h = (1/(i pi)) integral of (f s_{-i} + u_h Delta s_{-i}) over the elements
/// meeting the annulus b <= r <= a, rule of degree 2k+6. Throws CutoffOutsideDomain.
double extract_sif(const ElementField& uh, const Mesh2D& mesh, int order, int i, const Cutoff& cutoff,
                   const PointFunction& f = {});
double extract_sif(const DiscreteFunction& uh, int i, const Cutoff& cutoff, const PointFunction& f = {});

/// u^pos = u_h + sum_i mu_i (s_i - s_{i,h}).
class PostProcessed {
public:
    /// Throws IndexMismatch when the counts differ or the spaces are not the same.
    PostProcessed(DiscreteFunction uh, SIFSet sifs, std::vector<DiscreteFunction> s_solutions);

    FieldValue eval(int t, const Vec2& xi, const Vec2& x) const;
    ElementField field() const;
    const SIFSet& sifs() const { return sifs_; }

private:
    DiscreteFunction uh_;
    SIFSet sifs_;
    std::vector<DiscreteFunction> s_;
    std::vector<SingularFunction> exact_;
};

PostProcessed postprocess(DiscreteFunction uh, SIFSet sifs, std::vector<DiscreteFunction> s_solutions);

struct OrthoValue {
    double value = 0.0;  ///< integral over the region of grad s_j . grad I_h s_i
    double norm_i = 0.0; ///< ||grad s_i|| on the region
    double norm_j = 0.0;

    double relative() const { return value / (norm_i * norm_j); }
};

/// Interpolation orthogonality on a set of elements.
OrthoValue interp_ortho(const FESpace& space, int i, int j, std::span<const int> region,
                        const QuadraturePolicy& policy);

/// Descendants in `fine` of the first `layers` corner layers of the level-1 mesh.
std::vector<int> corner_region(const Mesh2D& fine, const Mesh2D& level_one, int layers = 1);

struct SpectralOptions {
    double tol = 1e-8;
    int max_iterations = 20000;
    int block = 8; ///< vectors iterated together
    unsigned seed = 12345;
};

struct SpectralRatio {
    double min_ratio = 1.0; ///< lambda_min(corrected) / lambda_min(standard)
    double max_ratio = 1.0; ///< lambda_max(corrected) / lambda_max(standard)
    double lambda_min_standard = 0.0;
    double lambda_max_standard = 0.0;
};

/// Block power iteration for lambda_max, block inverse iteration for lambda_min,
/// each with a Rayleigh-Ritz step. Throws MaxIterations.
double largest_eigenvalue(const SparseMatrix& A, const SpectralOptions& opts = {});
double smallest_eigenvalue(const SparseMatrix& A, const SpectralOptions& opts = {});
SpectralRatio spectral_ratio(const SparseMatrix& corrected, const SparseMatrix& standard,
                             const SpectralOptions& opts = {});

/// log2(e_prev / e) for consecutive entries (size n-1).
std::vector<double> observed_rates(const std::vector<double>& errors);

} // namespace ecfem
