#pragma once

#include "ecfem/analytic.hpp"
#include "ecfem/mesh.hpp"
#include "ecfem/system.hpp"

#include <Eigen/Dense>

#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace ecfem {

enum class CorrectionVariant { None, Layer, Function };

const char* to_string(CorrectionVariant v);
/// "none", "layer", "function"; throws ConfigError otherwise.
CorrectionVariant parse_variant(std::string_view name);

/// Number of singular functions whose pollution has to be removed for order k:
/// floor((k+1) omega / 2pi), minus one when that quotient is an integer.
int correction_order(int k, double omega);

/// c_h(u, v) = sum_j gamma_j c_j(u, v) with
///   Layer:    c_j = integral over S^j of grad u . grad v
///   Function: c_j = integral over S^1 of rhat^(j-1) grad u . grad v,  rhat = r / R(S^1)
struct CorrectionSpec {
    CorrectionVariant variant = CorrectionVariant::None;
    Eigen::VectorXd gamma;
    int K = 0;
    CornerLayers support;
    double function_radius = 0.0; ///< outer radius of S^1

    /// Element indices carrying c_j.
    const std::vector<int>& elements(int j) const;
};

CorrectionSpec make_correction(const Mesh2D& mesh, CorrectionVariant variant, int K,
                               const Eigen::VectorXd& gamma = Eigen::VectorXd());

struct EllipticityVerdict {
    bool ok = true;
    double margin = 1.0; ///< 1 - max|gamma| (Layer) or min of 1 - sum gamma_i t^(i-1) on [0,1] (Function)
    std::string message;
};

EllipticityVerdict validate_ellipticity(CorrectionVariant variant, const Eigen::VectorXd& gamma);
inline EllipticityVerdict validate_ellipticity(const CorrectionSpec& spec)
{
    return validate_ellipticity(spec.variant, spec.gamma);
}

/// The matrices of c_1 .. c_K on all DoFs.
std::vector<SparseMatrix> correction_parts(const FESpace& space, const CorrectionSpec& spec);
SparseMatrix combine_parts(const std::vector<SparseMatrix>& parts, const Eigen::VectorXd& gamma, int size);
/// sum_j gamma_j c_j; an empty (all zero) matrix for variant None.
SparseMatrix assemble_correction(const FESpace& space, const CorrectionSpec& spec);

struct PollutionOptions {
    QuadraturePolicy quad = QuadraturePolicy::for_order(2);
    SolverOptions solver{};
    double identity_tol = 1e-10; ///< relative to a(s_i, s_i)
};

struct PollutionEval {
    Eigen::VectorXd g;            ///< definition form a(e,e) - c_h(s^m, s^m)
    Eigen::VectorXd g_identity;   ///< identity form a(e, s_i)
    Eigen::VectorXd energy;       ///< a(s_i, s_i)
    Eigen::MatrixXd J;            ///< dg_i / dgamma_j
    double max_mismatch = 0.0;    ///< max_i |g - g_identity| / a(s_i, s_i)
    std::vector<Eigen::VectorXd> solutions; ///< s_{i,h}^m on all DoFs

    /// max_i |g_i| / a(s_i, s_i)
    double scaled_residual() const;
};

/// Pollution of the singular functions s_i = r^lambda_i sin(lambda_i theta) on
/// one mesh. s_{i,h}^m solves a_h(s^m, v) = a(s_i, v) for all v vanishing on the
/// two corner edges (where s_i itself vanishes), so the modified Galerkin
/// orthogonality holds for every test function including s^m.
class PollutionProblem {
public:
    PollutionProblem(std::shared_ptr<const FESpace> space, CorrectionVariant variant, int K,
                     PollutionOptions opts = {});
    ~PollutionProblem();

    const FESpace& space() const { return *space_; }
    const CorrectionSpec& spec() const { return spec_; }
    int K() const { return spec_.K; }

    /// Values for i = 1..K and, optionally, the Jacobian. Throws IdentityMismatch.
    PollutionEval evaluate(const Eigen::VectorXd& gamma, bool jacobian = true);
    /// g~_h(s_i, s_j) in the definition form; the identity form a(s_i - s_i^m, s_j)
    /// is stored in *identity when given. Throws IdentityMismatch.
    double mixed(const Eigen::VectorXd& gamma, int i, int j, double* identity = nullptr);
    /// a(s_i, s_i) by element quadrature.
    double energy(int i);
    /// Reduced corrected matrix A - C(gamma).
    SparseMatrix corrected_matrix(const Eigen::VectorXd& gamma) const;
    const SparseMatrix& standard_matrix() const;

private:
    struct SingularData;
    SingularData& singular(int i);
    void factorize(const Eigen::VectorXd& gamma);
    Eigen::VectorXd solve(int i);
    double defect(int i, int j, const Eigen::VectorXd& xi, const Eigen::VectorXd& xj);

    template <class F>
    void for_each_point(int t, F&& f) const;

    std::shared_ptr<const FESpace> space_;
    CorrectionSpec spec_;
    PollutionOptions opts_;
    DirichletMap dmap_;
    SparseMatrix A_;                  ///< reduced standard matrix
    std::vector<SparseMatrix> parts_; ///< reduced c_j
    const QuadratureRule* plain_ = nullptr;
    std::vector<Eigen::MatrixX2d> plain_grad_; ///< reference basis gradients at the plain rule points
    std::vector<int> special_;                 ///< per element: index into quad_ or -1
    std::vector<ElementQuadrature> quad_;
    std::vector<int> offset_;                  ///< first stored point of each element
    std::map<int, std::unique_ptr<SingularData>> singular_;
    SpdSolver solver_;
    Eigen::VectorXd factored_gamma_;
    bool factored_ = false;
};

struct NewtonOptions {
    int max_iterations = 50;
    double tol = 1e-13;         ///< on max_i |g_i| / a(s_i, s_i)
    double step_tol = 1e-10;    ///< on max_i |dgamma_i| / max(1, max_i |gamma_i|)
    double floor_tol = 1e-12;   ///< accepted when round-off stops further progress
    double xi = 1.0 - 1e-6;     ///< Layer admissibility bound
    int max_halvings = 40;
};

struct GammaSolveResult {
    Eigen::VectorXd gamma;
    int iterations = 0;
    double residual = 0.0; ///< max_i |g_i| / a(s_i, s_i) at gamma
    std::vector<double> history;
    double max_mismatch = 0.0; ///< over all evaluated iterates
    PollutionEval eval;
};

/// Damped Newton on g_h(gamma) = 0 with the analytic Jacobian and step halving.
/// Throws InadmissibleStart, NewtonDiverged.
GammaSolveResult solve_gamma(PollutionProblem& problem, const Eigen::VectorXd& gamma0, const NewtonOptions& opts = {});

/// Scalar variant for toy problems: monotone g with derivative dg.
double newton_scalar(const std::function<double(double)>& g, const std::function<double(double)>& dg, double x0,
                     double tol = 1e-14, int max_iterations = 50);

struct GammaFit {
    Eigen::VectorXd gamma_star;
    Eigen::VectorXd c;
    double rate = 0.0;
    Eigen::VectorXd residual;          ///< max absolute deviation per component
    Eigen::VectorXd first_deviation;   ///< |gamma_h - gamma*| at the first level, per component
    int levels = 0;

    /// max_j residual_j / first_deviation_j
    double relative_residual() const;
};

/// Relative mesh size of a level: h = 2^(1 - level).
inline double level_h(int level) { return std::ldexp(1.0, 1 - level); }

/// Per-component least squares of gamma_h = gamma* + c h^rate. Throws InsufficientLevels.
GammaFit fit_gamma_star(const std::vector<double>& h, const std::vector<Eigen::VectorXd>& gammas, double rate);

/// 2 (k - lambda_K).
double gamma_fit_rate(int k, double omega);

/// "level,h,gamma_1..gamma_K,residual" rows, then a "fit" row with gamma* and the
/// fit residual and a "fit_c" row with the constants.
void write_gamma_csv(std::ostream& os, const std::vector<int>& levels, const std::vector<Eigen::VectorXd>& gammas,
                     const std::vector<double>& residuals, const GammaFit* fit);

/// Reads gamma* from a CSV written by write_gamma_csv (the "fit" row) or, if
/// there is none, from the last data row.
Eigen::VectorXd read_gamma_csv(std::istream& is);

} // namespace ecfem
