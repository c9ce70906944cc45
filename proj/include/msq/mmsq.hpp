#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "msq/directions.hpp"
#include "msq/esd.hpp"
#include "msq/linalg.hpp"
#include "msq/quantile.hpp"

namespace msq {

struct OptimizerOptions {
    std::size_t max_iter = 20000;  // objective evaluations per simplex run
    double x_tol = 1e-6;
    double f_tol = 1e-10;
    int restarts = 2;
};

struct MmsqConfig {
    int R = 50;
    std::size_t n_sim = 0;  // 0 means "use the data length"
    TauGrid taus = TauGrid::standard();
    OptimizerOptions optimizer;
    std::uint64_t seed = 20240901;
    double fd_step = 1e-4;
    std::size_t eta_mc = 200000;
    double ridge = 1e-8;
    // Smallest correlation eigenvalue of the scale at which the statistic
    // covariance is evaluated; see estimate().
    double eta_corr_floor = 0.05;

    void validate() const;
    std::size_t sim_size(std::size_t n) const { return n_sim > 0 ? n_sim : n; }
};

enum class WeightStage { identity, efficient };
const char* weight_stage_name(WeightStage stage);

// Lower bound of the tail index search range.
inline constexpr double kAlphaLower = 0.6;
inline constexpr double kAlphaUpper = 2.0;

// Free (unconstrained) parameterization used by the optimizer: scaled logit
// alpha, xi, then log-diagonal Cholesky factor of Omega.
std::size_t free_parameter_count(int m);
Vector pack_theta(const EsdParams& params);
EsdParams unpack_theta(const Vector& free, int m);

// Natural coordinates (alpha, xi_1..xi_m, upper triangle of Omega row by row)
// in which covariances and standard errors are reported.
std::vector<ParamTag> parameter_tags(int m);
std::vector<std::string> parameter_names(int m);
Vector to_natural(const EsdParams& params);
EsdParams from_natural(const Vector& natural, int m);
// Index of omega(i, j) (i <= j) in the natural vector.
std::size_t natural_omega_index(int m, int i, int j);

// Simulated statistic vector under common random numbers.
//
// Replicate r draws from RngStream(seed, r) a subordinator pair and a
// standard normal vector per row. Along direction u the projection of the
// simulated sample is u'xi + sqrt(u'Omega u) * sqrt(zeta) * G_u with
// G_u = (L'u)'Z / |L'u|, where L is the Cholesky factor of a fixed reference
// scale matrix. Each projection has exactly the law implied by the model, and
// the standardized sample depends only on alpha, so quantile summaries are
// cached per alpha and changes in (xi, Omega) are evaluated in closed form.
class PhiSimulator {
public:
    PhiSimulator(const DirectionSet& dirs, const Matrix& reference_omega, int R, std::size_t n_sim,
                 std::uint64_t seed);

    PhiVector simulate(const EsdParams& theta) const;
    Vector simulate_values(const EsdParams& theta) const;

    const DirectionSet& directions() const { return dirs_; }
    const std::vector<PhiDescriptor>& layout() const { return layout_; }
    int replicates() const { return R_; }
    std::size_t sim_size() const { return n_; }

    struct AlphaStats {
        std::vector<double> kappa, median, iqr;  // replicate means per direction
    };
    const AlphaStats& alpha_stats(double alpha) const;
    std::size_t alpha_evaluations() const { return alpha_evals_; }

private:
    DirectionSet dirs_;
    std::vector<PhiDescriptor> layout_;
    int R_;
    std::size_t n_;
    std::vector<double> theta_, log_sin_theta_, log_w_;  // R*n subordinator inputs
    std::vector<double> g_;                              // K*R*n standardized normal projections
    mutable std::map<double, AlphaStats> cache_;
    mutable std::size_t alpha_evals_ = 0;
};

PhiVector simulate_phi(const EsdParams& theta, const DirectionSet& dirs, const MmsqConfig& config);

// (hat - tilde)' W (hat - tilde); throws DomainError when W is not PD.
double objective(const PhiVector& hat, const PhiVector& tilde, const Matrix& W);
double objective(const EsdParams& theta, const PhiVector& hat, const Matrix& W, const DirectionSet& dirs,
                 const MmsqConfig& config);

// (Omega_theta + ridge * tr(Omega_theta) / B * I)^{-1}.
Matrix efficient_weight(const Matrix& omega_theta, double ridge);

// Central finite-difference Jacobian of the simulated statistics with
// respect to the natural coordinates listed in `indices` (all when empty).
Matrix phi_jacobian(const PhiSimulator& sim, const EsdParams& theta, double fd_step,
                    const std::vector<std::size_t>& indices = {});

struct CovarianceInput {
    Matrix weight;
    Matrix omega_theta;
    WeightStage stage = WeightStage::efficient;
    std::size_t n = 0;
};

// Theorem-3 covariance in natural coordinates, including the (1 + 1/R)
// simulation inflation and the 1/n scaling.
Matrix asymptotic_cov(const EsdParams& theta_hat, const PhiSimulator& sim, const CovarianceInput& input,
                      double fd_step, const std::vector<std::size_t>& indices = {});
Matrix asymptotic_cov(const EsdParams& theta_hat, const DirectionSet& dirs, const MmsqConfig& config,
                      const CovarianceInput& input);

struct EstimationResult {
    EsdParams theta;
    Matrix covariance;  // natural coordinates
    Vector std_errors;
    double objective = 0.0;
    WeightStage weight_stage = WeightStage::efficient;
    bool converged = false;
    std::size_t evaluations = 0;
    std::vector<std::string> parameter_names;
    std::string covariance_error;  // nonempty when the covariance could not be formed

    // Fit context reused by the sparse solver and diagnostics.
    EsdParams init;
    DirectionSet directions;
    PhiVector hat_phi;
    Matrix weight;
    Matrix omega_theta;
    std::size_t n = 0;
    int R = 0;
    double stage1_objective = 0.0;
    EsdParams stage1_theta;
};

// Minimizes the objective for a fixed weight. The tail index is profiled
// with Brent's method; the remaining coordinates use the simplex.
struct FitOutcome {
    EsdParams theta;
    double value = 0.0;
    std::size_t evaluations = 0;
    bool converged = false;
};
FitOutcome minimize_objective(const PhiSimulator& sim, const Vector& hat_phi, const Matrix& W,
                              const EsdParams& start, const OptimizerOptions& options, std::uint64_t seed,
                              bool full_alpha_scan);

EstimationResult estimate(const Matrix& data, const MmsqConfig& config);

}  // namespace msq
