#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "msq/mmsq.hpp"

namespace msq {

struct ScadParams {
    double a = 3.7;
    double lambda = 0.0;
    void validate() const;
};

double scad_penalty(double gamma, const ScadParams& p);
double scad_derivative(double gamma, const ScadParams& p);

// Hunter-Li perturbed penalty p(g) - eps * int_0^g p'(t) / (eps + t) dt.
double scad_perturbed(double gamma, const ScadParams& p, double eps);
// Quadratic majorizer of the perturbed penalty, tangent at gamma0.
double lqa_majorizer(double gamma, double gamma0, const ScadParams& p, double eps);
// eps = 1e-8 / (2 n lambda) * min nonzero |omega_ij|; 1e-300 when all are zero.
double lqa_epsilon(const EsdParams& theta0, const ScadParams& p, std::size_t n);

struct PathPoint {
    double lambda = 0.0;
    double objective = 0.0;
    std::size_t active = 0;
    double validation = 0.0;
};

struct SparseOptions {
    int max_sweeps = 50;
    double change_tol = 1e-5;
    double zero_threshold = 1e-4;  // relative to geomean(omega_ii, omega_jj)
    int max_halvings = 8;
    double epsilon_scale = 1.0;  // multiplies the default perturbation
};

struct SparseResult {
    EsdParams theta;
    std::vector<std::pair<int, int>> active_set;
    double lambda = 0.0;
    double a = 3.7;
    std::vector<PathPoint> path;
    std::vector<double> validation;
    double objective = 0.0;  // perturbed penalized objective at theta
    std::vector<double> sweep_objectives;  // value after each sweep
    double epsilon = 0.0;
    int sweeps = 0;
    bool converged = false;
    std::size_t pd_repairs = 0;
    Matrix covariance;  // oracle form on the active set, natural coordinates
    Vector std_errors;
    std::string covariance_error;
};

// Penalized fit from a plain estimate; W, directions and the simulator
// setup are taken from `warm`.
SparseResult sparse_estimate(const Matrix& data, const MmsqConfig& config, const ScadParams& p,
                             const EstimationResult* warm = nullptr, const SparseOptions& options = {});

// Penalized fit from explicit components (used along lambda paths).
SparseResult sparse_fit(const PhiSimulator& sim, const Vector& hat_phi, const Matrix& W, std::size_t n,
                        const EsdParams& start, const ScadParams& p, double fd_step, const SparseOptions& options,
                        bool with_covariance, const Matrix& omega_theta);

struct TuneMethod {
    enum class Kind { validation, kfold } kind = Kind::kfold;
    int folds = 5;
};

// Default grid: 20 log-spaced points spanning [0.001, 1] * max |omega_init,ij|.
std::vector<ScadParams> default_lambda_grid(const EsdParams& init, std::size_t points = 20, double a = 3.7);

// Fold assignment: fold k gets rows[k] (sizes differ by at most one).
std::vector<std::vector<std::size_t>> kfold_partition(std::size_t n, int K, std::uint64_t seed);

std::pair<double, SparseResult> tune_lambda(const Matrix& data, const MmsqConfig& config,
                                            const std::vector<ScadParams>& grid, const TuneMethod& method,
                                            int workers = 1, const SparseOptions& options = {});

}  // namespace msq
