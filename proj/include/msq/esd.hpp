#pragma once

#include <complex>
#include <vector>

#include "msq/linalg.hpp"
#include "msq/rng.hpp"

namespace msq {

// Univariate stable law. `location` is the distribution center in the
// S0-type parameterization (the median for symmetric laws).
struct StableParams {
    double alpha = 2.0;
    double beta = 0.0;
    double scale = 1.0;
    double location = 0.0;

    void validate() const;
};

// Elliptical stable law ESD_m(alpha, xi, Omega).
struct EsdParams {
    double alpha = 2.0;
    Vector xi;
    Matrix omega;

    int dim() const { return static_cast<int>(xi.size()); }
    // Throws DomainError on a bad alpha, shape or asymmetry and
    // NotPositiveDefinite when omega is not PD.
    void validate() const;
};

// Scale of the positive stable subordinator: cos(pi*alpha/4)^(2/alpha).
double subordinator_scale(double alpha);

// Positive stable variate with Laplace transform exp(-A^a), a = alpha_half,
// from the Kanter representation. `theta` is uniform on (0, pi) and `w` is
// standard exponential.
double positive_stable_transform(double a, double theta, double w);

// Closed-form Laplace transform E exp(-A zeta) of the subordinator.
double subordinator_laplace(double alpha, double A);

std::vector<double> sample_positive_stable(double alpha_half, std::size_t n, RngStream& rng);

// n x m matrix of i.i.d. rows.
Matrix sample_esd(const EsdParams& params, std::size_t n, RngStream& rng);

// Univariate symmetric ESD_1(alpha, xi, omega) draws.
std::vector<double> sample_esd1(double alpha, double xi, double omega, std::size_t n, RngStream& rng);

std::complex<double> char_fn(const EsdParams& params, const Vector& t);

// Tabulated ratio (q75 - q25) / c of a stable law with index alpha and skewness beta.
double mcculloch_scale_factor(double alpha, double beta);

StableParams mcculloch_init(const std::vector<double>& sample);

EsdParams init_esd(const Matrix& data);

}  // namespace msq
