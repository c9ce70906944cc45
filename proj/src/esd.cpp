#include "msq/esd.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "msq/errors.hpp"

namespace msq {

void StableParams::validate() const {
    if (!(alpha > 0.0 && alpha <= 2.0)) throw DomainError("stable alpha must lie in (0, 2]");
    if (!(std::abs(beta) <= 1.0)) throw DomainError("stable beta must lie in [-1, 1]");
    if (!(scale > 0.0)) throw DomainError("stable scale must be positive");
    if (!std::isfinite(location)) throw DomainError("stable location must be finite");
}

void EsdParams::validate() const {
    if (!(alpha > 0.0 && alpha <= 2.0)) throw DomainError("alpha must lie in (0, 2]");
    if (xi.size() == 0) throw DomainError("xi must be nonempty");
    if (omega.rows() != xi.size() || omega.cols() != xi.size())
        throw DomainError("omega must be " + std::to_string(xi.size()) + "x" + std::to_string(xi.size()));
    if (!xi.allFinite() || !omega.allFinite()) throw DomainError("parameters must be finite");
    if (!is_symmetric(omega, 1e-12)) throw DomainError("omega must be symmetric");
    if (!is_positive_definite(omega)) throw NotPositiveDefinite("omega is not positive definite");
}

double subordinator_scale(double alpha) {
    return std::pow(std::cos(std::numbers::pi * alpha / 4.0), 2.0 / alpha);
}

double positive_stable_transform(double a, double theta, double w) {
    if (a == 1.0) return 1.0;
    const double s1 = std::sin(a * theta);
    const double s0 = std::sin(theta);
    const double s2 = std::sin((1.0 - a) * theta);
    return s1 / std::pow(s0, 1.0 / a) * std::pow(s2 / w, (1.0 - a) / a);
}

double subordinator_laplace(double alpha, double A) { return std::exp(-std::pow(A, alpha / 2.0)); }

std::vector<double> sample_positive_stable(double alpha_half, std::size_t n, RngStream& rng) {
    if (!(alpha_half > 0.0 && alpha_half <= 1.0)) throw DomainError("alpha/2 must lie in (0, 1]");
    std::vector<double> out(n, 1.0);
    if (alpha_half == 1.0) return out;
    for (std::size_t i = 0; i < n; ++i) {
        const double theta = std::numbers::pi * rng.uniform();
        const double w = rng.exponential();
        out[i] = positive_stable_transform(alpha_half, theta, w);
    }
    return out;
}

Matrix sample_esd(const EsdParams& params, std::size_t n, RngStream& rng) {
    params.validate();
    const int m = params.dim();
    const Matrix l = cholesky_lower(params.omega, "omega");
    const double a = params.alpha / 2.0;
    Matrix y(static_cast<Eigen::Index>(n), m);
    Vector z(m);
    for (std::size_t i = 0; i < n; ++i) {
        double root = 1.0;
        if (a < 1.0) {
            const double theta = std::numbers::pi * rng.uniform();
            const double w = rng.exponential();
            root = std::sqrt(positive_stable_transform(a, theta, w));
        }
        for (int k = 0; k < m; ++k) z(k) = rng.normal();
        y.row(static_cast<Eigen::Index>(i)) = (params.xi + root * (l * z)).transpose();
    }
    return y;
}

std::vector<double> sample_esd1(double alpha, double xi, double omega, std::size_t n, RngStream& rng) {
    if (!(omega > 0.0)) throw NotPositiveDefinite("univariate scale must be positive");
    if (!(alpha > 0.0 && alpha <= 2.0)) throw DomainError("alpha must lie in (0, 2]");
    const double a = alpha / 2.0;
    const double s = std::sqrt(omega);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        double root = 1.0;
        if (a < 1.0) {
            const double theta = std::numbers::pi * rng.uniform();
            const double w = rng.exponential();
            root = std::sqrt(positive_stable_transform(a, theta, w));
        }
        out[i] = xi + s * root * rng.normal();
    }
    return out;
}

std::complex<double> char_fn(const EsdParams& params, const Vector& t) {
    if (t.size() != params.xi.size()) throw DomainError("t has the wrong dimension");
    const double q = t.dot(params.omega * t);
    const double modulus = std::exp(-std::pow(0.5 * std::max(q, 0.0), params.alpha / 2.0));
    return std::polar(modulus, t.dot(params.xi));
}

}  // namespace msq
