#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "msq/esd.hpp"
#include "msq/linalg.hpp"
#include "msq/rng.hpp"

namespace msq {

struct DirectionSet;

struct TauGrid {
    std::vector<double> levels;

    TauGrid() = default;
    explicit TauGrid(std::vector<double> lv);

    static TauGrid standard();  // {0.05, 0.25, 0.5, 0.75, 0.95}
    std::size_t size() const { return levels.size(); }
    // Index of a level; throws DomainError when absent.
    std::size_t index_of(double tau) const;
    void validate() const;
};

enum class PhiKind { kurtosis, median, iqr };

const char* phi_kind_name(PhiKind kind);

struct PhiDescriptor {
    int direction;
    PhiKind kind;
    bool operator==(const PhiDescriptor&) const = default;
};

struct PhiVector {
    Vector values;
    std::vector<PhiDescriptor> layout;

    std::size_t size() const { return layout.size(); }
};

// Statistic layout for a direction set: canonical directions carry
// (kappa, m, iqr), pair directions carry (m, iqr).
std::vector<PhiDescriptor> phi_layout(const DirectionSet& dirs);

// Linear-interpolation quantile, h = (n - 1) tau.
double empirical_quantile(std::span<const double> sample, double tau);

// Quantiles at ascending levels, computed by successive partial selection.
// The buffer is reordered.
void quantiles_inplace(std::span<double> buffer, std::span<const double> taus, std::span<double> out);

// Check loss rho_tau(z) = z (tau - 1{z < 0}).
double check_loss(double z, double tau);

double projectional_quantile(const Matrix& data, const Vector& u, double tau);

// Scores u'y_i for every row.
std::vector<double> project(const Matrix& data, const Vector& u);

PhiVector phi_stats(const Matrix& data, const DirectionSet& dirs, const TauGrid& taus);

// Statistic vector from a (direction x tau) quantile table.
PhiVector phi_from_quantiles(const Matrix& q, const DirectionSet& dirs, const TauGrid& taus);

double sparsity_at(std::span<const double> sample, double tau);

struct EtaMatrix {
    Matrix entries;     // (K*s) x (K*s), index k*s + t
    Matrix quantiles;   // K x s model quantiles
    Matrix densities;   // K x s density at the quantiles
    std::size_t levels = 0;
};

EtaMatrix eta_matrix(const EsdParams& model, const DirectionSet& dirs, const TauGrid& taus,
                     std::size_t mc_size, RngStream& rng);

// Analytic B x (K*s) Jacobian of the statistics with respect to the
// quantile table.
Matrix dphi_dq(const Matrix& quantiles, const DirectionSet& dirs, const TauGrid& taus);

// Omega_theta = J eta J' with J = dphi_dq (B x Q).
Matrix omega_phi(const EtaMatrix& eta, const Matrix& jacobian);
Matrix omega_phi(const Matrix& eta, const Matrix& jacobian);

}  // namespace msq
