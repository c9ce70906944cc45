// Quantile-based stable initialization (McCulloch 1986 lookup tables) and
// the elliptical initializer built on it.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "msq/errors.hpp"
#include "msq/esd.hpp"
#include "msq/quantile.hpp"

namespace msq {
namespace {

constexpr std::array<double, 15> kNuAlphaAxis = {2.439, 2.5, 2.6, 2.7, 2.8, 3.0, 3.2, 3.5,
                                                 4.0,   5.0, 6.0, 8.0, 10.0, 15.0, 25.0};
constexpr std::array<double, 7> kNuBetaAxis = {0.0, 0.1, 0.2, 0.3, 0.5, 0.7, 1.0};

// alpha as a function of (nu_alpha, nu_beta).
constexpr double kAlphaTable[15][7] = {
    {2.000, 2.000, 2.000, 2.000, 2.000, 2.000, 2.000}, {1.916, 1.924, 1.924, 1.924, 1.924, 1.924, 1.924},
    {1.808, 1.813, 1.829, 1.829, 1.829, 1.829, 1.829}, {1.729, 1.730, 1.737, 1.745, 1.745, 1.745, 1.745},
    {1.664, 1.663, 1.663, 1.668, 1.676, 1.676, 1.676}, {1.563, 1.560, 1.553, 1.548, 1.547, 1.547, 1.547},
    {1.484, 1.480, 1.471, 1.460, 1.448, 1.438, 1.438}, {1.391, 1.386, 1.378, 1.364, 1.337, 1.318, 1.318},
    {1.279, 1.273, 1.266, 1.250, 1.210, 1.184, 1.150}, {1.128, 1.121, 1.114, 1.101, 1.067, 1.027, 0.973},
    {1.029, 1.021, 1.014, 1.004, 0.974, 0.935, 0.874}, {0.896, 0.892, 0.887, 0.883, 0.855, 0.823, 0.769},
    {0.818, 0.812, 0.806, 0.801, 0.780, 0.756, 0.691}, {0.698, 0.695, 0.692, 0.689, 0.676, 0.656, 0.595},
    {0.593, 0.590, 0.588, 0.586, 0.579, 0.563, 0.513}};

// beta as a function of (nu_alpha, nu_beta).
constexpr double kBetaTable[15][7] = {
    {0.000, 2.160, 1.000, 1.000, 1.000, 1.000, 1.000}, {0.000, 1.592, 3.390, 1.000, 1.000, 1.000, 1.000},
    {0.000, 0.759, 1.800, 1.000, 1.000, 1.000, 1.000}, {0.000, 0.482, 1.048, 1.694, 1.000, 1.000, 1.000},
    {0.000, 0.360, 0.760, 1.232, 2.229, 1.000, 1.000}, {0.000, 0.253, 0.518, 0.823, 1.575, 1.000, 1.000},
    {0.000, 0.203, 0.410, 0.632, 1.244, 1.906, 1.000}, {0.000, 0.165, 0.332, 0.499, 0.943, 1.560, 1.000},
    {0.000, 0.136, 0.271, 0.404, 0.689, 1.230, 2.195}, {0.000, 0.109, 0.216, 0.323, 0.539, 0.827, 1.917},
    {0.000, 0.096, 0.190, 0.284, 0.472, 0.693, 1.759}, {0.000, 0.082, 0.163, 0.243, 0.412, 0.601, 1.596},
    {0.000, 0.074, 0.147, 0.220, 0.377, 0.546, 1.482}, {0.000, 0.064, 0.128, 0.191, 0.330, 0.478, 1.362},
    {0.000, 0.056, 0.112, 0.167, 0.285, 0.428, 1.274}};

// Axes of the scale and location tables: alpha descending, beta ascending.
constexpr std::array<double, 16> kAlphaAxis = {2.0, 1.9, 1.8, 1.7, 1.6, 1.5, 1.4, 1.3,
                                               1.2, 1.1, 1.0, 0.9, 0.8, 0.7, 0.6, 0.5};
constexpr std::array<double, 5> kBetaAxis = {0.0, 0.25, 0.5, 0.75, 1.0};

// nu_c = (q75 - q25) / c.
constexpr double kScaleTable[16][5] = {
    {1.908, 1.908, 1.908, 1.908, 1.908}, {1.914, 1.915, 1.916, 1.918, 1.921}, {1.921, 1.922, 1.927, 1.936, 1.947},
    {1.927, 1.930, 1.943, 1.961, 1.987}, {1.933, 1.940, 1.962, 1.997, 2.043}, {1.939, 1.952, 1.988, 2.045, 2.116},
    {1.946, 1.967, 2.022, 2.106, 2.211}, {1.955, 1.984, 2.067, 2.188, 2.333}, {1.965, 2.007, 2.125, 2.294, 2.491},
    {1.980, 2.040, 2.205, 2.435, 2.696}, {2.000, 2.085, 2.311, 2.624, 2.973}, {2.040, 2.149, 2.461, 2.886, 3.356},
    {2.098, 2.244, 2.676, 3.265, 3.912}, {2.189, 2.392, 3.004, 3.844, 4.775}, {2.337, 2.635, 3.542, 4.808, 6.247},
    {2.588, 3.073, 4.534, 6.636, 9.144}};

// nu_zeta = (center - q50) / c.
constexpr double kCenterTable[16][5] = {
    {0, 0.000, 0.000, 0.000, 0.000},       {0, -0.017, -0.032, -0.049, -0.064}, {0, -0.030, -0.061, -0.092, -0.123},
    {0, -0.043, -0.088, -0.132, -0.179},   {0, -0.056, -0.111, -0.170, -0.232}, {0, -0.066, -0.134, -0.206, -0.283},
    {0, -0.075, -0.154, -0.241, -0.335},   {0, -0.084, -0.173, -0.276, -0.390}, {0, -0.090, -0.192, -0.310, -0.447},
    {0, -0.095, -0.208, -0.346, -0.508},   {0, -0.098, -0.223, -0.383, -0.576}, {0, -0.099, -0.237, -0.424, -0.652},
    {0, -0.096, -0.250, -0.469, -0.742},   {0, -0.089, -0.262, -0.520, -0.853}, {0, -0.078, -0.272, -0.581, -0.997},
    {0, -0.061, -0.279, -0.659, -1.198}};

// Locates x on a monotone axis; returns the lower cell index and weight.
template <std::size_t N>
std::pair<std::size_t, double> locate(const std::array<double, N>& axis, double x) {
    const bool ascending = axis.front() < axis.back();
    const double lo = ascending ? axis.front() : axis.back();
    const double hi = ascending ? axis.back() : axis.front();
    x = std::clamp(x, lo, hi);
    for (std::size_t i = 0; i + 1 < N; ++i) {
        const double a = axis[i], b = axis[i + 1];
        const bool inside = ascending ? (x <= b) : (x >= b);
        if (inside) return {i, (x - a) / (b - a)};
    }
    return {N - 2, 1.0};
}

template <std::size_t R, std::size_t C>
double bilinear(const double (&table)[R][C], const std::array<double, R>& row_axis,
                const std::array<double, C>& col_axis, double r, double c) {
    const auto [i, wr] = locate(row_axis, r);
    const auto [j, wc] = locate(col_axis, c);
    const double top = (1 - wc) * table[i][j] + wc * table[i][j + 1];
    const double bottom = (1 - wc) * table[i + 1][j] + wc * table[i + 1][j + 1];
    return (1 - wr) * top + wr * bottom;
}

constexpr double kAlphaMin = 0.6;
constexpr double kAlphaMax = 2.0;
constexpr double kFloor = 1e-8;

}  // namespace

double mcculloch_scale_factor(double alpha, double beta) {
    return bilinear(kScaleTable, kAlphaAxis, kBetaAxis, alpha, std::abs(beta));
}

StableParams mcculloch_init(const std::vector<double>& sample) {
    if (sample.size() < 100) throw DomainError("McCulloch initializer needs at least 100 observations");
    std::vector<double> buf(sample);
    const std::array<double, 5> taus = {0.05, 0.25, 0.5, 0.75, 0.95};
    std::array<double, 5> q{};
    quantiles_inplace(buf, taus, q);
    const double iqr = q[3] - q[1];
    if (!(iqr > 0.0)) throw DegenerateInput("zero interquartile range");
    const double spread = q[4] - q[0];
    const double nu_alpha = spread / iqr;
    const double nu_beta = (q[4] + q[0] - 2.0 * q[2]) / spread;
    const double sign = nu_beta < 0.0 ? -1.0 : 1.0;
    const double abs_nu_beta = std::min(std::abs(nu_beta), 1.0);

    StableParams out;
    out.alpha = std::clamp(bilinear(kAlphaTable, kNuAlphaAxis, kNuBetaAxis, nu_alpha, abs_nu_beta), kAlphaMin,
                           kAlphaMax);
    const double abs_beta = std::clamp(bilinear(kBetaTable, kNuAlphaAxis, kNuBetaAxis, nu_alpha, abs_nu_beta), 0.0, 1.0);
    out.beta = sign * abs_beta;
    out.scale = iqr / mcculloch_scale_factor(out.alpha, abs_beta);
    out.location = q[2] + sign * out.scale * bilinear(kCenterTable, kAlphaAxis, kBetaAxis, out.alpha, abs_beta);
    return out;
}

EsdParams init_esd(const Matrix& data) {
    const auto n = data.rows();
    const auto m = data.cols();
    if (n < 100) throw DomainError("initialization needs at least 100 rows");
    if (m < 1) throw DomainError("initialization needs at least one column");

    EsdParams p;
    p.xi = Vector::Zero(m);
    p.omega = Matrix::Zero(m, m);
    double alpha_sum = 0.0;
    std::vector<double> col(static_cast<std::size_t>(n));
    for (Eigen::Index k = 0; k < m; ++k) {
        for (Eigen::Index i = 0; i < n; ++i) col[static_cast<std::size_t>(i)] = data(i, k);
        StableParams sp;
        try {
            sp = mcculloch_init(col);
        } catch (const DegenerateInput& e) {
            throw DegenerateInput("column " + std::to_string(k) + ": " + e.what());
        } catch (const DomainError& e) {
            throw DomainError("column " + std::to_string(k) + ": " + e.what());
        }
        alpha_sum += sp.alpha;
        p.xi(k) = sp.location;
        p.omega(k, k) = 2.0 * sp.scale * sp.scale;
    }
    p.alpha = alpha_sum / static_cast<double>(m);

    // The bisector of two standardized components has squared scale 1 + rho.
    // Standardizing and measuring the bisector with the same symmetric
    // scale factor makes identical columns give rho = 1 exactly.
    const double nu_c = mcculloch_scale_factor(p.alpha, 0.0);
    const std::array<double, 2> taus = {0.25, 0.75};
    std::array<double, 2> q{};
    std::vector<double> unit(static_cast<std::size_t>(m));
    for (Eigen::Index k = 0; k < m; ++k) {
        for (Eigen::Index i = 0; i < n; ++i) col[static_cast<std::size_t>(i)] = data(i, k);
        quantiles_inplace(col, taus, q);
        unit[static_cast<std::size_t>(k)] = std::numbers::sqrt2 * (q[1] - q[0]) / nu_c;
    }
    for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = i + 1; j < m; ++j) {
            const double si = unit[static_cast<std::size_t>(i)], sj = unit[static_cast<std::size_t>(j)];
            for (Eigen::Index r = 0; r < n; ++r)
                col[static_cast<std::size_t>(r)] =
                    ((data(r, i) - p.xi(i)) / si + (data(r, j) - p.xi(j)) / sj) / std::numbers::sqrt2;
            quantiles_inplace(col, taus, q);
            const double c = (q[1] - q[0]) / nu_c;
            const double rho = 2.0 * c * c - 1.0;
            p.omega(i, j) = p.omega(j, i) = rho * std::sqrt(p.omega(i, i) * p.omega(j, j));
        }
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(p.omega, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < kFloor) p.omega = clip_eigenvalues(p.omega, kFloor);
    return p;
}

}  // namespace msq
