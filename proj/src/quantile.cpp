#include "msq/quantile.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>

#include "msq/directions.hpp"
#include "msq/errors.hpp"

namespace msq {

TauGrid::TauGrid(std::vector<double> lv) : levels(std::move(lv)) { validate(); }

TauGrid TauGrid::standard() { return TauGrid({0.05, 0.25, 0.5, 0.75, 0.95}); }

void TauGrid::validate() const {
    if (levels.empty()) throw DomainError("tau grid is empty");
    for (std::size_t i = 0; i < levels.size(); ++i) {
        if (!(levels[i] > 0.0 && levels[i] < 1.0)) throw DomainError("tau levels must lie in (0, 1)");
        if (i > 0 && !(levels[i] > levels[i - 1])) throw DomainError("tau levels must be strictly increasing");
    }
}

std::size_t TauGrid::index_of(double tau) const {
    for (std::size_t i = 0; i < levels.size(); ++i)
        if (std::abs(levels[i] - tau) < 1e-12) return i;
    throw DomainError("tau grid lacks level " + std::to_string(tau));
}

const char* phi_kind_name(PhiKind kind) {
    switch (kind) {
        case PhiKind::kurtosis: return "kurtosis";
        case PhiKind::median: return "median";
        case PhiKind::iqr: return "iqr";
    }
    return "?";
}

std::vector<PhiDescriptor> phi_layout(const DirectionSet& dirs) {
    std::vector<PhiDescriptor> out;
    for (std::size_t k = 0; k < dirs.size(); ++k) {
        const int d = static_cast<int>(k);
        if (dirs.is_canonical(k)) out.push_back({d, PhiKind::kurtosis});
        out.push_back({d, PhiKind::median});
        out.push_back({d, PhiKind::iqr});
    }
    return out;
}

void quantiles_inplace(std::span<double> buffer, std::span<const double> taus, std::span<double> out) {
    const std::size_t n = buffer.size();
    if (n == 0) throw DomainError("quantile of an empty sample");
    if (out.size() != taus.size()) throw DomainError("quantile output size mismatch");
    std::vector<std::size_t> order(taus.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return taus[a] < taus[b]; });

    // Positions below `lo` that were requested earlier hold their exact
    // order statistic; requested indices are nondecreasing.
    std::size_t lo = 0;
    auto order_stat = [&](std::size_t idx) {
        if (idx >= lo) {
            std::nth_element(buffer.begin() + static_cast<std::ptrdiff_t>(lo),
                             buffer.begin() + static_cast<std::ptrdiff_t>(idx), buffer.end());
            lo = idx + 1;
        }
        return buffer[idx];
    };
    for (std::size_t o : order) {
        const double tau = taus[o];
        if (!(tau >= 0.0 && tau <= 1.0)) throw DomainError("tau must lie in [0, 1]");
        const double h = static_cast<double>(n - 1) * tau;
        const auto k = std::min(static_cast<std::size_t>(std::floor(h)), n - 1);
        const double frac = h - static_cast<double>(k);
        const double xk = order_stat(k);
        if (frac > 0.0 && k + 1 < n) {
            const double xk1 = order_stat(k + 1);
            out[o] = xk + frac * (xk1 - xk);
        } else {
            out[o] = xk;
        }
    }
}

double empirical_quantile(std::span<const double> sample, double tau) {
    if (sample.empty()) throw DomainError("quantile of an empty sample");
    std::vector<double> buf(sample.begin(), sample.end());
    double q = 0.0;
    quantiles_inplace(buf, std::span<const double>(&tau, 1), std::span<double>(&q, 1));
    return q;
}

double check_loss(double z, double tau) { return z * (tau - (z < 0.0 ? 1.0 : 0.0)); }

std::vector<double> project(const Matrix& data, const Vector& u) {
    if (u.size() != data.cols()) throw DomainError("direction has the wrong dimension");
    std::vector<double> z(static_cast<std::size_t>(data.rows()));
    Eigen::Map<Vector>(z.data(), data.rows()) = data * u;
    return z;
}

double projectional_quantile(const Matrix& data, const Vector& u, double tau) {
    if (std::abs(u.norm() - 1.0) > 1e-10) throw DomainError("direction must have unit norm");
    std::vector<double> z = project(data, u);
    return empirical_quantile(z, tau);
}

namespace {

struct KeyIndex {
    std::size_t q05, q25, q50, q75, q95;
    explicit KeyIndex(const TauGrid& taus)
        : q05(taus.index_of(0.05)),
          q25(taus.index_of(0.25)),
          q50(taus.index_of(0.5)),
          q75(taus.index_of(0.75)),
          q95(taus.index_of(0.95)) {}
};

}  // namespace

PhiVector phi_from_quantiles(const Matrix& q, const DirectionSet& dirs, const TauGrid& taus) {
    const KeyIndex ix(taus);
    PhiVector phi;
    phi.layout = phi_layout(dirs);
    phi.values.resize(static_cast<Eigen::Index>(phi.layout.size()));
    for (std::size_t b = 0; b < phi.layout.size(); ++b) {
        const auto k = static_cast<Eigen::Index>(phi.layout[b].direction);
        const double iqr = q(k, ix.q75) - q(k, ix.q25);
        if (!(iqr > 0.0)) throw DegenerateInput("zero interquartile range along direction " + std::to_string(k));
        double v = 0.0;
        switch (phi.layout[b].kind) {
            case PhiKind::kurtosis: v = (q(k, ix.q95) - q(k, ix.q05)) / iqr; break;
            case PhiKind::median: v = q(k, ix.q50); break;
            case PhiKind::iqr: v = iqr; break;
        }
        phi.values(static_cast<Eigen::Index>(b)) = v;
    }
    return phi;
}

PhiVector phi_stats(const Matrix& data, const DirectionSet& dirs, const TauGrid& taus) {
    if (dirs.size() == 0) throw DomainError("direction set is empty");
    taus.validate();
    const auto s = static_cast<Eigen::Index>(taus.size());
    Matrix q(static_cast<Eigen::Index>(dirs.size()), s);
    std::vector<double> row(taus.size());
    for (std::size_t k = 0; k < dirs.size(); ++k) {
        std::vector<double> z = project(data, dirs.vectors[k]);
        quantiles_inplace(z, taus.levels, row);
        for (Eigen::Index t = 0; t < s; ++t) q(static_cast<Eigen::Index>(k), t) = row[static_cast<std::size_t>(t)];
    }
    return phi_from_quantiles(q, dirs, taus);
}

namespace {

double bandwidth(std::size_t n, double tau) {
    double h = std::min(0.2, std::pow(static_cast<double>(n), -0.2) / 2.0);
    return std::min({h, 0.999 * tau, 0.999 * (1.0 - tau)});
}

}  // namespace

double sparsity_at(std::span<const double> sample, double tau) {
    if (sample.size() < 50) throw DomainError("sparsity estimate needs at least 50 observations");
    if (!(tau > 0.0 && tau < 1.0)) throw DomainError("tau must lie in (0, 1)");
    const double h = bandwidth(sample.size(), tau);
    std::vector<double> buf(sample.begin(), sample.end());
    const std::array<double, 2> lv = {tau - h, tau + h};
    std::array<double, 2> q{};
    quantiles_inplace(buf, lv, q);
    const double spread = q[1] - q[0];
    if (!(spread > 0.0)) throw DegenerateInput("zero quantile spread in sparsity estimate");
    return 2.0 * h / spread;
}

EtaMatrix eta_matrix(const EsdParams& model, const DirectionSet& dirs, const TauGrid& taus, std::size_t mc_size,
                     RngStream& rng) {
    if (mc_size < 100000) throw DomainError("eta matrix needs mc_size >= 1e5");
    taus.validate();
    const std::size_t K = dirs.size();
    const std::size_t s = taus.size();
    const Matrix y = sample_esd(model, mc_size, rng);

    EtaMatrix eta;
    eta.levels = s;
    eta.quantiles.resize(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(s));
    eta.densities.resize(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(s));

    // Bin of each projected draw: the number of quantile levels it exceeds.
    std::vector<std::uint8_t> bins(K * mc_size);
    const double h0 = std::min(0.2, std::pow(static_cast<double>(mc_size), -0.2) / 2.0);
    for (std::size_t k = 0; k < K; ++k) {
        std::vector<double> z = project(y, dirs.vectors[k]);
        std::vector<double> lv;
        for (double tau : taus.levels) {
            // A quarter of the tail mass keeps the difference quotient local
            // at extreme levels, where the plain rule reaches far into the tail.
            const double h = std::min({h0, 0.25 * tau, 0.25 * (1.0 - tau)});
            lv.insert(lv.end(), {tau, tau - h, tau + h});
        }
        std::vector<double> q(lv.size());
        std::vector<double> buf(z);
        quantiles_inplace(buf, lv, q);
        for (std::size_t t = 0; t < s; ++t) {
            const double spread = q[3 * t + 2] - q[3 * t + 1];
            if (!(spread > 0.0)) throw DegenerateInput("zero quantile spread in density estimate");
            const double h = (lv[3 * t + 2] - lv[3 * t + 1]) / 2.0;
            eta.quantiles(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(t)) = q[3 * t];
            eta.densities(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(t)) = 2.0 * h / spread;
        }
        std::uint8_t* bk = bins.data() + k * mc_size;
        for (std::size_t i = 0; i < mc_size; ++i) {
            std::uint8_t b = 0;
            while (b < s && z[i] > q[3 * b]) ++b;
            bk[i] = b;
        }
    }

    const std::size_t Q = K * s;
    eta.entries = Matrix::Zero(static_cast<Eigen::Index>(Q), static_cast<Eigen::Index>(Q));
    const auto& tl = taus.levels;
    auto f = [&](std::size_t k, std::size_t t) {
        return eta.densities(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(t));
    };
    for (std::size_t k = 0; k < K; ++k)
        for (std::size_t a = 0; a < s; ++a)
            for (std::size_t b = 0; b < s; ++b)
                eta.entries(static_cast<Eigen::Index>(k * s + a), static_cast<Eigen::Index>(k * s + b)) =
                    (std::min(tl[a], tl[b]) - tl[a] * tl[b]) / (f(k, a) * f(k, b));

    const std::size_t nb = s + 1;
    std::vector<double> table(nb * nb);
    const double inv_n = 1.0 / static_cast<double>(mc_size);
    for (std::size_t k = 0; k < K; ++k) {
        const std::uint8_t* bk = bins.data() + k * mc_size;
        for (std::size_t l = k + 1; l < K; ++l) {
            const std::uint8_t* bl = bins.data() + l * mc_size;
            std::vector<std::uint64_t> counts(nb * nb, 0);
            for (std::size_t i = 0; i < mc_size; ++i) ++counts[bk[i] * nb + bl[i]];
            // Joint CDF at (q_k,a, q_l,b) = mass of bins (<= a, <= b).
            for (std::size_t a = 0; a < nb; ++a)
                for (std::size_t b = 0; b < nb; ++b) {
                    double v = static_cast<double>(counts[a * nb + b]) * inv_n;
                    if (a > 0) v += table[(a - 1) * nb + b];
                    if (b > 0) v += table[a * nb + b - 1];
                    if (a > 0 && b > 0) v -= table[(a - 1) * nb + b - 1];
                    table[a * nb + b] = v;
                }
            for (std::size_t a = 0; a < s; ++a)
                for (std::size_t b = 0; b < s; ++b) {
                    const double v = (table[a * nb + b] - tl[a] * tl[b]) / (f(k, a) * f(l, b));
                    eta.entries(static_cast<Eigen::Index>(k * s + a), static_cast<Eigen::Index>(l * s + b)) = v;
                    eta.entries(static_cast<Eigen::Index>(l * s + b), static_cast<Eigen::Index>(k * s + a)) = v;
                }
        }
    }
    eta.entries = symmetrize(eta.entries);
    return eta;
}

Matrix dphi_dq(const Matrix& quantiles, const DirectionSet& dirs, const TauGrid& taus) {
    const KeyIndex ix(taus);
    const auto layout = phi_layout(dirs);
    const auto s = static_cast<Eigen::Index>(taus.size());
    Matrix j = Matrix::Zero(static_cast<Eigen::Index>(layout.size()), quantiles.rows() * s);
    for (std::size_t b = 0; b < layout.size(); ++b) {
        const auto k = static_cast<Eigen::Index>(layout[b].direction);
        const auto row = static_cast<Eigen::Index>(b);
        auto col = [&](std::size_t t) { return k * s + static_cast<Eigen::Index>(t); };
        switch (layout[b].kind) {
            case PhiKind::kurtosis: {
                const double num = quantiles(k, ix.q95) - quantiles(k, ix.q05);
                const double den = quantiles(k, ix.q75) - quantiles(k, ix.q25);
                j(row, col(ix.q95)) = 1.0 / den;
                j(row, col(ix.q05)) = -1.0 / den;
                j(row, col(ix.q75)) = -num / (den * den);
                j(row, col(ix.q25)) = num / (den * den);
                break;
            }
            case PhiKind::median: j(row, col(ix.q50)) = 1.0; break;
            case PhiKind::iqr:
                j(row, col(ix.q75)) = 1.0;
                j(row, col(ix.q25)) = -1.0;
                break;
        }
    }
    return j;
}

Matrix omega_phi(const Matrix& eta, const Matrix& jacobian) {
    if (eta.rows() != eta.cols() || jacobian.cols() != eta.rows())
        throw DomainError("omega_phi: jacobian and eta are not conformable");
    Matrix om = symmetrize(jacobian * eta * jacobian.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> es(om);
    if (es.eigenvalues().minCoeff() < 0.0) {
        Vector ev = es.eigenvalues().cwiseMax(0.0);
        om = symmetrize(es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose());
    }
    return om;
}

Matrix omega_phi(const EtaMatrix& eta, const Matrix& jacobian) { return omega_phi(eta.entries, jacobian); }

}  // namespace msq
