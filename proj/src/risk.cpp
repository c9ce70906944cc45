#include "msq/risk.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>

#include "msq/errors.hpp"
#include "msq/mmsq.hpp"
#include "msq/parallel.hpp"
#include "msq/quantile.hpp"
#include "msq/rng.hpp"

namespace msq {

void PortfolioModel::validate() const {
    params.validate();
    if (static_cast<int>(labels.size()) != params.dim())
        throw DomainError("portfolio has " + std::to_string(labels.size()) + " labels for " +
                          std::to_string(params.dim()) + " series");
    const auto P = static_cast<Eigen::Index>(free_parameter_count(params.dim()));
    if (param_cov.rows() != P || param_cov.cols() != P)
        throw DomainError("parameter covariance must be " + std::to_string(P) + "x" + std::to_string(P));
}

void RiskConfig::validate() const {
    if (!(tau > 0.0 && tau < 1.0)) throw DomainError("tau must lie in (0, 1)");
    if (static_cast<double>(mc_size) * tau < 1e4)
        throw DomainError("mc_size * tau must be at least 1e4 for enough conditioning draws");
    if (!(fd_step > 0.0)) throw DomainError("fd_step must be positive");
}

namespace {

void check_index(const PortfolioModel& m, int j) {
    if (j < 0 || j >= m.dim()) throw DomainError("institution index " + std::to_string(j) + " is out of range");
}

// Type-7 quantile without copying when the caller owns the buffer.
double quantile_of(std::vector<double>& v, double tau) {
    std::array<double, 1> out{};
    const std::array<double, 1> t{tau};
    quantiles_inplace(v, t, out);
    return out[0];
}

}  // namespace

double var_individual(const PortfolioModel& model, int j, const RiskConfig& cfg) {
    model.params.validate();
    check_index(model, j);
    cfg.validate();
    RngStream rng(cfg.seed, streams::risk_marginal);
    std::vector<double> y = sample_esd1(model.params.alpha, model.params.xi(j), model.params.omega(j, j), cfg.mc_size, rng);
    return quantile_of(y, cfg.tau);
}

// ---------------------------------------------------------------- engine

NetCovarEngine::NetCovarEngine(std::size_t mc_size, std::uint64_t seed, double tau) : n_(mc_size), tau_(tau) {
    theta_.resize(n_);
    log_sin_theta_.resize(n_);
    log_w_.resize(n_);
    z1_.resize(n_);
    z2_.resize(n_);
    RngStream rng(seed, streams::risk_joint);
    for (std::size_t i = 0; i < n_; ++i) {
        theta_[i] = std::numbers::pi * rng.uniform();
        log_sin_theta_[i] = std::log(std::sin(theta_[i]));
        log_w_[i] = std::log(rng.exponential());
        z1_[i] = rng.normal();
        z2_[i] = rng.normal();
    }
}

std::shared_ptr<const std::vector<double>> NetCovarEngine::root(double alpha) const {
    {
        std::lock_guard lock(mutex_);
        if (auto it = roots_.find(alpha); it != roots_.end()) return it->second;
    }
    auto r = std::make_shared<std::vector<double>>(n_, 1.0);
    const double a = alpha / 2.0;
    if (a < 1.0) {
        const double c1 = 1.0 / a, c2 = (1.0 - a) / a;
        for (std::size_t i = 0; i < n_; ++i) {
            const double th = theta_[i];
            const double lz = std::log(std::sin(a * th)) - c1 * log_sin_theta_[i] +
                              c2 * (std::log(std::sin((1.0 - a) * th)) - log_w_[i]);
            (*r)[i] = std::exp(0.5 * lz);
        }
    }
    std::lock_guard lock(mutex_);
    if (roots_.size() >= 16) roots_.clear();
    return roots_.emplace(alpha, std::move(r)).first->second;
}

NetCovarEngine::Reduced NetCovarEngine::reduce(const EsdParams& p, int j) {
    Reduced r;
    r.alpha = p.alpha;
    r.loc_j = p.xi(j);
    r.loc_s = p.xi.sum();
    r.var_j = p.omega(j, j);
    r.cov_js = p.omega.row(j).sum();
    r.var_s = p.omega.sum();
    return r;
}

double NetCovarEngine::evaluate(const Reduced& r) const {
    if (!(r.var_j > 0.0)) throw DomainError("marginal scale must be positive");
    const auto rt = root(r.alpha);
    const double sj = std::sqrt(r.var_j);
    const double b1 = r.cov_js / sj;
    const double b2 = std::sqrt(std::max(0.0, r.var_s - b1 * b1));
    std::vector<double> y(n_);
    for (std::size_t i = 0; i < n_; ++i) y[i] = r.loc_j + (*rt)[i] * sj * z1_[i];
    std::vector<double> tmp = y;
    const double var_j = quantile_of(tmp, tau_);
    std::vector<double> kept;
    kept.reserve(static_cast<std::size_t>(static_cast<double>(n_) * tau_ * 1.1) + 16);
    for (std::size_t i = 0; i < n_; ++i)
        if (y[i] <= var_j) kept.push_back(r.loc_s + (*rt)[i] * (b1 * z1_[i] + b2 * z2_[i]));
    if (kept.size() < 1000)
        throw InsufficientConditioning("only " + std::to_string(kept.size()) +
                                       " draws fall below the VaR; increase mc_size");
    return quantile_of(kept, tau_);
}

double NetCovarEngine::value(const EsdParams& params, int j) const { return evaluate(reduce(params, j)); }

Vector NetCovarEngine::gradient(const EsdParams& params, int j, double fd_step) const {
    const Reduced r0 = reduce(params, j);
    const int m = params.dim();
    // Partial derivatives with respect to the six reduced quantities.
    std::array<double, 6> x{r0.alpha, r0.loc_j, r0.loc_s, r0.var_j, r0.cov_js, r0.var_s};
    const std::array<double, 6> typical{1.0, std::sqrt(r0.var_j), std::sqrt(r0.var_s), r0.var_j,
                                        std::sqrt(r0.var_j * r0.var_s), r0.var_s};
    std::array<double, 6> d{};
    const double base = evaluate(r0);
    for (std::size_t q = 0; q < 6; ++q) {
        const double h = fd_step * std::max(std::abs(x[q]), typical[q]);
        auto at = [&](double v) {
            std::array<double, 6> y = x;
            y[q] = v;
            return evaluate({y[0], y[1], y[2], y[3], y[4], y[5]});
        };
        if (q == 0 && x[0] + h > 2.0)
            d[q] = (base - at(x[0] - h)) / h;
        else
            d[q] = (at(x[q] + h) - at(x[q] - h)) / (2.0 * h);
    }
    // Chain rule to (alpha, xi, omega upper triangle).
    Vector g = Vector::Zero(static_cast<Eigen::Index>(free_parameter_count(m)));
    g(0) = d[0];
    for (int i = 0; i < m; ++i) g(1 + i) = d[2] + (i == j ? d[1] : 0.0);
    for (int i = 0; i < m; ++i) {
        for (int k = i; k < m; ++k) {
            const auto q = static_cast<Eigen::Index>(natural_omega_index(m, i, k));
            if (i == k) {
                g(q) = d[5] + (i == j ? d[3] + d[4] : 0.0);
            } else {
                g(q) = 2.0 * d[5] + ((i == j || k == j) ? d[4] : 0.0);
            }
        }
    }
    return g;
}

double netcovar(const PortfolioModel& model, int j, const RiskConfig& cfg) {
    model.params.validate();
    check_index(model, j);
    cfg.validate();
    const NetCovarEngine engine(cfg.mc_size, cfg.seed, cfg.tau);
    return engine.value(model.params, j);
}

namespace {

DominanceResult compare(const PortfolioModel& model, int j, int k, double nj, double nk, const Vector& gj,
                        const Vector& gk) {
    DominanceResult r;
    r.netcovar_j = nj;
    r.netcovar_k = nk;
    if (j == k) return r;  // identical quantity: z = 0, p = 1
    r.difference = nj - nk;
    // Ordered so that (j, k) and (k, j) give bit-identical variances.
    const Vector& ga = j < k ? gj : gk;
    const Vector& gb = j < k ? gk : gj;
    const Matrix& c = model.param_cov;
    double v = ga.dot(c * ga) + gb.dot(c * gb) - 2.0 * ga.dot(c * gb);
    if (!(v > 1e-12)) {
        v = 1e-12;
        r.variance_floored = true;
    }
    r.variance = v;
    r.z = r.difference / std::sqrt(v);
    r.p_value = std::erfc(std::abs(r.z) / std::numbers::sqrt2);
    return r;
}

}  // namespace

DominanceResult dominance_test(const PortfolioModel& model, int j, int k, const RiskConfig& cfg) {
    model.validate();
    check_index(model, j);
    check_index(model, k);
    cfg.validate();
    const NetCovarEngine engine(cfg.mc_size, cfg.seed, cfg.tau);
    const double nj = engine.value(model.params, j);
    if (j == k) return compare(model, j, k, nj, nj, {}, {});
    const double nk = engine.value(model.params, k);
    const Vector gj = engine.gradient(model.params, j, cfg.fd_step);
    const Vector gk = engine.gradient(model.params, k, cfg.fd_step);
    return compare(model, j, k, nj, nk, gj, gk);
}

double RiskNetwork::edge_share() const {
    return tested == 0 ? 0.0 : static_cast<double>(edges) / static_cast<double>(tested);
}

RiskNetwork build_network(const PortfolioModel& model, const RiskConfig& cfg) {
    model.validate();
    cfg.validate();
    const int d = model.dim();
    if (d < 2) throw DomainError("a network needs at least two institutions");
    const NetCovarEngine engine(cfg.mc_size, cfg.seed, cfg.tau);

    std::vector<double> value(static_cast<std::size_t>(d));
    std::vector<Vector> grad(static_cast<std::size_t>(d));
    std::vector<std::string> failure(static_cast<std::size_t>(d));
    parallel_for(static_cast<std::size_t>(d), cfg.workers, [&](std::size_t j) {
        try {
            value[j] = engine.value(model.params, static_cast<int>(j));
            grad[j] = engine.gradient(model.params, static_cast<int>(j), cfg.fd_step);
        } catch (const Error& e) {
            failure[j] = e.what();
        }
    });

    RiskNetwork net;
    net.nodes = model.labels;
    net.adjacency.assign(static_cast<std::size_t>(d), std::vector<bool>(static_cast<std::size_t>(d), false));
    net.degree.assign(static_cast<std::size_t>(d), 0);
    for (int j = 0; j < d; ++j) {
        for (int k = j + 1; k < d; ++k) {
            PairStat ps;
            ps.j = j;
            ps.k = k;
            const auto uj = static_cast<std::size_t>(j), uk = static_cast<std::size_t>(k);
            if (!failure[uj].empty() || !failure[uk].empty()) {
                ps.ok = false;
                ps.error = !failure[uj].empty() ? failure[uj] : failure[uk];
            } else {
                ps.test = compare(model, j, k, value[uj], value[uk], grad[uj], grad[uk]);
                ++net.tested;
                const bool edge = cfg.invert_edges ? ps.test.p_value <= 0.05 : ps.test.p_value > 0.05;
                if (edge) {
                    net.adjacency[uj][uk] = net.adjacency[uk][uj] = true;
                    ++net.degree[uj];
                    ++net.degree[uk];
                    ++net.edges;
                }
            }
            net.pairs.push_back(std::move(ps));
        }
    }
    return net;
}

namespace {

std::string dot_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        out += c;
    }
    return out;
}

}  // namespace

void write_network_dot(std::ostream& out, const RiskNetwork& net) {
    out << "graph netcovar {\n";
    for (std::size_t i = 0; i < net.nodes.size(); ++i)
        out << "  n" << i << " [label=\"" << dot_escape(net.nodes[i]) << "\"];\n";
    for (const auto& p : net.pairs) {
        if (!p.ok || !net.adjacency[static_cast<std::size_t>(p.j)][static_cast<std::size_t>(p.k)]) continue;
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.4f", p.test.p_value);
        out << "  n" << p.j << " -- n" << p.k << " [label=\"" << buf << "\"];\n";
    }
    out << "}\n";
}

void write_network_summary(std::ostream& out, const RiskNetwork& net) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", 100.0 * net.edge_share());
    out << "Total number of edges," << net.edges << "\n";
    out << "% of edges," << buf << "\n";
    out << "Pairs tested," << net.tested << "\n";
    out << "Pairs failed," << net.pairs.size() - net.tested << "\n";
}

}  // namespace msq
