#include "msq/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "msq/errors.hpp"
#include "msq/parallel.hpp"
#include "msq/rng.hpp"

namespace msq {

void ScadParams::validate() const {
    if (!(a > 2.0)) throw DomainError("SCAD parameter a must exceed 2");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw DomainError("lambda must be a finite nonnegative number");
}

double scad_penalty(double g, const ScadParams& p) {
    const double l = p.lambda, a = p.a;
    if (g <= l) return l * g;
    if (g <= a * l) return (a * l * g - 0.5 * g * g) / (a - 1.0) - l * l / (2.0 * (a - 1.0));
    return l * l * (a + 1.0) / 2.0;
}

double scad_derivative(double g, const ScadParams& p) {
    const double l = p.lambda, a = p.a;
    if (g <= l) return l;
    if (g <= a * l) return (a * l - g) / (a - 1.0);
    return 0.0;
}

double scad_perturbed(double g, const ScadParams& p, double eps) {
    if (eps <= 0.0) return scad_penalty(g, p);
    const double l = p.lambda, a = p.a;
    // Piecewise closed form of int_0^g p'(t) / (eps + t) dt.
    double integral = l * (std::log1p(std::min(g, l) / eps));
    if (g > l) {
        const double t = std::min(g, a * l);
        integral += ((a * l + eps) * std::log((eps + t) / (eps + l)) - (t - l)) / (a - 1.0);
    }
    return scad_penalty(g, p) - eps * integral;
}

double lqa_majorizer(double g, double g0, const ScadParams& p, double eps) {
    return scad_perturbed(g0, p, eps) + (g * g - g0 * g0) * scad_derivative(g0, p) / (2.0 * (eps + g0));
}

double lqa_epsilon(const EsdParams& theta0, const ScadParams& p, std::size_t n) {
    p.validate();
    if (!(p.lambda > 0.0)) throw DomainError("perturbation constant needs lambda > 0");
    if (n == 0) throw DomainError("sample size must be positive");
    double smallest = std::numeric_limits<double>::infinity();
    const int m = theta0.dim();
    for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j)
            if (theta0.omega(i, j) != 0.0) smallest = std::min(smallest, std::abs(theta0.omega(i, j)));
    if (!std::isfinite(smallest)) return 1e-300;
    return 1e-8 / (2.0 * static_cast<double>(n) * p.lambda) * smallest;
}

namespace {

class PenalizedObjective {
public:
    PenalizedObjective(const PhiSimulator& sim, const Vector& hat, const Matrix& W, std::size_t n,
                       const ScadParams& p, double eps)
        : sim_(sim), hat_(hat), W_(W), n_(static_cast<double>(n)), p_(p), eps_(eps) {}

    double residual_part(const EsdParams& t) const {
        const Vector r = hat_ - sim_.simulate_values(t);
        if (!r.allFinite()) return std::numeric_limits<double>::infinity();
        return n_ * r.dot(W_ * r);
    }

    double penalty_part(const EsdParams& t) const {
        if (p_.lambda == 0.0) return 0.0;
        double s = 0.0;
        for (int i = 0; i < t.dim(); ++i)
            for (int j = i + 1; j < t.dim(); ++j) s += scad_perturbed(std::abs(t.omega(i, j)), p_, eps_);
        return n_ * s;
    }

    double operator()(const EsdParams& t) const { return residual_part(t) + penalty_part(t); }

private:
    const PhiSimulator& sim_;
    const Vector& hat_;
    const Matrix& W_;
    double n_;
    ScadParams p_;
    double eps_;
};

}  // namespace

SparseResult sparse_fit(const PhiSimulator& sim, const Vector& hat_phi, const Matrix& W, std::size_t n,
                        const EsdParams& start, const ScadParams& p, double fd_step, const SparseOptions& options,
                        bool with_covariance, const Matrix& omega_theta) {
    p.validate();
    const int m = start.dim();
    const double eps = p.lambda > 0.0 ? options.epsilon_scale * lqa_epsilon(start, p, n) : 0.0;
    const PenalizedObjective objective(sim, hat_phi, W, n, p, eps);

    SparseResult res;
    res.lambda = p.lambda;
    res.a = p.a;
    res.epsilon = eps;
    EsdParams cur = start;
    cur.alpha = std::clamp(cur.alpha, kAlphaLower, kAlphaUpper);
    double qcur = objective(cur);
    int stalled = 0;
    bool converged = false;

    auto threshold = [&](const Matrix& om, int i, int j) {
        return options.zero_threshold * std::sqrt(om(i, i) * om(j, j));
    };

    // One damped quasi-Newton update of the natural coordinates in `idx`.
    // Returns the largest accepted coordinate change.
    auto update_block = [&](const std::vector<std::size_t>& idx) -> double {
        const Vector x0 = to_natural(cur);
        const Matrix jac = phi_jacobian(sim, cur, fd_step, idx);
        const Vector r = hat_phi - sim.simulate_values(cur);
        const auto k = static_cast<Eigen::Index>(idx.size());
        Matrix a = jac.transpose() * W * jac;
        Vector g = jac.transpose() * (W * r);
        const auto tags = parameter_tags(m);
        for (Eigen::Index c = 0; c < k; ++c) {
            const auto& tag = tags[idx[static_cast<std::size_t>(c)]];
            if (tag.kind != ParamKind::omega_off || p.lambda == 0.0) continue;
            const double sigma = x0(static_cast<Eigen::Index>(idx[static_cast<std::size_t>(c)]));
            const double w = scad_derivative(std::abs(sigma), p) / (eps + std::abs(sigma));
            a(c, c) += 0.5 * w;
            g(c) -= 0.5 * w * sigma;
        }
        Eigen::LDLT<Matrix> ldlt(a);
        Vector delta = ldlt.solve(g);
        if (ldlt.info() != Eigen::Success || !delta.allFinite()) {
            a.diagonal().array() += 1e-10 * (a.diagonal().cwiseAbs().maxCoeff() + 1e-300);
            delta = a.ldlt().solve(g);
            if (!delta.allFinite()) return 0.0;
        }
        // Trust region: no coordinate moves by more than a quarter of its scale.
        double excess = 1.0;
        for (Eigen::Index c = 0; c < k; ++c) {
            const auto& tag = tags[idx[static_cast<std::size_t>(c)]];
            const double scale = tag.kind == ParamKind::xi ? std::sqrt(cur.omega(tag.i, tag.i))
                                                           : std::sqrt(cur.omega(tag.i, tag.i) * cur.omega(tag.j, tag.j));
            excess = std::max(excess, std::abs(delta(c)) / (0.25 * scale));
        }
        delta /= excess;
        // Backtracking first; eigenvalue clipping only when every shortened
        // step leaves the positive definite cone.
        for (const bool allow_repair : {false, true}) {
            double t = 1.0;
            for (int h = 0; h <= options.max_halvings; ++h, t *= 0.5) {
                Vector x = x0;
                for (Eigen::Index c = 0; c < k; ++c)
                    x(static_cast<Eigen::Index>(idx[static_cast<std::size_t>(c)])) += t * delta(c);
                EsdParams cand = from_natural(x, m);
                if (!(cand.omega.diagonal().array() > 0.0).all()) continue;
                std::vector<std::pair<int, int>> zeros;
                for (int i = 0; i < m; ++i)
                    for (int j = i + 1; j < m; ++j)
                        if (std::abs(cand.omega(i, j)) < threshold(cand.omega, i, j)) {
                            cand.omega(i, j) = cand.omega(j, i) = 0.0;
                            zeros.emplace_back(i, j);
                        }
                if (!is_positive_definite(cand.omega)) {
                    if (!allow_repair) continue;
                    cand.omega = clip_eigenvalues(cand.omega, 1e-8);
                    for (auto [i, j] : zeros) cand.omega(i, j) = cand.omega(j, i) = 0.0;
                    if (!is_positive_definite(cand.omega)) continue;
                } else if (allow_repair) {
                    continue;  // already tried in the first pass
                }
                const double qc = objective(cand);
                if (qc <= qcur) {
                    if (allow_repair) ++res.pd_repairs;
                    const double change = (to_natural(cand) - x0).cwiseAbs().maxCoeff();
                    cur = cand;
                    qcur = qc;
                    return change;
                }
            }
        }
        return 0.0;
    };

    for (int sweep = 1; sweep <= options.max_sweeps; ++sweep) {
        res.sweeps = sweep;
        const double qstart = qcur;
        double maxchg = 0.0;
        for (int j = m - 1; j >= 0; --j) {
            std::vector<std::size_t> idx{natural_omega_index(m, j, j)};
            for (int i = 0; i < m; ++i) {
                if (i == j) continue;
                // Exact zeros stay frozen under a positive penalty.
                if (p.lambda > 0.0 && cur.omega(i, j) == 0.0) continue;
                idx.push_back(natural_omega_index(m, i, j));
            }
            maxchg = std::max(maxchg, update_block(idx));
        }
        // Locations only; the tail index stays at the warm-start value.
        std::vector<std::size_t> loc(static_cast<std::size_t>(m));
        std::iota(loc.begin(), loc.end(), 1);
        maxchg = std::max(maxchg, update_block(loc));
        res.sweep_objectives.push_back(qcur);

        if (maxchg < options.change_tol) {
            converged = true;
            break;
        }
        stalled = qcur < qstart ? 0 : stalled + 1;
        if (stalled >= 3) break;
    }
    res.converged = converged && stalled < 3;
    res.theta = cur;
    res.objective = qcur;
    for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j)
            if (cur.omega(i, j) != 0.0) res.active_set.emplace_back(i, j);

    const auto P = static_cast<Eigen::Index>(free_parameter_count(m));
    res.covariance = Matrix::Constant(P, P, std::numeric_limits<double>::quiet_NaN());
    res.std_errors = Vector::Constant(P, std::numeric_limits<double>::quiet_NaN());
    if (with_covariance) {
        std::vector<std::size_t> idx;
        for (int q = 0; q <= m; ++q) idx.push_back(static_cast<std::size_t>(q));
        for (int i = 0; i < m; ++i)
            for (int j = i; j < m; ++j)
                if (i == j || cur.omega(i, j) != 0.0) idx.push_back(natural_omega_index(m, i, j));
        try {
            const Matrix c = asymptotic_cov(cur, sim, {W, omega_theta, WeightStage::efficient, n}, fd_step, idx);
            res.covariance.setZero();
            res.std_errors.setZero();
            for (std::size_t a = 0; a < idx.size(); ++a) {
                for (std::size_t b = 0; b < idx.size(); ++b)
                    res.covariance(static_cast<Eigen::Index>(idx[a]), static_cast<Eigen::Index>(idx[b])) =
                        c(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
                res.std_errors(static_cast<Eigen::Index>(idx[a])) =
                    std::sqrt(std::max(0.0, c(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(a))));
            }
        } catch (const RankDeficiency& e) {
            res.covariance_error = e.what();
        }
    }
    res.path.push_back({p.lambda, qcur, res.active_set.size(), std::numeric_limits<double>::quiet_NaN()});
    return res;
}

SparseResult sparse_estimate(const Matrix& data, const MmsqConfig& config, const ScadParams& p,
                             const EstimationResult* warm, const SparseOptions& options) {
    p.validate();
    config.validate();
    std::optional<EstimationResult> own;
    if (warm == nullptr) {
        own = estimate(data, config);
        warm = &*own;
    }
    const PhiSimulator sim(warm->directions, warm->init.omega, config.R, config.sim_size(warm->n), config.seed);
    return sparse_fit(sim, warm->hat_phi.values, warm->weight, warm->n, warm->theta, p, config.fd_step, options, true,
                      warm->omega_theta);
}

std::vector<ScadParams> default_lambda_grid(const EsdParams& init, std::size_t points, double a) {
    double top = 0.0;
    for (int i = 0; i < init.dim(); ++i)
        for (int j = i + 1; j < init.dim(); ++j) top = std::max(top, std::abs(init.omega(i, j)));
    if (!(top > 0.0)) top = 1.0;
    std::vector<ScadParams> grid;
    for (std::size_t k = 0; k < points; ++k) {
        const double frac = points == 1 ? 1.0 : static_cast<double>(k) / static_cast<double>(points - 1);
        grid.push_back({a, top * std::pow(10.0, -3.0 + 3.0 * frac)});
    }
    return grid;
}

std::vector<std::vector<std::size_t>> kfold_partition(std::size_t n, int K, std::uint64_t seed) {
    if (K < 2) throw DomainError("K-fold validation needs K >= 2");
    if (n < 10 * static_cast<std::size_t>(K)) throw DomainError("K-fold validation needs n >= 10 K");
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    RngStream rng(seed, streams::folds);
    for (std::size_t i = n - 1; i > 0; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.next_u64() % (i + 1));
        std::swap(perm[i], perm[j]);
    }
    std::vector<std::vector<std::size_t>> folds(static_cast<std::size_t>(K));
    const std::size_t base = n / static_cast<std::size_t>(K), extra = n % static_cast<std::size_t>(K);
    std::size_t pos = 0;
    for (std::size_t k = 0; k < folds.size(); ++k) {
        const std::size_t len = base + (k < extra ? 1 : 0);
        folds[k].assign(perm.begin() + static_cast<std::ptrdiff_t>(pos), perm.begin() + static_cast<std::ptrdiff_t>(pos + len));
        std::sort(folds[k].begin(), folds[k].end());
        pos += len;
    }
    return folds;
}

namespace {

Matrix take_rows(const Matrix& data, const std::vector<std::size_t>& rows) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), data.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = data.row(static_cast<Eigen::Index>(rows[i]));
    return out;
}

}  // namespace

std::pair<double, SparseResult> tune_lambda(const Matrix& data, const MmsqConfig& config,
                                            const std::vector<ScadParams>& grid, const TuneMethod& method, int workers,
                                            const SparseOptions& options) {
    config.validate();
    if (grid.empty()) throw DomainError("lambda grid is empty");
    for (const auto& p : grid) p.validate();
    const auto n = static_cast<std::size_t>(data.rows());
    const std::size_t G = grid.size();
    std::vector<double> score(G, 0.0);

    const EstimationResult full = estimate(data, config);
    const PhiSimulator full_sim(full.directions, full.init.omega, config.R, config.sim_size(n), config.seed);

    // Full-data path; also the validation criterion V(lambda).
    std::vector<SparseResult> path(G);
    parallel_for(G, workers, [&](std::size_t g) {
        const PhiSimulator sim(full.directions, full.init.omega, config.R, config.sim_size(n), config.seed);
        path[g] = sparse_fit(sim, full.hat_phi.values, full.weight, n, full.theta, grid[g], config.fd_step, options,
                             false, full.omega_theta);
    });

    if (method.kind == TuneMethod::Kind::validation) {
        for (std::size_t g = 0; g < G; ++g) {
            const Vector r = full.hat_phi.values - full_sim.simulate_values(path[g].theta);
            score[g] = r.dot(full.weight * r) / static_cast<double>(n);
        }
    } else {
        const auto folds = kfold_partition(n, method.folds, config.seed);
        std::vector<std::vector<double>> per_fold(folds.size(), std::vector<double>(G, 0.0));
        parallel_for(folds.size(), workers, [&](std::size_t k) {
            std::vector<std::size_t> train;
            for (std::size_t f = 0; f < folds.size(); ++f)
                if (f != k) train.insert(train.end(), folds[f].begin(), folds[f].end());
            std::sort(train.begin(), train.end());
            const Matrix dtrain = take_rows(data, train);
            const Matrix dtest = take_rows(data, folds[k]);
            MmsqConfig cfg = config;
            const EstimationResult warm = estimate(dtrain, cfg);
            const PhiSimulator sim(warm.directions, warm.init.omega, cfg.R, cfg.sim_size(train.size()), cfg.seed);
            const Vector hat_test = phi_stats(dtest, warm.directions, cfg.taus).values;
            for (std::size_t g = 0; g < G; ++g) {
                const SparseResult fit = sparse_fit(sim, warm.hat_phi.values, warm.weight, train.size(), warm.theta,
                                                    grid[g], cfg.fd_step, options, false, warm.omega_theta);
                const Vector r = hat_test - sim.simulate_values(fit.theta);
                per_fold[k][g] = r.dot(warm.weight * r);
            }
        });
        for (const auto& f : per_fold)
            for (std::size_t g = 0; g < G; ++g) score[g] += f[g];
    }

    // argmin with ties resolved toward the larger lambda
    std::size_t best = 0;
    for (std::size_t g = 1; g < G; ++g) {
        const bool better = score[g] < score[best];
        const bool tie = std::abs(score[g] - score[best]) <= 1e-12 * std::max(1.0, std::abs(score[best]));
        if (better || (tie && grid[g].lambda > grid[best].lambda)) best = g;
    }
    const PhiSimulator sim(full.directions, full.init.omega, config.R, config.sim_size(n), config.seed);
    SparseResult out = sparse_fit(sim, full.hat_phi.values, full.weight, n, full.theta, grid[best], config.fd_step,
                                  options, true, full.omega_theta);
    out.path.clear();
    for (std::size_t g = 0; g < G; ++g)
        out.path.push_back({grid[g].lambda, path[g].objective, path[g].active_set.size(), score[g]});
    out.validation = score;
    return {grid[best].lambda, out};
}

}  // namespace msq
