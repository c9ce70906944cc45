#include "msq/mmsq.hpp"

#include <algorithm>
#include <array>
#include <boost/math/tools/minima.hpp>
#include <cmath>
#include <limits>
#include <numbers>

#include "msq/errors.hpp"
#include "msq/rng.hpp"
#include "msq/simplex.hpp"

namespace msq {

void MmsqConfig::validate() const {
    if (R < 1) throw DomainError("R must be at least 1");
    if (!(optimizer.x_tol > 0.0) || !(optimizer.f_tol > 0.0)) throw DomainError("optimizer tolerances must be positive");
    if (optimizer.max_iter < 1) throw DomainError("optimizer.max_iter must be positive");
    if (optimizer.restarts < 0) throw DomainError("optimizer.restarts must be nonnegative");
    if (!(fd_step > 0.0)) throw DomainError("fd_step must be positive");
    if (eta_mc < 100000) throw DomainError("eta_mc must be at least 1e5");
    if (!(ridge >= 0.0)) throw DomainError("ridge must be nonnegative");
    if (!(eta_corr_floor >= 0.0 && eta_corr_floor < 1.0)) throw DomainError("eta_corr_floor must lie in [0, 1)");
    taus.validate();
    for (double t : {0.05, 0.25, 0.5, 0.75, 0.95}) taus.index_of(t);
}

const char* weight_stage_name(WeightStage stage) {
    return stage == WeightStage::identity ? "identity" : "efficient";
}

// ---------------------------------------------------------------- parameters

namespace {

constexpr double kAlphaClamp = kAlphaUpper - 1e-8;

double logit_alpha(double alpha) {
    const double a = std::min(alpha, kAlphaClamp);
    const double p = (a - kAlphaLower) / (kAlphaUpper - kAlphaLower);
    return std::log(p / (1.0 - p));
}

double inv_logit_alpha(double z) { return kAlphaLower + (kAlphaUpper - kAlphaLower) / (1.0 + std::exp(-z)); }

Vector pack_scale(const Matrix& omega) {
    Matrix l;
    try {
        l = cholesky_lower(omega, "omega");
    } catch (const NotPositiveDefinite& e) {
        throw DomainError(e.what());
    }
    const auto m = omega.rows();
    Vector out(m * (m + 1) / 2);
    Eigen::Index p = 0;
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j <= i; ++j) out(p++) = i == j ? std::log(l(i, i)) : l(i, j);
    return out;
}

Matrix unpack_scale(const double* z, Eigen::Index m) {
    Matrix l = Matrix::Zero(m, m);
    Eigen::Index p = 0;
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j <= i; ++j, ++p) l(i, j) = i == j ? std::exp(z[p]) : z[p];
    return l * l.transpose();
}

}  // namespace

std::size_t free_parameter_count(int m) {
    const auto mm = static_cast<std::size_t>(m);
    return 1 + mm + mm * (mm + 1) / 2;
}

Vector pack_theta(const EsdParams& params) {
    params.validate();
    if (!(params.alpha > kAlphaLower)) throw DomainError("alpha must exceed 0.6 for the free parameterization");
    const int m = params.dim();
    Vector out(static_cast<Eigen::Index>(free_parameter_count(m)));
    out(0) = logit_alpha(params.alpha);
    out.segment(1, m) = params.xi;
    out.tail(m * (m + 1) / 2) = pack_scale(params.omega);
    return out;
}

EsdParams unpack_theta(const Vector& free, int m) {
    if (free.size() != static_cast<Eigen::Index>(free_parameter_count(m)))
        throw DomainError("free parameter vector has the wrong length");
    EsdParams p;
    p.alpha = inv_logit_alpha(free(0));
    p.xi = free.segment(1, m);
    p.omega = unpack_scale(free.data() + 1 + m, m);
    return p;
}

std::vector<ParamTag> parameter_tags(int m) {
    std::vector<ParamTag> tags{{ParamKind::alpha}};
    for (int i = 0; i < m; ++i) tags.push_back({ParamKind::xi, i});
    for (int i = 0; i < m; ++i)
        for (int j = i; j < m; ++j) tags.push_back({i == j ? ParamKind::omega_diag : ParamKind::omega_off, i, j});
    return tags;
}

std::vector<std::string> parameter_names(int m) {
    std::vector<std::string> out;
    for (const auto& t : parameter_tags(m)) out.push_back(t.str());
    return out;
}

std::size_t natural_omega_index(int m, int i, int j) {
    if (i > j) std::swap(i, j);
    std::size_t idx = 1 + static_cast<std::size_t>(m);
    for (int r = 0; r < i; ++r) idx += static_cast<std::size_t>(m - r);
    return idx + static_cast<std::size_t>(j - i);
}

Vector to_natural(const EsdParams& params) {
    const int m = params.dim();
    Vector out(static_cast<Eigen::Index>(free_parameter_count(m)));
    out(0) = params.alpha;
    out.segment(1, m) = params.xi;
    Eigen::Index p = 1 + m;
    for (int i = 0; i < m; ++i)
        for (int j = i; j < m; ++j) out(p++) = params.omega(i, j);
    return out;
}

EsdParams from_natural(const Vector& natural, int m) {
    if (natural.size() != static_cast<Eigen::Index>(free_parameter_count(m)))
        throw DomainError("natural parameter vector has the wrong length");
    EsdParams p;
    p.alpha = natural(0);
    p.xi = natural.segment(1, m);
    p.omega.resize(m, m);
    Eigen::Index k = 1 + m;
    for (int i = 0; i < m; ++i)
        for (int j = i; j < m; ++j) p.omega(i, j) = p.omega(j, i) = natural(k++);
    return p;
}

// ---------------------------------------------------------------- simulator

PhiSimulator::PhiSimulator(const DirectionSet& dirs, const Matrix& reference_omega, int R, std::size_t n_sim,
                           std::uint64_t seed)
    : dirs_(dirs), layout_(phi_layout(dirs)), R_(R), n_(n_sim) {
    if (R < 1) throw DomainError("R must be at least 1");
    if (n_sim < 20) throw DomainError("simulated sample size must be at least 20");
    if (dirs.size() == 0) throw DomainError("direction set is empty");
    const Matrix l = cholesky_lower(reference_omega, "reference omega");
    const int m = dirs.m;
    const std::size_t K = dirs.size();
    std::vector<Vector> v(K);
    for (std::size_t k = 0; k < K; ++k) {
        v[k] = l.transpose() * dirs.vectors[k];
        v[k] /= v[k].norm();
    }
    const std::size_t total = static_cast<std::size_t>(R) * n_;
    theta_.resize(total);
    log_sin_theta_.resize(total);
    log_w_.resize(total);
    g_.resize(K * total);
    Vector z(m);
    for (int r = 0; r < R; ++r) {
        RngStream rng(seed, static_cast<std::uint64_t>(r));
        for (std::size_t i = 0; i < n_; ++i) {
            const std::size_t ri = static_cast<std::size_t>(r) * n_ + i;
            const double th = std::numbers::pi * rng.uniform();
            theta_[ri] = th;
            log_sin_theta_[ri] = std::log(std::sin(th));
            log_w_[ri] = std::log(rng.exponential());
            for (int c = 0; c < m; ++c) z(c) = rng.normal();
            for (std::size_t k = 0; k < K; ++k) g_[k * total + ri] = v[k].dot(z);
        }
    }
}

const PhiSimulator::AlphaStats& PhiSimulator::alpha_stats(double alpha) const {
    if (!(alpha > 0.0 && alpha <= 2.0)) throw DomainError("alpha must lie in (0, 2]");
    if (auto it = cache_.find(alpha); it != cache_.end()) return it->second;
    if (cache_.size() >= 64) cache_.clear();
    ++alpha_evals_;

    const std::size_t K = dirs_.size();
    const std::size_t total = static_cast<std::size_t>(R_) * n_;
    AlphaStats st;
    st.kappa.assign(K, 0.0);
    st.median.assign(K, 0.0);
    st.iqr.assign(K, 0.0);
    const double a = alpha / 2.0;
    std::vector<double> root(n_, 1.0), buf(n_);
    const std::array<double, 5> taus = {0.05, 0.25, 0.5, 0.75, 0.95};
    std::array<double, 5> q{};
    for (int r = 0; r < R_; ++r) {
        const std::size_t off = static_cast<std::size_t>(r) * n_;
        if (a < 1.0) {
            const double c1 = 1.0 / a, c2 = (1.0 - a) / a;
            for (std::size_t i = 0; i < n_; ++i) {
                const double th = theta_[off + i];
                const double lz = std::log(std::sin(a * th)) - c1 * log_sin_theta_[off + i] +
                                  c2 * (std::log(std::sin((1.0 - a) * th)) - log_w_[off + i]);
                root[i] = std::exp(0.5 * lz);
            }
        }
        for (std::size_t k = 0; k < K; ++k) {
            const double* g = g_.data() + k * total + off;
            for (std::size_t i = 0; i < n_; ++i) buf[i] = root[i] * g[i];
            quantiles_inplace(buf, taus, q);
            const double iqr = q[3] - q[1];
            if (!(iqr > 0.0)) throw DegenerateInput("simulated projection has zero interquartile range");
            st.kappa[k] += (q[4] - q[0]) / iqr;
            st.median[k] += q[2];
            st.iqr[k] += iqr;
        }
    }
    for (std::size_t k = 0; k < K; ++k) {
        st.kappa[k] /= R_;
        st.median[k] /= R_;
        st.iqr[k] /= R_;
    }
    return cache_.emplace(alpha, std::move(st)).first->second;
}

Vector PhiSimulator::simulate_values(const EsdParams& theta) const {
    if (theta.dim() != dirs_.m) throw DomainError("parameter dimension does not match the direction set");
    const AlphaStats& st = alpha_stats(theta.alpha);
    const std::size_t K = dirs_.size();
    std::vector<double> loc(K), scale(K);
    for (std::size_t k = 0; k < K; ++k) {
        const Vector& u = dirs_.vectors[k];
        const auto [i, j] = dirs_.pairs[k];
        double var;
        if (i < 0) {
            Eigen::Index c;
            u.cwiseAbs().maxCoeff(&c);
            loc[k] = theta.xi(c);
            var = theta.omega(c, c);
        } else {
            loc[k] = u(i) * theta.xi(i) + u(j) * theta.xi(j);
            var = u(i) * u(i) * theta.omega(i, i) + u(j) * u(j) * theta.omega(j, j) +
                  2.0 * u(i) * u(j) * theta.omega(i, j);
        }
        scale[k] = var > 0.0 ? std::sqrt(var) : std::numeric_limits<double>::quiet_NaN();
    }
    Vector out(static_cast<Eigen::Index>(layout_.size()));
    for (std::size_t b = 0; b < layout_.size(); ++b) {
        const auto k = static_cast<std::size_t>(layout_[b].direction);
        double v = 0.0;
        switch (layout_[b].kind) {
            case PhiKind::kurtosis: v = st.kappa[k]; break;
            case PhiKind::median: v = loc[k] + scale[k] * st.median[k]; break;
            case PhiKind::iqr: v = scale[k] * st.iqr[k]; break;
        }
        out(static_cast<Eigen::Index>(b)) = v;
    }
    return out;
}

PhiVector PhiSimulator::simulate(const EsdParams& theta) const {
    PhiVector phi;
    phi.layout = layout_;
    phi.values = simulate_values(theta);
    return phi;
}

PhiVector simulate_phi(const EsdParams& theta, const DirectionSet& dirs, const MmsqConfig& config) {
    theta.validate();
    if (config.n_sim == 0) throw DomainError("simulate_phi needs an explicit n_sim");
    PhiSimulator sim(dirs, theta.omega, config.R, config.n_sim, config.seed);
    return sim.simulate(theta);
}

// ---------------------------------------------------------------- objective

double objective(const PhiVector& hat, const PhiVector& tilde, const Matrix& W) {
    if (hat.values.size() != tilde.values.size() || W.rows() != hat.values.size() || W.cols() != W.rows())
        throw DomainError("objective: dimensions are not conformable");
    if (!is_positive_definite(W)) throw DomainError("weighting matrix is not positive definite");
    const Vector r = hat.values - tilde.values;
    return r.dot(W * r);
}

double objective(const EsdParams& theta, const PhiVector& hat, const Matrix& W, const DirectionSet& dirs,
                 const MmsqConfig& config) {
    return objective(hat, simulate_phi(theta, dirs, config), W);
}

Matrix efficient_weight(const Matrix& omega_theta, double ridge) {
    const auto B = omega_theta.rows();
    double tr = omega_theta.trace();
    if (!(tr > 0.0)) tr = static_cast<double>(B);
    Matrix reg = omega_theta + (ridge * tr / static_cast<double>(B)) * Matrix::Identity(B, B);
    Eigen::LDLT<Matrix> ldlt(reg);
    if (ldlt.info() != Eigen::Success) throw NotPositiveDefinite("regularized statistic covariance is singular");
    return symmetrize(ldlt.solve(Matrix::Identity(B, B)));
}

// ---------------------------------------------------------------- Jacobian and covariance

namespace {

double typical_scale(const EsdParams& t, const ParamTag& tag) {
    switch (tag.kind) {
        case ParamKind::alpha: return 1.0;
        case ParamKind::xi: return std::sqrt(t.omega(tag.i, tag.i));
        case ParamKind::omega_diag:
        case ParamKind::omega_off: return std::sqrt(t.omega(tag.i, tag.i) * t.omega(tag.j, tag.j));
    }
    return 1.0;
}

}  // namespace

Matrix phi_jacobian(const PhiSimulator& sim, const EsdParams& theta, double fd_step,
                    const std::vector<std::size_t>& indices) {
    const int m = theta.dim();
    const auto tags = parameter_tags(m);
    std::vector<std::size_t> idx = indices;
    if (idx.empty())
        for (std::size_t p = 0; p < tags.size(); ++p) idx.push_back(p);
    const Vector x0 = to_natural(theta);
    Matrix d(static_cast<Eigen::Index>(sim.layout().size()), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t c = 0; c < idx.size(); ++c) {
        const std::size_t p = idx[c];
        const double h = fd_step * std::max(std::abs(x0(static_cast<Eigen::Index>(p))), typical_scale(theta, tags[p]));
        Vector xp = x0, xm = x0;
        double span = 2.0 * h;
        xp(static_cast<Eigen::Index>(p)) += h;
        xm(static_cast<Eigen::Index>(p)) -= h;
        if (tags[p].kind == ParamKind::alpha && xp(0) > kAlphaUpper) {
            xp(0) = x0(0);
            span = h;
        }
        const Vector fp = sim.simulate_values(from_natural(xp, m));
        const Vector fm = sim.simulate_values(from_natural(xm, m));
        d.col(static_cast<Eigen::Index>(c)) = (fp - fm) / span;
    }
    return d;
}

Matrix asymptotic_cov(const EsdParams& theta_hat, const PhiSimulator& sim, const CovarianceInput& input,
                      double fd_step, const std::vector<std::size_t>& indices) {
    if (input.n == 0) throw DomainError("asymptotic covariance needs the data length");
    const Matrix d = phi_jacobian(sim, theta_hat, fd_step, indices);
    const Matrix& w = input.weight;
    if (w.rows() != d.rows()) throw DomainError("weight matrix does not match the statistic vector");
    const Matrix a = symmetrize(d.transpose() * w * d);
    Eigen::SelfAdjointEigenSolver<Matrix> es(a);
    const double top = es.eigenvalues().cwiseAbs().maxCoeff();
    if (!(es.eigenvalues()(0) > 1e-12 * top) || !(top > 0.0)) {
        Eigen::Index worst;
        es.eigenvectors().col(0).cwiseAbs().maxCoeff(&worst);
        const auto names = parameter_names(theta_hat.dim());
        const std::size_t p = indices.empty() ? static_cast<std::size_t>(worst) : indices[static_cast<std::size_t>(worst)];
        throw RankDeficiency(names[p], "statistic Jacobian is rank deficient; weakest parameter: " + names[p]);
    }
    const Matrix a_inv = es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
    Matrix v;
    if (input.stage == WeightStage::efficient) {
        v = a_inv;
    } else {
        if (input.omega_theta.rows() != d.rows()) throw DomainError("statistic covariance has the wrong size");
        v = a_inv * d.transpose() * w * input.omega_theta * w * d * a_inv;
    }
    const double inflate = 1.0 + 1.0 / static_cast<double>(sim.replicates());
    return symmetrize(v * (inflate / static_cast<double>(input.n)));
}

Matrix asymptotic_cov(const EsdParams& theta_hat, const DirectionSet& dirs, const MmsqConfig& config,
                      const CovarianceInput& input) {
    PhiSimulator sim(dirs, theta_hat.omega, config.R, config.sim_size(input.n), config.seed);
    return asymptotic_cov(theta_hat, sim, input, config.fd_step);
}

// ---------------------------------------------------------------- optimization

namespace {

class Problem {
public:
    Problem(const PhiSimulator& sim, const Vector& hat, const Matrix& W) : sim_(sim), hat_(hat) {
        if (W.rows() != hat.size() || W.cols() != hat.size()) throw DomainError("weight matrix has the wrong size");
        Eigen::LLT<Matrix> llt(W);
        if (llt.info() != Eigen::Success) throw DomainError("weighting matrix is not positive definite");
        lt_ = llt.matrixU();
    }

    double value(const EsdParams& t) {
        ++evals_;
        const Vector r = hat_ - sim_.simulate_values(t);
        if (!r.allFinite()) return std::numeric_limits<double>::infinity();
        return (lt_.triangularView<Eigen::Upper>() * r).squaredNorm();
    }

    // U r with W = U'U, so that value(t) = |weighted_residual(t)|^2.
    Vector weighted_residual(const EsdParams& t) {
        ++evals_;
        const Vector r = hat_ - sim_.simulate_values(t);
        return lt_.triangularView<Eigen::Upper>() * r;
    }

    std::size_t evals() const { return evals_; }
    const PhiSimulator& sim() const { return sim_; }
    const Vector& hat() const { return hat_; }

private:
    const PhiSimulator& sim_;
    Vector hat_;
    Matrix lt_;
    std::size_t evals_ = 0;
};

// Coordinates for a fixed alpha: xi then the packed Cholesky factor.
Vector inner_pack(const EsdParams& t) {
    const int m = t.dim();
    Vector y(static_cast<Eigen::Index>(free_parameter_count(m) - 1));
    y.head(m) = t.xi;
    y.tail(m * (m + 1) / 2) = pack_scale(t.omega);
    return y;
}

EsdParams inner_unpack(double alpha, const Vector& y, int m) {
    EsdParams p;
    p.alpha = alpha;
    p.xi = y.head(m);
    p.omega = unpack_scale(y.data() + m, m);
    return p;
}

Vector inner_step(const EsdParams& t) {
    const int m = t.dim();
    Vector s(static_cast<Eigen::Index>(free_parameter_count(m) - 1));
    Eigen::Index p = 0;
    for (int i = 0; i < m; ++i) s(p++) = 0.05 * std::sqrt(t.omega(i, i));
    for (int i = 0; i < m; ++i)
        for (int j = 0; j <= i; ++j) s(p++) = i == j ? 0.05 : 0.05 * std::sqrt(t.omega(i, i));
    return s;
}

// Matches the median and interquartile statistics exactly at a given alpha.
EsdParams moment_start(const PhiSimulator& sim, const Vector& hat, double alpha, const EsdParams& fallback) {
    const auto& st = sim.alpha_stats(alpha);
    const auto& dirs = sim.directions();
    const auto& layout = sim.layout();
    const int m = dirs.m;
    std::vector<double> med(dirs.size()), iqr(dirs.size());
    for (std::size_t b = 0; b < layout.size(); ++b) {
        const auto k = static_cast<std::size_t>(layout[b].direction);
        if (layout[b].kind == PhiKind::median) med[k] = hat(static_cast<Eigen::Index>(b));
        if (layout[b].kind == PhiKind::iqr) iqr[k] = hat(static_cast<Eigen::Index>(b));
    }
    EsdParams p = fallback;
    p.alpha = alpha;
    for (std::size_t k = 0; k < dirs.size(); ++k) {
        if (!dirs.is_canonical(k)) continue;
        Eigen::Index c;
        dirs.vectors[k].cwiseAbs().maxCoeff(&c);
        const double s = iqr[k] / st.iqr[k];
        p.omega(c, c) = s * s;
        p.xi(c) = med[k] - s * st.median[k];
    }
    for (std::size_t k = 0; k < dirs.size(); ++k) {
        if (dirs.is_canonical(k)) continue;
        const auto [i, j] = dirs.pairs[k];
        const Vector& u = dirs.vectors[k];
        const double cross = 2.0 * u(i) * u(j);
        if (std::abs(cross) < 0.2) {
            p.omega(i, j) = p.omega(j, i) = fallback.omega(i, j) * std::sqrt(p.omega(i, i) * p.omega(j, j) /
                                                                             (fallback.omega(i, i) * fallback.omega(j, j)));
            continue;
        }
        const double s = iqr[k] / st.iqr[k];
        const double v = (s * s - u(i) * u(i) * p.omega(i, i) - u(j) * u(j) * p.omega(j, j)) / cross;
        p.omega(i, j) = p.omega(j, i) = v;
    }
    if (!is_positive_definite(p.omega)) {
        const double floor = 1e-6 * p.omega.diagonal().mean();
        p.omega = clip_eigenvalues(p.omega, floor);
    }
    (void)m;
    return p;
}

struct InnerFit {
    EsdParams theta;
    double value;
    bool converged;
};

// Levenberg-Marquardt on the weighted residual in the inner coordinates,
// with a central finite-difference Jacobian.
InnerFit lm_polish(Problem& prob, double alpha, const EsdParams& start, double start_value) {
    const int m = start.dim();
    Vector y;
    try {
        y = inner_pack(start);
    } catch (const Error&) {
        return {start, start_value, false};
    }
    double f = start_value;
    double mu = 1e-3;
    bool converged = false;
    const Vector scale = inner_step(start) / 0.05;
    for (int it = 0; it < 100 && !converged; ++it) {
        Vector e = prob.weighted_residual(inner_unpack(alpha, y, m));
        if (!e.allFinite()) break;
        Matrix jac(e.size(), y.size());
        for (Eigen::Index c = 0; c < y.size(); ++c) {
            const double h = 1e-6 * scale(c);
            Vector yp = y, ym = y;
            yp(c) += h;
            ym(c) -= h;
            jac.col(c) = (prob.weighted_residual(inner_unpack(alpha, yp, m)) -
                          prob.weighted_residual(inner_unpack(alpha, ym, m))) / (2.0 * h);
        }
        if (!jac.allFinite()) break;
        const Matrix jtj = jac.transpose() * jac;
        const Vector g = jac.transpose() * e;
        bool accepted = false;
        for (int tries = 0; tries < 12; ++tries) {
            Matrix a = jtj;
            a.diagonal() += mu * (jtj.diagonal().array() + 1e-12).matrix();
            const Vector delta = a.ldlt().solve(-g);
            if (!delta.allFinite()) {
                mu *= 10.0;
                continue;
            }
            const Vector cand = y + delta;
            const EsdParams trial = inner_unpack(alpha, cand, m);
            if (!is_positive_definite(trial.omega)) {
                mu *= 10.0;
                continue;
            }
            const double fc = prob.value(trial);
            if (fc < f) {
                const double gain = f - fc;
                const double step = (delta.array() / scale.array()).abs().maxCoeff();
                y = cand;
                f = fc;
                mu = std::max(mu / 3.0, 1e-12);
                accepted = true;
                converged = gain <= 1e-12 * (1.0 + f) || step < 1e-9;
                break;
            }
            mu *= 10.0;
        }
        if (!accepted) {
            converged = true;
            break;
        }
    }
    return {inner_unpack(alpha, y, m), f, converged};
}

InnerFit inner_fit(Problem& prob, double alpha, const std::vector<EsdParams>& starts, const OptimizerOptions& opt) {
    const int m = starts.front().dim();
    EsdParams best_start = starts.front();
    best_start.alpha = alpha;
    double best_val = std::numeric_limits<double>::infinity();
    for (EsdParams s : starts) {
        s.alpha = alpha;
        if (!is_positive_definite(s.omega)) continue;
        const double v = prob.value(s);
        if (v < best_val) best_val = v, best_start = s;
    }
    auto fn = [&](const Vector& y) { return prob.value(inner_unpack(alpha, y, m)); };
    SimplexOptions so{opt.max_iter, opt.x_tol, opt.f_tol};
    const SimplexResult r = nelder_mead(fn, inner_pack(best_start), inner_step(best_start), so);
    InnerFit out = r.f <= best_val ? InnerFit{inner_unpack(alpha, r.x, m), r.f, r.converged}
                                   : InnerFit{best_start, best_val, r.converged};
    // The simplex stalls well short of the minimum once there are more than a
    // few dozen coordinates, so finish with a least-squares polish.
    const InnerFit lm = lm_polish(prob, alpha, out.theta, out.value);
    if (lm.value < out.value) out = {lm.theta, lm.value, out.converged || lm.converged};
    return out;
}

}  // namespace

FitOutcome minimize_objective(const PhiSimulator& sim, const Vector& hat_phi, const Matrix& W, const EsdParams& start,
                              const OptimizerOptions& options, std::uint64_t seed, bool full_alpha_scan) {
    Problem prob(sim, hat_phi, W);
    EsdParams incumbent = start;
    incumbent.alpha = std::clamp(start.alpha, kAlphaLower, kAlphaUpper);
    double incumbent_val = prob.value(incumbent);
    bool inner_converged = true;

    std::map<double, InnerFit> memo;
    auto profile = [&](double alpha) {
        alpha = std::clamp(alpha, kAlphaLower, kAlphaUpper);
        if (auto it = memo.find(alpha); it != memo.end()) return it->second.value;
        std::vector<EsdParams> starts{incumbent, moment_start(sim, hat_phi, alpha, incumbent)};
        InnerFit f = inner_fit(prob, alpha, starts, options);
        // A decoded Cholesky factor can be numerically singular; such points
        // are kept in the memo but never become the incumbent.
        if (f.value < incumbent_val && is_positive_definite(f.theta.omega)) incumbent = f.theta, incumbent_val = f.value;
        memo.emplace(alpha, f);
        return f.value;
    };

    double lo, hi;
    if (full_alpha_scan) {
        std::vector<double> grid;
        for (double a = kAlphaLower; a < kAlphaUpper - 1e-9; a += 0.2) grid.push_back(a);
        grid.push_back(kAlphaUpper);
        std::size_t best = 0;
        double best_v = std::numeric_limits<double>::infinity();
        for (std::size_t g = 0; g < grid.size(); ++g) {
            const double v = profile(grid[g]);
            if (v < best_v) best_v = v, best = g;
        }
        lo = grid[best > 0 ? best - 1 : 0];
        hi = grid[std::min(best + 1, grid.size() - 1)];
    } else {
        profile(incumbent.alpha);
        lo = std::max(kAlphaLower, incumbent.alpha - 0.15);
        hi = std::min(kAlphaUpper, incumbent.alpha + 0.15);
    }
    const int bits = std::clamp(static_cast<int>(std::ceil(-std::log2(options.x_tol))) + 1, 8, 40);
    std::uintmax_t max_brent = 100;
    const auto brent = boost::math::tools::brent_find_minima(profile, lo, hi, bits, max_brent);
    profile(brent.first);
    profile(hi);
    const bool brent_ok = max_brent < 100;

    // Polish at the selected alpha from perturbed starts.
    const double alpha_hat = incumbent.alpha;
    RngStream rng(seed, streams::restarts);
    const int m = incumbent.dim();
    for (int r = 0; r < options.restarts; ++r) {
        Vector y = inner_pack(incumbent);
        const Vector step = inner_step(incumbent);
        for (Eigen::Index i = 0; i < y.size(); ++i) y(i) += 2.0 * step(i) * rng.normal();
        const EsdParams s = inner_unpack(alpha_hat, y, m);
        InnerFit f = inner_fit(prob, alpha_hat, {s, incumbent}, options);
        if (f.value < incumbent_val && is_positive_definite(f.theta.omega)) incumbent = f.theta, incumbent_val = f.value;
        inner_converged = inner_converged && f.converged;
    }
    if (auto it = memo.find(alpha_hat); it != memo.end()) inner_converged = inner_converged && it->second.converged;

    return {incumbent, incumbent_val, prob.evals(), brent_ok && inner_converged};
}

namespace {

// A stage-1 fit on the |rho| = 1 boundary makes every projection collinear,
// the statistic covariance singular and the efficient weight meaningless.
// The covariance is therefore evaluated at the stage-1 scale with its
// correlation eigenvalues floored; interior fits pass through unchanged.
EsdParams eta_point(const EsdParams& theta, double floor) {
    const Vector inv_sd = theta.omega.diagonal().cwiseSqrt().cwiseInverse();
    const Matrix corr = inv_sd.asDiagonal() * theta.omega * inv_sd.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Matrix> es(corr);
    if (es.eigenvalues().minCoeff() >= floor) return theta;
    Matrix fixed = es.eigenvectors() * es.eigenvalues().cwiseMax(floor).asDiagonal() * es.eigenvectors().transpose();
    const Vector unit = fixed.diagonal().cwiseSqrt().cwiseInverse();
    fixed = unit.asDiagonal() * fixed * unit.asDiagonal();
    EsdParams out = theta;
    const Vector sd = inv_sd.cwiseInverse();
    out.omega = sd.asDiagonal() * fixed * sd.asDiagonal();
    out.omega = 0.5 * (out.omega + out.omega.transpose());
    return out;
}

}  // namespace

EstimationResult estimate(const Matrix& data, const MmsqConfig& config) {
    config.validate();
    const auto n = static_cast<std::size_t>(data.rows());
    if (n < 100) throw DomainError("estimation needs at least 100 observations");
    if (!data.allFinite()) throw DomainError("data contain non-finite values");

    EstimationResult res;
    res.n = n;
    res.R = config.R;
    res.init = init_esd(data);
    res.directions = build_direction_set(res.init);
    res.hat_phi = phi_stats(data, res.directions, config.taus);
    res.parameter_names = parameter_names(res.init.dim());
    PhiSimulator sim(res.directions, res.init.omega, config.R, config.sim_size(n), config.seed);

    const auto B = static_cast<Eigen::Index>(res.hat_phi.size());
    const FitOutcome s1 = minimize_objective(sim, res.hat_phi.values, Matrix::Identity(B, B), res.init,
                                             config.optimizer, config.seed, true);
    res.stage1_theta = s1.theta;
    res.stage1_objective = s1.value;

    RngStream eta_rng(config.seed, streams::eta);
    const EtaMatrix eta = eta_matrix(eta_point(s1.theta, config.eta_corr_floor), res.directions, config.taus,
                                     config.eta_mc, eta_rng);
    res.omega_theta = omega_phi(eta, dphi_dq(eta.quantiles, res.directions, config.taus));
    res.weight = efficient_weight(res.omega_theta, config.ridge);

    const FitOutcome s2 = minimize_objective(sim, res.hat_phi.values, res.weight, s1.theta, config.optimizer,
                                             mix64(config.seed, 2), false);
    res.theta = s2.theta;
    res.objective = s2.value;
    res.weight_stage = WeightStage::efficient;
    res.converged = s1.converged && s2.converged;
    res.evaluations = s1.evaluations + s2.evaluations;

    const auto P = static_cast<Eigen::Index>(free_parameter_count(res.theta.dim()));
    try {
        res.covariance = asymptotic_cov(res.theta, sim, {res.weight, res.omega_theta, WeightStage::efficient, n},
                                        config.fd_step);
        res.std_errors = res.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
    } catch (const RankDeficiency& e) {
        res.covariance_error = e.what();
        res.covariance = Matrix::Constant(P, P, std::numeric_limits<double>::quiet_NaN());
        res.std_errors = Vector::Constant(P, std::numeric_limits<double>::quiet_NaN());
    }
    return res;
}

}  // namespace msq
