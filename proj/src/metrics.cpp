#include "msq/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

#include "msq/errors.hpp"
#include "msq/linalg.hpp"
#include "msq/parallel.hpp"
#include "msq/rng.hpp"

namespace msq {

namespace {

void check_same_shape(const Matrix& a, const Matrix& b) {
    if (a.rows() != a.cols() || b.rows() != b.cols()) throw DomainError("scale matrices must be square");
    if (a.rows() != b.rows()) throw DomainError("scale matrices differ in dimension");
}

std::string fmt(double v) {
    if (std::isnan(v)) return "NA";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

MetricSummary mean_sd(const std::vector<double>& v) {
    MetricSummary s;
    if (v.empty()) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
    for (double x : v) s.mean += x;
    s.mean /= static_cast<double>(v.size());
    if (v.size() > 1) {
        for (double x : v) s.sd += (x - s.mean) * (x - s.mean);
        s.sd = std::sqrt(s.sd / static_cast<double>(v.size() - 1));
    } else {
        s.sd = std::numeric_limits<double>::quiet_NaN();
    }
    return s;
}

Matrix block_equicorrelated(int blocks, int size, double rho) {
    Matrix out = Matrix::Identity(blocks * size, blocks * size);
    for (int b = 0; b < blocks; ++b)
        for (int i = 0; i < size; ++i)
            for (int j = 0; j < size; ++j)
                if (i != j) out(b * size + i, b * size + j) = rho;
    return out;
}

}  // namespace

double f1_score(const Matrix& true_omega, const Matrix& est_omega, double threshold) {
    check_same_shape(true_omega, est_omega);
    long tp = 0, fp = 0, fn = 0;
    for (Eigen::Index i = 0; i < true_omega.rows(); ++i) {
        for (Eigen::Index j = i + 1; j < true_omega.cols(); ++j) {
            const bool t = std::abs(true_omega(i, j)) > 0.0;
            const bool e = std::abs(est_omega(i, j)) > threshold;
            tp += t && e;
            fp += !t && e;
            fn += t && !e;
        }
    }
    if (tp + fp + fn == 0) return 1.0;
    return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

double kl_divergence(const Matrix& true_omega, const Matrix& est_omega) {
    check_same_shape(true_omega, est_omega);
    Eigen::LLT<Matrix> lt(true_omega), le(est_omega);
    if (lt.info() != Eigen::Success || !is_positive_definite(true_omega))
        throw DomainError("true scale matrix is not positive definite");
    if (le.info() != Eigen::Success || !is_positive_definite(est_omega))
        throw DomainError("estimated scale matrix is not positive definite");
    const double m = static_cast<double>(true_omega.rows());
    const double trace = lt.solve(est_omega).trace();
    const double logdet_t = 2.0 * lt.matrixLLT().diagonal().array().log().sum();
    const double logdet_e = 2.0 * le.matrixLLT().diagonal().array().log().sum();
    return 0.5 * (trace - m - (logdet_e - logdet_t));
}

double frobenius_error(const Matrix& true_omega, const Matrix& est_omega) {
    check_same_shape(true_omega, est_omega);
    return (true_omega - est_omega).norm();
}

std::vector<std::string> design_names() { return {"dim2", "dim5", "dim12", "dim27"}; }

Design named_design(const std::string& name, double alpha, std::size_t n) {
    Design d;
    d.name = name;
    d.truth.alpha = alpha;
    if (name == "dim2") {
        d.truth.omega.resize(2, 2);
        d.truth.omega << 0.5, 0.9, 0.9, 2.0;
        d.n = 2000;
    } else if (name == "dim5") {
        d.truth.omega.resize(5, 5);
        d.truth.omega << 0.25, 0.25, 0.4, 0, 0,  //
            0.25, 0.5, 0.4, 0, 0,                //
            0.4, 0.4, 1, 0, 0,                   //
            0, 0, 0, 2, 2.55,                    //
            0, 0, 0, 2.55, 4;
        d.n = 2000;
    } else if (name == "dim12") {
        d.truth.omega = block_equicorrelated(3, 4, 0.5);
        d.n = 500;
    } else if (name == "dim27") {
        d.truth.omega = Matrix::Zero(27, 27);
        d.truth.omega.topLeftCorner(12, 12) = block_equicorrelated(3, 4, 0.5);
        d.truth.omega.bottomRightCorner(15, 15) = block_equicorrelated(3, 5, 0.5);
        d.n = 800;
    } else {
        throw DomainError("unknown design '" + name + "'");
    }
    d.truth.xi = Vector::Zero(d.truth.omega.rows());
    if (n != 0) d.n = n;
    d.truth.validate();
    return d;
}

const char* estimator_name(EstimatorKind k) { return k == EstimatorKind::plain ? "MMSQ" : "S-MMSQ"; }

namespace {

ReplicationRecord run_one(const ExperimentSpec& spec, const MmsqConfig& base, int index) {
    ReplicationRecord rec;
    rec.index = index;
    const EsdParams& truth = spec.design.truth;
    try {
        RngStream data_rng(spec.seed, static_cast<std::uint64_t>(index));
        const Matrix data = sample_esd(truth, spec.design.n, data_rng);
        MmsqConfig config = base;
        config.seed = mix64(spec.seed, static_cast<std::uint64_t>(index));
        if (spec.estimator == EstimatorKind::plain) {
            const EstimationResult r = estimate(data, config);
            rec.theta = r.theta;
            rec.std_errors = r.std_errors;
            rec.converged = r.converged;
        } else {
            SparseResult r;
            if (spec.lambda) {
                r = sparse_estimate(data, config, ScadParams{spec.scad_a, *spec.lambda});
            } else {
                const auto grid = default_lambda_grid(init_esd(data), spec.grid_points, spec.scad_a);
                r = tune_lambda(data, config, grid, spec.tune, 1).second;
            }
            rec.theta = r.theta;
            rec.std_errors = r.std_errors;
            rec.converged = r.converged;
            rec.lambda = r.lambda;
        }
        rec.frobenius = frobenius_error(truth.omega, rec.theta.omega);
        rec.f1 = f1_score(truth.omega, rec.theta.omega, spec.support_threshold);
        rec.kl = kl_divergence(truth.omega, rec.theta.omega);
        rec.ok = true;
    } catch (const std::exception& e) {
        rec.ok = false;
        rec.error = e.what();
    }
    return rec;
}

}  // namespace

ReplicationSummary run_experiment(const ExperimentSpec& spec, const MmsqConfig& config) {
    if (spec.replications < 2) throw DomainError("an experiment needs at least 2 replications");
    if (spec.design.n == 0) throw DomainError("design sample size must be positive");
    spec.design.truth.validate();
    config.validate();

    ReplicationSummary s;
    s.design = spec.design.name;
    s.estimator = spec.estimator;
    s.records.resize(static_cast<std::size_t>(spec.replications));
    parallel_for(s.records.size(), spec.workers,
                 [&](std::size_t i) { s.records[i] = run_one(spec, config, static_cast<int>(i)); });

    const int m = spec.design.truth.dim();
    const Vector truth = to_natural(spec.design.truth);
    const auto names = parameter_names(m);
    std::vector<const ReplicationRecord*> ok;
    for (const auto& r : s.records) {
        if (r.ok)
            ok.push_back(&r);
        else
            ++s.failures;
    }
    for (Eigen::Index q = 0; q < truth.size(); ++q) {
        ParameterRow row;
        row.name = names[static_cast<std::size_t>(q)];
        row.truth = truth(q);
        std::vector<double> est;
        int covered = 0, with_se = 0;
        for (const auto* r : ok) {
            const double v = to_natural(r->theta)(q);
            est.push_back(v);
            const double se = r->std_errors.size() > q ? r->std_errors(q) : std::numeric_limits<double>::quiet_NaN();
            if (std::isfinite(se)) {
                ++with_se;
                covered += std::abs(v - row.truth) <= 1.96 * se;
            }
        }
        const MetricSummary ms = mean_sd(est);
        row.bias = ms.mean - row.truth;
        row.ssd = ms.sd;
        row.ecp = with_se > 0 ? static_cast<double>(covered) / with_se : std::numeric_limits<double>::quiet_NaN();
        s.rows.push_back(row);
    }
    std::vector<double> fro, f1, kl;
    for (const auto* r : ok) {
        fro.push_back(r->frobenius);
        f1.push_back(r->f1);
        kl.push_back(r->kl);
    }
    s.frobenius = mean_sd(fro);
    s.f1 = mean_sd(f1);
    s.kl = mean_sd(kl);
    return s;
}

void write_parameter_table(std::ostream& out, const ReplicationSummary& s) {
    out << "Par.,True,BIAS,SSD,ECP\n";
    for (const auto& r : s.rows)
        out << r.name << ',' << fmt(r.truth) << ',' << fmt(r.bias) << ',' << fmt(r.ssd) << ',' << fmt(r.ecp) << '\n';
}

void write_metric_table(std::ostream& out, const ReplicationSummary& s) {
    auto cell = [](const MetricSummary& m) { return fmt(m.mean) + " (" + fmt(m.sd) + ")"; };
    out << "method,Frobenius,F1,KL\n";
    out << estimator_name(s.estimator) << ',' << cell(s.frobenius) << ',' << cell(s.f1) << ',' << cell(s.kl) << '\n';
}

void write_records(std::ostream& out, const ReplicationSummary& s) {
    if (s.rows.empty()) return;
    out << "replication,ok,converged,lambda,frobenius,f1,kl";
    for (const auto& r : s.rows) out << ',' << r.name << ",se_" << r.name;
    out << ",error\n";
    for (const auto& r : s.records) {
        out << r.index << ',' << (r.ok ? 1 : 0) << ',' << (r.converged ? 1 : 0) << ',' << fmt(r.lambda) << ','
            << fmt(r.frobenius) << ',' << fmt(r.f1) << ',' << fmt(r.kl);
        const Vector x = r.ok ? to_natural(r.theta) : Vector::Constant(static_cast<Eigen::Index>(s.rows.size()),
                                                                        std::numeric_limits<double>::quiet_NaN());
        for (Eigen::Index q = 0; q < x.size(); ++q) {
            const double se = r.std_errors.size() > q ? r.std_errors(q) : std::numeric_limits<double>::quiet_NaN();
            out << ',' << fmt(x(q)) << ',' << fmt(se);
        }
        std::string err = r.error;
        for (char& c : err)
            if (c == ',' || c == '\n') c = ';';
        out << ',' << err << '\n';
    }
}

}  // namespace msq
