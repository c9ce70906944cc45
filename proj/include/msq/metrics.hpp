#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "msq/esd.hpp"
#include "msq/mmsq.hpp"
#include "msq/sparse.hpp"

namespace msq {

// Off-diagonal support agreement, 2TP / (2TP + FP + FN). Nonzero means
// |entry| > threshold (0 by default, i.e. exact zeros only). Both supports
// empty gives 1.
double f1_score(const Matrix& true_omega, const Matrix& est_omega, double threshold = 0.0);

// Gaussian KL divergence between scale matrices,
// (tr(O^{-1} E) - m - log(|E| / |O|)) / 2.
double kl_divergence(const Matrix& true_omega, const Matrix& est_omega);

double frobenius_error(const Matrix& true_omega, const Matrix& est_omega);

struct Design {
    std::string name;
    EsdParams truth;
    std::size_t n = 0;
};

// Shipped designs: "dim2", "dim5", "dim12", "dim27". The dim12 and dim27
// scale matrices are block-sparse stand-ins (see README). A zero `n` picks
// the design's default sample size.
Design named_design(const std::string& name, double alpha, std::size_t n = 0);
std::vector<std::string> design_names();

enum class EstimatorKind { plain, sparse };
const char* estimator_name(EstimatorKind k);

struct ExperimentSpec {
    Design design;
    int replications = 100;
    EstimatorKind estimator = EstimatorKind::plain;
    std::uint64_t seed = 1;
    std::optional<double> lambda;  // sparse only; tuned when absent
    TuneMethod tune;
    std::size_t grid_points = 20;
    double scad_a = 3.7;
    double support_threshold = 0.0;  // F1 support rule for dense estimates
    int workers = 1;
};

struct ReplicationRecord {
    int index = 0;
    bool ok = false;
    std::string error;
    EsdParams theta;
    Vector std_errors;  // natural coordinates; NaN when unavailable
    bool converged = false;
    double lambda = 0.0;
    double frobenius = 0.0;
    double f1 = 0.0;
    double kl = 0.0;
};

struct ParameterRow {
    std::string name;
    double truth = 0.0;
    double bias = 0.0;
    double ssd = 0.0;
    double ecp = 0.0;  // NaN when no replication produced a standard error
};

struct MetricSummary {
    double mean = 0.0;
    double sd = 0.0;
};

struct ReplicationSummary {
    std::string design;
    EstimatorKind estimator = EstimatorKind::plain;
    std::vector<ParameterRow> rows;
    std::vector<ReplicationRecord> records;
    std::size_t failures = 0;
    MetricSummary frobenius, f1, kl;
};

// Replication i draws its sample from RngStream(spec.seed, i) and runs the
// estimator with seed mix64(spec.seed, i). Failed replications are kept in
// `records` and excluded from every summary statistic.
ReplicationSummary run_experiment(const ExperimentSpec& spec, const MmsqConfig& config);

// CSV tables: "Par.,True,BIAS,SSD,ECP" and "method,Frobenius,F1,KL".
void write_parameter_table(std::ostream& out, const ReplicationSummary& s);
void write_metric_table(std::ostream& out, const ReplicationSummary& s);
void write_records(std::ostream& out, const ReplicationSummary& s);

}  // namespace msq
