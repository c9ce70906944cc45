#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "msq/esd.hpp"

namespace msq {

struct PortfolioModel {
    EsdParams params;
    std::vector<std::string> labels;
    Matrix param_cov;  // natural coordinates (alpha, xi, upper triangle of omega)

    int dim() const { return params.dim(); }
    void validate() const;
};

struct RiskConfig {
    double tau = 0.05;
    std::size_t mc_size = 2000000;
    std::uint64_t seed = 20240901;
    double fd_step = 1e-3;
    bool invert_edges = false;  // edge when equality IS rejected
    int workers = 1;

    void validate() const;
};

// tau-quantile of the marginal law of Y_j from mc_size univariate draws.
double var_individual(const PortfolioModel& model, int j, const RiskConfig& cfg);

// Conditional tau-quantile of S = sum_i Y_i given Y_j <= VaR_j.
double netcovar(const PortfolioModel& model, int j, const RiskConfig& cfg);

struct DominanceResult {
    double netcovar_j = 0.0;
    double netcovar_k = 0.0;
    double difference = 0.0;
    double variance = 0.0;
    double z = 0.0;
    double p_value = 1.0;
    bool variance_floored = false;
};

DominanceResult dominance_test(const PortfolioModel& model, int j, int k, const RiskConfig& cfg);

struct PairStat {
    int j = 0;
    int k = 0;
    DominanceResult test;
    bool ok = true;
    std::string error;
};

struct RiskNetwork {
    std::vector<std::string> nodes;
    std::vector<PairStat> pairs;  // (j, k) with j < k, row-major order
    std::vector<std::vector<bool>> adjacency;
    std::vector<int> degree;
    std::size_t edges = 0;
    std::size_t tested = 0;  // pairs that produced a test

    double edge_share() const;
};

RiskNetwork build_network(const PortfolioModel& model, const RiskConfig& cfg);

void write_network_dot(std::ostream& out, const RiskNetwork& net);
void write_network_summary(std::ostream& out, const RiskNetwork& net);

// Shared-draw engine behind netcovar and dominance_test. All institutions use
// the same underlying uniforms, exponentials and normals, so differences and
// finite-difference quotients are taken under common random numbers.
class NetCovarEngine {
public:
    NetCovarEngine(std::size_t mc_size, std::uint64_t seed, double tau);

    // NetCoVaR of institution j.
    double value(const EsdParams& params, int j) const;
    // Gradient of value() with respect to the natural coordinates.
    Vector gradient(const EsdParams& params, int j, double fd_step) const;

private:
    struct Reduced {
        double alpha, loc_j, loc_s, var_j, cov_js, var_s;
    };
    static Reduced reduce(const EsdParams& p, int j);
    double evaluate(const Reduced& r) const;
    std::shared_ptr<const std::vector<double>> root(double alpha) const;

    std::size_t n_;
    double tau_;
    std::vector<double> theta_, log_sin_theta_, log_w_, z1_, z2_;
    mutable std::mutex mutex_;
    mutable std::map<double, std::shared_ptr<const std::vector<double>>> roots_;
};

}  // namespace msq
