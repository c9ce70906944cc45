// msq: command-line driver for simulation, estimation, benchmarking and
// risk-network export.

#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "msq/errors.hpp"
#include "msq/esd.hpp"
#include "msq/io.hpp"
#include "msq/metrics.hpp"
#include "msq/mmsq.hpp"
#include "msq/risk.hpp"
#include "msq/rng.hpp"
#include "msq/sparse.hpp"

namespace {

using namespace msq;

constexpr int kExitValidation = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitIo = 4;

// Every option a command can consume. Values start from the defaults of the
// library configs, are overridden by the JSON config file, and finally by
// explicit command-line flags.
struct RunConfig {
    std::string input;
    std::string output;
    std::uint64_t seed = 1;
    int workers = 1;

    std::optional<EsdParams> model;
    std::size_t n = 0;

    std::string design;
    double alpha = 1.7;
    int replications = 100;
    std::string estimator = "plain";

    MmsqConfig mmsq;

    std::optional<double> lambda;
    std::vector<double> grid;
    std::size_t grid_points = 20;
    double scad_a = 3.7;
    TuneMethod tune;

    RiskConfig risk;
};

TuneMethod::Kind parse_method(const std::string& s) {
    if (s == "kfold") return TuneMethod::Kind::kfold;
    if (s == "validation") return TuneMethod::Kind::validation;
    throw DomainError("unknown tuning method '" + s + "' (expected kfold or validation)");
}

std::vector<double> parse_grid(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(cell, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != cell.size()) throw DomainError("--grid entry '" + cell + "' is not a number");
        out.push_back(v);
    }
    if (out.empty()) throw DomainError("--grid is empty");
    return out;
}

template <class T>
void take(const Json& j, const char* key, T& dst) {
    if (!j.contains(key)) return;
    try {
        dst = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw DomainError(std::string("config field '") + key + "' has the wrong type");
    }
}

void apply_json(const Json& j, RunConfig& rc) {
    if (!j.is_object()) throw DomainError("config must be a JSON object");
    take(j, "input", rc.input);
    take(j, "output", rc.output);
    take(j, "seed", rc.seed);
    take(j, "workers", rc.workers);
    if (j.contains("model")) rc.model = esd_params_from_json(j.at("model"), "model");
    take(j, "n", rc.n);
    take(j, "design", rc.design);
    take(j, "alpha", rc.alpha);
    take(j, "replications", rc.replications);
    take(j, "estimator", rc.estimator);
    if (j.contains("lambda")) {
        double l = 0.0;
        take(j, "lambda", l);
        rc.lambda = l;
    }
    take(j, "grid", rc.grid);
    take(j, "grid_points", rc.grid_points);
    take(j, "scad_a", rc.scad_a);
    if (j.contains("method")) {
        std::string m;
        take(j, "method", m);
        rc.tune.kind = parse_method(m);
    }
    take(j, "folds", rc.tune.folds);
    if (j.contains("mmsq")) {
        const Json& m = j.at("mmsq");
        take(m, "R", rc.mmsq.R);
        take(m, "n_sim", rc.mmsq.n_sim);
        take(m, "fd_step", rc.mmsq.fd_step);
        take(m, "eta_mc", rc.mmsq.eta_mc);
        take(m, "ridge", rc.mmsq.ridge);
        take(m, "eta_corr_floor", rc.mmsq.eta_corr_floor);
        take(m, "restarts", rc.mmsq.optimizer.restarts);
        take(m, "max_iter", rc.mmsq.optimizer.max_iter);
        if (m.contains("taus")) {
            std::vector<double> taus;
            take(m, "taus", taus);
            rc.mmsq.taus = TauGrid(taus);
        }
    }
    if (j.contains("risk")) {
        const Json& r = j.at("risk");
        take(r, "tau", rc.risk.tau);
        take(r, "mc_size", rc.risk.mc_size);
        take(r, "fd_step", rc.risk.fd_step);
        take(r, "invert_edges", rc.risk.invert_edges);
    }
}

std::string require_path(const std::string& path, const char* flag) {
    if (path.empty()) throw DomainError(std::string("missing ") + flag);
    return path;
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

std::string stringify(const std::function<void(std::ostream&)>& writer) {
    std::ostringstream os;
    writer(os);
    return os.str();
}

void warn(const std::string& msg) { std::cerr << "warning: " << msg << "\n"; }

void print_parameter_table(const std::vector<std::string>& names, const Vector& est, const Vector& se) {
    std::printf("%-14s %14s %14s\n", "parameter", "estimate", "std.err");
    for (std::size_t i = 0; i < names.size(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        const double s = k < se.size() ? se(k) : std::nan("");
        if (std::isfinite(s))
            std::printf("%-14s %14.6f %14.6f\n", names[i].c_str(), est(k), s);
        else
            std::printf("%-14s %14.6f %14s\n", names[i].c_str(), est(k), "NA");
    }
}

Matrix load_panel(const RunConfig& rc, std::vector<std::string>* labels, bool header_required) {
    Panel p = read_csv(require_path(rc.input, "--input"));
    if (header_required && p.labels.empty())
        throw DomainError("'" + rc.input + "' needs a header row of labels");
    if (labels) *labels = p.labels;
    return p.data;
}

MmsqConfig mmsq_config(const RunConfig& rc) {
    MmsqConfig c = rc.mmsq;
    c.seed = rc.seed;
    c.validate();
    return c;
}

std::vector<ScadParams> lambda_grid(const RunConfig& rc, const Matrix& data) {
    if (!rc.grid.empty()) {
        std::vector<ScadParams> g;
        for (double l : rc.grid) {
            ScadParams p{rc.scad_a, l};
            p.validate();
            g.push_back(p);
        }
        return g;
    }
    return default_lambda_grid(init_esd(data), rc.grid_points, rc.scad_a);
}

void report_estimation(const EstimationResult& r) {
    if (!r.converged) warn("optimizer did not converge");
    if (!r.covariance_error.empty()) warn("standard errors unavailable: " + r.covariance_error);
}

void report_sparse(const SparseResult& r) {
    if (!r.converged) warn("penalized solver did not converge");
    if (r.pd_repairs > 0) warn(std::to_string(r.pd_repairs) + " eigenvalue repairs during the penalized fit");
    if (!r.covariance_error.empty()) warn("standard errors unavailable: " + r.covariance_error);
}

int cmd_simulate(const RunConfig& rc) {
    EsdParams model;
    if (rc.model)
        model = *rc.model;
    else if (!rc.design.empty())
        model = named_design(rc.design, rc.alpha).truth;
    else
        throw DomainError("simulate needs a 'model' in --config or a --design");
    model.validate();
    const std::size_t n = rc.n;
    if (n == 0) throw DomainError("sample size n must be positive");
    RngStream rng(rc.seed, streams::data);
    const Matrix x = sample_esd(model, n, rng);
    write_text_file(require_path(rc.output, "--output"), stringify([&](std::ostream& o) { write_matrix_csv(o, x); }));
    std::printf("wrote %zu x %d draws to %s\n", n, model.dim(), rc.output.c_str());
    return 0;
}

int cmd_estimate(const RunConfig& rc) {
    const Matrix data = load_panel(rc, nullptr, false);
    const EstimationResult r = estimate(data, mmsq_config(rc));
    report_estimation(r);
    write_text_file(require_path(rc.output, "--output"), dump(to_json(r)));
    print_parameter_table(r.parameter_names, to_natural(r.theta), r.std_errors);
    std::printf("objective %.6g  converged %s\n", r.objective, r.converged ? "yes" : "no");
    return 0;
}

int cmd_sparse(const RunConfig& rc) {
    if (!rc.lambda) throw DomainError("sparse needs --lambda");
    const Matrix data = load_panel(rc, nullptr, false);
    ScadParams p{rc.scad_a, *rc.lambda};
    p.validate();
    const MmsqConfig cfg = mmsq_config(rc);
    const SparseResult r = sparse_estimate(data, cfg, p);
    report_sparse(r);
    const auto names = parameter_names(r.theta.dim());
    write_text_file(require_path(rc.output, "--output"), dump(to_json(r, names)));
    print_parameter_table(names, to_natural(r.theta), r.std_errors);
    std::printf("lambda %.6g  active off-diagonals %zu  converged %s\n", r.lambda, r.active_set.size(),
                r.converged ? "yes" : "no");
    return 0;
}

int cmd_tune(const RunConfig& rc) {
    const Matrix data = load_panel(rc, nullptr, false);
    const MmsqConfig cfg = mmsq_config(rc);
    const auto grid = lambda_grid(rc, data);
    const auto [lambda, r] = tune_lambda(data, cfg, grid, rc.tune, rc.workers);
    report_sparse(r);
    const auto names = parameter_names(r.theta.dim());
    Json j = to_json(r, names);
    j["selected_lambda"] = lambda;
    j["method"] = rc.tune.kind == TuneMethod::Kind::kfold ? "kfold" : "validation";
    write_text_file(require_path(rc.output, "--output"), dump(j));
    std::printf("%-14s %14s %8s %14s\n", "lambda", "objective", "active", "score");
    for (const auto& pt : r.path)
        std::printf("%-14.6g %14.6g %8zu %14.6g\n", pt.lambda, pt.objective, pt.active, pt.validation);
    std::printf("selected lambda %.6g\n", lambda);
    return 0;
}

int cmd_benchmark(const RunConfig& rc) {
    ExperimentSpec spec;
    if (rc.model) {
        if (rc.n == 0) throw DomainError("an inline benchmark design needs n > 0");
        spec.design = Design{"inline", *rc.model, rc.n};
        spec.design.truth.validate();
    } else {
        if (rc.design.empty()) throw DomainError("benchmark needs --design or a 'model' in --config");
        spec.design = named_design(rc.design, rc.alpha, rc.n);
    }
    if (rc.replications < 1) throw DomainError("--replications must be at least 1");
    spec.replications = rc.replications;
    if (rc.estimator == "plain")
        spec.estimator = EstimatorKind::plain;
    else if (rc.estimator == "sparse")
        spec.estimator = EstimatorKind::sparse;
    else
        throw DomainError("unknown estimator '" + rc.estimator + "' (expected plain or sparse)");
    spec.seed = rc.seed;
    spec.lambda = rc.lambda;
    spec.tune = rc.tune;
    spec.grid_points = rc.grid_points;
    spec.scad_a = rc.scad_a;
    spec.workers = rc.workers;
    MmsqConfig cfg = rc.mmsq;
    cfg.validate();

    const ReplicationSummary s = run_experiment(spec, cfg);
    const std::string out = require_path(rc.output, "--output");
    const std::string table = stringify([&](std::ostream& o) {
        if (spec.estimator == EstimatorKind::plain)
            write_parameter_table(o, s);
        else
            write_metric_table(o, s);
    });
    write_text_file(out, table);
    write_text_file(out + ".records.csv", stringify([&](std::ostream& o) { write_records(o, s); }));
    std::fputs(table.c_str(), stdout);
    if (s.failures > 0) {
        warn(std::to_string(s.failures) + " of " + std::to_string(s.records.size()) + " replications failed");
        for (const auto& r : s.records)
            if (!r.ok) std::cerr << "  replication " << r.index << ": " << r.error << "\n";
    }
    if (s.failures == s.records.size()) throw NotPositiveDefinite("every replication failed");
    return 0;
}

int cmd_network(const RunConfig& rc) {
    std::vector<std::string> labels;
    const Matrix data = load_panel(rc, &labels, true);
    if (data.cols() < 2) throw DomainError("network input needs at least two columns");
    const MmsqConfig cfg = mmsq_config(rc);

    PortfolioModel model;
    model.labels = labels;
    std::string cov_error;
    if (rc.lambda) {
        ScadParams p{rc.scad_a, *rc.lambda};
        p.validate();
        const SparseResult r = sparse_estimate(data, cfg, p);
        report_sparse(r);
        model.params = r.theta;
        model.param_cov = r.covariance;
        cov_error = r.covariance_error;
    } else {
        const EstimationResult r = estimate(data, cfg);
        report_estimation(r);
        model.params = r.theta;
        model.param_cov = r.covariance;
        cov_error = r.covariance_error;
    }
    if (!cov_error.empty()) throw NotPositiveDefinite("fitted model has no parameter covariance: " + cov_error);

    RiskConfig risk = rc.risk;
    risk.seed = rc.seed;
    risk.workers = rc.workers;
    risk.validate();
    const RiskNetwork net = build_network(model, risk);

    const std::string out = require_path(rc.output, "--output");
    write_text_file(out + ".dot", stringify([&](std::ostream& o) { write_network_dot(o, net); }));
    Json j = to_json(net);
    j["model"] = to_json(model.params);
    j["tau"] = risk.tau;
    j["mc_size"] = risk.mc_size;
    write_text_file(out + ".json", dump(j));
    write_network_summary(std::cout, net);
    for (const auto& p : net.pairs)
        if (!p.ok) warn("pair " + labels[p.j] + "/" + labels[p.k] + ": " + p.error);
    return 0;
}

int exit_code(ErrorKind k) {
    switch (k) {
        case ErrorKind::validation: return kExitValidation;
        case ErrorKind::numeric: return kExitNumeric;
        case ErrorKind::io: return kExitIo;
    }
    return kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Simulated-quantile estimation for elliptical stable laws"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all");

    std::string config_path, input, output, design, estimator, method, grid;
    std::uint64_t seed = 0;
    int workers = 0, replications = 0, R = 0, folds = 0;
    double lambda = 0.0, tau = 0.0, alpha = 0.0, scad_a = 0.0;
    std::size_t mc_size = 0, n = 0, grid_points = 0;
    bool invert_edges = false;

    struct Command {
        const char* name;
        const char* help;
        int (*run)(const RunConfig&);
    };
    const std::vector<Command> commands = {
        {"simulate", "Write ESD draws as a headerless CSV", cmd_simulate},
        {"estimate", "Fit an ESD model by simulated quantiles", cmd_estimate},
        {"sparse", "Fit with the SCAD penalty at a fixed lambda", cmd_sparse},
        {"tune", "Select lambda over a grid and fit", cmd_tune},
        {"benchmark", "Monte Carlo replication study on a design", cmd_benchmark},
        {"network", "Fit a returns panel and export the NetCoVaR dominance network", cmd_network},
    };

    std::vector<CLI::App*> subs;
    for (const auto& c : commands) {
        CLI::App* s = app.add_subcommand(c.name, c.help);
        s->add_option("--config", config_path, "JSON configuration file");
        s->add_option("--input", input, "Input CSV");
        s->add_option("--output", output, "Output path");
        s->add_option("--seed", seed, "Random seed");
        s->add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);
        s->add_option("--design", design, "Named design (dim2, dim5, dim12, dim27)");
        s->add_option("--alpha", alpha, "Tail index of a named design");
        s->add_option("--n", n, "Sample size");
        s->add_option("--replications", replications, "Monte Carlo replications");
        s->add_option("--estimator", estimator, "plain or sparse");
        s->add_option("--lambda", lambda, "SCAD tuning parameter");
        s->add_option("--scad-a", scad_a, "SCAD shape parameter a");
        s->add_option("--grid", grid, "Comma-separated lambda grid");
        s->add_option("--grid-points", grid_points, "Size of the default lambda grid");
        s->add_option("--method", method, "Tuning method: kfold or validation");
        s->add_option("--folds", folds, "Number of cross-validation folds");
        s->add_option("--R", R, "Simulated replicates per objective evaluation");
        s->add_option("--tau", tau, "Risk level");
        s->add_option("--mc-size", mc_size, "Monte Carlo size for risk measures");
        s->add_flag("--invert-edges", invert_edges, "Draw an edge when equality is rejected");
        subs.push_back(s);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitValidation;
    }

    try {
        std::size_t which = 0;
        while (!subs[which]->parsed()) ++which;
        CLI::App* s = subs[which];

        RunConfig rc;
        if (!config_path.empty()) apply_json(read_json_file(config_path), rc);
        auto given = [&](const char* flag) { return s->count(flag) > 0; };
        if (given("--input")) rc.input = input;
        if (given("--output")) rc.output = output;
        if (given("--seed")) rc.seed = seed;
        if (given("--workers")) rc.workers = workers;
        if (given("--design")) rc.design = design;
        if (given("--alpha")) rc.alpha = alpha;
        if (given("--n")) rc.n = n;
        if (given("--replications")) rc.replications = replications;
        if (given("--estimator")) rc.estimator = estimator;
        if (given("--lambda")) rc.lambda = lambda;
        if (given("--scad-a")) rc.scad_a = scad_a;
        if (given("--grid")) rc.grid = parse_grid(grid);
        if (given("--grid-points")) rc.grid_points = grid_points;
        if (given("--method")) rc.tune.kind = parse_method(method);
        if (given("--folds")) rc.tune.folds = folds;
        if (given("--R")) rc.mmsq.R = R;
        if (given("--tau")) rc.risk.tau = tau;
        if (given("--mc-size")) rc.risk.mc_size = mc_size;
        if (given("--invert-edges")) rc.risk.invert_edges = invert_edges;
        if (rc.workers < 1) throw DomainError("workers must be at least 1");

        return commands[which].run(rc);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    }
}
