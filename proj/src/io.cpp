#include "msq/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "msq/errors.hpp"

namespace msq {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

bool parse_number(const std::string& s, double& v) {
    if (s.empty()) return false;
    const char* b = s.data();
    const char* e = s.data() + s.size();
    if (*b == '+') ++b;
    const auto [ptr, ec] = std::from_chars(b, e, v);
    return ec == std::errc() && ptr == e;
}

Json vector_json(const Vector& v) {
    Json a = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(std::isfinite(v(i)) ? Json(v(i)) : Json(nullptr));
    return a;
}

Json matrix_json(const Matrix& m) {
    Json a = Json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) a.push_back(vector_json(m.row(i).transpose()));
    return a;
}

double number_field(const Json& j, const std::string& where) {
    if (!j.is_number()) throw DomainError("field '" + where + "' must be a number");
    return j.get<double>();
}

}  // namespace

Panel parse_csv(std::istream& in, const std::string& source) {
    Panel p;
    std::string line;
    std::vector<std::vector<double>> rows;
    std::size_t line_no = 0;
    std::size_t width = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto cells = split(line);
        std::vector<double> row(cells.size());
        bool numeric = true;
        for (std::size_t c = 0; c < cells.size(); ++c) numeric = numeric && parse_number(cells[c], row[c]);
        if (!numeric) {
            if (rows.empty() && p.labels.empty()) {
                p.labels = cells;
                width = cells.size();
                continue;
            }
            throw DomainError(source + ":" + std::to_string(line_no) + ": non-numeric field");
        }
        if (width == 0) width = row.size();
        if (row.size() != width)
            throw DomainError(source + ":" + std::to_string(line_no) + ": expected " + std::to_string(width) +
                              " fields, found " + std::to_string(row.size()));
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw DomainError(source + ": no data rows");
    p.data.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t c = 0; c < width; ++c)
            p.data(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i][c];
    return p;
}

Panel read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    return parse_csv(in, path);
}

std::string format_double(double v) {
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ec == std::errc() ? ptr : buf);
}

void write_matrix_csv(std::ostream& out, const Matrix& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            if (c) out << ',';
            out << format_double(m(i, c));
        }
        out << '\n';
    }
}

Json to_json(const EsdParams& p) {
    Json j;
    j["alpha"] = p.alpha;
    j["xi"] = vector_json(p.xi);
    j["omega"] = matrix_json(p.omega);
    return j;
}

EsdParams esd_params_from_json(const Json& j, const std::string& where) {
    if (!j.is_object()) throw DomainError("'" + where + "' must be an object");
    for (const char* key : {"alpha", "xi", "omega"})
        if (!j.contains(key)) throw DomainError("missing field '" + where + "." + key + "'");
    EsdParams p;
    p.alpha = number_field(j["alpha"], where + ".alpha");
    const Json& xi = j["xi"];
    if (!xi.is_array() || xi.empty()) throw DomainError("field '" + where + ".xi' must be a nonempty array");
    p.xi.resize(static_cast<Eigen::Index>(xi.size()));
    for (std::size_t i = 0; i < xi.size(); ++i)
        p.xi(static_cast<Eigen::Index>(i)) = number_field(xi[i], where + ".xi[" + std::to_string(i) + "]");
    const Json& om = j["omega"];
    if (!om.is_array() || om.size() != xi.size())
        throw DomainError("field '" + where + ".omega' must be a " + std::to_string(xi.size()) + "x" +
                          std::to_string(xi.size()) + " array");
    p.omega.resize(p.xi.size(), p.xi.size());
    for (std::size_t r = 0; r < om.size(); ++r) {
        if (!om[r].is_array() || om[r].size() != xi.size())
            throw DomainError("field '" + where + ".omega' row " + std::to_string(r) + " has the wrong length");
        for (std::size_t c = 0; c < om[r].size(); ++c)
            p.omega(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                number_field(om[r][c], where + ".omega[" + std::to_string(r) + "][" + std::to_string(c) + "]");
    }
    p.validate();
    return p;
}

Json to_json(const EstimationResult& r) {
    Json j;
    j["theta"] = to_json(r.theta);
    j["parameter_names"] = r.parameter_names;
    j["estimates"] = vector_json(to_natural(r.theta));
    j["std_errors"] = vector_json(r.std_errors);
    j["covariance"] = matrix_json(r.covariance);
    if (!r.covariance_error.empty()) j["covariance_error"] = r.covariance_error;
    j["objective"] = r.objective;
    j["stage1_objective"] = r.stage1_objective;
    j["weight_stage"] = weight_stage_name(r.weight_stage);
    j["converged"] = r.converged;
    j["evaluations"] = r.evaluations;
    j["n"] = r.n;
    j["R"] = r.R;
    j["init"] = to_json(r.init);
    Json dirs = Json::array();
    for (std::size_t k = 0; k < r.directions.size(); ++k) dirs.push_back(vector_json(r.directions.vectors[k]));
    j["directions"] = dirs;
    j["hat_phi"] = vector_json(r.hat_phi.values);
    return j;
}

Json to_json(const SparseResult& r, const std::vector<std::string>& names) {
    Json j;
    j["theta"] = to_json(r.theta);
    j["parameter_names"] = names;
    j["estimates"] = vector_json(to_natural(r.theta));
    j["std_errors"] = vector_json(r.std_errors);
    j["covariance"] = matrix_json(r.covariance);
    if (!r.covariance_error.empty()) j["covariance_error"] = r.covariance_error;
    j["lambda"] = r.lambda;
    j["a"] = r.a;
    j["epsilon"] = r.epsilon;
    j["objective"] = r.objective;
    j["sweeps"] = r.sweeps;
    j["converged"] = r.converged;
    j["pd_repairs"] = r.pd_repairs;
    Json active = Json::array();
    for (auto [a, b] : r.active_set) active.push_back({a + 1, b + 1});
    j["active_set"] = active;
    Json path = Json::array();
    for (const auto& p : r.path) {
        Json e;
        e["lambda"] = p.lambda;
        e["objective"] = std::isfinite(p.objective) ? Json(p.objective) : Json(nullptr);
        e["active"] = p.active;
        e["validation"] = std::isfinite(p.validation) ? Json(p.validation) : Json(nullptr);
        path.push_back(e);
    }
    j["path"] = path;
    return j;
}

Json to_json(const RiskNetwork& net) {
    Json j;
    j["nodes"] = net.nodes;
    Json adj = Json::array();
    for (const auto& row : net.adjacency) {
        Json r = Json::array();
        for (bool b : row) r.push_back(b ? 1 : 0);
        adj.push_back(r);
    }
    j["adjacency"] = adj;
    j["degree"] = net.degree;
    Json pairs = Json::array();
    for (const auto& p : net.pairs) {
        Json e;
        e["j"] = net.nodes[static_cast<std::size_t>(p.j)];
        e["k"] = net.nodes[static_cast<std::size_t>(p.k)];
        e["ok"] = p.ok;
        if (p.ok) {
            e["netcovar_j"] = p.test.netcovar_j;
            e["netcovar_k"] = p.test.netcovar_k;
            e["difference"] = p.test.difference;
            e["variance"] = p.test.variance;
            e["z"] = p.test.z;
            e["p_value"] = p.test.p_value;
            e["variance_floored"] = p.test.variance_floored;
        } else {
            e["error"] = p.error;
        }
        pairs.push_back(e);
    }
    j["pairs"] = pairs;
    j["total_edges"] = net.edges;
    j["pairs_tested"] = net.tested;
    j["edge_percent"] = 100.0 * net.edge_share();
    return j;
}

Json to_json(const ReplicationSummary& s) {
    Json j;
    j["design"] = s.design;
    j["estimator"] = estimator_name(s.estimator);
    j["replications"] = s.records.size();
    j["failures"] = s.failures;
    Json rows = Json::array();
    for (const auto& r : s.rows) {
        Json e;
        e["parameter"] = r.name;
        e["true"] = r.truth;
        e["bias"] = std::isfinite(r.bias) ? Json(r.bias) : Json(nullptr);
        e["ssd"] = std::isfinite(r.ssd) ? Json(r.ssd) : Json(nullptr);
        e["ecp"] = std::isfinite(r.ecp) ? Json(r.ecp) : Json(nullptr);
        rows.push_back(e);
    }
    j["parameters"] = rows;
    auto ms = [](const MetricSummary& m) {
        Json e;
        e["mean"] = std::isfinite(m.mean) ? Json(m.mean) : Json(nullptr);
        e["sd"] = std::isfinite(m.sd) ? Json(m.sd) : Json(nullptr);
        return e;
    };
    j["frobenius"] = ms(s.frobenius);
    j["f1"] = ms(s.f1);
    j["kl"] = ms(s.kl);
    Json errors = Json::array();
    for (const auto& r : s.records)
        if (!r.ok) errors.push_back({{"replication", r.index}, {"error", r.error}});
    j["failed_replications"] = errors;
    return j;
}

Json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    try {
        return Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw DomainError("'" + path + "' is not valid JSON: " + e.what());
    }
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << content;
    if (!out) throw IoError("failed writing '" + path + "'");
}

}  // namespace msq
