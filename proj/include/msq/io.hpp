#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "msq/esd.hpp"
#include "msq/metrics.hpp"
#include "msq/mmsq.hpp"
#include "msq/risk.hpp"
#include "msq/sparse.hpp"

namespace msq {

using Json = nlohmann::ordered_json;

struct Panel {
    Matrix data;
    std::vector<std::string> labels;  // empty when the file has no header row
};

// Comma-separated numeric table. A first row containing any non-numeric
// field is taken as the header. Throws IoError for unreadable files and
// DomainError for ragged or non-numeric content.
Panel read_csv(const std::string& path);
Panel parse_csv(std::istream& in, const std::string& source);

// Rows of full-precision numbers, no header.
void write_matrix_csv(std::ostream& out, const Matrix& m);

// Formats a double with the shortest round-trip representation.
std::string format_double(double v);

Json to_json(const EsdParams& p);
// Reads {"alpha", "xi", "omega"}; a missing or malformed field is reported
// by name as a DomainError.
EsdParams esd_params_from_json(const Json& j, const std::string& where = "model");

Json to_json(const EstimationResult& r);
Json to_json(const SparseResult& r, const std::vector<std::string>& names);
Json to_json(const RiskNetwork& net);
Json to_json(const ReplicationSummary& s);

Json read_json_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace msq
