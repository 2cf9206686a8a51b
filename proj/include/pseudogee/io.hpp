#pragma once

#include <iosfwd>
#include <string>

#include <json.hpp>

#include "pseudogee/diagnostics.hpp"
#include "pseudogee/estimator.hpp"
#include "pseudogee/model.hpp"
#include "pseudogee/simulator.hpp"

namespace pgee::io {

using Json = nlohmann::json;

// -------------------------------------------------------------------------
// CSV: long format, header `subject,time,y,x1,...,xp`, one row per observation.
// -------------------------------------------------------------------------

struct ParsedDataset {
    LongitudinalDataset data;
    std::vector<std::string> subject_ids;  // first-appearance order
};

ParsedDataset parse_dataset_csv(std::istream& in);
ParsedDataset parse_dataset_csv_file(const std::string& path);

/// Writes times 1..m per subject, numbers with 17 significant digits. Subject
/// ids default to 1..n.
void write_dataset_csv(std::ostream& out, const LongitudinalDataset& data,
                       const std::vector<std::string>& subject_ids = {});

// -------------------------------------------------------------------------
// JSON
// -------------------------------------------------------------------------

/// Sorted keys, doubles with 17 significant digits, non-finite as null,
/// newline-terminated.
std::string dump(const Json& j);

Json to_json(const Matrix& m);
Json to_json(const SymMatrix& m);
Json to_json(const DiagnosticsReport& rep);
Json to_json(const Example1& e);
Json to_json(const Example2& e);
Json to_json(const MCReport& rep);

SimConfig sim_config_from_json(const Json& j);

/// Per-replicate rows: index, seed, converged, beta_hat_k, z_k, covered_k.
void write_replicates_csv(std::ostream& out, const MCReport& rep, std::size_t p);

}  // namespace pgee::io
