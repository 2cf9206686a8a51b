#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "pseudogee/model.hpp"

namespace pgee::cli {

enum ExitCode : int { kSuccess = 0, kError = 1, kWarning = 2 };

enum class Subcommand { fit, diagnose, simulate };
enum class Method { independence, two_step };

struct CliConfig {
    Subcommand subcommand = Subcommand::fit;
    std::string data_path;
    LinkKind link = LinkKind::identity;
    Method method = Method::two_step;
    std::optional<Vector> beta;
    std::string out_path;  // empty: standard output
    std::optional<std::uint64_t> seed;
    std::optional<std::uint64_t> shuffle_seed;
    std::string sim_config_path;
    std::string dump_csv_path;
    double ci_level = 0.95;
    std::size_t workers = 1;
    std::vector<std::size_t> grid;
    double det_floor = 1e-6;
    double radius = 1.0;
};

int cmd_fit(const CliConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_diagnose(const CliConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_simulate(const CliConfig& cfg, std::ostream& out, std::ostream& err);

/// Parses `args` (without the program name) and dispatches. Never throws;
/// failures become exit code 1 with a JSON error object on `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pgee::cli
