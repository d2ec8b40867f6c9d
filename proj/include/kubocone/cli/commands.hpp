#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "kubocone/bloch.hpp"

namespace kubocone::cli {

enum ExitCode : int {
  kOk = 0,
  kConfigError = 1,
  kValidationFailure = 2,
  kNotConverged = 3,
  kNumericalError = 4,
};

/// Parsed command line. Unset optionals fall back to the model file's
/// "defaults" object and then to built-in defaults.
struct RunConfig {
  std::string command;
  std::optional<std::string> model_path;
  std::optional<std::string> preset;
  std::string params;
  std::optional<int> grid;
  std::optional<int> coarse;
  std::optional<std::vector<double>> eta_seq;
  std::optional<double> eps;
  std::optional<std::string> out;
  std::optional<std::string> csv;
  std::optional<std::string> svg;
  std::optional<std::string> directions;
  std::optional<std::string> method;
  /// Waypoints in dual coordinates, "b1,b2;b1,b2;...".
  std::optional<std::string> path;
  std::optional<int> samples;
};

struct CommandResult {
  int exit_code = kOk;
  nlohmann::ordered_json report;
  /// Tabular output (bands, sigma-hat sequences); may be empty.
  std::string csv;
  std::string svg;
};

/// Preset by name with "key=value,..." parameters; every preset accepts an
/// optional "mu" override of the Fermi energy.
HoppingModel make_preset(const std::string& name, const std::string& params);

std::vector<std::array<int, 2>> parse_directions(const std::string& text);
std::vector<double> parse_list(const std::string& text);

CommandResult cmd_validate(const RunConfig& config);
CommandResult cmd_bands(const RunConfig& config);
CommandResult cmd_fermi_points(const RunConfig& config);
CommandResult cmd_sigma(const RunConfig& config);
CommandResult cmd_verify(const RunConfig& config);

/// Dispatches config.command, writes outputs, and maps errors to exit codes.
int run(const RunConfig& config, std::ostream& out, std::ostream& err);

}  // namespace kubocone::cli
