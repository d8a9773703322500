#pragma once

#include "lqmfg/config.hpp"
#include "lqmfg/error.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace lqmfg {

enum class ExitCode : int {
  Ok = 0,
  ConfigParse = 2,
  ModelInvalid = 3,
  SolverFailure = 4,
  IoError = 5,
};

ExitCode exit_code_for(ErrorCode code);
std::string_view exit_name(ExitCode code);

struct OutputFile {
  std::string name;
  std::string contents;
  std::string description;  // column layout, copied into the manifest readme
};

struct ResultSet {
  std::string command;
  std::vector<OutputFile> files;
};

/// Writes config.json (the normalized config echo), every result file and
/// manifest.json into `dir`, and returns the manifest. The manifest lists
/// each file with its SHA-256 and carries format_version 1, the model hash,
/// the grid, the solver and sampling settings, and a readme describing the
/// columns. Thread counts and the output directory are left out so the
/// outputs depend only on what determines the results.
/// Throws IoError.
nlohmann::ordered_json emit_outputs(const ResultSet& results, const RunConfig& config,
                                    const std::filesystem::path& dir);

/// Entry point of the lqmfg tool. Errors go to `err` as one JSON object.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lqmfg
