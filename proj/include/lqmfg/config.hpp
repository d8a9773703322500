#pragma once

#include "lqmfg/model.hpp"
#include "lqmfg/nash.hpp"
#include "lqmfg/wellposed.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace lqmfg {

struct GridConfig {
  std::optional<int> n_steps;  // default: 400 per unit time
  double steps_per_unit = 400.0;

  [[nodiscard]] TimeGrid make(double T) const;
};

struct SolverConfig {
  double blowup_cap = 1e12;
  double residual_tol = 1e-5;
  bool printed_offset_drift = false;
  MatrixNorm norm = MatrixNorm::Spectral;
  std::optional<Matrix> running_weight;   // positive part of Q + S
  std::optional<Matrix> terminal_weight;  // positive part of Qbar + Sbar
  bool emit_residuals = false;

  [[nodiscard]] SolveOptions solve_options() const;
};

struct SimConfig {
  int n_paths = 2000;
  int n_agents = 64;
  std::uint64_t seed = 0;
  int threads = 0;  // 0: hardware concurrency
};

struct NashConfig {
  std::vector<int> Ns{16, 32, 64, 128, 256, 512};
  std::vector<ControlMode> modes{ControlMode::Feedback, ControlMode::OpenLoop};
  std::optional<int> n_paths;  // default: 200
  std::optional<int> deviation_N;
  double deviation_scale = 1.5;
};

struct PicardConfig {
  double tol = 1e-10;
  int max_iter = 200;
  int n_probes = 20;
};

struct GateauxConfig {
  double theta = 0.05;
  int n_directions = 5;
};

struct OutputConfig {
  std::string directory = "out";
  std::vector<std::string> formats{"csv", "json"};
};

/// Normalized run configuration. A model given as a file path is loaded at
/// parse time, so the normalized form always carries the model inline.
struct RunConfig {
  LqModel model = benchmark_m1();
  GridConfig grid;
  SolverConfig solver;
  SimConfig sim;
  NashConfig nash;
  PicardConfig picard;
  GateauxConfig gateaux;
  OutputConfig output;

  [[nodiscard]] TimeGrid time_grid() const { return grid.make(model.T); }
};

/// Matrices are row-major nested arrays, vectors flat arrays. Fields missing
/// from the object take the zero_model value for the given dimensions.
LqModel model_from_json(const nlohmann::json& j);
nlohmann::ordered_json model_to_json(const LqModel& model);

/// Relative model paths resolve against `base_dir`. A bare model object
/// (no "model" key, LqModel fields at top level) is also accepted. Throws
/// ConfigParse.
RunConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
nlohmann::ordered_json config_to_json(const RunConfig& config);

RunConfig load_config(const std::filesystem::path& path);
LqModel load_model(const std::filesystem::path& path);

/// Hex SHA-256.
std::string sha256_hex(const std::string& bytes);
/// Hash of the compact normalized model JSON.
std::string model_hash(const LqModel& model);

}  // namespace lqmfg
