#pragma once

#include "lqmfg/mfg.hpp"
#include "lqmfg/stats.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace lqmfg {

/// Feedback: the mean-field feedback laws are re-evaluated on the N-player
/// states. OpenLoop: every player applies the control process it uses in the
/// paired mean-field system.
enum class ControlMode { Feedback, OpenLoop };

std::string to_string(ControlMode mode);

/// Unilateral deviation of agent 0 in the N-player system.
struct Deviation {
  enum class Kind { None, Zero, Scaled, Deterministic };
  Kind kind = Kind::None;
  double scale = 1.0;        // Scaled: u = scale * (equilibrium control)
  ControlDirection control;  // Deterministic: u = control(t)

  static Deviation none() { return {}; }
  static Deviation zero() { return {Kind::Zero, 1.0, {}}; }
  static Deviation scaled(double s) { return {Kind::Scaled, s, {}}; }
  static Deviation deterministic(ControlDirection u) { return {Kind::Deterministic, 1.0, std::move(u)}; }
};

struct EmpiricalOptions {
  int n_agents = 64;
  int n_paths = 200;
  ControlMode mode = ControlMode::Feedback;
  std::uint64_t seed = 0;
  int threads = 0;
  Deviation deviation;
  /// Agent slot a draws from stream permutation[a] (identity when empty).
  std::vector<int> permutation;
};

/// N-player system (y) and the paired mean-field system (x) on shared noise:
/// both use W0 from stream (seed, path, 0), agent a uses stream
/// (seed, path, a + 1) for its initial value and W1 increments. The dominating
/// player reads the mean of all N agents, agent i the mean of the others
/// (with N = 1 the agent reads the mean-field z instead).
struct EmpiricalWorld {
  int n_agents = 0;
  int n_paths = 0;
  ControlMode mode = ControlMode::Feedback;
  std::uint64_t seed = 0;
  TimeGrid grid;

  std::vector<double> gap0;  // per path: sup_t |y0 - x0|^2
  std::vector<double> gap1;  // per path: agent average of sup_t |y1^i - x1^i|^2
  std::vector<Eigen::RowVectorXd> cost_emp;  // per path: J^{N,i}, one per agent
  std::vector<Eigen::RowVectorXd> cost_mf;   // per path: J^i
  std::vector<Matrix> y1_terminal;           // per path: n1 x N
  std::vector<Matrix> x1_terminal;
};

EmpiricalWorld simulate_empirical(const MeanFieldSolution& sol, const EmpiricalOptions& options);

struct TrajectoryGap {
  Estimate dominating;  // E sup |y0 - x0|^2
  Estimate agent;       // E sup |y1^i - x1^i|^2
};

TrajectoryGap trajectory_gap(const EmpiricalWorld& world);

/// `absolute` is E|J^{N,i} - J^i| with the difference taken on each path,
/// `signed_` the difference of the two Monte Carlo means. agent_index < 0
/// averages over all agents (they are exchangeable).
struct CostGap {
  Estimate absolute;
  Estimate signed_;
};

CostGap cost_gap(const EmpiricalWorld& world, int agent_index = -1);

struct DeviationResult {
  Estimate cost_equilibrium;  // J^{N,1}(u^)
  Estimate cost_deviation;    // J^{N,1}(u)
  Estimate difference;        // paired J(u) - J(u^)
  double c = 0.0;
  double margin = 0.0;        // J(u) + c / sqrt(N) - J(u^)
  bool ok = false;            // margin >= -2 stderr
};

/// Runs the N-player system with and without the deviation of agent 0 on the
/// same noise.
DeviationResult deviation_test(const MeanFieldSolution& sol, const EmpiricalOptions& base,
                               const Deviation& deviation, double c);

/// W2 between two equal-weight empirical measures on the line. Inputs need
/// not be sorted. Throws LengthMismatch.
double wasserstein2_1d(std::vector<double> a, std::vector<double> b);

/// Same from n1 x N sample matrices; throws DimensionUnsupported when n1 > 1.
double wasserstein2_1d(const Matrix& a, const Matrix& b);

struct NashRow {
  int N = 0;
  TrajectoryGap state;
  CostGap cost;
};

struct Slope {
  LogLogFit fit;
  bool floor = false;  // every gap below the noise floor
};

struct ModeStudy {
  ControlMode mode = ControlMode::Feedback;
  std::vector<NashRow> rows;
  Slope state_dominating, state_agent, cost_absolute, cost_signed;
};

struct DeviationRow {
  std::string name;
  int N = 0;
  DeviationResult result;
};

struct RateStudyOptions {
  std::vector<int> Ns{16, 32, 64, 128, 256, 512};
  int n_paths = 200;
  std::uint64_t seed = 0;
  int threads = 0;
  std::vector<ControlMode> modes{ControlMode::Feedback, ControlMode::OpenLoop};
  std::optional<int> deviation_N;  // default: 256 when listed, else the largest N
  double deviation_scale = 1.5;
};

struct NashReport {
  std::vector<int> Ns;
  int n_paths = 0;
  std::uint64_t seed = 0;
  std::vector<ModeStudy> modes;
  std::vector<DeviationRow> deviations;
  double c = 0.0;  // calibrated epsilon constant
};

NashReport rate_study(const MeanFieldSolution& sol, const RateStudyOptions& options);

/// Deterministic serializations (no timestamps, no thread counts).
std::string to_json(const NashReport& report);
std::string to_csv(const NashReport& report);

}  // namespace lqmfg
