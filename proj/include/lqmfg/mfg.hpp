#pragma once

#include "lqmfg/integrate.hpp"
#include "lqmfg/model.hpp"
#include "lqmfg/riccati.hpp"
#include "lqmfg/stats.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace lqmfg {

struct SolveOptions {
  RiccatiOptions riccati{};
  SplitSpec split{};
};

/// Equilibrium in decoupled form. The coefficient paths (Gamma, g, P) are
/// stored on grid.refined() so that every RK4 stage on the simulation grid
/// reads an exact sample: node k of `grid` is index 2k, the midpoint of
/// interval k is index 2k + 1.
///
/// Feedback laws:
///   u0 = -R0^-1 C0' (Gamma x + g)_{x0 block}
///   u1 = -R1^-1 C1' (P x1 + g_ag),
///   g_ag = Gamma_31 x0 + Gamma_32 r + (Gamma_33 - P) z + g_3,
/// where g_ag is the agent's offset recovered from m = P z + g_ag.
struct MeanFieldSolution {
  LqModel model;
  BlockSystem blocks;
  TimeGrid grid;
  GammaPath gamma;
  OffsetPath offset;
  AgentRiccatiPath agent_P;
  RiccatiOptions options;

  [[nodiscard]] const Matrix& gamma_fine(int j) const { return gamma.gamma[j]; }
  [[nodiscard]] const Vector& offset_fine(int j) const { return offset.g[j]; }
  [[nodiscard]] const Matrix& agent_P_fine(int j) const { return agent_P.P[j]; }

  /// Paths sampled on the simulation grid.
  [[nodiscard]] GammaPath gamma_on_grid() const { return {gamma.gamma.coarsened()}; }
  [[nodiscard]] OffsetPath offset_on_grid() const { return {offset.g.coarsened()}; }
  [[nodiscard]] AgentRiccatiPath agent_P_on_grid() const { return {agent_P.P.coarsened()}; }

  /// Adjoint p = Gamma x + g at simulation node k.
  [[nodiscard]] Vector adjoint(int k, const Vector& x) const;
  [[nodiscard]] Vector dominating_control(int k, const Vector& x) const;
  [[nodiscard]] Vector agent_offset(int k, const Vector& x) const;
  [[nodiscard]] Vector agent_control(int k, const Vector& x1, const Vector& x) const;
};

/// Throws NoGlobalSolution if Gamma blows up, InvalidModel on bad input.
MeanFieldSolution solve_mfg(const LqModel& model, const TimeGrid& grid,
                            const SolveOptions& options = {});

/// Closed-loop state with the noise dropped, started from the mean initial
/// condition. Equal to the ensemble mean of simulate_common.
VectorPath mean_path(const MeanFieldSolution& sol);

/// Common-noise ensemble of the stacked state x = (x0, r, z).
///
/// Scheme: one RK4 step of the closed-loop drift followed by the additive
/// increment sigma dW0. For additive noise this has strong order one, and
/// because the step is affine in x, the ensemble mean follows the RK4 mean
/// ODE exactly.
struct PathEnsemble {
  TimeGrid grid;
  std::uint64_t seed = 0;
  int n_paths = 0;
  std::vector<Matrix> x;    // per path: dim x (n_steps + 1)
  std::vector<Matrix> p;    // per path: dim x (n_steps + 1)
  std::vector<Matrix> u0;   // per path: m0 x (n_steps + 1)
  std::vector<Matrix> dW0;  // per path: d0 x n_steps

  [[nodiscard]] VectorPath state_path(int path) const;
};

PathEnsemble simulate_common(const MeanFieldSolution& sol, int n_paths, std::uint64_t seed,
                             int threads = 0);

using ControlDirection = std::function<Vector(double t)>;

/// Open-loop perturbation u1 -> u1 + theta * direction(t), applied on top of
/// the feedback control process.
struct AgentPerturbation {
  ControlDirection direction;
  double theta = 0.0;
};

struct AgentOptions {
  int n_agents = 64;
  std::uint64_t seed = 0;
  int threads = 0;
  double p_scale = 1.0;  // multiplies P inside the agents' feedback only
  bool keep_paths = false;
  std::optional<AgentPerturbation> perturbation;
  /// Also record the mean over the first n agents for each listed n. Agent
  /// streams do not depend on n_agents, so these are exactly the mean_x1 of
  /// ensembles with n agents.
  std::vector<int> prefix_counts;
};

/// Representative agents simulated conditionally on each common path.
/// Agent a on path i draws from stream (seed, i, a + 1); its x1(0) is drawn
/// from N(xi1_mean, xi1_cov) first.
struct AgentEnsemble {
  int n_paths = 0;
  int n_agents = 0;
  std::uint64_t seed = 0;
  std::vector<Matrix> mean_x1;  // per path: n1 x (n_steps + 1), average over agents
  std::vector<Matrix> mean_u1;  // per path: m1 x (n_steps + 1)
  std::vector<double> cost;     // per path: agent-averaged cost J1
  std::vector<double> cost_plus, cost_minus;  // filled with a perturbation
  std::vector<std::vector<Matrix>> x1;        // keep_paths: [path][agent] n1 x (n_steps + 1)
  std::vector<std::vector<Matrix>> prefix_mean_x1;  // [prefix][path] n1 x (n_steps + 1)
};

AgentEnsemble simulate_agents(const MeanFieldSolution& sol, const PathEnsemble& ensemble,
                              const AgentOptions& options);

/// |mean_i x1^i(t) - z(t)|, the equilibrium condition z = E[x1 | common noise].
struct EquilibriumResidual {
  std::vector<double> per_path;  // max over t
  Estimate mean;                 // over paths
};

EquilibriumResidual equilibrium_residual(const MeanFieldSolution& sol,
                                         const PathEnsemble& ensemble,
                                         const AgentEnsemble& agents);
EquilibriumResidual equilibrium_residual(const MeanFieldSolution& sol,
                                         const PathEnsemble& ensemble,
                                         const std::vector<Matrix>& mean_x1);

struct ResidualDecay {
  std::vector<int> n_agents;
  std::vector<double> mean_residual;
  LogLogFit fit;
};

/// equilibrium_residual for several agent counts on one common ensemble,
/// with a log-log fit of the mean residual against n_agents. One simulation
/// with the largest count serves all counts through prefix means.
ResidualDecay equilibrium_decay(const MeanFieldSolution& sol, const PathEnsemble& ensemble,
                                const std::vector<int>& n_agents, const AgentOptions& base);

struct CostEstimate {
  Estimate dominating;  // J0
  Estimate agent;       // J1, averaged over agents and paths
};

/// Trapezoidal time quadrature on the grid, Monte Carlo over paths.
CostEstimate estimate_costs(const MeanFieldSolution& sol, const PathEnsemble& ensemble,
                            const AgentEnsemble& agents);

/// Per-path dominating-player cost.
std::vector<double> dominating_costs(const MeanFieldSolution& sol, const PathEnsemble& ensemble);

/// Deterministic reaction of (x0, z) to u0 -> u0 + direction(t): the
/// population re-equilibrates through the linear forward-backward system
///   x0~' = A0 x0~ + B0 z~ + C0 u~
///   z~'  = D x0~ + (A1 + B1) z~ - C1 R1^-1 C1' m~
///  -m~'  = A1' m~ + Q1 (I - E1) z~ - Q1 F x0~,
///   m~(T) = Qbar1 (I - Ebar1) z~(T) - Qbar1 Fbar x0~(T).
struct PopulationResponse {
  VectorPath x0;
  VectorPath z;
  VectorPath control;  // direction sampled on the grid
};

PopulationResponse population_response(const MeanFieldSolution& sol,
                                       const ControlDirection& direction);

/// Smooth deterministic probe family used by the optimality checks: index 0
/// is the constant 1, index k > 0 is sin(k pi t / T) + 0.3 k t / T, in every
/// component.
ControlDirection probe_direction(int index, int dim, double T);

enum class Player { Dominating, Agent };

/// Centred finite differences of J(u + theta d) with common random numbers.
struct GateauxResult {
  double derivative = 0.0;         // (J+ - J-) / (2 theta)
  double derivative_stderr = 0.0;  // over paths
  double second_difference = 0.0;  // (J+ + J- - 2 J0) / theta^2
  Estimate cost_zero, cost_plus, cost_minus;
  Estimate increase_plus, increase_minus;  // paired J(+-theta) - J(0)
};

/// For Player::Agent the agents are simulated with `agent_options` (its
/// perturbation field is overwritten).
GateauxResult gateaux_check(const MeanFieldSolution& sol, const PathEnsemble& ensemble,
                            Player which, const ControlDirection& direction, double theta,
                            const AgentOptions& agent_options = {});

enum class PicardSources {
  None,   // X(0) = 0, no k, kbar: the map whose contraction is studied
  Model,  // X(0) = init_mean with k, kbar: its fixed point is the equilibrium mean
};

/// x -> X where
///   X' = A X - C Y + B x,           X(0) = 0 (or init_mean)
///  -Y' = A' Y + Q X + S x (+ k),    Y(T) = Qbar X(T) + Sbar x(T) (+ kbar)
/// solved through Y = K X + h with the symmetric Riccati
///   K' + A' K + K A - K C K + Q = 0,  K(T) = Qbar,
/// which is integrated once and reused. Input paths are linearly
/// interpolated at RK4 midpoints.
class PicardMap {
 public:
  PicardMap(const BlockSystem& blocks, const TimeGrid& grid,
            PicardSources sources = PicardSources::None, const IntegratorOptions& options = {});

  [[nodiscard]] VectorPath operator()(const VectorPath& x) const;
  [[nodiscard]] const TimeGrid& grid() const { return grid_; }
  [[nodiscard]] const BlockSystem& blocks() const { return blocks_; }

 private:
  BlockSystem blocks_;
  TimeGrid grid_;
  PicardSources sources_;
  IntegratorOptions options_;
  MatrixPath inner_;  // K on grid_.refined()
  // Per fine index: A' - K C, K B + S, A - C K.
  std::vector<Matrix> h_drift_, h_source_, x_drift_;
};

VectorPath picard_map(const BlockSystem& blocks, const VectorPath& x,
                      PicardSources sources = PicardSources::None);

struct PicardResult {
  VectorPath x;
  std::vector<double> increments;  // H-norm of x_{k+1} - x_k
  double ratio = 0.0;              // largest successive increment ratio
  double asymptotic_ratio = 0.0;   // geometric decay rate of the tail
  bool converged = false;
  int iterations = 0;
};

/// Iterates from x = 0 until the H-norm increment drops below tol.
PicardResult picard_iterate(const BlockSystem& blocks, const TimeGrid& grid, double tol,
                            int max_iter, PicardSources sources = PicardSources::Model);

/// Observed contraction factor of an increment history: the largest ratio
/// of successive increments, i.e. the smallest L with
/// |x_{k+1} - x_k| <= L |x_k - x_{k-1}| along the run. Increments at
/// round-off level are ignored.
double increment_ratio(const std::vector<double>& increments);

/// Geometric mean of the last three usable successive ratios; tends to the
/// spectral radius of the linearized map.
double asymptotic_ratio(const std::vector<double>& increments);

}  // namespace lqmfg
