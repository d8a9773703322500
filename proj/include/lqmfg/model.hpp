#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace lqmfg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Coefficients of the linear-quadratic game with one dominating player
/// (state x0, control u0, noise W0) and a continuum of representative agents
/// (state x1, control u1, idiosyncratic noise W1). Field names follow the
/// model JSON schema one-to-one.
///
///   dx0 = (A0 x0 + B0 z + C0 u0) dt + sigma0 dW0
///   dx1 = (A1 x1 + B1 z + C1 u1 + D x0) dt + sigma1 dW1
///
/// with z the conditional mean of x1 given the common noise. The agent pays
///   |x1 - E1 z - F x0 - zeta1|^2_Q1 + |u1|^2_R1
/// and the dominating player pays
///   |x0 - E0 z - zeta0|^2_Q0 + |u0|^2_R0,
/// plus the barred terminal analogues at time T.
struct LqModel {
  int n0 = 1, n1 = 1, m0 = 1, m1 = 1, d0 = 1, d1 = 1;
  double T = 1.0;

  Matrix A0, B0, C0, sigma0;
  Matrix A1, B1, C1, D, sigma1;
  Matrix Q0, Qbar0, Q1, Qbar1, R0, R1;
  Matrix E0, Ebar0, E1, Ebar1, F, Fbar;
  Vector zeta0, zetabar0, zeta1, zetabar1;
  Vector xi0_mean, xi1_mean;
  Matrix xi0_cov, xi1_cov;
};

/// All-zero model of the given dimensions with identity R0, R1 (the smallest
/// valid starting point for hand-built models).
LqModel zero_model(int n0 = 1, int n1 = 1, int m0 = 1, int m1 = 1, int d0 = 1, int d1 = 1,
                   double T = 1.0);

/// Scalar benchmark used throughout the test-suite and shipped as
/// configs/m1.json.
LqModel benchmark_m1();

/// Same as benchmark_m1() with sigma0 = 0 and a deterministic x0(0).
LqModel benchmark_m1_deterministic();

struct ValidationReport {
  std::vector<std::string> violations;

  [[nodiscard]] bool ok() const { return violations.empty(); }
  [[nodiscard]] std::string summary() const;
};

/// Checks shapes, finiteness, symmetry and definiteness. Never throws.
ValidationReport validate_model(const LqModel& model);

/// Choice of the positive part of the running and terminal quadratic
/// matrices. Empty optionals select block-diag(Q0, Q1, Q1) and
/// block-diag(Qbar0, Qbar1, Qbar1).
struct SplitSpec {
  std::optional<Matrix> running_weight;
  std::optional<Matrix> terminal_weight;
};

struct QuadraticSplit {
  Matrix weight;  // symmetric positive part
  Matrix cross;   // remainder, total - weight
};

/// Splits `total` into weight + cross. With `require_definite` the weight
/// must be positive definite (running cost); otherwise PSD suffices
/// (terminal cost). Throws NonPositiveSplit.
QuadraticSplit split_quadratic(const Matrix& total, const Matrix& weight,
                               bool require_definite = true);

Matrix default_running_weight(const LqModel& model);
Matrix default_terminal_weight(const LqModel& model);

/// The stacked forward-backward system in the state (x0, r, z):
///
///   dx = ((A + B) x - C p) dt + sigma dW0,        x(0) ~ (init_mean, init_cov)
///  -dp = (A' p + (Q + S) x + k) dt - Z dW0,       p(T) = (Qbar + Sbar) x(T) + kbar
struct BlockSystem {
  int n0 = 0, n1 = 0;
  int dim = 0;  // n0 + 2 n1
  double T = 0.0;

  Matrix drift;            // A
  Matrix coupling;         // B
  Matrix control_gain;     // C = block-diag(C0 R0^-1 C0', C1 R1^-1 C1', C1 R1^-1 C1')
  Matrix running_weight;   // Q
  Matrix running_cross;    // S
  Matrix terminal_weight;  // Qbar
  Matrix terminal_cross;   // Sbar
  Vector running_offset;   // k
  Vector terminal_offset;  // kbar
  Matrix noise;            // sigma, dim x d0 (only the x0 rows are nonzero)
  Vector init_mean;        // (xi0_mean, 0, xi1_mean)
  Matrix init_cov;         // block-diag(xi0_cov, 0, 0)

  [[nodiscard]] Matrix running_total() const { return running_weight + running_cross; }
  [[nodiscard]] Matrix terminal_total() const { return terminal_weight + terminal_cross; }
  [[nodiscard]] Matrix forward_matrix() const { return drift + coupling; }
};

/// Q + S and Qbar + Sbar before splitting.
Matrix assemble_running_total(const LqModel& model);
Matrix assemble_terminal_total(const LqModel& model);

/// Throws InvalidModel when validation fails, SingularR when an R cannot be
/// inverted, NonPositiveSplit when the chosen weights are not admissible.
BlockSystem assemble_blocks(const LqModel& model, const SplitSpec& split = {});

/// Helpers shared by the solver modules.
Matrix agent_control_gain(const LqModel& model);      // C1 R1^-1 C1'
Matrix dominating_control_gain(const LqModel& model);  // C0 R0^-1 C0'

}  // namespace lqmfg
