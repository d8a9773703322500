#pragma once

#include "lqmfg/mfg.hpp"
#include "lqmfg/model.hpp"
#include "lqmfg/riccati.hpp"

#include <random>

namespace lqmfg::test {

inline Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }

inline Matrix random_matrix(std::mt19937_64& rng, int r, int c, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Matrix m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = u(rng);
  return m;
}

inline Matrix random_spd(std::mt19937_64& rng, int n) {
  const Matrix a = random_matrix(rng, n, n);
  return a * a.transpose() + 0.5 * Matrix::Identity(n, n);
}

/// Random valid model with every coefficient populated.
inline LqModel random_model(std::mt19937_64& rng, int n0, int n1, int m0, int m1) {
  LqModel m = zero_model(n0, n1, m0, m1, n0, n1, 1.0);
  m.A0 = random_matrix(rng, n0, n0);
  m.B0 = random_matrix(rng, n0, n1);
  m.C0 = random_matrix(rng, n0, m0);
  m.sigma0 = random_matrix(rng, n0, n0, 0.2);
  m.A1 = random_matrix(rng, n1, n1);
  m.B1 = random_matrix(rng, n1, n1);
  m.C1 = random_matrix(rng, n1, m1);
  m.D = random_matrix(rng, n1, n0);
  m.sigma1 = random_matrix(rng, n1, n1, 0.2);
  m.Q0 = random_spd(rng, n0);
  m.Qbar0 = random_spd(rng, n0);
  m.Q1 = random_spd(rng, n1);
  m.Qbar1 = random_spd(rng, n1);
  m.R0 = random_spd(rng, m0);
  m.R1 = random_spd(rng, m1);
  m.E0 = random_matrix(rng, n0, n1, 0.3);
  m.Ebar0 = random_matrix(rng, n0, n1, 0.3);
  m.E1 = random_matrix(rng, n1, n1, 0.3);
  m.Ebar1 = random_matrix(rng, n1, n1, 0.3);
  m.F = random_matrix(rng, n1, n0, 0.3);
  m.Fbar = random_matrix(rng, n1, n0, 0.3);
  m.zeta0 = random_matrix(rng, n0, 1);
  m.zetabar0 = random_matrix(rng, n0, 1);
  m.zeta1 = random_matrix(rng, n1, 1);
  m.zetabar1 = random_matrix(rng, n1, 1);
  m.xi0_mean = random_matrix(rng, n0, 1);
  m.xi1_mean = random_matrix(rng, n1, 1);
  m.xi0_cov = 0.1 * random_spd(rng, n0);
  m.xi1_cov = 0.1 * random_spd(rng, n1);
  return m;
}

/// M1 with the interaction scaled down far enough for the sufficient
/// condition to hold.
inline LqModel weak_coupling_model() {
  LqModel m = benchmark_m1();
  m.B0 = scalar(0.05);
  m.B1 = scalar(0.02);
  m.D = scalar(0.05);
  m.E0 = m.Ebar0 = scalar(0.05);
  m.E1 = m.Ebar1 = scalar(0.05);
  m.F = m.Fbar = scalar(0.05);
  return m;
}

inline LqModel weak_coupling_deterministic() {
  LqModel m = weak_coupling_model();
  m.sigma0.setZero();
  m.xi0_cov.setZero();
  return m;
}

/// M1 without interaction: the x0 block is a standalone LQ regulator.
inline LqModel decoupled_model() {
  LqModel m = benchmark_m1();
  m.B0.setZero();
  m.B1.setZero();
  m.D.setZero();
  m.E0.setZero();
  m.Ebar0.setZero();
  m.E1.setZero();
  m.Ebar1.setZero();
  m.F.setZero();
  m.Fbar.setZero();
  return m;
}

/// Blocks of a model with zero running and terminal costs. Such models fail
/// validation (Q0, Q1 must be definite), so they are assembled by hand.
inline BlockSystem zero_cost_blocks(const LqModel& m) {
  BlockSystem b;
  b.n0 = m.n0;
  b.n1 = m.n1;
  b.dim = m.n0 + 2 * m.n1;
  b.T = m.T;
  const int d = b.dim;
  b.drift = Matrix::Zero(d, d);
  b.coupling = Matrix::Zero(d, d);
  b.control_gain = Matrix::Zero(d, d);
  b.control_gain.topLeftCorner(m.n0, m.n0) = dominating_control_gain(m);
  b.control_gain.block(m.n0, m.n0, m.n1, m.n1) = agent_control_gain(m);
  b.control_gain.bottomRightCorner(m.n1, m.n1) = agent_control_gain(m);
  b.running_weight = Matrix::Identity(d, d);
  b.running_cross = -Matrix::Identity(d, d);
  b.terminal_weight = Matrix::Zero(d, d);
  b.terminal_cross = Matrix::Zero(d, d);
  b.running_offset = Vector::Zero(d);
  b.terminal_offset = Vector::Zero(d);
  b.noise = Matrix::Zero(d, m.d0);
  b.noise.topRows(m.n0) = m.sigma0;
  b.init_mean = Vector::Zero(d);
  b.init_mean.head(m.n0) = m.xi0_mean;
  b.init_mean.tail(m.n1) = m.xi1_mean;
  b.init_cov = Matrix::Zero(d, d);
  b.init_cov.topLeftCorner(m.n0, m.n0) = m.xi0_cov;
  return b;
}

/// Solution of a zero-cost model (all Q = 0, zeta = 0) built from the
/// solver components directly.
inline MeanFieldSolution zero_cost_solution(const LqModel& m, const TimeGrid& grid) {
  MeanFieldSolution sol;
  sol.model = m;
  sol.blocks = zero_cost_blocks(m);
  sol.grid = grid;
  sol.gamma = solve_gamma(sol.blocks, grid.refined());
  sol.offset = solve_offset(sol.blocks, sol.gamma);
  sol.agent_P = solve_agent_riccati(m, grid.refined());
  return sol;
}

// One-dimensional block system with unit weights and no control.
inline BlockSystem scalar_system(double a, double b, double s, double sbar, double T = 1.0) {
  BlockSystem sys;
  sys.n0 = 1;
  sys.n1 = 0;
  sys.dim = 1;
  sys.T = T;
  sys.drift = scalar(a);
  sys.coupling = scalar(b);
  sys.control_gain = scalar(0);
  sys.running_weight = scalar(1);
  sys.running_cross = scalar(s);
  sys.terminal_weight = scalar(1);
  sys.terminal_cross = scalar(sbar);
  sys.running_offset = Vector::Zero(1);
  sys.terminal_offset = Vector::Zero(1);
  sys.noise = Matrix::Zero(1, 1);
  sys.init_mean = Vector::Zero(1);
  sys.init_cov = Matrix::Zero(1, 1);
  return sys;
}

inline double max_abs(const Matrix& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace lqmfg::test
