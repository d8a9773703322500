#pragma once

// Feedback coefficients tabulated on the refined grid, shared by the
// mean-field and the N-player simulators.

#include "lqmfg/mfg.hpp"

#include <array>
#include <vector>

namespace lqmfg::detail {

struct ClosedLoop {
  int n0 = 0, n1 = 0, dim = 0, m0 = 0, m1 = 0, d0 = 0, d1 = 0;
  int n_steps = 0;
  double dt = 0.0;

  // Common state: x' = state_matrix x + state_offset.
  std::vector<Matrix> state_matrix;
  std::vector<Vector> state_offset;
  // u0 = u0_gain x + u0_offset.
  std::vector<Matrix> u0_gain;
  std::vector<Vector> u0_offset;
  // u1 = ctrl_own x1 + ctrl_common x + ctrl_const, where x = (x0, r, z).
  std::vector<Matrix> ctrl_own;
  std::vector<Matrix> ctrl_common;
  std::vector<Vector> ctrl_const;

  Matrix noise0;   // dim x d0
  Matrix sigma1;   // n1 x d1
  Matrix A0, B0, C0, A1, B1, C1, D;

  ClosedLoop(const MeanFieldSolution& sol, double p_scale = 1.0);

  [[nodiscard]] Vector common_rate(int j, const Vector& x) const {
    return state_matrix[static_cast<std::size_t>(j)] * x + state_offset[static_cast<std::size_t>(j)];
  }

  /// The four RK4 stage states of the drift step from x at node k (stage s
  /// lives at fine index 2k + {0,1,1,2}[s]) and the drift increment.
  void stages(int k, const Vector& x, std::array<Vector, 4>& s, Vector& increment) const;

  /// Fine index of RK4 stage s in interval k.
  static int fine_index(int k, int s) { return 2 * k + (s == 0 ? 0 : (s == 3 ? 2 : 1)); }
};

/// Agent drift for a block of agents (columns):
///   A1 X + B1 Z + D x0 1' + C1 U.
inline Matrix agent_rate(const ClosedLoop& cl, const Matrix& x1, const Matrix& z_seen,
                         const Vector& x0, const Matrix& u1) {
  Matrix out = cl.A1 * x1 + cl.B1 * z_seen + cl.C1 * u1;
  out.colwise() += cl.D * x0;
  return out;
}

/// Quadratic cost pieces at a grid node.
inline double quad(const Vector& v, const Matrix& w) { return v.dot(w * v); }

}  // namespace lqmfg::detail
