#include "lqmfg/mfg.hpp"

#include "closed_loop.hpp"
#include "lqmfg/error.hpp"

#include <cmath>

namespace lqmfg {

namespace detail {

ClosedLoop::ClosedLoop(const MeanFieldSolution& sol, double p_scale) {
  const LqModel& m = sol.model;
  const BlockSystem& b = sol.blocks;
  n0 = m.n0;
  n1 = m.n1;
  dim = b.dim;
  m0 = m.m0;
  m1 = m.m1;
  d0 = m.d0;
  d1 = m.d1;
  n_steps = sol.grid.n_steps;
  dt = sol.grid.dt();
  noise0 = b.noise;
  sigma1 = m.sigma1;
  A0 = m.A0;
  B0 = m.B0;
  C0 = m.C0;
  A1 = m.A1;
  B1 = m.B1;
  C1 = m.C1;
  D = m.D;

  const Matrix k0 = m.R0.llt().solve(m.C0.transpose());
  const Matrix k1 = m.R1.llt().solve(m.C1.transpose());
  const Matrix forward = b.forward_matrix();

  const int fine = 2 * n_steps + 1;
  state_matrix.reserve(fine);
  state_offset.reserve(fine);
  u0_gain.reserve(fine);
  u0_offset.reserve(fine);
  ctrl_own.reserve(fine);
  ctrl_common.reserve(fine);
  ctrl_const.reserve(fine);
  for (int j = 0; j < fine; ++j) {
    const Matrix& gamma = sol.gamma_fine(j);
    const Vector& g = sol.offset_fine(j);
    const Matrix& p = sol.agent_P_fine(j);
    state_matrix.push_back(forward - b.control_gain * gamma);
    state_offset.push_back(-b.control_gain * g);
    u0_gain.push_back(-k0 * gamma.topRows(n0));
    u0_offset.push_back(-k0 * g.head(n0));

    Matrix g_ag = gamma.bottomRows(n1);
    g_ag.rightCols(n1) -= p;
    ctrl_own.push_back(-p_scale * (k1 * p));
    ctrl_common.push_back(-k1 * g_ag);
    ctrl_const.push_back(-k1 * g.tail(n1));
  }
}

void ClosedLoop::stages(int k, const Vector& x, std::array<Vector, 4>& s, Vector& increment) const {
  const double h = dt;
  s[0] = x;
  const Vector r1 = common_rate(2 * k, s[0]);
  s[1] = x + 0.5 * h * r1;
  const Vector r2 = common_rate(2 * k + 1, s[1]);
  s[2] = x + 0.5 * h * r2;
  const Vector r3 = common_rate(2 * k + 1, s[2]);
  s[3] = x + h * r3;
  const Vector r4 = common_rate(2 * k + 2, s[3]);
  increment = (h / 6.0) * (r1 + 2.0 * r2 + 2.0 * r3 + r4);
}

}  // namespace detail

Vector MeanFieldSolution::adjoint(int k, const Vector& x) const {
  return gamma_fine(2 * k) * x + offset_fine(2 * k);
}

Vector MeanFieldSolution::dominating_control(int k, const Vector& x) const {
  const Vector p = adjoint(k, x);
  return -model.R0.llt().solve(model.C0.transpose() * p.head(model.n0));
}

Vector MeanFieldSolution::agent_offset(int k, const Vector& x) const {
  const int n1 = model.n1;
  const Matrix& gamma = gamma_fine(2 * k);
  return gamma.bottomRows(n1) * x - agent_P_fine(2 * k) * x.tail(n1) +
         offset_fine(2 * k).tail(n1);
}

Vector MeanFieldSolution::agent_control(int k, const Vector& x1, const Vector& x) const {
  return -model.R1.llt().solve(model.C1.transpose() *
                               (agent_P_fine(2 * k) * x1 + agent_offset(k, x)));
}

MeanFieldSolution solve_mfg(const LqModel& model, const TimeGrid& grid,
                            const SolveOptions& options) {
  BlockSystem blocks = assemble_blocks(model, options.split);
  if (std::abs(grid.T - model.T) > 1e-12 * std::max(1.0, model.T)) {
    throw Error(ErrorCode::InvalidArgument, "grid horizon differs from the model horizon");
  }
  const TimeGrid fine = grid.refined();
  GammaPath gamma = solve_gamma(blocks, fine, options.riccati);
  OffsetPath offset = solve_offset(blocks, gamma, options.riccati);
  AgentRiccatiPath p = solve_agent_riccati(model, fine, options.riccati);
  return {model, std::move(blocks), grid, std::move(gamma), std::move(offset), std::move(p),
          options.riccati};
}

VectorPath mean_path(const MeanFieldSolution& sol) {
  const detail::ClosedLoop cl(sol);
  VectorPath out{sol.grid, {}};
  out.values.reserve(static_cast<std::size_t>(sol.grid.size()));
  Vector x = sol.blocks.init_mean;
  out.values.push_back(x);
  std::array<Vector, 4> s;
  Vector inc;
  for (int k = 0; k < sol.grid.n_steps; ++k) {
    cl.stages(k, x, s, inc);
    x += inc;
    out.values.push_back(x);
  }
  return out;
}

PopulationResponse population_response(const MeanFieldSolution& sol,
                                       const ControlDirection& direction) {
  const LqModel& m = sol.model;
  const int n0 = m.n0, n1 = m.n1, nw = n0 + n1;
  const Matrix ct = agent_control_gain(m);

  Matrix aw = Matrix::Zero(nw, nw);
  aw.topLeftCorner(n0, n0) = m.A0;
  aw.topRightCorner(n0, n1) = m.B0;
  aw.bottomLeftCorner(n1, n0) = m.D;
  aw.bottomRightCorner(n1, n1) = m.A1 + m.B1;
  Matrix cw = Matrix::Zero(nw, n1);
  cw.bottomRows(n1) = ct;
  const Matrix i1 = Matrix::Identity(n1, n1);
  Matrix h(n1, nw), hbar(n1, nw);
  h << -m.Q1 * m.F, m.Q1 * (i1 - m.E1);
  hbar << -m.Qbar1 * m.Fbar, m.Qbar1 * (i1 - m.Ebar1);

  auto forcing = [&](double t) {
    Vector f = Vector::Zero(nw);
    f.head(n0) = m.C0 * direction(t);
    return f;
  };

  // m~ = Lambda w + eta; [Lambda | eta] integrated jointly on the fine grid.
  auto rhs = [&](double t, const Matrix& le) -> Matrix {
    const Matrix lambda = le.leftCols(nw);
    const Vector eta = le.col(nw);
    Matrix out(n1, nw + 1);
    out.leftCols(nw) = -(lambda * aw - lambda * cw * lambda + m.A1.transpose() * lambda + h);
    out.col(nw) = -(m.A1.transpose() * eta - lambda * cw * eta + lambda * forcing(t));
    return out;
  };
  Matrix terminal = Matrix::Zero(n1, nw + 1);
  terminal.leftCols(nw) = hbar;
  const MatrixPath le = integrate_matrix_ode(rhs, terminal, sol.grid.refined(),
                                             Direction::Backward, sol.options.integrator);

  auto rate = [&](int j, double t, const Vector& w) -> Vector {
    const Matrix& lej = le[j];
    return (aw - cw * lej.leftCols(nw)) * w - cw * lej.col(nw) + forcing(t);
  };
  const TimeGrid& grid = sol.grid;
  const double dt = grid.dt();
  PopulationResponse out{{grid, {}}, {grid, {}}, {grid, {}}};
  Vector w = Vector::Zero(nw);
  for (int k = 0; k <= grid.n_steps; ++k) {
    out.x0.values.push_back(w.head(n0));
    out.z.values.push_back(w.tail(n1));
    out.control.values.push_back(direction(grid.t(k)));
    if (k == grid.n_steps) break;
    const double t = grid.t(k);
    const Vector r1 = rate(2 * k, t, w);
    const Vector r2 = rate(2 * k + 1, t + 0.5 * dt, w + 0.5 * dt * r1);
    const Vector r3 = rate(2 * k + 1, t + 0.5 * dt, w + 0.5 * dt * r2);
    const Vector r4 = rate(2 * k + 2, grid.t(k + 1), w + dt * r3);
    w += (dt / 6.0) * (r1 + 2.0 * r2 + 2.0 * r3 + r4);
  }
  return out;
}

}  // namespace lqmfg
