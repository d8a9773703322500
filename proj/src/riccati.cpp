#include "lqmfg/riccati.hpp"

#include "lqmfg/error.hpp"

#include <algorithm>
#include <cmath>

namespace lqmfg {

Matrix gamma_rate(const BlockSystem& b, const Matrix& gamma) {
  return -(b.drift.transpose() * gamma + gamma * b.forward_matrix() -
           gamma * b.control_gain * gamma + b.running_total());
}

Vector offset_rate(const BlockSystem& b, const Matrix& gamma, const Vector& g, OffsetDrift drift) {
  const Matrix& m = drift == OffsetDrift::ControlGain ? b.control_gain : b.coupling;
  return -((b.drift.transpose() - gamma * m) * g + b.running_offset);
}

Matrix agent_riccati_rate(const LqModel& model, const Matrix& p) {
  const Matrix gain = agent_control_gain(model);
  return -(p * model.A1 + model.A1.transpose() * p - p * gain * p + model.Q1);
}

AgentRiccatiPath solve_agent_riccati(const LqModel& model, const TimeGrid& grid,
                                     const RiccatiOptions& options) {
  const Matrix gain = agent_control_gain(model);
  auto rhs = [&](double, const Matrix& p) -> Matrix {
    const Matrix sym = 0.5 * (p + p.transpose());
    return -(sym * model.A1 + model.A1.transpose() * sym - sym * gain * sym + model.Q1);
  };
  const Matrix terminal = 0.5 * (model.Qbar1 + model.Qbar1.transpose());
  AgentRiccatiPath out{integrate_matrix_ode(rhs, terminal, grid, Direction::Backward,
                                            options.integrator)};
  for (auto& p : out.P.values) p = (0.5 * (p + p.transpose())).eval();
  return out;
}

GammaPath solve_gamma(const BlockSystem& blocks, const TimeGrid& grid,
                      const RiccatiOptions& options) {
  auto rhs = [&](double, const Matrix& gamma) -> Matrix { return gamma_rate(blocks, gamma); };
  try {
    return {integrate_matrix_ode(rhs, blocks.terminal_total(), grid, Direction::Backward,
                                 options.integrator)};
  } catch (const Error& e) {
    if (e.code() != ErrorCode::Diverged) throw;
    throw Error(ErrorCode::NoGlobalSolution,
                std::string("no global solution of the non-symmetric Riccati equation on [0,T]: ") +
                    e.what());
  }
}

OffsetPath solve_offset(const BlockSystem& blocks, const GammaPath& gamma,
                        const RiccatiOptions& options) {
  const TimeGrid& grid = gamma.gamma.grid;
  const double dt = grid.dt();
  const Matrix& m = options.offset_drift == OffsetDrift::ControlGain ? blocks.control_gain
                                                                      : blocks.coupling;
  std::vector<Matrix> rates;
  rates.reserve(gamma.gamma.values.size());
  for (const auto& g : gamma.gamma.values) rates.push_back(gamma_rate(blocks, g));

  // RK4 only ever asks for nodes and interval midpoints.
  auto gamma_at = [&](double t) -> Matrix {
    const double s = t / dt;
    const int k = std::clamp(static_cast<int>(std::floor(s)), 0, grid.n_steps - 1);
    const double w = s - k;
    if (w < 1e-9) return gamma.gamma[k];
    if (w > 1.0 - 1e-9) return gamma.gamma[k + 1];
    return hermite_midpoint(gamma.gamma[k], gamma.gamma[k + 1], rates[static_cast<std::size_t>(k)],
                            rates[static_cast<std::size_t>(k) + 1], dt);
  };
  auto a = [&](double t) -> Matrix { return blocks.drift.transpose() - gamma_at(t) * m; };
  auto b = [&](double) -> Vector { return blocks.running_offset; };
  return {integrate_affine_ode(a, b, blocks.terminal_offset, grid, Direction::Backward,
                               options.integrator)};
}

namespace {

// Node residuals from interval defects.
std::vector<double> node_max(const std::vector<double>& interval) {
  const std::size_t n = interval.size();
  std::vector<double> out(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = std::max(out[i], interval[i]);
    out[i + 1] = std::max(out[i + 1], interval[i]);
  }
  return out;
}

// Interval defect: difference quotient minus Simpson's average of the rate,
// with the midpoint value from cubic Hermite interpolation.
template <typename Rate>
std::vector<double> ode_defects(const MatrixPath& path, Rate rate) {
  const double dt = path.grid.dt();
  std::vector<double> interval(static_cast<std::size_t>(path.grid.n_steps));
  Matrix prev_rate = rate(path[0]);
  for (int k = 0; k < path.grid.n_steps; ++k) {
    Matrix next_rate = rate(path[k + 1]);
    const Matrix mid = hermite_midpoint(path[k], path[k + 1], prev_rate, next_rate, dt);
    const Matrix defect =
        (path[k + 1] - path[k]) / dt - (prev_rate + 4.0 * rate(mid) + next_rate) / 6.0;
    interval[static_cast<std::size_t>(k)] = defect.cwiseAbs().maxCoeff();
    prev_rate = std::move(next_rate);
  }
  return node_max(interval);
}

struct IntervalDefects {
  Matrix gamma;
  Vector offset;
};

IntervalDefects interval_defects(const MatrixPath& gp, const VectorPath& g, const BlockSystem& b,
                                 int k) {
  const double dt = gp.grid.dt();
  const Matrix gr0 = gamma_rate(b, gp[k]), gr1 = gamma_rate(b, gp[k + 1]);
  const Matrix gmid = hermite_midpoint(gp[k], gp[k + 1], gr0, gr1, dt);
  const Vector or0 = offset_rate(b, gp[k], g[k]), or1 = offset_rate(b, gp[k + 1], g[k + 1]);
  const Vector omid = hermite_midpoint(g[k], g[k + 1], or0, or1, dt);
  return {(gp[k + 1] - gp[k]) / dt - (gr0 + 4.0 * gamma_rate(b, gmid) + gr1) / 6.0,
          (g[k + 1] - g[k]) / dt - (or0 + 4.0 * offset_rate(b, gmid, omid) + or1) / 6.0};
}

}  // namespace

std::vector<double> riccati_residual(const GammaPath& path, const BlockSystem& blocks) {
  return ode_defects(path.gamma, [&](const Matrix& g) { return gamma_rate(blocks, g); });
}

std::vector<double> riccati_residual(const AgentRiccatiPath& path, const LqModel& model) {
  return ode_defects(path.P, [&](const Matrix& p) { return agent_riccati_rate(model, p); });
}

std::vector<double> offset_residual(const OffsetPath& offset, const GammaPath& gamma,
                                    const BlockSystem& blocks) {
  if (!(offset.g.grid == gamma.gamma.grid)) {
    throw Error(ErrorCode::LengthMismatch, "offset residual needs paths on one grid");
  }
  std::vector<double> interval(static_cast<std::size_t>(offset.g.grid.n_steps));
  for (int k = 0; k < offset.g.grid.n_steps; ++k) {
    interval[static_cast<std::size_t>(k)] =
        interval_defects(gamma.gamma, offset.g, blocks, k).offset.cwiseAbs().maxCoeff();
  }
  return node_max(interval);
}

std::vector<double> ansatz_residual(const GammaPath& gamma, const OffsetPath& offset,
                                    const BlockSystem& blocks, const VectorPath& state) {
  const MatrixPath& gp = gamma.gamma;
  if (!(gp.grid == offset.g.grid) || !(gp.grid == state.grid)) {
    throw Error(ErrorCode::LengthMismatch, "ansatz residual needs paths on one grid");
  }
  std::vector<double> interval(static_cast<std::size_t>(gp.grid.n_steps));
  for (int k = 0; k < gp.grid.n_steps; ++k) {
    const IntervalDefects d = interval_defects(gp, offset.g, blocks, k);
    const Vector x = 0.5 * (state[k] + state[k + 1]);
    interval[static_cast<std::size_t>(k)] = (d.gamma * x + d.offset).cwiseAbs().maxCoeff();
  }
  return node_max(interval);
}

double max_of(const std::vector<double>& values) {
  return values.empty() ? 0.0 : *std::max_element(values.begin(), values.end());
}

}  // namespace lqmfg
