#include "lqmfg/mfg.hpp"

#include "closed_loop.hpp"
#include "lqmfg/error.hpp"
#include "lqmfg/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace lqmfg {

using detail::ClosedLoop;

namespace {

double node_weight(int k, int n, double dt) { return (k == 0 || k == n) ? 0.5 * dt : dt; }

// Column-wise v' W v.
Eigen::RowVectorXd quad_cols(const Matrix& v, const Matrix& w) {
  return (w * v).cwiseProduct(v).colwise().sum();
}

// Dominating-player cost along one path given (x0, z, u0) at the nodes.
double dominating_cost(const LqModel& m, const TimeGrid& grid, const Matrix& x0, const Matrix& z,
                       const Matrix& u0) {
  const int n = grid.n_steps;
  const double dt = grid.dt();
  double j = 0.0;
  for (int k = 0; k <= n; ++k) {
    const Vector e = x0.col(k) - m.E0 * z.col(k) - m.zeta0;
    j += node_weight(k, n, dt) * (detail::quad(e, m.Q0) + detail::quad(u0.col(k), m.R0));
  }
  const Vector eT = x0.col(n) - m.Ebar0 * z.col(n) - m.zetabar0;
  return j + detail::quad(eT, m.Qbar0);
}

Matrix stack(const VectorPath& p) {
  Matrix out(p[0].size(), p.size());
  for (int k = 0; k < p.size(); ++k) out.col(k) = p[k];
  return out;
}

}  // namespace

VectorPath PathEnsemble::state_path(int path) const {
  const Matrix& m = x[static_cast<std::size_t>(path)];
  VectorPath out{grid, {}};
  out.values.reserve(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index k = 0; k < m.cols(); ++k) out.values.emplace_back(m.col(k));
  return out;
}

PathEnsemble simulate_common(const MeanFieldSolution& sol, int n_paths, std::uint64_t seed,
                             int threads) {
  if (n_paths <= 0) throw Error(ErrorCode::InvalidArgument, "n_paths must be positive");
  const ClosedLoop cl(sol);
  const int n = sol.grid.n_steps;
  const double sqdt = std::sqrt(cl.dt);
  const Matrix init_factor = covariance_factor(sol.model.xi0_cov);

  PathEnsemble ens;
  ens.grid = sol.grid;
  ens.seed = seed;
  ens.n_paths = n_paths;
  const auto np = static_cast<std::size_t>(n_paths);
  ens.x.resize(np);
  ens.p.resize(np);
  ens.u0.resize(np);
  ens.dW0.resize(np);

  parallel_for(n_paths, threads, [&](int i) {
    NormalStream rng(stream_seed(seed, static_cast<std::uint64_t>(i), 0));
    Vector x = sol.blocks.init_mean;
    Vector draw(cl.n0);
    rng.fill(draw);
    x.head(cl.n0) += init_factor * draw;

    Matrix xs(cl.dim, n + 1), ps(cl.dim, n + 1), us(cl.m0, n + 1), ws(cl.d0, n);
    Vector dw(cl.d0);
    std::array<Vector, 4> s;
    Vector inc;
    for (int k = 0; k <= n; ++k) {
      const auto j = static_cast<std::size_t>(2 * k);
      xs.col(k) = x;
      ps.col(k) = sol.gamma_fine(2 * k) * x + sol.offset_fine(2 * k);
      us.col(k) = cl.u0_gain[j] * x + cl.u0_offset[j];
      if (k == n) break;
      cl.stages(k, x, s, inc);
      rng.fill(dw);
      dw *= sqdt;
      ws.col(k) = dw;
      x += inc + cl.noise0 * dw;
    }
    const auto slot = static_cast<std::size_t>(i);
    ens.x[slot] = std::move(xs);
    ens.p[slot] = std::move(ps);
    ens.u0[slot] = std::move(us);
    ens.dW0[slot] = std::move(ws);
  });
  return ens;
}

AgentEnsemble simulate_agents(const MeanFieldSolution& sol, const PathEnsemble& ensemble,
                              const AgentOptions& options) {
  if (options.n_agents <= 0) throw Error(ErrorCode::InvalidArgument, "n_agents must be positive");
  if (!(ensemble.grid == sol.grid)) {
    throw Error(ErrorCode::LengthMismatch, "ensemble grid differs from the solution grid");
  }
  const LqModel& m = sol.model;
  const ClosedLoop cl(sol, options.p_scale);
  const int n = sol.grid.n_steps;
  const int na = options.n_agents;
  const double dt = cl.dt, sqdt = std::sqrt(dt);
  const int fine = 2 * n + 1;
  const Matrix init_factor = covariance_factor(m.xi1_cov);

  std::vector<Matrix> own_drift;  // A1 + C1 * ctrl_own
  own_drift.reserve(static_cast<std::size_t>(fine));
  for (int j = 0; j < fine; ++j) own_drift.push_back(m.A1 + m.C1 * cl.ctrl_own[static_cast<std::size_t>(j)]);

  // Open-loop perturbation: the state shift it causes is the same for every
  // agent, so it is integrated once.
  const bool perturbed = options.perturbation.has_value();
  double theta = 0.0;
  std::vector<Vector> shift, ushift;
  if (perturbed) {
    theta = options.perturbation->theta;
    const auto& dir = options.perturbation->direction;
    Vector xt = Vector::Zero(cl.n1);
    auto rate = [&](double t, const Vector& v) -> Vector { return m.A1 * v + m.C1 * dir(t); };
    for (int k = 0; k <= n; ++k) {
      const double t = sol.grid.t(k);
      shift.push_back(xt);
      ushift.push_back(dir(t));
      if (k == n) break;
      const Vector r1 = rate(t, xt);
      const Vector r2 = rate(t + 0.5 * dt, xt + 0.5 * dt * r1);
      const Vector r3 = rate(t + 0.5 * dt, xt + 0.5 * dt * r2);
      const Vector r4 = rate(sol.grid.t(k + 1), xt + dt * r3);
      xt += (dt / 6.0) * (r1 + 2.0 * r2 + 2.0 * r3 + r4);
    }
  }

  AgentEnsemble out;
  out.n_paths = ensemble.n_paths;
  out.n_agents = na;
  out.seed = options.seed;
  const auto np = static_cast<std::size_t>(ensemble.n_paths);
  out.mean_x1.resize(np);
  out.mean_u1.resize(np);
  out.cost.assign(np, 0.0);
  if (perturbed) {
    out.cost_plus.assign(np, 0.0);
    out.cost_minus.assign(np, 0.0);
  }
  if (options.keep_paths) out.x1.resize(np);
  for (int c : options.prefix_counts) {
    if (c < 1 || c > na) throw Error(ErrorCode::InvalidArgument, "prefix count out of range");
  }
  const std::size_t n_prefix = options.prefix_counts.size();
  out.prefix_mean_x1.assign(n_prefix, std::vector<Matrix>(np));

  parallel_for(ensemble.n_paths, options.threads, [&](int i) {
    const auto slot = static_cast<std::size_t>(i);
    const Matrix& xs = ensemble.x[slot];
    std::vector<NormalStream> streams;
    streams.reserve(static_cast<std::size_t>(na));
    Matrix x1(cl.n1, na);
    Vector draw(cl.n1);
    for (int a = 0; a < na; ++a) {
      streams.emplace_back(stream_seed(options.seed, static_cast<std::uint64_t>(i),
                                       static_cast<std::uint64_t>(a) + 1));
      streams.back().fill(draw);
      x1.col(a) = m.xi1_mean + init_factor * draw;
    }
    Matrix mean_x(cl.n1, n + 1), mean_u(cl.m1, n + 1);
    std::vector<Matrix> prefix(n_prefix, Matrix(cl.n1, n + 1));
    std::vector<Matrix> kept;
    if (options.keep_paths) kept.assign(static_cast<std::size_t>(na), Matrix(cl.n1, n + 1));

    Eigen::RowVectorXd cost = Eigen::RowVectorXd::Zero(na);
    Eigen::RowVectorXd cost_p, cost_m;
    if (perturbed) {
      cost_p = Eigen::RowVectorXd::Zero(na);
      cost_m = Eigen::RowVectorXd::Zero(na);
    }
    Matrix noise(cl.d1, na);
    Vector col(cl.d1);
    std::array<Vector, 4> s;
    Vector inc;

    auto forcing = [&](int j, const Vector& x) -> Vector {
      const auto jj = static_cast<std::size_t>(j);
      return m.B1 * x.tail(cl.n1) + m.D * x.head(cl.n0) +
             m.C1 * (cl.ctrl_common[jj] * x + cl.ctrl_const[jj]);
    };
    auto rate = [&](int j, const Matrix& y, const Vector& x) -> Matrix {
      Matrix r = own_drift[static_cast<std::size_t>(j)] * y;
      r.colwise() += forcing(j, x);
      return r;
    };

    for (int k = 0; k <= n; ++k) {
      const auto j = static_cast<std::size_t>(2 * k);
      const Vector x = xs.col(k);
      Matrix u = cl.ctrl_own[j] * x1;
      u.colwise() += cl.ctrl_common[j] * x + cl.ctrl_const[j];
      mean_x.col(k) = x1.rowwise().mean();
      for (std::size_t q = 0; q < n_prefix; ++q) {
        const int c = options.prefix_counts[q];
        prefix[q].col(k) = x1.leftCols(c).rowwise().sum() / static_cast<double>(c);
      }
      mean_u.col(k) = u.rowwise().mean();
      if (options.keep_paths) {
        for (int a = 0; a < na; ++a) kept[static_cast<std::size_t>(a)].col(k) = x1.col(a);
      }

      const Vector x0 = x.head(cl.n0), z = x.tail(cl.n1);
      const bool last = k == n;
      const double w = node_weight(k, n, dt);
      auto add_cost = [&](Eigen::RowVectorXd& acc, const Matrix& y, const Matrix& uu) {
        Matrix e = y;
        e.colwise() -= m.E1 * z + m.F * x0 + m.zeta1;
        acc += w * (quad_cols(e, m.Q1) + quad_cols(uu, m.R1));
        if (last) {
          Matrix eT = y;
          eT.colwise() -= m.Ebar1 * z + m.Fbar * x0 + m.zetabar1;
          acc += quad_cols(eT, m.Qbar1);
        }
      };
      add_cost(cost, x1, u);
      if (perturbed) {
        const auto kk = static_cast<std::size_t>(k);
        Matrix y = x1, uu = u;
        y.colwise() += theta * shift[kk];
        uu.colwise() += theta * ushift[kk];
        add_cost(cost_p, y, uu);
        y = x1;
        uu = u;
        y.colwise() -= theta * shift[kk];
        uu.colwise() -= theta * ushift[kk];
        add_cost(cost_m, y, uu);
      }
      if (last) break;

      cl.stages(k, x, s, inc);
      const Matrix r1 = rate(2 * k, x1, s[0]);
      const Matrix r2 = rate(2 * k + 1, x1 + 0.5 * dt * r1, s[1]);
      const Matrix r3 = rate(2 * k + 1, x1 + 0.5 * dt * r2, s[2]);
      const Matrix r4 = rate(2 * k + 2, x1 + dt * r3, s[3]);
      for (int a = 0; a < na; ++a) {
        streams[static_cast<std::size_t>(a)].fill(col);
        noise.col(a) = col;
      }
      x1 += (dt / 6.0) * (r1 + 2.0 * r2 + 2.0 * r3 + r4) + sqdt * (cl.sigma1 * noise);
    }
    out.mean_x1[slot] = std::move(mean_x);
    for (std::size_t q = 0; q < n_prefix; ++q) out.prefix_mean_x1[q][slot] = std::move(prefix[q]);
    out.mean_u1[slot] = std::move(mean_u);
    out.cost[slot] = cost.mean();
    if (perturbed) {
      out.cost_plus[slot] = cost_p.mean();
      out.cost_minus[slot] = cost_m.mean();
    }
    if (options.keep_paths) out.x1[slot] = std::move(kept);
  });
  return out;
}

EquilibriumResidual equilibrium_residual(const MeanFieldSolution& sol,
                                         const PathEnsemble& ensemble,
                                         const std::vector<Matrix>& mean_x1) {
  if (mean_x1.size() > ensemble.x.size()) {
    throw Error(ErrorCode::LengthMismatch, "more agent paths than common paths");
  }
  const int n1 = sol.model.n1;
  EquilibriumResidual out;
  out.per_path.reserve(mean_x1.size());
  for (std::size_t i = 0; i < mean_x1.size(); ++i) {
    const Matrix diff = mean_x1[i] - ensemble.x[i].bottomRows(n1);
    out.per_path.push_back(diff.colwise().norm().maxCoeff());
  }
  out.mean = mean_and_stderr(out.per_path);
  return out;
}

EquilibriumResidual equilibrium_residual(const MeanFieldSolution& sol,
                                         const PathEnsemble& ensemble,
                                         const AgentEnsemble& agents) {
  return equilibrium_residual(sol, ensemble, agents.mean_x1);
}

ResidualDecay equilibrium_decay(const MeanFieldSolution& sol, const PathEnsemble& ensemble,
                                const std::vector<int>& n_agents, const AgentOptions& base) {
  if (n_agents.empty()) throw Error(ErrorCode::InvalidArgument, "no agent counts given");
  AgentOptions opt = base;
  opt.n_agents = *std::max_element(n_agents.begin(), n_agents.end());
  opt.keep_paths = false;
  opt.perturbation.reset();
  opt.prefix_counts = n_agents;
  const AgentEnsemble agents = simulate_agents(sol, ensemble, opt);

  ResidualDecay out;
  std::vector<double> xs;
  for (std::size_t q = 0; q < n_agents.size(); ++q) {
    out.n_agents.push_back(n_agents[q]);
    out.mean_residual.push_back(
        equilibrium_residual(sol, ensemble, agents.prefix_mean_x1[q]).mean.mean);
    xs.push_back(static_cast<double>(n_agents[q]));
  }
  out.fit = loglog_fit(xs, out.mean_residual);
  return out;
}

std::vector<double> dominating_costs(const MeanFieldSolution& sol, const PathEnsemble& ensemble) {
  const LqModel& m = sol.model;
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(ensemble.n_paths));
  for (int i = 0; i < ensemble.n_paths; ++i) {
    const auto slot = static_cast<std::size_t>(i);
    const Matrix& x = ensemble.x[slot];
    out.push_back(dominating_cost(m, sol.grid, x.topRows(m.n0), x.bottomRows(m.n1),
                                  ensemble.u0[slot]));
  }
  return out;
}

CostEstimate estimate_costs(const MeanFieldSolution& sol, const PathEnsemble& ensemble,
                            const AgentEnsemble& agents) {
  const std::vector<double> j0 = dominating_costs(sol, ensemble);
  return {mean_and_stderr(j0), mean_and_stderr(agents.cost)};
}

ControlDirection probe_direction(int index, int dim, double T) {
  return [index, dim, T](double t) -> Vector {
    const double s = t / T;
    const double v = index == 0 ? 1.0 : std::sin(index * std::numbers::pi * s) + 0.3 * index * s;
    return Vector::Constant(dim, v);
  };
}

GateauxResult gateaux_check(const MeanFieldSolution& sol, const PathEnsemble& ensemble,
                            Player which, const ControlDirection& direction, double theta,
                            const AgentOptions& agent_options) {
  if (!(theta > 0.0)) throw Error(ErrorCode::InvalidArgument, "theta must be positive");
  std::vector<double> j0, jp, jm;
  if (which == Player::Dominating) {
    const LqModel& m = sol.model;
    const PopulationResponse resp = population_response(sol, direction);
    const Matrix dx0 = stack(resp.x0), dz = stack(resp.z), du = stack(resp.control);
    for (int i = 0; i < ensemble.n_paths; ++i) {
      const auto slot = static_cast<std::size_t>(i);
      const Matrix x0 = ensemble.x[slot].topRows(m.n0);
      const Matrix z = ensemble.x[slot].bottomRows(m.n1);
      const Matrix& u0 = ensemble.u0[slot];
      j0.push_back(dominating_cost(m, sol.grid, x0, z, u0));
      jp.push_back(dominating_cost(m, sol.grid, x0 + theta * dx0, z + theta * dz, u0 + theta * du));
      jm.push_back(dominating_cost(m, sol.grid, x0 - theta * dx0, z - theta * dz, u0 - theta * du));
    }
  } else {
    AgentOptions opt = agent_options;
    opt.perturbation = AgentPerturbation{direction, theta};
    const AgentEnsemble agents = simulate_agents(sol, ensemble, opt);
    j0 = agents.cost;
    jp = agents.cost_plus;
    jm = agents.cost_minus;
  }
  const std::size_t n = j0.size();
  std::vector<double> deriv(n), second(n), inc_p(n), inc_m(n);
  for (std::size_t i = 0; i < n; ++i) {
    deriv[i] = (jp[i] - jm[i]) / (2.0 * theta);
    second[i] = (jp[i] + jm[i] - 2.0 * j0[i]) / (theta * theta);
    inc_p[i] = jp[i] - j0[i];
    inc_m[i] = jm[i] - j0[i];
  }
  GateauxResult out;
  const Estimate d = mean_and_stderr(deriv);
  out.derivative = d.mean;
  out.derivative_stderr = d.stderr_;
  out.second_difference = mean_and_stderr(second).mean;
  out.cost_zero = mean_and_stderr(j0);
  out.cost_plus = mean_and_stderr(jp);
  out.cost_minus = mean_and_stderr(jm);
  out.increase_plus = mean_and_stderr(inc_p);
  out.increase_minus = mean_and_stderr(inc_m);
  return out;
}

}  // namespace lqmfg
