#include "helpers.hpp"
#include "lqmfg/error.hpp"
#include "lqmfg/mfg.hpp"
#include "lqmfg/wellposed.hpp"

#include <doctest.h>

#include <cmath>

using namespace lqmfg;
using namespace lqmfg::test;

namespace {

Vector zero_dir(double) { return Vector::Zero(1); }

// One RK4 step of the closed-loop drift from node k, read off the solution's
// fine-grid coefficients.
Vector rk4_step(const MeanFieldSolution& sol, int k, const Vector& x) {
  const BlockSystem& b = sol.blocks;
  auto f = [&](int j, const Vector& y) -> Vector {
    return b.forward_matrix() * y - b.control_gain * (sol.gamma_fine(j) * y + sol.offset_fine(j));
  };
  const double h = sol.grid.dt();
  const Vector r1 = f(2 * k, x);
  const Vector r2 = f(2 * k + 1, x + 0.5 * h * r1);
  const Vector r3 = f(2 * k + 1, x + 0.5 * h * r2);
  const Vector r4 = f(2 * k + 2, x + h * r3);
  return x + (h / 6.0) * (r1 + 2 * r2 + 2 * r3 + r4);
}

// Largest one-step defect of the backward equation
//   p(k+1) - p(k) = -(A' p + (Q + S) x + k) dt + Gamma(k+1) sigma dW
// over all paths and steps, divided by dt.
double backward_defect(const MeanFieldSolution& sol, const PathEnsemble& ens) {
  const BlockSystem& b = sol.blocks;
  const double dt = sol.grid.dt();
  double worst = 0.0;
  for (int i = 0; i < ens.n_paths; ++i) {
    const Matrix& x = ens.x[static_cast<std::size_t>(i)];
    const Matrix& p = ens.p[static_cast<std::size_t>(i)];
    for (int k = 0; k < sol.grid.n_steps; ++k) {
      const Vector drift = b.drift.transpose() * p.col(k) + b.running_total() * x.col(k) + b.running_offset;
      const Vector mart = sol.gamma_fine(2 * k + 2) * b.noise * ens.dW0[static_cast<std::size_t>(i)].col(k);
      const Vector d = p.col(k + 1) - p.col(k) + drift * dt - mart;
      worst = std::max(worst, d.cwiseAbs().maxCoeff() / dt);
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("zero-cost model: everything vanishes") {
  LqModel m = zero_model();
  m.sigma0 = scalar(0.3);
  m.sigma1 = scalar(0.2);
  const MeanFieldSolution sol = zero_cost_solution(m, TimeGrid(1.0, 50));
  for (int j = 0; j <= 100; ++j) {
    CHECK(max_abs(sol.gamma_fine(j)) == 0.0);
    CHECK(max_abs(sol.offset_fine(j)) == 0.0);
    CHECK(max_abs(sol.agent_P_fine(j)) == 0.0);
  }
  const Vector x = Vector{{0.4, -1.0, 2.0}};
  CHECK(max_abs(sol.dominating_control(7, x)) == 0.0);
  CHECK(max_abs(sol.agent_control(7, Vector::Constant(1, 3.0), x)) == 0.0);
}

TEST_CASE("zero-cost model with zero data stays at zero") {
  const LqModel m = zero_model();
  const MeanFieldSolution sol = zero_cost_solution(m, TimeGrid(1.0, 50));
  const PathEnsemble ens = simulate_common(sol, 20, 3);
  for (const auto& x : ens.x) CHECK(max_abs(x) == 0.0);
  AgentOptions ao;
  ao.n_agents = 8;
  ao.keep_paths = true;
  const AgentEnsemble ag = simulate_agents(sol, ens, ao);
  for (const auto& path : ag.x1)
    for (const auto& a : path) CHECK(max_abs(a) == 0.0);
  const CostEstimate c = estimate_costs(sol, ens, ag);
  CHECK(c.dominating.mean == 0.0);
  CHECK(c.agent.mean == 0.0);
}

TEST_CASE("decoupled model: dominating control is the standalone regulator") {
  const LqModel m = decoupled_model();
  const TimeGrid g(1.0, 200);
  const MeanFieldSolution sol = solve_mfg(m, g);

  LqModel x0_as_agent = m;
  x0_as_agent.A1 = m.A0;
  x0_as_agent.C1 = m.C0;
  x0_as_agent.R1 = m.R0;
  x0_as_agent.Q1 = m.Q0;
  x0_as_agent.Qbar1 = m.Qbar0;
  const AgentRiccatiPath p0 = solve_agent_riccati(x0_as_agent, g.refined());
  const Matrix c0 = dominating_control_gain(m);
  // -g1' = (A0' - P0 C0 R0^-1 C0') g1 - Q0 zeta0,  g1(T) = -Qbar0 zetabar0
  auto a = [&](double t) -> Matrix { return m.A0.transpose() - p0.P.at(t) * c0; };
  auto b = [&](double) -> Vector { return -m.Q0 * m.zeta0; };
  const VectorPath g1 = integrate_affine_ode(a, b, -m.Qbar0 * m.zetabar0, g, Direction::Backward);

  std::mt19937_64 rng(1);
  for (int k = 0; k <= g.n_steps; k += 10) {
    const Vector x = random_matrix(rng, 3, 1);
    const Vector expected = -m.R0.inverse() * m.C0.transpose() * (p0.P[2 * k] * x.head(1) + g1[k]);
    CHECK(max_abs(sol.dominating_control(k, x) - expected) <= 1e-9);
  }
}

TEST_CASE("agent offset reconstruction is consistent with p") {
  const MeanFieldSolution sol = solve_mfg(benchmark_m1(), TimeGrid(1.0, 100));
  const PathEnsemble ens = simulate_common(sol, 50, 2);
  for (int i = 0; i < ens.n_paths; ++i) {
    for (int k = 0; k <= 100; ++k) {
      const Vector x = ens.x[static_cast<std::size_t>(i)].col(k);
      const Vector m = ens.p[static_cast<std::size_t>(i)].col(k).tail(1);
      const Vector n = sol.agent_P_fine(2 * k) * x.tail(1) + sol.agent_offset(k, x);
      CHECK(max_abs(m - n) <= 1e-8);
    }
  }
}

TEST_CASE("ensemble bookkeeping") {
  const MeanFieldSolution sol = solve_mfg(benchmark_m1(), TimeGrid(1.0, 100));
  const PathEnsemble ens = simulate_common(sol, 30, 4);
  for (int i = 0; i < 30; ++i) {
    const Matrix& x = ens.x[static_cast<std::size_t>(i)];
    CHECK(x(1, 0) == 0.0);
    CHECK(x(2, 0) == 0.5);
    for (int k = 0; k <= 100; ++k) {
      const Vector p = sol.adjoint(k, x.col(k));
      CHECK(ens.p[static_cast<std::size_t>(i)].col(k) == p);
      CHECK(ens.u0[static_cast<std::size_t>(i)].col(k).isApprox(sol.dominating_control(k, x.col(k)), 1e-14));
    }
  }
  CHECK_THROWS_AS(simulate_common(sol, 0, 1), Error);
}

TEST_CASE("without common noise every path is the ODE solution") {
  const LqModel m = benchmark_m1_deterministic();
  const MeanFieldSolution sol = solve_mfg(m, TimeGrid(1.0, 200));
  const PathEnsemble ens = simulate_common(sol, 5, 8);
  const BlockSystem& b = sol.blocks;
  const MatrixPath fine_gamma = sol.gamma.gamma;
  auto rhs = [&](double t, const Matrix& x) -> Matrix {
    const double s = t / sol.grid.dt() * 2.0;
    const int j = static_cast<int>(std::lround(s));
    return b.forward_matrix() * x - b.control_gain * (sol.gamma_fine(j) * x + sol.offset_fine(j));
  };
  const MatrixPath ode = integrate_matrix_ode(rhs, b.init_mean, sol.grid, Direction::Forward);
  for (int i = 0; i < 5; ++i) {
    for (int k = 0; k <= 200; ++k) {
      CHECK(max_abs(ens.x[static_cast<std::size_t>(i)].col(k) - ode[k]) <= 1e-6);
    }
  }
  const VectorPath mp = mean_path(sol);
  for (int k = 0; k <= 200; ++k) CHECK(max_abs(mp[k] - ode[k]) <= 1e-12);
}

TEST_CASE("Monte Carlo mean follows the mean ODE") {
  const MeanFieldSolution sol = solve_mfg(benchmark_m1(), TimeGrid(1.0, 100));
  const PathEnsemble ens = simulate_common(sol, 2000, 1);
  const VectorPath mp = mean_path(sol);
  std::vector<double> s(2000);
  double worst = 0.0;
  for (int k = 0; k <= 100; ++k) {
    for (int c = 0; c < 3; ++c) {
      for (int i = 0; i < 2000; ++i) s[static_cast<std::size_t>(i)] = ens.x[static_cast<std::size_t>(i)](c, k);
      const Estimate e = mean_and_stderr(s);
      if (e.stderr_ == 0.0) {
        CHECK(std::abs(e.mean - mp[k](c)) <= 1e-12);
      } else {
        worst = std::max(worst, std::abs(e.mean - mp[k](c)) / e.stderr_);
      }
    }
  }
  CHECK(worst <= 3.0);
}

TEST_CASE("one step is the RK4 drift step plus sigma dW; z carries no martingale part") {
  const MeanFieldSolution sol = solve_mfg(benchmark_m1(), TimeGrid(1.0, 100));
  const PathEnsemble ens = simulate_common(sol, 40, 6);
  double z_mart = 0.0, x0_err = 0.0;
  for (int i = 0; i < ens.n_paths; ++i) {
    const Matrix& x = ens.x[static_cast<std::size_t>(i)];
    for (int k = 0; k < 100; ++k) {
      const Vector pred = rk4_step(sol, k, x.col(k));
      z_mart = std::max(z_mart, std::abs(x(2, k + 1) - pred(2)));
      z_mart = std::max(z_mart, std::abs(x(1, k + 1) - pred(1)));
      const double noise = sol.model.sigma0(0, 0) * ens.dW0[static_cast<std::size_t>(i)](0, k);
      x0_err = std::max(x0_err, std::abs(x(0, k + 1) - pred(0) - noise));
    }
  }
  CHECK(z_mart <= 1e-9);
  CHECK(x0_err <= 1e-12);
}

TEST_CASE("p satisfies the backward equation step by step") {
  // The one-step defect divided by dt is O(dt).
  const LqModel m = benchmark_m1();
  const MeanFieldSolution coarse = solve_mfg(m, TimeGrid(1.0, 100));
  const MeanFieldSolution fine = solve_mfg(m, TimeGrid(1.0, 200));
  const double d1 = backward_defect(coarse, simulate_common(coarse, 20, 7));
  const double d2 = backward_defect(fine, simulate_common(fine, 20, 7));
  MESSAGE("backward defect / dt: " << d1 << " at 100 steps, " << d2 << " at 200 steps");
  CHECK(d1 <= 0.5);
  CHECK(d2 <= 0.6 * d1);
}

TEST_CASE("agents without idiosyncratic noise coincide with z") {
  LqModel m = benchmark_m1();
  m.sigma1.setZero();
  m.xi1_cov.setZero();
  const MeanFieldSolution sol = solve_mfg(m, TimeGrid(1.0, 100));
  const PathEnsemble ens = simulate_common(sol, 10, 3);
  AgentOptions ao;
  ao.n_agents = 5;
  ao.keep_paths = true;
  const AgentEnsemble ag = simulate_agents(sol, ens, ao);
  for (int i = 0; i < 10; ++i) {
    const Matrix z = ens.x[static_cast<std::size_t>(i)].bottomRows(1);
    for (const auto& a : ag.x1[static_cast<std::size_t>(i)]) CHECK(max_abs(a - z) <= 1e-6);
  }
  const EquilibriumResidual r = equilibrium_residual(sol, ens, ag);
  CHECK(r.mean.mean <= 1e-6);
}

TEST_CASE("agent feedback is linear: the agent-averaged control matches the formula at the mean") {
  const MeanFieldSolution sol = solve_mfg(benchmark_m1(), TimeGrid(1.0, 100));
  const PathEnsemble ens = simulate_common(sol, 20, 9);
  AgentOptions ao;
  ao.n_agents = 256;
  const AgentEnsemble ag = simulate_agents(sol, ens, ao);
  const Matrix gain = sol.model.R1.inverse() * sol.model.C1.transpose();
  for (int i = 0; i < 20; ++i) {
    const Matrix& x = ens.x[static_cast<std::size_t>(i)];
    for (int k = 0; k <= 100; ++k) {
      const Vector mean_x1 = ag.mean_x1[static_cast<std::size_t>(i)].col(k);
      const Vector at_mean = sol.agent_control(k, mean_x1, x.col(k));
      CHECK(max_abs(ag.mean_u1[static_cast<std::size_t>(i)].col(k) - at_mean) <= 1e-12);
      // Against z the gap is the Monte Carlo error of the agent mean.
      const Vector at_z = sol.agent_control(k, x.col(k).tail(1), x.col(k));
      const double bound = max_abs(gain * sol.agent_P_fine(2 * k)) * max_abs(mean_x1 - x.col(k).tail(1));
      CHECK(max_abs(ag.mean_u1[static_cast<std::size_t>(i)].col(k) - at_z) <= bound + 1e-12);
    }
  }
}

TEST_CASE("prefix means equal the means of smaller ensembles") {
  const MeanFieldSolution sol = solve_mfg(benchmark_m1(), TimeGrid(1.0, 50));
  const PathEnsemble ens = simulate_common(sol, 4, 5);
  AgentOptions ao;
  ao.n_agents = 32;
  ao.prefix_counts = {8, 32};
  const AgentEnsemble big = simulate_agents(sol, ens, ao);
  ao.n_agents = 8;
  ao.prefix_counts.clear();
  const AgentEnsemble small = simulate_agents(sol, ens, ao);
  for (int i = 0; i < 4; ++i) {
    CHECK(max_abs(big.prefix_mean_x1[0][static_cast<std::size_t>(i)] - small.mean_x1[static_cast<std::size_t>(i)]) <= 1e-14);
    CHECK(max_abs(big.prefix_mean_x1[1][static_cast<std::size_t>(i)] - big.mean_x1[static_cast<std::size_t>(i)]) <= 1e-14);
  }
}

TEST_CASE("equilibrium residual decays like n^-1/2 and a corrupted feedback does not") {
  const MeanFieldSolution sol = solve_mfg(benchmark_m1(), TimeGrid(1.0, 50));
  const PathEnsemble ens = simulate_common(sol, 200, 1);
  const std::vector<int> counts{32, 64, 128, 256, 512, 1024};
  AgentOptions ao;
  ao.seed = 1;
  const ResidualDecay good = equilibrium_decay(sol, ens, counts, ao);
  CHECK(good.fit.slope == doctest::Approx(-0.5).epsilon(0.3));
  ao.p_scale = 2.0;
  const ResidualDecay bad = equilibrium_decay(sol, ens, counts, ao);
  CHECK(bad.fit.slope > -0.1);
}

TEST_CASE("dominating cost for a constant target") {
  LqModel m = zero_model();
  m.Q0 = scalar(1);
  m.Q1 = scalar(1);
  m.C0.setZero();
  m.C1.setZero();
  m.zeta0 = Vector::Constant(1, 0.7);
  m.T = 2.0;
  const MeanFieldSolution sol = solve_mfg(m, TimeGrid(2.0, 40));
  const PathEnsemble ens = simulate_common(sol, 3, 1);
  for (double j : dominating_costs(sol, ens)) CHECK(j == doctest::Approx(2.0 * 0.49).epsilon(1e-14));
}

TEST_CASE("Gateaux: zero direction gives exactly zero") {
  const MeanFieldSolution sol = solve_mfg(benchmark_m1(), TimeGrid(1.0, 50));
  const PathEnsemble ens = simulate_common(sol, 50, 1);
  AgentOptions ao;
  ao.n_agents = 8;
  for (Player who : {Player::Dominating, Player::Agent}) {
    const GateauxResult g = gateaux_check(sol, ens, who, zero_dir, 0.05, ao);
    CHECK(g.derivative == 0.0);
    CHECK(g.second_difference == 0.0);
  }
  CHECK_THROWS_AS(gateaux_check(sol, ens, Player::Dominating, zero_dir, 0.0), Error);
}

TEST_CASE("Gateaux: constant direction is stationary and convex") {
  const MeanFieldSolution sol = solve_mfg(benchmark_m1(), TimeGrid(1.0, 200));
  const PathEnsemble ens = simulate_common(sol, 2000, 1);
  const ControlDirection one = probe_direction(0, 1, 1.0);
  const GateauxResult d = gateaux_check(sol, ens, Player::Dominating, one, 0.05);
  CHECK(std::abs(d.derivative) <= 3.0 * d.derivative_stderr);
  CHECK(d.second_difference > 0.0);
  AgentOptions ao;
  ao.n_agents = 16;
  ao.seed = 1;
  const PathEnsemble small = simulate_common(sol, 500, 1);
  const GateauxResult a = gateaux_check(sol, small, Player::Agent, one, 0.05, ao);
  CHECK(std::abs(a.derivative) <= 3.0 * a.derivative_stderr);
  CHECK(a.second_difference > 0.0);
}

TEST_CASE("perturbed dominating controls never beat the equilibrium") {
  const MeanFieldSolution sol = solve_mfg(benchmark_m1(), TimeGrid(1.0, 100));
  const PathEnsemble ens = simulate_common(sol, 2000, 2);
  for (int d = 0; d < 5; ++d) {
    const GateauxResult g = gateaux_check(sol, ens, Player::Dominating, probe_direction(d, 1, 1.0), 0.1);
    CHECK(g.increase_plus.mean >= -2.0 * g.increase_plus.stderr_);
    CHECK(g.increase_minus.mean >= -2.0 * g.increase_minus.stderr_);
  }
}

TEST_CASE("population response to a zero direction is zero") {
  const MeanFieldSolution sol = solve_mfg(benchmark_m1(), TimeGrid(1.0, 50));
  const PopulationResponse r = population_response(sol, zero_dir);
  for (int k = 0; k <= 50; ++k) {
    CHECK(max_abs(r.x0[k]) == 0.0);
    CHECK(max_abs(r.z[k]) == 0.0);
  }
}

TEST_CASE("Picard map: trivial cases") {
  const BlockSystem b = assemble_blocks(benchmark_m1());
  const TimeGrid g(1.0, 50);
  VectorPath zero{g, std::vector<Vector>(51, Vector::Zero(3))};
  for (const auto& v : picard_map(b, zero).values) CHECK(max_abs(v) == 0.0);

  BlockSystem free = b;
  free.coupling.setZero();
  free.running_cross.setZero();
  free.terminal_cross.setZero();
  VectorPath x{g, {}};
  for (int k = 0; k <= 50; ++k) x.values.push_back(Vector{{std::sin(3.0 * g.t(k)), 1.0, g.t(k)}});
  for (const auto& v : picard_map(free, x).values) CHECK(max_abs(v) == 0.0);

  const PicardResult r = picard_iterate(free, g, 1e-12, 10, PicardSources::None);
  CHECK(r.converged);
  CHECK(r.iterations == 1);
  for (const auto& v : r.x.values) CHECK(max_abs(v) == 0.0);

  VectorPath wrong{TimeGrid(1.0, 40), std::vector<Vector>(41, Vector::Zero(3))};
  CHECK_THROWS_AS(PicardMap(b, g)(wrong), Error);
}

TEST_CASE("Picard fixed point agrees with the Riccati route") {
  const LqModel m = benchmark_m1_deterministic();
  const TimeGrid g(1.0, 200);
  const MeanFieldSolution sol = solve_mfg(m, g);
  const BlockSystem& b = sol.blocks;
  const PicardResult r = picard_iterate(b, g, 1e-12, 200);
  REQUIRE(r.converged);
  CHECK(r.ratio < 1.0);
  const VectorPath again = PicardMap(b, g, PicardSources::Model)(r.x);
  VectorPath diff{g, {}};
  for (int k = 0; k <= 200; ++k) diff.values.push_back(again[k] - r.x[k]);
  CHECK(hnorm(diff, b.running_weight, b.terminal_weight) <= 1e-8);
  const VectorPath mp = mean_path(sol);
  for (int k = 0; k <= 200; ++k) diff[k] = r.x[k] - mp[k];
  CHECK(hnorm(diff, b.running_weight, b.terminal_weight) <= 1e-5);
}

TEST_CASE("Picard iteration fails to contract with ten times the coupling") {
  BlockSystem b = assemble_blocks(benchmark_m1_deterministic());
  b.coupling *= 10.0;
  const PicardResult r = picard_iterate(b, TimeGrid(1.0, 100), 1e-12, 100);
  CHECK((!r.converged || r.ratio > 1.0));
}

TEST_CASE("increment ratios") {
  CHECK(increment_ratio({1.0, 0.5, 0.2, 0.1}) == doctest::Approx(0.5));
  CHECK(asymptotic_ratio({1.0, 0.5, 0.25, 0.125, 0.0625}) == doctest::Approx(0.5));
  CHECK(increment_ratio({1.0, 1e-13, 1e-13}) == 0.0);  // round-off increments are ignored
  CHECK(increment_ratio({}) == 0.0);
}
