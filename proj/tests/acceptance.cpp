// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero when any fails. All randomness uses seed 1.

#include "helpers.hpp"
#include "lqmfg/commands.hpp"
#include "lqmfg/error.hpp"
#include "lqmfg/nash.hpp"
#include "lqmfg/riccati.hpp"
#include "lqmfg/wellposed.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

using namespace lqmfg;
using namespace lqmfg::test;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSeed = 1;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

// 1. Agent Riccati against tanh(T - t) and its step-halving order.
Outcome riccati_oracle() {
  LqModel m = benchmark_m1();
  m.A1 = scalar(0);
  m.C1 = m.R1 = m.Q1 = scalar(1);
  m.Qbar1 = scalar(0);
  auto error = [&](int n) {
    const TimeGrid g(1.0, n);
    const AgentRiccatiPath p = solve_agent_riccati(m, g);
    double e = 0.0;
    for (int k = 0; k <= n; ++k) e = std::max(e, std::abs(p.P[k](0, 0) - std::tanh(1.0 - g.t(k))));
    return e;
  };
  const double e1000 = error(1000);
  const double order = std::log2(error(20) / error(40));
  return {e1000 <= 1e-6 && order >= 3.7 && order <= 4.3,
          "max error " + fmt(e1000) + " at 1000 steps, order " + fmt(order)};
}

// 2. Pointwise residual of the Gamma equation on M1.
Outcome gamma_residual() {
  const BlockSystem b = assemble_blocks(benchmark_m1());
  const GammaPath gam = solve_gamma(b, TimeGrid(1.0, 400));
  const double r = max_of(riccati_residual(gam, b));
  return {r <= 1e-5, "max residual " + fmt(r) + " at 400 steps"};
}

// 3. Backward residual of the affine ansatz with the corrected and the
// printed offset drift.
Outcome offset_drift() {
  const MeanFieldSolution sol = solve_mfg(benchmark_m1(), TimeGrid(1.0, 400));
  const GammaPath gam = sol.gamma_on_grid();
  RiccatiOptions printed;
  printed.offset_drift = OffsetDrift::PrintedCoupling;
  const OffsetPath wrong{solve_offset(sol.blocks, sol.gamma, printed).g.coarsened()};
  std::vector<VectorPath> paths{mean_path(sol)};
  const PathEnsemble ens = simulate_common(sol, 5, kSeed);
  for (int i = 0; i < ens.n_paths; ++i) paths.push_back(ens.state_path(i));
  double good = 0.0, bad = std::numeric_limits<double>::infinity();
  for (const auto& x : paths) {
    good = std::max(good, max_of(ansatz_residual(gam, sol.offset_on_grid(), sol.blocks, x)));
    bad = std::min(bad, max_of(ansatz_residual(gam, wrong, sol.blocks, x)));
  }
  const bool differ = max_abs(sol.blocks.coupling - sol.blocks.control_gain) > 0.0;
  return {differ && good <= 1e-5 && bad > 1e-2,
          "corrected " + fmt(good) + ", printed " + fmt(bad) + " (over " + std::to_string(paths.size()) +
              " paths)"};
}

// 4. Picard fixed point against the Riccati mean on deterministic M1.
Outcome two_routes() {
  const TimeGrid g(1.0, 400);
  const MeanFieldSolution sol = solve_mfg(benchmark_m1_deterministic(), g);
  const BlockSystem& b = sol.blocks;
  const PicardResult r = picard_iterate(b, g, 1e-12, 200);
  const VectorPath mp = mean_path(sol);
  VectorPath diff{g, {}};
  for (int k = 0; k <= g.n_steps; ++k) diff.values.push_back(r.x[k] - mp[k]);
  const double agree = hnorm(diff, b.running_weight, b.terminal_weight);
  const double rho = empirical_contraction(b, 8, kSeed, g);
  const double rel = std::abs(r.ratio - rho) / rho;
  return {r.converged && agree <= 1e-4 && r.ratio < 1.0 && r.asymptotic_ratio < 1.0 && rel <= 0.1,
          "H distance " + fmt(agree) + ", increment ratio " + fmt(r.ratio) + " vs empirical contraction " +
              fmt(rho) + " (" + fmt(100 * rel) + "%), tail ratio " + fmt(r.asymptotic_ratio)};
}

// 5. Arithmetic of the sufficient condition.
Outcome condition_arithmetic() {
  const TimeGrid g(1.0, 400);
  const ConditionReport dec = sufficient_condition(assemble_blocks(decoupled_model()), g);
  const ConditionReport half = sufficient_condition(scalar_system(0, 0.5, 0, 0), g);
  const ConditionReport two = sufficient_condition(scalar_system(0, 2.0, 0, 0), g);
  const bool ok = dec.lhs == 1.0 && dec.holds && std::abs(half.lhs - (1.0 + std::sqrt(2.0) / 2.0)) <= 1e-4 &&
                  half.holds && !two.holds;
  return {ok, "decoupled " + fmt(dec.lhs) + ", b=0.5 gives " + std::to_string(half.lhs) + ", b=2 gives " +
                  fmt(two.lhs) + (two.holds ? " (holds)" : " (fails)")};
}

// 6. Conditional-mean residual against the agent count, and a negative control.
Outcome equilibrium_condition() {
  const MeanFieldSolution sol = solve_mfg(benchmark_m1(), TimeGrid(1.0, 100));
  const PathEnsemble ens = simulate_common(sol, 2000, kSeed);
  const std::vector<int> counts{32, 64, 128, 256, 512, 1024};
  AgentOptions ao;
  ao.seed = kSeed;
  const ResidualDecay good = equilibrium_decay(sol, ens, counts, ao);
  ao.p_scale = 2.0;
  const ResidualDecay bad = equilibrium_decay(sol, ens, counts, ao);
  return {std::abs(good.fit.slope + 0.5) <= 0.15 && bad.fit.slope > -0.1,
          "slope " + fmt(good.fit.slope) + ", corrupted P slope " + fmt(bad.fit.slope)};
}

// 7. Gateaux derivatives vanish and second differences are positive.
Outcome stationarity() {
  const MeanFieldSolution sol = solve_mfg(benchmark_m1(), TimeGrid(1.0, 200));
  const PathEnsemble ens = simulate_common(sol, 2000, kSeed);
  AgentOptions ao;
  ao.n_agents = 16;
  ao.seed = kSeed;
  bool ok = true;
  double worst_z = 0.0, min_second = std::numeric_limits<double>::infinity();
  for (Player who : {Player::Dominating, Player::Agent}) {
    const int dim = who == Player::Dominating ? sol.model.m0 : sol.model.m1;
    for (int d = 0; d < 5; ++d) {
      const GateauxResult g = gateaux_check(sol, ens, who, probe_direction(d, dim, 1.0), 0.05, ao);
      const double z = std::abs(g.derivative) / g.derivative_stderr;
      worst_z = std::max(worst_z, z);
      min_second = std::min(min_second, g.second_difference);
      ok = ok && std::abs(g.derivative) <= 3.0 * g.derivative_stderr && g.second_difference > 0.0;
    }
  }
  return {ok, "largest |derivative| / stderr " + fmt(worst_z) + ", smallest second difference " +
                  fmt(min_second)};
}

// 8. N-player rates and unilateral deviations.
Outcome nash_rates() {
  const MeanFieldSolution sol = solve_mfg(benchmark_m1(), TimeGrid(1.0, 100));
  RateStudyOptions o;
  o.n_paths = 200;
  o.seed = kSeed;
  const NashReport rep = rate_study(sol, o);
  bool ok = true;
  std::string detail;
  for (const ModeStudy& m : rep.modes) {
    const double s0 = m.state_dominating.fit.slope, s1 = m.state_agent.fit.slope;
    const double c = m.cost_absolute.fit.slope;
    ok = ok && !m.state_agent.floor && !m.state_dominating.floor && std::abs(s1 + 1.0) <= 0.2 &&
         std::abs(s0 + 1.0) <= 0.2 && !m.cost_absolute.floor && c <= -0.45;
    detail += to_string(m.mode) + ": agent state " + fmt(s1) + ", dominating state " + fmt(s0) +
              ", cost " + fmt(c) + "; ";
  }
  for (const DeviationRow& d : rep.deviations) {
    ok = ok && d.result.ok && d.N == 256;
    detail += d.name + " margin " + fmt(d.result.margin) + " (stderr " + fmt(d.result.difference.stderr_) +
              "); ";
  }
  ok = ok && rep.deviations.size() == 2;
  if (detail.size() >= 2) detail.resize(detail.size() - 2);
  return {ok, detail};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// 9. Byte-identical outputs across repeated runs and thread counts.
Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "lqmfg_acceptance";
  fs::remove_all(root);
  const std::vector<std::vector<std::string>> commands{
      {"simulate", "--steps", "100", "--paths", "200", "--agents", "16", "--seed", "1"},
      {"nash", "--steps", "50", "--agents", "16,32", "--paths", "40", "--seed", "1"}};
  bool ok = true;
  int compared = 0;
  for (const auto& base : commands) {
    std::vector<fs::path> dirs;
    for (const char* threads : {"1", "8", "8"}) {
      const fs::path dir = root / (base[0] + "_" + std::to_string(dirs.size()));
      auto args = base;
      args.insert(args.end(), {"--threads", threads, "--out", dir.string()});
      std::ostringstream out, err;
      if (run_command(args, out, err) != 0) return {false, base[0] + " failed: " + err.str()};
      dirs.push_back(dir);
    }
    for (const auto& entry : fs::directory_iterator(dirs[0])) {
      for (std::size_t i = 1; i < dirs.size(); ++i) {
        ok = ok && slurp(entry.path()) == slurp(dirs[i] / entry.path().filename());
        ++compared;
      }
    }
  }
  fs::remove_all(root);
  return {ok && compared > 0, std::to_string(compared) + " file comparisons (1, 8, 8 threads)"};
}

double brute_force_w2(const std::vector<double>& a, std::vector<double> b) {
  std::sort(b.begin(), b.end());
  double best = std::numeric_limits<double>::infinity();
  do {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
    best = std::min(best, acc / static_cast<double>(a.size()));
  } while (std::next_permutation(b.begin(), b.end()));
  return std::sqrt(best);
}

// 10. Sorted-sample W2 and the path-wise coupling bound.
Outcome w2_oracle() {
  std::mt19937_64 rng(kSeed);
  std::normal_distribution<double> z;
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 1 + trial % 6;
    std::vector<double> a(static_cast<std::size_t>(n)), b(static_cast<std::size_t>(n));
    for (auto& v : a) v = z(rng);
    for (auto& v : b) v = z(rng);
    const double w = wasserstein2_1d(a, b);
    worst = std::max(worst, std::abs(w - brute_force_w2(a, b)) / std::max(w, 1e-300));
  }
  const MeanFieldSolution sol = solve_mfg(benchmark_m1(), TimeGrid(1.0, 100));
  EmpiricalOptions o;
  o.n_agents = 64;
  o.n_paths = 100;
  o.seed = kSeed;
  const EmpiricalWorld w = simulate_empirical(sol, o);
  int violations = 0;
  for (int i = 0; i < w.n_paths; ++i) {
    const auto slot = static_cast<std::size_t>(i);
    const double d = wasserstein2_1d(w.y1_terminal[slot], w.x1_terminal[slot]);
    const double coupled = (w.y1_terminal[slot] - w.x1_terminal[slot]).colwise().squaredNorm().mean();
    if (d * d > coupled * (1.0 + 1e-12)) ++violations;
  }
  return {worst <= 1e-12 && violations == 0,
          "largest relative W2 deviation " + fmt(worst) + ", coupling bound violations " +
              std::to_string(violations) + " of " + std::to_string(w.n_paths)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"Riccati closed form", riccati_oracle},
      {"Gamma residual", gamma_residual},
      {"offset drift", offset_drift},
      {"two-route agreement", two_routes},
      {"sufficient condition arithmetic", condition_arithmetic},
      {"equilibrium condition", equilibrium_condition},
      {"stationarity and convexity", stationarity},
      {"epsilon-Nash rates", nash_rates},
      {"determinism", determinism},
      {"W2 oracle", w2_oracle},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << i + 1 << " (" << criteria[i].first
              << "): " << o.detail << " [" << fmt(secs) << " s]" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
