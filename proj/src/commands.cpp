#include "lqmfg/commands.hpp"

#include "lqmfg/mfg.hpp"
#include "lqmfg/nash.hpp"
#include "lqmfg/riccati.hpp"
#include "lqmfg/wellposed.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

namespace lqmfg {

using nlohmann::ordered_json;

ExitCode exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigParse:
    case ErrorCode::InvalidArgument:
      return ExitCode::ConfigParse;
    case ErrorCode::InvalidModel:
    case ErrorCode::SingularR:
    case ErrorCode::NonPositiveSplit:
    case ErrorCode::NotSPD:
      return ExitCode::ModelInvalid;
    case ErrorCode::IoError:
      return ExitCode::IoError;
    case ErrorCode::Diverged:
    case ErrorCode::NoGlobalSolution:
    case ErrorCode::InnerRiccatiFailure:
    case ErrorCode::LengthMismatch:
    case ErrorCode::DimensionUnsupported:
      return ExitCode::SolverFailure;
  }
  return ExitCode::SolverFailure;
}

std::string_view exit_name(ExitCode code) {
  switch (code) {
    case ExitCode::Ok: return "Ok";
    case ExitCode::ConfigParse: return "ConfigParse";
    case ExitCode::ModelInvalid: return "ModelInvalid";
    case ExitCode::SolverFailure: return "SolverFailure";
    case ExitCode::IoError: return "IoError";
  }
  return "Unknown";
}

namespace {

constexpr int kFormatVersion = 1;

ordered_json estimate_json(const Estimate& e) {
  return {{"mean", e.mean}, {"stderr", e.stderr_}};
}

// Non-finite values become null in JSON; keep them explicit as strings.
ordered_json real(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<double> on_nodes(const std::vector<double>& fine) {
  std::vector<double> out;
  for (std::size_t j = 0; j < fine.size(); j += 2) out.push_back(fine[j]);
  return out;
}

RunConfig echo_config(RunConfig c) {
  c.sim.threads = 0;
  return c;
}

ordered_json settings_json(const RunConfig& c) {
  ordered_json j = config_to_json(echo_config(c));
  j.erase("model");
  j.erase("output");
  return j;
}

void write_file(const std::filesystem::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << contents;
  out.close();
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

std::string condition_table(const ConditionReport& r, double bound) {
  std::ostringstream os;
  auto row = [&](const std::string& name, const std::string& value) {
    os << std::left << std::setw(20) << name << value << '\n';
  };
  row("T", fmt(r.T));
  row("norm", r.norm == MatrixNorm::Spectral ? "spectral" : "frobenius");
  row("phi_norm_T", fmt(r.phi_norm_T));
  row("NS", fmt(r.NS));
  row("B_weighted", fmt(r.B_weighted));
  row("lhs", fmt(r.lhs));
  row("holds", r.holds ? "true" : "false");
  row("contraction_bound", fmt(bound));
  return os.str();
}

ordered_json condition_json(const ConditionReport& r) {
  ordered_json j;
  j["T"] = r.T;
  j["norm"] = r.norm == MatrixNorm::Spectral ? "spectral" : "frobenius";
  j["phi_norm_T"] = real(r.phi_norm_T);
  j["NS"] = real(r.NS);
  j["B_weighted"] = real(r.B_weighted);
  j["lhs"] = real(r.lhs);
  j["holds"] = r.holds;
  j["contraction_bound"] = real(contraction_bound(r));
  return j;
}

ResultSet run_solve(const RunConfig& c) {
  const MeanFieldSolution sol = solve_mfg(c.model, c.time_grid(), c.solver.solve_options());
  const bool res = c.solver.emit_residuals;
  ResultSet rs{"solve", {}};
  {
    std::ostringstream os;
    std::vector<std::pair<std::string, std::vector<double>>> extra;
    if (res) extra.emplace_back("residual", on_nodes(riccati_residual(sol.gamma, sol.blocks)));
    write_csv(os, sol.gamma_on_grid().gamma, "gamma", extra);
    rs.files.push_back({"gamma.csv", os.str(),
                        "t, gamma_i_j (row-major entries of Gamma, i, j < n0 + 2 n1)" +
                            std::string(res ? ", residual (max-abs Riccati defect)" : "")});
  }
  {
    std::ostringstream os;
    std::vector<std::pair<std::string, std::vector<double>>> extra;
    if (res) {
      extra.emplace_back("residual", on_nodes(offset_residual(sol.offset, sol.gamma, sol.blocks)));
    }
    write_csv(os, sol.offset_on_grid().g, "g", extra);
    rs.files.push_back({"offset.csv", os.str(),
                        "t, g_i (offset of p = Gamma x + g)" +
                            std::string(res ? ", residual (max-abs offset ODE defect)" : "")});
  }
  {
    std::ostringstream os;
    std::vector<std::pair<std::string, std::vector<double>>> extra;
    if (res) extra.emplace_back("residual", on_nodes(riccati_residual(sol.agent_P, sol.model)));
    write_csv(os, sol.agent_P_on_grid().P, "P", extra);
    rs.files.push_back({"agent_p.csv", os.str(),
                        "t, P_i_j (row-major entries of the agent Riccati solution)" +
                            std::string(res ? ", residual (max-abs Riccati defect)" : "")});
  }
  return rs;
}

ResultSet run_simulate(const RunConfig& c) {
  const MeanFieldSolution sol = solve_mfg(c.model, c.time_grid(), c.solver.solve_options());
  const PathEnsemble ens = simulate_common(sol, c.sim.n_paths, c.sim.seed, c.sim.threads);
  AgentOptions ao;
  ao.n_agents = c.sim.n_agents;
  ao.seed = c.sim.seed;
  ao.threads = c.sim.threads;
  const AgentEnsemble agents = simulate_agents(sol, ens, ao);
  const CostEstimate costs = estimate_costs(sol, ens, agents);
  const EquilibriumResidual eq = equilibrium_residual(sol, ens, agents);
  const VectorPath mf = mean_path(sol);

  const int dim = sol.blocks.dim;
  std::ostringstream csv;
  csv << 't';
  for (int i = 0; i < dim; ++i) csv << ",mean_x_" << i;
  for (int i = 0; i < dim; ++i) csv << ",stderr_x_" << i;
  for (int i = 0; i < dim; ++i) csv << ",ode_x_" << i;
  csv << '\n';
  double worst = 0.0;
  std::vector<double> samples(static_cast<std::size_t>(ens.n_paths));
  for (int k = 0; k < sol.grid.size(); ++k) {
    std::vector<Estimate> est;
    for (int i = 0; i < dim; ++i) {
      for (int p = 0; p < ens.n_paths; ++p) samples[static_cast<std::size_t>(p)] = ens.x[static_cast<std::size_t>(p)](i, k);
      est.push_back(mean_and_stderr(samples));
      const double gap = std::abs(est.back().mean - mf[k](i));
      if (est.back().stderr_ > 0) worst = std::max(worst, gap / est.back().stderr_);
    }
    csv << fmt(sol.grid.t(k));
    for (const auto& e : est) csv << ',' << fmt(e.mean);
    for (const auto& e : est) csv << ',' << fmt(e.stderr_);
    for (int i = 0; i < dim; ++i) csv << ',' << fmt(mf[k](i));
    csv << '\n';
  }

  ordered_json j;
  j["format_version"] = kFormatVersion;
  j["n_paths"] = ens.n_paths;
  j["n_agents"] = agents.n_agents;
  j["seed"] = c.sim.seed;
  j["cost_dominating"] = estimate_json(costs.dominating);
  j["cost_agent"] = estimate_json(costs.agent);
  j["equilibrium_residual"] = estimate_json(eq.mean);
  j["mean_vs_ode_max_stderrs"] = worst;
  ResultSet rs{"simulate", {}};
  rs.files.push_back({"mean_path.csv", csv.str(),
                      "t, mean_x_i (ensemble mean of x = (x0, r, z)), stderr_x_i, ode_x_i "
                      "(mean ODE without noise)"});
  rs.files.push_back({"simulate_summary.json", j.dump(2) + "\n",
                      "costs J0 and J1 with standard errors, equilibrium residual "
                      "E max_t |mean_i x1^i - z|"});
  return rs;
}

ResultSet run_picard(const RunConfig& c) {
  const TimeGrid grid = c.time_grid();
  const BlockSystem blocks = assemble_blocks(c.model, c.solver.solve_options().split);
  const PicardResult pr = picard_iterate(blocks, grid, c.picard.tol, c.picard.max_iter);
  const ConditionReport cond = sufficient_condition(blocks, grid, c.solver.norm);

  ordered_json j;
  j["format_version"] = kFormatVersion;
  j["converged"] = pr.converged;
  j["iterations"] = pr.iterations;
  j["ratio"] = real(pr.ratio);
  j["asymptotic_ratio"] = real(pr.asymptotic_ratio);
  ordered_json inc = ordered_json::array();
  for (double v : pr.increments) inc.push_back(real(v));
  j["increments"] = inc;
  j["condition_holds"] = cond.holds;
  j["contraction_bound"] = real(contraction_bound(cond));
  j["empirical_contraction"] =
      real(empirical_contraction(blocks, c.picard.n_probes, c.sim.seed, grid));
  if (pr.converged) {
    const VectorPath again = PicardMap(blocks, grid, PicardSources::Model)(pr.x);
    VectorPath diff{grid, {}};
    for (int k = 0; k < grid.size(); ++k) diff.values.push_back(again[k] - pr.x[k]);
    j["fixed_point_residual"] = hnorm(diff, blocks.running_weight, blocks.terminal_weight);
    try {
      const MeanFieldSolution sol = solve_mfg(c.model, grid, c.solver.solve_options());
      const VectorPath mf = mean_path(sol);
      for (int k = 0; k < grid.size(); ++k) diff[k] = pr.x[k] - mf[k];
      j["riccati_agreement"] = hnorm(diff, blocks.running_weight, blocks.terminal_weight);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoGlobalSolution) throw;
      j["riccati_agreement"] = nullptr;
    }
  } else {
    j["fixed_point_residual"] = nullptr;
    j["riccati_agreement"] = nullptr;
  }
  ResultSet rs{"picard", {}};
  std::ostringstream csv;
  write_csv(csv, pr.x, "x");
  rs.files.push_back({"picard_path.csv", csv.str(), "t, x_i (last Picard iterate)"});
  rs.files.push_back({"picard.json", j.dump(2) + "\n",
                      "increment history in the H-norm, observed ratios, contraction "
                      "estimates, fixed-point residual and distance to the Riccati mean path"});
  return rs;
}

ResultSet run_nash(const RunConfig& c) {
  const MeanFieldSolution sol = solve_mfg(c.model, c.time_grid(), c.solver.solve_options());
  RateStudyOptions o;
  o.Ns = c.nash.Ns;
  o.n_paths = c.nash.n_paths.value_or(200);
  o.seed = c.sim.seed;
  o.threads = c.sim.threads;
  o.modes = c.nash.modes;
  o.deviation_N = c.nash.deviation_N;
  o.deviation_scale = c.nash.deviation_scale;
  const NashReport report = rate_study(sol, o);
  ResultSet rs{"nash", {}};
  rs.files.push_back({"nash_report.json", to_json(report),
                      "per mode and N: state gaps E sup|y - x|^2, cost gaps (absolute and "
                      "signed), fitted log-log slopes, deviation tests"});
  rs.files.push_back({"nash_report.csv", to_csv(report),
                      "mode, N, quantity, mean, stderr (one row per gap estimate)"});
  return rs;
}

ResultSet run_gateaux(const RunConfig& c) {
  const MeanFieldSolution sol = solve_mfg(c.model, c.time_grid(), c.solver.solve_options());
  const PathEnsemble ens = simulate_common(sol, c.sim.n_paths, c.sim.seed, c.sim.threads);
  AgentOptions ao;
  ao.n_agents = c.sim.n_agents;
  ao.seed = c.sim.seed;
  ao.threads = c.sim.threads;
  ordered_json rows = ordered_json::array();
  for (Player who : {Player::Dominating, Player::Agent}) {
    const int dim = who == Player::Dominating ? c.model.m0 : c.model.m1;
    for (int d = 0; d < c.gateaux.n_directions; ++d) {
      const GateauxResult g =
          gateaux_check(sol, ens, who, probe_direction(d, dim, c.model.T), c.gateaux.theta, ao);
      ordered_json r;
      r["player"] = who == Player::Dominating ? "dominating" : "agent";
      r["direction"] = d;
      r["derivative"] = g.derivative;
      r["stderr"] = g.derivative_stderr;
      r["z_score"] = g.derivative_stderr > 0 ? real(g.derivative / g.derivative_stderr) : ordered_json(0.0);
      r["second_difference"] = g.second_difference;
      r["increase_plus"] = estimate_json(g.increase_plus);
      r["increase_minus"] = estimate_json(g.increase_minus);
      rows.push_back(std::move(r));
    }
  }
  ordered_json j;
  j["format_version"] = kFormatVersion;
  j["theta"] = c.gateaux.theta;
  j["n_paths"] = c.sim.n_paths;
  j["n_agents"] = c.sim.n_agents;
  j["seed"] = c.sim.seed;
  j["checks"] = rows;
  ResultSet rs{"gateaux", {}};
  rs.files.push_back({"gateaux.json", j.dump(2) + "\n",
                      "per player and probe direction: centred derivative with standard "
                      "error, second difference, paired cost increases"});
  return rs;
}

std::vector<int> parse_int_list(const std::string& s, const std::string& name) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size() || v < 1) {
      throw Error(ErrorCode::ConfigParse, name + " expects positive integers, got '" + s + "'");
    }
    out.push_back(v);
  }
  if (out.empty()) throw Error(ErrorCode::ConfigParse, name + " is empty");
  return out;
}

struct Flags {
  std::optional<std::string> config, out, agents, mode, norm;
  std::optional<int> steps, paths, threads, max_iter, directions;
  std::optional<std::uint64_t> seed;
  std::optional<double> theta, tol;
  bool emit_residuals = false;
  bool printed_offset_drift = false;
};

// flags > config file > defaults
RunConfig resolve(const Flags& f, const std::string& command) {
  RunConfig c = f.config ? load_config(*f.config) : RunConfig{};
  if (f.out) c.output.directory = *f.out;
  if (f.steps) c.grid.n_steps = *f.steps;
  if (f.seed) c.sim.seed = *f.seed;
  if (f.threads) c.sim.threads = *f.threads;
  if (f.paths) {
    if (command == "nash") c.nash.n_paths = *f.paths;
    else c.sim.n_paths = *f.paths;
  }
  if (f.agents) {
    const std::vector<int> list = parse_int_list(*f.agents, "--agents");
    if (command == "nash") {
      c.nash.Ns = list;
    } else {
      if (list.size() != 1) throw Error(ErrorCode::ConfigParse, "--agents takes one count here");
      c.sim.n_agents = list.front();
    }
  }
  if (f.mode) {
    if (*f.mode == "feedback") c.nash.modes = {ControlMode::Feedback};
    else if (*f.mode == "open_loop") c.nash.modes = {ControlMode::OpenLoop};
    else if (*f.mode == "both") c.nash.modes = {ControlMode::Feedback, ControlMode::OpenLoop};
    else throw Error(ErrorCode::ConfigParse, "--mode must be feedback, open_loop or both");
  }
  if (f.norm) {
    if (*f.norm == "spectral") c.solver.norm = MatrixNorm::Spectral;
    else if (*f.norm == "frobenius") c.solver.norm = MatrixNorm::Frobenius;
    else throw Error(ErrorCode::ConfigParse, "--norm must be spectral or frobenius");
  }
  if (f.theta) c.gateaux.theta = *f.theta;
  if (f.directions) c.gateaux.n_directions = *f.directions;
  if (f.tol) c.picard.tol = *f.tol;
  if (f.max_iter) c.picard.max_iter = *f.max_iter;
  if (f.emit_residuals) c.solver.emit_residuals = true;
  if (f.printed_offset_drift) c.solver.printed_offset_drift = true;
  return c;
}

void report_error(std::ostream& err, ExitCode code, std::string_view detail, const std::string& message) {
  ordered_json j;
  j["error"] = exit_name(code);
  j["code"] = detail;
  j["exit_code"] = static_cast<int>(code);
  j["message"] = message;
  err << j.dump() << '\n';
}

}  // namespace

ordered_json emit_outputs(const ResultSet& results, const RunConfig& config,
                          const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());

  std::vector<OutputFile> files;
  ordered_json echo = config_to_json(echo_config(config));
  echo["output"].erase("directory");
  files.push_back({"config.json", echo.dump(2) + "\n",
                   "normalized configuration of this run (without thread count and output "
                   "directory)"});
  files.insert(files.end(), results.files.begin(), results.files.end());

  ordered_json manifest;
  manifest["format_version"] = kFormatVersion;
  manifest["command"] = results.command;
  manifest["model_hash"] = model_hash(config.model);
  const TimeGrid grid = config.time_grid();
  manifest["grid"] = {{"T", grid.T}, {"n_steps", grid.n_steps}};
  manifest["settings"] = settings_json(config);
  ordered_json list = ordered_json::array();
  std::string readme = "# Output files\n\n";
  for (const auto& f : files) {
    write_file(dir / f.name, f.contents);
    list.push_back({{"name", f.name}, {"sha256", sha256_hex(f.contents)}, {"bytes", f.contents.size()}});
    readme += "- `" + f.name + "`: " + f.description + "\n";
  }
  manifest["files"] = list;
  manifest["readme"] = readme;
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
  return manifest;
}

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Linear-quadratic mean field games with a dominating player", "lqmfg"};
  app.require_subcommand(1);
  Flags f;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", f.config, "run configuration JSON");
    sub->add_option("--steps", f.steps, "grid steps (overrides grid.n_steps)")->check(CLI::PositiveNumber);
    sub->add_option("--norm", f.norm, "matrix norm: spectral or frobenius");
    sub->add_flag("--printed-offset-drift", f.printed_offset_drift,
                  "use the (A' - Gamma B) drift for the offset ODE");
  };
  auto sampling = [&](CLI::App* sub) {
    sub->add_option("--seed", f.seed, "master seed");
    sub->add_option("--paths", f.paths, "common-noise paths")->check(CLI::PositiveNumber);
    sub->add_option("--threads", f.threads, "worker threads (0: all cores)")->check(CLI::NonNegativeNumber);
  };
  auto output = [&](CLI::App* sub) { sub->add_option("--out", f.out, "output directory"); };

  CLI::App* solve = app.add_subcommand("solve", "solve the Riccati system and write Gamma, g, P");
  common(solve);
  output(solve);
  solve->add_flag("--emit-residuals", f.emit_residuals, "append pointwise residual columns");

  CLI::App* check = app.add_subcommand("check", "evaluate the sufficient uniqueness condition");
  common(check);
  output(check);

  CLI::App* simulate = app.add_subcommand("simulate", "Monte Carlo of the mean-field equilibrium");
  common(simulate);
  sampling(simulate);
  output(simulate);
  simulate->add_option("--agents", f.agents, "agents per common path");

  CLI::App* picard = app.add_subcommand("picard", "Picard iteration of the fixed-point map");
  common(picard);
  output(picard);
  picard->add_option("--seed", f.seed, "seed of the contraction probes");
  picard->add_option("--tol", f.tol, "stopping tolerance on the H-norm increment");
  picard->add_option("--max-iter", f.max_iter, "iteration cap")->check(CLI::PositiveNumber);

  CLI::App* nash = app.add_subcommand("nash", "N-player convergence study");
  common(nash);
  sampling(nash);
  output(nash);
  nash->add_option("--agents", f.agents, "comma-separated list of N");
  nash->add_option("--mode", f.mode, "feedback, open_loop or both");

  CLI::App* gateaux = app.add_subcommand("gateaux", "finite-difference optimality checks");
  common(gateaux);
  sampling(gateaux);
  output(gateaux);
  gateaux->add_option("--agents", f.agents, "agents per common path");
  gateaux->add_option("--theta", f.theta, "perturbation size")->check(CLI::PositiveNumber);
  gateaux->add_option("--directions", f.directions, "number of probe directions")->check(CLI::PositiveNumber);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    report_error(err, ExitCode::ConfigParse, "ConfigParse", e.what());
    return static_cast<int>(ExitCode::ConfigParse);
  }

  try {
    const std::string command = app.get_subcommands().front()->get_name();
    const RunConfig c = resolve(f, command);
    if (command == "check") {
      const ConditionReport r = sufficient_condition(c.model, c.solver.solve_options().split,
                                                     c.time_grid(), c.solver.norm);
      const ordered_json j = condition_json(r);
      out << condition_table(r, contraction_bound(r)) << '\n' << j.dump(2) << '\n';
      if (f.out) {
        emit_outputs({"check", {{"condition.json", j.dump(2) + "\n", "sufficient-condition report"}}},
                     c, c.output.directory);
      }
      return 0;
    }
    ResultSet rs;
    if (command == "solve") rs = run_solve(c);
    else if (command == "simulate") rs = run_simulate(c);
    else if (command == "picard") rs = run_picard(c);
    else if (command == "nash") rs = run_nash(c);
    else rs = run_gateaux(c);
    const ordered_json manifest = emit_outputs(rs, c, c.output.directory);
    out << "wrote " << manifest["files"].size() << " files and manifest.json to "
        << c.output.directory << '\n';
    return 0;
  } catch (const Error& e) {
    const ExitCode code = exit_code_for(e.code());
    report_error(err, code, to_string(e.code()), e.what());
    return static_cast<int>(code);
  } catch (const std::filesystem::filesystem_error& e) {
    report_error(err, ExitCode::IoError, "IoError", e.what());
    return static_cast<int>(ExitCode::IoError);
  }
}

}  // namespace lqmfg
