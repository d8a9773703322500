#include "lqmfg/nash.hpp"

#include "closed_loop.hpp"
#include "lqmfg/error.hpp"
#include "lqmfg/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace lqmfg {

using detail::ClosedLoop;

std::string to_string(ControlMode mode) {
  return mode == ControlMode::Feedback ? "feedback" : "open_loop";
}

namespace {

using Row = Eigen::RowVectorXd;

Row quad_cols(const Matrix& v, const Matrix& w) { return (w * v).cwiseProduct(v).colwise().sum(); }

// Mean of the other agents, column i: (sum - y_i) / (N - 1).
Matrix others_mean(const Matrix& y) {
  const auto n = y.cols();
  Matrix out = -y;
  out.colwise() += y.rowwise().sum();
  return out / static_cast<double>(n - 1);
}

struct EmpiricalPath {
  double gap0 = 0.0;
  double gap1 = 0.0;
  Row cost_emp, cost_mf;
  Matrix y1_T, x1_T;
};

EmpiricalPath run_path(const MeanFieldSolution& sol, const ClosedLoop& cl,
                       const EmpiricalOptions& opt, int path, const Matrix& init0,
                       const Matrix& init1) {
  const LqModel& m = sol.model;
  const int n = sol.grid.n_steps;
  const int na = opt.n_agents;
  const int n0 = cl.n0, n1 = cl.n1, nc = n0 + n1;
  const double dt = cl.dt, sqdt = std::sqrt(dt);
  const bool feedback = opt.mode == ControlMode::Feedback;
  const Deviation& dev = opt.deviation;
  const auto ip = static_cast<std::uint64_t>(path);

  NormalStream common(stream_seed(opt.seed, ip, 0));
  std::vector<NormalStream> streams;
  streams.reserve(static_cast<std::size_t>(na));

  Vector draw0(n0);
  common.fill(draw0);
  Vector x = sol.blocks.init_mean;
  x.head(n0) += init0 * draw0;
  Vector yc = x.head(nc);  // (y0, r_y); r_y(0) = 0 like r(0)

  Matrix x1(n1, na);
  Vector draw1(n1);
  for (int a = 0; a < na; ++a) {
    const int stream = opt.permutation.empty() ? a : opt.permutation[static_cast<std::size_t>(a)];
    streams.emplace_back(stream_seed(opt.seed, ip, static_cast<std::uint64_t>(stream) + 1));
    streams.back().fill(draw1);
    x1.col(a) = m.xi1_mean + init1 * draw1;
  }
  Matrix y1 = x1;

  // Mean-field agents: controls and drift.
  auto mf_control = [&](int j, const Matrix& xa, const Vector& xc) -> Matrix {
    const auto jj = static_cast<std::size_t>(j);
    Matrix u = cl.ctrl_own[jj] * xa;
    u.colwise() += cl.ctrl_common[jj] * xc + cl.ctrl_const[jj];
    return u;
  };
  // What each empirical agent sees in place of z.
  auto seen = [&](const Matrix& ya, const Vector& z_mf) -> Matrix {
    if (na >= 2) return others_mean(ya);
    return z_mf.replicate(1, na);
  };
  auto emp_control = [&](int j, const Matrix& ya, const Vector& ycc, const Matrix& zs,
                         const Matrix& mf_u) -> Matrix {
    const auto jj = static_cast<std::size_t>(j);
    Matrix u;
    if (feedback) {
      u = cl.ctrl_own[jj] * ya + cl.ctrl_common[jj].rightCols(n1) * zs;
      u.colwise() += cl.ctrl_common[jj].leftCols(nc) * ycc + cl.ctrl_const[jj];
    } else {
      u = mf_u;
    }
    switch (dev.kind) {
      case Deviation::Kind::None:
        break;
      case Deviation::Kind::Zero:
        u.col(0).setZero();
        break;
      case Deviation::Kind::Scaled:
        u.col(0) *= dev.scale;
        break;
      case Deviation::Kind::Deterministic:
        break;  // set by the caller, needs t
    }
    return u;
  };

  struct Rates {
    Vector yc;
    Matrix x1, y1;
  };
  auto rates = [&](int j, double t, const Vector& xs, const Vector& ycs, const Matrix& xa,
                   const Matrix& ya) -> Rates {
    const auto jj = static_cast<std::size_t>(j);
    Rates r;
    const Matrix u_mf = mf_control(j, xa, xs);
    r.x1 = agent_rate(cl, xa, xs.tail(n1).replicate(1, na), xs.head(n0), u_mf);

    const Vector ybar = ya.rowwise().mean();
    const Matrix zs = seen(ya, xs.tail(n1));
    Matrix u = emp_control(j, ya, ycs, zs, u_mf);
    if (dev.kind == Deviation::Kind::Deterministic) u.col(0) = dev.control(t);
    r.y1 = agent_rate(cl, ya, zs, ycs.head(n0), u);
    if (feedback) {
      Vector full(cl.dim);
      full << ycs, ybar;
      r.yc = cl.state_matrix[jj].topRows(nc) * full + cl.state_offset[jj].head(nc);
    } else {
      const Vector u0 = cl.u0_gain[jj] * xs + cl.u0_offset[jj];
      r.yc = Vector::Zero(nc);
      r.yc.head(n0) = cl.A0 * ycs.head(n0) + cl.B0 * ybar + cl.C0 * u0;
    }
    return r;
  };

  EmpiricalPath out;
  out.cost_emp = Row::Zero(na);
  out.cost_mf = Row::Zero(na);
  Row sup1 = Row::Zero(na);
  double sup0 = 0.0;
  std::array<Vector, 4> s;
  Vector inc;
  Vector dw0(cl.d0), dw1(cl.d1);
  Matrix noise1(cl.d1, na);

  for (int k = 0; k <= n; ++k) {
    const int j = 2 * k;
    const double t = sol.grid.t(k);
    const bool last = k == n;
    const double w = (k == 0 || last) ? 0.5 * dt : dt;
    const Vector x0 = x.head(n0), z = x.tail(n1), y0 = yc.head(n0);

    sup0 = std::max(sup0, (y0 - x0).squaredNorm());
    sup1 = sup1.cwiseMax((y1 - x1).colwise().squaredNorm());

    const Matrix u_mf = mf_control(j, x1, x);
    const Matrix zs = seen(y1, z);
    Matrix u = emp_control(j, y1, yc, zs, u_mf);
    if (dev.kind == Deviation::Kind::Deterministic) u.col(0) = dev.control(t);

    Matrix e_mf = x1, e_emp = y1 - m.E1 * zs;
    e_mf.colwise() -= m.E1 * z + m.F * x0 + m.zeta1;
    e_emp.colwise() -= m.F * y0 + m.zeta1;
    out.cost_mf += w * (quad_cols(e_mf, m.Q1) + quad_cols(u_mf, m.R1));
    out.cost_emp += w * (quad_cols(e_emp, m.Q1) + quad_cols(u, m.R1));
    if (last) {
      Matrix t_mf = x1, t_emp = y1 - m.Ebar1 * zs;
      t_mf.colwise() -= m.Ebar1 * z + m.Fbar * x0 + m.zetabar1;
      t_emp.colwise() -= m.Fbar * y0 + m.zetabar1;
      out.cost_mf += quad_cols(t_mf, m.Qbar1);
      out.cost_emp += quad_cols(t_emp, m.Qbar1);
      break;
    }

    cl.stages(k, x, s, inc);
    const double h = dt;
    const Rates r1 = rates(j, t, s[0], yc, x1, y1);
    const Rates r2 = rates(j + 1, t + 0.5 * h, s[1], yc + 0.5 * h * r1.yc, x1 + 0.5 * h * r1.x1,
                           y1 + 0.5 * h * r1.y1);
    const Rates r3 = rates(j + 1, t + 0.5 * h, s[2], yc + 0.5 * h * r2.yc, x1 + 0.5 * h * r2.x1,
                           y1 + 0.5 * h * r2.y1);
    const Rates r4 = rates(j + 2, sol.grid.t(k + 1), s[3], yc + h * r3.yc, x1 + h * r3.x1,
                           y1 + h * r3.y1);

    common.fill(dw0);
    dw0 *= sqdt;
    for (int a = 0; a < na; ++a) {
      streams[static_cast<std::size_t>(a)].fill(dw1);
      noise1.col(a) = dw1;
    }
    const Matrix shock1 = sqdt * (cl.sigma1 * noise1);
    const Vector shock0 = cl.noise0 * dw0;

    x += inc + shock0;
    if (feedback) {
      yc += (h / 6.0) * (r1.yc + 2.0 * r2.yc + 2.0 * r3.yc + r4.yc) + shock0.head(nc);
    } else {
      // r_y is not used in open-loop mode; it tracks the mean-field r.
      yc.head(n0) += (h / 6.0) * (r1.yc + 2.0 * r2.yc + 2.0 * r3.yc + r4.yc).head(n0) +
                     shock0.head(n0);
      yc.tail(n1) = x.segment(n0, n1);
    }
    x1 += (h / 6.0) * (r1.x1 + 2.0 * r2.x1 + 2.0 * r3.x1 + r4.x1) + shock1;
    y1 += (h / 6.0) * (r1.y1 + 2.0 * r2.y1 + 2.0 * r3.y1 + r4.y1) + shock1;
  }
  out.gap0 = sup0;
  out.gap1 = sup1.mean();
  out.y1_T = y1;
  out.x1_T = x1;
  return out;
}

bool is_floor(const std::vector<double>& values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return v < 1e-20; });
}

Slope slope_of(const std::vector<int>& ns, const std::vector<double>& values) {
  Slope s;
  s.floor = is_floor(values);
  if (s.floor) return s;
  std::vector<double> x(ns.begin(), ns.end());
  s.fit = loglog_fit(x, values);
  return s;
}

}  // namespace

EmpiricalWorld simulate_empirical(const MeanFieldSolution& sol, const EmpiricalOptions& options) {
  if (options.n_agents < 1) throw Error(ErrorCode::InvalidArgument, "N must be at least 1");
  if (options.n_paths < 1) throw Error(ErrorCode::InvalidArgument, "n_paths must be positive");
  if (!options.permutation.empty()) {
    std::vector<int> sorted = options.permutation;
    std::sort(sorted.begin(), sorted.end());
    bool ok = static_cast<int>(sorted.size()) == options.n_agents;
    for (int a = 0; ok && a < options.n_agents; ++a) ok = sorted[static_cast<std::size_t>(a)] == a;
    if (!ok) throw Error(ErrorCode::InvalidArgument, "permutation must be a permutation of 0..N-1");
  }
  if (options.deviation.kind == Deviation::Kind::Deterministic && !options.deviation.control) {
    throw Error(ErrorCode::InvalidArgument, "deterministic deviation needs a control function");
  }
  const ClosedLoop cl(sol);
  const Matrix init0 = covariance_factor(sol.model.xi0_cov);
  const Matrix init1 = covariance_factor(sol.model.xi1_cov);

  EmpiricalWorld world;
  world.n_agents = options.n_agents;
  world.n_paths = options.n_paths;
  world.mode = options.mode;
  world.seed = options.seed;
  world.grid = sol.grid;
  const auto np = static_cast<std::size_t>(options.n_paths);
  world.gap0.resize(np);
  world.gap1.resize(np);
  world.cost_emp.resize(np);
  world.cost_mf.resize(np);
  world.y1_terminal.resize(np);
  world.x1_terminal.resize(np);
  parallel_for(options.n_paths, options.threads, [&](int i) {
    EmpiricalPath p = run_path(sol, cl, options, i, init0, init1);
    const auto slot = static_cast<std::size_t>(i);
    world.gap0[slot] = p.gap0;
    world.gap1[slot] = p.gap1;
    world.cost_emp[slot] = std::move(p.cost_emp);
    world.cost_mf[slot] = std::move(p.cost_mf);
    world.y1_terminal[slot] = std::move(p.y1_T);
    world.x1_terminal[slot] = std::move(p.x1_T);
  });
  return world;
}

TrajectoryGap trajectory_gap(const EmpiricalWorld& world) {
  return {mean_and_stderr(world.gap0), mean_and_stderr(world.gap1)};
}

CostGap cost_gap(const EmpiricalWorld& world, int agent_index) {
  if (agent_index >= world.n_agents) {
    throw Error(ErrorCode::InvalidArgument, "agent index out of range");
  }
  std::vector<double> absolute, signed_;
  absolute.reserve(static_cast<std::size_t>(world.n_paths));
  signed_.reserve(static_cast<std::size_t>(world.n_paths));
  for (int i = 0; i < world.n_paths; ++i) {
    const Row d = world.cost_emp[static_cast<std::size_t>(i)] - world.cost_mf[static_cast<std::size_t>(i)];
    if (agent_index < 0) {
      absolute.push_back(d.cwiseAbs().mean());
      signed_.push_back(d.mean());
    } else {
      absolute.push_back(std::abs(d(agent_index)));
      signed_.push_back(d(agent_index));
    }
  }
  return {mean_and_stderr(absolute), mean_and_stderr(signed_)};
}

DeviationResult deviation_test(const MeanFieldSolution& sol, const EmpiricalOptions& base,
                               const Deviation& deviation, double c) {
  if (base.n_agents < 2) {
    throw Error(ErrorCode::InvalidArgument, "deviation studies need N >= 2");
  }
  EmpiricalOptions eq = base;
  eq.deviation = Deviation::none();
  EmpiricalOptions dev = base;
  dev.deviation = deviation;
  const EmpiricalWorld w_eq = simulate_empirical(sol, eq);
  const EmpiricalWorld w_dev = simulate_empirical(sol, dev);
  std::vector<double> j_eq, j_dev, diff;
  for (int i = 0; i < base.n_paths; ++i) {
    const auto slot = static_cast<std::size_t>(i);
    j_eq.push_back(w_eq.cost_emp[slot](0));
    j_dev.push_back(w_dev.cost_emp[slot](0));
    diff.push_back(j_dev.back() - j_eq.back());
  }
  DeviationResult r;
  r.cost_equilibrium = mean_and_stderr(j_eq);
  r.cost_deviation = mean_and_stderr(j_dev);
  r.difference = mean_and_stderr(diff);
  r.c = c;
  r.margin = r.difference.mean + c / std::sqrt(static_cast<double>(base.n_agents));
  r.ok = r.margin >= -2.0 * r.difference.stderr_;
  return r;
}

double wasserstein2_1d(std::vector<double> a, std::vector<double> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::LengthMismatch, "W2 needs samples of equal size");
  }
  if (a.empty()) return 0.0;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(acc / static_cast<double>(a.size()));
}

double wasserstein2_1d(const Matrix& a, const Matrix& b) {
  if (a.rows() > 1 || b.rows() > 1) {
    throw Error(ErrorCode::DimensionUnsupported, "W2 is only implemented on the line");
  }
  return wasserstein2_1d(std::vector<double>(a.data(), a.data() + a.size()),
                         std::vector<double>(b.data(), b.data() + b.size()));
}

NashReport rate_study(const MeanFieldSolution& sol, const RateStudyOptions& options) {
  if (options.Ns.empty()) throw Error(ErrorCode::InvalidArgument, "rate study needs some N");
  NashReport report;
  report.Ns = options.Ns;
  report.n_paths = options.n_paths;
  report.seed = options.seed;

  for (ControlMode mode : options.modes) {
    ModeStudy study;
    study.mode = mode;
    std::vector<double> g0, g1, ca, cs;
    for (int n : options.Ns) {
      EmpiricalOptions opt;
      opt.n_agents = n;
      opt.n_paths = options.n_paths;
      opt.mode = mode;
      opt.seed = options.seed;
      opt.threads = options.threads;
      const EmpiricalWorld world = simulate_empirical(sol, opt);
      NashRow row{n, trajectory_gap(world), cost_gap(world)};
      g0.push_back(row.state.dominating.mean);
      g1.push_back(row.state.agent.mean);
      ca.push_back(row.cost.absolute.mean);
      cs.push_back(std::abs(row.cost.signed_.mean));
      study.rows.push_back(row);
    }
    study.state_dominating = slope_of(options.Ns, g0);
    study.state_agent = slope_of(options.Ns, g1);
    study.cost_absolute = slope_of(options.Ns, ca);
    study.cost_signed = slope_of(options.Ns, cs);
    report.modes.push_back(std::move(study));
  }

  // epsilon constant from the largest N of the first mode.
  if (!report.modes.empty()) {
    const NashRow& top = report.modes.front().rows.back();
    report.c = top.cost.absolute.mean * std::sqrt(static_cast<double>(top.N));
  }

  int dev_n = options.Ns.back();
  if (options.deviation_N) {
    dev_n = *options.deviation_N;
  } else if (std::find(options.Ns.begin(), options.Ns.end(), 256) != options.Ns.end()) {
    dev_n = 256;
  }
  if (dev_n >= 2) {
    EmpiricalOptions opt;
    opt.n_agents = dev_n;
    opt.n_paths = options.n_paths;
    opt.mode = options.modes.empty() ? ControlMode::Feedback : options.modes.front();
    opt.seed = options.seed;
    opt.threads = options.threads;
    report.deviations.push_back({"null", dev_n, deviation_test(sol, opt, Deviation::zero(), report.c)});
    report.deviations.push_back({"scaled", dev_n,
                                 deviation_test(sol, opt, Deviation::scaled(options.deviation_scale),
                                                report.c)});
  }
  return report;
}

namespace {

nlohmann::ordered_json estimate_json(const Estimate& e) {
  return {{"mean", e.mean}, {"stderr", e.stderr_}};
}

nlohmann::ordered_json slope_json(const Slope& s) {
  if (s.floor) return "floor";
  return {{"slope", s.fit.slope}, {"stderr", s.fit.slope_stderr}, {"points", s.fit.points}};
}

}  // namespace

std::string to_json(const NashReport& report) {
  nlohmann::ordered_json j;
  j["format_version"] = 1;
  j["Ns"] = report.Ns;
  j["n_paths"] = report.n_paths;
  j["seed"] = report.seed;
  j["c"] = report.c;
  j["modes"] = nlohmann::ordered_json::array();
  for (const auto& m : report.modes) {
    nlohmann::ordered_json mj;
    mj["mode"] = to_string(m.mode);
    mj["rows"] = nlohmann::ordered_json::array();
    for (const auto& r : m.rows) {
      mj["rows"].push_back({{"N", r.N},
                            {"gap_state_0", estimate_json(r.state.dominating)},
                            {"gap_state_1", estimate_json(r.state.agent)},
                            {"gap_cost", estimate_json(r.cost.absolute)},
                            {"gap_cost_signed", estimate_json(r.cost.signed_)}});
    }
    mj["slopes"] = {{"gap_state_0", slope_json(m.state_dominating)},
                    {"gap_state_1", slope_json(m.state_agent)},
                    {"gap_cost", slope_json(m.cost_absolute)},
                    {"gap_cost_signed", slope_json(m.cost_signed)}};
    j["modes"].push_back(mj);
  }
  j["deviations"] = nlohmann::ordered_json::array();
  for (const auto& d : report.deviations) {
    j["deviations"].push_back({{"deviation", d.name},
                               {"N", d.N},
                               {"cost_equilibrium", estimate_json(d.result.cost_equilibrium)},
                               {"cost_deviation", estimate_json(d.result.cost_deviation)},
                               {"difference", estimate_json(d.result.difference)},
                               {"margin", d.result.margin},
                               {"ok", d.result.ok}});
  }
  return j.dump(2) + "\n";
}

std::string to_csv(const NashReport& report) {
  std::ostringstream os;
  os << "mode,N,gap_state_0,gap_state_0_stderr,gap_state_1,gap_state_1_stderr,gap_cost,"
        "gap_cost_stderr,gap_cost_signed,gap_cost_signed_stderr,slope_state_0,slope_state_1,"
        "slope_cost\n";
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  auto slope = [&](const Slope& s) { return s.floor ? std::string("floor") : num(s.fit.slope); };
  for (const auto& m : report.modes) {
    for (const auto& r : m.rows) {
      os << to_string(m.mode) << ',' << r.N << ',' << num(r.state.dominating.mean) << ','
         << num(r.state.dominating.stderr_) << ',' << num(r.state.agent.mean) << ','
         << num(r.state.agent.stderr_) << ',' << num(r.cost.absolute.mean) << ','
         << num(r.cost.absolute.stderr_) << ',' << num(r.cost.signed_.mean) << ','
         << num(r.cost.signed_.stderr_) << ',' << slope(m.state_dominating) << ','
         << slope(m.state_agent) << ',' << slope(m.cost_absolute) << '\n';
    }
  }
  return os.str();
}

}  // namespace lqmfg
