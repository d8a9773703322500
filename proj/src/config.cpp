#include "lqmfg/config.hpp"

#include "lqmfg/error.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>

namespace lqmfg {

using nlohmann::json;
using nlohmann::ordered_json;

TimeGrid GridConfig::make(double T) const {
  if (n_steps) return {T, *n_steps};
  return TimeGrid::with_density(T, steps_per_unit);
}

SolveOptions SolverConfig::solve_options() const {
  SolveOptions o;
  o.riccati.integrator.blowup_cap = blowup_cap;
  o.riccati.offset_drift =
      printed_offset_drift ? OffsetDrift::PrintedCoupling : OffsetDrift::ControlGain;
  o.split.running_weight = running_weight;
  o.split.terminal_weight = terminal_weight;
  return o;
}

namespace {

[[noreturn]] void parse_error(const std::string& what) {
  throw Error(ErrorCode::ConfigParse, what);
}

void reject_unknown(const json& j, const std::string& where,
                    std::initializer_list<const char*> known) {
  if (!j.is_object()) parse_error(where + " must be an object");
  const std::set<std::string> names(known.begin(), known.end());
  for (const auto& [key, _] : j.items()) {
    if (!names.count(key)) parse_error("unknown field '" + key + "' in " + where);
  }
}

double number(const json& v, const std::string& name) {
  if (!v.is_number()) parse_error(name + " must be a number");
  return v.get<double>();
}

int integer(const json& v, const std::string& name, int min) {
  if (!v.is_number_integer()) parse_error(name + " must be an integer");
  const auto x = v.get<long long>();
  if (x < min || x > 1'000'000'000) parse_error(name + " is out of range");
  return static_cast<int>(x);
}

bool boolean(const json& v, const std::string& name) {
  if (!v.is_boolean()) parse_error(name + " must be true or false");
  return v.get<bool>();
}

Matrix matrix(const json& v, const std::string& name) {
  if (!v.is_array()) parse_error(name + " must be an array of rows");
  const auto rows = static_cast<Eigen::Index>(v.size());
  if (rows == 0) return Matrix(0, 0);
  const auto cols = static_cast<Eigen::Index>(v.front().is_array() ? v.front().size() : 0);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const json& row = v[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      parse_error(name + " must be a rectangular array of rows");
    }
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = number(row[static_cast<std::size_t>(k)], name);
  }
  return m;
}

Vector vector(const json& v, const std::string& name) {
  if (!v.is_array()) parse_error(name + " must be an array");
  Vector out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = number(v[i], name);
  return out;
}

ordered_json matrix_json(const Matrix& m) {
  ordered_json rows = ordered_json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    ordered_json row = ordered_json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    rows.push_back(std::move(row));
  }
  return rows;
}

ordered_json vector_json(const Vector& v) {
  ordered_json out = ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

struct MatrixField {
  const char* name;
  Matrix LqModel::*member;
};
struct VectorField {
  const char* name;
  Vector LqModel::*member;
};

constexpr MatrixField kMatrices[] = {
    {"A0", &LqModel::A0},       {"B0", &LqModel::B0},         {"C0", &LqModel::C0},
    {"sigma0", &LqModel::sigma0}, {"A1", &LqModel::A1},       {"B1", &LqModel::B1},
    {"C1", &LqModel::C1},       {"D", &LqModel::D},           {"sigma1", &LqModel::sigma1},
    {"Q0", &LqModel::Q0},       {"Qbar0", &LqModel::Qbar0},   {"Q1", &LqModel::Q1},
    {"Qbar1", &LqModel::Qbar1}, {"R0", &LqModel::R0},         {"R1", &LqModel::R1},
    {"E0", &LqModel::E0},       {"Ebar0", &LqModel::Ebar0},   {"E1", &LqModel::E1},
    {"Ebar1", &LqModel::Ebar1}, {"F", &LqModel::F},           {"Fbar", &LqModel::Fbar},
    {"xi0_cov", &LqModel::xi0_cov}, {"xi1_cov", &LqModel::xi1_cov},
};

constexpr VectorField kVectors[] = {
    {"zeta0", &LqModel::zeta0},       {"zetabar0", &LqModel::zetabar0},
    {"zeta1", &LqModel::zeta1},       {"zetabar1", &LqModel::zetabar1},
    {"xi0_mean", &LqModel::xi0_mean}, {"xi1_mean", &LqModel::xi1_mean},
};

constexpr const char* kDims[] = {"n0", "n1", "m0", "m1", "d0", "d1"};

int LqModel::*dim_member(int i) {
  static int LqModel::*const members[] = {&LqModel::n0, &LqModel::n1, &LqModel::m0,
                                          &LqModel::m1, &LqModel::d0, &LqModel::d1};
  return members[i];
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    parse_error(path.string() + ": " + e.what());
  }
}

ControlMode mode_from_string(const std::string& s) {
  if (s == "feedback") return ControlMode::Feedback;
  if (s == "open_loop") return ControlMode::OpenLoop;
  parse_error("unknown control mode '" + s + "'");
}

}  // namespace

LqModel model_from_json(const json& j) {
  if (!j.is_object()) parse_error("model must be an object");
  for (const auto& [key, _] : j.items()) {
    bool known = key == "T";
    for (const char* d : kDims) known = known || key == d;
    for (const auto& f : kMatrices) known = known || key == f.name;
    for (const auto& f : kVectors) known = known || key == f.name;
    if (!known) parse_error("unknown model field '" + key + "'");
  }
  int dims[6] = {1, 1, 1, 1, 1, 1};
  for (int i = 0; i < 6; ++i) {
    if (j.contains(kDims[i])) dims[i] = integer(j.at(kDims[i]), kDims[i], 0);
  }
  const double T = j.contains("T") ? number(j.at("T"), "T") : 1.0;
  LqModel m = zero_model(dims[0], dims[1], dims[2], dims[3], dims[4], dims[5], T);
  for (const auto& f : kMatrices) {
    if (j.contains(f.name)) m.*f.member = matrix(j.at(f.name), f.name);
  }
  for (const auto& f : kVectors) {
    if (j.contains(f.name)) m.*f.member = vector(j.at(f.name), f.name);
  }
  return m;
}

ordered_json model_to_json(const LqModel& m) {
  ordered_json j;
  for (int i = 0; i < 6; ++i) j[kDims[i]] = m.*dim_member(i);
  j["T"] = m.T;
  for (const auto& f : kMatrices) j[f.name] = matrix_json(m.*f.member);
  for (const auto& f : kVectors) j[f.name] = vector_json(m.*f.member);
  return j;
}

LqModel load_model(const std::filesystem::path& path) {
  return model_from_json(read_json_file(path));
}

RunConfig config_from_json(const json& j, const std::filesystem::path& base_dir) {
  RunConfig c;
  try {
    // A bare model document is accepted as a config with defaults elsewhere.
    if (j.is_object() && !j.contains("model") && (j.contains("n0") || j.contains("A0"))) {
      c.model = model_from_json(j);
      return c;
    }
    reject_unknown(j, "config",
                   {"model", "grid", "solver", "sim", "nash", "picard", "gateaux", "output"});
    if (j.contains("model")) {
      const json& mj = j.at("model");
      if (mj.is_string()) {
        std::filesystem::path p = mj.get<std::string>();
        if (p.is_relative()) p = base_dir / p;
        if (!std::filesystem::exists(p)) parse_error("model file not found: " + p.string());
        c.model = load_model(p);
      } else {
        c.model = model_from_json(mj);
      }
    }
    if (j.contains("grid")) {
      const json& g = j.at("grid");
      reject_unknown(g, "grid", {"n_steps", "steps_per_unit"});
      if (g.contains("n_steps") && !g.at("n_steps").is_null()) {
        c.grid.n_steps = integer(g.at("n_steps"), "grid.n_steps", 1);
      }
      if (g.contains("steps_per_unit")) {
        c.grid.steps_per_unit = number(g.at("steps_per_unit"), "grid.steps_per_unit");
        if (!(c.grid.steps_per_unit > 0)) parse_error("grid.steps_per_unit must be positive");
      }
    }
    if (j.contains("solver")) {
      const json& s = j.at("solver");
      reject_unknown(s, "solver",
                     {"blowup_cap", "residual_tol", "printed_offset_drift", "norm",
                      "running_weight", "terminal_weight", "emit_residuals"});
      if (s.contains("blowup_cap")) c.solver.blowup_cap = number(s.at("blowup_cap"), "blowup_cap");
      if (s.contains("residual_tol")) {
        c.solver.residual_tol = number(s.at("residual_tol"), "residual_tol");
      }
      if (s.contains("printed_offset_drift")) {
        c.solver.printed_offset_drift = boolean(s.at("printed_offset_drift"), "printed_offset_drift");
      }
      if (s.contains("norm")) {
        const std::string n = s.at("norm").get<std::string>();
        if (n == "spectral") c.solver.norm = MatrixNorm::Spectral;
        else if (n == "frobenius") c.solver.norm = MatrixNorm::Frobenius;
        else parse_error("solver.norm must be 'spectral' or 'frobenius'");
      }
      if (s.contains("running_weight") && !s.at("running_weight").is_null()) {
        c.solver.running_weight = matrix(s.at("running_weight"), "running_weight");
      }
      if (s.contains("terminal_weight") && !s.at("terminal_weight").is_null()) {
        c.solver.terminal_weight = matrix(s.at("terminal_weight"), "terminal_weight");
      }
      if (s.contains("emit_residuals")) {
        c.solver.emit_residuals = boolean(s.at("emit_residuals"), "emit_residuals");
      }
    }
    if (j.contains("sim")) {
      const json& s = j.at("sim");
      reject_unknown(s, "sim", {"n_paths", "n_agents", "seed", "threads"});
      if (s.contains("n_paths")) c.sim.n_paths = integer(s.at("n_paths"), "sim.n_paths", 1);
      if (s.contains("n_agents")) c.sim.n_agents = integer(s.at("n_agents"), "sim.n_agents", 1);
      if (s.contains("seed")) {
        const json& v = s.at("seed");
        if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
          parse_error("sim.seed must be an unsigned 64-bit integer");
        }
        c.sim.seed = v.get<std::uint64_t>();
      }
      if (s.contains("threads")) c.sim.threads = integer(s.at("threads"), "sim.threads", 0);
    }
    if (j.contains("nash")) {
      const json& s = j.at("nash");
      reject_unknown(s, "nash", {"Ns", "modes", "n_paths", "deviation_N", "deviation_scale"});
      if (s.contains("Ns")) {
        c.nash.Ns.clear();
        if (!s.at("Ns").is_array() || s.at("Ns").empty()) parse_error("nash.Ns must be a non-empty array");
        for (const auto& v : s.at("Ns")) c.nash.Ns.push_back(integer(v, "nash.Ns", 1));
      }
      if (s.contains("modes")) {
        c.nash.modes.clear();
        if (!s.at("modes").is_array() || s.at("modes").empty()) {
          parse_error("nash.modes must be a non-empty array");
        }
        for (const auto& v : s.at("modes")) c.nash.modes.push_back(mode_from_string(v.get<std::string>()));
      }
      if (s.contains("n_paths") && !s.at("n_paths").is_null()) {
        c.nash.n_paths = integer(s.at("n_paths"), "nash.n_paths", 2);
      }
      if (s.contains("deviation_N") && !s.at("deviation_N").is_null()) {
        c.nash.deviation_N = integer(s.at("deviation_N"), "nash.deviation_N", 2);
      }
      if (s.contains("deviation_scale")) {
        c.nash.deviation_scale = number(s.at("deviation_scale"), "nash.deviation_scale");
      }
    }
    if (j.contains("picard")) {
      const json& s = j.at("picard");
      reject_unknown(s, "picard", {"tol", "max_iter", "n_probes"});
      if (s.contains("tol")) c.picard.tol = number(s.at("tol"), "picard.tol");
      if (s.contains("max_iter")) c.picard.max_iter = integer(s.at("max_iter"), "picard.max_iter", 1);
      if (s.contains("n_probes")) c.picard.n_probes = integer(s.at("n_probes"), "picard.n_probes", 1);
    }
    if (j.contains("gateaux")) {
      const json& s = j.at("gateaux");
      reject_unknown(s, "gateaux", {"theta", "n_directions"});
      if (s.contains("theta")) c.gateaux.theta = number(s.at("theta"), "gateaux.theta");
      if (s.contains("n_directions")) {
        c.gateaux.n_directions = integer(s.at("n_directions"), "gateaux.n_directions", 1);
      }
    }
    if (j.contains("output")) {
      const json& s = j.at("output");
      reject_unknown(s, "output", {"directory", "formats"});
      if (s.contains("directory")) c.output.directory = s.at("directory").get<std::string>();
      if (s.contains("formats")) {
        c.output.formats.clear();
        for (const auto& v : s.at("formats")) {
          const std::string f = v.get<std::string>();
          if (f != "csv" && f != "json") parse_error("output.formats accepts 'csv' and 'json'");
          c.output.formats.push_back(f);
        }
      }
    }
  } catch (const json::exception& e) {
    parse_error(e.what());
  }
  return c;
}

ordered_json config_to_json(const RunConfig& c) {
  ordered_json j;
  j["model"] = model_to_json(c.model);
  j["grid"]["n_steps"] = c.grid.n_steps ? ordered_json(*c.grid.n_steps) : ordered_json(nullptr);
  j["grid"]["steps_per_unit"] = c.grid.steps_per_unit;
  auto& s = j["solver"];
  s["blowup_cap"] = c.solver.blowup_cap;
  s["residual_tol"] = c.solver.residual_tol;
  s["printed_offset_drift"] = c.solver.printed_offset_drift;
  s["norm"] = c.solver.norm == MatrixNorm::Spectral ? "spectral" : "frobenius";
  s["running_weight"] =
      c.solver.running_weight ? matrix_json(*c.solver.running_weight) : ordered_json(nullptr);
  s["terminal_weight"] =
      c.solver.terminal_weight ? matrix_json(*c.solver.terminal_weight) : ordered_json(nullptr);
  s["emit_residuals"] = c.solver.emit_residuals;
  j["sim"] = {{"n_paths", c.sim.n_paths},
              {"n_agents", c.sim.n_agents},
              {"seed", c.sim.seed},
              {"threads", c.sim.threads}};
  auto& n = j["nash"];
  n["Ns"] = c.nash.Ns;
  n["modes"] = ordered_json::array();
  for (ControlMode m : c.nash.modes) n["modes"].push_back(to_string(m));
  n["n_paths"] = c.nash.n_paths ? ordered_json(*c.nash.n_paths) : ordered_json(nullptr);
  n["deviation_N"] = c.nash.deviation_N ? ordered_json(*c.nash.deviation_N) : ordered_json(nullptr);
  n["deviation_scale"] = c.nash.deviation_scale;
  j["picard"] = {{"tol", c.picard.tol}, {"max_iter", c.picard.max_iter}, {"n_probes", c.picard.n_probes}};
  j["gateaux"] = {{"theta", c.gateaux.theta}, {"n_directions", c.gateaux.n_directions}};
  j["output"] = {{"directory", c.output.directory}, {"formats", c.output.formats}};
  return j;
}

RunConfig load_config(const std::filesystem::path& path) {
  return config_from_json(read_json_file(path), path.parent_path());
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::IoError, "SHA-256 failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 15]);
  }
  return out;
}

std::string model_hash(const LqModel& model) { return sha256_hex(model_to_json(model).dump()); }

}  // namespace lqmfg
