#include "lqmfg/model.hpp"

#include "lqmfg/error.hpp"

#include <cmath>
#include <sstream>

namespace lqmfg {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidModel: return "InvalidModel";
    case ErrorCode::SingularR: return "SingularR";
    case ErrorCode::NonPositiveSplit: return "NonPositiveSplit";
    case ErrorCode::Diverged: return "Diverged";
    case ErrorCode::NoGlobalSolution: return "NoGlobalSolution";
    case ErrorCode::NotSPD: return "NotSPD";
    case ErrorCode::InnerRiccatiFailure: return "InnerRiccatiFailure";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::DimensionUnsupported: return "DimensionUnsupported";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ConfigParse: return "ConfigParse";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

LqModel zero_model(int n0, int n1, int m0, int m1, int d0, int d1, double T) {
  LqModel m;
  m.n0 = n0;
  m.n1 = n1;
  m.m0 = m0;
  m.m1 = m1;
  m.d0 = d0;
  m.d1 = d1;
  m.T = T;
  m.A0 = Matrix::Zero(n0, n0);
  m.B0 = Matrix::Zero(n0, n1);
  m.C0 = Matrix::Zero(n0, m0);
  m.sigma0 = Matrix::Zero(n0, d0);
  m.A1 = Matrix::Zero(n1, n1);
  m.B1 = Matrix::Zero(n1, n1);
  m.C1 = Matrix::Zero(n1, m1);
  m.D = Matrix::Zero(n1, n0);
  m.sigma1 = Matrix::Zero(n1, d1);
  m.Q0 = Matrix::Zero(n0, n0);
  m.Qbar0 = Matrix::Zero(n0, n0);
  m.Q1 = Matrix::Zero(n1, n1);
  m.Qbar1 = Matrix::Zero(n1, n1);
  m.R0 = Matrix::Identity(m0, m0);
  m.R1 = Matrix::Identity(m1, m1);
  m.E0 = Matrix::Zero(n0, n1);
  m.Ebar0 = Matrix::Zero(n0, n1);
  m.E1 = Matrix::Zero(n1, n1);
  m.Ebar1 = Matrix::Zero(n1, n1);
  m.F = Matrix::Zero(n1, n0);
  m.Fbar = Matrix::Zero(n1, n0);
  m.zeta0 = Vector::Zero(n0);
  m.zetabar0 = Vector::Zero(n0);
  m.zeta1 = Vector::Zero(n1);
  m.zetabar1 = Vector::Zero(n1);
  m.xi0_mean = Vector::Zero(n0);
  m.xi1_mean = Vector::Zero(n1);
  m.xi0_cov = Matrix::Zero(n0, n0);
  m.xi1_cov = Matrix::Zero(n1, n1);
  return m;
}

LqModel benchmark_m1() {
  LqModel m = zero_model();
  auto s = [](double v) { return Matrix::Constant(1, 1, v); };
  m.A0 = s(0.0);
  m.B0 = s(0.2);
  m.C0 = s(1.0);
  m.sigma0 = s(0.1);
  m.A1 = s(-1.0);
  m.B1 = s(0.1);
  m.C1 = s(1.0);
  m.D = s(0.5);
  m.sigma1 = s(0.2);
  m.Q0 = m.Qbar0 = s(1.0);
  m.Q1 = m.Qbar1 = s(1.0);
  m.R0 = m.R1 = s(1.0);
  m.E0 = m.Ebar0 = s(0.3);
  m.E1 = m.Ebar1 = s(0.3);
  m.F = m.Fbar = s(0.2);
  m.zeta0 = m.zetabar0 = Vector::Constant(1, 0.1);
  m.zeta1 = m.zetabar1 = Vector::Constant(1, 0.1);
  m.xi0_mean = Vector::Constant(1, 1.0);
  m.xi0_cov = s(0.04);
  m.xi1_mean = Vector::Constant(1, 0.5);
  m.xi1_cov = s(0.09);
  return m;
}

LqModel benchmark_m1_deterministic() {
  LqModel m = benchmark_m1();
  m.sigma0.setZero();
  m.xi0_cov.setZero();
  return m;
}

std::string ValidationReport::summary() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < violations.size(); ++i) {
    if (i) os << "; ";
    os << violations[i];
  }
  return os.str();
}

namespace {

constexpr double kSymTol = 1e-10;

bool finite(const Matrix& m) { return m.allFinite(); }

double min_eig(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

class Checker {
 public:
  explicit Checker(ValidationReport& r) : r_(r) {}

  bool shape(const std::string& name, const Matrix& m, int rows, int cols) {
    if (m.rows() != rows || m.cols() != cols) {
      std::ostringstream os;
      os << name << " has shape " << m.rows() << "x" << m.cols() << ", expected " << rows << "x"
         << cols;
      r_.violations.push_back(os.str());
      return false;
    }
    if (!finite(m)) {
      r_.violations.push_back(name + " has non-finite entries");
      return false;
    }
    return true;
  }

  bool shape(const std::string& name, const Vector& v, int size) {
    if (v.size() != size) {
      std::ostringstream os;
      os << name << " has length " << v.size() << ", expected " << size;
      r_.violations.push_back(os.str());
      return false;
    }
    if (!v.allFinite()) {
      r_.violations.push_back(name + " has non-finite entries");
      return false;
    }
    return true;
  }

  void symmetric(const std::string& name, const Matrix& m) {
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > kSymTol * scale) {
      r_.violations.push_back(name + " not symmetric");
    }
  }

  void positive_definite(const std::string& name, const Matrix& m) {
    symmetric(name, m);
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    if (m.size() == 0 || min_eig(m) <= 1e-12 * scale) {
      r_.violations.push_back(name + " not positive definite");
    }
  }

  void positive_semidefinite(const std::string& name, const Matrix& m) {
    symmetric(name, m);
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    if (m.size() > 0 && min_eig(m) < -1e-12 * scale) {
      r_.violations.push_back(name + " not positive semidefinite");
    }
  }

 private:
  ValidationReport& r_;
};

}  // namespace

ValidationReport validate_model(const LqModel& model) {
  ValidationReport report;
  Checker c(report);
  const int n0 = model.n0, n1 = model.n1;
  const int m0 = model.m0, m1 = model.m1;
  const int d0 = model.d0, d1 = model.d1;

  for (auto [name, v] : {std::pair{"n0", n0}, {"n1", n1}, {"m0", m0}, {"m1", m1}, {"d0", d0},
                         {"d1", d1}}) {
    if (v <= 0) report.violations.push_back(std::string(name) + " must be positive");
  }
  if (!report.ok()) return report;
  if (!(model.T > 0.0) || !std::isfinite(model.T)) report.violations.push_back("T must be positive");

  c.shape("A0", model.A0, n0, n0);
  c.shape("B0", model.B0, n0, n1);
  c.shape("C0", model.C0, n0, m0);
  c.shape("sigma0", model.sigma0, n0, d0);
  c.shape("A1", model.A1, n1, n1);
  c.shape("B1", model.B1, n1, n1);
  c.shape("C1", model.C1, n1, m1);
  c.shape("D", model.D, n1, n0);
  c.shape("sigma1", model.sigma1, n1, d1);
  c.shape("E0", model.E0, n0, n1);
  c.shape("Ebar0", model.Ebar0, n0, n1);
  c.shape("E1", model.E1, n1, n1);
  c.shape("Ebar1", model.Ebar1, n1, n1);
  c.shape("F", model.F, n1, n0);
  c.shape("Fbar", model.Fbar, n1, n0);
  c.shape("zeta0", model.zeta0, n0);
  c.shape("zetabar0", model.zetabar0, n0);
  c.shape("zeta1", model.zeta1, n1);
  c.shape("zetabar1", model.zetabar1, n1);
  c.shape("xi0_mean", model.xi0_mean, n0);
  c.shape("xi1_mean", model.xi1_mean, n1);

  if (c.shape("Q0", model.Q0, n0, n0)) c.positive_definite("Q0", model.Q0);
  if (c.shape("Q1", model.Q1, n1, n1)) c.positive_definite("Q1", model.Q1);
  if (c.shape("Qbar0", model.Qbar0, n0, n0)) c.positive_semidefinite("Qbar0", model.Qbar0);
  if (c.shape("Qbar1", model.Qbar1, n1, n1)) c.positive_semidefinite("Qbar1", model.Qbar1);
  if (c.shape("R0", model.R0, m0, m0)) c.positive_definite("R0", model.R0);
  if (c.shape("R1", model.R1, m1, m1)) c.positive_definite("R1", model.R1);
  if (c.shape("xi0_cov", model.xi0_cov, n0, n0)) c.positive_semidefinite("xi0_cov", model.xi0_cov);
  if (c.shape("xi1_cov", model.xi1_cov, n1, n1)) c.positive_semidefinite("xi1_cov", model.xi1_cov);
  return report;
}

QuadraticSplit split_quadratic(const Matrix& total, const Matrix& weight, bool require_definite) {
  if (total.rows() != total.cols() || weight.rows() != total.rows() ||
      weight.cols() != total.cols()) {
    throw Error(ErrorCode::NonPositiveSplit, "split weight shape does not match the total matrix");
  }
  const double scale = std::max(1.0, weight.cwiseAbs().maxCoeff());
  if ((weight - weight.transpose()).cwiseAbs().maxCoeff() > kSymTol * scale) {
    throw Error(ErrorCode::NonPositiveSplit, "split weight is not symmetric");
  }
  const double lo = min_eig(weight);
  if (require_definite ? lo <= 1e-12 * scale : lo < -1e-12 * scale) {
    throw Error(ErrorCode::NonPositiveSplit,
                require_definite ? "split weight is not positive definite"
                                 : "split weight is not positive semidefinite");
  }
  return {weight, total - weight};
}

namespace {

Matrix block_diag3(const Matrix& a, const Matrix& b, const Matrix& c) {
  const auto n = a.rows() + b.rows() + c.rows();
  Matrix out = Matrix::Zero(n, n);
  out.block(0, 0, a.rows(), a.cols()) = a;
  out.block(a.rows(), a.cols(), b.rows(), b.cols()) = b;
  out.block(a.rows() + b.rows(), a.cols() + b.cols(), c.rows(), c.cols()) = c;
  return out;
}

// Shared layout of the running and terminal quadratic matrices:
//   [ Q0        -(Q1 F)'        -Q0 E0    ]
//   [ -(Q0 E0)'  (Q1 (I-E1))'    E0' Q0 E0 ]
//   [ -Q1 F      0               Q1 (I-E1) ]
Matrix quadratic_total(const Matrix& q0, const Matrix& q1, const Matrix& e0, const Matrix& e1,
                       const Matrix& f) {
  const auto n0 = q0.rows(), n1 = q1.rows();
  const Matrix i1 = Matrix::Identity(n1, n1);
  const Matrix q1_f = q1 * f;
  const Matrix q0_e0 = q0 * e0;
  const Matrix q1_ie1 = q1 * (i1 - e1);
  Matrix out = Matrix::Zero(n0 + 2 * n1, n0 + 2 * n1);
  out.block(0, 0, n0, n0) = q0;
  out.block(0, n0, n0, n1) = -q1_f.transpose();
  out.block(0, n0 + n1, n0, n1) = -q0_e0;
  out.block(n0, 0, n1, n0) = -q0_e0.transpose();
  out.block(n0, n0, n1, n1) = q1_ie1.transpose();
  out.block(n0, n0 + n1, n1, n1) = e0.transpose() * q0 * e0;
  out.block(n0 + n1, 0, n1, n0) = -q1_f;
  out.block(n0 + n1, n0 + n1, n1, n1) = q1_ie1;
  return out;
}

Vector offset_vector(const Matrix& q0, const Matrix& q1, const Matrix& e0, const Vector& zeta0,
                     const Vector& zeta1) {
  const auto n0 = q0.rows(), n1 = q1.rows();
  Vector out(n0 + 2 * n1);
  out.segment(0, n0) = -q0 * zeta0;
  out.segment(n0, n1) = e0.transpose() * q0 * zeta0;
  out.segment(n0 + n1, n1) = -q1 * zeta1;
  return out;
}

Matrix gain(const Matrix& c, const Matrix& r, const char* name) {
  Eigen::LLT<Matrix> llt(0.5 * (r + r.transpose()));
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorCode::SingularR, std::string(name) + " is not invertible");
  }
  const Matrix g = c * llt.solve(c.transpose());
  return 0.5 * (g + g.transpose());
}

}  // namespace

Matrix default_running_weight(const LqModel& model) {
  return block_diag3(model.Q0, model.Q1, model.Q1);
}

Matrix default_terminal_weight(const LqModel& model) {
  return block_diag3(model.Qbar0, model.Qbar1, model.Qbar1);
}

Matrix assemble_running_total(const LqModel& model) {
  return quadratic_total(model.Q0, model.Q1, model.E0, model.E1, model.F);
}

Matrix assemble_terminal_total(const LqModel& model) {
  return quadratic_total(model.Qbar0, model.Qbar1, model.Ebar0, model.Ebar1, model.Fbar);
}

Matrix agent_control_gain(const LqModel& model) { return gain(model.C1, model.R1, "R1"); }

Matrix dominating_control_gain(const LqModel& model) { return gain(model.C0, model.R0, "R0"); }

BlockSystem assemble_blocks(const LqModel& model, const SplitSpec& split) {
  if (const auto report = validate_model(model); !report.ok()) {
    throw Error(ErrorCode::InvalidModel, report.summary());
  }
  const int n0 = model.n0, n1 = model.n1;
  BlockSystem b;
  b.n0 = n0;
  b.n1 = n1;
  b.dim = n0 + 2 * n1;
  b.T = model.T;
  const int dim = b.dim;
  const int iz = n0 + n1;  // offset of the z block

  b.drift = Matrix::Zero(dim, dim);
  b.drift.block(0, 0, n0, n0) = model.A0;
  b.drift.block(0, n0, n0, n1) = model.B0;
  b.drift.block(n0, 0, n1, n0) = model.D;
  b.drift.block(n0, n0, n1, n1) = model.A1 + model.B1;
  b.drift.block(iz, iz, n1, n1) = model.A1;

  b.coupling = Matrix::Zero(dim, dim);
  b.coupling.block(0, n0, n0, n1) = -model.B0;
  b.coupling.block(0, iz, n0, n1) = model.B0;
  b.coupling.block(n0, 0, n1, n0) = -model.D;
  b.coupling.block(n0, n0, n1, n1) = -model.B1;
  b.coupling.block(iz, 0, n1, n0) = model.D;
  b.coupling.block(iz, iz, n1, n1) = model.B1;

  const Matrix c1 = agent_control_gain(model);
  b.control_gain = block_diag3(dominating_control_gain(model), c1, c1);

  const Matrix running_w = split.running_weight.value_or(default_running_weight(model));
  const Matrix terminal_w = split.terminal_weight.value_or(default_terminal_weight(model));
  auto running = split_quadratic(assemble_running_total(model), running_w, true);
  auto terminal = split_quadratic(assemble_terminal_total(model), terminal_w, false);
  b.running_weight = std::move(running.weight);
  b.running_cross = std::move(running.cross);
  b.terminal_weight = std::move(terminal.weight);
  b.terminal_cross = std::move(terminal.cross);

  b.running_offset = offset_vector(model.Q0, model.Q1, model.E0, model.zeta0, model.zeta1);
  b.terminal_offset =
      offset_vector(model.Qbar0, model.Qbar1, model.Ebar0, model.zetabar0, model.zetabar1);

  b.noise = Matrix::Zero(dim, model.d0);
  b.noise.topRows(n0) = model.sigma0;

  b.init_mean = Vector::Zero(dim);
  b.init_mean.head(n0) = model.xi0_mean;
  b.init_mean.tail(n1) = model.xi1_mean;
  b.init_cov = Matrix::Zero(dim, dim);
  b.init_cov.topLeftCorner(n0, n0) = model.xi0_cov;
  return b;
}

}  // namespace lqmfg
