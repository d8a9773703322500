#include "lqmfg/wellposed.hpp"

#include "lqmfg/error.hpp"
#include "lqmfg/mfg.hpp"
#include "lqmfg/rng.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace lqmfg {

namespace {

Eigen::SelfAdjointEigenSolver<Matrix> eig(const Matrix& m) {
  return Eigen::SelfAdjointEigenSolver<Matrix>(0.5 * (m + m.transpose()));
}

// Both ends of the spectrum, for the relative definiteness tests.
bool is_spd(const Eigen::SelfAdjointEigenSolver<Matrix>& es) {
  const Vector& ev = es.eigenvalues();
  const double top = ev.cwiseAbs().maxCoeff();
  return top > 0.0 && ev.minCoeff() > 1e-12 * top;
}

double weighted(const Matrix& inner, const Matrix& s, MatrixNorm norm) {
  return matrix_norm(inner * s * inner, norm);
}

}  // namespace

Matrix spd_inv_sqrt(const Matrix& m) {
  if (m.rows() != m.cols() || m.size() == 0) {
    throw Error(ErrorCode::NotSPD, "inverse square root needs a non-empty square matrix");
  }
  const auto es = eig(m);
  if (!is_spd(es)) throw Error(ErrorCode::NotSPD, "matrix is not symmetric positive definite");
  const Vector inv = es.eigenvalues().cwiseSqrt().cwiseInverse();
  return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

Matrix psd_sqrt(const Matrix& m) {
  if (m.size() == 0) return m;
  const auto es = eig(m);
  const Vector root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

double matrix_norm(const Matrix& m, MatrixNorm norm) {
  if (m.size() == 0) return 0.0;
  if (norm == MatrixNorm::Frobenius) return m.norm();
  return Eigen::JacobiSVD<Matrix>(m).singularValues()(0);
}

double phi_norm(const Matrix& a, const Matrix& q, const Matrix& qbar, const TimeGrid& grid,
                MatrixNorm norm, bool check_spd) {
  if (check_spd) spd_inv_sqrt(q);  // validates only
  const Matrix q_half = psd_sqrt(q);
  const Matrix qbar_half = psd_sqrt(qbar);
  const int n = grid.n_steps;
  const double dt = grid.dt();
  // phi(s, t) depends on s - t only; tabulate lag j.
  std::vector<double> run(static_cast<std::size_t>(n) + 1), term(static_cast<std::size_t>(n) + 1);
  for (int j = 0; j <= n; ++j) {
    const Matrix et = fundamental_solution(a, grid.t(j), 0.0).transpose();
    const double r = matrix_norm(et * q_half, norm);
    const double b = matrix_norm(et * qbar_half, norm);
    run[static_cast<std::size_t>(j)] = r * r;
    term[static_cast<std::size_t>(j)] = b * b;
  }
  double best = 0.0;
  double integral = 0.0;  // trapezoid over lags 0..j
  for (int j = 0; j <= n; ++j) {
    if (j > 0) {
      integral += 0.5 * dt * (run[static_cast<std::size_t>(j) - 1] + run[static_cast<std::size_t>(j)]);
    }
    best = std::max(best, term[static_cast<std::size_t>(j)] + integral);
  }
  return std::sqrt(best);
}

CouplingNorms coupling_norms(const Matrix& q, const Matrix& s, const Matrix& qbar,
                             const Matrix& sbar, const Matrix& b, MatrixNorm norm) {
  CouplingNorms out;
  const Matrix q_inv = spd_inv_sqrt(q);
  const double running = weighted(q_inv, s, norm);

  double terminal = 0.0;
  const auto es = eig(qbar);
  if (is_spd(es)) {
    const Vector inv = es.eigenvalues().cwiseSqrt().cwiseInverse();
    terminal = weighted(es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose(), sbar,
                        norm);
  } else {
    const Vector& ev = es.eigenvalues();
    const double top = std::max(ev.cwiseAbs().maxCoeff(), 0.0);
    const double cut = 1e-12 * std::max(top, 1.0);
    const Eigen::Index dim = qbar.rows();
    Vector inv = Vector::Zero(dim);
    Matrix kernel_proj = Matrix::Zero(dim, dim);
    for (Eigen::Index i = 0; i < dim; ++i) {
      const Vector v = es.eigenvectors().col(i);
      if (ev(i) > cut) {
        inv(i) = 1.0 / std::sqrt(ev(i));
      } else {
        kernel_proj += v * v.transpose();
      }
    }
    const double scale = std::max(1.0, sbar.cwiseAbs().maxCoeff());
    const bool vanishes = (sbar * kernel_proj).cwiseAbs().maxCoeff() <= 1e-12 * scale &&
                          (kernel_proj * sbar).cwiseAbs().maxCoeff() <= 1e-12 * scale;
    if (vanishes) {
      terminal = weighted(es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose(),
                          sbar, norm);
    } else {
      terminal = std::numeric_limits<double>::infinity();
    }
  }
  out.NS = std::max(running, terminal);
  out.B_weighted = matrix_norm(b * q_inv, norm);
  return out;
}

ConditionReport sufficient_condition(const BlockSystem& blocks, const TimeGrid& grid,
                                     MatrixNorm norm) {
  ConditionReport r;
  r.T = grid.T;
  r.norm = norm;
  r.phi_norm_T = phi_norm(blocks.drift, blocks.running_weight, blocks.terminal_weight, grid, norm);
  const CouplingNorms c = coupling_norms(blocks.running_weight, blocks.running_cross,
                                         blocks.terminal_weight, blocks.terminal_cross,
                                         blocks.coupling, norm);
  r.NS = c.NS;
  r.B_weighted = c.B_weighted;
  r.lhs = (1.0 + std::sqrt(grid.T) * r.phi_norm_T * r.B_weighted) * (1.0 + r.NS);
  r.holds = std::isfinite(r.lhs) && r.lhs < 2.0;
  return r;
}

ConditionReport sufficient_condition(const LqModel& model, const SplitSpec& split,
                                     const TimeGrid& grid, MatrixNorm norm) {
  return sufficient_condition(assemble_blocks(model, split), grid, norm);
}

double hinner(const VectorPath& x, const VectorPath& y, const Matrix& q, const Matrix& qbar) {
  if (x.size() != y.size() || x.size() == 0) {
    throw Error(ErrorCode::LengthMismatch, "H inner product needs paths of equal length");
  }
  const int n = x.size() - 1;
  const double dt = x.grid.dt();
  double acc = 0.0;
  for (int k = 0; k <= n; ++k) {
    const double w = (k == 0 || k == n) ? 0.5 * dt : dt;
    acc += w * x[k].dot(q * y[k]);
  }
  return acc + x[n].dot(qbar * y[n]);
}

double hnorm(const VectorPath& x, const Matrix& q, const Matrix& qbar) {
  return std::sqrt(std::max(0.0, hinner(x, x, q, qbar)));
}

double empirical_contraction(const BlockSystem& blocks, int n_probes, std::uint64_t seed,
                             const TimeGrid& grid) {
  const PicardMap map(blocks, grid, PicardSources::None);
  const Matrix& q = blocks.running_weight;
  const Matrix& qbar = blocks.terminal_weight;
  constexpr int kModes = 5;
  constexpr int kPower = 40;
  double best = 0.0;
  for (int probe = 0; probe < n_probes; ++probe) {
    NormalStream rng(stream_seed(seed, static_cast<std::uint64_t>(probe)));
    Matrix coef(blocks.dim, kModes);
    rng.fill(coef);
    VectorPath x{grid, {}};
    for (int k = 0; k <= grid.n_steps; ++k) {
      Vector v = Vector::Zero(blocks.dim);
      for (int mode = 0; mode < kModes; ++mode) {
        v += coef.col(mode) * std::cos(mode * std::numbers::pi * grid.t(k) / grid.T) / (1.0 + mode);
      }
      x.values.push_back(v);
    }
    double norm = hnorm(x, q, qbar);
    if (norm == 0.0) continue;
    // The images Phi^k x are admissible probes too and single out the
    // slowest-decaying direction.
    for (int it = 0; it < kPower; ++it) {
      VectorPath y = map(x);
      const double ny = hnorm(y, q, qbar);
      best = std::max(best, ny / norm);
      if (ny == 0.0 || !std::isfinite(ny)) break;
      for (auto& v : y.values) v /= ny;
      x = std::move(y);
      norm = 1.0;
    }
  }
  return best;
}

double contraction_bound(const ConditionReport& report) {
  const double c = std::sqrt(report.T) * report.phi_norm_T * report.B_weighted;
  const double n = report.NS;
  if (!std::isfinite(c) || !std::isfinite(n)) return std::numeric_limits<double>::infinity();
  return 0.5 * ((n + c) + std::sqrt((n + c) * (n + c) + 4.0 * c * n));
}

}  // namespace lqmfg
