#include "lqmfg/integrate.hpp"

#include "lqmfg/error.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

namespace lqmfg {

TimeGrid::TimeGrid(double horizon, int steps) : T(horizon), n_steps(steps) {
  if (!(horizon > 0.0) || steps <= 0) {
    throw Error(ErrorCode::InvalidArgument, "time grid needs T > 0 and n_steps > 0");
  }
}

TimeGrid TimeGrid::with_density(double horizon, double steps_per_unit) {
  const int n = std::max(1, static_cast<int>(std::lround(steps_per_unit * horizon)));
  return {horizon, n};
}

double TimeGrid::t(int k) const {
  // The last node is pinned so that t(n_steps) == T exactly.
  return k == n_steps ? T : T * static_cast<double>(k) / static_cast<double>(n_steps);
}

template <typename Value>
Value GridPath<Value>::at(double t) const {
  const double s = std::clamp(t / grid.dt(), 0.0, static_cast<double>(grid.n_steps));
  const int k = std::min(static_cast<int>(s), grid.n_steps - 1);
  const double w = s - k;
  if (w == 0.0) return (*this)[k];
  return (1.0 - w) * (*this)[k] + w * (*this)[k + 1];
}

template <typename Value>
GridPath<Value> GridPath<Value>::coarsened() const {
  if (grid.n_steps % 2 != 0) {
    throw Error(ErrorCode::InvalidArgument, "cannot coarsen a path with an odd step count");
  }
  GridPath out{TimeGrid(grid.T, grid.n_steps / 2), {}};
  out.values.reserve(static_cast<std::size_t>(out.grid.size()));
  for (int k = 0; k <= grid.n_steps; k += 2) out.values.push_back((*this)[k]);
  return out;
}

template struct GridPath<Matrix>;
template struct GridPath<Vector>;

namespace {

void check_stage(const Matrix& m, double t, double cap) {
  if (!m.allFinite() || m.cwiseAbs().maxCoeff() > cap) {
    std::ostringstream os;
    os << "solution exceeded the blow-up cap " << cap << " near t = " << t;
    throw Error(ErrorCode::Diverged, os.str());
  }
}

}  // namespace

MatrixPath integrate_matrix_ode(const MatrixRhs& rhs, const Matrix& boundary, const TimeGrid& grid,
                                Direction direction, const IntegratorOptions& options) {
  MatrixPath path{grid, std::vector<Matrix>(static_cast<std::size_t>(grid.size()))};
  const int n = grid.n_steps;
  const double h = direction == Direction::Forward ? grid.dt() : -grid.dt();
  const double cap = options.blowup_cap;

  int k = direction == Direction::Forward ? 0 : n;
  const int step = direction == Direction::Forward ? 1 : -1;
  Matrix m = boundary;
  check_stage(m, grid.t(k), cap);
  path[k] = m;
  for (int i = 0; i < n; ++i, k += step) {
    const double t = grid.t(k);
    const double tm = t + 0.5 * h;
    const double tn = grid.t(k + step);
    const Matrix k1 = rhs(t, m);
    const Matrix s2 = m + 0.5 * h * k1;
    check_stage(s2, tm, cap);
    const Matrix k2 = rhs(tm, s2);
    const Matrix s3 = m + 0.5 * h * k2;
    check_stage(s3, tm, cap);
    const Matrix k3 = rhs(tm, s3);
    const Matrix s4 = m + h * k3;
    check_stage(s4, tn, cap);
    const Matrix k4 = rhs(tn, s4);
    m += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    check_stage(m, tn, cap);
    path[k + step] = m;
  }
  return path;
}

VectorPath integrate_affine_ode(const std::function<Matrix(double)>& a,
                                const std::function<Vector(double)>& b, const Vector& boundary,
                                const TimeGrid& grid, Direction direction,
                                const IntegratorOptions& options) {
  // In the direction of integration the ODE reads dg/ds = A g + b; in
  // physical time the backward case flips the sign of the whole rhs.
  const double sign = direction == Direction::Forward ? 1.0 : -1.0;
  auto rhs = [&](double t, const Matrix& g) -> Matrix {
    return sign * (a(t) * g + b(t));
  };
  const MatrixPath m = integrate_matrix_ode(rhs, boundary, grid, direction, options);
  VectorPath out{grid, {}};
  out.values.reserve(m.values.size());
  for (const auto& v : m.values) out.values.emplace_back(v.col(0));
  return out;
}

Matrix fundamental_solution(const Matrix& a, double s, double t) {
  const Matrix scaled = a * (s - t);
  return scaled.exp();
}

Matrix hermite_midpoint(const Matrix& left, const Matrix& right, const Matrix& dleft,
                        const Matrix& dright, double h) {
  return 0.5 * (left + right) + (h / 8.0) * (dleft - dright);
}

namespace {

void put(std::ostream& os, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  os << buf;
}

template <typename Value>
void write_path_csv(std::ostream& os, const GridPath<Value>& path, const std::string& prefix,
                    const std::vector<std::pair<std::string, std::vector<double>>>& extra) {
  const auto rows = path.values.empty() ? 0 : path[0].rows();
  const auto cols = path.values.empty() ? 0 : path[0].cols();
  os << "t";
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      os << ',' << prefix << '_' << i;
      if (cols > 1) os << '_' << j;
    }
  }
  for (const auto& [name, column] : extra) os << ',' << name;
  os << '\n';
  for (int k = 0; k < path.size(); ++k) {
    put(os, path.grid.t(k));
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j) {
        os << ',';
        put(os, path[k](i, j));
      }
    }
    for (const auto& [name, column] : extra) {
      os << ',';
      put(os, column.at(static_cast<std::size_t>(k)));
    }
    os << '\n';
  }
}

}  // namespace

void write_csv(std::ostream& os, const MatrixPath& path, const std::string& prefix,
               const std::vector<std::pair<std::string, std::vector<double>>>& extra) {
  write_path_csv(os, path, prefix, extra);
}

void write_csv(std::ostream& os, const VectorPath& path, const std::string& prefix,
               const std::vector<std::pair<std::string, std::vector<double>>>& extra) {
  write_path_csv(os, path, prefix, extra);
}

}  // namespace lqmfg
