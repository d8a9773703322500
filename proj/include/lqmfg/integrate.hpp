#pragma once

#include "lqmfg/model.hpp"

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace lqmfg {

/// Uniform grid t_k = k T / n_steps, k = 0..n_steps.
struct TimeGrid {
  double T = 1.0;
  int n_steps = 400;

  TimeGrid() = default;
  TimeGrid(double horizon, int steps);

  /// n_steps = round(steps_per_unit * T), at least 1.
  static TimeGrid with_density(double horizon, double steps_per_unit = 400.0);

  [[nodiscard]] double dt() const { return T / n_steps; }
  [[nodiscard]] double t(int k) const;
  [[nodiscard]] int size() const { return n_steps + 1; }
  /// Same horizon, twice the steps: node k here is node 2k there.
  [[nodiscard]] TimeGrid refined() const { return {T, 2 * n_steps}; }

  friend bool operator==(const TimeGrid&, const TimeGrid&) = default;
};

enum class Direction { Forward, Backward };

template <typename Value>
struct GridPath {
  TimeGrid grid;
  std::vector<Value> values;

  [[nodiscard]] const Value& operator[](int k) const { return values[static_cast<std::size_t>(k)]; }
  [[nodiscard]] Value& operator[](int k) { return values[static_cast<std::size_t>(k)]; }
  [[nodiscard]] int size() const { return static_cast<int>(values.size()); }

  /// Piecewise-linear evaluation between nodes (clamped to [0, T]).
  [[nodiscard]] Value at(double t) const;

  /// Every other node of a path computed on grid.refined().
  [[nodiscard]] GridPath coarsened() const;
};

using MatrixPath = GridPath<Matrix>;
using VectorPath = GridPath<Vector>;

struct IntegratorOptions {
  double blowup_cap = 1e12;
};

using MatrixRhs = std::function<Matrix(double t, const Matrix& m)>;

/// Classical RK4 for dM/dt = rhs(t, M). A backward solve starts from
/// `boundary` at t = T. Throws Diverged when any stage exceeds the cap.
MatrixPath integrate_matrix_ode(const MatrixRhs& rhs, const Matrix& boundary, const TimeGrid& grid,
                                Direction direction, const IntegratorOptions& options = {});

/// Affine vector ODE written in the direction of integration:
///   forward:   dg/dt = A(t) g + b(t)
///   backward: -dg/dt = A(t) g + b(t)
VectorPath integrate_affine_ode(const std::function<Matrix(double)>& a,
                                const std::function<Vector(double)>& b, const Vector& boundary,
                                const TimeGrid& grid, Direction direction,
                                const IntegratorOptions& options = {});

/// exp(A (s - t)) by scaling and squaring.
Matrix fundamental_solution(const Matrix& a, double s, double t);

/// Cubic Hermite value at the midpoint of [t, t + h].
Matrix hermite_midpoint(const Matrix& left, const Matrix& right, const Matrix& dleft,
                        const Matrix& dright, double h);

/// CSV with header "t,<prefix>_i_j,..." and one row per node; entries are
/// flattened row-major. `extra` columns (one value per node) are appended.
void write_csv(std::ostream& os, const MatrixPath& path, const std::string& prefix,
               const std::vector<std::pair<std::string, std::vector<double>>>& extra = {});
void write_csv(std::ostream& os, const VectorPath& path, const std::string& prefix,
               const std::vector<std::pair<std::string, std::vector<double>>>& extra = {});

}  // namespace lqmfg
