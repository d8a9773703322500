#include "lqmfg/error.hpp"
#include "lqmfg/mfg.hpp"
#include "lqmfg/wellposed.hpp"

#include <algorithm>
#include <cmath>

namespace lqmfg {

PicardMap::PicardMap(const BlockSystem& blocks, const TimeGrid& grid, PicardSources sources,
                     const IntegratorOptions& options)
    : blocks_(blocks), grid_(grid), sources_(sources), options_(options) {
  const Matrix& a = blocks_.drift;
  const Matrix& c = blocks_.control_gain;
  const Matrix& q = blocks_.running_weight;
  auto rhs = [&](double, const Matrix& k) -> Matrix {
    const Matrix sym = 0.5 * (k + k.transpose());
    return -(a.transpose() * sym + sym * a - sym * c * sym + q);
  };
  try {
    inner_ = integrate_matrix_ode(rhs, 0.5 * (blocks_.terminal_weight + blocks_.terminal_weight.transpose()),
                                  grid_.refined(), Direction::Backward, options_);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::Diverged) throw;
    throw Error(ErrorCode::InnerRiccatiFailure,
                std::string("inner Riccati equation of the Picard map failed: ") + e.what());
  }
  for (auto& k : inner_.values) {
    k = (0.5 * (k + k.transpose())).eval();
    h_drift_.push_back(a.transpose() - k * c);
    h_source_.push_back(k * blocks_.coupling + blocks_.running_cross);
    x_drift_.push_back(a - c * k);
  }
}

VectorPath PicardMap::operator()(const VectorPath& x) const {
  if (!(x.grid == grid_) || x.size() != grid_.size()) {
    throw Error(ErrorCode::LengthMismatch, "Picard input is not on the map's grid");
  }
  const int n = grid_.n_steps;
  const double dt = grid_.dt();
  const bool src = sources_ == PicardSources::Model;
  const Vector zero = Vector::Zero(blocks_.dim);
  const Vector& k_src = src ? blocks_.running_offset : zero;

  // dh/dt in physical time at fine index j.
  auto h_rate = [&](int j, const Vector& h, const Vector& xv) -> Vector {
    const auto jj = static_cast<std::size_t>(j);
    return -(h_drift_[jj] * h + h_source_[jj] * xv + k_src);
  };

  std::vector<Vector> h(static_cast<std::size_t>(n) + 1), hd(static_cast<std::size_t>(n) + 1);
  Vector hv = blocks_.terminal_cross * x[n];
  if (src) hv += blocks_.terminal_offset;
  h[static_cast<std::size_t>(n)] = hv;
  for (int k = n - 1; k >= 0; --k) {
    const Vector xm = 0.5 * (x[k] + x[k + 1]);
    const Vector r1 = h_rate(2 * k + 2, hv, x[k + 1]);
    const Vector r2 = h_rate(2 * k + 1, hv - 0.5 * dt * r1, xm);
    const Vector r3 = h_rate(2 * k + 1, hv - 0.5 * dt * r2, xm);
    const Vector r4 = h_rate(2 * k, hv - dt * r3, x[k]);
    hv -= (dt / 6.0) * (r1 + 2.0 * r2 + 2.0 * r3 + r4);
    if (!hv.allFinite()) throw Error(ErrorCode::Diverged, "Picard offset is not finite");
    h[static_cast<std::size_t>(k)] = hv;
  }
  for (int k = 0; k <= n; ++k) {
    hd[static_cast<std::size_t>(k)] = h_rate(2 * k, h[static_cast<std::size_t>(k)], x[k]);
  }

  auto x_rate = [&](int j, const Vector& xx, const Vector& hh, const Vector& xin) -> Vector {
    const auto jj = static_cast<std::size_t>(j);
    return x_drift_[jj] * xx - blocks_.control_gain * hh + blocks_.coupling * xin;
  };
  VectorPath out{grid_, {}};
  out.values.reserve(static_cast<std::size_t>(n) + 1);
  Vector xx = src ? blocks_.init_mean : zero;
  out.values.push_back(xx);
  for (int k = 0; k < n; ++k) {
    const auto kk = static_cast<std::size_t>(k);
    const Vector xm = 0.5 * (x[k] + x[k + 1]);
    const Vector hm = hermite_midpoint(h[kk], h[kk + 1], hd[kk], hd[kk + 1], dt);
    const Vector r1 = x_rate(2 * k, xx, h[kk], x[k]);
    const Vector r2 = x_rate(2 * k + 1, xx + 0.5 * dt * r1, hm, xm);
    const Vector r3 = x_rate(2 * k + 1, xx + 0.5 * dt * r2, hm, xm);
    const Vector r4 = x_rate(2 * k + 2, xx + dt * r3, h[kk + 1], x[k + 1]);
    xx += (dt / 6.0) * (r1 + 2.0 * r2 + 2.0 * r3 + r4);
    out.values.push_back(xx);
  }
  return out;
}

VectorPath picard_map(const BlockSystem& blocks, const VectorPath& x, PicardSources sources) {
  return PicardMap(blocks, x.grid, sources)(x);
}

namespace {

// Increments before they reach round-off level.
std::vector<double> usable_increments(const std::vector<double>& increments) {
  std::vector<double> usable;
  const double floor = increments.empty() ? 0.0 : 1e-12 * increments.front();
  for (double v : increments) {
    if (!(v > floor) || !std::isfinite(v)) break;
    usable.push_back(v);
  }
  return usable;
}

}  // namespace

double increment_ratio(const std::vector<double>& increments) {
  const std::vector<double> usable = usable_increments(increments);
  double best = 0.0;
  for (std::size_t i = 1; i < usable.size(); ++i) best = std::max(best, usable[i] / usable[i - 1]);
  return best;
}

double asymptotic_ratio(const std::vector<double>& increments) {
  const std::vector<double> usable = usable_increments(increments);
  if (usable.size() < 2) return 0.0;
  const std::size_t last = usable.size() - 1;
  const std::size_t span = std::min<std::size_t>(3, last);
  return std::pow(usable[last] / usable[last - span], 1.0 / static_cast<double>(span));
}

PicardResult picard_iterate(const BlockSystem& blocks, const TimeGrid& grid, double tol,
                            int max_iter, PicardSources sources) {
  const PicardMap map(blocks, grid, sources);
  VectorPath x{grid, std::vector<Vector>(static_cast<std::size_t>(grid.size()),
                                         Vector::Zero(blocks.dim))};
  PicardResult out;
  for (int it = 1; it <= max_iter; ++it) {
    VectorPath next = map(x);
    VectorPath diff{grid, {}};
    diff.values.reserve(next.values.size());
    for (int k = 0; k < grid.size(); ++k) diff.values.push_back(next[k] - x[k]);
    const double inc = hnorm(diff, blocks.running_weight, blocks.terminal_weight);
    out.increments.push_back(inc);
    out.iterations = it;
    x = std::move(next);
    if (inc <= tol) {
      out.converged = true;
      break;
    }
    if (!std::isfinite(inc) || inc > 1e100) break;
  }
  out.x = std::move(x);
  out.ratio = increment_ratio(out.increments);
  out.asymptotic_ratio = asymptotic_ratio(out.increments);
  return out;
}

}  // namespace lqmfg
