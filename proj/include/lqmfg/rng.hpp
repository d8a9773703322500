#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <random>

namespace lqmfg {

/// Seed of an independent stream derived from a master seed and up to two
/// indices (path, agent). Pure function of its arguments.
std::uint64_t stream_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0);

/// Standard normal draws from one deterministic stream.
class NormalStream {
 public:
  explicit NormalStream(std::uint64_t seed) : engine_(seed) {}

  double operator()() { return normal_(engine_); }

  template <typename Derived>
  void fill(Eigen::DenseBase<Derived>& out) {
    for (Eigen::Index j = 0; j < out.cols(); ++j)
      for (Eigen::Index i = 0; i < out.rows(); ++i) out(i, j) = normal_(engine_);
  }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Symmetric square-root factor L with L L' = cov (cov PSD).
Eigen::MatrixXd covariance_factor(const Eigen::MatrixXd& cov);

/// Runs fn(i) for i in [0, n) on `threads` workers (0 = hardware
/// concurrency). Callers write into per-index slots only, so the result does
/// not depend on scheduling.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

}  // namespace lqmfg
