#pragma once

#include <span>
#include <vector>

namespace lqmfg {

struct Estimate {
  double mean = 0.0;
  double stderr_ = 0.0;  // standard error of the mean
};

/// Sample mean and its standard error (n - 1 normalisation).
Estimate mean_and_stderr(std::span<const double> samples);

/// Ordinary least squares of log(y) on log(x).
struct LogLogFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_stderr = 0.0;
  int points = 0;
};

/// Points with y <= 0 are skipped; fewer than two usable points give a zero
/// fit with points < 2.
LogLogFit loglog_fit(std::span<const double> x, std::span<const double> y);

}  // namespace lqmfg
