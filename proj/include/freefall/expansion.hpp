#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace freefall {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double v) const { return v >= lo && v <= hi; }
};

struct ExpansionEstimate {
  double xi_q = 1.0;
  double xi_p = 1.0;
  Eigen::Matrix2d covariance = Eigen::Matrix2d::Identity();  // of (q/q0, p/p0)
  Interval xi_q_ci;
  Interval xi_p_ci;
  std::size_t samples = 0;
  std::string ci_method;
};

enum class IntervalMethod { chi_square, bootstrap };

struct ExpansionOptions {
  /// chi_square: each eigenvalue scaled by chi^2 quantiles with n - 1 degrees of freedom.
  /// bootstrap: percentile intervals, biased when the two semi-axes are nearly equal.
  IntervalMethod method = IntervalMethod::chi_square;
  int bootstrap_resamples = 2000;
  std::uint64_t seed = 1;
  /// Two-sided coverage of the reported intervals (2 sigma).
  double coverage = 0.9544997361036416;
};

/// Principal semi-axes of the sample covariance of (q/q0, p/p0) with intervals on each.
/// Needs at least 10 samples.
ExpansionEstimate ensemble_expansion(const std::vector<double>& q, const std::vector<double>& p,
                                     double q0, double p0, const ExpansionOptions& options = {});

}  // namespace freefall
