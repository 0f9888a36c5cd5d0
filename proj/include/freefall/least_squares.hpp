#pragma once

#include <functional>

#include <Eigen/Core>

namespace freefall {

/// Residual callback: fills r(x) and, when `jacobian` is non-null, dr/dx.
using ResidualFunction =
    std::function<void(const Eigen::VectorXd& x, Eigen::VectorXd& r, Eigen::MatrixXd* jacobian)>;

struct LmOptions {
  int max_iterations = 200;
  double step_tolerance = 1e-8;  // relative parameter step
  double initial_lambda = 1e-3;
  /// Singular values below this fraction of the largest are treated as zero.
  double rank_tolerance = 1e-10;
};

struct LmResult {
  Eigen::VectorXd params;
  Eigen::VectorXd residuals;
  Eigen::MatrixXd jacobian;
  /// Pseudo-inverse of J^T J at the solution.
  Eigen::MatrixXd normal_inverse;
  Eigen::VectorXd singular_values;
  int rank = 0;
  double cost = 0.0;  // 0.5 |r|^2
  int iterations = 0;
  bool converged = false;
};

/// Levenberg-Marquardt with Marquardt diagonal scaling. Throws FitError if the cost is not
/// finite or the iteration budget is exhausted.
LmResult levenberg_marquardt(const ResidualFunction& f, const Eigen::VectorXd& x0,
                             const LmOptions& options = {});

}  // namespace freefall
