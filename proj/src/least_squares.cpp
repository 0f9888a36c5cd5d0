#include "freefall/least_squares.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/SVD>

#include "freefall/errors.hpp"

namespace freefall {

namespace {

void finish(const ResidualFunction& f, LmResult& res, const LmOptions& options) {
  Eigen::MatrixXd j;
  f(res.params, res.residuals, &j);
  res.jacobian = j;
  res.cost = 0.5 * res.residuals.squaredNorm();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(j, Eigen::ComputeThinU | Eigen::ComputeThinV);
  res.singular_values = svd.singularValues();
  const double smax = res.singular_values.size() ? res.singular_values(0) : 0.0;
  Eigen::VectorXd inv2 = Eigen::VectorXd::Zero(res.singular_values.size());
  res.rank = 0;
  for (Eigen::Index i = 0; i < res.singular_values.size(); ++i) {
    const double s = res.singular_values(i);
    if (s > options.rank_tolerance * smax && s > 0.0) {
      inv2(i) = 1.0 / (s * s);
      ++res.rank;
    }
  }
  res.normal_inverse = svd.matrixV() * inv2.asDiagonal() * svd.matrixV().transpose();
}

}  // namespace

LmResult levenberg_marquardt(const ResidualFunction& f, const Eigen::VectorXd& x0,
                             const LmOptions& options) {
  LmResult res;
  Eigen::VectorXd x = x0;
  Eigen::VectorXd r;
  Eigen::MatrixXd j;
  f(x, r, &j);
  double cost = 0.5 * r.squaredNorm();
  if (!std::isfinite(cost)) throw FitError("initial residual is not finite", cost, 0);
  double lambda = options.initial_lambda;
  const auto n = x.size();

  int it = 0;
  bool converged = false;
  for (; it < options.max_iterations && !converged; ++it) {
    const Eigen::MatrixXd jtj = j.transpose() * j;
    const Eigen::VectorXd g = j.transpose() * r;
    Eigen::VectorXd diag = jtj.diagonal().cwiseMax(1e-300);
    bool accepted = false;
    for (int tries = 0; tries < 40 && !accepted; ++tries) {
      Eigen::MatrixXd a = jtj;
      for (Eigen::Index k = 0; k < n; ++k) a(k, k) += lambda * diag(k);
      const Eigen::VectorXd step = a.ldlt().solve(-g);
      if (!step.allFinite()) {
        lambda *= 10.0;
        continue;
      }
      const Eigen::VectorXd trial = x + step;
      Eigen::VectorXd r_trial;
      f(trial, r_trial, nullptr);
      const double cost_trial = 0.5 * r_trial.squaredNorm();
      if (std::isfinite(cost_trial) && cost_trial <= cost) {
        const double rel = step.norm() / (x.norm() + 1e-300);
        x = trial;
        cost = cost_trial;
        lambda = std::max(lambda / 10.0, 1e-15);
        accepted = true;
        if (rel < options.step_tolerance) converged = true;
      } else {
        lambda *= 10.0;
      }
    }
    if (!accepted) {
      // No descent direction left: at a minimum to working precision.
      converged = true;
      break;
    }
    f(x, r, &j);
  }
  res.params = x;
  res.iterations = it;
  res.converged = converged;
  finish(f, res, options);
  if (!converged) throw FitError("Levenberg-Marquardt did not converge", std::sqrt(2.0 * cost), it);
  return res;
}

}  // namespace freefall
