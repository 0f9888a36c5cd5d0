#include "freefall/duffing.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/SVD>

#include "freefall/errors.hpp"
#include "freefall/least_squares.hpp"

namespace freefall {

Eigen::Vector3d DuffingTensor::waists() const {
  Eigen::Vector3d w;
  for (int j = 0; j < 3; ++j) {
    w(j) = xi(j) < 0.0 ? std::sqrt(-2.0 / xi(j)) : std::numeric_limits<double>::quiet_NaN();
  }
  return w;
}

Eigen::Vector3d duffing_row(Axis row, const Eigen::Vector3d& xi) {
  if (row == Axis::z) return {2.0 * xi.x(), 2.0 * xi.y(), xi.z()};
  return xi;
}

double duffing_frequency(double omega0, const Eigen::Vector3d& mean_sq, Axis row,
                         const Eigen::Vector3d& xi) {
  return omega0 * (1.0 + 0.75 * duffing_row(row, xi).dot(mean_sq));
}

Eigen::Vector3d gaussian_duffing_tensor(const TrapParams& trap) {
  const Eigen::Vector3d w = trap.waists();
  return (-2.0 * w.array().square().inverse()).matrix();
}

DuffingTensor fit_duffing(const std::vector<DuffingPoint>& points, double omega0,
                          const Eigen::Vector3d& fixed_mean_sq, const DuffingFitOptions& options) {
  if (points.size() < 4) throw DomainError("Duffing fit needs at least four points");
  if (!(omega0 > 0.0)) throw DomainError("small-amplitude frequency must be positive");
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  for (const auto& p : points) {
    if (!(p.rms >= 0.0 && p.omega > 0.0)) throw DomainError("invalid Duffing data point");
    lo = std::min(lo, p.rms);
    hi = std::max(hi, p.rms);
  }
  if (!(hi >= 2.0 * lo) || hi == 0.0) {
    throw DomainError("Duffing data must span at least a factor two in amplitude");
  }
  const int j = index(options.row);
  // Parameters in 1/um^2 keep the normal equations well scaled.
  constexpr double unit = 1e12;
  const std::size_t n = points.size();
  const ResidualFunction residual = [&](const Eigen::VectorXd& x, Eigen::VectorXd& r,
                                        Eigen::MatrixXd* jac) {
    r.resize(static_cast<Eigen::Index>(n));
    if (jac) jac->resize(static_cast<Eigen::Index>(n), 3);
    const Eigen::Vector3d xi = x * unit;
    for (std::size_t i = 0; i < n; ++i) {
      Eigen::Vector3d msq = fixed_mean_sq;
      msq(j) = points[i].rms * points[i].rms;
      const auto ii = static_cast<Eigen::Index>(i);
      r(ii) = (duffing_frequency(omega0, msq, options.row, xi) - points[i].omega) / omega0;
      if (jac) {
        // d Omega / d xi_i = Omega_0 * 3/4 * (row factor) * <q_i^2>.
        const Eigen::Vector3d factor = duffing_row(options.row, Eigen::Vector3d::Ones());
        jac->row(ii) = (0.75 * unit * factor.cwiseProduct(msq)).transpose();
      }
    }
  };
  const double start = -2.0 / (options.start_waist * options.start_waist) / unit;
  const LmResult lm = levenberg_marquardt(residual, Eigen::Vector3d::Constant(start));

  DuffingTensor t;
  t.xi = lm.params * unit;
  t.rank = lm.rank;
  t.singular_values = lm.singular_values;
  const double dof = std::max<double>(1.0, static_cast<double>(n) - lm.rank);
  const double s2 = lm.residuals.squaredNorm() / dof;
  t.rms_residual = std::sqrt(lm.residuals.squaredNorm() / static_cast<double>(n)) * omega0;

  // A component is identifiable when the null space of J has no weight on it.
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(lm.jacobian, Eigen::ComputeFullV);
  const Eigen::MatrixXd v = svd.matrixV();
  for (int k = 0; k < 3; ++k) {
    double null_weight = 0.0;
    for (int c = lm.rank; c < 3; ++c) null_weight += v(k, c) * v(k, c);
    t.identifiable[k] = null_weight < 1e-6;
    t.xi_se(k) = t.identifiable[k] ? std::sqrt(s2 * lm.normal_inverse(k, k)) * unit
                                   : std::numeric_limits<double>::infinity();
    if (t.identifiable[k] && t.xi(k) > 0.0) t.hardening = true;
  }
  return t;
}

}  // namespace freefall
