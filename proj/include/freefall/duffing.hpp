#pragma once

#include <optional>
#include <vector>

#include <Eigen/Core>

#include "freefall/physics.hpp"

namespace freefall {

/// Column coefficients (xi_x, xi_y, xi_z) [1/m^2]. For a Gaussian beam xi_j = -2 / w_j^2.
struct DuffingTensor {
  Eigen::Vector3d xi = Eigen::Vector3d::Zero();
  Eigen::Vector3d xi_se = Eigen::Vector3d::Zero();
  /// False for components the data cannot separate; their values stay at the start guess
  /// plus whatever the identifiable combination required.
  std::array<bool, 3> identifiable{true, true, true};
  int rank = 0;
  Eigen::VectorXd singular_values;
  bool hardening = false;  // some identifiable xi > 0
  double rms_residual = 0.0;

  /// w_j = sqrt(-2 / xi_j); NaN where xi_j >= 0.
  Eigen::Vector3d waists() const;
};

/// Row j of the Duffing tensor: x and y rows (xi_x, xi_y, xi_z), z row (2 xi_x, 2 xi_y, xi_z).
Eigen::Vector3d duffing_row(Axis row, const Eigen::Vector3d& xi);

/// Omega_j = Omega_0j (1 + 3/4 sum_i xi_ji <q_i^2>).
double duffing_frequency(double omega0, const Eigen::Vector3d& mean_sq, Axis row,
                         const Eigen::Vector3d& xi);

/// xi_j = -2 / w_j^2 for the waists (w_x, w_y, z_R).
Eigen::Vector3d gaussian_duffing_tensor(const TrapParams& trap);

struct DuffingPoint {
  double rms = 0.0;    // rms amplitude along the fitted axis [m]
  double omega = 0.0;  // measured angular frequency [rad/s]
};

struct DuffingFitOptions {
  Axis row = Axis::y;
  /// Neutral start: xi_j = -2 / start_waist^2 on all components.
  double start_waist = 1.0e-6;
};

/// Least-squares fit of all three xi_j to (rms, Omega) data along `row`, with the other two
/// axes' mean squares held fixed and the small-amplitude frequency `omega0` known.
DuffingTensor fit_duffing(const std::vector<DuffingPoint>& points, double omega0,
                          const Eigen::Vector3d& fixed_mean_sq,
                          const DuffingFitOptions& options = {});

}  // namespace freefall
