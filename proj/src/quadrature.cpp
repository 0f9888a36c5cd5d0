#include "freefall/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <random>

#include <Eigen/Eigenvalues>
#include <boost/math/special_functions/erf.hpp>
#include <boost/random/sobol.hpp>

#include "freefall/errors.hpp"

namespace freefall {

namespace {

GaussHermiteRule build_rule(int n) {
  // Jacobi matrix of the probabilists' Hermite recurrence: off-diagonal sqrt(k).
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    jacobi(k, k - 1) = std::sqrt(static_cast<double>(k));
    jacobi(k - 1, k) = jacobi(k, k - 1);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(jacobi);
  GaussHermiteRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    rule.nodes[i] = solver.eigenvalues()(i);
    const double v = solver.eigenvectors()(0, i);
    rule.weights[i] = v * v;
    total += rule.weights[i];
  }
  for (double& w : rule.weights) w /= total;
  return rule;
}

}  // namespace

const GaussHermiteRule& gauss_hermite(int order) {
  if (order < 1 || order > 512) throw DomainError("Gauss-Hermite order must lie in [1, 512]");
  static std::mutex mutex;
  static std::map<int, std::unique_ptr<GaussHermiteRule>> cache;
  std::lock_guard<std::mutex> lock(mutex);
  auto& slot = cache[order];
  if (!slot) slot = std::make_unique<GaussHermiteRule>(build_rule(order));
  return *slot;
}

double gauss_hermite_3d(const std::function<double(double, double, double)>& f, int order) {
  const GaussHermiteRule& r = gauss_hermite(order);
  double sum = 0.0;
  for (int i = 0; i < order; ++i) {
    double si = 0.0;
    for (int j = 0; j < order; ++j) {
      double sj = 0.0;
      for (int k = 0; k < order; ++k) sj += r.weights[k] * f(r.nodes[i], r.nodes[j], r.nodes[k]);
      si += r.weights[j] * sj;
    }
    sum += r.weights[i] * si;
  }
  return sum;
}

QmcEstimate qmc_normal_3d(const std::function<double(double, double, double)>& f,
                          std::size_t points_per_replicate, int replicates, std::uint64_t seed) {
  if (replicates < 2) throw DomainError("at least two QMC replicates are required");
  if (points_per_replicate == 0) throw DomainError("QMC point count must be positive");

  // One Sobol sequence, shared by every replicate.
  std::vector<std::array<double, 3>> base(points_per_replicate);
  boost::random::sobol engine(3);
  const double scale = std::ldexp(1.0, -64);
  for (auto& pt : base) {
    for (double& c : pt) c = static_cast<double>(engine()) * scale;
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> means(replicates);
  for (int r = 0; r < replicates; ++r) {
    const std::array<double, 3> shift{unit(rng), unit(rng), unit(rng)};
    double sum = 0.0;
    for (const auto& pt : base) {
      std::array<double, 3> z;
      for (int d = 0; d < 3; ++d) {
        double u = pt[d] + shift[d];
        if (u >= 1.0) u -= 1.0;
        u = std::clamp(u, 1e-300, 1.0 - 1e-16);
        z[d] = -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * u);
      }
      sum += f(z[0], z[1], z[2]);
    }
    means[r] = sum / static_cast<double>(points_per_replicate);
  }
  double mean = 0.0;
  for (double m : means) mean += m;
  mean /= replicates;
  double var = 0.0;
  for (double m : means) var += (m - mean) * (m - mean);
  var /= (replicates - 1);
  return {mean, std::sqrt(var / replicates), points_per_replicate * replicates};
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace freefall
