#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

namespace freefall {

/// Gauss-Hermite rule for the standard normal weight: E[f(X)] ~ sum_i w_i f(x_i), X ~ N(0, 1).
struct GaussHermiteRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Golub-Welsch construction, cached per order. Thread-safe.
const GaussHermiteRule& gauss_hermite(int order);

/// Tensor-product expectation of f over three independent standard normals.
double gauss_hermite_3d(const std::function<double(double, double, double)>& f, int order);

struct QmcEstimate {
  double value = 0.0;
  double standard_error = 0.0;
  std::size_t points = 0;
};

/// Randomized quasi-Monte Carlo expectation over three independent standard normals.
/// Sobol points with `replicates` Cranley-Patterson shifts drawn from `seed`; the error is
/// the standard error across replicates.
QmcEstimate qmc_normal_3d(const std::function<double(double, double, double)>& f,
                          std::size_t points_per_replicate, int replicates, std::uint64_t seed);

/// Standard normal CDF.
double normal_cdf(double x);

}  // namespace freefall
