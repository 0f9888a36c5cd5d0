#include "freefall/expansion.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <tuple>

#include <boost/math/distributions/chi_squared.hpp>

#include "freefall/dynamics.hpp"
#include "freefall/errors.hpp"

namespace freefall {

namespace {

Eigen::Matrix2d sample_cov(const std::vector<double>& q, const std::vector<double>& p,
                           const std::vector<std::size_t>& idx) {
  const double n = static_cast<double>(idx.size());
  double mq = 0.0, mp = 0.0;
  for (std::size_t i : idx) {
    mq += q[i];
    mp += p[i];
  }
  mq /= n;
  mp /= n;
  Eigen::Matrix2d c = Eigen::Matrix2d::Zero();
  for (std::size_t i : idx) {
    const double dq = q[i] - mq;
    const double dp = p[i] - mp;
    c(0, 0) += dq * dq;
    c(1, 1) += dp * dp;
    c(0, 1) += dq * dp;
  }
  c(1, 0) = c(0, 1);
  return c / (n - 1.0);
}

double quantile(std::vector<double> v, double prob) {
  std::sort(v.begin(), v.end());
  const double pos = prob * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] * (1.0 - frac) + v[hi] * frac;
}

}  // namespace

ExpansionEstimate ensemble_expansion(const std::vector<double>& q, const std::vector<double>& p,
                                     double q0, double p0, const ExpansionOptions& options) {
  if (q.size() != p.size()) throw DomainError("position and momentum samples differ in length");
  if (q.size() < 10) throw DomainError("ensemble expansion needs at least 10 samples");
  if (!(q0 > 0.0 && p0 > 0.0)) throw DomainError("normalization constants must be positive");
  const std::size_t n = q.size();
  std::vector<double> qn(n), pn(n);
  for (std::size_t i = 0; i < n; ++i) {
    qn[i] = q[i] / q0;
    pn[i] = p[i] / p0;
  }
  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;

  ExpansionEstimate est;
  est.samples = n;
  est.covariance = sample_cov(qn, pn, all);
  auto axes = [](const Eigen::Matrix2d& c) {
    const auto [hi, lo] = symmetric_eigenvalues(c);
    return std::make_pair(std::sqrt(std::max(hi, 0.0)), std::sqrt(std::max(lo, 0.0)));
  };
  std::tie(est.xi_q, est.xi_p) = axes(est.covariance);

  const double tail = 0.5 * (1.0 - options.coverage);
  if (options.method == IntervalMethod::chi_square) {
    const double dof = static_cast<double>(n - 1);
    const boost::math::chi_squared chi(dof);
    const double upper = boost::math::quantile(chi, 1.0 - tail);
    const double lower = boost::math::quantile(chi, tail);
    auto interval = [&](double xi) {
      return Interval{xi * std::sqrt(dof / upper), xi * std::sqrt(dof / lower)};
    };
    est.xi_q_ci = interval(est.xi_q);
    est.xi_p_ci = interval(est.xi_p);
    est.ci_method = "chi-square";
    return est;
  }

  std::mt19937_64 rng(options.seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<double> bq, bp;
  std::vector<std::size_t> idx(n);
  for (int b = 0; b < options.bootstrap_resamples; ++b) {
    for (auto& i : idx) i = pick(rng);
    const auto [xq, xp] = axes(sample_cov(qn, pn, idx));
    bq.push_back(xq);
    bp.push_back(xp);
  }
  est.xi_q_ci = {quantile(bq, tail), quantile(bq, 1.0 - tail)};
  est.xi_p_ci = {quantile(bp, tail), quantile(bp, 1.0 - tail)};
  est.ci_method = "bootstrap-percentile";
  return est;
}

}  // namespace freefall
