#pragma once

// Closed-form Gaussian-state evolution during free fall: q' = p/m, p' = -m g_j - gamma p + xi(t),
// with <xi(t) xi(t')> = 2 m k_B T gamma delta(t - t').

#include <cmath>

#include <Eigen/Core>

#include "freefall/constants.hpp"
#include "freefall/errors.hpp"
#include "freefall/physics.hpp"

namespace freefall {

template <typename Scalar>
using TransitionMatrix = Eigen::Matrix<Scalar, 2, 2>;

namespace detail {

// (1 - e^{-x}) / x
template <typename Scalar>
Scalar relax(Scalar x) {
  using std::expm1;
  if (x < Scalar(1e-8)) return Scalar(1) - x / Scalar(2);
  return -expm1(-x) / x;
}

// (1 - x - e^{-x}) / x^2, tends to -1/2.
template <typename Scalar>
Scalar drift_kernel(Scalar x) {
  using std::expm1;
  if (x < Scalar(0.1)) {
    Scalar term = Scalar(1) / Scalar(2);
    Scalar sum = term;
    for (int k = 3; k < 16; ++k) {
      term *= -x / Scalar(k);
      sum += term;
    }
    return -sum;
  }
  return -(x + expm1(-x)) / (x * x);
}

// (1 - 2 relax(x) + relax(2x)) / x^2, tends to 1/3.
template <typename Scalar>
Scalar noise_qq_kernel(Scalar x) {
  if (x < Scalar(1)) {
    Scalar sum = 0;
    Scalar xpow = 1;     // x^{k-2}
    Scalar fact = 6;     // (k+1)!
    Scalar two_k = 4;    // 2^k
    Scalar sign = 1;
    for (int k = 2; k < 42; ++k) {
      sum += sign * (two_k - Scalar(2)) * xpow / fact;
      xpow *= x;
      fact *= Scalar(k + 2);
      two_k *= Scalar(2);
      sign = -sign;
    }
    return sum;
  }
  return (Scalar(1) - Scalar(2) * relax(x) + relax(Scalar(2) * x)) / (x * x);
}

// (relax(x) - relax(2x)) / x, tends to 1/2.
template <typename Scalar>
Scalar noise_qp_kernel(Scalar x) {
  if (x < Scalar(1)) {
    Scalar sum = 0;
    Scalar xpow = 1;     // x^{k-1}
    Scalar fact = 2;     // (k+1)!
    Scalar two_k = 2;    // 2^k
    Scalar sign = 1;
    for (int k = 1; k < 42; ++k) {
      sum += sign * (two_k - Scalar(1)) * xpow / fact;
      xpow *= x;
      fact *= Scalar(k + 2);
      two_k *= Scalar(2);
      sign = -sign;
    }
    return sum;
  }
  return (relax(x) - relax(Scalar(2) * x)) / x;
}

template <typename Scalar>
void require_time(Scalar t) {
  if (!(t >= Scalar(0))) throw DomainError("evolution time must be non-negative");
}

}  // namespace detail

/// Phi(t) = exp(t A) with A = [[0, 1/m], [0, -gamma]].
template <typename Scalar>
TransitionMatrix<Scalar> transition_matrix(Scalar t, Scalar mass, Scalar gamma) {
  detail::require_time(t);
  if (!(mass > Scalar(0))) throw DomainError("mass must be positive");
  if (!(gamma >= Scalar(0))) throw DomainError("damping must be non-negative");
  using std::exp;
  const Scalar x = gamma * t;
  TransitionMatrix<Scalar> phi;
  phi << Scalar(1), t / mass * detail::relax(x), Scalar(0),
      x < Scalar(1e-8) ? Scalar(1) - x : exp(-x);
  return phi;
}

/// Mean (q, p) after time t. Gravity acts along y only; x and z means are carried by Phi.
template <typename Scalar>
Eigen::Matrix<Scalar, 2, 1> propagate_mean(const GaussianState1D<Scalar>& state, Scalar t,
                                           Axis axis, Scalar mass, Scalar gamma,
                                           Scalar g = Scalar(constants::g_default)) {
  Eigen::Matrix<Scalar, 2, 1> mean = transition_matrix(t, mass, gamma) * state.mean;
  if (axis == Axis::y) {
    const Scalar x = gamma * t;
    mean(0) += g * t * t * detail::drift_kernel(x);
    mean(1) -= g * mass * t * detail::relax(x);
  }
  return mean;
}

/// Sigma(t) = Phi Sigma0 Phi^T + int_0^t Phi(s) W Phi(s)^T ds, W = diag(0, 2 m k_B T gamma),
/// integral in closed form to all orders in gamma t.
template <typename Scalar>
TransitionMatrix<Scalar> propagate_covariance(const TransitionMatrix<Scalar>& cov0, Scalar t,
                                              Scalar mass, Scalar gamma, Scalar gas_temperature) {
  GaussianState1D<Scalar> probe;
  probe.cov = cov0;
  if (!probe.is_psd()) throw DomainError("initial covariance is not positive semidefinite");
  const TransitionMatrix<Scalar> phi = transition_matrix(t, mass, gamma);
  TransitionMatrix<Scalar> cov = phi * cov0 * phi.transpose();
  const Scalar diffusion = Scalar(2) * mass * Scalar(constants::k_B) * gas_temperature * gamma;
  if (diffusion > Scalar(0)) {
    const Scalar x = gamma * t;
    const Scalar nqq = diffusion * t * t * t / (mass * mass) * detail::noise_qq_kernel(x);
    const Scalar nqp = diffusion * t * t / mass * detail::noise_qp_kernel(x);
    const Scalar npp = diffusion * t * detail::relax(Scalar(2) * x);
    cov(0, 0) += nqq;
    cov(0, 1) += nqp;
    cov(1, 0) += nqp;
    cov(1, 1) += npp;
  }
  return cov;
}

template <typename Scalar>
GaussianState1D<Scalar> propagate_covariance(const GaussianState1D<Scalar>& state, Scalar t,
                                             Scalar mass, Scalar gamma, Scalar gas_temperature) {
  GaussianState1D<Scalar> out = state;
  out.cov = propagate_covariance(state.cov, t, mass, gamma, gas_temperature);
  return out;
}

/// Mean and covariance together.
template <typename Scalar>
GaussianState1D<Scalar> propagate(const GaussianState1D<Scalar>& state, Scalar t, Axis axis,
                                  Scalar mass, const EnvironmentParams& env,
                                  Scalar g = Scalar(constants::g_default)) {
  GaussianState1D<Scalar> out;
  out.mean = propagate_mean(state, t, axis, mass, Scalar(env.damping_gamma), g);
  out.cov = propagate_covariance(state.cov, t, mass, Scalar(env.damping_gamma),
                                 Scalar(env.gas_temperature));
  return out;
}

inline AxisStates propagate(const AxisStates& states, double t, double mass,
                            const EnvironmentParams& env, double g = constants::g_default) {
  AxisStates out;
  for (Axis a : all_axes) out[index(a)] = propagate(states[index(a)], t, a, mass, env, g);
  return out;
}

/// Gas-induced rates. Gamma_dec = gamma (n_th + 1/2) = gamma k_B T / (hbar Omega);
/// Gamma_reheat = gamma T_env / T0 = Gamma_dec / (n0 + 1/2).
struct DecoherenceRates {
  double gamma = 0.0;
  double Gamma_dec = 0.0;
  double Gamma_reheat = 0.0;
};

inline DecoherenceRates decoherence_rates(double gamma, double env_temperature, double omega,
                                          const InitialCondition& init) {
  DecoherenceRates r;
  r.gamma = gamma;
  r.Gamma_dec = gamma * constants::k_B * env_temperature / (constants::hbar * omega);
  r.Gamma_reheat = r.Gamma_dec / half_occupation(init, omega);
  return r;
}

/// First-order-in-reheating covariance of an initially uncorrelated thermal state
/// (V_p0 = m^2 Omega^2 V_q0). Kept as a named approximation for comparison.
inline GaussianState first_order_covariance(double var_q0, double var_p0, double omega,
                                            double gamma_reheat, double t) {
  const double wt = omega * t;
  const double rt = gamma_reheat * t;
  return GaussianState::from_moments(0.0, 0.0, var_q0 * (1.0 + wt * wt * (1.0 + 2.0 / 3.0 * rt)),
                                     var_p0 * (1.0 + 2.0 * rt),
                                     std::sqrt(var_q0 * var_p0) * (1.0 + rt) * wt);
}

/// xi_q = sqrt(1 + Omega^2 tau^2 + (2/3) Gamma Omega^2 tau^3), valid for gamma tau << 1.
inline double expansion_q(double tau, double omega, double gamma_reheat) {
  const double w2t2 = omega * omega * tau * tau;
  return std::sqrt(1.0 + w2t2 + 2.0 / 3.0 * gamma_reheat * w2t2 * tau);
}

/// Eigenvalues of a symmetric 2x2 matrix, largest first.
template <typename Scalar>
std::pair<Scalar, Scalar> symmetric_eigenvalues(const Eigen::Matrix<Scalar, 2, 2>& m) {
  using std::hypot;
  const Scalar half_trace = (m(0, 0) + m(1, 1)) / Scalar(2);
  const Scalar radius = hypot((m(0, 0) - m(1, 1)) / Scalar(2), m(0, 1));
  const Scalar hi = half_trace + radius;
  if (radius == Scalar(0)) return {hi, hi};
  const Scalar det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
  // det / hi avoids cancellation in half_trace - radius for elongated ellipses.
  const Scalar lo = hi > Scalar(0) ? det / hi : half_trace - radius;
  return {hi, lo};
}

struct ExpansionFactors {
  double xi_q = 1.0;
  double xi_p = 1.0;
};

/// Principal semi-axes of state_t in units of the initial rms (q0, p0).
inline ExpansionFactors expansion_factors(const GaussianState& state0, const GaussianState& state_t) {
  const double q0 = std::sqrt(state0.var_q());
  const double p0 = std::sqrt(state0.var_p());
  if (!(q0 > 0.0) || !(p0 > 0.0)) throw DomainError("initial variances must be positive");
  if (std::abs(state0.cov_qp()) > 1e-9 * q0 * p0) {
    throw DomainError("initial state must be uncorrelated");
  }
  Eigen::Matrix2d scaled = state_t.cov;
  scaled(0, 0) /= q0 * q0;
  scaled(1, 1) /= p0 * p0;
  scaled(0, 1) /= q0 * p0;
  scaled(1, 0) = scaled(0, 1);
  const auto [hi, lo] = symmetric_eigenvalues(scaled);
  return {std::sqrt(hi), std::sqrt(std::max(lo, 0.0))};
}

/// P = [4 V0 (V0 + 2 Gamma t) + (4/3)(2 V0 + Gamma t) Gamma Omega^2 t^3]^{-1/2}, V0 = n0 + 1/2.
inline double purity(double v0, double gamma_dec, double omega, double t) {
  if (!(v0 >= 0.5)) throw DomainError("V0 = n0 + 1/2 must be at least 1/2");
  detail::require_time(t);
  const double gt = gamma_dec * t;
  const double inv2 = 4.0 * v0 * (v0 + 2.0 * gt) +
                      4.0 / 3.0 * (2.0 * v0 + gt) * gamma_dec * omega * omega * t * t * t;
  return 1.0 / std::sqrt(inv2);
}

/// P = (4 |Sigma_zpf|)^{-1/2} = hbar / (2 sqrt|Sigma|); independent of the mode frequency.
inline double purity_from_covariance(const Eigen::Matrix2d& cov) {
  const double det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(1, 0);
  if (!(det > 0.0)) throw DomainError("covariance determinant must be positive");
  return constants::hbar / (2.0 * std::sqrt(det));
}

/// l = sqrt(8) P sigma_q.
inline double coherence_length(double purity_value, double sigma_q) {
  if (!(purity_value > 0.0 && purity_value <= 1.0)) throw DomainError("purity must lie in (0, 1]");
  if (!(sigma_q > 0.0)) throw DomainError("sigma_q must be positive");
  return std::sqrt(8.0) * purity_value * sigma_q;
}

}  // namespace freefall
