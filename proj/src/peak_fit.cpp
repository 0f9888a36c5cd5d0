#include "freefall/peak_fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "freefall/constants.hpp"
#include "freefall/errors.hpp"
#include "freefall/least_squares.hpp"

namespace freefall {

double oscillator_line(double f, double omega, double gamma) {
  const double w = 2.0 * constants::pi * f;
  const double a = omega * omega - w * w;
  return 4.0 * gamma * omega * omega / (a * a + gamma * gamma * w * w);
}

double PeakFit::model(double f) const {
  double m = floor;
  for (const auto& p : peaks) m += p.area * oscillator_line(f, p.omega, p.gamma);
  return m;
}

namespace {

struct Layout {
  std::vector<double> omega_scale;
  double floor_scale = 1.0;
  bool fit_floor = true;
  std::size_t peaks() const { return omega_scale.size(); }
  Eigen::Index size() const { return static_cast<Eigen::Index>(3 * peaks() + (fit_floor ? 1 : 0)); }
};

// Model value and gradient with respect to the internal parameters.
double evaluate(const Layout& lay, const Eigen::VectorXd& x, double fixed_floor, double f,
                Eigen::VectorXd* grad) {
  const double w = 2.0 * constants::pi * f;
  const double w2 = w * w;
  double m = lay.fit_floor ? x(x.size() - 1) * lay.floor_scale : fixed_floor;
  if (grad && lay.fit_floor) (*grad)(x.size() - 1) = lay.floor_scale;
  for (std::size_t k = 0; k < lay.peaks(); ++k) {
    const auto i = static_cast<Eigen::Index>(3 * k);
    const double om = x(i) * lay.omega_scale[k];
    const double ga = std::exp(x(i + 1));
    const double ar = std::exp(x(i + 2));
    const double a = om * om - w2;
    const double d = a * a + ga * ga * w2;
    const double num = 4.0 * ga * om * om;
    const double line = num / d;
    m += ar * line;
    if (grad) {
      const double dl_dom = (8.0 * ga * om * d - num * 4.0 * om * a) / (d * d);
      const double dl_dga = (4.0 * om * om * d - num * 2.0 * ga * w2) / (d * d);
      (*grad)(i) = ar * dl_dom * lay.omega_scale[k];
      (*grad)(i + 1) = ar * dl_dga * ga;
      (*grad)(i + 2) = ar * line;
    }
  }
  return m;
}

}  // namespace

PeakFit fit_psd_peaks(const Spectrum& spectrum, const std::vector<PeakGuess>& guesses,
                      const PeakFitOptions& options) {
  if (guesses.empty()) throw DomainError("at least one peak guess is required");
  std::vector<double> f, s;
  for (std::size_t i = 0; i < spectrum.psd.size(); ++i) {
    const double fi = spectrum.frequencies[i];
    if (fi > 0.0 && fi >= options.f_min && fi <= options.f_max) {
      f.push_back(fi);
      s.push_back(spectrum.psd[i]);
    }
  }
  Layout lay;
  lay.fit_floor = options.fit_floor;
  const Eigen::Index np = static_cast<Eigen::Index>(3 * guesses.size() + (options.fit_floor ? 1 : 0));
  if (static_cast<Eigen::Index>(f.size()) <= np) throw DomainError("too few spectral bins in the fit band");

  Eigen::VectorXd x(np);
  for (std::size_t k = 0; k < guesses.size(); ++k) {
    const auto& g = guesses[k];
    if (!(g.omega > 0.0 && g.gamma > 0.0 && g.area > 0.0)) {
      throw DomainError("peak guesses must have positive frequency, width and area");
    }
    lay.omega_scale.push_back(g.omega);
    x(static_cast<Eigen::Index>(3 * k)) = 1.0;
    x(static_cast<Eigen::Index>(3 * k + 1)) = std::log(g.gamma);
    x(static_cast<Eigen::Index>(3 * k + 2)) = std::log(g.area);
  }
  if (options.fit_floor) {
    std::vector<double> sorted = s;
    std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 20, sorted.end());
    lay.floor_scale = std::max(sorted[sorted.size() / 20], 1e-300);
    x(np - 1) = 1.0;
  }

  const std::size_t nb = f.size();
  const auto nbi = static_cast<Eigen::Index>(nb);
  Eigen::VectorXd weight(nbi);
  for (Eigen::Index i = 0; i < nbi; ++i) weight(i) = 1.0 / std::max(s[static_cast<std::size_t>(i)], 1e-300);
  const ResidualFunction residual = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r,
                                        Eigen::MatrixXd* jac) {
    r.resize(nbi);
    if (jac) jac->resize(nbi, p.size());
    Eigen::VectorXd grad(p.size());
    for (std::size_t i = 0; i < nb; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      const double m = evaluate(lay, p, 0.0, f[i], jac ? &grad : nullptr);
      r(ii) = (s[i] - m) * weight(ii);
      if (jac) jac->row(ii) = -grad.transpose() * weight(ii);
    }
  };
  // Data-weighted least squares gets close; the Whittle likelihood sum(s/m + ln m) finishes.
  const LmResult start = levenberg_marquardt(residual, x);

  // r_i = (s_i - m_i) / m_i and J_i = dm_i / m_i: the likelihood gradient is -J^T r and the
  // Fisher information is J^T J.
  Eigen::VectorXd r(nbi);
  Eigen::MatrixXd jac(nbi, np);
  auto linearize = [&](const Eigen::VectorXd& p) {
    Eigen::VectorXd grad(np);
    double nll = 0.0;
    for (std::size_t i = 0; i < nb; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      const double m = evaluate(lay, p, 0.0, f[i], &grad);
      if (!(m > 0.0)) return std::numeric_limits<double>::infinity();
      r(ii) = (s[i] - m) / m;
      jac.row(ii) = grad.transpose() / m;
      nll += s[i] / m + std::log(m);
    }
    return nll;
  };
  auto likelihood = [&](const Eigen::VectorXd& p) {
    double nll = 0.0;
    for (std::size_t i = 0; i < nb; ++i) {
      const double m = evaluate(lay, p, 0.0, f[i], nullptr);
      if (!(m > 0.0)) return std::numeric_limits<double>::infinity();
      nll += s[i] / m + std::log(m);
    }
    return nll;
  };

  Eigen::VectorXd params = start.params;
  double nll = linearize(params);
  if (!std::isfinite(nll)) throw FitError("peak model is not positive at the start", nll, start.iterations);
  double lambda = 1e-3;
  int iterations = 0;
  bool converged = false;
  for (; iterations < options.max_iterations && !converged; ++iterations) {
    const Eigen::MatrixXd info = jac.transpose() * jac;
    const Eigen::VectorXd score = jac.transpose() * r;
    for (;;) {
      Eigen::MatrixXd damped = info;
      damped.diagonal() += lambda * info.diagonal().cwiseMax(1e-300);
      const Eigen::VectorXd step = damped.ldlt().solve(score);
      const Eigen::VectorXd trial = params + step;
      const double trial_nll = likelihood(trial);
      if (std::isfinite(trial_nll) && trial_nll <= nll) {
        converged = step.cwiseAbs().maxCoeff() < 1e-10 || nll - trial_nll < 1e-12 * std::abs(nll);
        params = trial;
        nll = linearize(params);
        lambda = std::max(lambda / 10.0, 1e-12);
        break;
      }
      lambda *= 10.0;
      if (lambda > 1e12) {
        converged = true;  // no descent direction left
        break;
      }
    }
  }
  if (!converged) throw FitError("peak fit did not converge", nll, start.iterations + iterations);

  const Eigen::MatrixXd info = jac.transpose() * jac;
  const Eigen::MatrixXd info_inverse = info.completeOrthogonalDecomposition().pseudoInverse();

  PeakFit fit;
  fit.f_min = f.front();
  fit.f_max = f.back();
  fit.iterations = start.iterations + iterations;
  const double dof = static_cast<double>(nb) - static_cast<double>(np);
  // Relative residual variance; a Welch bin averaged over K segments scatters by about 1/K.
  const double relative_var = r.squaredNorm() / dof;
  fit.reduced_chi2 = relative_var * static_cast<double>(std::max<std::size_t>(spectrum.averages, 1));
  fit.covariance = relative_var * spectrum.bin_correlation * info_inverse;
  for (std::size_t k = 0; k < guesses.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(3 * k);
    PeakEstimate e;
    e.omega = params(i) * lay.omega_scale[k];
    e.gamma = std::exp(params(i + 1));
    e.area = std::exp(params(i + 2));
    e.omega_se = std::sqrt(fit.covariance(i, i)) * lay.omega_scale[k];
    e.gamma_se = std::sqrt(fit.covariance(i + 1, i + 1)) * e.gamma;
    e.area_se = std::sqrt(fit.covariance(i + 2, i + 2)) * e.area;
    fit.peaks.push_back(e);
  }
  if (options.fit_floor) {
    fit.floor = params(np - 1) * lay.floor_scale;
    fit.floor_se = std::sqrt(fit.covariance(np - 1, np - 1)) * lay.floor_scale;
  }
  return fit;
}

}  // namespace freefall
