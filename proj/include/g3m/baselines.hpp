// The two comparison methods:
//
//   vanilla   : graphical lasso on the sample covariance Y^T Y / N.
//   kronglasso: approximate EM with known R and iid noise D = tau I. Unlike
//               the exact algorithm it plugs in the posterior mean Zhat of Z
//               and uses Omega2 = Zhat^T R Zhat / N without the posterior
//               trace correction, then re-estimates tau by maximizing the
//               exact marginal likelihood in one dimension.

#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "g3m/em.hpp"
#include "g3m/estep.hpp"
#include "g3m/mstep.hpp"
#include "g3m/types.hpp"

namespace g3m {

enum class BaselineMethod { vanilla, kronglasso };

struct BaselineResult {
  BaselineMethod method = BaselineMethod::vanilla;
  SpdMatrix C_hat;
  std::optional<double> tau;  // kronglasso only
  int iters = 0;
  std::vector<std::string> warnings;
};

inline BaselineResult vanilla_glasso(const DataMatrix& y, double lambda,
                                     GlassoSettings settings,
                                     const SpdMatrix* warm_start = nullptr) {
  check_finite(y, "Y");
  settings.lambda = lambda;
  const Eigen::MatrixXd s = y.transpose() * y / static_cast<double>(y.rows());
  BaselineResult out;
  out.method = BaselineMethod::vanilla;
  GlassoDiagnostics diag;
  out.C_hat = glasso(SpdMatrix::symmetrized(s), settings, warm_start, &diag);
  out.iters = diag.sweeps;
  return out;
}

namespace detail {

// argmax over tau in [1e-14, 1e14] of loglik(Y; C, tau I, R), golden-section
// on log(tau) after geometric bracket expansion. With C = V Lc V^T fixed,
// the rotated rows are independent Gaussians with diagonal covariances
// 1/(lamR_i * Lc_a) + 1/tau, so each trial tau costs O(NP). When the
// likelihood is monotone up to a search bound (C alone already explains at
// least the observed variance, so the noise-free limit is optimal) the bound
// is returned and reported through `at_bound`.
inline double maximize_tau(const RotatedData& data, const SpdMatrix& c,
                           const Eigen::VectorXd& lam_r, double tau_init,
                           bool* at_bound = nullptr) {
  const Index n = data.y.rows();
  const Index p = data.y.cols();
  const SpectralDecomp c_eig = checked_decomp(c, "kronglasso: C");
  const Eigen::MatrixXd z2 = (data.rot * c_eig.vectors).array().square();

  const double log2pi = std::log(2.0 * M_PI);
  auto loglik_at = [&](double log_tau) {
    const double inv_tau = std::exp(-log_tau);
    double ll = -0.5 * static_cast<double>(n * p) * log2pi;
    for (Index i = 0; i < n; ++i) {
      for (Index a = 0; a < p; ++a) {
        const double var = 1.0 / (lam_r(i) * c_eig.values(a)) + inv_tau;
        ll -= 0.5 * (std::log(var) + z2(i, a) / var);
      }
    }
    return ll;
  };

  // bracket a maximum around log(tau_init)
  if (at_bound) *at_bound = false;
  const double step = std::log(4.0);
  const double bound = std::log(1e14);
  double mid = std::log(std::min(std::exp(bound - step),
                                 std::max(std::exp(step - bound), tau_init)));
  double lo = mid - step, hi = mid + step;
  double f_lo = loglik_at(lo), f_mid = loglik_at(mid), f_hi = loglik_at(hi);
  if (!std::isfinite(f_lo) || !std::isfinite(f_mid) || !std::isfinite(f_hi)) {
    throw NumericalError(
        "kronglasso: tau search hit a non-finite likelihood; last bracket [" +
        std::to_string(std::exp(lo)) + ", " + std::to_string(std::exp(hi)) +
        "]");
  }
  while (f_hi > f_mid || f_lo > f_mid) {
    if (f_hi > f_mid) {
      lo = mid; f_lo = f_mid;
      mid = hi; f_mid = f_hi;
      hi = mid + step; f_hi = loglik_at(hi);
    } else {
      hi = mid; f_hi = f_mid;
      mid = lo; f_mid = f_lo;
      lo = mid - step; f_lo = loglik_at(lo);
    }
    if (!std::isfinite(f_mid)) {
      throw NumericalError(
          "kronglasso: tau search hit a non-finite likelihood; last bracket "
          "[" + std::to_string(std::exp(lo)) + ", " +
          std::to_string(std::exp(hi)) + "]");
    }
    if (lo < -bound || hi > bound) {
      // monotone up to the search range: the boundary is the maximizer
      if (at_bound) *at_bound = true;
      return std::exp(std::clamp(mid, -bound, bound));
    }
  }

  // golden-section maximization to 1e-8 on the log scale
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double x1 = b - invphi * (b - a);
  double x2 = a + invphi * (b - a);
  double f1 = loglik_at(x1), f2 = loglik_at(x2);
  while (b - a > 1e-8) {
    if (f1 < f2) {
      a = x1;
      x1 = x2; f1 = f2;
      x2 = a + invphi * (b - a); f2 = loglik_at(x2);
    } else {
      b = x2;
      x2 = x1; f2 = f1;
      x1 = b - invphi * (b - a); f1 = loglik_at(x1);
    }
  }
  return std::exp((a + b) / 2.0);
}

}  // namespace detail

struct KronGlassoWarm {
  SpdMatrix C;
  double tau = 1.0;
};

inline BaselineResult kron_glasso_known_r(const PreparedData& prep,
                                          double lambda,
                                          GlassoSettings settings,
                                          int max_iters = 200,
                                          double rel_tol = 1e-6,
                                          const KronGlassoWarm* warm = nullptr) {
  if (lambda < 0.0) throw ValidationError("kron_glasso_known_r: lambda must be >= 0");
  if (max_iters < 1 || rel_tol <= 0.0) {
    throw ValidationError("kron_glasso_known_r: invalid loop controls");
  }
  const Index n = prep.data.y.rows();
  const Index p = prep.data.y.cols();
  settings.lambda = lambda;

  BaselineResult out;
  out.method = BaselineMethod::kronglasso;
  if (prep.r_spread < detail::kIdentifiabilitySpread) {
    out.warnings.push_back(
        "R has no eigenvalue spread (condition number < 1 + 1e-6): C and tau "
        "are not separately identifiable at lambda = 0");
  }

  const Eigen::MatrixXd sample_cov =
      prep.data.y.transpose() * prep.data.y / static_cast<double>(n);
  SpdMatrix c;
  double tau;
  if (warm) {
    c = warm->C;
    tau = warm->tau;
  } else {
    tau = static_cast<double>(p) / sample_cov.trace();
    Eigen::MatrixXd c0 = Eigen::MatrixXd::Zero(p, p);
    for (Index i = 0; i < p; ++i) {
      const double v = sample_cov(i, i);
      if (!(v > 0.0)) {
        throw NumericalError("kron_glasso_known_r: trait " + std::to_string(i) +
                             " has zero variance");
      }
      c0(i, i) = 2.0 / v;
    }
    c = SpdMatrix(c0);
  }

  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(p, p);
  bool converged = false;
  bool warned_tau = false;
  for (int t = 1; t <= max_iters; ++t) {
    out.iters = t;
    ModelParams params(c, SpdMatrix(eye * tau), prep.r_eig);
    const EStepResult est =
        posterior_moments(prep.data, params, {/*with_posterior_mean=*/false});
    // plug-in moment: Zhat^T R Zhat / N, the exact Omega2 minus its
    // posterior trace correction
    const Eigen::MatrixXd omega2_plugin =
        est.omegas.omega2.mat() -
        est.cond.sigma_r_trace_p / static_cast<double>(n);

    SpdMatrix c_new;
    try {
      c_new = glasso(SpdMatrix::symmetrized(omega2_plugin), settings, &c);
    } catch (const NumericalError& e) {
      throw NumericalError("kronglasso iteration " + std::to_string(t) + ": " +
                           e.what());
    }
    bool tau_at_bound = false;
    const double tau_new = detail::maximize_tau(
        prep.data, c_new, prep.r_eig->values, tau, &tau_at_bound);
    if (tau_at_bound && !warned_tau) {
      warned_tau = true;
      out.warnings.push_back(
          "tau reached the search bound (noise-free limit); the iid noise "
          "component is degenerate at this lambda");
    }

    const double c_change = (c_new.mat() - c.mat()).norm() /
                            std::max(1.0, c.mat().norm());
    const double tau_change = std::abs(tau_new - tau) / std::max(1.0, tau);
    c = std::move(c_new);
    tau = tau_new;
    if (c_change < rel_tol && tau_change < rel_tol) {
      converged = true;
      break;
    }
  }
  (void)converged;
  out.C_hat = c;
  out.tau = tau;
  return out;
}

inline BaselineResult kron_glasso_known_r(const DataMatrix& y,
                                          const SpdMatrix& r, double lambda,
                                          const GlassoSettings& settings,
                                          int max_iters = 200,
                                          double rel_tol = 1e-6,
                                          bool center_columns = true) {
  return kron_glasso_known_r(prepare_fit(y, r, center_columns), lambda,
                             settings, max_iters, rel_tol);
}

}  // namespace g3m
