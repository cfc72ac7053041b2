// M-step solvers for the two uncoupled penalized log-determinant problems:
//
//   D update:  argmin_{D > 0} -log|D| + tr(D Omega1) (+ gamma ||D||_1)
//   C update:  argmin_{C > 0} -log|C| + tr(C Omega2) + lambda ||C||_1
//
// glasso() is a primal blockwise coordinate descent. For each column j of
// the precision matrix Theta (partitioned into the (P-1)-block "11" and the
// scalar corner), minimizing over the column with Theta_11 fixed gives
//
//   schur complement  t* = 1 / (S_jj + lambda_d)
//   off-diagonal part u = argmin  (S_jj + lambda_d)/2 u^T Theta11^{-1} u
//                                  + s12^T u + lambda ||u||_1
//
// where lambda_d is the diagonal penalty (lambda or 0). Theta11^{-1} comes
// from the maintained inverse W = Theta^{-1} via the block identity
// Theta11^{-1} = W11 - w12 w12^T / w22, and W is updated in closed form
// after each column. Each column update exactly minimizes the objective
// over that row/column and the inner lasso starts from the current column,
// so the objective is non-increasing after every sweep and all iterates
// stay positive definite. Convergence is declared on the KKT residual of
// the full problem.

#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "g3m/types.hpp"

namespace g3m {

struct GlassoSettings {
  double lambda = 0.0;
  bool penalize_diagonal = true;
  int max_sweeps = 500;
  double kkt_tol = 1e-4;
  double zero_tol = 1e-8;
};

struct GlassoDiagnostics {
  std::vector<double> objective_trace;  // value at init, then after each sweep
  int sweeps = 0;
  double kkt_residual = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

inline double soft_threshold(double x, double lam) {
  if (x > lam) return x - lam;
  if (x < -lam) return x + lam;
  return 0.0;
}

inline double l1_norm(const Eigen::MatrixXd& m, bool include_diagonal) {
  double s = 0.0;
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (i == j && !include_diagonal) continue;
      s += std::abs(m(i, j));
    }
  }
  return s;
}

inline double glasso_objective(const Eigen::MatrixXd& theta,
                               const Eigen::MatrixXd& s, double log_det,
                               double lam, double lam_d) {
  double pen = 0.0;
  for (Index i = 0; i < theta.rows(); ++i) {
    for (Index j = 0; j < theta.cols(); ++j) {
      pen += (i == j ? lam_d : lam) * std::abs(theta(i, j));
    }
  }
  return -log_det + theta.cwiseProduct(s).sum() + pen;
}

// Stationarity residual given the exact inverse W = Theta^{-1}. The internal
// variant always checks the diagonal (with the unpenalized rule when the
// diagonal carries no penalty) so convergence is never declared on a stale
// diagonal.
inline double kkt_residual_impl(const Eigen::MatrixXd& theta,
                                const Eigen::MatrixXd& w,
                                const Eigen::MatrixXd& s, double lam,
                                bool penalize_diagonal, bool internal) {
  double r = 0.0;
  for (Index i = 0; i < theta.rows(); ++i) {
    for (Index j = i; j < theta.cols(); ++j) {
      const double g = s(i, j) - w(i, j);
      if (i == j) {
        if (penalize_diagonal) {
          r = std::max(r, theta(i, i) != 0.0
                              ? std::abs(g + lam * (theta(i, i) > 0 ? 1 : -1))
                              : std::max(0.0, std::abs(g) - lam));
        } else if (internal) {
          r = std::max(r, std::abs(g));
        }
      } else if (theta(i, j) != 0.0) {
        r = std::max(r, std::abs(g + lam * (theta(i, j) > 0 ? 1 : -1)));
      } else {
        r = std::max(r, std::max(0.0, std::abs(g) - lam));
      }
    }
  }
  return r;
}

}  // namespace detail

// Max-norm violation of the stationarity conditions of
//   -log|C| + tr(C S) + lambda ||C||_1
// at C. Zero entries contribute max(0, |(S - C^{-1})_ij| - lambda); the
// diagonal participates iff it is penalized.
inline double glasso_kkt_residual(const SpdMatrix& c, const SpdMatrix& s,
                                  double lambda,
                                  bool penalize_diagonal = true) {
  if (c.dim() != s.dim()) {
    throw DimensionError("glasso_kkt_residual: C and S sizes differ");
  }
  const Eigen::MatrixXd w = spd_inverse(c.mat(), "glasso_kkt_residual: C");
  return detail::kkt_residual_impl(c.mat(), w, s.mat(), lambda,
                                   penalize_diagonal, /*internal=*/false);
}

inline SpdMatrix glasso(const SpdMatrix& s, const GlassoSettings& cfg,
                        const SpdMatrix* warm_start = nullptr,
                        GlassoDiagnostics* diag = nullptr) {
  const Index p = s.dim();
  const Eigen::MatrixXd& sm = s.mat();
  if (cfg.lambda < 0.0) throw ValidationError("glasso: lambda must be >= 0");
  if (cfg.kkt_tol <= 0.0 || cfg.zero_tol < 0.0 || cfg.max_sweeps < 1) {
    throw ValidationError("glasso: invalid tolerances or sweep limit");
  }
  for (Index i = 0; i < p; ++i) {
    if (!(sm(i, i) > 0.0)) {
      throw ValidationError("glasso: S must have a positive diagonal");
    }
  }
  const double lam = cfg.lambda;
  const double lam_d = cfg.penalize_diagonal ? lam : 0.0;

  if (p == 1) {
    Eigen::MatrixXd theta(1, 1);
    theta(0, 0) = 1.0 / (sm(0, 0) + lam_d);
    if (diag) {
      diag->objective_trace = {detail::glasso_objective(
          theta, sm, std::log(theta(0, 0)), lam, lam_d)};
      diag->sweeps = 0;
      diag->kkt_residual = 0.0;
    }
    return SpdMatrix(theta);
  }

  // Work on the unit-mean-diagonal problem: with S' = S/s0, lam' = lam/s0
  // the minimizer satisfies C = C'/s0 and objectives differ by P log(s0).
  // This keeps the arithmetic well conditioned whatever the moment scale.
  const double s0 = sm.diagonal().mean();
  const Eigen::MatrixXd sn = sm / s0;
  const double lam_n = lam / s0;
  const double lam_dn = lam_d / s0;
  const double kkt_tol_n = cfg.kkt_tol / s0;
  const double obj_shift = static_cast<double>(p) * std::log(s0);

  Eigen::MatrixXd cold = Eigen::MatrixXd::Zero(p, p);
  for (Index i = 0; i < p; ++i) cold(i, i) = 1.0 / (sn(i, i) + lam_dn);

  Eigen::MatrixXd theta;
  if (warm_start) {
    if (warm_start->dim() != p) {
      throw DimensionError("glasso: warm start size mismatch");
    }
    theta = s0 * warm_start->mat();
    // a grossly mis-scaled warm start costs more sweeps than a cold start
    const auto llt_warm = cholesky(theta, "glasso: warm start");
    const double f_warm = detail::glasso_objective(
        theta, sn, 2.0 * llt_warm.matrixLLT().diagonal().array().log().sum(),
        lam_n, lam_dn);
    Eigen::LLT<Eigen::MatrixXd> llt_cold(cold);
    const double f_cold = detail::glasso_objective(
        cold, sn, 2.0 * llt_cold.matrixLLT().diagonal().array().log().sum(),
        lam_n, lam_dn);
    if (f_cold < f_warm) theta = cold;
  } else {
    theta = cold;
  }

  auto llt = cholesky(theta, "glasso: initial precision");
  Eigen::MatrixXd w = llt.solve(Eigen::MatrixXd::Identity(p, p));
  double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();

  if (diag) {
    diag->objective_trace.clear();
    diag->objective_trace.push_back(
        detail::glasso_objective(theta, sn, log_det, lam_n, lam_dn) +
        obj_shift);
  }

  const double inner_tol = 0.2 * kkt_tol_n;
  const int max_inner_passes = 100 + 20 * static_cast<int>(p);
  std::vector<Index> idx(p - 1);

  bool converged = false;
  double kkt = std::numeric_limits<double>::infinity();
  int sweep = 0;
  for (sweep = 1; sweep <= cfg.max_sweeps; ++sweep) {
    for (Index j = 0; j < p; ++j) {
      for (Index k = 0, pos = 0; k < p; ++k) {
        if (k != j) idx[pos++] = k;
      }
      const Eigen::VectorXd w12 = w(idx, j);
      const double w22 = w(j, j);
      // Theta11^{-1} from the maintained inverse
      Eigen::MatrixXd p11inv = w(idx, idx);
      p11inv.noalias() -= (w12 * w12.transpose()) / w22;
      const Eigen::VectorXd s12 = sn(idx, j);
      const double scale = sn(j, j) + lam_dn;
      const double t = 1.0 / scale;

      // inner lasso, warm-started at the current column
      Eigen::VectorXd u = theta(idx, j);
      Eigen::VectorXd gs = p11inv * u;  // Theta11^{-1} u
      for (int pass = 0; pass < max_inner_passes; ++pass) {
        for (Index k = 0; k < p - 1; ++k) {
          const double akk = scale * p11inv(k, k);
          const double gk = scale * gs(k) + s12(k);
          const double unew =
              detail::soft_threshold(akk * u(k) - gk, lam_n) / akk;
          const double delta = unew - u(k);
          if (delta != 0.0) {
            gs.noalias() += p11inv.col(k) * delta;
            u(k) = unew;
          }
        }
        double resid = 0.0;
        for (Index k = 0; k < p - 1; ++k) {
          const double gk = scale * gs(k) + s12(k);
          resid = std::max(
              resid, u(k) != 0.0
                         ? std::abs(gk + lam_n * (u(k) > 0 ? 1 : -1))
                         : std::max(0.0, std::abs(gk) - lam_n));
        }
        if (resid <= inner_tol) break;
      }

      // write the column back and update W in closed form
      const Eigen::VectorXd q = gs;  // Theta11^{-1} u, current
      const double theta_jj = t + u.dot(q);
      theta(idx, j) = u;
      theta(j, idx) = u.transpose();
      theta(j, j) = theta_jj;
      w(idx, idx) = p11inv + (q * q.transpose()) / t;
      w(idx, j) = -q / t;
      w(j, idx) = (-q / t).transpose();
      w(j, j) = 1.0 / t;
    }

    // refresh the inverse exactly once per sweep; rank updates drift
    llt.compute(theta);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("glasso: iterate lost positive definiteness");
    }
    w = llt.solve(Eigen::MatrixXd::Identity(p, p));
    log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    if (diag) {
      diag->objective_trace.push_back(
          detail::glasso_objective(theta, sn, log_det, lam_n, lam_dn) +
          obj_shift);
    }

    kkt = detail::kkt_residual_impl(theta, w, sn, lam_n,
                                    cfg.penalize_diagonal,
                                    /*internal=*/true);
    if (kkt <= kkt_tol_n) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    throw NumericalError("glasso: no convergence after " +
                         std::to_string(cfg.max_sweeps) +
                         " sweeps (KKT residual " + std::to_string(kkt * s0) +
                         ")");
  }

  // back to the original scale, then report exact zeros below the tolerance
  // (off-diagonal only)
  theta /= s0;
  for (Index i = 0; i < p; ++i) {
    for (Index j = i + 1; j < p; ++j) {
      if (std::abs(theta(i, j)) < cfg.zero_tol) {
        theta(i, j) = 0.0;
        theta(j, i) = 0.0;
      }
    }
  }
  if (diag) {
    diag->sweeps = sweep;
    const Eigen::MatrixXd w_final = spd_inverse(theta, "glasso: solution");
    diag->kkt_residual = detail::kkt_residual_impl(
        theta, w_final, sm, lam, cfg.penalize_diagonal, /*internal=*/false);
  }
  return SpdMatrix(theta);
}

// Unpenalized D update: the minimizer of -log|D| + tr(D Omega1) is Omega1^{-1}.
inline SpdMatrix update_dense_d(const SpdMatrix& omega1) {
  Eigen::LLT<Eigen::MatrixXd> llt(omega1.mat());
  if (llt.info() != Eigen::Success) {
    throw NumericalError(
        "update_dense_d: omega1 is singular; use the iid noise model or a "
        "ridge-regularized moment");
  }
  return SpdMatrix::symmetrized(
      llt.solve(Eigen::MatrixXd::Identity(omega1.dim(), omega1.dim())));
}

// iid D = tau * I: analytic minimizer of -P log(tau) + tau tr(Omega1).
inline double update_iid_tau(const SpdMatrix& omega1) {
  const double tr = omega1.mat().trace();
  if (!(tr > 0.0)) {
    throw NumericalError("update_iid_tau: omega1 has non-positive trace");
  }
  return static_cast<double>(omega1.dim()) / tr;
}

// Sparse D: same solver, penalty weight gamma.
inline SpdMatrix update_sparse_d(const SpdMatrix& omega1, double gamma,
                                 GlassoSettings settings,
                                 const SpdMatrix* warm_start = nullptr,
                                 GlassoDiagnostics* diag = nullptr) {
  if (gamma < 0.0) throw ValidationError("update_sparse_d: gamma must be >= 0");
  settings.lambda = gamma;
  return glasso(omega1, settings, warm_start, diag);
}

}  // namespace g3m
