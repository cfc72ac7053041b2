// Exact E-step for the two-component model
//     Y = Z + E,   vec(Z) ~ N(0, C^{-1} (x) R^{-1}),   vec(E) ~ N(0, D^{-1} (x) I),
// plus the observed-data log-likelihood. The conditional of vec(Z) is
// Gaussian with
//     Sigma = [D (x) I + C (x) R]^{-1},   mu = Sigma [D (x) I] vec(Y),
// and the moment matrices are
//     Omega1 = ((Y-M)^T (Y-M) + tr_P(Sigma)) / N
//     Omega2 = (M^T R M + tr_P((I (x) R) Sigma)) / N,   M = unvec(mu).
//
// The production path evaluates all four pieces through two P x P spectral
// decompositions and elementwise resolvents, never touching an NP x NP
// object. R's decomposition and the rotation U^T Y are fixed across EM
// iterations and are computed once (RotatedData); per-call cost is then
// O(N P^2 + P^3). Materializing M itself costs O(N^2 P) and is optional.
//
// posterior_moments_naive is the brute-force oracle: it builds Sigma and mu
// densely and is size-capped for use in tests.

#pragma once

#include <memory>
#include <optional>
#include <utility>

#include "g3m/kron.hpp"
#include "g3m/types.hpp"

namespace g3m {

struct ModelParams {
  SpdMatrix C;  // trait precision, P x P
  SpdMatrix D;  // noise precision, P x P
  // One-off decomposition of the sample precision R, shared across iterations.
  std::shared_ptr<const SpectralDecomp> R_eig;

  ModelParams() = default;
  ModelParams(SpdMatrix c, SpdMatrix d,
              std::shared_ptr<const SpectralDecomp> r_eig)
      : C(std::move(c)), D(std::move(d)), R_eig(std::move(r_eig)) {}
};

inline std::shared_ptr<const SpectralDecomp> decompose_row_precision(
    const SpdMatrix& r) {
  return std::make_shared<SpectralDecomp>(
      detail::checked_decomp(r, "row precision R"));
}

// Data with the sample-precision rotation applied once: rot = U^T Y.
struct RotatedData {
  DataMatrix y;
  DataMatrix rot;

  RotatedData() = default;
  RotatedData(DataMatrix y_in, const SpectralDecomp& r_eig)
      : y(std::move(y_in)), rot(r_eig.vectors.transpose() * y) {
    check_finite(y, "Y");
    if (y.rows() != r_eig.dim()) {
      throw DimensionError("RotatedData: Y has " + std::to_string(y.rows()) +
                           " rows but R is " + std::to_string(r_eig.dim()) +
                           "-dimensional");
    }
  }
};

struct OmegaPair {
  SpdMatrix omega1;  // E[(Y-Z)^T (Y-Z)] / N
  SpdMatrix omega2;  // E[Z^T R Z] / N
};

struct ConditionalMoments {
  std::optional<DataMatrix> posterior_mean;  // M, N x P (optional, O(N^2 P))
  Eigen::MatrixXd sigma_trace_p;             // tr_P(Sigma)
  Eigen::MatrixXd sigma_r_trace_p;           // tr_P((I (x) R) Sigma)
};

struct EStepResult {
  OmegaPair omegas;
  ConditionalMoments cond;
};

struct EStepOptions {
  bool with_posterior_mean = true;
};

inline EStepResult posterior_moments(const RotatedData& data,
                                     const ModelParams& params,
                                     const EStepOptions& opt = {}) {
  const Index n = data.y.rows();
  const Index p = data.y.cols();
  if (params.C.dim() != p || params.D.dim() != p) {
    throw DimensionError("posterior_moments: C/D dimension does not match Y");
  }
  if (!params.R_eig || params.R_eig->dim() != n) {
    throw DimensionError("posterior_moments: R decomposition missing or wrong size");
  }
  const Eigen::VectorXd& lam_r = params.R_eig->values;

  const auto pow_d = detail::sym_powers(params.D, "noise precision D");
  const auto pow_c = detail::sym_powers(params.C, "trait precision C");

  // Q1 L1 Q1^T = D^{-1/2} C D^{-1/2},  Q2 L2 Q2^T = C^{-1/2} D C^{-1/2}
  const SpectralDecomp eig1 = spectral_decomp(
      SpdMatrix::symmetrized(pow_d.inv_half * params.C.mat() * pow_d.inv_half));
  const SpectralDecomp eig2 = spectral_decomp(
      SpdMatrix::symmetrized(pow_c.inv_half * params.D.mat() * pow_c.inv_half));

  const Eigen::MatrixXd g1 = pow_d.inv_half * eig1.vectors;  // D^{-1/2} Q1
  const Eigen::MatrixXd g2 = pow_c.inv_half * eig2.vectors;  // C^{-1/2} Q2
  const Eigen::MatrixXd a1 = data.rot * (pow_d.half * eig1.vectors);
  const Eigen::MatrixXd a2 = data.rot * (pow_c.half * eig2.vectors);

  // Diagonal resolvents [I + L1 (x) Lr]^{-1} and [I + L2 (x) Lr^{-1}]^{-1},
  // kept as N x P tables (column a holds the a-th diagonal block).
  Eigen::MatrixXd f1(n, p), f2(n, p);
  for (Index i = 0; i < n; ++i) {
    for (Index a = 0; a < p; ++a) {
      f1(i, a) = 1.0 / (1.0 + eig1.values(a) * lam_r(i));
      f2(i, a) = 1.0 / (1.0 + eig2.values(a) / lam_r(i));
    }
  }
  const Eigen::MatrixXd s1 = f1.cwiseProduct(a1);
  const Eigen::MatrixXd s2 = f2.cwiseProduct(a2);

  // tr_P of the diagonal resolvents: per-column partial sums.
  const Eigen::VectorXd t1 = f1.colwise().sum();
  const Eigen::VectorXd t2 = f2.colwise().sum();

  Eigen::MatrixXd sigma_trace = g1 * t1.asDiagonal() * g1.transpose();
  sigma_trace = ((sigma_trace + sigma_trace.transpose()) / 2.0).eval();
  Eigen::MatrixXd sigma_r_trace = g2 * t2.asDiagonal() * g2.transpose();
  sigma_r_trace = ((sigma_r_trace + sigma_r_trace.transpose()) / 2.0).eval();

  // (Y-M)^T (Y-M) = (C^{-1/2} Q2 S2^T)(C^{-1/2} Q2 S2^T)^T
  const Eigen::MatrixXd resid_gram = g2 * (s2.transpose() * s2) * g2.transpose();
  // M^T R M = (D^{-1/2} Q1 S1^T) Lr (D^{-1/2} Q1 S1^T)^T
  const Eigen::MatrixXd mean_gram =
      g1 * (s1.transpose() * lam_r.asDiagonal() * s1) * g1.transpose();

  EStepResult out;
  out.omegas.omega1 = SpdMatrix::symmetrized((resid_gram + sigma_trace) / n);
  out.omegas.omega2 = SpdMatrix::symmetrized((mean_gram + sigma_r_trace) / n);
  out.cond.sigma_trace_p = sigma_trace;
  out.cond.sigma_r_trace_p = sigma_r_trace;
  if (opt.with_posterior_mean) {
    // M = U S1 (D^{-1/2} Q1)^T -- the only O(N^2 P) product here
    out.cond.posterior_mean = params.R_eig->vectors * (s1 * g1.transpose());
  }
  return out;
}

inline EStepResult posterior_moments(const DataMatrix& y,
                                     const ModelParams& params,
                                     const EStepOptions& opt = {}) {
  if (!params.R_eig) {
    throw DimensionError("posterior_moments: R decomposition missing");
  }
  return posterior_moments(RotatedData(y, *params.R_eig), params, opt);
}

// Brute-force oracle: builds Sigma and mu densely. Guarded to test scale.
inline EStepResult posterior_moments_naive(const DataMatrix& y,
                                           const SpdMatrix& c,
                                           const SpdMatrix& d,
                                           const SpdMatrix& r) {
  const Index n = y.rows();
  const Index p = y.cols();
  if (n * p > 400) {
    throw ValidationError("posterior_moments_naive: N*P = " +
                          std::to_string(n * p) +
                          " exceeds the 400 oracle size cap");
  }
  if (c.dim() != p || d.dim() != p || r.dim() != n) {
    throw DimensionError("posterior_moments_naive: shape mismatch");
  }
  const Eigen::MatrixXd eye_n = Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd eye_p = Eigen::MatrixXd::Identity(p, p);
  const Eigen::MatrixXd prec = kron(d.mat(), eye_n) + kron(c.mat(), r.mat());
  const Eigen::MatrixXd sigma = spd_inverse(prec, "posterior precision");
  const Eigen::VectorXd mu = sigma * (kron(d.mat(), eye_n) * vec(y));
  const Eigen::MatrixXd m = unvec(mu, n, p);

  EStepResult out;
  out.cond.posterior_mean = m;
  out.cond.sigma_trace_p = block_trace_p(sigma, n, p);
  out.cond.sigma_r_trace_p =
      block_trace_p(kron(eye_p, r.mat()) * sigma, n, p);
  const Eigen::MatrixXd resid = y - m;
  out.omegas.omega1 = SpdMatrix::symmetrized(
      (resid.transpose() * resid + out.cond.sigma_trace_p) / n);
  out.omegas.omega2 = SpdMatrix::symmetrized(
      (m.transpose() * r.mat() * m + out.cond.sigma_r_trace_p) / n);
  return out;
}

// log N(vec(Y); 0, C^{-1} (x) R^{-1} + D^{-1} (x) I). After rotating by R's
// eigenvectors the rows of U^T Y are independent P-variate Gaussians with
// covariance lam_i^{-1} C^{-1} + D^{-1}, one per eigenvalue of R.
inline double observed_loglik(const RotatedData& data,
                              const ModelParams& params) {
  const Index n = data.y.rows();
  const Index p = data.y.cols();
  if (params.C.dim() != p || params.D.dim() != p || !params.R_eig ||
      params.R_eig->dim() != n) {
    throw DimensionError("observed_loglik: shape mismatch");
  }
  const Eigen::MatrixXd c_inv = spd_inverse(params.C.mat(), "trait precision C");
  const Eigen::MatrixXd d_inv = spd_inverse(params.D.mat(), "noise precision D");
  const Eigen::VectorXd& lam_r = params.R_eig->values;

  const double log2pi = std::log(2.0 * M_PI);
  double ll = 0.0;
  for (Index i = 0; i < n; ++i) {
    const Eigen::MatrixXd cov = c_inv / lam_r(i) + d_inv;
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) {
      // impossible for PD inputs
      throw NumericalError("observed_loglik: per-eigenvalue covariance not PD");
    }
    const double log_det =
        2.0 * llt.matrixLLT().diagonal().array().log().sum();
    const Eigen::VectorXd z = data.rot.row(i).transpose();
    const double quad = z.dot(llt.solve(z));
    ll -= 0.5 * (p * log2pi + log_det + quad);
  }
  return ll;
}

inline double observed_loglik(const DataMatrix& y, const ModelParams& params) {
  if (!params.R_eig) {
    throw DimensionError("observed_loglik: R decomposition missing");
  }
  return observed_loglik(RotatedData(y, *params.R_eig), params);
}

}  // namespace g3m
