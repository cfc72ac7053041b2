// Penalized EM driver: alternates the exact E-step (posterior moments) with
// the penalized M-step, tracking the penalized observed-data objective
//
//   F(C, D) = loglik(Y; C, D, R) - (N/2) * (lambda ||C||_1 + gamma ||D||_1)
//
// The N/2 factor matches the normalized M-step objective
// (-log|C| + tr(C Omega2) + lambda ||C||_1), so every EM iteration that does
// not increase the M-step objectives cannot decrease F. Since the C and D
// solvers are warm-started at the current iterate, F is non-decreasing even
// when the glasso stops early; a decrease beyond slack is a solver bug and
// raises an error.

#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "g3m/estep.hpp"
#include "g3m/mstep.hpp"
#include "g3m/types.hpp"

namespace g3m {

enum class NoiseVariant { dense, iid, sparse };

struct NoiseModel {
  NoiseVariant variant = NoiseVariant::dense;
  double gamma = 0.0;  // l1 weight on D, sparse variant only
};

enum class InitKind { identity, diagonal_moment };

struct FitConfig {
  double lambda = 0.0;
  NoiseModel noise;
  int max_iters = 200;
  double rel_tol = 1e-6;
  InitKind init = InitKind::diagonal_moment;
  bool center_columns = true;
  GlassoSettings glasso;  // lambda field is overwritten per solve
};

struct FitResult {
  SpdMatrix C_hat;
  SpdMatrix D_hat;                  // tau * I under the iid model
  std::optional<double> tau;        // set iff noise.variant == iid
  std::vector<double> objective_trace;
  int iters = 0;
  bool converged = false;
  std::vector<std::string> warnings;
};

// One-off spectral work per (Y, R) pair, shared across fits and lambdas.
struct PreparedData {
  std::shared_ptr<const SpectralDecomp> r_eig;
  RotatedData data;
  double r_spread = 1.0;  // condition number of R
};

inline PreparedData prepare_fit(DataMatrix y, const SpdMatrix& r,
                                bool center_columns) {
  check_finite(y, "Y");
  if (center_columns) {
    y.rowwise() -= y.colwise().mean();
  }
  PreparedData out;
  out.r_eig = decompose_row_precision(r);
  out.r_spread = out.r_eig->values(0) / out.r_eig->values(r.dim() - 1);
  out.data = RotatedData(std::move(y), *out.r_eig);
  return out;
}

inline double l1_penalty(const Eigen::MatrixXd& m, bool include_diagonal) {
  return detail::l1_norm(m, include_diagonal);
}

inline double penalized_objective(const RotatedData& data,
                                  const ModelParams& params, double lambda,
                                  const NoiseModel& noise,
                                  bool penalize_diagonal = true) {
  const double n = static_cast<double>(data.y.rows());
  double pen = lambda * l1_penalty(params.C.mat(), penalize_diagonal);
  if (noise.variant == NoiseVariant::sparse) {
    pen += noise.gamma * l1_penalty(params.D.mat(), penalize_diagonal);
  }
  return observed_loglik(data, params) - 0.5 * n * pen;
}

inline double penalized_objective(const DataMatrix& y, const SpdMatrix& r,
                                  const SpdMatrix& c, const SpdMatrix& d,
                                  double lambda, const NoiseModel& noise,
                                  bool penalize_diagonal = true) {
  ModelParams params(c, d, decompose_row_precision(r));
  return penalized_objective(RotatedData(y, *params.R_eig), params, lambda,
                             noise, penalize_diagonal);
}

namespace detail {

inline constexpr double kIdentifiabilitySpread = 1.0 + 1e-6;
inline constexpr double kMonotonicitySlack = 1e-7;

inline std::pair<SpdMatrix, SpdMatrix> initial_params(const DataMatrix& y,
                                                      InitKind init) {
  const Index p = y.cols();
  if (init == InitKind::identity) {
    return {SpdMatrix::identity(p), SpdMatrix::identity(p)};
  }
  // diagonal-moment: split each trait's marginal variance evenly between the
  // two components, C0 = D0 = 2 (diag(Y^T Y / N))^{-1}
  const double n = static_cast<double>(y.rows());
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(p, p);
  for (Index i = 0; i < p; ++i) {
    const double v = y.col(i).squaredNorm() / n;
    if (!(v > 0.0)) {
      throw NumericalError("fit_g3m: trait " + std::to_string(i) +
                           " has zero variance; cannot form the "
                           "diagonal-moment initializer");
    }
    c(i, i) = 2.0 / v;
  }
  return {SpdMatrix(c), SpdMatrix(c)};
}

}  // namespace detail

struct WarmStart {
  SpdMatrix C;
  SpdMatrix D;
};

inline FitResult fit_g3m(const PreparedData& prep, const FitConfig& cfg,
                         const WarmStart* warm = nullptr) {
  if (cfg.lambda < 0.0) throw ValidationError("fit_g3m: lambda must be >= 0");
  if (cfg.max_iters < 1) throw ValidationError("fit_g3m: max_iters must be >= 1");
  if (cfg.rel_tol <= 0.0) throw ValidationError("fit_g3m: rel_tol must be > 0");
  if (cfg.noise.variant == NoiseVariant::sparse && cfg.noise.gamma < 0.0) {
    throw ValidationError("fit_g3m: gamma must be >= 0");
  }

  FitResult result;
  if (prep.r_spread < detail::kIdentifiabilitySpread) {
    result.warnings.push_back(
        "R has no eigenvalue spread (condition number < 1 + 1e-6): C and D "
        "are not separately identifiable at lambda = 0");
  }

  ModelParams params;
  params.R_eig = prep.r_eig;
  if (warm) {
    params.C = warm->C;
    params.D = warm->D;
  } else {
    auto [c0, d0] = detail::initial_params(prep.data.y, cfg.init);
    params.C = std::move(c0);
    params.D = std::move(d0);
  }

  GlassoSettings c_settings = cfg.glasso;
  c_settings.lambda = cfg.lambda;

  double prev = 0.0;
  for (int t = 1; t <= cfg.max_iters; ++t) {
    try {
      const EStepResult est =
          posterior_moments(prep.data, params, {/*with_posterior_mean=*/false});

      // The two M-step problems read only the omegas and are independent.
      SpdMatrix c_new = glasso(est.omegas.omega2, c_settings, &params.C);
      SpdMatrix d_new;
      switch (cfg.noise.variant) {
        case NoiseVariant::dense:
          d_new = update_dense_d(est.omegas.omega1);
          result.tau.reset();
          break;
        case NoiseVariant::iid: {
          const double tau = update_iid_tau(est.omegas.omega1);
          d_new = SpdMatrix(Eigen::MatrixXd::Identity(params.D.dim(),
                                                      params.D.dim()) *
                            tau);
          result.tau = tau;
          break;
        }
        case NoiseVariant::sparse:
          d_new = update_sparse_d(est.omegas.omega1, cfg.noise.gamma,
                                  cfg.glasso, &params.D);
          result.tau.reset();
          break;
      }
      params.C = std::move(c_new);
      params.D = std::move(d_new);
    } catch (const NumericalError& e) {
      throw NumericalError("EM iteration " + std::to_string(t) + ": " +
                           e.what());
    } catch (const ValidationError& e) {
      throw ValidationError("EM iteration " + std::to_string(t) + ": " +
                            e.what());
    }

    const double obj =
        penalized_objective(prep.data, params, cfg.lambda, cfg.noise,
                            cfg.glasso.penalize_diagonal);
    result.objective_trace.push_back(obj);
    result.iters = t;
    if (t >= 2) {
      if (obj < prev - detail::kMonotonicitySlack) {
        throw NumericalError(
            "fit_g3m: penalized objective decreased at iteration " +
            std::to_string(t) + " (" + std::to_string(prev) + " -> " +
            std::to_string(obj) + "); this indicates a solver bug");
      }
      if (std::abs(obj - prev) <=
          cfg.rel_tol * std::max(1.0, std::abs(prev))) {
        result.converged = true;
        prev = obj;
        break;
      }
    }
    prev = obj;
  }

  result.C_hat = params.C;
  result.D_hat = params.D;
  return result;
}

inline FitResult fit_g3m(const DataMatrix& y, const SpdMatrix& r,
                         const FitConfig& cfg) {
  return fit_g3m(prepare_fit(y, r, cfg.center_columns), cfg);
}

// Held-out model selection: argmax of the observed log-likelihood, ties
// broken toward the sparser C, then the smaller index.
inline std::size_t select_model(const std::vector<FitResult>& fits,
                                const DataMatrix& y_holdout,
                                const SpdMatrix& r_holdout) {
  if (fits.empty()) {
    throw ValidationError("select_model: no fits supplied");
  }
  auto r_eig = decompose_row_precision(r_holdout);
  const RotatedData data(y_holdout, *r_eig);

  auto edge_count = [](const SpdMatrix& c) {
    int count = 0;
    for (Index i = 0; i < c.dim(); ++i) {
      for (Index j = i + 1; j < c.dim(); ++j) {
        if (c(i, j) != 0.0) ++count;
      }
    }
    return count;
  };

  std::size_t best = 0;
  double best_ll = -std::numeric_limits<double>::infinity();
  int best_edges = 0;
  for (std::size_t k = 0; k < fits.size(); ++k) {
    ModelParams params(fits[k].C_hat, fits[k].D_hat, r_eig);
    const double ll = observed_loglik(data, params);
    const int edges = edge_count(fits[k].C_hat);
    if (ll > best_ll || (ll == best_ll && edges < best_edges)) {
      best = k;
      best_ll = ll;
      best_edges = edges;
    }
  }
  return best;
}

}  // namespace g3m
