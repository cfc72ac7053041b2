// Edge-recovery scoring, lambda sweeps averaged over datasets, AUC and
// network export. Support is judged on the off-diagonal only; the diagonal
// of a precision matrix is always nonzero.

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "g3m/baselines.hpp"
#include "g3m/em.hpp"
#include "g3m/simulate.hpp"
#include "g3m/types.hpp"

namespace g3m {

struct EdgeSet {
  int p = 0;
  std::set<std::pair<int, int>> edges;  // 1-based, i < j
};

inline EdgeSet edge_set(const SpdMatrix& c, double zero_tol) {
  if (zero_tol < 0.0) throw ValidationError("edge_set: zero_tol must be >= 0");
  EdgeSet out;
  out.p = static_cast<int>(c.dim());
  for (Index i = 0; i < c.dim(); ++i) {
    for (Index j = i + 1; j < c.dim(); ++j) {
      if (std::abs(c(i, j)) > zero_tol) {
        out.edges.emplace(static_cast<int>(i) + 1, static_cast<int>(j) + 1);
      }
    }
  }
  return out;
}

struct Recovery {
  double tpr = 0.0;
  double fpr = 0.0;
};

inline Recovery score_recovery(const EdgeSet& est, const EdgeSet& truth) {
  if (est.p != truth.p) {
    throw DimensionError("score_recovery: node counts differ");
  }
  const double total_pairs = truth.p * (truth.p - 1) / 2.0;
  std::size_t tp = 0;
  for (const auto& e : est.edges) tp += truth.edges.count(e);
  const std::size_t fp = est.edges.size() - tp;
  Recovery out;
  out.tpr = truth.edges.empty()
                ? 1.0
                : static_cast<double>(tp) / truth.edges.size();
  const double negatives = total_pairs - static_cast<double>(truth.edges.size());
  out.fpr = negatives <= 0.0 ? 0.0 : static_cast<double>(fp) / negatives;
  return out;
}

// lambda_k = 5^{x_k} with x equally spaced over [x_min, x_max].
inline std::vector<double> lambda_grid(double x_min = -7.0, double x_max = 3.0,
                                       int n = 50) {
  if (n < 2) throw ValidationError("lambda_grid: need at least 2 points");
  if (x_min >= x_max) throw ValidationError("lambda_grid: x_min must be < x_max");
  std::vector<double> out(n);
  for (int k = 0; k < n; ++k) {
    const double x = x_min + (x_max - x_min) * k / (n - 1);
    out[k] = std::pow(5.0, x);
  }
  return out;
}

struct RocPoint {
  double lambda = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
  int n_edges = 0;  // mean edge count across datasets, rounded
};

enum class SweepMethod { g3m_dense, g3m_iid, g3m_sparse, kronglasso, vanilla };

inline const char* sweep_method_name(SweepMethod m) {
  switch (m) {
    case SweepMethod::g3m_dense: return "g3m-dense";
    case SweepMethod::g3m_iid: return "g3m-iid";
    case SweepMethod::g3m_sparse: return "g3m-sparse";
    case SweepMethod::kronglasso: return "kronglasso";
    case SweepMethod::vanilla: return "vanilla";
  }
  return "?";
}

inline std::optional<SweepMethod> parse_sweep_method(const std::string& s) {
  if (s == "g3m-dense") return SweepMethod::g3m_dense;
  if (s == "g3m-iid") return SweepMethod::g3m_iid;
  if (s == "g3m-sparse") return SweepMethod::g3m_sparse;
  if (s == "kronglasso") return SweepMethod::kronglasso;
  if (s == "vanilla") return SweepMethod::vanilla;
  return std::nullopt;
}

struct SweepOptions {
  GlassoSettings glasso;
  int max_iters = 200;
  double rel_tol = 1e-6;
  bool center_columns = true;
  double zero_tol = 1e-8;      // edge threshold for scoring
  std::vector<double> gamma_grid;  // g3m-sparse only (oracle selection)
  int threads = 1;
};

struct SweepCellFailure {
  int dataset = 0;
  double lambda = 0.0;
  std::string message;
};

struct SweepDetailRow {
  int dataset = 0;
  double lambda = 0.0;
  double tpr = 0.0;
  double fpr = 0.0;
  int n_edges = 0;
};

struct SweepResult {
  std::vector<RocPoint> points;              // one per usable lambda
  std::vector<SweepCellFailure> failures;    // per failed (dataset, lambda)
  std::vector<SweepDetailRow> details;       // per successful cell
};

namespace detail {

struct CellOutcome {
  bool ok = false;
  Recovery recovery;
  int n_edges = 0;
};

// One dataset's whole lambda chain, largest lambda first so each fit warm
// starts from the previous (sparser) solution.
inline std::vector<CellOutcome> sweep_dataset(
    const Dataset& ds, SweepMethod method, const std::vector<double>& grid,
    const SweepOptions& opt, std::vector<SweepCellFailure>& failures,
    int dataset_index) {
  std::vector<CellOutcome> outcomes(grid.size());
  const EdgeSet truth = edge_set(ds.c_true, opt.zero_tol);

  std::vector<std::size_t> order(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) order[k] = k;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return grid[a] > grid[b]; });

  PreparedData prep;
  DataMatrix y_for_vanilla;
  if (method == SweepMethod::vanilla) {
    y_for_vanilla = ds.y;
    if (opt.center_columns) {
      y_for_vanilla.rowwise() -= y_for_vanilla.colwise().mean();
    }
  } else {
    prep = prepare_fit(ds.y, ds.r, opt.center_columns);
  }

  std::optional<WarmStart> em_warm;
  std::optional<KronGlassoWarm> kron_warm;
  std::optional<SpdMatrix> vanilla_warm;

  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    const std::size_t k = order[pos];
    const double lambda = grid[k];
    try {
      SpdMatrix c_hat;
      switch (method) {
        case SweepMethod::vanilla: {
          BaselineResult r = vanilla_glasso(
              y_for_vanilla, lambda, opt.glasso,
              vanilla_warm ? &*vanilla_warm : nullptr);
          c_hat = r.C_hat;
          vanilla_warm = c_hat;
          break;
        }
        case SweepMethod::kronglasso: {
          BaselineResult r = kron_glasso_known_r(
              prep, lambda, opt.glasso, opt.max_iters, opt.rel_tol,
              kron_warm ? &*kron_warm : nullptr);
          c_hat = r.C_hat;
          kron_warm = KronGlassoWarm{r.C_hat, r.tau.value_or(1.0)};
          break;
        }
        case SweepMethod::g3m_dense:
        case SweepMethod::g3m_iid: {
          FitConfig cfg;
          cfg.lambda = lambda;
          cfg.noise.variant = method == SweepMethod::g3m_iid
                                  ? NoiseVariant::iid
                                  : NoiseVariant::dense;
          cfg.max_iters = opt.max_iters;
          cfg.rel_tol = opt.rel_tol;
          cfg.glasso = opt.glasso;
          FitResult r = fit_g3m(prep, cfg, em_warm ? &*em_warm : nullptr);
          c_hat = r.C_hat;
          em_warm = WarmStart{r.C_hat, r.D_hat};
          break;
        }
        case SweepMethod::g3m_sparse: {
          if (opt.gamma_grid.empty()) {
            throw ValidationError(
                "roc_sweep: g3m-sparse requires a gamma grid");
          }
          // Oracle gamma selection: best precision of the recovered support
          // against the known truth (simulation studies only).
          double best_precision = -1.0;
          double best_tpr = -1.0;
          std::optional<SpdMatrix> best_c;
          std::optional<WarmStart> gamma_warm = em_warm;
          for (double gamma : opt.gamma_grid) {
            FitConfig cfg;
            cfg.lambda = lambda;
            cfg.noise.variant = NoiseVariant::sparse;
            cfg.noise.gamma = gamma;
            cfg.max_iters = opt.max_iters;
            cfg.rel_tol = opt.rel_tol;
            cfg.glasso = opt.glasso;
            FitResult r =
                fit_g3m(prep, cfg, gamma_warm ? &*gamma_warm : nullptr);
            gamma_warm = WarmStart{r.C_hat, r.D_hat};
            const EdgeSet est = edge_set(r.C_hat, opt.zero_tol);
            std::size_t tp = 0;
            for (const auto& e : est.edges) tp += truth.edges.count(e);
            const double precision =
                est.edges.empty()
                    ? 0.0
                    : static_cast<double>(tp) / est.edges.size();
            const double tpr =
                truth.edges.empty()
                    ? 1.0
                    : static_cast<double>(tp) / truth.edges.size();
            if (precision > best_precision ||
                (precision == best_precision && tpr > best_tpr)) {
              best_precision = precision;
              best_tpr = tpr;
              best_c = r.C_hat;
              em_warm = WarmStart{r.C_hat, r.D_hat};
            }
          }
          c_hat = *best_c;
          break;
        }
      }
      const EdgeSet est = edge_set(c_hat, opt.zero_tol);
      outcomes[k].ok = true;
      outcomes[k].recovery = score_recovery(est, truth);
      outcomes[k].n_edges = static_cast<int>(est.edges.size());
    } catch (const Error& e) {
      outcomes[k].ok = false;
      failures.push_back({dataset_index, lambda, e.what()});
      // the warm chain is broken; restart cold at the next lambda
      em_warm.reset();
      kron_warm.reset();
      vanilla_warm.reset();
    }
  }
  return outcomes;
}

}  // namespace detail

// For each lambda, fit every dataset, score against its true support and
// average the rates over the datasets that succeeded. A point is emitted
// only when at least half of the datasets succeeded at that lambda.
inline SweepResult roc_sweep(const std::vector<Dataset>& datasets,
                             SweepMethod method,
                             const std::vector<double>& grid,
                             const SweepOptions& opt = {}) {
  if (datasets.empty()) throw ValidationError("roc_sweep: no datasets");
  if (grid.empty()) throw ValidationError("roc_sweep: empty lambda grid");

  const std::size_t n_ds = datasets.size();
  std::vector<std::vector<detail::CellOutcome>> per_dataset(n_ds);
  std::vector<std::vector<SweepCellFailure>> per_failures(n_ds);

  const int threads =
      std::max(1, std::min<int>(opt.threads, static_cast<int>(n_ds)));
  std::atomic<std::size_t> next{0};
  auto work = [&]() {
    for (std::size_t d = next.fetch_add(1); d < n_ds; d = next.fetch_add(1)) {
      per_dataset[d] = detail::sweep_dataset(datasets[d], method, grid, opt,
                                             per_failures[d],
                                             static_cast<int>(d));
    }
  };
  if (threads == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int t = 0; t < threads; ++t) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }

  SweepResult out;
  for (auto& f : per_failures) {
    out.failures.insert(out.failures.end(), f.begin(), f.end());
  }
  for (std::size_t d = 0; d < n_ds; ++d) {
    for (std::size_t k = 0; k < grid.size(); ++k) {
      if (!per_dataset[d][k].ok) continue;
      out.details.push_back({static_cast<int>(d), grid[k],
                             per_dataset[d][k].recovery.tpr,
                             per_dataset[d][k].recovery.fpr,
                             per_dataset[d][k].n_edges});
    }
  }
  for (std::size_t k = 0; k < grid.size(); ++k) {
    double tpr = 0.0, fpr = 0.0, edges = 0.0;
    std::size_t ok = 0;
    for (std::size_t d = 0; d < n_ds; ++d) {
      if (!per_dataset[d][k].ok) continue;
      ++ok;
      tpr += per_dataset[d][k].recovery.tpr;
      fpr += per_dataset[d][k].recovery.fpr;
      edges += per_dataset[d][k].n_edges;
    }
    if (2 * ok < n_ds) continue;  // fewer than half succeeded
    RocPoint pt;
    pt.lambda = grid[k];
    pt.tpr = tpr / ok;
    pt.fpr = fpr / ok;
    pt.n_edges = static_cast<int>(std::lround(edges / ok));
    out.points.push_back(pt);
  }
  std::sort(out.points.begin(), out.points.end(),
            [](const RocPoint& a, const RocPoint& b) {
              return a.lambda < b.lambda;
            });
  return out;
}

// Trapezoidal area after sorting by fpr and augmenting with (0,0) and (1,1).
inline double auc(std::vector<RocPoint> points) {
  if (points.empty()) throw ValidationError("auc: no points");
  std::sort(points.begin(), points.end(), [](const RocPoint& a,
                                             const RocPoint& b) {
    return a.fpr != b.fpr ? a.fpr < b.fpr : a.tpr < b.tpr;
  });
  double area = 0.0;
  double x = 0.0, y = 0.0;  // start at (0, 0)
  for (const auto& pt : points) {
    area += (pt.fpr - x) * (y + pt.tpr) / 2.0;
    x = pt.fpr;
    y = pt.tpr;
  }
  area += (1.0 - x) * (y + 1.0) / 2.0;  // close at (1, 1)
  return area;
}

// JSON edge list; unordered edges appear once, sorted by (i, j), 1-based.
inline nlohmann::json export_network(const SpdMatrix& c, double zero_tol) {
  nlohmann::json edges = nlohmann::json::array();
  for (Index i = 0; i < c.dim(); ++i) {
    for (Index j = i + 1; j < c.dim(); ++j) {
      if (std::abs(c(i, j)) > zero_tol) {
        edges.push_back({{"i", static_cast<int>(i) + 1},
                         {"j", static_cast<int>(j) + 1},
                         {"weight", c(i, j)}});
      }
    }
  }
  return nlohmann::json{{"nodes", static_cast<int>(c.dim())},
                        {"edges", std::move(edges)}};
}

// The sparsest operating point that still reaches the target power: the
// largest lambda whose averaged tpr is >= target (tpr is non-increasing in
// lambda, so this is the crossing).
inline double threshold_at_power(const std::vector<RocPoint>& points,
                                 double target_tpr) {
  if (!(target_tpr > 0.0) || !(target_tpr < 1.0)) {
    throw ValidationError("threshold_at_power: target must be in (0, 1)");
  }
  if (points.empty()) throw ValidationError("threshold_at_power: no points");
  bool found = false;
  double best = 0.0;
  double max_tpr = 0.0;
  for (const auto& pt : points) {
    max_tpr = std::max(max_tpr, pt.tpr);
    if (pt.tpr >= target_tpr && (!found || pt.lambda > best)) {
      found = true;
      best = pt.lambda;
    }
  }
  if (!found) {
    throw NumericalError("threshold_at_power: target power " +
                         std::to_string(target_tpr) +
                         " unreachable; max averaged tpr = " +
                         std::to_string(max_tpr));
  }
  return best;
}

}  // namespace g3m
