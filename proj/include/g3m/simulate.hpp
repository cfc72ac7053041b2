// Synthetic data generation: family-block sample structure, the three
// precision generator families (AR(1), Random(p), Wishart), signal-to-noise
// scaling and matrix-normal sampling. All draws come from per-dataset
// splittable streams, so generation is reproducible and order-independent.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "g3m/kron.hpp"
#include "g3m/rng.hpp"
#include "g3m/types.hpp"

namespace g3m {

enum class GeneratorKind { ar1, random, wishart, iid };

struct GeneratorSpec {
  GeneratorKind kind = GeneratorKind::random;
  double rho = 0.8;          // ar1 autocorrelation
  bool ar1_toeplitz = false; // use rho^|i-j| directly as the precision
  double density = 0.1;      // random: fraction of off-diagonal pairs
  int dof = -1;              // wishart; -1 means P-3
  double scale = -1.0;       // wishart; -1 means 1/(P-3)
};

// Whether the family blocks describe the covariance K (R = K^{-1}, the
// genetic-relatedness reading) or R itself.
enum class FamilyStructureOn { covariance, precision };

struct SimConfig {
  int n = 400;
  int p = 50;
  int n_datasets = 40;
  GeneratorSpec c_gen;
  GeneratorSpec d_gen;
  double snr = 0.2;
  int family_size = 5;
  double within_family_corr = 0.5;
  FamilyStructureOn structure_on = FamilyStructureOn::covariance;
  // after the SNR scaling, jointly rescale (C, D) so the average per-trait
  // total variance is 1; leaves SNR and h2 untouched and keeps the data on
  // the scale the lambda grid expects
  bool normalize_variance = true;
  std::uint64_t seed = 0;
};

struct DatasetMeta {
  std::uint64_t master_seed = 0;
  int index = 0;
  double snr = 0.0;
  Eigen::VectorXd h2;  // realized per-trait heritability
};

struct Dataset {
  DataMatrix y;
  SpdMatrix r;
  SpdMatrix c_true;
  SpdMatrix d_true;
  DatasetMeta meta;
};

// Block-diagonal family matrix: each m x m block is equicorrelated with unit
// diagonal and off-diagonal r. In covariance mode that block describes
// K = (1-r) I + r 11^T and the returned precision is its closed-form inverse
//   K^{-1} = 1/(1-r) [ I - r / (1 + (m-1) r) 11^T ].
inline SpdMatrix make_family_r(int n_families, int family_size, double r,
                               FamilyStructureOn structure_on =
                                   FamilyStructureOn::covariance) {
  if (n_families < 1 || family_size < 1) {
    throw ValidationError("make_family_r: need at least one family member");
  }
  if (r < 0.0 || r >= 1.0) {
    throw ValidationError(
        "make_family_r: within-family correlation must be in [0, 1); the "
        "block is singular at r = 1");
  }
  const int m = family_size;
  Eigen::MatrixXd block(m, m);
  if (structure_on == FamilyStructureOn::precision) {
    block.setConstant(r);
    block.diagonal().setOnes();
  } else {
    const double off = -r / ((1.0 - r) * (1.0 + (m - 1) * r));
    const double diag = (1.0 + (m - 2) * r) / ((1.0 - r) * (1.0 + (m - 1) * r));
    block.setConstant(off);
    block.diagonal().setConstant(diag);
  }
  const int n = n_families * m;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
  for (int f = 0; f < n_families; ++f) {
    out.block(f * m, f * m, m, m) = block;
  }
  return SpdMatrix(out);
}

// Tridiagonal precision of a unit-innovation AR(1) process: diagonal
// (1, 1+rho^2, ..., 1+rho^2, 1), off-diagonal -rho. The optional Toeplitz
// form places rho^|i-j| directly on the precision instead.
inline SpdMatrix gen_ar1_precision(int p, double rho, bool toeplitz = false) {
  if (p < 1) throw ValidationError("gen_ar1_precision: P must be >= 1");
  if (std::abs(rho) >= 1.0) {
    throw ValidationError("gen_ar1_precision: |rho| must be < 1");
  }
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(p, p);
  if (toeplitz) {
    for (int i = 0; i < p; ++i) {
      for (int j = 0; j < p; ++j) {
        out(i, j) = std::pow(rho, std::abs(i - j));
      }
    }
    return SpdMatrix(out);
  }
  for (int i = 0; i < p; ++i) {
    out(i, i) = (i == 0 || i == p - 1) ? 1.0 : 1.0 + rho * rho;
    if (i + 1 < p) {
      out(i, i + 1) = -rho;
      out(i + 1, i) = -rho;
    }
  }
  return SpdMatrix(out);
}

// Random(p): a fraction `density` of the off-diagonal pairs get a common
// value, then a multiple of the identity is added so the condition number is
// exactly P: with extreme eigenvalues (l_max, l_min) of the edge matrix,
// shift c = (l_max - P l_min) / (P - 1).
inline SpdMatrix gen_random_precision(int p, double density, Rng& rng,
                                      std::vector<std::string>* warnings =
                                          nullptr) {
  if (p < 2) throw ValidationError("gen_random_precision: P must be >= 2");
  if (density <= 0.0 || density > 1.0) {
    throw ValidationError("gen_random_precision: density must be in (0, 1]");
  }
  const std::uint64_t total = static_cast<std::uint64_t>(p) * (p - 1) / 2;
  const std::uint64_t n_edges = static_cast<std::uint64_t>(
      std::ceil(density * static_cast<double>(total)));

  // Floyd's sampling of n_edges distinct pair indices
  std::set<std::uint64_t> chosen;
  for (std::uint64_t j = total - n_edges; j < total; ++j) {
    const std::uint64_t t = rng.next_below(j + 1);
    if (!chosen.insert(t).second) chosen.insert(j);
  }

  Eigen::MatrixXd edges = Eigen::MatrixXd::Zero(p, p);
  for (std::uint64_t flat : chosen) {
    // unrank the flat upper-triangular index
    std::uint64_t i = 0;
    std::uint64_t row_len = p - 1;
    std::uint64_t rem = flat;
    while (rem >= row_len) {
      rem -= row_len;
      --row_len;
      ++i;
    }
    const std::uint64_t j = i + 1 + rem;
    edges(i, j) = 1.0;
    edges(j, i) = 1.0;
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(edges);
  const double l_min = es.eigenvalues()(0);
  const double l_max = es.eigenvalues()(p - 1);
  if (l_max - l_min <= 1e-12 * std::max(1.0, std::abs(l_max))) {
    if (warnings) {
      warnings->push_back(
          "gen_random_precision: degenerate edge spectrum; falling back to "
          "the identity (condition number 1)");
    }
    return SpdMatrix::identity(p);
  }
  const double shift = (l_max - p * l_min) / (p - 1);
  edges.diagonal().array() += shift;
  return SpdMatrix(edges);
}

// Wishart(P-3, I/(P-3)) draw via a sum of dof Gaussian outer products. The
// raw draw has rank P-3 < P, so a relative ridge restores definiteness.
inline SpdMatrix gen_wishart_precision(int p, Rng& rng, int dof = -1,
                                       double scale = -1.0,
                                       double ridge_rel = 1e-6) {
  if (p <= 4) {
    throw ValidationError(
        "gen_wishart_precision: P must be > 4 so that dof = P-3 is positive");
  }
  if (dof < 0) dof = p - 3;
  if (scale < 0.0) scale = 1.0 / static_cast<double>(p - 3);
  const Eigen::MatrixXd g = rng.gaussian_matrix(p, dof);
  Eigen::MatrixXd w = scale * (g * g.transpose());
  const double ridge = ridge_rel * (w.trace() / p);
  w.diagonal().array() += ridge;
  return SpdMatrix::symmetrized(w);
}

inline SpdMatrix generate_precision(const GeneratorSpec& spec, int p, Rng& rng,
                                    std::vector<std::string>* warnings =
                                        nullptr) {
  switch (spec.kind) {
    case GeneratorKind::ar1:
      return gen_ar1_precision(p, spec.rho, spec.ar1_toeplitz);
    case GeneratorKind::random:
      return gen_random_precision(p, spec.density, rng, warnings);
    case GeneratorKind::wishart:
      return gen_wishart_precision(p, rng, spec.dof, spec.scale);
    case GeneratorKind::iid:
      return SpdMatrix::identity(p);
  }
  throw ValidationError("generate_precision: unknown generator kind");
}

// Rescale C (only) so that tr((aC)^{-1}) / tr(D^{-1}) equals the target SNR.
inline std::pair<SpdMatrix, SpdMatrix> scale_snr(const SpdMatrix& c,
                                                 const SpdMatrix& d,
                                                 double target) {
  if (!(target > 0.0)) throw ValidationError("scale_snr: target must be > 0");
  const double tr_c_inv = spd_inverse(c.mat(), "scale_snr: C").trace();
  const double tr_d_inv = spd_inverse(d.mat(), "scale_snr: D").trace();
  const double alpha = tr_c_inv / (target * tr_d_inv);
  return {SpdMatrix(alpha * c.mat()), d};
}

struct Heritability {
  Eigen::VectorXd per_trait;  // h2_i = (C^-1)_ii / ((C^-1)_ii + (D^-1)_ii)
  double snr = 0.0;           // tr(C^-1) / tr(D^-1)
};

inline Heritability heritability(const SpdMatrix& c, const SpdMatrix& d) {
  const Eigen::MatrixXd c_inv = spd_inverse(c.mat(), "heritability: C");
  const Eigen::MatrixXd d_inv = spd_inverse(d.mat(), "heritability: D");
  Heritability out;
  out.per_trait.resize(c.dim());
  for (Index i = 0; i < c.dim(); ++i) {
    out.per_trait(i) = c_inv(i, i) / (c_inv(i, i) + d_inv(i, i));
  }
  out.snr = c_inv.trace() / d_inv.trace();
  return out;
}

// Y = Z + E with Z = R^{-1/2} E1 C^{-1/2} and E = E2 D^{-1/2}; E1, E2 iid
// standard normal. Draw order is fixed: E1 first, then E2.
inline Dataset sample_dataset(const SpdMatrix& r, const SpdMatrix& c,
                              const SpdMatrix& d, Rng& rng) {
  const Index n = r.dim();
  const Index p = c.dim();
  if (d.dim() != p) throw DimensionError("sample_dataset: C/D sizes differ");
  const SpdMatrix r_m12 = spd_power(r, -0.5);
  const SpdMatrix c_m12 = spd_power(c, -0.5);
  const SpdMatrix d_m12 = spd_power(d, -0.5);
  const Eigen::MatrixXd e1 = rng.gaussian_matrix(n, p);
  const Eigen::MatrixXd e2 = rng.gaussian_matrix(n, p);

  Dataset out;
  out.y = r_m12.mat() * e1 * c_m12.mat() + e2 * d_m12.mat();
  out.r = r;
  out.c_true = c;
  out.d_true = d;
  const Heritability h = heritability(c, d);
  out.meta.snr = h.snr;
  out.meta.h2 = h.per_trait;
  return out;
}

// Full pipeline for dataset `index` of a config, on its own stream.
inline Dataset generate_dataset(const SimConfig& cfg, int index,
                                std::vector<std::string>* warnings = nullptr) {
  if (cfg.n < 1 || cfg.p < 1 || index < 0) {
    throw ValidationError("generate_dataset: invalid dimensions or index");
  }
  if (cfg.family_size < 1 || cfg.n % cfg.family_size != 0) {
    throw ValidationError(
        "generate_dataset: N must be divisible by family_size");
  }
  if (!(cfg.snr > 0.0)) {
    throw ValidationError("generate_dataset: snr must be > 0");
  }
  Rng rng = Rng::stream(cfg.seed, static_cast<std::uint64_t>(index));
  const SpdMatrix r =
      make_family_r(cfg.n / cfg.family_size, cfg.family_size,
                    cfg.within_family_corr, cfg.structure_on);
  const SpdMatrix c_raw = generate_precision(cfg.c_gen, cfg.p, rng, warnings);
  const SpdMatrix d_raw = generate_precision(cfg.d_gen, cfg.p, rng, warnings);
  auto [c, d] = scale_snr(c_raw, d_raw, cfg.snr);
  if (cfg.normalize_variance) {
    // unit average per-trait variance; the family covariance has unit
    // diagonal, so E||Y||_F^2 / (N P) = (tr(C^-1) + tr(D^-1)) / P
    const double total = spd_inverse(c.mat(), "C").trace() +
                         spd_inverse(d.mat(), "D").trace();
    const double beta = total / cfg.p;
    c = SpdMatrix(beta * c.mat());
    d = SpdMatrix(beta * d.mat());
  }
  Dataset out = sample_dataset(r, c, d, rng);
  out.meta.master_seed = cfg.seed;
  out.meta.index = index;
  return out;
}

}  // namespace g3m
