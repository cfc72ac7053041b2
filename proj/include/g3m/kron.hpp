// Kronecker / vec / partial-trace kernels.
//
// Block convention: an NP x NP matrix M is indexed (a*N + i, b*N + j) with
// a,b in [0,P) outer and i,j in [0,N) inner, matching vec(Y) for an N x P
// matrix Y stacked column-wise. block_trace_p collapses the inner N x N
// blocks into a P x P matrix of traces, so that
//     tr((X (x) I_N) M) = tr(X * block_trace_p(M))        for P x P X,
//     tr((I_P (x) X) M) = tr(X * block_trace_n(M))        for N x N X.
// The partial trace is not cyclic in general, but it does commute one-sidedly
// with inner-factor multiplication:
//     block_trace_p((I (x) X) M) = block_trace_p(M (I (x) X)),
// and pushes outer factors through:
//     block_trace_p((A (x) I) M) = A * block_trace_p(M).
//
// kron / the dense block traces are oracle-path helpers; the production
// E-step only uses the factorized kernels at the bottom of this header,
// which never materialize an NP x NP matrix.

#pragma once

#include <cmath>
#include <string>
#include <utility>

#include "g3m/types.hpp"

namespace g3m {

inline Eigen::VectorXd vec(const Eigen::MatrixXd& x) {
  return Eigen::Map<const Eigen::VectorXd>(x.data(), x.size());
}

inline Eigen::MatrixXd unvec(const Eigen::VectorXd& x, Index n, Index p) {
  if (n < 0 || p < 0 || x.size() != n * p) {
    throw DimensionError("unvec: vector of length " + std::to_string(x.size()) +
                         " cannot fill a " + std::to_string(n) + "x" +
                         std::to_string(p) + " matrix");
  }
  return Eigen::Map<const Eigen::MatrixXd>(x.data(), n, p);
}

inline Eigen::MatrixXd kron(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

namespace detail {
inline void check_block_dims(const Eigen::MatrixXd& m, Index n, Index p,
                             const char* who) {
  if (n <= 0 || p <= 0 || m.rows() != m.cols() || m.rows() != n * p) {
    throw DimensionError(std::string(who) + ": matrix of size " +
                         std::to_string(m.rows()) + "x" +
                         std::to_string(m.cols()) +
                         " does not split into " + std::to_string(p) +
                         " blocks of size " + std::to_string(n));
  }
}
}  // namespace detail

// P x P matrix of traces of the inner N x N blocks.
inline Eigen::MatrixXd block_trace_p(const Eigen::MatrixXd& m, Index n, Index p) {
  detail::check_block_dims(m, n, p, "block_trace_p");
  Eigen::MatrixXd out(p, p);
  for (Index a = 0; a < p; ++a) {
    for (Index b = 0; b < p; ++b) {
      out(a, b) = m.block(a * n, b * n, n, n).trace();
    }
  }
  return out;
}

// N x N sum of the P diagonal-position slices: out(i,j) = sum_a M(a*N+i, a*N+j).
inline Eigen::MatrixXd block_trace_n(const Eigen::MatrixXd& m, Index n, Index p) {
  detail::check_block_dims(m, n, p, "block_trace_n");
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
  for (Index a = 0; a < p; ++a) {
    out += m.block(a * n, a * n, n, n);
  }
  return out;
}

namespace detail {

// Symmetric square root / inverse square root from one spectral
// decomposition, with a relative eigenvalue floor guarding invertibility.
struct SymPowers {
  Eigen::MatrixXd half;      // A^{1/2}
  Eigen::MatrixXd inv_half;  // A^{-1/2}
};

inline SpectralDecomp checked_decomp(const SpdMatrix& a, const char* name,
                                     double floor_rel = 1e-12) {
  SpectralDecomp e = spectral_decomp(a);
  const double lam_max = e.values(0);
  const double lam_min = e.values(e.dim() - 1);
  if (!(lam_max > 0.0) || lam_min <= floor_rel * lam_max) {
    throw NumericalError(std::string(name) +
                         ": near-singular (min eigenvalue " +
                         std::to_string(lam_min) + ", max " +
                         std::to_string(lam_max) + ")");
  }
  return e;
}

inline SymPowers sym_powers(const SpdMatrix& a, const char* name) {
  SpectralDecomp e = checked_decomp(a, name);
  const Eigen::VectorXd root = e.values.array().sqrt();
  SymPowers out;
  out.half = e.vectors * root.asDiagonal() * e.vectors.transpose();
  out.inv_half =
      e.vectors * root.cwiseInverse().asDiagonal() * e.vectors.transpose();
  return out;
}

}  // namespace detail

// A^exponent for exponent in {1/2, -1/2, -1} via spectral decomposition.
inline SpdMatrix spd_power(const SpdMatrix& a, double exponent,
                           double floor_rel = 1e-12) {
  if (exponent != 0.5 && exponent != -0.5 && exponent != -1.0) {
    throw ValidationError("spd_power: exponent must be 1/2, -1/2 or -1");
  }
  SpectralDecomp e = detail::checked_decomp(a, "spd_power", floor_rel);
  const Eigen::VectorXd powered = e.values.array().pow(exponent);
  return SpdMatrix::symmetrized(e.vectors * powered.asDiagonal() *
                                e.vectors.transpose());
}

// block_trace_p((A (x) I + B (x) X)^{-1}) without forming the NP x NP inverse:
// with Q L Q^T = A^{-1/2} B A^{-1/2} and X = U Lx U^T,
//   result = A^{-1/2} Q diag(g) Q^T A^{-1/2},  g_a = sum_i 1/(1 + L_a Lx_i).
inline Eigen::MatrixXd kron_sum_inv_block_trace(const SpdMatrix& a,
                                                const SpdMatrix& b,
                                                const SpectralDecomp& x) {
  if (a.dim() != b.dim()) {
    throw DimensionError("kron_sum_inv_block_trace: A and B sizes differ");
  }
  if (x.dim() > 0 && x.values(x.dim() - 1) <= 0.0) {
    throw NumericalError("kron_sum_inv_block_trace: X has non-positive eigenvalues");
  }
  const auto pow_a = detail::sym_powers(a, "kron_sum_inv_block_trace: A");
  const SpdMatrix phi =
      SpdMatrix::symmetrized(pow_a.inv_half * b.mat() * pow_a.inv_half);
  const SpectralDecomp eig = spectral_decomp(phi);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(a.dim());
  for (Index c = 0; c < a.dim(); ++c) {
    for (Index i = 0; i < x.dim(); ++i) {
      g(c) += 1.0 / (1.0 + eig.values(c) * x.values(i));
    }
  }
  const Eigen::MatrixXd t = pow_a.inv_half * eig.vectors;
  return t * g.asDiagonal() * t.transpose();
}

// block_trace_p(vec(U) vec(V)^T (I (x) X)) = U^T X^T V.
inline Eigen::MatrixXd outer_block_trace(const DataMatrix& u,
                                         const DataMatrix& v,
                                         const Eigen::MatrixXd& x) {
  if (u.rows() != v.rows() || u.cols() != v.cols() || x.rows() != x.cols() ||
      x.rows() != u.rows()) {
    throw DimensionError("outer_block_trace: shape mismatch");
  }
  return u.transpose() * x.transpose() * v;
}

// Block traces of the quadratic forms T y y^T T^T with
// T = [I + (A^{-1}B) (x) X]^{-1}:
//   first  = block_trace_p(T y y^T T^T (I (x) X))
//   second = block_trace_p(T y y^T T^T)
// computed through S = F .* (U^T Y A^{1/2} Q), F_{ia} = 1/(1 + L_a Lx_i),
// at O(NP^2 + P^3) cost.
inline std::pair<Eigen::MatrixXd, Eigen::MatrixXd> quadform_block_traces(
    const SpdMatrix& a, const SpdMatrix& b, const SpectralDecomp& x,
    const DataMatrix& y) {
  if (a.dim() != b.dim() || y.cols() != a.dim() || y.rows() != x.dim()) {
    throw DimensionError("quadform_block_traces: shape mismatch");
  }
  const auto pow_a = detail::sym_powers(a, "quadform_block_traces: A");
  const SpdMatrix phi =
      SpdMatrix::symmetrized(pow_a.inv_half * b.mat() * pow_a.inv_half);
  const SpectralDecomp eig = spectral_decomp(phi);

  const Eigen::MatrixXd rot = (x.vectors.transpose() * y) *
                              (pow_a.half * eig.vectors);  // U^T Y A^{1/2} Q
  Eigen::MatrixXd f(y.rows(), y.cols());
  for (Index i = 0; i < y.rows(); ++i) {
    for (Index c = 0; c < y.cols(); ++c) {
      f(i, c) = 1.0 / (1.0 + eig.values(c) * x.values(i));
    }
  }
  const Eigen::MatrixXd s = f.cwiseProduct(rot);
  const Eigen::MatrixXd g = pow_a.inv_half * eig.vectors;  // A^{-1/2} Q
  const Eigen::MatrixXd first =
      g * (s.transpose() * x.values.asDiagonal() * s) * g.transpose();
  const Eigen::MatrixXd second = g * (s.transpose() * s) * g.transpose();
  return {first, second};
}

}  // namespace g3m
