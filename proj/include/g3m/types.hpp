// Core value types and error taxonomy shared by every module.
//
// Conventions used throughout the library:
//   - Y is the N x P data matrix (rows = samples, columns = traits).
//   - vec() stacks columns, so an NP vector/matrix is ordered with the
//     trait index outer and the sample index inner (P-outer, N-inner).
//   - precision matrices are P x P (traits) or N x N (samples), always
//     symmetric positive definite.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>

namespace g3m {

using DataMatrix = Eigen::MatrixXd;
using Eigen::Index;

// ---------------------------------------------------------------------------
// Errors. The CLI maps these onto exit codes: validation 1, numerical 2, io 3.
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ValidationError : Error {
  using Error::Error;
};

// Shape/size mismatches are a validation failure with their own type so
// kernels can be precise about what went wrong.
struct DimensionError : ValidationError {
  using ValidationError::ValidationError;
};

struct NumericalError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

inline void check_finite(const Eigen::MatrixXd& m, const char* name) {
  if (!m.allFinite()) {
    throw ValidationError(std::string(name) + ": non-finite entries");
  }
}

// ---------------------------------------------------------------------------
// SpdMatrix: dense symmetric matrix intended to be positive definite.
// Construction validates shape, finiteness and symmetry (1e-12 relative);
// definiteness is enforced by the operations that need it (Cholesky or
// spectral), not eagerly.
// ---------------------------------------------------------------------------

class SpdMatrix {
 public:
  SpdMatrix() = default;

  explicit SpdMatrix(Eigen::MatrixXd m) : m_(std::move(m)) {
    if (m_.rows() != m_.cols()) {
      throw DimensionError("SpdMatrix: matrix must be square, got " +
                           std::to_string(m_.rows()) + "x" +
                           std::to_string(m_.cols()));
    }
    check_finite(m_, "SpdMatrix");
    const double scale = m_.cwiseAbs().maxCoeff();
    const double asym = (m_ - m_.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-12 * std::max(1.0, scale)) {
      throw ValidationError("SpdMatrix: matrix not symmetric (max asymmetry " +
                            std::to_string(asym) + ")");
    }
    // kill the representational asymmetry so transposes are exact no-ops
    m_ = ((m_ + m_.transpose()) / 2.0).eval();
  }

  // Accepts anything square and averages away asymmetric roundoff first.
  static SpdMatrix symmetrized(const Eigen::MatrixXd& m) {
    if (m.rows() != m.cols()) {
      throw DimensionError("SpdMatrix::symmetrized: matrix must be square");
    }
    return SpdMatrix(((m + m.transpose()) / 2.0).eval());
  }

  static SpdMatrix identity(Index dim) {
    return SpdMatrix(Eigen::MatrixXd::Identity(dim, dim));
  }

  Index dim() const { return m_.rows(); }
  const Eigen::MatrixXd& mat() const { return m_; }
  double operator()(Index i, Index j) const { return m_(i, j); }

 private:
  Eigen::MatrixXd m_;
};

// ---------------------------------------------------------------------------
// SpectralDecomp: eigenvectors (columns, orthogonal) and eigenvalues of a
// symmetric matrix, sorted descending.
// ---------------------------------------------------------------------------

struct SpectralDecomp {
  Eigen::MatrixXd vectors;
  Eigen::VectorXd values;

  Index dim() const { return values.size(); }

  Eigen::MatrixXd reconstruct() const {
    return vectors * values.asDiagonal() * vectors.transpose();
  }
};

inline SpectralDecomp spectral_decomp(const SpdMatrix& a) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a.mat());
  if (es.info() != Eigen::Success) {
    throw NumericalError("spectral_decomp: eigensolver failed");
  }
  // Eigen returns ascending order; flip to descending.
  SpectralDecomp out;
  out.vectors = es.eigenvectors().rowwise().reverse();
  out.values = es.eigenvalues().reverse();
  return out;
}

// Cholesky-based helpers. Both throw NumericalError when the matrix is not
// numerically positive definite.

inline Eigen::LLT<Eigen::MatrixXd> cholesky(const Eigen::MatrixXd& m,
                                            const char* name) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) {
    throw NumericalError(std::string(name) + ": not positive definite");
  }
  return llt;
}

inline Eigen::MatrixXd spd_inverse(const Eigen::MatrixXd& m, const char* name) {
  auto llt = cholesky(m, name);
  return llt.solve(Eigen::MatrixXd::Identity(m.rows(), m.cols()));
}

inline double spd_log_det(const Eigen::MatrixXd& m, const char* name) {
  auto llt = cholesky(m, name);
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

}  // namespace g3m
