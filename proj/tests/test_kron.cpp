#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "test_support.hpp"

using namespace g3m;
using testsup::rel_err;

TEST_CASE("vec stacks columns") {
  Eigen::MatrixXd x(2, 2);
  x << 1, 2, 3, 4;
  Eigen::VectorXd v = vec(x);
  Eigen::VectorXd want(4);
  want << 1, 3, 2, 4;
  CHECK(v == want);

  CHECK(vec(Eigen::MatrixXd::Zero(3, 4)).isZero(0.0));

  Rng rng(11);
  const Eigen::MatrixXd y = testsup::random_matrix(5, 3, rng);
  CHECK(unvec(vec(y), 5, 3) == y);
}

TEST_CASE("unvec inverts vec") {
  Eigen::VectorXd v(4);
  v << 1, 3, 2, 4;
  Eigen::MatrixXd want(2, 2);
  want << 1, 2, 3, 4;
  CHECK(unvec(v, 2, 2) == want);

  Rng rng(12);
  Eigen::VectorXd u = testsup::random_matrix(12, 1, rng);
  CHECK(vec(unvec(u, 4, 3)) == u);

  CHECK(unvec(Eigen::VectorXd::Ones(5), 1, 5) ==
        Eigen::MatrixXd::Ones(1, 5));

  CHECK_THROWS_AS(unvec(v, 3, 2), DimensionError);
}

TEST_CASE("kron basics") {
  CHECK(kron(Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd::Identity(3, 3))
            .isApprox(Eigen::MatrixXd::Identity(6, 6)));

  Rng rng(13);
  const Eigen::MatrixXd b = testsup::random_matrix(3, 2, rng);
  Eigen::MatrixXd two(1, 1);
  two << 2;
  CHECK(kron(two, b).isApprox(2 * b));

  // mixed-product identity on random 2x2 factors
  const Eigen::MatrixXd a = testsup::random_matrix(2, 2, rng);
  const Eigen::MatrixXd c = testsup::random_matrix(2, 2, rng);
  const Eigen::MatrixXd d = testsup::random_matrix(2, 2, rng);
  const Eigen::MatrixXd b2 = testsup::random_matrix(2, 2, rng);
  CHECK(rel_err(kron(a, b2) * kron(c, d), kron(a * c, b2 * d)) < 1e-12);
}

TEST_CASE("block_trace_p basics") {
  const Index n = 2, p = 3;
  CHECK(block_trace_p(Eigen::MatrixXd::Identity(n * p, n * p), n, p)
            .isApprox(n * Eigen::MatrixXd::Identity(p, p)));

  Rng rng(14);
  const Eigen::MatrixXd x = testsup::random_matrix(3, 3, rng);
  CHECK(rel_err(block_trace_p(kron(x, Eigen::MatrixXd::Identity(2, 2)), 2, 3),
                2 * x) < 1e-12);

  CHECK_THROWS_AS(block_trace_p(Eigen::MatrixXd::Identity(6, 6), 4, 2),
                  DimensionError);
}

TEST_CASE("block_trace_n basics") {
  const Index n = 3, p = 2;
  CHECK(block_trace_n(Eigen::MatrixXd::Identity(n * p, n * p), n, p)
            .isApprox(p * Eigen::MatrixXd::Identity(n, n)));

  // tr((I (x) W)(I (x) X)) = P tr(W X)
  Rng rng(15);
  const Eigen::MatrixXd w = testsup::random_matrix(3, 3, rng);
  const Eigen::MatrixXd x = testsup::random_matrix(3, 3, rng);
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(2, 2);
  const double lhs = (kron(eye, w) * kron(eye, x)).trace();
  CHECK(rel_err(lhs, 2 * (w * x).trace()) < 1e-12);

  // identity via block_trace_n on a random matrix
  const Eigen::MatrixXd m = testsup::random_matrix(6, 6, rng);
  const Eigen::MatrixXd x2 = testsup::random_matrix(2, 2, rng);
  CHECK(rel_err((kron(Eigen::MatrixXd::Identity(3, 3), x2) * m).trace(),
                (x2 * block_trace_n(m, 2, 3)).trace()) < 1e-10);
}

TEST_CASE("partial-trace contraction identities (both factors)") {
  Rng rng(16);
  for (int trial = 0; trial < 200; ++trial) {
    const Index n = 2 + static_cast<Index>(rng.next_below(5));  // 2..6
    const Index p = 2 + static_cast<Index>(rng.next_below(5));
    const Eigen::MatrixXd m = testsup::random_matrix(n * p, n * p, rng);
    const Eigen::MatrixXd xp = testsup::random_matrix(p, p, rng);
    const Eigen::MatrixXd xn = testsup::random_matrix(n, n, rng);
    const double lhs_p =
        (kron(xp, Eigen::MatrixXd::Identity(n, n)) * m).trace();
    const double rhs_p = (xp * block_trace_p(m, n, p)).trace();
    CHECK(rel_err(lhs_p, rhs_p) < 1e-10);
    const double lhs_n =
        (kron(Eigen::MatrixXd::Identity(p, p), xn) * m).trace();
    const double rhs_n = (xn * block_trace_n(m, n, p)).trace();
    CHECK(rel_err(lhs_n, rhs_n) < 1e-10);
  }
}

TEST_CASE("orthogonal conjugation passes through the partial trace") {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const Index n = 2 + static_cast<Index>(rng.next_below(4));
    const Index p = 2 + static_cast<Index>(rng.next_below(4));
    const Eigen::MatrixXd q = testsup::random_orthogonal(p, rng);
    const Eigen::MatrixXd u = testsup::random_orthogonal(n, rng);
    const Eigen::MatrixXd w = testsup::random_matrix(n * p, n * p, rng);
    const Eigen::MatrixXd lhs =
        block_trace_p(kron(q, u) * w * kron(q, u).transpose(), n, p);
    const Eigen::MatrixXd rhs = q * block_trace_p(w, n, p) * q.transpose();
    CHECK(rel_err(lhs, rhs) < 1e-10);
  }
}

TEST_CASE("partial trace: one-sided commutation and non-cyclicity") {
  Rng rng(18);
  const Index n = 3, p = 4;
  const Eigen::MatrixXd m = testsup::random_matrix(n * p, n * p, rng);
  const Eigen::MatrixXd x = testsup::random_matrix(n, n, rng);
  const Eigen::MatrixXd a = testsup::random_matrix(p, p, rng);
  const Eigen::MatrixXd eye_n = Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd eye_p = Eigen::MatrixXd::Identity(p, p);

  // inner factors commute under tr_P ...
  CHECK(rel_err(block_trace_p(kron(eye_p, x) * m, n, p),
                block_trace_p(m * kron(eye_p, x), n, p)) < 1e-10);
  // ... outer factors push through on their own side
  CHECK(rel_err(block_trace_p(kron(a, eye_n) * m, n, p),
                a * block_trace_p(m, n, p)) < 1e-10);
  CHECK(rel_err(block_trace_p(m * kron(a, eye_n), n, p),
                block_trace_p(m, n, p) * a) < 1e-10);

  // but the partial trace is not cyclic for general factors
  const Eigen::MatrixXd w = testsup::random_matrix(n * p, n * p, rng);
  const Eigen::MatrixXd mw = block_trace_p(m * w, n, p);
  const Eigen::MatrixXd wm = block_trace_p(w * m, n, p);
  CHECK((mw - wm).cwiseAbs().maxCoeff() > 1e-3);
}

TEST_CASE("spectral decomposition invariants") {
  Rng rng(24);
  for (int trial = 0; trial < 20; ++trial) {
    const Index n = 2 + static_cast<Index>(rng.next_below(7));
    const SpdMatrix a = testsup::random_spd(n, rng, 0.1, 5.0);
    const SpectralDecomp e = spectral_decomp(a);
    CHECK((e.vectors.transpose() * e.vectors -
           Eigen::MatrixXd::Identity(n, n))
              .cwiseAbs()
              .maxCoeff() < 1e-10);
    CHECK(rel_err(e.reconstruct(), a.mat()) < 1e-10);
    for (Index i = 1; i < n; ++i) {
      CHECK(e.values(i) <= e.values(i - 1));  // sorted descending
    }
  }
}

TEST_CASE("spd_power") {
  for (double e : {0.5, -0.5, -1.0}) {
    CHECK(spd_power(SpdMatrix::identity(3), e)
              .mat()
              .isApprox(Eigen::MatrixXd::Identity(3, 3)));
  }

  Eigen::MatrixXd d(2, 2);
  d << 4, 0, 0, 9;
  Eigen::MatrixXd want(2, 2);
  want << 2, 0, 0, 3;
  CHECK(rel_err(spd_power(SpdMatrix(d), 0.5).mat(), want) < 1e-12);

  Rng rng(19);
  const SpdMatrix a = testsup::random_spd(5, rng);
  const Eigen::MatrixXd half = spd_power(a, 0.5).mat();
  const Eigen::MatrixXd inv_half = spd_power(a, -0.5).mat();
  const Eigen::MatrixXd inv = spd_power(a, -1.0).mat();
  CHECK(rel_err(half * half, a.mat()) < 1e-9);
  CHECK(rel_err(inv_half * a.mat() * inv_half,
                Eigen::MatrixXd::Identity(5, 5)) < 1e-9);
  CHECK(rel_err(inv * a.mat(), Eigen::MatrixXd::Identity(5, 5)) < 1e-9);

  CHECK_THROWS_AS(spd_power(a, 2.0), ValidationError);

  // eigenvalue below the relative floor
  Eigen::MatrixXd sing(2, 2);
  sing << 1.0, 0.0, 0.0, 1e-16;
  CHECK_THROWS_AS(spd_power(SpdMatrix(sing), -1.0), NumericalError);
}

TEST_CASE("partial trace of a Kronecker-sum inverse without the big matrix") {
  // A = B = I_P, X = I_N: the inverse is I/2 and the block trace N/2 I_P
  {
    const Index n = 4, p = 3;
    const SpectralDecomp x_eig = spectral_decomp(SpdMatrix::identity(n));
    const Eigen::MatrixXd got = kron_sum_inv_block_trace(
        SpdMatrix::identity(p), SpdMatrix::identity(p), x_eig);
    CHECK(rel_err(got, (n / 2.0) * Eigen::MatrixXd::Identity(p, p)) < 1e-12);
  }
  // B -> 0 limit approaches N * A^{-1} = N I_P
  {
    const Index n = 5, p = 3;
    const SpectralDecomp x_eig = spectral_decomp(SpdMatrix::identity(n));
    const Eigen::MatrixXd got = kron_sum_inv_block_trace(
        SpdMatrix::identity(p),
        SpdMatrix(1e-9 * Eigen::MatrixXd::Identity(p, p)), x_eig);
    CHECK(rel_err(got, static_cast<double>(n) *
                           Eigen::MatrixXd::Identity(p, p)) < 1e-6);
  }
  // randomized sweep against the dense NP x NP oracle
  Rng rng(20);
  for (Index n = 2; n <= 8; ++n) {
    for (Index p = 2; p <= 6; ++p) {
      const SpdMatrix a = testsup::random_spd(p, rng);
      const SpdMatrix b = testsup::random_spd(p, rng);
      const SpdMatrix x = testsup::random_spd(n, rng);
      const SpectralDecomp x_eig = spectral_decomp(x);
      const Eigen::MatrixXd dense =
          (kron(a.mat(), Eigen::MatrixXd::Identity(n, n)) +
           kron(b.mat(), x.mat()))
              .inverse();
      const Eigen::MatrixXd want = block_trace_p(dense, n, p);
      const Eigen::MatrixXd got = kron_sum_inv_block_trace(a, b, x_eig);
      CHECK(rel_err(got, want) < 1e-8);
    }
  }
}

TEST_CASE("block traces of outer products") {
  Rng rng(21);
  const Eigen::MatrixXd u = testsup::random_matrix(4, 3, rng);
  CHECK(rel_err(outer_block_trace(u, u, Eigen::MatrixXd::Identity(4, 4)),
                u.transpose() * u) < 1e-12);

  const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(4, 3);
  const Eigen::MatrixXd x4 = testsup::random_matrix(4, 4, rng);
  CHECK(outer_block_trace(zero, u, x4).isZero(0.0));

  CHECK_THROWS_AS(
      outer_block_trace(u, u, Eigen::MatrixXd::Identity(3, 3)),
      DimensionError);

  for (Index n = 2; n <= 8; ++n) {
    for (Index p = 2; p <= 6; ++p) {
      const Eigen::MatrixXd uu = testsup::random_matrix(n, p, rng);
      const Eigen::MatrixXd vv = testsup::random_matrix(n, p, rng);
      const Eigen::MatrixXd x = testsup::random_matrix(n, n, rng);
      const Eigen::MatrixXd dense = block_trace_p(
          vec(uu) * vec(vv).transpose() *
              kron(Eigen::MatrixXd::Identity(p, p), x),
          n, p);
      CHECK(rel_err(outer_block_trace(uu, vv, x), dense) < 1e-10);
    }
  }
}

TEST_CASE("block traces of resolvent quadratic forms") {
  // A = B = I_P, X = I_N: T = I/2 so both outputs are Y^T Y / 4
  {
    Rng rng(22);
    const Index n = 4, p = 3;
    const Eigen::MatrixXd y = testsup::random_matrix(n, p, rng);
    const SpectralDecomp x_eig = spectral_decomp(SpdMatrix::identity(n));
    const auto [with_x, plain] = quadform_block_traces(
        SpdMatrix::identity(p), SpdMatrix::identity(p), x_eig, y);
    CHECK(rel_err(with_x, y.transpose() * y / 4.0) < 1e-12);
    CHECK(rel_err(plain, y.transpose() * y / 4.0) < 1e-12);

    const auto [zx, zp] = quadform_block_traces(
        SpdMatrix::identity(p), SpdMatrix::identity(p), x_eig,
        Eigen::MatrixXd::Zero(n, p));
    CHECK(zx.isZero(0.0));
    CHECK(zp.isZero(0.0));
  }
  // randomized sweep against the dense construction of T
  Rng rng(23);
  for (Index n = 2; n <= 8; ++n) {
    for (Index p = 2; p <= 6; ++p) {
      const SpdMatrix a = testsup::random_spd(p, rng);
      const SpdMatrix b = testsup::random_spd(p, rng);
      const SpdMatrix x = testsup::random_spd(n, rng);
      const Eigen::MatrixXd y = testsup::random_matrix(n, p, rng);
      const SpectralDecomp x_eig = spectral_decomp(x);

      const Eigen::MatrixXd t =
          (Eigen::MatrixXd::Identity(n * p, n * p) +
           kron(a.mat().inverse() * b.mat(), x.mat()))
              .inverse();
      const Eigen::VectorXd ty = t * vec(y);
      const Eigen::MatrixXd outer = ty * ty.transpose();
      const Eigen::MatrixXd want_x = block_trace_p(
          outer * kron(Eigen::MatrixXd::Identity(p, p), x.mat()), n, p);
      const Eigen::MatrixXd want_plain = block_trace_p(outer, n, p);

      const auto [got_x, got_plain] = quadform_block_traces(a, b, x_eig, y);
      CHECK(rel_err(got_x, want_x) < 1e-8);
      CHECK(rel_err(got_plain, want_plain) < 1e-8);
    }
  }
}
