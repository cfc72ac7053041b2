#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "glasso_reference.hpp"
#include "test_support.hpp"

using namespace g3m;
using testsup::rel_err;

TEST_CASE("dense D update is the inverse moment") {
  CHECK(update_dense_d(SpdMatrix::identity(4))
            .mat()
            .isApprox(Eigen::MatrixXd::Identity(4, 4)));

  Eigen::MatrixXd om(2, 2);
  om << 2, 0, 0, 4;
  Eigen::MatrixXd want(2, 2);
  want << 0.5, 0, 0, 0.25;
  CHECK(rel_err(update_dense_d(SpdMatrix(om)).mat(), want) < 1e-12);

  Rng rng(41);
  const SpdMatrix omega = testsup::random_spd(5, rng);
  const SpdMatrix d = update_dense_d(omega);
  const Eigen::MatrixXd grad = omega.mat() - d.mat().inverse();
  CHECK(grad.cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("iid tau update matches a 1-D numerical minimizer") {
  CHECK(update_iid_tau(SpdMatrix::identity(4)) == doctest::Approx(1.0));
  CHECK(update_iid_tau(SpdMatrix(2.0 * Eigen::MatrixXd::Identity(5, 5))) ==
        doctest::Approx(0.5));

  Rng rng(42);
  for (int trial = 0; trial < 50; ++trial) {
    const Index p = 2 + static_cast<Index>(rng.next_below(8));
    const SpdMatrix omega = testsup::random_spd(p, rng, 0.2, 5.0);
    const double tau = update_iid_tau(omega);
    const double tr = omega.mat().trace();
    const auto objective = [&](double t) {
      return -static_cast<double>(p) * std::log(t) + t * tr;
    };
    const double tau_ref = testsup::golden_minimize(objective, 1e-6, 1e3);
    CHECK(std::abs(tau - tau_ref) < 1e-6);
  }

  CHECK_THROWS_AS(
      update_iid_tau(SpdMatrix(Eigen::MatrixXd::Zero(3, 3))),
      NumericalError);
}

TEST_CASE("glasso with no penalty recovers the inverse") {
  GlassoSettings cfg;
  cfg.lambda = 0.0;
  cfg.kkt_tol = 1e-8;  // the unpenalized MLE comparison needs a tight solve
  CHECK(glasso(SpdMatrix::identity(3), cfg)
            .mat()
            .isApprox(Eigen::MatrixXd::Identity(3, 3), 1e-8));

  Rng rng(43);
  for (int trial = 0; trial < 10; ++trial) {
    const Index p = 2 + static_cast<Index>(rng.next_below(5));
    const SpdMatrix s = testsup::random_spd(p, rng);
    GlassoDiagnostics diag;
    const SpdMatrix c = glasso(s, cfg, nullptr, &diag);
    CHECK(rel_err(c.mat(), s.mat().inverse()) < 1e-6);
    CHECK(diag.kkt_residual <= cfg.kkt_tol);
  }
}

TEST_CASE("large penalty forces the diagonal closed form") {
  Rng rng(44);
  const SpdMatrix s = testsup::random_spd(4, rng);
  double max_off = 0.0;
  for (Index i = 0; i < 4; ++i) {
    for (Index j = i + 1; j < 4; ++j) {
      max_off = std::max(max_off, std::abs(s(i, j)));
    }
  }
  GlassoSettings cfg;
  cfg.lambda = max_off * 1.05;

  Eigen::MatrixXd want = Eigen::MatrixXd::Zero(4, 4);
  for (Index i = 0; i < 4; ++i) want(i, i) = 1.0 / (s(i, i) + cfg.lambda);

  // the closed form satisfies the stationarity conditions on its own
  CHECK(glasso_kkt_residual(SpdMatrix(want), s, cfg.lambda) <= 1e-8);

  GlassoDiagnostics diag;
  const SpdMatrix c = glasso(s, cfg, nullptr, &diag);
  CHECK(rel_err(c.mat(), want) < 1e-10);
  for (Index i = 0; i < 4; ++i) {
    for (Index j = i + 1; j < 4; ++j) {
      CHECK(c(i, j) == 0.0);  // exact zeros, not merely small
    }
  }
}

TEST_CASE("kkt residual: exact solutions and perturbation growth") {
  Rng rng(45);
  const SpdMatrix s = testsup::random_spd(4, rng);
  const SpdMatrix c_star = SpdMatrix::symmetrized(s.mat().inverse());
  CHECK(glasso_kkt_residual(c_star, s, 0.0) < 1e-10);

  // residual grows monotonically along a fixed perturbation direction
  const Eigen::MatrixXd e =
      SpdMatrix::symmetrized(testsup::random_matrix(4, 4, rng)).mat();
  double prev = glasso_kkt_residual(c_star, s, 0.0);
  for (double eps : {1e-4, 1e-3, 1e-2}) {
    const double r =
        glasso_kkt_residual(SpdMatrix::symmetrized(c_star.mat() + eps * e), s,
                            0.0);
    CHECK(r > prev);
    prev = r;
  }
}

TEST_CASE("every solve certifies, descends and stays PD") {
  Rng rng(46);
  GlassoSettings cfg;
  for (int trial = 0; trial < 15; ++trial) {
    const Index p = 3 + static_cast<Index>(rng.next_below(8));
    const SpdMatrix s = testsup::random_spd(p, rng, 0.3, 3.0);
    cfg.lambda = 0.02 + 0.3 * rng.next_double();

    GlassoDiagnostics diag;
    const SpdMatrix c = glasso(s, cfg, nullptr, &diag);

    CHECK(diag.kkt_residual <= cfg.kkt_tol);
    CHECK(glasso_kkt_residual(c, s, cfg.lambda) <= cfg.kkt_tol);

    // per-sweep descent of the tracked objective
    for (std::size_t k = 1; k < diag.objective_trace.size(); ++k) {
      CHECK(diag.objective_trace[k] <= diag.objective_trace[k - 1] + 1e-10);
    }

    CHECK((c.mat() - c.mat().transpose()).cwiseAbs().maxCoeff() < 1e-10);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c.mat());
    CHECK(es.eigenvalues()(0) > 0.0);
  }
}

TEST_CASE("agrees with the projected-subgradient reference at P = 3") {
  Rng rng(47);
  GlassoSettings cfg;
  for (int trial = 0; trial < 20; ++trial) {
    const SpdMatrix s = testsup::random_spd(3, rng, 0.5, 2.0);
    cfg.lambda = 0.05 + 0.4 * rng.next_double();
    const SpdMatrix c = glasso(s, cfg);
    const Eigen::MatrixXd ref =
        testsup::glasso_subgradient_reference(s.mat(), cfg.lambda);
    CHECK((c.mat() - ref).norm() < 1e-4);
  }
}

TEST_CASE("sparse D update") {
  Rng rng(48);
  const SpdMatrix omega = testsup::random_spd(5, rng);

  // gamma = 0 reduces to the dense update (tight solve for the comparison)
  GlassoSettings cfg;
  GlassoSettings tight = cfg;
  tight.kkt_tol = 1e-8;
  const SpdMatrix d0 = update_sparse_d(omega, 0.0, tight);
  CHECK(rel_err(d0.mat(), update_dense_d(omega).mat()) < 1e-6);

  // large gamma forces a diagonal D (KKT-certified)
  double max_off = 0.0;
  for (Index i = 0; i < 5; ++i) {
    for (Index j = i + 1; j < 5; ++j) {
      max_off = std::max(max_off, std::abs(omega(i, j)));
    }
  }
  const SpdMatrix d_sparse = update_sparse_d(omega, 2.0 * max_off, cfg);
  for (Index i = 0; i < 5; ++i) {
    for (Index j = i + 1; j < 5; ++j) {
      CHECK(d_sparse(i, j) == 0.0);
    }
  }
  CHECK(glasso_kkt_residual(d_sparse, omega, 2.0 * max_off) <= cfg.kkt_tol);

  GlassoDiagnostics diag;
  update_sparse_d(omega, 0.1, cfg, nullptr, &diag);
  CHECK(diag.kkt_residual <= 1e-4);

  CHECK_THROWS_AS(update_sparse_d(omega, -0.1, cfg), ValidationError);
}

TEST_CASE("edge counts along a warm-started penalty path (logged)") {
  Rng rng(49);
  const SpdMatrix s = testsup::random_spd(8, rng, 0.3, 3.0);
  const std::vector<double> grid = lambda_grid(-4.0, 0.5, 12);

  GlassoSettings cfg;
  std::optional<SpdMatrix> warm;
  int violations = 0;
  std::size_t prev_edges = 0;
  bool first = true;
  for (auto it = grid.rbegin(); it != grid.rend(); ++it) {
    cfg.lambda = *it;
    const SpdMatrix c = glasso(s, cfg, warm ? &*warm : nullptr);
    warm = c;
    const std::size_t edges = edge_set(c, cfg.zero_tol).edges.size();
    if (!first && edges < prev_edges) ++violations;  // lambda decreasing here
    prev_edges = edges;
    first = false;
  }
  // exact monotonicity in lambda is not guaranteed; log instead of assert
  if (violations > 0) {
    MESSAGE("edge-count monotonicity violations along the path: "
            << violations);
  }
}

TEST_CASE("input validation") {
  GlassoSettings cfg;
  cfg.lambda = -1.0;
  CHECK_THROWS_AS(glasso(SpdMatrix::identity(2), cfg), ValidationError);

  cfg.lambda = 0.1;
  Eigen::MatrixXd bad = Eigen::MatrixXd::Identity(2, 2);
  bad(1, 1) = 0.0;
  CHECK_THROWS_AS(glasso(SpdMatrix(bad), cfg), ValidationError);
}
