#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "test_support.hpp"

using namespace g3m;
using testsup::rel_err;

namespace {

Dataset small_dataset(std::uint64_t seed, int n = 50, int p = 5,
                      GeneratorKind d_kind = GeneratorKind::wishart) {
  SimConfig cfg;
  cfg.n = n;
  cfg.p = p;
  cfg.family_size = 5;
  cfg.c_gen.kind = GeneratorKind::random;
  cfg.c_gen.density = 0.2;
  cfg.d_gen.kind = d_kind;
  cfg.snr = 0.2;
  cfg.seed = seed;
  return generate_dataset(cfg, 0);
}

}  // namespace

TEST_CASE("penalized objective is nondecreasing for all noise models") {
  for (std::uint64_t seed : {1, 2, 3, 4, 5, 6, 7}) {
    const Dataset ds = small_dataset(seed);
    for (NoiseVariant variant :
         {NoiseVariant::dense, NoiseVariant::iid, NoiseVariant::sparse}) {
      FitConfig cfg;
      cfg.lambda = 0.1;
      cfg.noise.variant = variant;
      cfg.noise.gamma = variant == NoiseVariant::sparse ? 0.05 : 0.0;
      const FitResult fit = fit_g3m(ds.y, ds.r, cfg);  // throws on decrease
      REQUIRE(fit.objective_trace.size() >= 2);
      for (std::size_t k = 1; k < fit.objective_trace.size(); ++k) {
        CHECK(fit.objective_trace[k] >= fit.objective_trace[k - 1] - 1e-7);
      }
      if (variant == NoiseVariant::iid) CHECK(fit.tau.has_value());
    }
  }
}

TEST_CASE("unpenalized fit reaches a fixed point of the EM map") {
  Rng rng(51);
  const Index n = 20, p = 3;
  // generated at C = D = I, R = I
  const Eigen::MatrixXd y = testsup::random_matrix(n, p, rng) * std::sqrt(2.0);
  FitConfig cfg;
  cfg.lambda = 0.0;
  cfg.rel_tol = 1e-12;
  cfg.max_iters = 2000;
  cfg.glasso.kkt_tol = 1e-9;
  const FitResult fit = fit_g3m(y, SpdMatrix::identity(n), cfg);
  CHECK(fit.converged);
  CHECK_FALSE(fit.warnings.empty());  // R = I: identifiability warning

  // one more EM step barely moves the parameters
  auto prep = prepare_fit(y, SpdMatrix::identity(n), cfg.center_columns);
  ModelParams params(fit.C_hat, fit.D_hat, prep.r_eig);
  const EStepResult est = posterior_moments(prep.data, params, {false});
  GlassoSettings gl = cfg.glasso;
  gl.lambda = 0.0;
  const SpdMatrix c_next = glasso(est.omegas.omega2, gl, &params.C);
  const SpdMatrix d_next = update_dense_d(est.omegas.omega1);
  CHECK((c_next.mat() - fit.C_hat.mat()).norm() / fit.C_hat.mat().norm() <
        1e-6);
  CHECK((d_next.mat() - fit.D_hat.mat()).norm() / fit.D_hat.mat().norm() <
        1e-6);
}

TEST_CASE("C and D updates commute within one iteration") {
  const Dataset ds = small_dataset(7);
  auto prep = prepare_fit(ds.y, ds.r, true);
  ModelParams params(SpdMatrix::identity(5), SpdMatrix::identity(5),
                     prep.r_eig);
  const EStepResult est = posterior_moments(prep.data, params, {false});

  GlassoSettings gl;
  gl.lambda = 0.1;
  // C first, then D
  const SpdMatrix c_a = glasso(est.omegas.omega2, gl, &params.C);
  const SpdMatrix d_a = update_dense_d(est.omegas.omega1);
  // D first, then C
  const SpdMatrix d_b = update_dense_d(est.omegas.omega1);
  const SpdMatrix c_b = glasso(est.omegas.omega2, gl, &params.C);
  CHECK((c_a.mat() - c_b.mat()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((d_a.mat() - d_b.mat()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("EM surrogate value agrees between the fast and dense moment paths") {
  Rng rng(52);
  for (int trial = 0; trial < 10; ++trial) {
    const Index n = 6, p = 3;
    const SpdMatrix c = testsup::random_spd(p, rng);
    const SpdMatrix d = testsup::random_spd(p, rng);
    const SpdMatrix r = testsup::random_spd(n, rng);
    const Eigen::MatrixXd y = testsup::random_matrix(n, p, rng);

    ModelParams params(c, d, decompose_row_precision(r));
    const EStepResult fast = posterior_moments(y, params, {false});
    const EStepResult naive = posterior_moments_naive(y, c, d, r);

    auto surrogate = [&](const OmegaPair& om) {
      return -spd_log_det(d.mat(), "D") - spd_log_det(c.mat(), "C") +
             (d.mat() * om.omega1.mat()).trace() +
             (c.mat() * om.omega2.mat()).trace();
    };
    CHECK(rel_err(surrogate(fast.omegas), surrogate(naive.omegas)) < 1e-9);
  }
}

TEST_CASE("penalized objective bookkeeping") {
  Rng rng(53);
  const Index n = 2, p = 2;
  const SpdMatrix c = testsup::random_spd(p, rng);
  const SpdMatrix d = testsup::random_spd(p, rng);
  const SpdMatrix r = testsup::random_spd(n, rng);
  const Eigen::MatrixXd y = testsup::random_matrix(n, p, rng);

  NoiseModel dense_noise;
  // lambda = 0 reduces to the observed log-likelihood
  ModelParams params(c, d, decompose_row_precision(r));
  CHECK(penalized_objective(y, r, c, d, 0.0, dense_noise) ==
        doctest::Approx(observed_loglik(y, params)).epsilon(1e-12));

  // strictly decreasing in lambda while ||C||_1 > 0
  const double at1 = penalized_objective(y, r, c, d, 0.5, dense_noise);
  const double at2 = penalized_objective(y, r, c, d, 1.0, dense_noise);
  CHECK(at2 < at1);

  // matches the dense Gaussian oracle at lambda = 0
  const Eigen::MatrixXd cov =
      kron(c.mat().inverse(), r.mat().inverse()) +
      kron(d.mat().inverse(), Eigen::MatrixXd::Identity(n, n));
  CHECK(rel_err(penalized_objective(y, r, c, d, 0.0, dense_noise),
                testsup::dense_gaussian_logpdf(vec(y), cov)) < 1e-9);
}

TEST_CASE("iid fit recovers the true noise scale") {
  SimConfig cfg;
  cfg.n = 400;
  cfg.p = 10;
  cfg.c_gen.kind = GeneratorKind::random;
  cfg.c_gen.density = 0.1;
  cfg.d_gen.kind = GeneratorKind::iid;  // true tau = 1
  cfg.snr = 0.2;
  cfg.seed = 99;
  const Dataset ds = generate_dataset(cfg, 0);

  FitConfig fit_cfg;
  fit_cfg.lambda = 0.0;
  fit_cfg.noise.variant = NoiseVariant::iid;
  const FitResult fit = fit_g3m(ds.y, ds.r, fit_cfg);
  REQUIRE(fit.tau.has_value());
  const double tau_true = ds.d_true(0, 0);  // D_true = tau I
  CHECK(std::abs(*fit.tau - tau_true) < 0.2 * tau_true);
}

TEST_CASE("held-out likelihood prefers the matching noise model") {
  int iid_wins = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SimConfig cfg;
    cfg.n = 200;
    cfg.p = 10;
    cfg.c_gen.kind = GeneratorKind::random;
    cfg.c_gen.density = 0.1;
    cfg.d_gen.kind = GeneratorKind::iid;
    cfg.snr = 0.2;
    cfg.seed = 1000 + seed;
    const Dataset train = generate_dataset(cfg, 0);
    const Dataset holdout = generate_dataset(cfg, 1);

    FitConfig base;
    base.lambda = 0.05;
    base.center_columns = false;  // keep train/holdout preprocessing aligned
    FitConfig iid_cfg = base;
    iid_cfg.noise.variant = NoiseVariant::iid;
    FitConfig dense_cfg = base;
    dense_cfg.noise.variant = NoiseVariant::dense;

    std::vector<FitResult> fits;
    fits.push_back(fit_g3m(train.y, train.r, dense_cfg));
    fits.push_back(fit_g3m(train.y, train.r, iid_cfg));
    if (select_model(fits, holdout.y, holdout.r) == 1) ++iid_wins;
  }
  CHECK(iid_wins >= 8);
}

TEST_CASE("select_model basics") {
  const Dataset ds = small_dataset(8, 30, 4, GeneratorKind::iid);
  FitConfig cfg;
  cfg.lambda = 0.2;
  const FitResult fit = fit_g3m(ds.y, ds.r, cfg);

  std::vector<FitResult> one{fit};
  CHECK(select_model(one, ds.y, ds.r) == 0);

  std::vector<FitResult> two{fit, fit};
  CHECK(select_model(two, ds.y, ds.r) == 0);  // tie -> smaller index

  CHECK_THROWS_AS(select_model({}, ds.y, ds.r), ValidationError);
}

TEST_CASE("config validation") {
  const Dataset ds = small_dataset(9, 10, 2, GeneratorKind::iid);
  FitConfig cfg;
  cfg.lambda = -0.5;
  CHECK_THROWS_AS(fit_g3m(ds.y, ds.r, cfg), ValidationError);
  cfg.lambda = 0.0;
  cfg.max_iters = 0;
  CHECK_THROWS_AS(fit_g3m(ds.y, ds.r, cfg), ValidationError);
}
