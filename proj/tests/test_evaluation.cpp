#include <doctest.h>

#include "floqfno/evaluation.hpp"
#include "support/oracles.hpp"

using namespace floqfno;

TEST_CASE("rel_frobenius_error: zeros at truth, homogeneous in a common scale") {
  const BasisPtr basis = make_observable_basis(2);
  RngStream rng(1);
  Eigen::MatrixXd exact(basis->size(), 6);
  for (long i = 0; i < exact.size(); ++i)
    exact.data()[i] = rng.uniform(-1, 1);

  const Eigen::VectorXd zero = rel_frobenius_error(exact, exact, basis);
  CHECK(zero.cwiseAbs().maxCoeff() == 0.0);

  const Eigen::VectorXd one_pct =
      rel_frobenius_error(1.01 * exact, exact, basis);
  for (long t = 0; t < 6; ++t)
    CHECK(one_pct(t) == doctest::Approx(0.01).epsilon(1e-10));

  // Scaling prediction and truth together leaves the metric unchanged.
  const Eigen::VectorXd scaled =
      rel_frobenius_error(3.7 * 1.01 * exact, 3.7 * exact, basis);
  for (long t = 0; t < 6; ++t)
    CHECK(scaled(t) == doctest::Approx(one_pct(t)).epsilon(1e-12));
}

TEST_CASE("rel_frobenius_error equals the coefficient-space ratio") {
  // Orthonormality makes the dense Frobenius route and the coefficient-norm
  // route identical.
  const BasisPtr basis = make_k_local_basis(3, 2);
  RngStream rng(2);
  Eigen::MatrixXd exact(basis->size(), 4), pred(basis->size(), 4);
  for (long i = 0; i < exact.size(); ++i) {
    exact.data()[i] = rng.uniform(-1, 1);
    pred.data()[i] = exact.data()[i] + 0.05 * rng.uniform(-1, 1);
  }
  const Eigen::VectorXd dense_route = rel_frobenius_error(pred, exact, basis);
  for (long t = 0; t < 4; ++t) {
    const double coeff_route =
        (pred.col(t) - exact.col(t)).norm() / exact.col(t).norm();
    CHECK(dense_route(t) == doctest::Approx(coeff_route).epsilon(1e-12));
  }
}

TEST_CASE("rmse_over_observables: pinned examples and naive oracle") {
  const long m = 9;
  Eigen::MatrixXd truth = Eigen::MatrixXd::Zero(m, 5);
  CHECK(rmse_over_observables(truth, truth).cwiseAbs().maxCoeff() == 0.0);

  Eigen::MatrixXd bumped = truth;
  bumped(4, 2) = 0.3;
  const Eigen::VectorXd r = rmse_over_observables(bumped, truth);
  CHECK(r(2) == doctest::Approx(0.3 / 3.0).epsilon(1e-12));  // eps / sqrt(m)
  CHECK(r(0) == 0.0);

  RngStream rng(3);
  Eigen::MatrixXd a(m, 5), b(m, 5);
  for (long i = 0; i < a.size(); ++i) {
    a.data()[i] = rng.uniform(-1, 1);
    b.data()[i] = rng.uniform(-1, 1);
  }
  const Eigen::VectorXd fast = rmse_over_observables(a, b);
  for (long t = 0; t < 5; ++t) {
    double acc = 0.0;
    for (long i = 0; i < m; ++i) acc += (a(i, t) - b(i, t)) * (a(i, t) - b(i, t));
    CHECK(fast(t) == doctest::Approx(std::sqrt(acc / m)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(rmse_over_observables(a, Eigen::MatrixXd::Zero(m, 4)),
                  InvalidArgument);
}

TEST_CASE("heff_test_error: exact coefficients as prediction give zero") {
  SamplingConfig cfg;
  cfg.L = 2;
  cfg.N = 12;
  cfg.n_samples = 10;
  cfg.seed = 4;
  const Dataset ds = generate_dataset(cfg, Paradigm::Heff, 2);

  // An identity model cannot be built directly; instead check the metric via
  // rel_frobenius_error on held-out records with pred == exact.
  const int n_train = ds.train_count();
  for (int r = n_train; r < ds.size(); ++r) {
    const auto err = rel_frobenius_error(ds.records[r].hf_coeffs,
                                         ds.records[r].hf_coeffs, ds.out_basis);
    CHECK(err.cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("coarse_floquet converges to the exact Floquet Hamiltonian") {
  SamplingConfig cfg;
  cfg.L = 2;
  cfg.N = 200;
  cfg.n_samples = 1;
  cfg.seed = 5;
  const HamiltonianSpec spec = sample_spec(cfg, 0, 200);
  const Eigen::MatrixXcd exact = floquet_hamiltonian(spec, 0.0).matrix;
  const double e50 = (coarse_floquet(spec, 50, 0.0) - exact).norm() / exact.norm();
  const double e100 = (coarse_floquet(spec, 100, 0.0) - exact).norm() / exact.norm();
  CHECK(e100 < e50);
  CHECK(e50 < 0.05);
}

TEST_CASE("opgrowth_eval: structural checks with an untrained model") {
  SamplingConfig cfg;
  cfg.L = 2;
  cfg.N = 10;
  cfg.n_samples = 4;
  cfg.n_states = 2;
  cfg.n_max = 1;
  cfg.n_periods = 2;
  cfg.seed = 6;
  const int m = 15;
  FnoConfig arch{m, m * m, 8, 2, 6, {PadMode::Zero, 2}};
  RngStream init(7);
  const FnoModel model(arch, init);
  const auto report = opgrowth_eval(model, cfg, 99, 3, 2);
  CHECK(report.autocorr_pred(0) == 1.0);  // definitional identity frame
  CHECK(report.autocorr_exact(0) == 1.0);
  CHECK(report.autocorr_times(0) == 0.0);
  CHECK(report.autocorr_exact.size() == 31);
  CHECK(report.rmse_per_time.size() == 30);
  CHECK(report.obs_rmse_time_avg > 0.0);
  CHECK(report.col_err_one_local.size() == 30);
  CHECK(std::isfinite(report.col_err_two_local.maxCoeff()));
}

TEST_CASE("benchmark_task: obs_to_obs has no exact baseline; rows are sane") {
  SamplingConfig cfg;
  cfg.L = 2;
  cfg.N = 16;
  cfg.n_samples = 1;
  cfg.seed = 8;

  FnoConfig heff_arch{15, 15, 8, 2, 8, {PadMode::None, 0}};
  RngStream init(9);
  const FnoModel heff_model(heff_arch, init);
  const BenchmarkRow heff_row = benchmark_task(Paradigm::Heff, heff_model, cfg, 3);
  CHECK(heff_row.has_exact);
  CHECK(heff_row.exact_mean_s > 0.0);
  CHECK(heff_row.fno_mean_s > 0.0);
  CHECK(std::isfinite(heff_row.rel_error));

  cfg.n_periods = 2;
  FnoConfig obs_arch{5, 10, 8, 2, 8, {PadMode::Zero, 4}};
  RngStream init2(10);
  const FnoModel obs_model(obs_arch, init2);
  const BenchmarkRow obs_row =
      benchmark_task(Paradigm::ObsToObs, obs_model, cfg, 3);
  CHECK_FALSE(obs_row.has_exact);

  const std::string csv = benchmark_csv({heff_row, obs_row});
  CHECK(csv.find("N/A") != std::string::npos);
  CHECK(csv.find("task,L,exact_mean_s") == 0);
}

TEST_CASE("learnability_sweep: maximal information beats minimal information") {
  SamplingConfig cfg;
  cfg.L = 2;
  cfg.N = 16;
  cfg.n_periods = 2;
  cfg.n_samples = 48;
  cfg.seed = 11;
  const Dataset ds = generate_dataset(cfg, Paradigm::ObsToObs, 2);

  TrainingConfig base;
  base.paradigm = Paradigm::ObsToObs;
  base.epochs = 40;
  base.width = 12;
  base.k_max = 10;
  base.padding = {PadMode::Zero, 4};
  base.threads = 2;
  base.seed = 12;
  const auto points = learnability_sweep(base, ds, {1, 14}, 2);
  REQUIRE(points.size() == 2);
  CHECK(points[0].k == 1);
  CHECK(points[1].k == 14);
  CHECK(points[1].mean_error <= points[0].mean_error);
  for (const auto& p : points) CHECK(p.errors.size() == 2);
}
