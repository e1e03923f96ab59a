#include "floqfno/evaluation.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

namespace floqfno {

namespace {

Tensor to_tensor(const Eigen::MatrixXd& m) {
  Tensor t({m.rows(), m.cols()});
  for (long r = 0; r < m.rows(); ++r)
    for (long c = 0; c < m.cols(); ++c) t.at(r, c) = m(r, c);
  return t;
}

Eigen::MatrixXd to_matrix(const Tensor& t) {
  Eigen::MatrixXd m(t.dim(0), t.dim(1));
  for (long r = 0; r < t.dim(0); ++r)
    for (long c = 0; c < t.dim(1); ++c) m(r, c) = t.at(r, c);
  return m;
}

double mean_of(const Eigen::VectorXd& v) {
  return v.size() ? v.mean() : 0.0;
}

struct Timing {
  double mean_s = 0.0;
  double std_s = 0.0;
};

template <typename F>
Timing time_it(F&& fn, int repeats) {
  fn();  // warmup
  std::vector<double> times(static_cast<std::size_t>(repeats));
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    times[static_cast<std::size_t>(r)] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
  }
  Timing out;
  for (double t : times) out.mean_s += t;
  out.mean_s /= repeats;
  for (double t : times) out.std_s += (t - out.mean_s) * (t - out.mean_s);
  out.std_s = std::sqrt(out.std_s / std::max(1, repeats - 1));
  return out;
}

/// Time-averaged relative L2 error over channels, the benchmark accuracy
/// metric.
double time_avg_rel_error(const Eigen::MatrixXd& pred,
                          const Eigen::MatrixXd& exact) {
  double acc = 0.0;
  long counted = 0;
  for (long t = 0; t < exact.cols(); ++t) {
    const double den = exact.col(t).norm();
    if (den == 0.0) continue;
    acc += (pred.col(t) - exact.col(t)).norm() / den;
    ++counted;
  }
  return counted ? acc / static_cast<double>(counted) : 0.0;
}

}  // namespace

Eigen::VectorXd rel_frobenius_error(const Eigen::MatrixXd& pred_coeffs,
                                    const Eigen::MatrixXd& exact_coeffs,
                                    const BasisPtr& basis) {
  if (pred_coeffs.rows() != exact_coeffs.rows() ||
      pred_coeffs.cols() != exact_coeffs.cols())
    throw InvalidArgument("rel_frobenius_error: shape mismatch");
  Eigen::VectorXd out(pred_coeffs.cols());
  for (long t = 0; t < pred_coeffs.cols(); ++t) {
    HermitianCoefficients diff{basis,
                               pred_coeffs.col(t) - exact_coeffs.col(t)};
    HermitianCoefficients exact{basis, exact_coeffs.col(t)};
    const double den = reconstruct(exact).norm();
    out(t) = den == 0.0 ? std::numeric_limits<double>::quiet_NaN()
                        : reconstruct(diff).norm() / den;
  }
  return out;
}

Eigen::VectorXd rmse_over_observables(const Eigen::MatrixXd& pred,
                                      const Eigen::MatrixXd& truth) {
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols())
    throw InvalidArgument("rmse_over_observables: shape mismatch");
  Eigen::VectorXd out(truth.cols());
  const double inv_m = 1.0 / static_cast<double>(truth.rows());
  for (long t = 0; t < truth.cols(); ++t)
    out(t) = std::sqrt((pred.col(t) - truth.col(t)).squaredNorm() * inv_m);
  return out;
}

double heff_test_error(const FnoModel& model, const Dataset& ds,
                       double test_fraction) {
  if (ds.paradigm != Paradigm::Heff)
    throw InvalidArgument("heff_test_error: expected an heff dataset");
  const int n_train = ds.train_count(test_fraction);
  double acc = 0.0;
  int count = 0;
  for (int r = n_train; r < ds.size(); ++r) {
    const auto& rec = ds.records[static_cast<std::size_t>(r)];
    const Tensor pred = model.predict(to_tensor(rec.h_coeffs));
    const Eigen::VectorXd err =
        rel_frobenius_error(to_matrix(pred), rec.hf_coeffs, ds.out_basis);
    acc += mean_of(err);
    ++count;
  }
  if (count == 0) throw InvalidArgument("heff_test_error: empty test split");
  return acc / count;
}

Eigen::MatrixXd exact_hf_coeffs(const HamiltonianSpec& spec,
                                const TimeGrid& grid, const BasisPtr& basis) {
  const auto hf = floquet_trajectory(spec, grid);
  Eigen::MatrixXd coeffs(basis->size(), grid.total_points());
  for (int n = 0; n < grid.total_points(); ++n)
    coeffs.col(n) = project(hf[static_cast<std::size_t>(n)].matrix, basis).coeffs;
  return coeffs;
}

Eigen::MatrixXcd coarse_floquet(const HamiltonianSpec& spec, int n_coarse,
                                double t0) {
  const double T = spec.period();
  const double dt = T / n_coarse;
  const std::int64_t dim = std::int64_t{1} << spec.L;
  Eigen::MatrixXcd u = Eigen::MatrixXcd::Identity(dim, dim);
  for (int n = 0; n < n_coarse; ++n)
    u = evolution_step(hamiltonian_at(spec, t0 + (n + 0.5) * dt), dt) * u;
  // Same principal-branch log as the exact pipeline.
  Eigen::ComplexSchur<Eigen::MatrixXcd> schur(u);
  Eigen::VectorXd quasi(dim);
  for (Eigen::Index j = 0; j < dim; ++j) {
    double theta = -std::arg(schur.matrixT()(j, j));
    if (theta <= -M_PI) theta += 2.0 * M_PI;
    quasi(j) = theta / T;
  }
  Eigen::MatrixXcd hf =
      schur.matrixU() * quasi.asDiagonal() * schur.matrixU().adjoint();
  return 0.5 * (hf + hf.adjoint().eval());
}

FrequencyTransferReport frequency_transfer(const FnoModel& model,
                                           const SamplingConfig& cfg,
                                           double omega_prime, int n_periods,
                                           std::uint64_t sample_index) {
  SamplingConfig cfg_prime = cfg;
  cfg_prime.omega = omega_prime;
  const HamiltonianSpec spec =
      sample_spec(cfg_prime, sample_index, cfg_prime.N);
  const TimeGrid grid{cfg_prime.N, 1, false};

  // The model consumes grid-sampled values; changing omega only rescales the
  // physical domain underneath the same N-point grid.
  Dataset probe;
  probe.in_basis = make_observable_basis(cfg_prime.L);
  const BasisPtr out_basis =
      make_k_local_basis(cfg_prime.L, std::min(3, cfg_prime.L));
  HamiltonianSpec spec_copy = spec;
  Eigen::MatrixXd input(probe.in_basis->size(), grid.total_points());
  {
    for (int n = 0; n < grid.total_points(); ++n) {
      const double t = grid.time_at(n, spec.period());
      input.col(n) =
          project(hamiltonian_at(spec_copy, t), probe.in_basis).coeffs;
    }
  }
  const Tensor pred = model.predict(to_tensor(input));

  FrequencyTransferReport report;
  report.omega_prime = omega_prime;
  report.low_frequency_flag = omega_prime / std::max(cfg.J_max, 1e-12) < 10.0;

  const Eigen::MatrixXcd hf_exact = floquet_hamiltonian(spec, 0.0).matrix;
  HermitianCoefficients pred_c{out_basis, to_matrix(pred).col(0)};
  const Eigen::MatrixXcd hf_pred = reconstruct(pred_c);
  report.hf_rel_error_t0 = (hf_pred - hf_exact).norm() / hf_exact.norm();

  const ProductState up = ProductState::all_up(cfg.L);
  report.magnetization_exact =
      stroboscopic_magnetization(hf_exact, up, spec.period(), n_periods);
  report.magnetization_fno =
      stroboscopic_magnetization(hf_pred, up, spec.period(), n_periods);
  report.mean_abs_deviation =
      (report.magnetization_exact - report.magnetization_fno)
          .cwiseAbs()
          .mean();
  return report;
}

std::vector<SweepPoint> learnability_sweep(const TrainingConfig& base,
                                           const Dataset& ds,
                                           const std::vector<int>& ks,
                                           int repeats,
                                           const std::string& log_dir) {
  if (repeats < 1) throw InvalidArgument("learnability_sweep: repeats >= 1");
  std::vector<SweepPoint> points;
  for (int k : ks) {
    SweepPoint point;
    point.k = k;
    for (int rep = 0; rep < repeats; ++rep) {
      TrainingConfig cfg = base;
      cfg.paradigm = Paradigm::ObsToObs;
      cfg.k_inputs = k;
      // Independent init and partition per repeat.
      std::uint64_t h = base.seed;
      detail::splitmix64(h);
      h ^= 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(k) + 17);
      h ^= 0xc2b2ae3d27d4eb4fULL * (static_cast<std::uint64_t>(rep) + 3);
      cfg.seed = detail::splitmix64(h);
      std::string log_path;
      if (!log_dir.empty())
        log_path = log_dir + "/sweep_k" + std::to_string(k) + "_r" +
                   std::to_string(rep) + ".jsonl";
      const TrainResult result = train(cfg, ds, log_path);
      point.errors.push_back(
          relative_test_error(result.model, ds, *result.partition));
    }
    for (double e : point.errors) point.mean_error += e;
    point.mean_error /= static_cast<double>(point.errors.size());
    points.push_back(std::move(point));
  }
  return points;
}

OpGrowthEvalReport opgrowth_eval(const FnoModel& model,
                                 const SamplingConfig& cfg,
                                 std::uint64_t unseen_sample_index,
                                 int n_eval_periods, int n_unseen_states) {
  const BasisPtr basis = make_observable_basis(cfg.L);
  const int m = basis->size();
  const HamiltonianSpec spec = sample_spec(cfg, unseen_sample_index, cfg.N);
  const TimeGrid input_grid{cfg.N, 1, true};
  const TimeGrid eval_grid{cfg.N, n_eval_periods, true};

  // Exact growth frames over the evaluation window.
  const OperatorGrowthTensor c_exact = operator_growth(spec, eval_grid, basis);

  // Model prediction on (0, T], extended by the composition law.
  Eigen::MatrixXd input(m, cfg.N);
  for (int n = 0; n < cfg.N; ++n) {
    const double t = input_grid.time_at(n, spec.period());
    input.col(n) = project(hamiltonian_at(spec, t), basis).coeffs;
  }
  const Tensor raw = model.predict(to_tensor(input));
  OperatorGrowthTensor c_pred;
  c_pred.basis = basis;
  c_pred.grid = input_grid;
  for (int t = 0; t < cfg.N; ++t) {
    Eigen::MatrixXd frame(m, m);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) frame(i, j) = raw.at(i * m + j, t);
    c_pred.frames.push_back(std::move(frame));
  }
  const OperatorGrowthTensor c_ext =
      extrapolate_growth(c_pred, n_eval_periods - 1);

  OpGrowthEvalReport report;

  // (a) Reconstructed observables for unseen initial states.
  RngStream state_stream(cfg.seed, unseen_sample_index + 1,
                         static_cast<std::uint64_t>(RngPurpose::ProductState));
  const int total = eval_grid.total_points();
  Eigen::VectorXd rmse_acc = Eigen::VectorXd::Zero(total);
  for (int s = 0; s < n_unseen_states; ++s) {
    const ProductState rho = sample_product_state(cfg.L, state_stream);
    const Eigen::VectorXcd psi = rho.full_state();
    Eigen::VectorXd traces(m);
    for (int j = 0; j < m; ++j)
      traces(j) = basis->elements[j].expectation(psi).real();
    const Eigen::MatrixXd exact_obs =
        evolve_observables(spec, rho, eval_grid, basis).values;
    Eigen::MatrixXd pred_obs(m, total);
    for (int n = 0; n < total; ++n)
      pred_obs.col(n) = c_ext.frames[static_cast<std::size_t>(n)] * traces;
    rmse_acc += rmse_over_observables(pred_obs, exact_obs);
  }
  report.rmse_per_time = rmse_acc / std::max(1, n_unseen_states);
  report.obs_rmse_time_avg = mean_of(report.rmse_per_time);

  // (b) Edge autocorrelation A_i(t) = c_ii(t), with the definitional
  // identity frame at t = 0 prepended.
  const int edge = basis->index_of(PauliString(cfg.L, {{cfg.L - 1, Axis::Z}}));
  report.autocorr_index = edge;
  const Eigen::VectorXd a_exact = autocorrelation(c_exact, edge);
  const Eigen::VectorXd a_pred = autocorrelation(c_ext, edge);
  report.autocorr_times.resize(total + 1);
  report.autocorr_exact.resize(total + 1);
  report.autocorr_pred.resize(total + 1);
  report.autocorr_times(0) = 0.0;
  report.autocorr_exact(0) = 1.0;
  report.autocorr_pred(0) = 1.0;
  for (int n = 0; n < total; ++n) {
    report.autocorr_times(n + 1) = eval_grid.time_at(n, spec.period());
    report.autocorr_exact(n + 1) = a_exact(n);
    report.autocorr_pred(n + 1) = a_pred(n);
  }

  // (c) Column error averaged over one- and two-local initial operators.
  report.col_err_one_local = Eigen::VectorXd::Zero(total);
  report.col_err_two_local = Eigen::VectorXd::Zero(total);
  int n_one = 0, n_two = 0;
  for (int i = 0; i < m; ++i) (basis->elements[static_cast<std::size_t>(i)].weight() == 1 ? n_one : n_two)++;
  for (int n = 0; n < total; ++n) {
    const Eigen::MatrixXd delta = c_ext.frames[static_cast<std::size_t>(n)] -
                                  c_exact.frames[static_cast<std::size_t>(n)];
    for (int i = 0; i < m; ++i) {
      const double err = delta.row(i).squaredNorm();
      if (basis->elements[static_cast<std::size_t>(i)].weight() == 1)
        report.col_err_one_local(n) += err / n_one;
      else
        report.col_err_two_local(n) += err / n_two;
    }
  }
  return report;
}

BenchmarkRow benchmark_task(Paradigm paradigm, const FnoModel& model,
                            const SamplingConfig& cfg, int repeats) {
  BenchmarkRow row;
  row.task = to_string(paradigm);
  row.L = cfg.L;
  row.repeats = repeats;

  const BasisPtr obs_basis = make_observable_basis(cfg.L);
  const HamiltonianSpec spec = sample_spec(cfg, 0, field_cells(cfg, paradigm));

  switch (paradigm) {
    case Paradigm::Heff: {
      const BasisPtr p3 = make_k_local_basis(cfg.L, std::min(3, cfg.L));
      const TimeGrid grid{cfg.N, 1, false};
      Eigen::MatrixXd input(obs_basis->size(), cfg.N);
      for (int n = 0; n < cfg.N; ++n)
        input.col(n) = project(hamiltonian_at(spec, grid.time_at(n, spec.period())),
                               obs_basis)
                           .coeffs;
      Eigen::MatrixXd exact;
      const Timing te = time_it(
          [&]() { exact = exact_hf_coeffs(spec, grid, p3); }, repeats);
      const Tensor in_t = to_tensor(input);
      Tensor pred;
      const Timing tf =
          time_it([&]() { pred = model.predict(in_t); }, repeats);
      row.has_exact = true;
      row.exact_mean_s = te.mean_s;
      row.exact_std_s = te.std_s;
      row.fno_mean_s = tf.mean_s;
      row.fno_std_s = tf.std_s;
      row.rel_error = time_avg_rel_error(to_matrix(pred), exact);
      break;
    }
    case Paradigm::HToObs:
    case Paradigm::ObsToObs: {
      const TimeGrid grid{cfg.N, cfg.n_periods, false};
      RngStream shared(cfg.seed, 0,
                       static_cast<std::uint64_t>(RngPurpose::SharedState));
      const ProductState state = sample_product_state(cfg.L, shared);
      Eigen::MatrixXd exact;
      if (paradigm == Paradigm::HToObs) {
        const Timing te = time_it(
            [&]() {
              exact = evolve_observables(spec, state, grid, obs_basis).values;
            },
            repeats);
        row.has_exact = true;
        row.exact_mean_s = te.mean_s;
        row.exact_std_s = te.std_s;
      } else {
        exact = evolve_observables(spec, state, grid, obs_basis).values;
        row.has_exact = false;  // no direct exact analog for obs -> obs
      }
      Eigen::MatrixXd input;
      Eigen::MatrixXd truth;
      if (paradigm == Paradigm::HToObs) {
        input.resize(obs_basis->size(), grid.total_points());
        for (int n = 0; n < grid.total_points(); ++n)
          input.col(n) =
              project(hamiltonian_at(spec, grid.time_at(n, spec.period())),
                      obs_basis)
                  .coeffs;
        truth = exact;
      } else {
        const long k = model.config().d_in;
        input = exact.topRows(k);
        truth = exact.bottomRows(exact.rows() - k);
      }
      const Tensor in_t = to_tensor(input);
      Tensor pred;
      const Timing tf =
          time_it([&]() { pred = model.predict(in_t); }, repeats);
      row.fno_mean_s = tf.mean_s;
      row.fno_std_s = tf.std_s;
      row.rel_error = time_avg_rel_error(to_matrix(pred), truth);
      break;
    }
    case Paradigm::OpGrowth: {
      const int m = obs_basis->size();
      const TimeGrid input_grid{cfg.N, 1, true};
      const TimeGrid full_grid{cfg.N, cfg.n_periods, true};
      OperatorGrowthTensor exact;
      const Timing te = time_it(
          [&]() { exact = operator_growth(spec, full_grid, obs_basis); },
          repeats);
      Eigen::MatrixXd input(m, cfg.N);
      for (int n = 0; n < cfg.N; ++n)
        input.col(n) =
            project(hamiltonian_at(spec, input_grid.time_at(n, spec.period())),
                    obs_basis)
                .coeffs;
      const Tensor in_t = to_tensor(input);
      OperatorGrowthTensor pred_ext;
      const Timing tf = time_it(
          [&]() {
            const Tensor raw = model.predict(in_t);
            OperatorGrowthTensor c_pred;
            c_pred.basis = obs_basis;
            c_pred.grid = input_grid;
            for (int t = 0; t < cfg.N; ++t) {
              Eigen::MatrixXd frame(m, m);
              for (int i = 0; i < m; ++i)
                for (int j = 0; j < m; ++j) frame(i, j) = raw.at(i * m + j, t);
              c_pred.frames.push_back(std::move(frame));
            }
            pred_ext = extrapolate_growth(c_pred, cfg.n_periods - 1);
          },
          repeats);
      row.has_exact = true;
      row.exact_mean_s = te.mean_s;
      row.exact_std_s = te.std_s;
      row.fno_mean_s = tf.mean_s;
      row.fno_std_s = tf.std_s;
      double acc = 0.0;
      for (int n = 0; n < full_grid.total_points(); ++n) {
        const auto& fe = exact.frames[static_cast<std::size_t>(n)];
        const auto& fp = pred_ext.frames[static_cast<std::size_t>(n)];
        acc += (fp - fe).norm() / fe.norm();
      }
      row.rel_error = acc / full_grid.total_points();
      break;
    }
  }
  return row;
}

std::string benchmark_csv(const std::vector<BenchmarkRow>& rows) {
  std::ostringstream os;
  os << "task,L,exact_mean_s,exact_std_s,fno_mean_s,fno_std_s,rel_error,repeats\n";
  for (const auto& r : rows) {
    os << r.task << ',' << r.L << ',';
    if (r.has_exact)
      os << r.exact_mean_s << ',' << r.exact_std_s << ',';
    else
      os << "N/A,N/A,";
    os << r.fno_mean_s << ',' << r.fno_std_s << ',' << r.rel_error << ','
       << r.repeats << '\n';
  }
  return os.str();
}

}  // namespace floqfno
