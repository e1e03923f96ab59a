#pragma once

#include <string>
#include <vector>

#include "floqfno/datagen.hpp"
#include "floqfno/training.hpp"

namespace floqfno {

/// ||pred(t) - exact(t)||_F / ||exact(t)||_F per grid point, on the
/// reconstructed dense matrices. Zero-norm denominators yield NaN entries
/// (flagged, not thrown).
Eigen::VectorXd rel_frobenius_error(const Eigen::MatrixXd& pred_coeffs,
                                    const Eigen::MatrixXd& exact_coeffs,
                                    const BasisPtr& basis);

/// sqrt((1/m) sum_i (pred_i(t) - truth_i(t))^2) per time.
Eigen::VectorXd rmse_over_observables(const Eigen::MatrixXd& pred,
                                      const Eigen::MatrixXd& truth);

/// Mean over held-out records of the time-averaged relative Frobenius error
/// of the predicted H_F trajectory.
double heff_test_error(const FnoModel& model, const Dataset& ds,
                       double test_fraction = 0.1);

/// H_F trajectory of one spec via the exact pipeline, as basis coefficients.
Eigen::MatrixXd exact_hf_coeffs(const HamiltonianSpec& spec,
                                const TimeGrid& grid, const BasisPtr& basis);

/// Coarse-Trotter baseline: midpoint exponentials with N_coarse steps per
/// period on the same underlying Hamiltonian.
Eigen::MatrixXcd coarse_floquet(const HamiltonianSpec& spec, int n_coarse,
                                double t0);

struct FrequencyTransferReport {
  double omega_prime = 0.0;
  bool low_frequency_flag = false;  // omega'/J below the high-frequency regime
  Eigen::VectorXd magnetization_exact;  // stroboscopic, all-up initial state
  Eigen::VectorXd magnetization_fno;
  double mean_abs_deviation = 0.0;
  double hf_rel_error_t0 = 0.0;  // relative Frobenius error of H_F(0)
};

/// Evaluates an H_F model trained at cfg.omega on a system driven at
/// omega_prime, without retraining.
FrequencyTransferReport frequency_transfer(const FnoModel& model,
                                           const SamplingConfig& cfg,
                                           double omega_prime, int n_periods,
                                           std::uint64_t sample_index);

struct SweepPoint {
  int k = 0;
  std::vector<double> errors;  // one per repeat
  double mean_error = 0.0;
};

/// Trains `repeats` models per k on independent random partitions of the
/// observable set and records the final relative test error of each.
std::vector<SweepPoint> learnability_sweep(const TrainingConfig& base,
                                           const Dataset& ds,
                                           const std::vector<int>& ks,
                                           int repeats,
                                           const std::string& log_dir = "");

struct OpGrowthEvalReport {
  double obs_rmse_time_avg = 0.0;   // unseen-state reconstruction error
  Eigen::VectorXd rmse_per_time;
  int autocorr_index = -1;
  Eigen::VectorXd autocorr_times;   // includes t = 0
  Eigen::VectorXd autocorr_exact;   // A_i(0) = 1 by construction
  Eigen::VectorXd autocorr_pred;
  Eigen::VectorXd col_err_one_local;  // ||delta B_i(t)|| averaged over groups
  Eigen::VectorXd col_err_two_local;
};

/// Evaluates a trained c(t) model on a Hamiltonian and initial states that
/// were not in the training set, extrapolating to n_eval_periods via the
/// composition law.
OpGrowthEvalReport opgrowth_eval(const FnoModel& model,
                                 const SamplingConfig& cfg,
                                 std::uint64_t unseen_sample_index,
                                 int n_eval_periods, int n_unseen_states);

struct BenchmarkRow {
  std::string task;
  int L = 0;
  bool has_exact = false;
  double exact_mean_s = 0.0, exact_std_s = 0.0;
  double fno_mean_s = 0.0, fno_std_s = 0.0;
  double rel_error = 0.0;  // time-averaged relative L2 error of the FNO
  int repeats = 0;
};

/// Wall-clock single-thread comparison of the exact pipeline vs one FNO
/// forward pass for one task, plus the accuracy of that pass.
BenchmarkRow benchmark_task(Paradigm paradigm, const FnoModel& model,
                            const SamplingConfig& cfg, int repeats);

std::string benchmark_csv(const std::vector<BenchmarkRow>& rows);

}  // namespace floqfno
