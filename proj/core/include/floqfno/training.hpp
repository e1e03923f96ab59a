#pragma once

#include <optional>
#include <string>
#include <vector>

#include "floqfno/datagen.hpp"
#include "floqfno/fno.hpp"
#include "floqfno/optimizer.hpp"

namespace floqfno {

/// Disjoint input/output index sets over the observable basis.
struct Partition {
  std::vector<int> in_indices;
  std::vector<int> out_indices;

  void validate(int m) const;
};

/// Uniform random k-subset as inputs, complement as outputs.
Partition sample_partition(int m, int k, RngStream& stream);

/// The deterministic one-local-in / two-local-out split.
Partition one_local_partition(const LocalBasis& basis);

struct TrainingConfig {
  Paradigm paradigm = Paradigm::Heff;
  long batch = 32;          // full-batch fallback below 128 records
  long epochs = 100;
  double lr = 1e-3;
  double weight_decay = 1e-6;
  double gamma = 0.8;
  long n_decay = 500;       // epochs between learning-rate decays
  long width = 128;
  long layers = 3;
  long k_max = 32;
  PaddingPolicy padding;
  int k_inputs = 0;         // obs_to_obs input-observable count
  int n_max = 0;            // op_growth extrapolation periods in the loss
  std::uint64_t seed = 0;
  int threads = 1;
  bool normalize = true;
  long eval_every = 10;     // best-model selection cadence
  double test_fraction = 0.1;

  void validate() const;
};

struct EpochLog {
  long epoch;
  double train_loss;
  double test_loss;  // NaN between evaluation epochs
  double lr;
  double seconds;    // wall time since training start
};

struct TrainResult {
  FnoModel model;  // best-test-loss checkpoint
  std::vector<EpochLog> log;
  double best_test_loss = 0.0;
  long best_epoch = 0;
  std::optional<Partition> partition;  // obs_to_obs
};

/// Paradigm losses. The three trajectory paradigms share the
/// time-averaged MSE (1/N_D) sum_t |pred(t) - truth(t)|^2.
Var trajectory_mse(Tape& tape, Var pred, Var truth);

/// Constant per-record pieces of the operator-growth loss.
struct OpGrowthSample {
  long m = 0;
  long n_time = 0;  // points of the (0, T] input grid
  int n_max = 0;
  std::vector<Tensor> rho_b;         // S tensors of shape (m, 1)
  std::vector<Tensor> targets_per_t; // n_time tensors of shape (m, (n_max+1)*S)
};

OpGrowthSample make_op_growth_sample(const DatasetRecord& rec, int n_max,
                                     long m, long n_time);

/// (1 / (max(1,n_max) N)) sum_{t,n,s} |<B(t+nT)>_s - c(t) c(T)^n rho_b_s|^2
/// with c(T)^n built once per pass and reused across t. pred_c is the
/// (m*m, N) network output on the offset grid whose last frame is t = T.
Var op_growth_loss(Tape& tape, Var pred_c, const OpGrowthSample& sample);

/// Minimizes the paradigm loss over the train split with AdamW; logs
/// per-epoch losses, keeps the best-test-loss parameters. Deterministic for
/// a fixed (seed, threads). Throws TrainingDiverged on non-finite loss.
TrainResult train(const TrainingConfig& cfg, const Dataset& ds,
                  const std::string& log_path = "",
                  const Partition* fixed_partition = nullptr);

/// Relative test error of the obs_to_obs paradigm (prediction error
/// normalized by the ground-truth norm, averaged over times and test
/// records).
double relative_test_error(const FnoModel& model, const Dataset& ds,
                           const Partition& partition);

}  // namespace floqfno
