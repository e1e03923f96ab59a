#pragma once

#include <optional>
#include <string>
#include <vector>

#include "floqfno/dynamics.hpp"
#include "floqfno/io.hpp"

namespace floqfno {

enum class Paradigm { Heff, HToObs, ObsToObs, OpGrowth };

Paradigm paradigm_from_string(const std::string& s);
std::string to_string(Paradigm p);

/// Disorder-ensemble sampling parameters. J_i ~ U[0, J_max],
/// A_i ~ U[0, A_max], h_x(i, t_n) ~ U[-eta, eta], all independent and fully
/// determined by (seed, sample index).
struct SamplingConfig {
  int L = 4;
  double J_max = 1.0;
  double A_max = 0.5;
  double eta = 0.1;
  double omega = 20.0;
  int N = 200;
  int n_periods = 1;
  int n_samples = 0;
  int n_states = 1;   // initial states per Hamiltonian (op-growth N_rho)
  int n_max = 0;      // op-growth extrapolation periods in the loss
  std::uint64_t seed = 0;

  void validate() const;
};

/// Number of h_x columns for a paradigm: the Floquet paradigms (heff,
/// op_growth) need a T-periodic Hamiltonian, so the parallel field repeats
/// with N samples per period; the observable paradigms draw fresh disorder
/// at every grid point of the window.
int field_cells(const SamplingConfig& cfg, Paradigm p);

HamiltonianSpec sample_spec(const SamplingConfig& cfg,
                            std::uint64_t sample_index, int n_field_cells);

ProductState sample_product_state(int L, RngStream& stream);

struct DatasetRecord {
  std::uint64_t sample_index = 0;
  Eigen::VectorXd J, A;
  Eigen::MatrixXd h_x;
  Eigen::MatrixXd h_coeffs;    // vec H(t) in the observable basis
  Eigen::MatrixXd hf_coeffs;   // heff: vec H_F(t) in the k=3 basis
  Eigen::MatrixXd observables; // h_to_obs / obs_to_obs: <B_i(t)> for the shared state
  std::vector<Eigen::VectorXd> partial_traces;      // op_growth: Tr(rho_s B_j)
  std::vector<Eigen::MatrixXd> state_observables;   // op_growth: per-state <B_i>
  double p3_residual = 0.0;    // heff: max_t relative out-of-basis norm of H_F
};

struct Dataset {
  Paradigm paradigm = Paradigm::Heff;
  SamplingConfig config;
  TimeGrid input_grid;       // grid the network input/output lives on
  TimeGrid data_grid;        // grid of the stored trajectories
  BasisPtr in_basis;         // observable basis (vec H / observables)
  BasisPtr out_basis;        // heff: k=3 basis; otherwise observable basis
  ProductState shared_state; // h_to_obs / obs_to_obs
  std::vector<DatasetRecord> records;
  int dropped_records = 0;
  double max_p3_residual = 0.0;

  int size() const { return static_cast<int>(records.size()); }
  /// Deterministic 90/10 split by record index.
  int train_count(double test_fraction = 0.1) const;
};

/// Runs the simulator over the sampled ensemble. Parallel across records;
/// results are identical for any thread count.
Dataset generate_dataset(const SamplingConfig& cfg, Paradigm paradigm,
                         int threads = 1);

void write_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

/// Coarse view of a trajectory dataset: every `factor`-th time sample of the
/// same underlying functions (the standard coarse-grid training setup for
/// discretization transfer). Heff and observable paradigms only.
Dataset subsample_time(const Dataset& ds, int factor);

/// Lazy per-record access for tooling that does not want the whole file in
/// memory.
class DatasetReader {
 public:
  explicit DatasetReader(const std::string& path);
  const nlohmann::json& header() const { return reader_.header(); }
  int record_count() const { return n_records_; }
  Paradigm paradigm() const { return paradigm_; }
  DatasetRecord read_record(int i) const;
  Dataset metadata() const;  // everything except records

 private:
  ContainerReader reader_;
  Paradigm paradigm_;
  int n_records_ = 0;
};

}  // namespace floqfno
