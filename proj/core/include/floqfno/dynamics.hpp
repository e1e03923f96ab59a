#pragma once

#include <Eigen/Dense>
#include <complex>
#include <vector>

#include "floqfno/pauli.hpp"

namespace floqfno {

/// Driven disordered transverse-field Ising chain
///   H(t) = sum_i J_i X_i X_{i+1} + A_i cos(omega t) Z_i + h_x(i,t) X_i
/// with periodic boundary. h_x is sampled per grid cell (columns of h_x);
/// between grid times it is held piecewise-constant, and cells wrap
/// periodically beyond the stored window. With N columns the Hamiltonian is
/// exactly T-periodic; with N*n_periods columns the parallel-field disorder
/// is fresh at every step of the window.
struct HamiltonianSpec {
  int L = 0;
  Eigen::VectorXd J;
  Eigen::VectorXd A;
  Eigen::MatrixXd h_x;  // L x n_cells
  double omega = 0.0;
  int N = 0;  // grid points per period

  double period() const { return 2.0 * M_PI / omega; }
  double dt() const { return period() / N; }
  void validate() const;
};

/// Uniform grid with N points per period over n_periods.
/// offset_one = false: t_n = n * dt (starts at 0);
/// offset_one = true:  t_n = (n+1) * dt (ends exactly at n_periods * T).
struct TimeGrid {
  int N = 0;
  int n_periods = 1;
  bool offset_one = false;

  int total_points() const { return N * n_periods; }
  double time_at(int n, double period) const {
    return (n + (offset_one ? 1 : 0)) * (period / N);
  }
};

/// Tensor product of single-qubit states.
struct ProductState {
  std::vector<Eigen::Vector2cd> qubits;

  int L() const { return static_cast<int>(qubits.size()); }
  Eigen::VectorXcd full_state() const;
  void validate() const;

  static ProductState all_up(int L);
};

/// Expectation values <B_i(t_n)> over a grid, rows indexed by the basis.
struct ObservableTrajectory {
  BasisPtr basis;
  TimeGrid grid;
  Eigen::MatrixXd values;  // |basis| x total_points
};

/// Coefficient vectors of a Hermitian operator trajectory in a local basis.
struct CoefficientTrajectory {
  BasisPtr basis;
  TimeGrid grid;
  Eigen::MatrixXd coeffs;  // |basis| x total_points
};

/// Operator-growth overlap matrices c(t_n) with
/// c_ij(t) = Tr(B_j U^dag(t,0) B_i U(t,0)) / 2^L.
struct OperatorGrowthTensor {
  BasisPtr basis;
  TimeGrid grid;
  std::vector<Eigen::MatrixXd> frames;  // one m x m matrix per grid point
};

struct FloquetResult {
  Eigen::MatrixXcd matrix;
  bool branch_warning = false;  // eigenphase within 1e-12 of the -pi cut
};

Eigen::MatrixXcd hamiltonian_at(const HamiltonianSpec& spec, double t);

/// exp(-i H dt) for Hermitian H via eigendecomposition.
Eigen::MatrixXcd evolution_step(const Eigen::MatrixXcd& h, double dt);

/// Ordered product of midpoint-rule step exponentials over grid cells
/// [t0, t1); both endpoints must lie on cell boundaries.
Eigen::MatrixXcd propagate(const HamiltonianSpec& spec, double t0, double t1);

/// Single-cell exact exponentials U_n = exp(-i H(t_n + dt/2) dt) for
/// n = first_cell .. first_cell + n_cells - 1.
std::vector<Eigen::MatrixXcd> step_unitaries(const HamiltonianSpec& spec,
                                             int first_cell, int n_cells);

/// H_F(t0) = (i/T) log U(t0+T, t0), principal branch: eigenphases in
/// (-pi, pi], quasi-energies in (-omega/2, omega/2].
FloquetResult floquet_hamiltonian(const HamiltonianSpec& spec, double t0);

/// H_F(t_n) for every grid point, sharing the one-period step unitaries
/// (requires a T-periodic spec, i.e. h_x with exactly N columns).
std::vector<FloquetResult> floquet_trajectory(const HamiltonianSpec& spec,
                                              const TimeGrid& grid);

/// Unitary with U HF0 U^dag = HF1, built from the two eigenbases.
/// Degenerate clusters (gap < 1e-8) are gauge-fixed by the unitary
/// Procrustes alignment of the corresponding eigenvector blocks, which makes
/// the result deterministic.
Eigen::MatrixXcd micromotion(const Eigen::MatrixXcd& hf0,
                             const Eigen::MatrixXcd& hf1);

ObservableTrajectory evolve_observables(const HamiltonianSpec& spec,
                                        const ProductState& state,
                                        const TimeGrid& grid,
                                        const BasisPtr& basis);

OperatorGrowthTensor operator_growth(const HamiltonianSpec& spec,
                                     const TimeGrid& grid,
                                     const BasisPtr& basis);

/// Extends one-period frames (offset_one grid ending exactly at T) to
/// n additional periods via c(t + kT) = c(t) c(T)^k, k = 0..n.
OperatorGrowthTensor extrapolate_growth(const OperatorGrowthTensor& c, int n);

/// Floquet-Magnus term sums: order 0 is the period average of H(t); order 1
/// adds the nested-commutator double integral (both by midpoint quadrature).
Eigen::MatrixXcd magnus(const HamiltonianSpec& spec, int order);

/// M(nT) = <psi| e^{i H_eff T n} (sum_i Z_i / L) e^{-i H_eff T n} |psi>
/// for n = 0..n_periods, via one eigendecomposition of H_eff.
Eigen::VectorXd stroboscopic_magnetization(const Eigen::MatrixXcd& h_eff,
                                           const ProductState& state,
                                           double period, int n_periods);

/// Diagonal c_ii(t_n): infinite-temperature autocorrelation of B_i.
Eigen::VectorXd autocorrelation(const OperatorGrowthTensor& c, int i);

}  // namespace floqfno
