#include "floqfno/dynamics.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>

namespace floqfno {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr std::complex<double> kImag{0.0, 1.0};

std::int64_t dim_of(int L) { return std::int64_t{1} << L; }

int cell_index(const HamiltonianSpec& spec, double t) {
  const double dt = spec.dt();
  const double x = t / dt;
  const int cell = static_cast<int>(std::llround(x));
  if (std::abs(x - cell) > 1e-9)
    throw InvalidArgument("time " + std::to_string(t) +
                          " is not aligned to the grid");
  return cell;
}

}  // namespace

Eigen::MatrixXcd evolution_step(const Eigen::MatrixXcd& h, double dt) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(h);
  const Eigen::VectorXcd phases =
      (-kImag * dt * es.eigenvalues().array()).exp();
  return es.eigenvectors() * phases.asDiagonal() *
         es.eigenvectors().adjoint();
}

void HamiltonianSpec::validate() const {
  if (L < 2 || L > 10) throw InvalidArgument("spec: L must be in [2, 10]");
  if (!(omega > 0.0)) throw InvalidArgument("spec: omega must be positive");
  if (N < 2) throw InvalidArgument("spec: N must be >= 2");
  if (J.size() != L || A.size() != L || h_x.rows() != L || h_x.cols() < 1)
    throw InvalidArgument("spec: parameter shapes inconsistent with L");
  if (!J.allFinite() || !A.allFinite() || !h_x.allFinite())
    throw InvalidArgument("spec: parameters must be finite");
}

Eigen::VectorXcd ProductState::full_state() const {
  Eigen::VectorXcd psi = Eigen::VectorXcd::Ones(1);
  // Site i occupies bit i, so each new site enters as the high-bit factor.
  for (int i = 0; i < L(); ++i) {
    Eigen::VectorXcd next(psi.size() * 2);
    next.head(psi.size()) = qubits[i](0) * psi;
    next.tail(psi.size()) = qubits[i](1) * psi;
    psi.swap(next);
  }
  return psi;
}

void ProductState::validate() const {
  for (const auto& q : qubits)
    if (std::abs(q.norm() - 1.0) > 1e-12)
      throw ContractViolation("product state: qubit not normalized");
}

ProductState ProductState::all_up(int L) {
  ProductState s;
  s.qubits.assign(L, Eigen::Vector2cd(1.0, 0.0));
  return s;
}

Eigen::MatrixXcd hamiltonian_at(const HamiltonianSpec& spec, double t) {
  spec.validate();
  if (t < 0.0) throw InvalidArgument("hamiltonian_at: t must be >= 0");
  const std::int64_t dim = dim_of(spec.L);
  const int n_cells = static_cast<int>(spec.h_x.cols());
  const int cell =
      static_cast<int>(std::floor(t / spec.dt() + 1e-12)) % n_cells;
  const double drive = std::cos(spec.omega * t);

  Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(dim, dim);
  for (std::int64_t a = 0; a < dim; ++a) {
    double diag = 0.0;
    for (int i = 0; i < spec.L; ++i) {
      const int j = (i + 1) % spec.L;
      const std::int64_t flipped = a ^ ((std::int64_t{1} << i) |
                                        (std::int64_t{1} << j));
      h(flipped, a) += spec.J(i);  // X_i X_{i+1}; both bonds kept at L = 2
      h(a ^ (std::int64_t{1} << i), a) += spec.h_x(i, cell);
      diag += spec.A(i) * drive * ((a >> i) & 1 ? -1.0 : 1.0);
    }
    h(a, a) += diag;
  }
  return h;
}

std::vector<Eigen::MatrixXcd> step_unitaries(const HamiltonianSpec& spec,
                                             int first_cell, int n_cells) {
  const double dt = spec.dt();
  std::vector<Eigen::MatrixXcd> steps;
  steps.reserve(n_cells);
  for (int n = 0; n < n_cells; ++n) {
    const double mid = (first_cell + n + 0.5) * dt;
    steps.push_back(evolution_step(hamiltonian_at(spec, mid), dt));
  }
  return steps;
}

Eigen::MatrixXcd propagate(const HamiltonianSpec& spec, double t0, double t1) {
  spec.validate();
  if (t0 > t1) throw InvalidArgument("propagate: t0 must be <= t1");
  const int c0 = cell_index(spec, t0);
  const int c1 = cell_index(spec, t1);
  const std::int64_t dim = dim_of(spec.L);
  Eigen::MatrixXcd u = Eigen::MatrixXcd::Identity(dim, dim);
  const double dt = spec.dt();
  for (int n = c0; n < c1; ++n) {
    const Eigen::MatrixXcd step =
        evolution_step(hamiltonian_at(spec, (n + 0.5) * dt), dt);
    u = step * u;
  }
  return u;
}

namespace {

/// Hermitian log of a unitary: eigenphases theta in (-pi, pi] with
/// U = sum_j e^{-i theta_j} |v_j><v_j|, H = sum_j (theta_j / T) |v_j><v_j|.
FloquetResult log_unitary(const Eigen::MatrixXcd& u, double period) {
  // A unitary is normal, so its Schur form is diagonal and the Schur vectors
  // are an orthonormal eigenbasis.
  Eigen::ComplexSchur<Eigen::MatrixXcd> schur(u);
  const auto& q = schur.matrixU();
  FloquetResult out;
  Eigen::VectorXd quasi(u.rows());
  for (Eigen::Index j = 0; j < u.rows(); ++j) {
    const std::complex<double> lambda = schur.matrixT()(j, j);
    double theta = -std::arg(lambda);
    if (theta <= -kPi) theta += 2.0 * kPi;  // fold the closed endpoint
    if (kPi - std::abs(theta) < 1e-12) out.branch_warning = true;
    quasi(j) = theta / period;
  }
  out.matrix = q * quasi.asDiagonal() * q.adjoint();
  out.matrix = 0.5 * (out.matrix + out.matrix.adjoint().eval());
  return out;
}

}  // namespace

FloquetResult floquet_hamiltonian(const HamiltonianSpec& spec, double t0) {
  const Eigen::MatrixXcd u = propagate(spec, t0, t0 + spec.period());
  return log_unitary(u, spec.period());
}

std::vector<FloquetResult> floquet_trajectory(const HamiltonianSpec& spec,
                                              const TimeGrid& grid) {
  spec.validate();
  if (grid.N != spec.N)
    throw InvalidArgument("floquet_trajectory: grid N must match spec N");
  if (spec.h_x.cols() != spec.N)
    throw InvalidArgument(
        "floquet_trajectory: requires a T-periodic spec (h_x with N columns)");
  const double T = spec.period();
  const auto steps = step_unitaries(spec, 0, spec.N);

  // Monodromy recursion: M_{n+1} = u_n M_n u_n^dag with u_{n+N} = u_n.
  Eigen::MatrixXcd m = Eigen::MatrixXcd::Identity(dim_of(spec.L), dim_of(spec.L));
  for (int n = 0; n < spec.N; ++n) m = steps[n] * m;

  std::vector<FloquetResult> out;
  out.reserve(grid.total_points());
  const int offset = grid.offset_one ? 1 : 0;
  for (int shift = 0; shift < offset; ++shift)
    m = steps[shift] * m * steps[shift].adjoint();
  for (int n = 0; n < grid.total_points(); ++n) {
    out.push_back(log_unitary(m, T));
    const int cell = (n + offset) % spec.N;
    m = steps[cell] * m * steps[cell].adjoint();
  }
  return out;
}

Eigen::MatrixXcd micromotion(const Eigen::MatrixXcd& hf0,
                             const Eigen::MatrixXcd& hf1) {
  constexpr double kSpectrumTol = 1e-8;
  if (hf0.rows() != hf1.rows())
    throw InvalidArgument("micromotion: dimension mismatch");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es0(hf0), es1(hf1);
  const Eigen::VectorXd w0 = es0.eigenvalues();
  const Eigen::VectorXd w1 = es1.eigenvalues();
  if ((w0 - w1).cwiseAbs().maxCoeff() > kSpectrumTol)
    throw InvalidArgument("micromotion: spectra differ beyond tolerance");

  const Eigen::Index dim = hf0.rows();
  Eigen::MatrixXcd u = Eigen::MatrixXcd::Zero(dim, dim);
  Eigen::Index lo = 0;
  while (lo < dim) {
    Eigen::Index hi = lo + 1;
    while (hi < dim && w0(hi) - w0(hi - 1) < kSpectrumTol) ++hi;
    const Eigen::Index d = hi - lo;
    const Eigen::MatrixXcd v0 = es0.eigenvectors().middleCols(lo, d);
    const Eigen::MatrixXcd v1 = es1.eigenvectors().middleCols(lo, d);
    // Unitary Procrustes: align V1's intra-cluster gauge against V0.
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(
        v1.adjoint() * v0, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::MatrixXcd w = svd.matrixU() * svd.matrixV().adjoint();
    u += (v1 * w) * v0.adjoint();
    lo = hi;
  }
  return u;
}

ObservableTrajectory evolve_observables(const HamiltonianSpec& spec,
                                        const ProductState& state,
                                        const TimeGrid& grid,
                                        const BasisPtr& basis) {
  spec.validate();
  state.validate();
  if (state.L() != spec.L || basis->L != spec.L)
    throw InvalidArgument("evolve_observables: L mismatch");
  const double dt = spec.dt();
  const int total = grid.total_points();
  const int m = basis->size();

  ObservableTrajectory out;
  out.basis = basis;
  out.grid = grid;
  out.values.resize(m, total);

  Eigen::VectorXcd psi = state.full_state();
  int cell = 0;
  if (grid.offset_one) {
    psi = evolution_step(hamiltonian_at(spec, 0.5 * dt), dt) * psi;
    cell = 1;
  }
  for (int n = 0; n < total; ++n) {
    for (int j = 0; j < m; ++j)
      out.values(j, n) = basis->elements[j].expectation(psi).real();
    if (n + 1 < total) {
      psi = evolution_step(hamiltonian_at(spec, (cell + 0.5) * dt), dt) *
            psi;
      ++cell;
    }
  }
  return out;
}

OperatorGrowthTensor operator_growth(const HamiltonianSpec& spec,
                                     const TimeGrid& grid,
                                     const BasisPtr& basis) {
  spec.validate();
  if (basis->L != spec.L) throw InvalidArgument("operator_growth: L mismatch");
  if (grid.n_periods < 1)
    throw InvalidArgument("operator_growth: grid must cover a period");
  const double dt = spec.dt();
  const double norm = 1.0 / static_cast<double>(dim_of(spec.L));
  const int total = grid.total_points();
  const int m = basis->size();

  OperatorGrowthTensor out;
  out.basis = basis;
  out.grid = grid;
  out.frames.reserve(total);

  std::vector<Eigen::MatrixXcd> b_dense(m);
  for (int j = 0; j < m; ++j) b_dense[j] = basis->elements[j].dense();

  Eigen::MatrixXcd u =
      Eigen::MatrixXcd::Identity(dim_of(spec.L), dim_of(spec.L));
  int cell = 0;
  if (grid.offset_one) {
    u = evolution_step(hamiltonian_at(spec, 0.5 * dt), dt) * u;
    cell = 1;
  }
  for (int n = 0; n < total; ++n) {
    Eigen::MatrixXd frame(m, m);
    for (int i = 0; i < m; ++i) {
      const Eigen::MatrixXcd heis = u.adjoint() * b_dense[i] * u;
      for (int j = 0; j < m; ++j) {
        const std::complex<double> c =
            basis->elements[j].trace_with(heis) * norm;
        frame(i, j) = c.real();  // imaginary part is roundoff for Hermitian B
      }
    }
    out.frames.push_back(std::move(frame));
    if (n + 1 < total) {
      u = evolution_step(hamiltonian_at(spec, (cell + 0.5) * dt), dt) * u;
      ++cell;
    }
  }
  return out;
}

OperatorGrowthTensor extrapolate_growth(const OperatorGrowthTensor& c, int n) {
  if (!c.grid.offset_one)
    throw InvalidArgument(
        "extrapolate_growth: input must live on an offset_one grid ending at T");
  if (c.grid.n_periods != 1)
    throw InvalidArgument("extrapolate_growth: input must span exactly (0, T]");
  if (n < 0) throw InvalidArgument("extrapolate_growth: n must be >= 0");

  OperatorGrowthTensor out;
  out.basis = c.basis;
  out.grid = c.grid;
  out.grid.n_periods = n + 1;
  out.frames.reserve(c.frames.size() * (n + 1));

  const Eigen::MatrixXd& c_period = c.frames.back();
  Eigen::MatrixXd power =
      Eigen::MatrixXd::Identity(c_period.rows(), c_period.cols());
  for (int k = 0; k <= n; ++k) {
    for (const auto& frame : c.frames) out.frames.push_back(frame * power);
    if (k < n) power = c_period * power;
  }
  return out;
}

Eigen::MatrixXcd magnus(const HamiltonianSpec& spec, int order) {
  spec.validate();
  if (order != 0 && order != 1)
    throw InvalidArgument("magnus: order must be 0 or 1");
  const double T = spec.period();
  const double dt = spec.dt();
  const std::int64_t dim = dim_of(spec.L);

  std::vector<Eigen::MatrixXcd> h(spec.N);
  Eigen::MatrixXcd h0 = Eigen::MatrixXcd::Zero(dim, dim);
  for (int n = 0; n < spec.N; ++n) {
    h[n] = hamiltonian_at(spec, (n + 0.5) * dt);
    h0 += h[n];
  }
  h0 *= dt / T;
  if (order == 0) return h0;

  // (1/2iT) int_0^T dt1 int_0^t1 dt2 [H(t1), H(t2)], midpoint rule over the
  // strict lower triangle (the diagonal band commutes with itself).
  Eigen::MatrixXcd prefix = Eigen::MatrixXcd::Zero(dim, dim);
  Eigen::MatrixXcd acc = Eigen::MatrixXcd::Zero(dim, dim);
  for (int n1 = 0; n1 < spec.N; ++n1) {
    acc += h[n1] * prefix - prefix * h[n1];
    prefix += h[n1];
  }
  const Eigen::MatrixXcd h1 = acc * (dt * dt / (2.0 * kImag * T));
  return h0 + h1;
}

Eigen::VectorXd stroboscopic_magnetization(const Eigen::MatrixXcd& h_eff,
                                           const ProductState& state,
                                           double period, int n_periods) {
  const int L = state.L();
  const std::int64_t dim = dim_of(L);
  if (h_eff.rows() != dim)
    throw InvalidArgument("stroboscopic_magnetization: dimension mismatch");
  const Eigen::MatrixXcd u_period = evolution_step(h_eff, period);

  Eigen::VectorXcd psi = state.full_state();
  Eigen::VectorXd mag(n_periods + 1);
  for (int n = 0; n <= n_periods; ++n) {
    double m = 0.0;
    for (std::int64_t a = 0; a < dim; ++a) {
      const double p = std::norm(psi(a));
      double z = 0.0;
      for (int i = 0; i < L; ++i) z += ((a >> i) & 1) ? -1.0 : 1.0;
      m += p * z;
    }
    mag(n) = m / L;
    if (n < n_periods) psi = u_period * psi;
  }
  return mag;
}

Eigen::VectorXd autocorrelation(const OperatorGrowthTensor& c, int i) {
  if (i < 0 || i >= c.basis->size())
    throw InvalidArgument("autocorrelation: basis index out of range");
  Eigen::VectorXd a(static_cast<Eigen::Index>(c.frames.size()));
  for (std::size_t n = 0; n < c.frames.size(); ++n)
    a(static_cast<Eigen::Index>(n)) = c.frames[n](i, i);
  return a;
}

}  // namespace floqfno
