#pragma once

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "floqfno/common.hpp"

namespace floqfno {

enum class Axis : std::uint8_t { X = 0, Y = 1, Z = 2 };

inline char axis_char(Axis a) { return "XYZ"[static_cast<int>(a)]; }

/// A tensor product of single-site Pauli operators on a chain of `length`
/// qubits. Sites not listed carry the identity; an empty site list is the
/// identity string. Site indices are strictly increasing.
///
/// Site i maps to bit i of a computational basis index. The dense matrix is
/// a signed permutation: column a has its only entry at row a^flip_mask with
/// value i^{#Y} * (-1)^{popcount(a & yz_mask)}.
class PauliString {
 public:
  PauliString(int length, std::vector<std::pair<int, Axis>> sites);

  int length() const { return length_; }
  const std::vector<std::pair<int, Axis>>& sites() const { return sites_; }
  bool is_identity() const { return sites_.empty(); }
  int weight() const { return static_cast<int>(sites_.size()); }

  std::uint64_t flip_mask() const { return flip_mask_; }

  /// Amplitude of B|a> = amplitude(a) |a ^ flip_mask>.
  std::complex<double> amplitude(std::uint64_t basis_state) const {
    const int parity =
        __builtin_popcountll(basis_state & yz_mask_) & 1;
    return parity ? -prefactor_ : prefactor_;
  }

  Eigen::MatrixXcd dense() const;
  Eigen::VectorXcd apply(const Eigen::VectorXcd& psi) const;
  /// <psi| B |psi>; exactly real up to roundoff, returned as computed.
  std::complex<double> expectation(const Eigen::VectorXcd& psi) const;
  /// Tr(H B) in O(2^L) using the signed-permutation form.
  std::complex<double> trace_with(const Eigen::MatrixXcd& h) const;

  /// Canonical key for deduplication and ordering-stable lookups, e.g. "X0 Z3".
  std::string key() const;

  bool operator==(const PauliString& other) const {
    return length_ == other.length_ && sites_ == other.sites_;
  }

 private:
  int length_;
  std::vector<std::pair<int, Axis>> sites_;
  std::uint64_t flip_mask_ = 0;
  std::uint64_t yz_mask_ = 0;
  std::complex<double> prefactor_{1.0, 0.0};
};

/// Ordered set of k-local Pauli strings, orthonormal under
/// (A|B) = Tr(A^dag B) / 2^L. The identity string is always excluded.
struct LocalBasis {
  int L = 0;
  int k = 0;
  bool periodic = true;
  std::vector<PauliString> elements;

  int size() const { return static_cast<int>(elements.size()); }
  const PauliString& operator[](int j) const { return elements[j]; }

  /// Index lookup by canonical key; -1 if absent.
  int index_of(const PauliString& p) const;

  /// JSON manifest: ordered array of site/axis pair arrays.
  std::string manifest_json() const;
};

using BasisPtr = std::shared_ptr<const LocalBasis>;

/// One- and two-local nearest-neighbour observable set
/// {sigma_i^a} then {sigma_i^a sigma_{i+1}^a'}: 12*L elements (15 at L=2,
/// where wrap-around duplicates collapse).
LocalBasis enumerate_observable_basis(int L);

/// Contiguous-window k-local basis: widths 1..k, periodic windows, first and
/// last window site non-identity, interior sites free; duplicates removed.
LocalBasis enumerate_k_local_basis(int L, int k);

inline BasisPtr make_observable_basis(int L) {
  return std::make_shared<const LocalBasis>(enumerate_observable_basis(L));
}
inline BasisPtr make_k_local_basis(int L, int k) {
  return std::make_shared<const LocalBasis>(enumerate_k_local_basis(L, k));
}

/// Real coefficients of a Hermitian operator in a LocalBasis.
struct HermitianCoefficients {
  BasisPtr basis;
  Eigen::VectorXd coeffs;
};

inline constexpr double kHermiticityTol = 1e-10;

/// coeffs[j] = Re Tr(H B_j) / 2^L. Throws ContractViolation if H is not
/// Hermitian within kHermiticityTol, NumericalInconsistency if any trace has
/// imaginary part above tolerance.
HermitianCoefficients project(const Eigen::MatrixXcd& h, const BasisPtr& basis);

/// Sum_j coeffs[j] B_j as a dense matrix; Hermitian by construction.
Eigen::MatrixXcd reconstruct(const HermitianCoefficients& c);

}  // namespace floqfno
