#include "floqfno/pauli.hpp"

#include <algorithm>
#include <map>
#include <sstream>

namespace floqfno {

namespace {
constexpr std::complex<double> kImag{0.0, 1.0};
}

PauliString::PauliString(int length, std::vector<std::pair<int, Axis>> sites)
    : length_(length), sites_(std::move(sites)) {
  if (length_ < 1 || length_ > 30)
    throw InvalidArgument("PauliString: length out of range");
  int prev = -1;
  int n_y = 0;
  for (const auto& [site, axis] : sites_) {
    if (site <= prev)
      throw InvalidArgument("PauliString: site indices must strictly increase");
    if (site >= length_)
      throw InvalidArgument("PauliString: site index exceeds chain length");
    prev = site;
    const std::uint64_t bit = std::uint64_t{1} << site;
    switch (axis) {
      case Axis::X:
        flip_mask_ |= bit;
        break;
      case Axis::Y:
        flip_mask_ |= bit;
        yz_mask_ |= bit;
        ++n_y;
        break;
      case Axis::Z:
        yz_mask_ |= bit;
        break;
    }
  }
  // i^{#Y}; the (-1)^{bits} part is per basis state.
  switch (n_y & 3) {
    case 0: prefactor_ = {1.0, 0.0}; break;
    case 1: prefactor_ = kImag; break;
    case 2: prefactor_ = {-1.0, 0.0}; break;
    case 3: prefactor_ = -kImag; break;
  }
}

Eigen::MatrixXcd PauliString::dense() const {
  const std::int64_t dim = std::int64_t{1} << length_;
  Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(dim, dim);
  for (std::int64_t a = 0; a < dim; ++a)
    m(static_cast<std::int64_t>(a ^ flip_mask_), a) = amplitude(a);
  return m;
}

Eigen::VectorXcd PauliString::apply(const Eigen::VectorXcd& psi) const {
  const std::int64_t dim = std::int64_t{1} << length_;
  if (psi.size() != dim)
    throw InvalidArgument("PauliString::apply: state dimension mismatch");
  Eigen::VectorXcd out(dim);
  for (std::int64_t a = 0; a < dim; ++a)
    out(static_cast<std::int64_t>(a ^ flip_mask_)) = amplitude(a) * psi(a);
  return out;
}

std::complex<double> PauliString::expectation(const Eigen::VectorXcd& psi) const {
  const std::int64_t dim = std::int64_t{1} << length_;
  std::complex<double> acc = 0.0;
  for (std::int64_t a = 0; a < dim; ++a)
    acc += std::conj(psi(static_cast<std::int64_t>(a ^ flip_mask_))) *
           amplitude(a) * psi(a);
  return acc;
}

std::complex<double> PauliString::trace_with(const Eigen::MatrixXcd& h) const {
  const std::int64_t dim = std::int64_t{1} << length_;
  std::complex<double> acc = 0.0;
  // Tr(H B) = sum_a H(a, a ^ flip) * amplitude(a): B's column a has its only
  // entry at row a ^ flip.
  for (std::int64_t a = 0; a < dim; ++a)
    acc += h(a, static_cast<std::int64_t>(a ^ flip_mask_)) *
           amplitude(static_cast<std::uint64_t>(a));
  return acc;
}

std::string PauliString::key() const {
  std::ostringstream os;
  for (const auto& [site, axis] : sites_) os << axis_char(axis) << site << ' ';
  return os.str();
}

int LocalBasis::index_of(const PauliString& p) const {
  for (int j = 0; j < size(); ++j)
    if (elements[j] == p) return j;
  return -1;
}

std::string LocalBasis::manifest_json() const {
  std::ostringstream os;
  os << '[';
  for (int j = 0; j < size(); ++j) {
    if (j) os << ',';
    os << '[';
    const auto& sites = elements[j].sites();
    for (std::size_t s = 0; s < sites.size(); ++s) {
      if (s) os << ',';
      os << "[" << sites[s].first << ",\"" << axis_char(sites[s].second)
         << "\"]";
    }
    os << ']';
  }
  os << ']';
  return os.str();
}

namespace {

const Axis kAxes[3] = {Axis::X, Axis::Y, Axis::Z};

void push_unique(std::vector<PauliString>& out,
                 std::map<std::string, int>& seen, PauliString p) {
  auto key = p.key();
  if (seen.emplace(std::move(key), static_cast<int>(out.size())).second)
    out.push_back(std::move(p));
}

std::vector<std::pair<int, Axis>> sorted_sites(
    std::vector<std::pair<int, Axis>> sites) {
  std::sort(sites.begin(), sites.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  return sites;
}

}  // namespace

LocalBasis enumerate_observable_basis(int L) {
  if (L < 2) throw InvalidArgument("enumerate_observable_basis: L must be >= 2");
  LocalBasis basis;
  basis.L = L;
  basis.k = 2;
  std::map<std::string, int> seen;
  for (int i = 0; i < L; ++i)
    for (Axis a : kAxes)
      push_unique(basis.elements, seen, PauliString(L, {{i, a}}));
  for (int i = 0; i < L; ++i) {
    const int j = (i + 1) % L;
    for (Axis a : kAxes)
      for (Axis b : kAxes)
        push_unique(basis.elements, seen,
                    PauliString(L, sorted_sites({{i, a}, {j, b}})));
  }
  return basis;
}

LocalBasis enumerate_k_local_basis(int L, int k) {
  if (k < 1) throw InvalidArgument("enumerate_k_local_basis: k must be >= 1");
  if (k > L) throw InvalidArgument("enumerate_k_local_basis: k exceeds L");
  LocalBasis basis;
  basis.L = L;
  basis.k = k;
  std::map<std::string, int> seen;
  for (int width = 1; width <= k; ++width) {
    for (int start = 0; start < L; ++start) {
      // Odometer over window axes: first/last in {X,Y,Z}, interior in
      // {I,X,Y,Z} (encoded 0..3 with 0 = identity; endpoints use 1..3).
      std::vector<int> code(width, 0);
      code.front() = 1;
      if (width > 1) code.back() = 1;
      while (true) {
        std::vector<std::pair<int, Axis>> sites;
        for (int s = 0; s < width; ++s)
          if (code[s] != 0)
            sites.emplace_back((start + s) % L, kAxes[code[s] - 1]);
        push_unique(basis.elements, seen,
                    PauliString(L, sorted_sites(std::move(sites))));
        // Advance, leftmost slowest.
        int pos = width - 1;
        for (; pos >= 0; --pos) {
          const int lo = (pos == 0 || pos == width - 1) ? 1 : 0;
          if (code[pos] < 3) {
            ++code[pos];
            std::fill(code.begin() + pos + 1, code.end(), 0);
            for (int s = pos + 1; s < width; ++s)
              if (s == width - 1) code[s] = 1;
            break;
          }
          code[pos] = lo;
        }
        if (pos < 0) break;
      }
    }
  }
  return basis;
}

HermitianCoefficients project(const Eigen::MatrixXcd& h, const BasisPtr& basis) {
  const double herm = (h - h.adjoint()).cwiseAbs().maxCoeff();
  if (herm > kHermiticityTol)
    throw ContractViolation("project: input not Hermitian (max |H - H^dag| = " +
                            std::to_string(herm) + ")");
  const double norm = 1.0 / static_cast<double>(std::int64_t{1} << basis->L);
  HermitianCoefficients out;
  out.basis = basis;
  out.coeffs.resize(basis->size());
  for (int j = 0; j < basis->size(); ++j) {
    const std::complex<double> tr = basis->elements[j].trace_with(h) * norm;
    if (std::abs(tr.imag()) > kHermiticityTol)
      throw NumericalInconsistency(
          "project: trace with " + basis->elements[j].key() +
          " has imaginary part " + std::to_string(tr.imag()));
    out.coeffs(j) = tr.real();
  }
  return out;
}

Eigen::MatrixXcd reconstruct(const HermitianCoefficients& c) {
  const std::int64_t dim = std::int64_t{1} << c.basis->L;
  Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(dim, dim);
  for (int j = 0; j < c.basis->size(); ++j) {
    const double w = c.coeffs(j);
    if (w == 0.0) continue;
    const auto& p = c.basis->elements[j];
    for (std::int64_t a = 0; a < dim; ++a)
      h(static_cast<std::int64_t>(a ^ p.flip_mask()), a) += w * p.amplitude(a);
  }
  return h;
}

}  // namespace floqfno
