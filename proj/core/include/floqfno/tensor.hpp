#pragma once

#include <cstdint>
#include <cstring>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "floqfno/common.hpp"

namespace floqfno {

namespace detail {
/// 64-byte-aligned allocator that skips value-initialization. The fixed
/// alignment keeps vectorized kernels on an address-independent code path
/// (bitwise-reproducible training); tensors built through the public
/// constructors are still zeroed explicitly.
template <class T>
struct TensorAllocator {
  using value_type = T;
  TensorAllocator() = default;
  template <class U>
  TensorAllocator(const TensorAllocator<U>&) noexcept {}
  template <class U>
  struct rebind {
    using other = TensorAllocator<U>;
  };
  T* allocate(std::size_t n) {
    return static_cast<T*>(
        ::operator new(n * sizeof(T), std::align_val_t(64)));
  }
  void deallocate(T* p, std::size_t n) noexcept {
    ::operator delete(p, n * sizeof(T), std::align_val_t(64));
  }
  template <class U>
  void construct(U* /*p*/) noexcept {}
  template <class U, class... Args>
  void construct(U* p, Args&&... args) {
    ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
  }
  bool operator==(const TensorAllocator&) const { return true; }
  bool operator!=(const TensorAllocator&) const { return false; }
};
}  // namespace detail

/// Dense row-major real tensor. Rank-2 tensors are (rows, cols) with
/// contiguous rows; the FNO uses (channels, time) so each channel's time
/// series is contiguous for the FFT.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<long> shape) : shape_(std::move(shape)) {
    data_.resize(static_cast<std::size_t>(checked_size(shape_)));
    std::memset(data_.data(), 0, data_.size() * sizeof(double));
  }
  Tensor(std::vector<long> shape, const std::vector<double>& data)
      : shape_(std::move(shape)), data_(data.begin(), data.end()) {
    if (static_cast<long>(data_.size()) != checked_size(shape_))
      throw InvalidArgument("Tensor: data length does not match shape");
  }

  /// Uninitialized storage for outputs that are fully overwritten.
  static Tensor uninit(std::vector<long> shape) {
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_.resize(static_cast<std::size_t>(checked_size(t.shape_)));
    return t;
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  const std::vector<long>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  long dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  long size() const { return static_cast<long>(data_.size()); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](long i) { return data_[static_cast<std::size_t>(i)]; }
  double operator[](long i) const { return data_[static_cast<std::size_t>(i)]; }

  /// Row-major 2-D access.
  double& at(long r, long c) { return data_[static_cast<std::size_t>(r * shape_[1] + c)]; }
  double at(long r, long c) const { return data_[static_cast<std::size_t>(r * shape_[1] + c)]; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
  bool all_finite() const;
  std::string shape_str() const;

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

 private:
  static long checked_size(const std::vector<long>& shape) {
    long n = 1;
    for (long d : shape) {
      if (d <= 0) throw InvalidArgument("Tensor: shape entries must be positive");
      n *= d;
    }
    return n;
  }

  std::vector<long> shape_;
  std::vector<double, detail::TensorAllocator<double>> data_;
};

enum class PadMode { None, Zero, Reflect, Circular };

struct PaddingPolicy {
  PadMode mode = PadMode::None;
  long n = 0;

  long padded_length(long length) const {
    return mode == PadMode::None ? length : length + n;
  }
};

PadMode pad_mode_from_string(const std::string& s);
std::string to_string(PadMode m);

}  // namespace floqfno
