#pragma once

#include <functional>
#include <vector>

#include "floqfno/tensor.hpp"

namespace floqfno {

/// Handle to a node on a Tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Reverse-mode tape over dense real tensors. Forward calls record the
/// primitives needed for the FNO graphs; backward() walks the tape once in
/// reverse and accumulates exact adjoints.
///
/// A tape is single-threaded; run one tape per worker on disjoint data.
/// Leaf nodes may reference external parameter storage (no copy), so the
/// referenced tensors must outlive the tape.
class Tape {
 public:
  /// Leaf referencing external storage (model parameters).
  Var leaf(const Tensor& external);
  /// Leaf owning its value (inputs, targets treated as constants).
  Var constant(Tensor value);

  const Tensor& value(Var v) const { return value_at(v.id); }

  /// Gradient of the last backward() pass; zeros if the node was unreachable.
  Tensor gradient(Var v) const;

  /// Adds the gradient of v (if any) into `into` without copying.
  void accumulate_gradient(Var v, Tensor& into) const;

  // --- primitives ------------------------------------------------------
  Var matmul(Var a, Var b);             // (m,k) x (k,n) -> (m,n)
  Var add(Var a, Var b);                // same shape
  Var add_bias(Var x, Var bias);        // (C,N) + (C) broadcast over columns
  Var multiply(Var a, Var b);           // elementwise, same shape
  Var scale(Var a, double c);
  Var tanh(Var a);
  Var sse(Var a, Var b);                // scalar sum of squared differences
  Var reshape(Var a, std::vector<long> shape);
  Var slice_cols(Var a, long c0, long c1);   // (R,C) -> (R, c1-c0)
  /// Keeps the first keep_len columns of each length-seg_len segment:
  /// (C, S*seg_len) -> (C, S*keep_len).
  Var slice_segments(Var a, long seg_len, long keep_len);
  Var concat_cols(const std::vector<Var>& parts);  // matching row counts
  /// Pads each of the `segments` equal time windows of every row:
  /// (C, S*N) -> (C, S*(N+n)).
  Var pad_time(Var a, const PaddingPolicy& policy, long segments = 1);

  /// Real FFT along the time axis, forward-scaled by 1/N so retained-mode
  /// content is grid-size invariant. Input (C,N) with N even; output is the
  /// stacked half-spectrum (2,K,C), K = N/2+1, layer 0 real / 1 imaginary
  /// (mode-major so per-mode channel vectors are contiguous). With S > 1
  /// segments the input is (C, S*N) and the spectrum (2, K, C*S), column
  /// index c*S + s, so each mode slice is a row-major (C, S) matrix.
  Var rfft(Var a, long segments = 1);
  /// Inverse of rfft: (2,K,C*S) -> (C,S*n_out) with K = n_out/2+1 (unscaled
  /// synthesis, so irfft(rfft(x)) == x).
  Var irfft(Var spec, long n_out, long segments = 1);
  /// Per-mode complex matrix multiply for modes below k_max, zero above:
  /// spectrum (2,K,Cin*S) with weights (k_max,Cout,Cin) -> (2,K,Cout*S).
  /// Batched segments make the weight update a GEMM.
  Var mode_multiply(Var spec, Var w_re, Var w_im, long segments = 1);

  /// Reverse pass from a scalar loss. Gradients for all reachable nodes;
  /// unreachable leaves read back as zeros.
  void backward(Var loss);

  int node_count() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    Tensor owned;
    const Tensor* external = nullptr;
    std::vector<int> inputs;
    std::function<void(Tape&, int)> backprop;  // empty for leaves
  };

  const Tensor& value_at(int id) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    return n.external ? *n.external : n.owned;
  }
  Tensor& grad_at(int id);
  bool has_grad(int id) const {
    return id < static_cast<int>(has_grad_.size()) && has_grad_[static_cast<std::size_t>(id)];
  }
  Var push(Tensor value, std::vector<int> inputs,
           std::function<void(Tape&, int)> backprop);
  void check(Var v) const;

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  std::vector<char> has_grad_;
};

}  // namespace floqfno
