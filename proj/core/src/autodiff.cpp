#include "floqfno/autodiff.hpp"

#include <fftw3.h>

#include <Eigen/Dense>
#include <cmath>
#include <cstring>
#include <map>
#include <mutex>


namespace floqfno {

namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;
// Column-major views of row-major buffers are the transposed matrices; GEMMs
// run fastest through them.
using MapMatT = Eigen::Map<Eigen::MatrixXd>;
using CMapMatT = Eigen::Map<const Eigen::MatrixXd>;

/// Per-thread FFTW workspace. Plan creation is serialized globally (the FFTW
/// planner is not thread-safe); execution runs on thread-local buffers.
class FftWorkspace {
 public:
  static FftWorkspace& instance() {
    thread_local FftWorkspace ws;
    return ws;
  }

  void r2c(const double* in, long n, std::complex<double>* out) {
    Plans& p = plans(n);
    std::memcpy(p.real, in, static_cast<std::size_t>(n) * sizeof(double));
    fftw_execute(p.fwd);
    std::memcpy(out, p.cplx,
                static_cast<std::size_t>(n / 2 + 1) * sizeof(fftw_complex));
  }

  void c2r(const std::complex<double>* in, long n, double* out) {
    Plans& p = plans(n);
    std::memcpy(p.cplx, in,
                static_cast<std::size_t>(n / 2 + 1) * sizeof(fftw_complex));
    fftw_execute(p.bwd);
    std::memcpy(out, p.real, static_cast<std::size_t>(n) * sizeof(double));
  }

 private:
  struct Plans {
    double* real = nullptr;
    fftw_complex* cplx = nullptr;
    fftw_plan fwd = nullptr;
    fftw_plan bwd = nullptr;
  };

  Plans& plans(long n) {
    auto it = plans_.find(n);
    if (it != plans_.end()) return it->second;
    static std::mutex planner_mutex;
    std::lock_guard<std::mutex> lock(planner_mutex);
    Plans p;
    p.real = fftw_alloc_real(static_cast<std::size_t>(n));
    p.cplx = fftw_alloc_complex(static_cast<std::size_t>(n / 2 + 1));
    p.fwd = fftw_plan_dft_r2c_1d(static_cast<int>(n), p.real, p.cplx,
                                 FFTW_ESTIMATE);
    p.bwd = fftw_plan_dft_c2r_1d(static_cast<int>(n), p.cplx, p.real,
                                 FFTW_ESTIMATE);
    return plans_.emplace(n, p).first->second;
  }

  ~FftWorkspace() {
    for (auto& [n, p] : plans_) {
      fftw_destroy_plan(p.fwd);
      fftw_destroy_plan(p.bwd);
      fftw_free(p.real);
      fftw_free(p.cplx);
    }
  }

  std::map<long, Plans> plans_;
};

}  // namespace

Var Tape::leaf(const Tensor& external) {
  Node n;
  n.external = &external;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::constant(Tensor value) {
  Node n;
  n.owned = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::push(Tensor value, std::vector<int> inputs,
               std::function<void(Tape&, int)> backprop) {
  Node n;
  n.owned = std::move(value);
  n.inputs = std::move(inputs);
  n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

void Tape::check(Var v) const {
  if (!v.valid() || v.id >= static_cast<int>(nodes_.size()))
    throw InvalidArgument("Tape: invalid node handle");
}

Tensor& Tape::grad_at(int id) {
  if (grads_.size() < nodes_.size()) {
    grads_.resize(nodes_.size());
    has_grad_.resize(nodes_.size(), 0);
  }
  if (!has_grad_[static_cast<std::size_t>(id)]) {
    grads_[static_cast<std::size_t>(id)] = Tensor(value_at(id).shape());
    has_grad_[static_cast<std::size_t>(id)] = 1;
  }
  return grads_[static_cast<std::size_t>(id)];
}

Tensor Tape::gradient(Var v) const {
  check(v);
  if (has_grad(v.id)) return grads_[static_cast<std::size_t>(v.id)];
  return Tensor(value_at(v.id).shape());
}

void Tape::accumulate_gradient(Var v, Tensor& into) const {
  check(v);
  if (!has_grad(v.id)) return;
  const Tensor& g = grads_[static_cast<std::size_t>(v.id)];
  Eigen::Map<Eigen::VectorXd>(into.data(), into.size()) +=
      Eigen::Map<const Eigen::VectorXd>(g.data(), g.size());
}

Var Tape::matmul(Var a, Var b) {
  check(a);
  check(b);
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (ta.rank() != 2 || tb.rank() != 2 || ta.dim(1) != tb.dim(0))
    throw InvalidArgument("matmul: incompatible shapes " + ta.shape_str() +
                          " x " + tb.shape_str());
  const long m = ta.dim(0), k = ta.dim(1), n = tb.dim(1);
  Tensor out = Tensor::uninit({m, n});
  // C^T = B^T A^T on column-major views of the row-major buffers.
  MapMatT(out.data(), n, m).noalias() =
      CMapMatT(tb.data(), n, k) * CMapMatT(ta.data(), k, m);
  return push(std::move(out), {a.id, b.id}, [m, k, n](Tape& t, int self) {
    const auto& node = t.nodes_[static_cast<std::size_t>(self)];
    const int ia = node.inputs[0], ib = node.inputs[1];
    CMapMatT g(t.grad_at(self).data(), n, m);      // g^T
    CMapMatT va(t.value_at(ia).data(), k, m);      // A^T
    CMapMatT vb(t.value_at(ib).data(), n, k);      // B^T
    // dA^T += B g^T;  dB^T += g^T A.
    MapMatT(t.grad_at(ia).data(), k, m).noalias() += vb.transpose() * g;
    MapMatT(t.grad_at(ib).data(), n, k).noalias() += g * va.transpose();
  });
}

Var Tape::add(Var a, Var b) {
  check(a);
  check(b);
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (!ta.same_shape(tb))
    throw InvalidArgument("add: shape mismatch " + ta.shape_str() + " vs " +
                          tb.shape_str());
  Tensor out = Tensor::uninit(ta.shape());
  Eigen::Map<Eigen::VectorXd>(out.data(), out.size()) =
      Eigen::Map<const Eigen::VectorXd>(ta.data(), ta.size()) +
      Eigen::Map<const Eigen::VectorXd>(tb.data(), tb.size());
  return push(std::move(out), {a.id, b.id}, [](Tape& t, int self) {
    const auto& node = t.nodes_[static_cast<std::size_t>(self)];
    const Tensor& g = t.grad_at(self);
    for (int in : node.inputs) {
      Tensor& gi = t.grad_at(in);
      Eigen::Map<Eigen::VectorXd>(gi.data(), gi.size()) +=
          Eigen::Map<const Eigen::VectorXd>(g.data(), g.size());
    }
  });
}

Var Tape::add_bias(Var x, Var bias) {
  check(x);
  check(bias);
  const Tensor& tx = value(x);
  const Tensor& tb = value(bias);
  if (tx.rank() != 2 || tb.rank() != 1 || tb.dim(0) != tx.dim(0))
    throw InvalidArgument("add_bias: shape mismatch " + tx.shape_str() +
                          " vs " + tb.shape_str());
  const long c = tx.dim(0), n = tx.dim(1);
  Tensor out = Tensor::uninit(tx.shape());
  for (long r = 0; r < c; ++r) {
    const double bias_r = tb[r];
    const double* src = tx.data() + r * n;
    double* dst = out.data() + r * n;
    Eigen::Map<Eigen::ArrayXd>(dst, n) =
        Eigen::Map<const Eigen::ArrayXd>(src, n) + bias_r;
  }
  return push(std::move(out), {x.id, bias.id}, [c, n](Tape& t, int self) {
    const auto& node = t.nodes_[static_cast<std::size_t>(self)];
    const Tensor& g = t.grad_at(self);
    Tensor& gx = t.grad_at(node.inputs[0]);
    Tensor& gb = t.grad_at(node.inputs[1]);
    for (long r = 0; r < c; ++r) {
      double s = 0.0;
      for (long j = 0; j < n; ++j) {
        gx.at(r, j) += g.at(r, j);
        s += g.at(r, j);
      }
      gb[r] += s;
    }
  });
}

Var Tape::multiply(Var a, Var b) {
  check(a);
  check(b);
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (!ta.same_shape(tb))
    throw InvalidArgument("multiply: shape mismatch " + ta.shape_str() +
                          " vs " + tb.shape_str());
  Tensor out = Tensor::uninit(ta.shape());
  for (long i = 0; i < ta.size(); ++i) out[i] = ta[i] * tb[i];
  return push(std::move(out), {a.id, b.id}, [](Tape& t, int self) {
    const auto& node = t.nodes_[static_cast<std::size_t>(self)];
    const Tensor& g = t.grad_at(self);
    const Tensor& va = t.value_at(node.inputs[0]);
    const Tensor& vb = t.value_at(node.inputs[1]);
    Tensor& ga = t.grad_at(node.inputs[0]);
    Tensor& gb = t.grad_at(node.inputs[1]);
    for (long i = 0; i < g.size(); ++i) {
      ga[i] += g[i] * vb[i];
      gb[i] += g[i] * va[i];
    }
  });
}

Var Tape::scale(Var a, double c) {
  check(a);
  const Tensor& ta = value(a);
  Tensor out = Tensor::uninit(ta.shape());
  for (long i = 0; i < ta.size(); ++i) out[i] = c * ta[i];
  return push(std::move(out), {a.id}, [c](Tape& t, int self) {
    const auto& node = t.nodes_[static_cast<std::size_t>(self)];
    const Tensor& g = t.grad_at(self);
    Tensor& ga = t.grad_at(node.inputs[0]);
    for (long i = 0; i < g.size(); ++i) ga[i] += c * g[i];
  });
}

Var Tape::tanh(Var a) {
  check(a);
  const Tensor& ta = value(a);
  Tensor out = Tensor::uninit(ta.shape());
  // tanh(x) = 1 - 2/(exp(2x)+1) rides Eigen's vectorized exp; accurate to
  // a few ulp across the range.
  Eigen::Map<Eigen::ArrayXd>(out.data(), out.size()) =
      1.0 -
      2.0 / ((2.0 * Eigen::Map<const Eigen::ArrayXd>(ta.data(), ta.size()))
                 .exp() +
             1.0);
  return push(std::move(out), {a.id}, [](Tape& t, int self) {
    const auto& node = t.nodes_[static_cast<std::size_t>(self)];
    const Tensor& g = t.grad_at(self);
    const Tensor& y = t.value_at(self);
    Tensor& ga = t.grad_at(node.inputs[0]);
    Eigen::Map<Eigen::ArrayXd>(ga.data(), ga.size()) +=
        Eigen::Map<const Eigen::ArrayXd>(g.data(), g.size()) *
        (1.0 - Eigen::Map<const Eigen::ArrayXd>(y.data(), y.size()).square());
  });
}

Var Tape::sse(Var a, Var b) {
  check(a);
  check(b);
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (!ta.same_shape(tb))
    throw InvalidArgument("sse: shape mismatch " + ta.shape_str() + " vs " +
                          tb.shape_str());
  double s = 0.0;
  for (long i = 0; i < ta.size(); ++i) {
    const double d = ta[i] - tb[i];
    s += d * d;
  }
  return push(Tensor::scalar(s), {a.id, b.id}, [](Tape& t, int self) {
    const auto& node = t.nodes_[static_cast<std::size_t>(self)];
    const double g = t.grad_at(self)[0];
    const Tensor& va = t.value_at(node.inputs[0]);
    const Tensor& vb = t.value_at(node.inputs[1]);
    Tensor& ga = t.grad_at(node.inputs[0]);
    Tensor& gb = t.grad_at(node.inputs[1]);
    for (long i = 0; i < va.size(); ++i) {
      const double d = 2.0 * g * (va[i] - vb[i]);
      ga[i] += d;
      gb[i] -= d;
    }
  });
}

Var Tape::reshape(Var a, std::vector<long> shape) {
  check(a);
  const Tensor& ta = value(a);
  Tensor out = Tensor::uninit(std::move(shape));
  if (out.size() != ta.size())
    throw InvalidArgument("reshape: element count mismatch " + ta.shape_str() +
                          " -> " + out.shape_str());
  std::copy(ta.data(), ta.data() + ta.size(), out.data());
  return push(std::move(out), {a.id}, [](Tape& t, int self) {
    const auto& node = t.nodes_[static_cast<std::size_t>(self)];
    const Tensor& g = t.grad_at(self);
    Tensor& ga = t.grad_at(node.inputs[0]);
    for (long i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Var Tape::slice_cols(Var a, long c0, long c1) {
  check(a);
  const Tensor& ta = value(a);
  if (ta.rank() != 2 || c0 < 0 || c1 > ta.dim(1) || c0 >= c1)
    throw InvalidArgument("slice_cols: bad range on " + ta.shape_str());
  const long r = ta.dim(0), w = c1 - c0;
  Tensor out = Tensor::uninit({r, w});
  for (long i = 0; i < r; ++i)
    for (long j = 0; j < w; ++j) out.at(i, j) = ta.at(i, c0 + j);
  return push(std::move(out), {a.id}, [r, w, c0](Tape& t, int self) {
    const auto& node = t.nodes_[static_cast<std::size_t>(self)];
    const Tensor& g = t.grad_at(self);
    Tensor& ga = t.grad_at(node.inputs[0]);
    for (long i = 0; i < r; ++i)
      for (long j = 0; j < w; ++j) ga.at(i, c0 + j) += g.at(i, j);
  });
}

Var Tape::slice_segments(Var a, long seg_len, long keep_len) {
  check(a);
  const Tensor& ta = value(a);
  if (ta.rank() != 2 || seg_len < 1 || keep_len < 1 || keep_len > seg_len ||
      ta.dim(1) % seg_len != 0)
    throw InvalidArgument("slice_segments: bad segmentation of " + ta.shape_str());
  const long r = ta.dim(0), s_count = ta.dim(1) / seg_len;
  if (keep_len == seg_len) return a;
  Tensor out = Tensor::uninit({r, s_count * keep_len});
  for (long i = 0; i < r; ++i)
    for (long b = 0; b < s_count; ++b)
      for (long j = 0; j < keep_len; ++j)
        out.at(i, b * keep_len + j) = ta.at(i, b * seg_len + j);
  return push(std::move(out), {a.id},
              [r, s_count, seg_len, keep_len](Tape& t, int self) {
                const auto& node = t.nodes_[static_cast<std::size_t>(self)];
                const Tensor& g = t.grad_at(self);
                Tensor& ga = t.grad_at(node.inputs[0]);
                for (long i = 0; i < r; ++i)
                  for (long b = 0; b < s_count; ++b)
                    for (long j = 0; j < keep_len; ++j)
                      ga.at(i, b * seg_len + j) += g.at(i, b * keep_len + j);
              });
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw InvalidArgument("concat_cols: no inputs");
  long rows = -1, cols = 0;
  std::vector<int> ids;
  for (Var v : parts) {
    check(v);
    const Tensor& tv = value(v);
    if (tv.rank() != 2) throw InvalidArgument("concat_cols: rank-2 inputs required");
    if (rows < 0) rows = tv.dim(0);
    if (tv.dim(0) != rows)
      throw InvalidArgument("concat_cols: row count mismatch");
    cols += tv.dim(1);
    ids.push_back(v.id);
  }
  Tensor out = Tensor::uninit({rows, cols});
  long off = 0;
  for (Var v : parts) {
    const Tensor& tv = value(v);
    for (long i = 0; i < rows; ++i)
      for (long j = 0; j < tv.dim(1); ++j) out.at(i, off + j) = tv.at(i, j);
    off += tv.dim(1);
  }
  return push(std::move(out), std::move(ids), [rows](Tape& t, int self) {
    const auto& node = t.nodes_[static_cast<std::size_t>(self)];
    const Tensor& g = t.grad_at(self);
    long off = 0;
    for (int in : node.inputs) {
      Tensor& gi = t.grad_at(in);
      const long w = gi.dim(1);
      for (long i = 0; i < rows; ++i)
        for (long j = 0; j < w; ++j) gi.at(i, j) += g.at(i, off + j);
      off += w;
    }
  });
}

Var Tape::pad_time(Var a, const PaddingPolicy& policy, long segments) {
  check(a);
  if (policy.mode == PadMode::None || policy.n == 0) return a;
  const Tensor& ta = value(a);
  if (ta.rank() != 2 || segments < 1 || ta.dim(1) % segments != 0)
    throw InvalidArgument("pad_time: bad segmentation of " + ta.shape_str());
  const long c = ta.dim(0), n = ta.dim(1) / segments, p = policy.n;
  if (p < 0 || p >= n)
    throw InvalidArgument("pad_time: require 0 <= n_padding < N (got n_padding=" +
                          std::to_string(p) + ", N=" + std::to_string(n) + ")");
  Tensor out = Tensor::uninit({c, segments * (n + p)});
  const PadMode mode = policy.mode;
  for (long i = 0; i < c; ++i) {
    for (long b = 0; b < segments; ++b) {
      const long src = b * n, dst = b * (n + p);
      for (long j = 0; j < n; ++j) out.at(i, dst + j) = ta.at(i, src + j);
      for (long j = 0; j < p; ++j) {
        double v = 0.0;
        if (mode == PadMode::Reflect) v = ta.at(i, src + n - 2 - j);
        else if (mode == PadMode::Circular) v = ta.at(i, src + j);
        out.at(i, dst + n + j) = v;
      }
    }
  }
  return push(std::move(out), {a.id},
              [c, n, p, mode, segments](Tape& t, int self) {
                const auto& node = t.nodes_[static_cast<std::size_t>(self)];
                const Tensor& g = t.grad_at(self);
                Tensor& ga = t.grad_at(node.inputs[0]);
                for (long i = 0; i < c; ++i) {
                  for (long b = 0; b < segments; ++b) {
                    const long src = b * n, dst = b * (n + p);
                    for (long j = 0; j < n; ++j) ga.at(i, src + j) += g.at(i, dst + j);
                    for (long j = 0; j < p; ++j) {
                      if (mode == PadMode::Reflect)
                        ga.at(i, src + n - 2 - j) += g.at(i, dst + n + j);
                      else if (mode == PadMode::Circular)
                        ga.at(i, src + j) += g.at(i, dst + n + j);
                    }
                  }
                }
              });
}

Var Tape::rfft(Var a, long segments) {
  check(a);
  const Tensor& ta = value(a);
  if (ta.rank() != 2 || segments < 1 || ta.dim(1) % segments != 0)
    throw InvalidArgument("rfft: bad segmentation of " + ta.shape_str());
  const long c = ta.dim(0), n = ta.dim(1) / segments;
  if (n % 2 != 0) throw InvalidArgument("rfft: FFT length must be even");
  const long k = n / 2 + 1;
  const long m = c * segments;
  // Mode-major spectrum (2, K, C*S): per-mode slices are contiguous
  // row-major (C, S) matrices for the spectral weight multiply.
  Tensor out = Tensor::uninit({2, k, m});
  auto& ws = FftWorkspace::instance();
  std::vector<std::complex<double>> buf(static_cast<std::size_t>(k));
  const double inv_n = 1.0 / static_cast<double>(n);
  for (long i = 0; i < c; ++i)
    for (long b = 0; b < segments; ++b) {
      ws.r2c(ta.data() + i * (segments * n) + b * n, n, buf.data());
      const long col = i * segments + b;
      for (long j = 0; j < k; ++j) {
        out[j * m + col] = buf[static_cast<std::size_t>(j)].real() * inv_n;
        out[k * m + j * m + col] = buf[static_cast<std::size_t>(j)].imag() * inv_n;
      }
    }
  return push(std::move(out), {a.id}, [c, n, k, segments, m](Tape& t, int self) {
    // Adjoint of the 1/N-scaled analysis: dx = c2r(v)/N with interior modes
    // halved and the (identically zero) imaginary parts of the DC and
    // Nyquist modes dropped.
    const auto& node = t.nodes_[static_cast<std::size_t>(self)];
    const Tensor& g = t.grad_at(self);
    Tensor& ga = t.grad_at(node.inputs[0]);
    auto& ws = FftWorkspace::instance();
    std::vector<std::complex<double>> buf(static_cast<std::size_t>(k));
    std::vector<double> back(static_cast<std::size_t>(n));
    const double inv_n = 1.0 / static_cast<double>(n);
    for (long i = 0; i < c; ++i)
      for (long b = 0; b < segments; ++b) {
        const long col = i * segments + b;
        for (long j = 0; j < k; ++j) {
          const double re = g[j * m + col];
          const double im = g[k * m + j * m + col];
          if (j == 0 || j == k - 1)
            buf[static_cast<std::size_t>(j)] = {re, 0.0};
          else
            buf[static_cast<std::size_t>(j)] = {0.5 * re, 0.5 * im};
        }
        ws.c2r(buf.data(), n, back.data());
        double* row = ga.data() + i * (segments * n) + b * n;
        for (long j = 0; j < n; ++j) row[j] += back[static_cast<std::size_t>(j)] * inv_n;
      }
  });
}

Var Tape::irfft(Var spec, long n_out, long segments) {
  check(spec);
  const Tensor& ts = value(spec);
  if (ts.rank() != 3 || ts.dim(0) != 2)
    throw InvalidArgument("irfft: expected stacked spectrum (2,K,C*S), got " +
                          ts.shape_str());
  if (n_out % 2 != 0) throw InvalidArgument("irfft: output length must be even");
  const long k = ts.dim(1), m = ts.dim(2);
  if (segments < 1 || m % segments != 0)
    throw InvalidArgument("irfft: bad segmentation of " + ts.shape_str());
  const long c = m / segments;
  if (k != n_out / 2 + 1)
    throw InvalidArgument("irfft: mode count " + std::to_string(k) +
                          " inconsistent with output length " +
                          std::to_string(n_out));
  Tensor out = Tensor::uninit({c, segments * n_out});
  auto& ws = FftWorkspace::instance();
  std::vector<std::complex<double>> buf(static_cast<std::size_t>(k));
  for (long i = 0; i < c; ++i)
    for (long b = 0; b < segments; ++b) {
      const long col = i * segments + b;
      for (long j = 0; j < k; ++j)
        buf[static_cast<std::size_t>(j)] = {ts[j * m + col], ts[k * m + j * m + col]};
      // Halfcomplex synthesis ignores the imaginary parts of DC and Nyquist.
      buf[0] = {buf[0].real(), 0.0};
      buf[static_cast<std::size_t>(k - 1)] = {buf[static_cast<std::size_t>(k - 1)].real(), 0.0};
      ws.c2r(buf.data(), n_out, out.data() + i * (segments * n_out) + b * n_out);
    }
  return push(std::move(out), {spec.id},
              [c, k, n_out, segments, m](Tape& t, int self) {
                const auto& node = t.nodes_[static_cast<std::size_t>(self)];
                const Tensor& g = t.grad_at(self);
                Tensor& gs = t.grad_at(node.inputs[0]);
                auto& ws = FftWorkspace::instance();
                std::vector<std::complex<double>> buf(static_cast<std::size_t>(k));
                for (long i = 0; i < c; ++i)
                  for (long b = 0; b < segments; ++b) {
                    const long col = i * segments + b;
                    ws.r2c(g.data() + i * (segments * n_out) + b * n_out, n_out,
                           buf.data());
                    for (long j = 0; j < k; ++j) {
                      const double mult = (j == 0 || j == k - 1) ? 1.0 : 2.0;
                      gs[j * m + col] += mult * buf[static_cast<std::size_t>(j)].real();
                      if (j != 0 && j != k - 1)
                        gs[k * m + j * m + col] +=
                            mult * buf[static_cast<std::size_t>(j)].imag();
                    }
                  }
              });
}

Var Tape::mode_multiply(Var spec, Var w_re, Var w_im, long segments) {
  check(spec);
  check(w_re);
  check(w_im);
  const Tensor& ts = value(spec);
  const Tensor& tre = value(w_re);
  const Tensor& tim = value(w_im);
  if (ts.rank() != 3 || ts.dim(0) != 2)
    throw InvalidArgument("mode_multiply: expected spectrum (2,K,Cin*S), got " +
                          ts.shape_str());
  if (tre.rank() != 3 || !tre.same_shape(tim))
    throw InvalidArgument("mode_multiply: weights must be (k_max,Cout,Cin) pairs");
  const long k = ts.dim(1), m_cols = ts.dim(2);
  if (segments < 1 || m_cols % segments != 0)
    throw InvalidArgument("mode_multiply: bad segmentation of " + ts.shape_str());
  const long cin = m_cols / segments;
  const long k_max = tre.dim(0), cout = tre.dim(1);
  if (tre.dim(2) != cin)
    throw InvalidArgument("mode_multiply: weight input width " +
                          std::to_string(tre.dim(2)) + " != spectrum channels " +
                          std::to_string(cin));
  if (k_max > k)
    throw InvalidArgument("mode_multiply: k_max=" + std::to_string(k_max) +
                          " exceeds available modes " + std::to_string(k));

  const long out_cols = cout * segments;
  Tensor out = Tensor::uninit({2, k, out_cols});
  // Truncated modes are zero-filled; retained modes are written below.
  if (k_max < k) {
    std::memset(out.data() + k_max * out_cols, 0,
                static_cast<std::size_t>((k - k_max) * out_cols) * sizeof(double));
    std::memset(out.data() + (k + k_max) * out_cols, 0,
                static_cast<std::size_t>((k - k_max) * out_cols) * sizeof(double));
  }
  for (long m = 0; m < k_max; ++m) {
    CMapMat wre(tre.data() + m * cout * cin, cout, cin);
    CMapMat wim(tim.data() + m * cout * cin, cout, cin);
    CMapMat sre(ts.data() + m * m_cols, cin, segments);
    CMapMat sim(ts.data() + k * m_cols + m * m_cols, cin, segments);
    MapMat ore(out.data() + m * out_cols, cout, segments);
    MapMat oim(out.data() + k * out_cols + m * out_cols, cout, segments);
    ore.noalias() = wre * sre;
    ore.noalias() -= wim * sim;
    oim.noalias() = wre * sim;
    oim.noalias() += wim * sre;
  }
  return push(std::move(out), {spec.id, w_re.id, w_im.id},
              [cin, cout, k, k_max, segments, m_cols, out_cols](Tape& t, int self) {
                const auto& node = t.nodes_[static_cast<std::size_t>(self)];
                const Tensor& g = t.grad_at(self);
                const Tensor& ts = t.value_at(node.inputs[0]);
                const Tensor& tre = t.value_at(node.inputs[1]);
                const Tensor& tim = t.value_at(node.inputs[2]);
                Tensor& gs = t.grad_at(node.inputs[0]);
                Tensor& gre = t.grad_at(node.inputs[1]);
                Tensor& gim = t.grad_at(node.inputs[2]);
                for (long m = 0; m < k_max; ++m) {
                  CMapMat wre(tre.data() + m * cout * cin, cout, cin);
                  CMapMat wim(tim.data() + m * cout * cin, cout, cin);
                  CMapMat sre(ts.data() + m * m_cols, cin, segments);
                  CMapMat sim(ts.data() + k * m_cols + m * m_cols, cin, segments);
                  CMapMat gore(g.data() + m * out_cols, cout, segments);
                  CMapMat goim(g.data() + k * out_cols + m * out_cols, cout, segments);
                  MapMat gsre(gs.data() + m * m_cols, cin, segments);
                  MapMat gsim(gs.data() + k * m_cols + m * m_cols, cin, segments);
                  gsre.noalias() += wre.transpose() * gore;
                  gsre.noalias() += wim.transpose() * goim;
                  gsim.noalias() += wre.transpose() * goim;
                  gsim.noalias() -= wim.transpose() * gore;
                  MapMat mre(gre.data() + m * cout * cin, cout, cin);
                  MapMat mim(gim.data() + m * cout * cin, cout, cin);
                  mre.noalias() += gore * sre.transpose();
                  mre.noalias() += goim * sim.transpose();
                  mim.noalias() += goim * sre.transpose();
                  mim.noalias() -= gore * sim.transpose();
                }
              });
}

void Tape::backward(Var loss) {
  check(loss);
  if (value(loss).size() != 1)
    throw InvalidArgument("backward: loss must be scalar, got " +
                          value(loss).shape_str());
  grads_.assign(nodes_.size(), Tensor());
  has_grad_.assign(nodes_.size(), 0);
  grad_at(loss.id)[0] = 1.0;
  for (int id = static_cast<int>(nodes_.size()) - 1; id >= 0; --id) {
    const Node& node = nodes_[static_cast<std::size_t>(id)];
    if (!node.backprop || !has_grad(id)) continue;
    node.backprop(*this, id);
  }
}

}  // namespace floqfno
