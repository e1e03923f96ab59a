#pragma once

#include <Eigen/Dense>
#include <json.hpp>
#include <string>
#include <vector>

#include "floqfno/autodiff.hpp"
#include "floqfno/common.hpp"
#include "floqfno/tensor.hpp"

namespace floqfno {

struct FnoConfig {
  long d_in = 0;
  long d_out = 0;
  long width = 128;
  long layers = 3;
  long k_max = 32;
  PaddingPolicy padding;

  void validate() const;
  /// (d_in+1)w + M(2 w^2 k_max + w^2 + w) + (w+1) d_out
  long parameter_count() const;
};

/// 1-D Fourier Neural Operator over (channels, time) tensors: pointwise
/// lifting, `layers` spectral-convolution layers (mode truncation at k_max,
/// pointwise linear bypass, tanh between layers but not after the last), and
/// a pointwise projection. Inputs are padded per the policy and outputs
/// truncated back to the input length.
///
/// Spectral weights are indexed by absolute mode number and the rFFT is
/// 1/N-normalized, so one set of weights applies across grid resolutions.
class FnoModel {
 public:
  FnoModel(FnoConfig cfg, RngStream& init);
  static FnoModel zeros(FnoConfig cfg);

  const FnoConfig& config() const { return cfg_; }

  /// Stable parameter order: lift w/b, per layer (r_re, r_im, bypass w/b),
  /// projection w/b.
  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  std::vector<std::string> parameter_names() const;

  struct TapeBinding {
    std::vector<Var> params;
  };
  TapeBinding bind(Tape& tape) const;

  /// Differentiable forward pass; u is (d_in, S*N) holding S stacked samples
  /// (segments); each sample's window is padded/unpadded independently.
  /// N may differ from the training grid (discretization transfer); requires
  /// even padded length and k_max <= (N + n_padding)/2 + 1.
  Var forward(Tape& tape, const TapeBinding& binding, Var u,
              long segments = 1) const;

  /// Inference-only forward (fresh tape, no gradients). Applies the stored
  /// per-channel input normalization.
  Tensor predict(const Tensor& u) const;

  void check_resolution(long n_time) const;

  /// Per-channel input normalization (train-split statistics); identity
  /// until train() fills them.
  Eigen::VectorXd input_mean;
  Eigen::VectorXd input_std;

  void save(const std::string& path, const nlohmann::json& extra = {}) const;
  static FnoModel load(const std::string& path);
  static nlohmann::json read_checkpoint_header(const std::string& path);

  // Parameter tensors (public for optimizer/tests).
  Tensor lift_w, lift_b;
  struct Layer {
    Tensor r_re, r_im;  // (k_max, w, w)
    Tensor byp_w, byp_b;
  };
  std::vector<Layer> layers;
  Tensor proj_w, proj_b;

 private:
  explicit FnoModel(FnoConfig cfg);
  FnoConfig cfg_;
};

/// Standalone padding ops on a (C, N) tensor (the same extension rules the
/// model applies internally).
Tensor pad(const Tensor& u, const PaddingPolicy& policy);
Tensor unpad(const Tensor& v, const PaddingPolicy& policy);

/// Magnitude of the (1/N-scaled) rFFT of the padded signal, per mode.
Eigen::VectorXd spectral_leakage(const Eigen::VectorXd& u,
                                 const PaddingPolicy& policy);

}  // namespace floqfno
