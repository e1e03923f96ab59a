#pragma once

#include <vector>

#include "floqfno/tensor.hpp"

namespace floqfno {

struct AdamWConfig {
  double lr = 1e-3;
  double weight_decay = 1e-6;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double gamma = 0.8;   // step-decay factor
  long n_decay = 500;   // decay interval in optimizer steps
};

/// AdamW with decoupled weight decay and a step-decay learning-rate
/// schedule: after every n_decay steps the stored rate is scaled by gamma.
class AdamW {
 public:
  AdamW(AdamWConfig cfg, const std::vector<Tensor*>& params);

  /// One update; grads must be ordered like the params the optimizer was
  /// built with.
  void step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads);

  double current_lr() const { return lr_; }
  long step_count() const { return step_; }
  const AdamWConfig& config() const { return cfg_; }

 private:
  AdamWConfig cfg_;
  double lr_;
  long step_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

}  // namespace floqfno
