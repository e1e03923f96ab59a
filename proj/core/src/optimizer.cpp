#include "floqfno/optimizer.hpp"

#include <cmath>

namespace floqfno {

AdamW::AdamW(AdamWConfig cfg, const std::vector<Tensor*>& params)
    : cfg_(cfg), lr_(cfg.lr) {
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const Tensor* p : params) {
    m_.emplace_back(p->shape());
    v_.emplace_back(p->shape());
  }
}

void AdamW::step(const std::vector<Tensor*>& params,
                 const std::vector<Tensor>& grads) {
  if (params.size() != m_.size() || grads.size() != m_.size())
    throw InvalidArgument("AdamW::step: parameter/gradient count mismatch");
  const long t = step_ + 1;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = grads[i];
    if (!p.same_shape(g))
      throw InvalidArgument("AdamW::step: gradient shape " + g.shape_str() +
                            " != parameter shape " + p.shape_str());
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (long j = 0; j < p.size(); ++j) {
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      p[j] -= lr_ * (m_hat / (std::sqrt(v_hat) + cfg_.eps) +
                     cfg_.weight_decay * p[j]);
    }
  }
  step_ = t;
  if (cfg_.n_decay > 0 && step_ % cfg_.n_decay == 0) lr_ *= cfg_.gamma;
}

}  // namespace floqfno
