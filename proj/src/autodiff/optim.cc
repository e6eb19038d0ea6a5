// Copyright 2026 The PRDP Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "prdp/optim.h"

#include <cmath>

#include "prdp/error.h"

namespace prdp {

double global_norm(const std::map<std::string, ad::Tensor>& grads) {
  double s = 0.0;
  for (const auto& [name, g] : grads) {
    for (double v : g.data()) s += v * v;
  }
  return std::sqrt(s);
}

double AdamW::step(ad::Bindings& params,
                   std::map<std::string, ad::Tensor> grads) {
  const double norm = global_norm(grads);
  if (!std::isfinite(norm)) throw NonFiniteError("non-finite gradient norm");
  if (config_.grad_clip_norm > 0.0 && norm > config_.grad_clip_norm) {
    const double s = config_.grad_clip_norm / norm;
    for (auto& [name, g] : grads) {
      for (double& v : g.data()) v *= s;
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (auto& [name, g] : grads) {
    auto pit = params.find(name);
    if (pit == params.end()) {
      throw std::invalid_argument("gradient for unknown parameter " + name);
    }
    ad::Tensor& p = pit->second;
    auto mit = m_.try_emplace(name, ad::Tensor::zeros(p.shape())).first;
    auto vit = v_.try_emplace(name, ad::Tensor::zeros(p.shape())).first;
    auto& m = mit->second.values();
    auto& v = vit->second.values();
    auto& w = p.values();
    const auto& gv = g.values();
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = config_.beta1 * m[k] + (1.0 - config_.beta1) * gv[k];
      v[k] = config_.beta2 * v[k] + (1.0 - config_.beta2) * gv[k] * gv[k];
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      w[k] -= config_.learning_rate * config_.weight_decay * w[k];
      w[k] -= config_.learning_rate * mhat / (std::sqrt(vhat) + config_.epsilon);
    }
  }
  return norm;
}

}  // namespace prdp
