// Copyright 2026 The PRDP Lab Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef PRDP_OPTIM_H_
#define PRDP_OPTIM_H_

#include <cstdint>
#include <map>
#include <string>

#include "prdp/autodiff.h"

namespace prdp {

struct AdamWConfig {
  double learning_rate = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 1e-4;
  // Global L2 norm cap on the gradient; <= 0 disables.
  double grad_clip_norm = 1.0;
};

// Adaptive moments with bias correction and decoupled weight decay.
class AdamW {
 public:
  explicit AdamW(AdamWConfig config) : config_(config) {}

  // Applies one update in place. Returns the gradient norm before clipping.
  double step(ad::Bindings& params, std::map<std::string, ad::Tensor> grads);

  void set_learning_rate(double lr) { config_.learning_rate = lr; }
  std::int64_t steps() const { return t_; }
  const AdamWConfig& config() const { return config_; }

 private:
  AdamWConfig config_;
  std::int64_t t_ = 0;
  std::map<std::string, ad::Tensor> m_;
  std::map<std::string, ad::Tensor> v_;
};

double global_norm(const std::map<std::string, ad::Tensor>& grads);

}  // namespace prdp

#endif  // PRDP_OPTIM_H_
