// Copyright 2026 The PRDP Lab Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef PRDP_TESTS_TEST_UTIL_H_
#define PRDP_TESTS_TEST_UTIL_H_

#include "prdp/diffusion.h"
#include "prdp/rng.h"

namespace prdp::testing {

// Single affine layer whose output is the mean: mu = W [x, onehot(c), t/T] + b.
inline diffusion::PolicyArch affine_arch(std::size_t d, std::size_t prompts) {
  return {.state_dim = d,
          .prompt_count = prompts,
          .hidden = {},
          .parameterization = diffusion::MeanParameterization::kDirect};
}

inline diffusion::PolicyNet constant_mean(std::size_t d, std::size_t prompts,
                                          double m) {
  auto p = diffusion::PolicyNet::zeros(affine_arch(d, prompts));
  for (double& v : p.mutable_params().at("l0.b").values()) v = m;
  return p;
}

inline diffusion::PolicyNet random_policy(const diffusion::PolicyArch& arch,
                                          std::uint64_t seed,
                                          double scale = 0.3) {
  Rng rng(seed);
  auto p = diffusion::PolicyNet::initialize(arch, rng);
  for (auto& [name, t] : p.mutable_params()) {
    for (double& v : t.values()) v += scale * rng.normal();
  }
  return p;
}

// Copy of `p` with every parameter moved by scale * N(0, 1).
inline diffusion::PolicyNet perturbed(const diffusion::PolicyNet& p,
                                      std::uint64_t seed, double scale) {
  Rng rng(seed);
  auto q = p;
  for (auto& [name, t] : q.mutable_params()) {
    for (double& v : t.values()) v += scale * rng.normal();
  }
  return q;
}

}  // namespace prdp::testing

#endif  // PRDP_TESTS_TEST_UTIL_H_
