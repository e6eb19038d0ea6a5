// Copyright 2026 The PRDP Lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Analytic rewards r(x0, c). Rewards are black boxes to the training code:
// this module takes plain numbers and returns plain numbers, and has no
// dependency on the differentiation library.

#ifndef PRDP_REWARDS_H_
#define PRDP_REWARDS_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "prdp/mixture.h"

namespace prdp::rewards {

enum class RewardKind {
  kTargetDistance,  // -||x0 - target(c)||^2
  kDensity,         // log density of the prompt's target mixture
  kScalarField,     // <w, x0>, ignores the prompt
  kWeightedSum,     // sum_i weight_i * child_i
};

const char* kind_name(RewardKind kind);
RewardKind parse_kind(const std::string& name);

struct RewardSpec {
  RewardKind kind = RewardKind::kTargetDistance;
  std::vector<std::vector<double>> targets;  // per prompt
  std::vector<GaussianMixture> mixtures;     // per prompt
  std::vector<double> field;
  std::vector<RewardSpec> children;
  std::vector<double> weights;
  // Optional additive constant per prompt (empty = none).
  std::vector<double> prompt_offsets;
  double scale = 1.0;

  static RewardSpec target_distance(std::vector<std::vector<double>> targets);
  static RewardSpec density(std::vector<GaussianMixture> mixtures);
  static RewardSpec scalar_field(std::vector<double> w);
  static RewardSpec weighted_sum(std::vector<RewardSpec> children,
                                 std::vector<double> weights);

  // Throws std::invalid_argument on inconsistent parameters.
  void validate() const;
};

double evaluate_reward(const RewardSpec& spec, std::span<const double> x0,
                       int prompt);

// r(a, c) - r(b, c)
double reward_difference(const RewardSpec& spec, std::span<const double> x0a,
                         std::span<const double> x0b, int prompt);

// Reward access with a query counter; training loops only see rewards
// through one of these.
class RewardOracle {
 public:
  explicit RewardOracle(RewardSpec spec);

  double query(std::span<const double> x0, int prompt);
  std::uint64_t queries() const { return queries_; }
  const RewardSpec& spec() const { return spec_; }

 private:
  RewardSpec spec_;
  std::uint64_t queries_ = 0;
};

}  // namespace prdp::rewards

#endif  // PRDP_REWARDS_H_
