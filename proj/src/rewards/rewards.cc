// Copyright 2026 The PRDP Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "prdp/rewards.h"

#include <cmath>
#include <stdexcept>

namespace prdp::rewards {

const char* kind_name(RewardKind kind) {
  switch (kind) {
    case RewardKind::kTargetDistance: return "target-distance";
    case RewardKind::kDensity: return "density";
    case RewardKind::kScalarField: return "scalar-field";
    case RewardKind::kWeightedSum: return "weighted-sum";
  }
  return "?";
}

RewardKind parse_kind(const std::string& name) {
  for (RewardKind k : {RewardKind::kTargetDistance, RewardKind::kDensity,
                       RewardKind::kScalarField, RewardKind::kWeightedSum}) {
    if (name == kind_name(k)) return k;
  }
  throw std::invalid_argument("unknown reward kind '" + name + "'");
}

RewardSpec RewardSpec::target_distance(std::vector<std::vector<double>> targets) {
  RewardSpec s;
  s.kind = RewardKind::kTargetDistance;
  s.targets = std::move(targets);
  return s;
}

RewardSpec RewardSpec::density(std::vector<GaussianMixture> mixtures) {
  RewardSpec s;
  s.kind = RewardKind::kDensity;
  s.mixtures = std::move(mixtures);
  return s;
}

RewardSpec RewardSpec::scalar_field(std::vector<double> w) {
  RewardSpec s;
  s.kind = RewardKind::kScalarField;
  s.field = std::move(w);
  return s;
}

RewardSpec RewardSpec::weighted_sum(std::vector<RewardSpec> children,
                                    std::vector<double> weights) {
  RewardSpec s;
  s.kind = RewardKind::kWeightedSum;
  s.children = std::move(children);
  s.weights = std::move(weights);
  return s;
}

void RewardSpec::validate() const {
  if (!std::isfinite(scale)) throw std::invalid_argument("reward scale not finite");
  for (double o : prompt_offsets) {
    if (!std::isfinite(o)) throw std::invalid_argument("reward offset not finite");
  }
  switch (kind) {
    case RewardKind::kTargetDistance:
      if (targets.empty()) throw std::invalid_argument("target-distance needs targets");
      break;
    case RewardKind::kDensity:
      if (mixtures.empty()) throw std::invalid_argument("density needs mixtures");
      for (const auto& m : mixtures) {
        if (m.components.empty()) throw std::invalid_argument("empty mixture");
      }
      break;
    case RewardKind::kScalarField:
      if (field.empty()) throw std::invalid_argument("scalar-field needs w");
      break;
    case RewardKind::kWeightedSum:
      if (children.size() != weights.size() || children.empty()) {
        throw std::invalid_argument("weighted-sum needs one weight per child");
      }
      for (double w : weights) {
        if (!std::isfinite(w)) throw std::invalid_argument("weight not finite");
      }
      for (const auto& c : children) c.validate();
      break;
  }
}

namespace {

template <typename T>
const T& per_prompt(const std::vector<T>& table, int prompt) {
  if (prompt < 0 || static_cast<std::size_t>(prompt) >= table.size()) {
    throw std::out_of_range("unknown prompt id " + std::to_string(prompt));
  }
  return table[prompt];
}

double raw_reward(const RewardSpec& spec, std::span<const double> x0,
                  int prompt) {
  switch (spec.kind) {
    case RewardKind::kTargetDistance: {
      const auto& t = per_prompt(spec.targets, prompt);
      if (t.size() != x0.size()) throw std::invalid_argument("target dimension");
      double s = 0.0;
      for (std::size_t k = 0; k < t.size(); ++k) {
        s += (x0[k] - t[k]) * (x0[k] - t[k]);
      }
      return -s;
    }
    case RewardKind::kDensity:
      return per_prompt(spec.mixtures, prompt).log_density(x0);
    case RewardKind::kScalarField: {
      if (spec.field.size() != x0.size()) {
        throw std::invalid_argument("field dimension");
      }
      double s = 0.0;
      for (std::size_t k = 0; k < x0.size(); ++k) s += spec.field[k] * x0[k];
      return s;
    }
    case RewardKind::kWeightedSum: {
      double s = 0.0;
      for (std::size_t i = 0; i < spec.children.size(); ++i) {
        s += spec.weights[i] * evaluate_reward(spec.children[i], x0, prompt);
      }
      return s;
    }
  }
  return 0.0;
}

}  // namespace

double evaluate_reward(const RewardSpec& spec, std::span<const double> x0,
                       int prompt) {
  for (double v : x0) {
    if (!std::isfinite(v)) throw std::invalid_argument("reward input not finite");
  }
  double r = spec.scale * raw_reward(spec, x0, prompt);
  if (!spec.prompt_offsets.empty()) r += per_prompt(spec.prompt_offsets, prompt);
  return r;
}

double reward_difference(const RewardSpec& spec, std::span<const double> x0a,
                         std::span<const double> x0b, int prompt) {
  return evaluate_reward(spec, x0a, prompt) - evaluate_reward(spec, x0b, prompt);
}

RewardOracle::RewardOracle(RewardSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
}

double RewardOracle::query(std::span<const double> x0, int prompt) {
  ++queries_;
  return evaluate_reward(spec_, x0, prompt);
}

}  // namespace prdp::rewards
