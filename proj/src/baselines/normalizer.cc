// Copyright 2026 The PRDP Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "prdp/baselines.h"

namespace prdp::baselines {

const char* mode_name(NormalizerMode mode) {
  switch (mode) {
    case NormalizerMode::kPerPrompt: return "per-prompt";
    case NormalizerMode::kGlobal: return "global";
    case NormalizerMode::kNone: return "none";
  }
  return "?";
}

NormalizerMode parse_mode(const std::string& name) {
  for (auto m : {NormalizerMode::kPerPrompt, NormalizerMode::kGlobal,
                 NormalizerMode::kNone}) {
    if (name == mode_name(m)) return m;
  }
  throw std::invalid_argument("unknown normalizer mode '" + name + "'");
}

void RunningStats::push(double x) {
  ++count;
  const double delta = x - mean;
  mean += delta / static_cast<double>(count);
  m2 += delta * (x - mean);
}

double RunningStats::variance() const {
  return count < 2 ? 0.0 : std::max(0.0, m2 / static_cast<double>(count - 1));
}

double RunningStats::stddev() const { return std::sqrt(variance()); }

const RunningStats& RewardNormalizer::prompt_stats(int prompt) const {
  static const RunningStats kEmpty;
  auto it = per_prompt_.find(prompt);
  return it == per_prompt_.end() ? kEmpty : it->second;
}

void RewardNormalizer::record(int prompt, double reward) {
  global_.push(reward);
  per_prompt_[prompt].push(reward);
}

double RewardNormalizer::advantage(int prompt, double reward) const {
  if (mode_ == NormalizerMode::kNone) return reward;
  const RunningStats& s =
      mode_ == NormalizerMode::kGlobal ? global_ : prompt_stats(prompt);
  if (s.count < 2) return reward - s.mean;
  return (reward - s.mean) / std::max(s.stddev(), 1e-6);
}

double RewardNormalizer::normalize(int prompt, double reward) {
  record(prompt, reward);
  return advantage(prompt, reward);
}

std::vector<double> RewardNormalizer::normalize_batch(
    std::span<const int> prompts, std::span<const double> rewards) {
  if (prompts.size() != rewards.size()) {
    throw std::invalid_argument("normalize_batch: length mismatch");
  }
  for (std::size_t i = 0; i < prompts.size(); ++i) record(prompts[i], rewards[i]);
  std::vector<double> out(prompts.size());
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    out[i] = advantage(prompts[i], rewards[i]);
  }
  return out;
}

}  // namespace prdp::baselines
