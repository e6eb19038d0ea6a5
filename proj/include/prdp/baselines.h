// Copyright 2026 The PRDP Lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Comparison methods: a DDPO-style clipped policy gradient with reward
// normalization, and RDP training on a fixed dataset drawn once from the
// reference policy.

#ifndef PRDP_BASELINES_H_
#define PRDP_BASELINES_H_

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "prdp/autodiff.h"
#include "prdp/diffusion.h"
#include "prdp/rdp.h"
#include "prdp/rewards.h"
#include "prdp/rng.h"

namespace prdp::baselines {

using diffusion::NoiseSchedule;
using diffusion::PolicyNet;
using diffusion::Trajectory;

enum class NormalizerMode { kPerPrompt, kGlobal, kNone };

const char* mode_name(NormalizerMode mode);
NormalizerMode parse_mode(const std::string& name);

// Welford accumulator; variance() is the unbiased sample variance.
struct RunningStats {
  std::size_t count = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void push(double x);
  double variance() const;
  double stddev() const;
};

class RewardNormalizer {
 public:
  explicit RewardNormalizer(NormalizerMode mode) : mode_(mode) {}

  // Records the reward, then returns (reward - mean) / max(std, 1e-6) from
  // the updated statistics. With fewer than two observations the raw
  // deviation from the mean is returned. kNone returns the reward as is.
  double normalize(int prompt, double reward);

  // Records the whole batch first, then normalizes every entry against the
  // updated statistics.
  std::vector<double> normalize_batch(std::span<const int> prompts,
                                      std::span<const double> rewards);

  NormalizerMode mode() const { return mode_; }
  const RunningStats& global_stats() const { return global_; }
  const RunningStats& prompt_stats(int prompt) const;

 private:
  NormalizerMode mode_;
  RunningStats global_;
  std::map<int, RunningStats> per_prompt_;

  void record(int prompt, double reward);
  double advantage(int prompt, double reward) const;
};

// Trajectories sampled from a snapshot, with the snapshot's means along
// them and one advantage per trajectory.
struct Rollouts {
  std::vector<Trajectory> trajectories;
  std::vector<double> old_means;
  std::vector<double> advantages;
};

// mean over trajectories and steps of -min(rho A, clip(rho, 1-c, 1+c) A),
// rho = pi_theta / pi_old at that step.
ad::Graph build_ddpo_loss_graph(const PolicyNet& policy,
                                const NoiseSchedule& schedule,
                                const Rollouts& rollouts, double clip_range);

double ddpo_loss(const PolicyNet& policy, const NoiseSchedule& schedule,
                 const Rollouts& rollouts, double clip_range);

struct OfflineEntry {
  Trajectory trajectory;
  double reward = 0.0;
};

class OfflineDataset {
 public:
  explicit OfflineDataset(std::vector<OfflineEntry> entries);

  const std::vector<OfflineEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  // Entry indices per prompt.
  const std::map<int, std::vector<std::size_t>>& by_prompt() const {
    return by_prompt_;
  }
  bool has_pair() const;

 private:
  std::vector<OfflineEntry> entries_;
  std::map<int, std::vector<std::size_t>> by_prompt_;
};

// One trajectory of `ref` per entry of `prompts`, rewards queried once.
OfflineDataset build_offline_dataset(const PolicyNet& ref,
                                     const NoiseSchedule& schedule,
                                     std::span<const int> prompts,
                                     rewards::RewardOracle& oracle, Rng& rng);

void save_offline_dataset(const std::string& path, const OfflineDataset& data);
OfflineDataset load_offline_dataset(const std::string& path);

// Draws `groups` groups: a prompt uniformly among those with at least two
// entries, then min(group_size, available) distinct entries of it. The
// snapshot statistics are taken against the reference policy.
rdp::PairBatch draw_offline_batch(const OfflineDataset& data,
                                  const PolicyNet& ref,
                                  const NoiseSchedule& schedule, int groups,
                                  int group_size, Rng& rng);

struct OfflineStep {
  rdp::PairBatch batch;
  double loss = 0.0;
};

// Draws a batch from the dataset and evaluates the batch loss on it.
OfflineStep offline_rdp_step(const PolicyNet& policy, const PolicyNet& ref,
                             const NoiseSchedule& schedule,
                             const OfflineDataset& data, int groups,
                             int group_size, double beta,
                             const std::optional<rdp::ClipConfig>& clip,
                             Rng& rng);

}  // namespace prdp::baselines

#endif  // PRDP_BASELINES_H_
