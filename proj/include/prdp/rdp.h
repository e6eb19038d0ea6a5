// Copyright 2026 The PRDP Lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Reward-difference prediction loss with stepwise proximal clipping.
//
// For a trajectory x with prompt c the implicit reward is
//   rhat_theta(x) = sum_t rhat_{theta,t}(x),
//   rhat_{theta,t} = log pi_theta(x_{t-1}|x_t,c) - log pi_ref(x_{t-1}|x_t,c).
// For a same-prompt pair (a, b) with rewards ra, rb:
//   l      = (rhat(a) - rhat(b) - (ra - rb) / beta)^2
//   l_clip = same with each step ratio clamped to
//            [rhat_{old,t} - eps, rhat_{old,t} + eps]
//   loss   = max(l, l_clip), taken per pair.
// The batch loss averages over every pair i < j inside each prompt group.

#ifndef PRDP_RDP_H_
#define PRDP_RDP_H_

#include <optional>
#include <span>
#include <vector>

#include "prdp/autodiff.h"
#include "prdp/diffusion.h"

namespace prdp::rdp {

using diffusion::NoiseSchedule;
using diffusion::PolicyNet;
using diffusion::Trajectory;

struct ClipConfig {
  double epsilon_step = 1e-4;
  // Clamp the summed ratio to rhat_old +- epsilon_traj instead of clamping
  // every step. Unset epsilon_traj means steps * epsilon_step.
  bool trajectory_level = false;
  std::optional<double> epsilon_traj;

  void validate() const;
  double traj_range(int steps) const;
};

// Per-step ratios of the snapshot policy against the reference, for one
// trajectory, in transition order.
struct SnapshotStats {
  std::vector<double> step_ratios;
  double total() const;
};

SnapshotStats snapshot_stats(const PolicyNet& old, const PolicyNet& ref,
                             const NoiseSchedule& schedule,
                             const Trajectory& traj);

double rhat(const PolicyNet& policy, const PolicyNet& ref,
            const NoiseSchedule& schedule, const Trajectory& traj);

double rdp_loss_pair(const PolicyNet& policy, const PolicyNet& ref,
                     const NoiseSchedule& schedule, const Trajectory& a,
                     const Trajectory& b, double reward_a, double reward_b,
                     double beta);

double clipped_rhat(const PolicyNet& policy, const PolicyNet& ref,
                    const SnapshotStats& snapshot,
                    const NoiseSchedule& schedule, const Trajectory& traj,
                    const ClipConfig& clip);

double prdp_loss_pair(const PolicyNet& policy, const PolicyNet& ref,
                      const NoiseSchedule& schedule, const Trajectory& a,
                      const Trajectory& b, double reward_a, double reward_b,
                      const SnapshotStats& snap_a, const SnapshotStats& snap_b,
                      double beta, const ClipConfig& clip);

// Trajectories of one prompt with their rewards and cached statistics.
struct PromptGroup {
  int prompt = 0;
  std::vector<Trajectory> trajectories;
  std::vector<double> rewards;
  std::vector<SnapshotStats> snapshot;
  // Reference means along each trajectory (steps * dim values each).
  std::vector<std::vector<double>> ref_means;
};

struct PairBatch {
  std::vector<PromptGroup> groups;

  std::size_t trajectory_count() const;
  std::size_t pair_count() const;
};

// Assembles a batch from consecutive groups of `group_size` trajectories,
// each group sharing one prompt. `old_means` are the sampler means of `old`
// along each trajectory (as returned by diffusion::sample_batch); pass an
// empty span to have them recomputed.
PairBatch make_pair_batch(const PolicyNet& old, const PolicyNet& ref,
                          const NoiseSchedule& schedule,
                          std::span<const Trajectory> trajs,
                          std::span<const double> rewards,
                          std::size_t group_size,
                          std::span<const double> old_means = {});

// Mean pair loss as a graph over the policy parameters. No clip config gives
// the plain loss.
ad::Graph build_batch_loss_graph(const PolicyNet& policy,
                                 const NoiseSchedule& schedule,
                                 const PairBatch& batch, double beta,
                                 const std::optional<ClipConfig>& clip);

double batch_loss(const PolicyNet& policy, const NoiseSchedule& schedule,
                  const PairBatch& batch, double beta,
                  const std::optional<ClipConfig>& clip);

// Diagnostics of the current policy on a batch.
struct StepDiagnostics {
  // max |rhat_{theta,t}| over all steps of all trajectories.
  double max_abs_step_ratio = 0.0;
  // max |rhat_{theta,t}^clip - rhat_{old,t}| over steps of pairs where the
  // clipped loss is the selected branch (0 if none).
  double max_clipped_deviation = 0.0;
  // Fraction of pairs whose max picked the clipped branch strictly.
  double clipped_branch_fraction = 0.0;
};

StepDiagnostics diagnose(const PolicyNet& policy, const NoiseSchedule& schedule,
                         const PairBatch& batch, double beta,
                         const std::optional<ClipConfig>& clip);

}  // namespace prdp::rdp

#endif  // PRDP_RDP_H_
