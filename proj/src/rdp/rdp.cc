// Copyright 2026 The PRDP Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "prdp/rdp.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "prdp/error.h"

namespace prdp::rdp {

void ClipConfig::validate() const {
  if (!(epsilon_step > 0.0)) throw std::invalid_argument("clip: epsilon_step must be > 0");
  if (epsilon_traj && !(*epsilon_traj > 0.0)) {
    throw std::invalid_argument("clip: epsilon_traj must be > 0");
  }
}

double ClipConfig::traj_range(int steps) const {
  return epsilon_traj ? *epsilon_traj : steps * epsilon_step;
}

double SnapshotStats::total() const {
  return std::accumulate(step_ratios.begin(), step_ratios.end(), 0.0);
}

namespace {

std::vector<double> ratios_along(const PolicyNet& policy, const PolicyNet& ref,
                                 const NoiseSchedule& schedule,
                                 const Trajectory& traj) {
  const auto one = std::span(&traj, 1);
  return diffusion::step_log_ratios(
      schedule, traj, diffusion::trajectory_means(policy, schedule, one),
      diffusion::trajectory_means(ref, schedule, one));
}

double sum(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0);
}

void check_pair(const Trajectory& a, const Trajectory& b, double beta) {
  if (a.prompt != b.prompt) {
    throw std::invalid_argument("pair trajectories must share a prompt");
  }
  if (!(beta > 0.0)) throw std::invalid_argument("beta must be > 0");
}

double clipped_sum(const std::vector<double>& ratios,
                   const SnapshotStats& snapshot, const ClipConfig& clip) {
  if (snapshot.step_ratios.size() != ratios.size()) {
    throw std::invalid_argument("snapshot statistics missing for trajectory");
  }
  if (clip.trajectory_level) {
    const double old = snapshot.total();
    const double eps = clip.traj_range(static_cast<int>(ratios.size()));
    return std::clamp(sum(ratios), old - eps, old + eps);
  }
  double s = 0.0;
  for (std::size_t j = 0; j < ratios.size(); ++j) {
    const double old = snapshot.step_ratios[j];
    s += std::clamp(ratios[j], old - clip.epsilon_step, old + clip.epsilon_step);
  }
  return s;
}

}  // namespace

SnapshotStats snapshot_stats(const PolicyNet& old, const PolicyNet& ref,
                             const NoiseSchedule& schedule,
                             const Trajectory& traj) {
  return {ratios_along(old, ref, schedule, traj)};
}

double rhat(const PolicyNet& policy, const PolicyNet& ref,
            const NoiseSchedule& schedule, const Trajectory& traj) {
  return sum(ratios_along(policy, ref, schedule, traj));
}

double rdp_loss_pair(const PolicyNet& policy, const PolicyNet& ref,
                     const NoiseSchedule& schedule, const Trajectory& a,
                     const Trajectory& b, double reward_a, double reward_b,
                     double beta) {
  check_pair(a, b, beta);
  const double d = rhat(policy, ref, schedule, a) - rhat(policy, ref, schedule, b) -
                   (reward_a - reward_b) / beta;
  return d * d;
}

double clipped_rhat(const PolicyNet& policy, const PolicyNet& ref,
                    const SnapshotStats& snapshot,
                    const NoiseSchedule& schedule, const Trajectory& traj,
                    const ClipConfig& clip) {
  clip.validate();
  return clipped_sum(ratios_along(policy, ref, schedule, traj), snapshot, clip);
}

double prdp_loss_pair(const PolicyNet& policy, const PolicyNet& ref,
                      const NoiseSchedule& schedule, const Trajectory& a,
                      const Trajectory& b, double reward_a, double reward_b,
                      const SnapshotStats& snap_a, const SnapshotStats& snap_b,
                      double beta, const ClipConfig& clip) {
  check_pair(a, b, beta);
  clip.validate();
  const auto ra = ratios_along(policy, ref, schedule, a);
  const auto rb = ratios_along(policy, ref, schedule, b);
  const double target = (reward_a - reward_b) / beta;
  const double d = sum(ra) - sum(rb) - target;
  const double dc = clipped_sum(ra, snap_a, clip) - clipped_sum(rb, snap_b, clip) - target;
  return std::max(d * d, dc * dc);
}

std::size_t PairBatch::trajectory_count() const {
  std::size_t n = 0;
  for (const auto& g : groups) n += g.trajectories.size();
  return n;
}

std::size_t PairBatch::pair_count() const {
  std::size_t n = 0;
  for (const auto& g : groups) {
    const std::size_t b = g.trajectories.size();
    n += b * (b - (b > 0 ? 1 : 0)) / 2;
  }
  return n;
}

PairBatch make_pair_batch(const PolicyNet& old, const PolicyNet& ref,
                          const NoiseSchedule& schedule,
                          std::span<const Trajectory> trajs,
                          std::span<const double> rewards,
                          std::size_t group_size,
                          std::span<const double> old_means) {
  if (rewards.size() != trajs.size()) {
    throw std::invalid_argument("make_pair_batch: one reward per trajectory");
  }
  if (group_size < 1 || trajs.size() % group_size != 0) {
    throw std::invalid_argument("make_pair_batch: trajectories do not split into groups");
  }
  const std::size_t per = static_cast<std::size_t>(schedule.steps()) *
                          old.arch().state_dim;
  std::vector<double> old_owned;
  if (old_means.empty()) {
    old_owned = diffusion::trajectory_means(old, schedule, trajs);
    old_means = old_owned;
  }
  if (old_means.size() != trajs.size() * per) {
    throw ShapeError("make_pair_batch: snapshot means have wrong length");
  }
  const std::vector<double> ref_means =
      diffusion::trajectory_means(ref, schedule, trajs);

  PairBatch batch;
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    if (i % group_size == 0) {
      batch.groups.push_back(PromptGroup{.prompt = trajs[i].prompt});
    }
    PromptGroup& g = batch.groups.back();
    if (trajs[i].prompt != g.prompt) {
      throw std::invalid_argument("make_pair_batch: group mixes prompts");
    }
    const auto om = old_means.subspan(i * per, per);
    const auto rm = std::span(ref_means).subspan(i * per, per);
    g.trajectories.push_back(trajs[i]);
    g.rewards.push_back(rewards[i]);
    g.snapshot.push_back({diffusion::step_log_ratios(schedule, trajs[i], om, rm)});
    g.ref_means.emplace_back(rm.begin(), rm.end());
  }
  return batch;
}

namespace {

struct BatchLayout {
  std::vector<double> prev_states;   // x_{t-1}, rows x d
  std::vector<double> inputs;        // x_t
  std::vector<int> prompts, steps;
  std::vector<double> ref_term;      // ||x_{t-1} - mu_ref||^2 / (2 sigma^2)
  std::vector<double> inv_two_var;   // 1 / (2 sigma^2)
  std::vector<double> snap_steps;    // rhat_{old,t}
  std::vector<double> snap_totals;   // rhat_old per trajectory
  std::vector<std::size_t> pair_a, pair_b;
  std::vector<double> targets;       // (ra - rb) / beta
  std::size_t trajectories = 0;
};

BatchLayout layout(const PolicyNet& policy, const NoiseSchedule& schedule,
                   const PairBatch& batch, double beta) {
  if (!(beta > 0.0)) throw std::invalid_argument("beta must be > 0");
  const std::size_t d = policy.arch().state_dim;
  const int T = schedule.steps();
  BatchLayout L;
  for (const PromptGroup& g : batch.groups) {
    const std::size_t first = L.trajectories;
    const std::size_t B = g.trajectories.size();
    if (g.rewards.size() != B || g.snapshot.size() != B || g.ref_means.size() != B) {
      throw std::invalid_argument("prompt group has inconsistent sizes");
    }
    for (std::size_t i = 0; i < B; ++i) {
      const Trajectory& tr = g.trajectories[i];
      diffusion::validate(tr, policy.arch(), schedule);
      if (tr.prompt != g.prompt) {
        throw std::invalid_argument("trajectory prompt differs from its group");
      }
      if (g.snapshot[i].step_ratios.size() != static_cast<std::size_t>(T)) {
        throw std::invalid_argument("snapshot statistics missing for trajectory");
      }
      for (int j = 0; j < T; ++j) {
        const int t = T - j;
        const auto x = tr.x(t);
        const auto xp = tr.x(t - 1);
        L.inputs.insert(L.inputs.end(), x.begin(), x.end());
        L.prev_states.insert(L.prev_states.end(), xp.begin(), xp.end());
        L.prompts.push_back(tr.prompt);
        L.steps.push_back(t);
        const double w = 0.5 / (schedule.sigma(t) * schedule.sigma(t));
        double sq = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
          const double diff = xp[k] - g.ref_means[i][j * d + k];
          sq += diff * diff;
        }
        L.ref_term.push_back(w * sq);
        L.inv_two_var.push_back(w);
        L.snap_steps.push_back(g.snapshot[i].step_ratios[j]);
      }
      L.snap_totals.push_back(g.snapshot[i].total());
    }
    for (std::size_t i = 0; i < B; ++i) {
      for (std::size_t k = i + 1; k < B; ++k) {
        L.pair_a.push_back(first + i);
        L.pair_b.push_back(first + k);
        L.targets.push_back((g.rewards[i] - g.rewards[k]) / beta);
      }
    }
    L.trajectories += B;
  }
  if (L.pair_a.empty()) {
    throw std::invalid_argument("batch has no same-prompt pair (B < 2)");
  }
  return L;
}

}  // namespace

ad::Graph build_batch_loss_graph(const PolicyNet& policy,
                                 const NoiseSchedule& schedule,
                                 const PairBatch& batch, double beta,
                                 const std::optional<ClipConfig>& clip) {
  if (clip) clip->validate();
  BatchLayout L = layout(policy, schedule, batch, beta);
  const std::size_t d = policy.arch().state_dim;
  const std::size_t T = schedule.steps();
  const std::size_t rows = L.steps.size();
  const std::size_t M = L.trajectories;

  ad::GraphBuilder g;
  auto params = policy.declare_params(g);
  ad::Var mu = policy.build_means(g, params, schedule, L.inputs, L.prompts, L.steps);
  ad::Var diff = g.sub(g.constant(ad::Tensor::matrix(rows, d, L.prev_states)), mu);
  ad::Var step = g.sub(g.constant(ad::Tensor::vector(L.ref_term)),
                       g.mul(g.constant(ad::Tensor::vector(L.inv_two_var)),
                             g.row_sum(g.square(diff))));
  auto total = [&](ad::Var steps) { return g.row_sum(g.reshape(steps, {M, T})); };
  ad::Var target = g.constant(ad::Tensor::vector(L.targets));
  auto pair_loss = [&](ad::Var rh) {
    ad::Var delta = g.sub(g.gather(rh, L.pair_a), g.gather(rh, L.pair_b));
    return g.square(g.sub(delta, target));
  };

  ad::Var rh = total(step);
  ad::Var loss = pair_loss(rh);
  if (clip) {
    ad::Var clipped;
    if (clip->trajectory_level) {
      const double eps = clip->traj_range(static_cast<int>(T));
      std::vector<double> lo(M), hi(M);
      for (std::size_t i = 0; i < M; ++i) {
        lo[i] = L.snap_totals[i] - eps;
        hi[i] = L.snap_totals[i] + eps;
      }
      clipped = g.clip(rh, ad::Tensor::vector(lo), ad::Tensor::vector(hi));
    } else {
      std::vector<double> lo(rows), hi(rows);
      for (std::size_t r = 0; r < rows; ++r) {
        lo[r] = L.snap_steps[r] - clip->epsilon_step;
        hi[r] = L.snap_steps[r] + clip->epsilon_step;
      }
      clipped = total(g.clip(step, ad::Tensor::vector(lo), ad::Tensor::vector(hi)));
    }
    loss = g.maximum(loss, pair_loss(clipped));
  }
  return g.build(g.mean(loss));
}

double batch_loss(const PolicyNet& policy, const NoiseSchedule& schedule,
                  const PairBatch& batch, double beta,
                  const std::optional<ClipConfig>& clip) {
  return build_batch_loss_graph(policy, schedule, batch, beta, clip)
      .forward(policy.params())
      .item();
}

StepDiagnostics diagnose(const PolicyNet& policy, const NoiseSchedule& schedule,
                         const PairBatch& batch, double beta,
                         const std::optional<ClipConfig>& clip) {
  StepDiagnostics out;
  std::size_t pairs = 0, clipped_pairs = 0;
  for (const PromptGroup& g : batch.groups) {
    const std::size_t B = g.trajectories.size();
    const auto mu = diffusion::trajectory_means(policy, schedule, g.trajectories);
    const std::size_t per = mu.size() / std::max<std::size_t>(B, 1);
    std::vector<std::vector<double>> ratios(B);
    for (std::size_t i = 0; i < B; ++i) {
      ratios[i] = diffusion::step_log_ratios(
          schedule, g.trajectories[i], std::span(mu).subspan(i * per, per),
          g.ref_means[i]);
      for (double r : ratios[i]) {
        out.max_abs_step_ratio = std::max(out.max_abs_step_ratio, std::abs(r));
      }
    }
    if (!clip) {
      pairs += B * (B - 1) / 2;
      continue;
    }
    for (std::size_t i = 0; i < B; ++i) {
      for (std::size_t k = i + 1; k < B; ++k) {
        ++pairs;
        const double target = (g.rewards[i] - g.rewards[k]) / beta;
        const double d = sum(ratios[i]) - sum(ratios[k]) - target;
        const double dc = clipped_sum(ratios[i], g.snapshot[i], *clip) -
                          clipped_sum(ratios[k], g.snapshot[k], *clip) - target;
        if (dc * dc <= d * d) continue;
        ++clipped_pairs;
        for (std::size_t idx : {i, k}) {
          const SnapshotStats& snap = g.snapshot[idx];
          if (clip->trajectory_level) {
            const double dev =
                std::abs(clipped_sum(ratios[idx], snap, *clip) - snap.total());
            out.max_clipped_deviation = std::max(out.max_clipped_deviation, dev);
            continue;
          }
          for (std::size_t j = 0; j < ratios[idx].size(); ++j) {
            const double old = snap.step_ratios[j];
            const double c = std::clamp(ratios[idx][j], old - clip->epsilon_step,
                                        old + clip->epsilon_step);
            out.max_clipped_deviation =
                std::max(out.max_clipped_deviation, std::abs(c - old));
          }
        }
      }
    }
  }
  out.clipped_branch_fraction =
      pairs ? static_cast<double>(clipped_pairs) / static_cast<double>(pairs) : 0.0;
  return out;
}

}  // namespace prdp::rdp
