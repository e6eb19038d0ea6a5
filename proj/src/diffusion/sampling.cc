// Copyright 2026 The PRDP Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "prdp/diffusion.h"
#include "prdp/error.h"

namespace prdp::diffusion {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double diff = a[k] - b[k];
    s += diff * diff;
  }
  return s;
}

double gaussian_log_density(std::span<const double> x,
                            std::span<const double> mean, double sigma) {
  const double var = sigma * sigma;
  return -0.5 * static_cast<double>(x.size()) * (kLog2Pi + std::log(var)) -
         0.5 * squared_distance(x, mean) / var;
}

}  // namespace

void validate(const Trajectory& traj, const PolicyArch& arch,
              const NoiseSchedule& schedule) {
  if (traj.dim != arch.state_dim || traj.steps != schedule.steps() ||
      traj.states.size() !=
          static_cast<std::size_t>(traj.steps + 1) * traj.dim) {
    throw ShapeError("trajectory shape does not match policy/schedule");
  }
  if (traj.prompt < 0 ||
      static_cast<std::size_t>(traj.prompt) >= arch.prompt_count) {
    throw std::out_of_range("trajectory prompt id out of range");
  }
}

std::size_t noise_size(const NoiseSchedule& schedule, std::size_t dim) {
  return static_cast<std::size_t>(schedule.steps() + 1) * dim;
}

SampledBatch sample_batch(const PolicyNet& policy,
                          const NoiseSchedule& schedule,
                          std::span<const int> prompts,
                          std::span<const double> noise) {
  const std::size_t n = prompts.size();
  const std::size_t d = policy.arch().state_dim;
  const int T = schedule.steps();
  const std::size_t per = noise_size(schedule, d);
  if (noise.size() != n * per) {
    throw ShapeError("sample_batch: noise has wrong length");
  }
  SampledBatch out;
  out.trajectories.resize(n);
  out.means.assign(n * T * d, 0.0);
  std::vector<double> x(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    Trajectory& tr = out.trajectories[i];
    tr.prompt = prompts[i];
    tr.dim = d;
    tr.steps = T;
    tr.states.assign(per, 0.0);
    for (std::size_t k = 0; k < d; ++k) {
      x[i * d + k] = noise[i * per + k];
      tr.states[k] = x[i * d + k];
    }
  }
  std::vector<int> steps(n);
  for (int j = 0; j < T; ++j) {
    const int t = T - j;
    std::fill(steps.begin(), steps.end(), t);
    std::vector<double> mu = policy.means(schedule, x, prompts, steps);
    const double sigma = schedule.sigma(t);
    for (std::size_t i = 0; i < n; ++i) {
      Trajectory& tr = out.trajectories[i];
      for (std::size_t k = 0; k < d; ++k) {
        const double m = mu[i * d + k];
        const double v = m + sigma * noise[i * per + (j + 1) * d + k];
        if (!std::isfinite(v)) {
          throw NonFiniteError("sampling produced a non-finite state at t=" +
                               std::to_string(t));
        }
        out.means[(i * T + j) * d + k] = m;
        x[i * d + k] = v;
        tr.states[(j + 1) * d + k] = v;
      }
    }
  }
  return out;
}

SampledBatch sample_batch(const PolicyNet& policy,
                          const NoiseSchedule& schedule,
                          std::span<const int> prompts, Rng& rng) {
  std::vector<double> noise =
      rng.normals(prompts.size() * noise_size(schedule, policy.arch().state_dim));
  return sample_batch(policy, schedule, prompts, noise);
}

Trajectory sample_trajectory(const PolicyNet& policy,
                             const NoiseSchedule& schedule, int prompt,
                             std::span<const double> noise) {
  const int prompts[1] = {prompt};
  return std::move(sample_batch(policy, schedule, prompts, noise)
                       .trajectories.front());
}

Trajectory sample_trajectory(const PolicyNet& policy,
                             const NoiseSchedule& schedule, int prompt,
                             Rng& rng) {
  std::vector<double> noise =
      rng.normals(noise_size(schedule, policy.arch().state_dim));
  return sample_trajectory(policy, schedule, prompt, noise);
}

std::vector<double> trajectory_means(const PolicyNet& policy,
                                     const NoiseSchedule& schedule,
                                     std::span<const Trajectory> trajs) {
  const std::size_t d = policy.arch().state_dim;
  const int T = schedule.steps();
  std::vector<double> states;
  std::vector<int> prompts, steps;
  states.reserve(trajs.size() * T * d);
  for (const Trajectory& tr : trajs) {
    validate(tr, policy.arch(), schedule);
    for (int j = 0; j < T; ++j) {
      states.insert(states.end(), tr.states.begin() + j * d,
                    tr.states.begin() + (j + 1) * d);
      prompts.push_back(tr.prompt);
      steps.push_back(T - j);
    }
  }
  return policy.means(schedule, states, prompts, steps);
}

double trajectory_log_prob(const PolicyNet& policy,
                           const NoiseSchedule& schedule,
                           const Trajectory& traj) {
  const std::vector<double> mu =
      trajectory_means(policy, schedule, std::span(&traj, 1));
  const std::size_t d = traj.dim;
  const int T = traj.steps;
  const std::vector<double> zero(d, 0.0);
  double lp = gaussian_log_density(traj.x(T), zero, 1.0);
  for (int j = 0; j < T; ++j) {
    const int t = T - j;
    lp += gaussian_log_density(traj.x(t - 1),
                               std::span(mu.data() + j * d, d),
                               schedule.sigma(t));
  }
  return lp;
}

std::vector<double> step_log_ratios(const NoiseSchedule& schedule,
                                    const Trajectory& traj,
                                    std::span<const double> policy_means,
                                    std::span<const double> ref_means) {
  const std::size_t d = traj.dim;
  const int T = traj.steps;
  if (policy_means.size() != T * d || ref_means.size() != T * d) {
    throw ShapeError("step_log_ratios: mean arrays have wrong length");
  }
  std::vector<double> out(T);
  for (int j = 0; j < T; ++j) {
    const int t = T - j;
    const auto x = traj.x(t - 1);
    const double s2 = schedule.sigma(t) * schedule.sigma(t);
    out[j] = (squared_distance(x, ref_means.subspan(j * d, d)) -
              squared_distance(x, policy_means.subspan(j * d, d))) /
             (2.0 * s2);
  }
  return out;
}

double stepwise_log_ratio(const PolicyNet& policy, const PolicyNet& ref,
                          const NoiseSchedule& schedule, const Trajectory& traj,
                          int t) {
  if (t < 1 || t > schedule.steps()) {
    throw std::out_of_range("stepwise_log_ratio: t outside 1..T");
  }
  const auto span = std::span(&traj, 1);
  const auto ratios =
      step_log_ratios(schedule, traj, trajectory_means(policy, schedule, span),
                      trajectory_means(ref, schedule, span));
  return ratios[schedule.steps() - t];
}

ad::Graph build_trajectory_log_prob_graph(const PolicyNet& policy,
                                          const NoiseSchedule& schedule,
                                          std::span<const Trajectory> trajs) {
  const std::size_t d = policy.arch().state_dim;
  const int T = schedule.steps();
  const std::size_t rows = trajs.size() * T;
  std::vector<double> inputs, targets, weights;
  std::vector<int> prompts, steps;
  double constant = 0.0;
  const std::vector<double> zero(d, 0.0);
  for (const Trajectory& tr : trajs) {
    validate(tr, policy.arch(), schedule);
    constant += gaussian_log_density(tr.x(T), zero, 1.0);
    for (int j = 0; j < T; ++j) {
      const int t = T - j;
      const double s2 = schedule.sigma(t) * schedule.sigma(t);
      inputs.insert(inputs.end(), tr.x(t).begin(), tr.x(t).end());
      targets.insert(targets.end(), tr.x(t - 1).begin(), tr.x(t - 1).end());
      prompts.push_back(tr.prompt);
      steps.push_back(t);
      weights.push_back(-0.5 / s2);
      constant -= 0.5 * static_cast<double>(d) * (kLog2Pi + std::log(s2));
    }
  }
  ad::GraphBuilder g;
  auto params = policy.declare_params(g);
  ad::Var mu = policy.build_means(g, params, schedule, inputs, prompts, steps);
  ad::Var diff =
      g.sub(g.constant(ad::Tensor::matrix(rows, d, std::move(targets))), mu);
  ad::Var sq = g.row_sum(g.square(diff));
  ad::Var lp = g.sum(g.mul(sq, g.constant(ad::Tensor::vector(std::move(weights)))));
  return g.build(g.add_scalar(lp, constant));
}

}  // namespace prdp::diffusion
