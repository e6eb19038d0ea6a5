// Copyright 2026 The PRDP Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <stdexcept>

#include "prdp/baselines.h"
#include "prdp/error.h"

namespace prdp::baselines {

ad::Graph build_ddpo_loss_graph(const PolicyNet& policy,
                                const NoiseSchedule& schedule,
                                const Rollouts& rollouts, double clip_range) {
  if (!(clip_range > 0.0)) throw std::invalid_argument("clip range must be > 0");
  const std::size_t n = rollouts.trajectories.size();
  const std::size_t d = policy.arch().state_dim;
  const int T = schedule.steps();
  const std::size_t per = static_cast<std::size_t>(T) * d;
  if (n == 0) throw std::invalid_argument("ddpo loss needs rollouts");
  if (rollouts.advantages.size() != n || rollouts.old_means.size() != n * per) {
    throw ShapeError("rollouts have inconsistent sizes");
  }
  std::vector<double> inputs, prev, old_term, inv_two_var, adv;
  std::vector<int> prompts, steps;
  for (std::size_t i = 0; i < n; ++i) {
    const Trajectory& tr = rollouts.trajectories[i];
    diffusion::validate(tr, policy.arch(), schedule);
    for (int j = 0; j < T; ++j) {
      const int t = T - j;
      const auto x = tr.x(t);
      const auto xp = tr.x(t - 1);
      inputs.insert(inputs.end(), x.begin(), x.end());
      prev.insert(prev.end(), xp.begin(), xp.end());
      prompts.push_back(tr.prompt);
      steps.push_back(t);
      const double w = 0.5 / (schedule.sigma(t) * schedule.sigma(t));
      double sq = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = xp[k] - rollouts.old_means[i * per + j * d + k];
        sq += diff * diff;
      }
      old_term.push_back(w * sq);
      inv_two_var.push_back(w);
      adv.push_back(rollouts.advantages[i]);
    }
  }
  const std::size_t rows = steps.size();
  ad::GraphBuilder g;
  auto params = policy.declare_params(g);
  ad::Var mu = policy.build_means(g, params, schedule, inputs, prompts, steps);
  ad::Var diff = g.sub(g.constant(ad::Tensor::matrix(rows, d, std::move(prev))), mu);
  ad::Var log_ratio = g.sub(g.constant(ad::Tensor::vector(std::move(old_term))),
                            g.mul(g.constant(ad::Tensor::vector(std::move(inv_two_var))),
                                  g.row_sum(g.square(diff))));
  ad::Var ratio = g.exp(log_ratio);
  ad::Var a = g.constant(ad::Tensor::vector(std::move(adv)));
  ad::Var surrogate =
      g.minimum(g.mul(ratio, a),
                g.mul(g.clip(ratio, 1.0 - clip_range, 1.0 + clip_range), a));
  return g.build(g.neg(g.mean(surrogate)));
}

double ddpo_loss(const PolicyNet& policy, const NoiseSchedule& schedule,
                 const Rollouts& rollouts, double clip_range) {
  return build_ddpo_loss_graph(policy, schedule, rollouts, clip_range)
      .forward(policy.params())
      .item();
}

}  // namespace prdp::baselines
