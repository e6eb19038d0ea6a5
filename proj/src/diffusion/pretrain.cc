// Copyright 2026 The PRDP Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "prdp/diffusion.h"
#include "prdp/error.h"
#include "prdp/optim.h"

namespace prdp::diffusion {

std::vector<GaussianMixture> make_toy_mixtures(const ToyTaskConfig& config) {
  if (config.prompts < 1 || config.modes < 1) {
    throw std::invalid_argument("toy task needs prompts, modes >= 1");
  }
  std::vector<GaussianMixture> out;
  for (int c = 0; c < config.prompts; ++c) {
    const double phi = 2.0 * std::numbers::pi * c / config.prompts;
    const double cx = config.radius * std::cos(phi);
    const double cy = config.radius * std::sin(phi);
    GaussianMixture mix;
    for (int m = 0; m < config.modes; ++m) {
      const double psi =
          phi + std::numbers::pi / 2 + 2.0 * std::numbers::pi * m / config.modes;
      MixtureComponent comp;
      comp.mean = {cx + config.spread * std::cos(psi),
                   cy + config.spread * std::sin(psi)};
      comp.stddev = config.mode_std;
      comp.weight = 1.0;
      mix.components.push_back(std::move(comp));
    }
    out.push_back(std::move(mix));
  }
  return out;
}

std::vector<DataPoint> sample_toy_data(
    const std::vector<GaussianMixture>& mixtures, int per_prompt, Rng& rng) {
  std::vector<DataPoint> data;
  data.reserve(mixtures.size() * per_prompt);
  for (std::size_t c = 0; c < mixtures.size(); ++c) {
    const auto& comps = mixtures[c].components;
    const double total = mixtures[c].total_weight();
    for (int i = 0; i < per_prompt; ++i) {
      double u = rng.uniform() * total;
      std::size_t pick = 0;
      while (pick + 1 < comps.size() && u >= comps[pick].weight) {
        u -= comps[pick].weight;
        ++pick;
      }
      DataPoint p;
      p.prompt = static_cast<int>(c);
      for (double m : comps[pick].mean) {
        p.x0.push_back(m + comps[pick].stddev * rng.normal());
      }
      data.push_back(std::move(p));
    }
  }
  return data;
}

PretrainResult pretrain_reference(const std::vector<DataPoint>& data,
                                  const NoiseSchedule& schedule,
                                  const PolicyArch& arch,
                                  const PretrainConfig& config) {
  if (data.empty()) throw std::invalid_argument("pretraining data is empty");
  const std::size_t d = arch.state_dim;
  for (const DataPoint& p : data) {
    if (p.x0.size() != d) throw ShapeError("data point has wrong dimension");
  }
  Rng rng(config.seed);
  PolicyNet policy = PolicyNet::initialize(arch, rng);
  AdamW opt({.learning_rate = config.learning_rate,
             .weight_decay = 0.0,
             .grad_clip_norm = 1.0});
  const int T = schedule.steps();
  const std::size_t batch = config.batch_size;
  PretrainResult result{policy, {}};

  std::vector<double> xt(batch * d), target(batch * d);
  std::vector<int> prompts(batch), steps(batch);
  for (int s = 0; s < config.steps; ++s) {
    // Cosine decay to 10% of the base rate.
    const double progress = static_cast<double>(s) / std::max(1, config.steps);
    opt.set_learning_rate(config.learning_rate *
                          (0.1 + 0.45 * (1.0 + std::cos(std::numbers::pi * progress))));
    for (std::size_t r = 0; r < batch; ++r) {
      const DataPoint& p = data[rng.index(data.size())];
      const int t = 1 + static_cast<int>(rng.index(T));
      const double ab = schedule.alpha_bar(t);
      const double ab_prev = t > 1 ? schedule.alpha_bar(t - 1) : 1.0;
      prompts[r] = p.prompt;
      steps[r] = t;
      for (std::size_t k = 0; k < d; ++k) {
        const double eps = rng.normal();
        const double x = std::sqrt(ab) * p.x0[k] + std::sqrt(1.0 - ab) * eps;
        xt[r * d + k] = x;
        if (arch.parameterization == MeanParameterization::kEpsilon) {
          target[r * d + k] = eps;
        } else {
          // Forward-process posterior mean of x_{t-1} given x_t and x_0.
          target[r * d + k] =
              std::sqrt(ab_prev) * schedule.beta(t) / (1.0 - ab) * p.x0[k] +
              std::sqrt(schedule.alpha(t)) * (1.0 - ab_prev) / (1.0 - ab) * x;
        }
      }
    }
    ad::GraphBuilder g;
    auto vars = policy.declare_params(g);
    ad::Var out = policy.build_output(g, vars, schedule, xt, prompts, steps);
    ad::Var loss = g.mean(
        g.square(g.sub(out, g.constant(ad::Tensor::matrix(batch, d, target)))));
    ad::Graph graph = g.build(loss);
    ad::Gradients grads;
    try {
      grads = graph.backward(policy.params());
    } catch (const NonFiniteError& e) {
      throw RunError(std::string("pretraining diverged: ") + e.what());
    }
    result.losses.push_back(grads.output.item());
    opt.step(policy.mutable_params(), std::move(grads.grads));
  }
  result.policy = std::move(policy);
  return result;
}

}  // namespace prdp::diffusion
