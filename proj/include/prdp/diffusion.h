// Copyright 2026 The PRDP Lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Continuous Gaussian denoising policy over d-dimensional states.
//
// A trajectory runs x_T -> x_{T-1} -> ... -> x_0. Each transition is
// x_{t-1} ~ N(mu_theta(x_t, c, t), sigma_t^2 I) with a learned mean and a
// fixed per-step standard deviation taken from the noise schedule; x_T is
// drawn from N(0, I).
//
// Transition index j = T - t runs 0..T-1 in sampling order. All per-step
// arrays in this module (means, log ratios) use that order.

#ifndef PRDP_DIFFUSION_H_
#define PRDP_DIFFUSION_H_

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "prdp/autodiff.h"
#include "prdp/mixture.h"
#include "prdp/rng.h"

namespace prdp::diffusion {

class NoiseSchedule {
 public:
  // betas[t-1] in (0, 1) is the forward-process variance at step t; sigma[t-1]
  // > 0 the sampling standard deviation at step t.
  NoiseSchedule(std::vector<double> betas, std::vector<double> sigma);

  // Linear beta ramp; sampling sigma is the forward-posterior standard
  // deviation, except at t = 1 where the posterior collapses to zero and
  // sqrt(beta_1) is used instead.
  static NoiseSchedule linear(int steps, double beta_start, double beta_end);
  // Ramp from 0.1/T to 5/T (capped below 1): alphaBar_T is a few percent
  // for any T.
  static NoiseSchedule linear(int steps);

  int steps() const { return static_cast<int>(betas_.size()); }
  double beta(int t) const { return betas_.at(t - 1); }
  double alpha(int t) const { return 1.0 - beta(t); }
  double alpha_bar(int t) const { return alpha_bar_.at(t - 1); }
  double sigma(int t) const { return sigma_.at(t - 1); }

  const std::vector<double>& betas() const { return betas_; }
  const std::vector<double>& sigmas() const { return sigma_; }
  const std::vector<double>& alpha_bars() const { return alpha_bar_; }

  // mu = x_coef(t) * x_t - eps_coef(t) * eps_hat
  double x_coef(int t) const;
  double eps_coef(int t) const;

 private:
  std::vector<double> betas_;
  std::vector<double> sigma_;
  std::vector<double> alpha_bar_;
};

// Prompt ids are 0..count-1 with one-hot embeddings.
struct PromptSpace {
  int count = 1;
  std::vector<double> embedding(int prompt) const;
};

enum class MeanParameterization {
  kEpsilon,  // network predicts the noise; mean follows the DDPM formula
  kDirect,   // network output is the mean
};

struct PolicyArch {
  std::size_t state_dim = 2;
  std::size_t prompt_count = 4;
  std::vector<std::size_t> hidden = {64, 64};
  MeanParameterization parameterization = MeanParameterization::kEpsilon;

  // state + one-hot prompt + normalized timestep
  std::size_t input_dim() const { return state_dim + prompt_count + 1; }
  bool operator==(const PolicyArch&) const = default;
};

// Feed-forward tanh network parameterizing mu_theta(x_t, c, t). Parameters
// are named "l<i>.w" ([in, out]) and "l<i>.b" ([out]).
class PolicyNet {
 public:
  PolicyNet(PolicyArch arch, ad::Bindings params);

  static PolicyNet initialize(const PolicyArch& arch, Rng& rng);
  static PolicyNet zeros(const PolicyArch& arch);

  const PolicyArch& arch() const { return arch_; }
  const ad::Bindings& params() const { return params_; }
  ad::Bindings& mutable_params() { return params_; }
  std::size_t layer_count() const { return arch_.hidden.size() + 1; }
  std::size_t parameter_count() const;

  // Means for n rows; states is n*d, prompts and steps have n entries with
  // steps in 1..T. Returns n*d values.
  std::vector<double> means(const NoiseSchedule& schedule,
                            std::span<const double> states,
                            std::span<const int> prompts,
                            std::span<const int> steps) const;

  // Declares one learnable graph input per parameter.
  std::map<std::string, ad::Var> declare_params(ad::GraphBuilder& g) const;

  // Raw network output (eps prediction or mean, per parameterization) as an
  // [n, d] node. The row data is baked in as constants; only the parameters
  // are inputs.
  ad::Var build_output(ad::GraphBuilder& g,
                       const std::map<std::string, ad::Var>& params,
                       const NoiseSchedule& schedule,
                       std::span<const double> states,
                       std::span<const int> prompts,
                       std::span<const int> steps) const;

  // Same computation as means(), expressed in a graph.
  ad::Var build_means(ad::GraphBuilder& g,
                      const std::map<std::string, ad::Var>& params,
                      const NoiseSchedule& schedule,
                      std::span<const double> states,
                      std::span<const int> prompts,
                      std::span<const int> steps) const;

 private:
  PolicyArch arch_;
  ad::Bindings params_;

  std::vector<double> features(const NoiseSchedule& schedule,
                               std::span<const double> states,
                               std::span<const int> prompts,
                               std::span<const int> steps) const;
};

struct Trajectory {
  int prompt = 0;
  std::size_t dim = 0;
  int steps = 0;
  // (T+1) * dim values: x_T first, x_0 last.
  std::vector<double> states;

  std::span<const double> x(int t) const {
    return {states.data() + static_cast<std::size_t>(steps - t) * dim, dim};
  }
  std::span<const double> x0() const { return x(0); }

  bool operator==(const Trajectory&) const = default;
};

void validate(const Trajectory& traj, const PolicyArch& arch,
              const NoiseSchedule& schedule);

// Noise for one trajectory: (T+1)*d standard normals, the first d for x_T,
// then one block per transition in sampling order.
std::size_t noise_size(const NoiseSchedule& schedule, std::size_t dim);

Trajectory sample_trajectory(const PolicyNet& policy,
                             const NoiseSchedule& schedule, int prompt,
                             Rng& rng);
Trajectory sample_trajectory(const PolicyNet& policy,
                             const NoiseSchedule& schedule, int prompt,
                             std::span<const double> noise);

struct SampledBatch {
  std::vector<Trajectory> trajectories;
  // Sampler means: trajectory-major, then transition index, then dim.
  std::vector<double> means;
};

// Batched ancestral sampling; noise holds noise_size() values per prompt
// entry, concatenated.
SampledBatch sample_batch(const PolicyNet& policy,
                          const NoiseSchedule& schedule,
                          std::span<const int> prompts,
                          std::span<const double> noise);
SampledBatch sample_batch(const PolicyNet& policy,
                          const NoiseSchedule& schedule,
                          std::span<const int> prompts, Rng& rng);

// Per-transition means of `policy` along existing trajectories, same layout
// as SampledBatch::means.
std::vector<double> trajectory_means(const PolicyNet& policy,
                                     const NoiseSchedule& schedule,
                                     std::span<const Trajectory> trajs);

// Full log-likelihood including every Gaussian normalization constant.
double trajectory_log_prob(const PolicyNet& policy,
                           const NoiseSchedule& schedule,
                           const Trajectory& traj);

// log pi_theta(x_{t-1}|x_t,c) - log pi_ref(x_{t-1}|x_t,c) for t in 1..T.
double stepwise_log_ratio(const PolicyNet& policy, const PolicyNet& ref,
                          const NoiseSchedule& schedule, const Trajectory& traj,
                          int t);

// All T step ratios in transition order, from precomputed means.
std::vector<double> step_log_ratios(const NoiseSchedule& schedule,
                                    const Trajectory& traj,
                                    std::span<const double> policy_means,
                                    std::span<const double> ref_means);

// Sum of trajectory log-likelihoods as a graph over the policy parameters.
ad::Graph build_trajectory_log_prob_graph(const PolicyNet& policy,
                                          const NoiseSchedule& schedule,
                                          std::span<const Trajectory> trajs);

// ---------------------------------------------------------------------------
// Toy data and reference pretraining

struct DataPoint {
  std::vector<double> x0;
  int prompt = 0;
};

struct ToyTaskConfig {
  int prompts = 4;
  int modes = 2;
  double radius = 1.5;  // distance of each prompt's centre from the origin
  double spread = 0.75;  // distance of each mode from its prompt's centre
  double mode_std = 0.2;
};

// Per-prompt target distributions in 2-D: prompt c is centred at angle
// 2*pi*c/C, its modes spaced evenly on a circle of radius `spread` around
// that centre, starting perpendicular to the radial direction.
std::vector<GaussianMixture> make_toy_mixtures(const ToyTaskConfig& config);

std::vector<DataPoint> sample_toy_data(
    const std::vector<GaussianMixture>& mixtures, int per_prompt, Rng& rng);

struct PretrainConfig {
  int steps = 4000;
  double learning_rate = 2e-3;
  int batch_size = 256;
  std::uint64_t seed = 0;
};

struct PretrainResult {
  PolicyNet policy;
  std::vector<double> losses;
};

// Denoising MSE on eps (kEpsilon) or on the posterior mean (kDirect).
PretrainResult pretrain_reference(const std::vector<DataPoint>& data,
                                  const NoiseSchedule& schedule,
                                  const PolicyArch& arch,
                                  const PretrainConfig& config);

// ---------------------------------------------------------------------------
// Checkpoints: line-oriented text, see README for the layout.

struct Checkpoint {
  PolicyNet policy;
  NoiseSchedule schedule;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> metadata;
};

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace prdp::diffusion

#endif  // PRDP_DIFFUSION_H_
