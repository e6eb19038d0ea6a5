// Copyright 2026 The PRDP Lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Fully enumerable discrete denoising chain. With S states and T steps a
// trajectory is (x_T, ..., x_0) and there are S^(T+1) of them, so the
// partition function, the reward-tilted optimum pi*, and every KL are exact
// sums. Everything is computed in log space.
//
// Trajectory index k encodes the states in base S with x_T as the most
// significant digit.

#ifndef PRDP_TABULAR_H_
#define PRDP_TABULAR_H_

#include <optional>
#include <vector>

#include "prdp/autodiff.h"
#include "prdp/rng.h"

namespace prdp::tabular {

inline constexpr int kMaxStates = 6;
inline constexpr int kMaxSteps = 4;
inline constexpr std::size_t kEnumerationBudget = 10000;
// Smallest probability any reference entry may take.
inline constexpr double kProbabilityFloor = 1e-6;

struct TabularDiffusion {
  int states = 2;
  int steps = 1;
  int prompts = 1;
  std::vector<double> prior;   // [S], distribution of x_T
  std::vector<double> ref;     // [T][S][C][S]: pi_ref(x_{t-1} | x_t, c), t = 1..T
  std::vector<double> reward;  // [S][C]: r(x0, c)
  double beta = 1.0;

  std::size_t trajectory_count() const;
  std::size_t row_index(int t, int xt, int c) const;  // first entry of a row
  double ref_prob(int t, int xt, int c, int xprev) const;
  double r(int x0, int c) const { return reward[x0 * prompts + c]; }

  // Checks sizes, budget, normalization (1e-12), and the probability floor.
  void validate() const;
};

// Digits of trajectory k, x_T first.
std::vector<int> decode(const TabularDiffusion& model, std::size_t k);

// Per-step categorical logits plus per-prompt logits for x_T.
struct TabularPolicy {
  std::vector<double> logits;        // [T][S][C][S], same layout as ref
  std::vector<double> prior_logits;  // [C][S]

  // Log-softmax of every row.
  std::vector<double> log_transition(const TabularDiffusion& model) const;
  std::vector<double> log_prior(const TabularDiffusion& model) const;
};

TabularPolicy reference_policy(const TabularDiffusion& model);
TabularPolicy random_policy(const TabularDiffusion& model, Rng& rng,
                            double scale = 1.0);

struct TrajectoryDistribution {
  int prompt = 0;
  std::vector<double> log_probs;
  std::vector<double> probs;
  std::vector<int> x0;  // x0 of every trajectory

  double total() const;
  std::vector<double> marginal_x0(int states) const;
};

TrajectoryDistribution enumerate_distribution(const TabularDiffusion& model,
                                              const TabularPolicy& policy,
                                              int prompt);

double log_partition_function(const TabularDiffusion& model, int prompt);
double partition_function(const TabularDiffusion& model, int prompt);

// pi*(x|c) = pi_ref(x|c) exp(r(x0,c)/beta) / Z(c)
TrajectoryDistribution optimal_distribution(const TabularDiffusion& model,
                                            int prompt);

// Markov factorization of pi* by the soft backward recursion
//   V_0(x) = r(x, c)/beta,
//   V_t(x) = log sum_y pi_ref(y | x, c) exp(V_{t-1}(y)),
//   pi*(y | x, c) = pi_ref(y | x, c) exp(V_{t-1}(y) - V_t(x)),
//   pi*(x_T | c)  = p(x_T) exp(V_T(x_T)) / Z(c).
TabularPolicy optimal_policy(const TabularDiffusion& model);

double kl(const TrajectoryDistribution& p, const TrajectoryDistribution& q);
double kl_trajectory(const TabularDiffusion& model, const TabularPolicy& p,
                     const TabularPolicy& q, int prompt);
double kl_marginal(const TabularDiffusion& model, const TabularPolicy& p,
                   const TabularPolicy& q, int prompt);
double total_variation(const TrajectoryDistribution& p,
                       const TrajectoryDistribution& q);

// E_pi[r(x0, c)] - beta * KL(pi(.|c) || pi_ref(.|c)) over trajectories.
double rlhf_objective(const TabularDiffusion& model,
                      const TabularPolicy& policy, int prompt);

struct OptimalityReport {
  double residual = 0.0;  // max over pairs |d rhat - d r / beta|
  bool pass = false;
};

OptimalityReport verify_optimality_condition(const TabularDiffusion& model,
                                             const TabularPolicy& policy,
                                             int prompt, double tol);

// Expected pair loss with both trajectories drawn independently from the
// reference, prompts uniform:
//   L = sum_c p(c) E[(d rhat - d r / beta)^2] = 2 sum_c p(c) Var_ref(g_c),
//   g_c = rhat - r / beta.
double rdp_loss(const TabularDiffusion& model, const TabularPolicy& policy);

struct TabularClip {
  double epsilon = 1e-2;
  // Snapshot refresh period in gradient steps.
  int refresh_every = 10;
};

// Graph of the expected loss over inputs "logits" and "prior_logits". With
// a snapshot the per-step ratios (the x_T term counts as one step) are
// clamped around the snapshot's and the pairwise max is taken.
ad::Graph build_rdp_loss_graph(const TabularDiffusion& model,
                               const std::optional<TabularPolicy>& snapshot,
                               double epsilon = 0.0);

ad::Bindings to_bindings(const TabularDiffusion& model,
                         const TabularPolicy& policy);

struct TabularTrainConfig {
  int steps = 3000;
  double learning_rate = 0.05;
  std::optional<TabularClip> clip;
};

struct TabularTrainResult {
  TabularPolicy policy;
  std::vector<double> losses;
};

// Adaptive-moment descent on the exact expected loss.
TabularTrainResult train_tabular_rdp(const TabularDiffusion& model,
                                     const TabularPolicy& init,
                                     const TabularTrainConfig& config);

// Random full-support instance; reference rows are softmax(concentration * z)
// mixed with the uniform row so every entry stays above the floor.
TabularDiffusion random_instance(int states, int steps, int prompts,
                                 double beta, Rng& rng,
                                 double reward_scale = 1.0,
                                 double concentration = 1.0);

// S = 3, T = 2, C = 2, beta = 0.5, seeded.
TabularDiffusion default_instance();

// S = 2, T = 1, uniform prior and reference, r(0) = 0, r(1) = ln 2, beta = 1:
// Z = 1.5.
TabularDiffusion two_state_instance();

}  // namespace prdp::tabular

#endif  // PRDP_TABULAR_H_
