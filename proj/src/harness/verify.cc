// Copyright 2026 The PRDP Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <limits>

#include "prdp/harness.h"
#include "prdp/tabular.h"

namespace prdp::harness {

namespace {

tabular::TabularDiffusion draw_instance(Rng& rng) {
  const int S = 2 + static_cast<int>(rng.index(3));
  const int T = 1 + static_cast<int>(rng.index(3));
  const int C = 1 + static_cast<int>(rng.index(3));
  const double beta = std::exp(std::log(0.1) + rng.uniform() * std::log(100.0));
  const double scale = 0.5 + 2.5 * rng.uniform();
  return tabular::random_instance(S, T, C, beta, rng, scale, 0.5 + 1.5 * rng.uniform());
}

}  // namespace

bool VerifyReport::pass() const {
  return std::all_of(checks.begin(), checks.end(),
                     [](const VerifyCheck& c) { return c.pass; });
}

VerifyReport run_verification(const VerifyOptions& options) {
  VerifyReport report;
  Rng rng(options.seed);

  {
    double worst = std::numeric_limits<double>::infinity();
    for (int i = 0; i < options.kl_instances; ++i) {
      const auto m = draw_instance(rng);
      const auto pol = tabular::random_policy(m, rng, 1.0 + rng.uniform());
      const auto ref = tabular::reference_policy(m);
      for (int c = 0; c < m.prompts; ++c) {
        worst = std::min(worst, tabular::kl_trajectory(m, pol, ref, c) -
                                    tabular::kl_marginal(m, pol, ref, c));
      }
    }
    report.checks.push_back({"kl_lower_bound", worst >= -1e-12, worst, -1e-12,
                             "min over instances of trajectory KL minus marginal KL"});
  }

  {
    int counterexamples = 0;
    double worst_gap = std::numeric_limits<double>::infinity();
    for (int i = 0; i < options.optimum_instances; ++i) {
      const auto m = draw_instance(rng);
      const auto pstar = tabular::optimal_policy(m);
      std::vector<double> best(m.prompts);
      for (int c = 0; c < m.prompts; ++c) best[c] = tabular::rlhf_objective(m, pstar, c);
      for (int j = 0; j < options.optimum_policies; ++j) {
        const auto pol = tabular::random_policy(m, rng, 0.1 + 2.0 * rng.uniform());
        for (int c = 0; c < m.prompts; ++c) {
          const double gap = best[c] - tabular::rlhf_objective(m, pol, c);
          worst_gap = std::min(worst_gap, gap);
          if (gap < 0.0) ++counterexamples;
        }
      }
    }
    report.checks.push_back({"tilted_optimum_maximizes_objective", counterexamples == 0,
                             static_cast<double>(counterexamples), 0.0,
                             "random policies beating the optimum; smallest gap " +
                                 std::to_string(worst_gap)});
  }

  {
    const auto m = tabular::default_instance();
    const auto pstar = tabular::optimal_policy(m);
    const double star_loss = tabular::rdp_loss(m, pstar);
    double residual = 0.0;
    for (int c = 0; c < m.prompts; ++c) {
      residual = std::max(
          residual, tabular::verify_optimality_condition(m, pstar, c, 1e-9).residual);
    }
    const auto trained =
        tabular::train_tabular_rdp(m, tabular::reference_policy(m), {});
    double tv = 0.0;
    for (int c = 0; c < m.prompts; ++c) {
      tv = std::max(tv, tabular::total_variation(
                            tabular::enumerate_distribution(m, trained.policy, c),
                            tabular::optimal_distribution(m, c)));
    }
    const double final_loss = trained.losses.empty() ? 0.0 : trained.losses.back();
    report.checks.push_back({"optimum_loss", star_loss < 1e-12, star_loss, 1e-12,
                             "pair loss of the tilted optimum"});
    report.checks.push_back({"optimum_residual", residual < 1e-9, residual, 1e-9,
                             "max pairwise optimality residual of the tilted optimum"});
    report.checks.push_back({"trained_loss", final_loss < 1e-6, final_loss, 1e-6,
                             "final exact loss after training from the reference"});
    report.checks.push_back({"trained_tv", tv < 1e-3, tv, 1e-3,
                             "total variation between trained policy and optimum"});
  }

  {
    const auto m = tabular::two_state_instance();
    const double z = tabular::partition_function(m, 0);
    report.checks.push_back({"partition_two_state", std::abs(z - 1.5) < 1e-12,
                             std::abs(z - 1.5), 1e-12, "|Z - 1.5| on the two-state chain"});
    auto flat = m;
    flat.reward = {0.0, 0.0};
    const double z0 = tabular::partition_function(flat, 0);
    report.checks.push_back({"partition_zero_reward", std::abs(z0 - 1.0) < 1e-12,
                             std::abs(z0 - 1.0), 1e-12, "|Z - 1| with zero reward"});
  }
  return report;
}

}  // namespace prdp::harness
