// Copyright 2026 The PRDP Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "prdp/rdp.h"
#include "test_util.h"

using namespace prdp;
using namespace prdp::diffusion;
using namespace prdp::rdp;
using namespace prdp::testing;

namespace {

struct Fixture {
  NoiseSchedule schedule = NoiseSchedule::linear(4);
  PolicyArch arch{.prompt_count = 3, .hidden = {6}};
  PolicyNet ref = random_policy(arch, 1);
  PolicyNet old = perturbed(ref, 2, 0.05);
  PolicyNet policy = perturbed(old, 3, 0.05);
};

// N groups of B trajectories sampled from `old`, rewards drawn at random.
struct Sampled {
  std::vector<Trajectory> trajs;
  std::vector<double> rewards;
  std::vector<double> old_means;
};

Sampled sample_groups(const Fixture& f, int N, int B, Rng& rng) {
  std::vector<int> prompts;
  for (int n = 0; n < N; ++n) {
    const int c = static_cast<int>(rng.index(3));
    for (int b = 0; b < B; ++b) prompts.push_back(c);
  }
  SampledBatch sb = sample_batch(f.old, f.schedule, prompts, rng);
  Sampled s{std::move(sb.trajectories), {}, std::move(sb.means)};
  for (std::size_t i = 0; i < s.trajs.size(); ++i) s.rewards.push_back(rng.normal());
  return s;
}

// Independent pairwise reference for the batch loss.
double pairwise_mean(const Fixture& f, const PairBatch& batch, double beta,
                     const std::optional<ClipConfig>& clip) {
  double total = 0.0;
  int n = 0;
  for (const auto& g : batch.groups) {
    for (std::size_t i = 0; i < g.trajectories.size(); ++i) {
      for (std::size_t k = i + 1; k < g.trajectories.size(); ++k) {
        total += clip ? prdp_loss_pair(f.policy, f.ref, f.schedule, g.trajectories[i],
                                       g.trajectories[k], g.rewards[i], g.rewards[k],
                                       g.snapshot[i], g.snapshot[k], beta, *clip)
                      : rdp_loss_pair(f.policy, f.ref, f.schedule, g.trajectories[i],
                                      g.trajectories[k], g.rewards[i], g.rewards[k],
                                      beta);
        ++n;
      }
    }
  }
  return total / n;
}

}  // namespace

TEST_CASE("rhat") {
  Fixture f;
  Rng rng(1);
  for (int i = 0; i < 10; ++i) {
    Trajectory tr = sample_trajectory(f.policy, f.schedule, i % 3, rng);
    CHECK(rhat(f.ref, f.ref, f.schedule, tr) == 0.0);
    const double diff = trajectory_log_prob(f.policy, f.schedule, tr) -
                        trajectory_log_prob(f.ref, f.schedule, tr);
    CHECK(std::abs(rhat(f.policy, f.ref, f.schedule, tr) - diff) < 1e-10);
  }
}

TEST_CASE("rhat increases as the mean moves toward the realized state") {
  NoiseSchedule s({0.3}, {0.8});
  PolicyNet ref = constant_mean(1, 1, 0.0);
  Trajectory tr{.prompt = 0, .dim = 1, .steps = 1, .states = {0.4, 1.0}};
  double prev = rhat(ref, ref, s, tr);
  for (double m : {0.2, 0.4, 0.6, 0.8, 1.0}) {
    const double r = rhat(constant_mean(1, 1, m), ref, s, tr);
    CHECK(r > prev);
    prev = r;
  }
}

TEST_CASE("rdp pair loss examples") {
  Fixture f;
  Rng rng(2);
  Trajectory a = sample_trajectory(f.ref, f.schedule, 1, rng);
  Trajectory b = sample_trajectory(f.ref, f.schedule, 1, rng);
  const double beta = 0.37;
  CHECK(rdp_loss_pair(f.ref, f.ref, f.schedule, a, b, 0.8, 0.8, beta) == 0.0);
  CHECK(rdp_loss_pair(f.ref, f.ref, f.schedule, a, b, 0.5 + beta, 0.5, beta) ==
        doctest::Approx(1.0).epsilon(1e-12));
  CHECK(rdp_loss_pair(f.policy, f.ref, f.schedule, a, b, 1.2, -0.3, beta) ==
        doctest::Approx(rdp_loss_pair(f.policy, f.ref, f.schedule, b, a, -0.3, 1.2, beta))
            .epsilon(1e-12));
  Trajectory other = sample_trajectory(f.ref, f.schedule, 2, rng);
  CHECK_THROWS_AS(rdp_loss_pair(f.policy, f.ref, f.schedule, a, other, 0, 0, beta),
                  std::invalid_argument);
  CHECK_THROWS(rdp_loss_pair(f.policy, f.ref, f.schedule, a, b, 0, 0, 0.0));
}

TEST_CASE("clipped rhat: clamp arithmetic") {
  // T = 1, sigma = 1, x0 = 0, mu_ref = 1: rhat_t = (1 - mu^2) / 2 - 0.
  NoiseSchedule s({0.3}, {1.0});
  PolicyNet ref = constant_mean(1, 1, 1.0);
  PolicyNet pol = constant_mean(1, 1, 0.0);               // ratio 0.5
  PolicyNet old = constant_mean(1, 1, std::sqrt(0.6));    // ratio 0.2
  Trajectory tr{.prompt = 0, .dim = 1, .steps = 1, .states = {0.7, 0.0}};
  CHECK(rhat(pol, ref, s, tr) == doctest::Approx(0.5).epsilon(1e-14));
  SnapshotStats snap = snapshot_stats(old, ref, s, tr);
  CHECK(snap.step_ratios[0] == doctest::Approx(0.2).epsilon(1e-14));
  CHECK(clipped_rhat(pol, ref, snap, s, tr, {.epsilon_step = 0.1}) ==
        doctest::Approx(0.3).epsilon(1e-12));
  CHECK_THROWS(clipped_rhat(pol, ref, SnapshotStats{}, s, tr, {.epsilon_step = 0.1}));
  CHECK_THROWS(clipped_rhat(pol, ref, snap, s, tr, {.epsilon_step = 0.0}));
}

TEST_CASE("clipped rhat: identity at the snapshot and the T*eps bound") {
  Fixture f;
  Rng rng(4);
  for (int i = 0; i < 50; ++i) {
    Trajectory tr = sample_trajectory(f.old, f.schedule, i % 3, rng);
    SnapshotStats snap = snapshot_stats(f.old, f.ref, f.schedule, tr);
    const ClipConfig clip{.epsilon_step = 1e-3 * (1 + i % 5)};
    CHECK(clipped_rhat(f.old, f.ref, snap, f.schedule, tr, clip) ==
          rhat(f.old, f.ref, f.schedule, tr));
    PolicyNet far = perturbed(f.old, 100 + i, 0.3);
    const double c = clipped_rhat(far, f.ref, snap, f.schedule, tr, clip);
    double mag = 0.0;
    for (double r : snap.step_ratios) mag += std::abs(r);
    // Tolerance covers rounding in the two T-term sums.
    CHECK(std::abs(c - snap.total()) <= 4 * clip.epsilon_step + 1e-14 * (1.0 + mag));
  }
}

TEST_CASE("trajectory-level clipping clamps the total") {
  Fixture f;
  Rng rng(5);
  Trajectory tr = sample_trajectory(f.old, f.schedule, 0, rng);
  SnapshotStats snap = snapshot_stats(f.old, f.ref, f.schedule, tr);
  PolicyNet far = perturbed(f.old, 9, 0.5);
  ClipConfig clip{.epsilon_step = 1e-3, .trajectory_level = true};
  CHECK(clip.traj_range(4) == 4e-3);
  const double full = rhat(far, f.ref, f.schedule, tr);
  const double c = clipped_rhat(far, f.ref, snap, f.schedule, tr, clip);
  CHECK(c == std::clamp(full, snap.total() - 4e-3, snap.total() + 4e-3));
  clip.epsilon_traj = 0.5;
  CHECK(clip.traj_range(4) == 0.5);
}

TEST_CASE("prdp pair loss") {
  Fixture f;
  Rng rng(6);
  Trajectory a = sample_trajectory(f.old, f.schedule, 1, rng);
  Trajectory b = sample_trajectory(f.old, f.schedule, 1, rng);
  auto sa = snapshot_stats(f.old, f.ref, f.schedule, a);
  auto sb = snapshot_stats(f.old, f.ref, f.schedule, b);
  const ClipConfig clip{.epsilon_step = 1e-3};
  CHECK(prdp_loss_pair(f.old, f.ref, f.schedule, a, b, 0.3, -0.2, sa, sb, 0.5, clip) ==
        rdp_loss_pair(f.old, f.ref, f.schedule, a, b, 0.3, -0.2, 0.5));
  PolicyNet far = perturbed(f.old, 7, 0.2);
  CHECK(prdp_loss_pair(far, f.ref, f.schedule, a, b, 0.3, -0.2, sa, sb, 0.5, clip) >=
        rdp_loss_pair(far, f.ref, f.schedule, a, b, 0.3, -0.2, 0.5));
}

TEST_CASE("gradient vanishes when every step is clipped in the selected branch") {
  // One transition, d = 1; mu_theta = w * x + b. The snapshot sits at
  // theta = 0, the evaluation point has moved far enough that both
  // trajectories' single step is clamped, and the clipped loss is larger.
  NoiseSchedule s({0.3}, {1.0});
  PolicyArch arch = affine_arch(1, 1);
  PolicyNet ref = PolicyNet::zeros(arch);
  PolicyNet old = ref;
  Trajectory a{.prompt = 0, .dim = 1, .steps = 1, .states = {1.0, 1.0}};
  Trajectory b{.prompt = 0, .dim = 1, .steps = 1, .states = {-1.0, -0.2}};
  std::vector<Trajectory> trajs{a, b};
  std::vector<double> rewards{2.0, 0.0};
  PairBatch batch = make_pair_batch(old, ref, s, trajs, rewards, 2);
  const double beta = 1.0;
  const ClipConfig clip{.epsilon_step = 0.01};

  PolicyNet pol = ref;
  pol.mutable_params().at("l0.w").values()[0] = 0.5;  // weight on x
  // Step ratios are 0.375 (a) and -0.025 (b), both outside +-0.01, so the
  // clamped difference 0.02 is further from the target 2 than 0.4 is.
  const auto sa = snapshot_stats(old, ref, s, a);
  const auto sb = snapshot_stats(old, ref, s, b);
  const double l = rdp_loss_pair(pol, ref, s, a, b, 2.0, 0.0, beta);
  const double lp = prdp_loss_pair(pol, ref, s, a, b, 2.0, 0.0, sa, sb, beta, clip);
  REQUIRE(lp > l);

  ad::Graph g = build_batch_loss_graph(pol, s, batch, beta, clip);
  auto grads = g.backward(pol.params());
  for (const auto& [name, t] : grads.grads) {
    for (double v : t.values()) CHECK(v == 0.0);
  }
  auto rep = ad::finite_difference_check(g, pol.params(), 1e-6);
  CHECK(rep.boundary_coordinates.empty());
  CHECK(rep.max_rel_error < 1e-9);
}

TEST_CASE("batch loss counting and agreement with pair losses") {
  Fixture f;
  Rng rng(8);
  const double beta = 0.8;
  const ClipConfig clip{.epsilon_step = 2e-3};
  {
    Sampled s = sample_groups(f, 1, 2, rng);
    PairBatch b = make_pair_batch(f.old, f.ref, f.schedule, s.trajs, s.rewards, 2, s.old_means);
    CHECK(b.pair_count() == 1);
    const auto& g = b.groups[0];
    CHECK(batch_loss(f.policy, f.schedule, b, beta, clip) ==
          doctest::Approx(prdp_loss_pair(f.policy, f.ref, f.schedule, g.trajectories[0],
                                         g.trajectories[1], g.rewards[0], g.rewards[1],
                                         g.snapshot[0], g.snapshot[1], beta, clip))
              .epsilon(1e-12));
  }
  {
    Sampled s = sample_groups(f, 2, 3, rng);
    PairBatch b = make_pair_batch(f.old, f.ref, f.schedule, s.trajs, s.rewards, 3, s.old_means);
    CHECK(b.groups.size() == 2);
    CHECK(b.pair_count() == 6);
    for (auto c : {std::optional<ClipConfig>{}, std::optional<ClipConfig>{clip}}) {
      CHECK(batch_loss(f.policy, f.schedule, b, beta, c) ==
            doctest::Approx(pairwise_mean(f, b, beta, c)).epsilon(1e-12));
    }
  }
  {
    // Duplicate prompts stay in separate groups.
    std::vector<int> prompts{1, 1, 1, 1};
    SampledBatch sb = sample_batch(f.old, f.schedule, prompts, rng);
    std::vector<double> r{0, 1, 2, 3};
    PairBatch b = make_pair_batch(f.old, f.ref, f.schedule, sb.trajectories, r, 2, sb.means);
    CHECK(b.pair_count() == 2);
  }
}

TEST_CASE("batch loss at the reference with equal rewards is zero") {
  Fixture f;
  Rng rng(9);
  Sampled s = sample_groups(f, 3, 4, rng);
  std::fill(s.rewards.begin(), s.rewards.end(), 0.25);
  PairBatch b = make_pair_batch(f.ref, f.ref, f.schedule, s.trajs, s.rewards, 4);
  // Zero up to round-off between the graph and plain mean evaluations.
  CHECK(batch_loss(f.ref, f.schedule, b, 0.1, ClipConfig{}) < 1e-20);
  CHECK(batch_loss(f.ref, f.schedule, b, 0.1, std::nullopt) < 1e-20);
}

TEST_CASE("batch loss errors") {
  Fixture f;
  Rng rng(10);
  Sampled s = sample_groups(f, 2, 1, rng);
  PairBatch b = make_pair_batch(f.old, f.ref, f.schedule, s.trajs, s.rewards, 1);
  CHECK_THROWS_AS(batch_loss(f.policy, f.schedule, b, 1.0, std::nullopt),
                  std::invalid_argument);
  std::vector<int> prompts{0, 1};
  SampledBatch sb = sample_batch(f.old, f.schedule, prompts, rng);
  std::vector<double> r{0, 1};
  CHECK_THROWS(make_pair_batch(f.old, f.ref, f.schedule, sb.trajectories, r, 2));
}

TEST_CASE("property: clipped loss bounds the plain loss from above") {
  Fixture f;
  Rng rng(11);
  int checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Sampled s = sample_groups(f, 1, 2, rng);
    const auto& a = s.trajs[0];
    const auto& b = s.trajs[1];
    auto sa = snapshot_stats(f.old, f.ref, f.schedule, a);
    auto sb = snapshot_stats(f.old, f.ref, f.schedule, b);
    PolicyNet pol = perturbed(f.old, 1000 + trial, 0.02 * (1 + trial % 10));
    const double beta = std::exp(rng.normal() * 2.0);
    const ClipConfig clip{.epsilon_step = std::exp(rng.normal() - 5.0)};
    const double lp = prdp_loss_pair(pol, f.ref, f.schedule, a, b, s.rewards[0],
                                     s.rewards[1], sa, sb, beta, clip);
    const double l = rdp_loss_pair(pol, f.ref, f.schedule, a, b, s.rewards[0],
                                   s.rewards[1], beta);
    CHECK(lp >= l);
    ++checked;
  }
  CHECK(checked == 100);
}

TEST_CASE("property: batch loss ignores order within a prompt group") {
  Fixture f;
  Rng rng(12);
  Sampled s = sample_groups(f, 2, 5, rng);
  PairBatch b = make_pair_batch(f.old, f.ref, f.schedule, s.trajs, s.rewards, 5, s.old_means);
  const ClipConfig clip{.epsilon_step = 1e-3};
  const double base = batch_loss(f.policy, f.schedule, b, 0.5, clip);
  for (int trial = 0; trial < 10; ++trial) {
    PairBatch shuffled = b;
    for (auto& g : shuffled.groups) {
      std::vector<std::size_t> perm(g.trajectories.size());
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng.engine());
      PromptGroup h{.prompt = g.prompt};
      for (std::size_t i : perm) {
        h.trajectories.push_back(g.trajectories[i]);
        h.rewards.push_back(g.rewards[i]);
        h.snapshot.push_back(g.snapshot[i]);
        h.ref_means.push_back(g.ref_means[i]);
      }
      g = std::move(h);
    }
    CHECK(std::abs(batch_loss(f.policy, f.schedule, shuffled, 0.5, clip) - base) <=
          1e-9 * std::max(1.0, std::abs(base)));
  }
}

TEST_CASE("property: scaling rewards and beta together leaves the loss unchanged") {
  Fixture f;
  Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    Sampled s = sample_groups(f, 1, 2, rng);
    const double beta = std::exp(rng.normal());
    const double k = std::exp(2.0 * rng.normal());
    const double l = rdp_loss_pair(f.policy, f.ref, f.schedule, s.trajs[0], s.trajs[1],
                                   s.rewards[0], s.rewards[1], beta);
    const double lk = rdp_loss_pair(f.policy, f.ref, f.schedule, s.trajs[0], s.trajs[1],
                                    k * s.rewards[0], k * s.rewards[1], k * beta);
    CHECK(lk == doctest::Approx(l).epsilon(1e-12));
  }
}

TEST_CASE("property: batch loss gradients match finite differences") {
  Fixture f;
  Rng rng(14);
  Sampled s = sample_groups(f, 2, 4, rng);
  PairBatch b = make_pair_batch(f.old, f.ref, f.schedule, s.trajs, s.rewards, 4, s.old_means);
  for (auto clip : {std::optional<ClipConfig>{}, std::optional<ClipConfig>{{.epsilon_step = 1e-2}},
                    std::optional<ClipConfig>{{.epsilon_step = 1e-2, .trajectory_level = true}}}) {
    ad::Graph g = build_batch_loss_graph(f.policy, f.schedule, b, 0.7, clip);
    for (int point = 0; point < 10; ++point) {
      PolicyNet at = perturbed(f.old, 500 + point, 0.01);
      auto rep = ad::finite_difference_check(g, at.params());
      CHECK(rep.max_rel_error < 1e-4);
    }
  }
}

TEST_CASE("diagnostics") {
  Fixture f;
  Rng rng(15);
  Sampled s = sample_groups(f, 2, 4, rng);
  PairBatch b = make_pair_batch(f.old, f.ref, f.schedule, s.trajs, s.rewards, 4, s.old_means);
  const ClipConfig clip{.epsilon_step = 1e-3};
  auto at_old = diagnose(f.old, f.schedule, b, 0.5, clip);
  CHECK(at_old.clipped_branch_fraction == 0.0);
  CHECK(at_old.max_clipped_deviation == 0.0);
  PolicyNet far = perturbed(f.old, 3, 0.3);
  auto d = diagnose(far, f.schedule, b, 0.5, clip);
  CHECK(d.max_abs_step_ratio > 0.0);
  CHECK(d.max_clipped_deviation <= clip.epsilon_step * (1 + 1e-12) + 1e-15);
}
