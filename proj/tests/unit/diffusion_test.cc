// Copyright 2026 The PRDP Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>

#include "doctest.h"
#include "prdp/diffusion.h"
#include "prdp/error.h"
#include "test_util.h"

using namespace prdp;
using namespace prdp::diffusion;
using namespace prdp::testing;

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

}  // namespace

TEST_CASE("schedule invariants") {
  for (int T : {1, 2, 10, 50}) {
    NoiseSchedule s = NoiseSchedule::linear(T);
    REQUIRE(s.steps() == T);
    CHECK(s.sigmas().size() == static_cast<std::size_t>(T));
    CHECK(s.alpha_bars().size() == static_cast<std::size_t>(T));
    for (int t = 1; t <= T; ++t) {
      CHECK(s.sigma(t) > 0.0);
      CHECK(s.alpha_bar(t) > 0.0);
      CHECK(s.alpha_bar(t) <= 1.0);
      if (t > 1) CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
    }
    CHECK(s.sigma(1) == doctest::Approx(std::sqrt(s.beta(1))));
  }
  NoiseSchedule s = NoiseSchedule::linear(10, 0.01, 0.2);
  // Posterior std for t >= 2.
  const double t3 = (1 - s.alpha_bar(2)) / (1 - s.alpha_bar(3)) * s.beta(3);
  CHECK(s.sigma(3) == doctest::Approx(std::sqrt(t3)).epsilon(1e-14));
  CHECK_THROWS(NoiseSchedule({0.1}, {0.0}));
  CHECK_THROWS(NoiseSchedule({0.1}, {-1.0}));
  CHECK_THROWS(NoiseSchedule({1.5}, {1.0}));
  CHECK_THROWS(NoiseSchedule({0.1, 0.2}, {1.0}));
}

TEST_CASE("prompt embeddings are distinct one-hots") {
  PromptSpace ps{4};
  for (int a = 0; a < 4; ++a) {
    auto e = ps.embedding(a);
    CHECK(e[a] == 1.0);
    for (int b = a + 1; b < 4; ++b) CHECK(e != ps.embedding(b));
  }
  CHECK_THROWS(ps.embedding(4));
}

TEST_CASE("zero-noise path with zero mean gives the zero trajectory") {
  NoiseSchedule s({0.5}, {1.0});
  PolicyNet p = constant_mean(1, 1, 0.0);
  const std::vector<double> noise{0.0, 0.0};
  Trajectory tr = sample_trajectory(p, s, 0, noise);
  REQUIRE(tr.states.size() == 2);
  CHECK(tr.x(1)[0] == 0.0);
  CHECK(tr.x0()[0] == 0.0);
}

TEST_CASE("sampling is seeded") {
  NoiseSchedule s = NoiseSchedule::linear(5);
  PolicyNet p = random_policy(PolicyArch{.hidden = {8}}, 1);
  Rng a(1), b(2), a2(1);
  Trajectory ta = sample_trajectory(p, s, 0, a);
  Trajectory tb = sample_trajectory(p, s, 0, b);
  Trajectory ta2 = sample_trajectory(p, s, 0, a2);
  CHECK(ta != tb);
  CHECK(ta == ta2);
}

TEST_CASE("batched and single sampling agree") {
  NoiseSchedule s = NoiseSchedule::linear(6);
  PolicyNet p = random_policy(PolicyArch{.hidden = {8, 8}}, 2);
  Rng rng(9);
  const std::vector<int> prompts{0, 3, 1};
  const std::size_t per = noise_size(s, 2);
  auto noise = rng.normals(prompts.size() * per);
  SampledBatch batch = sample_batch(p, s, prompts, noise);
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    Trajectory single = sample_trajectory(
        p, s, prompts[i], std::span(noise).subspan(i * per, per));
    CHECK(single == batch.trajectories[i]);
  }
  auto recomputed = trajectory_means(p, s, batch.trajectories);
  CHECK(recomputed == batch.means);
}

TEST_CASE("zero-mean chain: Monte-Carlo mean of x0 is near zero") {
  NoiseSchedule s = NoiseSchedule::linear(4);
  PolicyNet p = constant_mean(2, 1, 0.0);
  const int n = 10000;
  Rng rng(42);
  std::vector<int> prompts(n, 0);
  SampledBatch b = sample_batch(p, s, prompts, rng);
  for (int k = 0; k < 2; ++k) {
    double m = 0, m2 = 0;
    for (const auto& tr : b.trajectories) {
      m += tr.x0()[k];
      m2 += tr.x0()[k] * tr.x0()[k];
    }
    m /= n;
    const double sd = std::sqrt(m2 / n - m * m);
    CHECK(std::abs(m) < 3.0 * sd / 100.0);
    // With mu = 0 the last step is pure noise, x0 ~ N(0, sigma_1^2).
    CHECK(sd == doctest::Approx(s.sigma(1)).epsilon(0.03));
  }
}

TEST_CASE("log-prob closed forms") {
  NoiseSchedule s({0.5}, {1.0});
  PolicyNet p = constant_mean(1, 1, 0.0);
  Trajectory tr{.prompt = 0, .dim = 1, .steps = 1, .states = {0.0, 0.0}};
  CHECK(trajectory_log_prob(p, s, tr) ==
        doctest::Approx(-kLog2Pi).epsilon(1e-14));
  CHECK(trajectory_log_prob(p, s, tr) == doctest::Approx(-1.8379).epsilon(1e-4));

  NoiseSchedule s2({0.5}, {0.7});
  const double base = trajectory_log_prob(p, s2, tr);
  for (double delta : {0.1, -0.5, 2.0}) {
    Trajectory moved = tr;
    moved.states[1] = delta;
    CHECK(trajectory_log_prob(p, s2, moved) - base ==
          doctest::Approx(-delta * delta / (2 * 0.49)).epsilon(1e-12));
  }
}

TEST_CASE("log-prob graph matches the plain path and its gradients check") {
  NoiseSchedule s = NoiseSchedule::linear(4);
  for (auto param : {MeanParameterization::kEpsilon, MeanParameterization::kDirect}) {
    PolicyArch arch{.hidden = {6, 5}, .parameterization = param};
    Rng rng(5);
    PolicyNet p = random_policy(arch, 3);
    std::vector<Trajectory> trajs;
    for (int c = 0; c < 3; ++c) trajs.push_back(sample_trajectory(p, s, c, rng));
    ad::Graph g = build_trajectory_log_prob_graph(p, s, trajs);
    double plain = 0.0;
    for (const auto& tr : trajs) plain += trajectory_log_prob(p, s, tr);
    CHECK(g.forward(p.params()).item() == doctest::Approx(plain).epsilon(1e-12));
    for (int point = 0; point < 10; ++point) {
      PolicyNet q = random_policy(arch, 100 + point);
      auto rep = ad::finite_difference_check(g, q.params());
      CHECK(rep.max_rel_error < 1e-4);
      CHECK(rep.boundary_coordinates.empty());
    }
  }
}

TEST_CASE("stepwise log ratios") {
  NoiseSchedule s = NoiseSchedule::linear(5);
  PolicyArch arch{.hidden = {8}};
  PolicyNet ref = random_policy(arch, 1);
  PolicyNet pol = random_policy(arch, 2);
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    Trajectory tr = sample_trajectory(pol, s, static_cast<int>(i % 4), rng);
    double sum = 0.0;
    for (int t = 1; t <= 5; ++t) {
      CHECK(stepwise_log_ratio(ref, ref, s, tr, t) == 0.0);
      sum += stepwise_log_ratio(pol, ref, s, tr, t);
    }
    const double full =
        trajectory_log_prob(pol, s, tr) - trajectory_log_prob(ref, s, tr);
    CHECK(std::abs(sum - full) < 1e-10);
  }
  CHECK_THROWS(stepwise_log_ratio(pol, ref, s,
                                  sample_trajectory(pol, s, 0, rng), 0));

  NoiseSchedule one({0.5}, {1.0});
  Trajectory tr{.prompt = 0, .dim = 1, .steps = 1, .states = {0.3, 0.0}};
  CHECK(stepwise_log_ratio(constant_mean(1, 1, 0.1), constant_mean(1, 1, 0.0),
                           one, tr, 1) == doctest::Approx(-0.005).epsilon(1e-12));
}

TEST_CASE("log-prob decreases as a state moves away from its mean") {
  NoiseSchedule s = NoiseSchedule::linear(3);
  PolicyArch arch{.hidden = {8}};
  PolicyNet p = random_policy(arch, 4);
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    Trajectory tr = sample_trajectory(p, s, trial % 4, rng);
    const int T = 3;
    const int j = static_cast<int>(rng.index(T));  // transition into x_{T-j-1}
    auto mu = trajectory_means(p, s, std::span(&tr, 1));
    // Move x_{t-1} along (x - mu); only this transition's density changes
    // when it is the final one, so use the last transition.
    const int last = T - 1;
    (void)j;
    Trajectory far = tr;
    for (int k = 0; k < 2; ++k) {
      const double off = tr.states[(last + 1) * 2 + k] - mu[last * 2 + k];
      far.states[(last + 1) * 2 + k] += 0.5 * off + (off >= 0 ? 0.01 : -0.01);
    }
    CHECK(trajectory_log_prob(p, s, far) < trajectory_log_prob(p, s, tr));
  }
}

TEST_CASE("importance-sampled total mass is one") {
  // Proposal: every state coordinate iid N(0, 2^2).
  for (int T : {1, 2}) {
    NoiseSchedule s = NoiseSchedule::linear(T, 0.2, 0.4);
    PolicyArch arch = affine_arch(1, 1);
    PolicyNet p = PolicyNet::zeros(arch);
    p.mutable_params().at("l0.w").values() = {0.6, 0.1, 0.3};
    p.mutable_params().at("l0.b").values() = {0.2};
    Rng rng(77);
    const int n = 100000;
    const double q_sd = 2.0;
    double total = 0.0;
    Trajectory tr{.prompt = 0, .dim = 1, .steps = T,
                  .states = std::vector<double>(T + 1)};
    for (int i = 0; i < n; ++i) {
      double log_q = 0.0;
      for (double& x : tr.states) {
        x = q_sd * rng.normal();
        log_q += -0.5 * kLog2Pi - std::log(q_sd) - 0.5 * x * x / (q_sd * q_sd);
      }
      total += std::exp(trajectory_log_prob(p, s, tr) - log_q);
    }
    CHECK(total / n == doctest::Approx(1.0).epsilon(0.05));
  }
}

TEST_CASE("untrained zero network gives the prior-driven chain") {
  // eps_hat = 0: x_{t-1} = x_t / sqrt(alpha_t) + sigma_t z, so the variance
  // follows v_{t-1} = v_t / alpha_t + sigma_t^2 from v_T = 1.
  NoiseSchedule s = NoiseSchedule::linear(6);
  PolicyNet p = PolicyNet::zeros(PolicyArch{.hidden = {4}});
  double v = 1.0;
  for (int t = 6; t >= 1; --t) v = v / s.alpha(t) + s.sigma(t) * s.sigma(t);
  Rng rng(5);
  const int n = 20000;
  std::vector<int> prompts(n, 1);
  SampledBatch b = sample_batch(p, s, prompts, rng);
  double m2 = 0.0;
  for (const auto& tr : b.trajectories) m2 += tr.x0()[0] * tr.x0()[0];
  // Relative sd of a chi-square mean at n = 2e4 is 1%.
  CHECK(m2 / n == doctest::Approx(v).epsilon(0.04));
}

TEST_CASE("pretraining on a single point concentrates samples") {
  NoiseSchedule s = NoiseSchedule::linear(10);
  std::vector<DataPoint> data;
  for (int c = 0; c < 2; ++c) data.push_back({{0.0, 0.0}, c});
  PolicyArch arch{.prompt_count = 2, .hidden = {32, 32}};
  auto res = pretrain_reference(data, s, arch,
                                {.steps = 800, .learning_rate = 3e-3,
                                 .batch_size = 64, .seed = 1});
  CHECK(res.losses.size() == 800);
  Rng rng(2);
  std::vector<int> prompts(500, 1);
  SampledBatch b = sample_batch(res.policy, s, prompts, rng);
  double mx = 0, my = 0;
  for (const auto& tr : b.trajectories) {
    mx += tr.x0()[0];
    my += tr.x0()[1];
  }
  CHECK(std::hypot(mx / 500, my / 500) < 0.2);
  CHECK_THROWS(pretrain_reference({}, s, arch, {}));
}

TEST_CASE("pretraining recovers two modes per prompt") {
  NoiseSchedule s = NoiseSchedule::linear(10);
  ToyTaskConfig task;
  auto mixtures = make_toy_mixtures(task);
  Rng drng(3);
  auto data = sample_toy_data(mixtures, 512, drng);
  auto res = pretrain_reference(data, s, PolicyArch{},
                                {.steps = 1500, .batch_size = 128, .seed = 4});
  Rng rng(6);
  for (int c = 0; c < task.prompts; ++c) {
    std::vector<int> prompts(1000, c);
    SampledBatch b = sample_batch(res.policy, s, prompts, rng);
    // Assign each sample to its nearest mode; both modes must hold a
    // substantial share and the midpoint between them must be sparse.
    const auto& m0 = mixtures[c].components[0].mean;
    const auto& m1 = mixtures[c].components[1].mean;
    int n0 = 0, n1 = 0, mid = 0;
    for (const auto& tr : b.trajectories) {
      const double x = tr.x0()[0], y = tr.x0()[1];
      const double d0 = std::hypot(x - m0[0], y - m0[1]);
      const double d1 = std::hypot(x - m1[0], y - m1[1]);
      if (d0 < 0.4) ++n0;
      if (d1 < 0.4) ++n1;
      if (std::hypot(x - (m0[0] + m1[0]) / 2, y - (m0[1] + m1[1]) / 2) < 0.25) ++mid;
    }
    MESSAGE("prompt " << c << ": " << n0 << " / " << n1 << " / mid " << mid);
    CHECK(n0 > 250);
    CHECK(n1 > 250);
    CHECK(mid < std::min(n0, n1) / 3);
  }
}

TEST_CASE("checkpoint round trip is exact") {
  NoiseSchedule s = NoiseSchedule::linear(7);
  PolicyNet p = random_policy(PolicyArch{.hidden = {5, 3}}, 9);
  Checkpoint ck{p, s, 1234567890123ULL, {{"note", "toy reference"}}};
  auto path = (std::filesystem::temp_directory_path() / "prdp_ck_test.txt").string();
  save_checkpoint(path, ck);
  Checkpoint back = load_checkpoint(path);
  CHECK(back.seed == ck.seed);
  CHECK(back.policy.arch() == p.arch());
  CHECK(back.policy.params() == p.params());
  CHECK(back.schedule.betas() == s.betas());
  CHECK(back.schedule.sigmas() == s.sigmas());
  CHECK(back.metadata.at("note") == "toy reference");
  std::remove(path.c_str());
  CHECK_THROWS(load_checkpoint(path));
}

TEST_CASE("shape validation") {
  NoiseSchedule s = NoiseSchedule::linear(3);
  PolicyNet p = PolicyNet::zeros(PolicyArch{.hidden = {4}});
  Trajectory bad{.prompt = 0, .dim = 2, .steps = 2, .states = std::vector<double>(6)};
  CHECK_THROWS_AS(trajectory_log_prob(p, s, bad), ShapeError);
  Trajectory badp{.prompt = 9, .dim = 2, .steps = 3, .states = std::vector<double>(8)};
  CHECK_THROWS(trajectory_log_prob(p, s, badp));
  ad::Bindings wrong = p.params();
  wrong.at("l0.b") = ad::Tensor::zeros({5});
  CHECK_THROWS_AS(PolicyNet(p.arch(), wrong), ShapeError);
}

TEST_CASE("diverged policy raises a non-finite error while sampling") {
  NoiseSchedule s = NoiseSchedule::linear(3);
  PolicyNet p = constant_mean(2, 1, 1e308);
  p.mutable_params().at("l0.w").values()[0] = 1e308;
  Rng rng(1);
  CHECK_THROWS_AS(sample_trajectory(p, s, 0, rng), NonFiniteError);
}
