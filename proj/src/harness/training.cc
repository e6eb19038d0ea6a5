// Copyright 2026 The PRDP Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>

#include "prdp/error.h"
#include "prdp/harness.h"
#include "prdp/optim.h"

namespace prdp::harness {

namespace {

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double stderr_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  const double n = static_cast<double>(v.size());
  return std::sqrt(ss / (n - 1) / n);
}

bool all_finite(const std::map<std::string, ad::Tensor>& grads) {
  for (const auto& [name, g] : grads) {
    if (!g.all_finite()) return false;
  }
  return true;
}

struct Samples {
  std::vector<int> prompts;
  diffusion::SampledBatch batch;
  std::vector<double> rhat;
};

Samples draw_fixed(const PolicyNet& policy, const PolicyNet& ref,
                   const NoiseSchedule& schedule, int prompts, int per_prompt,
                   std::uint64_t seed) {
  Samples s;
  for (int c = 0; c < prompts; ++c) {
    s.prompts.insert(s.prompts.end(), per_prompt, c);
  }
  const std::size_t d = policy.arch().state_dim;
  Rng rng(seed);
  const auto noise = rng.normals(s.prompts.size() * diffusion::noise_size(schedule, d));
  s.batch = diffusion::sample_batch(policy, schedule, s.prompts, noise);
  const auto ref_means = diffusion::trajectory_means(ref, schedule, s.batch.trajectories);
  const std::size_t per = static_cast<std::size_t>(schedule.steps()) * d;
  for (std::size_t i = 0; i < s.prompts.size(); ++i) {
    const auto ratios = diffusion::step_log_ratios(
        schedule, s.batch.trajectories[i],
        std::span(s.batch.means).subspan(i * per, per),
        std::span(ref_means).subspan(i * per, per));
    double r = 0.0;
    for (double x : ratios) r += x;
    s.rhat.push_back(r);
  }
  return s;
}

}  // namespace

diffusion::ToyTaskConfig toy_task(const TrainConfig& config) {
  diffusion::ToyTaskConfig t;
  t.prompts = config.prompts;
  t.radius = config.toy_radius;
  t.spread = config.toy_spread;
  t.mode_std = config.toy_mode_std;
  return t;
}

rewards::RewardSpec reward_spec(const TrainConfig& config) {
  const auto mixtures = diffusion::make_toy_mixtures(toy_task(config));
  rewards::RewardSpec spec;
  if (config.reward == "scalar-field") {
    spec = rewards::RewardSpec::scalar_field(config.reward_field);
  } else {
    if (config.target_mode >= static_cast<int>(mixtures.front().components.size())) {
      throw ConfigError("target_mode exceeds the number of modes");
    }
    if (config.reward == "target-distance") {
      std::vector<std::vector<double>> targets;
      for (const auto& m : mixtures) targets.push_back(m.components[config.target_mode].mean);
      spec = rewards::RewardSpec::target_distance(std::move(targets));
    } else if (config.reward == "density") {
      std::vector<GaussianMixture> single;
      for (const auto& m : mixtures) {
        single.push_back(GaussianMixture{{m.components[config.target_mode]}});
      }
      spec = rewards::RewardSpec::density(std::move(single));
    } else {
      throw ConfigError("unknown reward " + config.reward);
    }
  }
  spec.scale = config.reward_scale;
  spec.prompt_offsets = config.reward_offsets;
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("reward: ") + e.what());
  }
  return spec;
}

Checkpoint pretrain_toy_reference(const TrainConfig& config) {
  config.validate();
  Rng rng(config.pretrain_seed);
  const auto data = diffusion::sample_toy_data(
      diffusion::make_toy_mixtures(toy_task(config)), config.data_per_prompt, rng);
  auto schedule = NoiseSchedule::linear(config.ddpm_steps);
  diffusion::PolicyArch arch;
  arch.prompt_count = static_cast<std::size_t>(config.prompts);
  arch.hidden = config.hidden;
  diffusion::PretrainConfig pc;
  pc.steps = config.pretrain_steps;
  pc.batch_size = config.pretrain_batch;
  pc.learning_rate = config.pretrain_lr;
  pc.seed = config.pretrain_seed;
  auto res = diffusion::pretrain_reference(data, schedule, arch, pc);
  Checkpoint ck{std::move(res.policy), std::move(schedule), config.pretrain_seed, {}};
  ck.metadata["final_loss"] = std::to_string(res.losses.back());
  ck.metadata["data_per_prompt"] = std::to_string(config.data_per_prompt);
  return ck;
}

Checkpoint load_reference(const TrainConfig& config) {
  if (config.reference.empty()) return pretrain_toy_reference(config);
  if (!std::filesystem::exists(config.reference)) {
    throw RunError("reference checkpoint not found: " + config.reference);
  }
  return diffusion::load_checkpoint(config.reference);
}

EvalResult evaluate(const PolicyNet& policy, const PolicyNet& ref,
                    const NoiseSchedule& schedule,
                    const rewards::RewardSpec& spec, int prompts,
                    int per_prompt, std::uint64_t seed) {
  if (per_prompt < 1) throw std::invalid_argument("evaluate: per_prompt must be >= 1");
  const int C = prompts;
  if (C < 1 || C > static_cast<int>(policy.arch().prompt_count)) {
    throw std::invalid_argument("evaluate: prompt count out of range");
  }
  const std::size_t d = policy.arch().state_dim;
  const Samples s = draw_fixed(policy, ref, schedule, C, per_prompt, seed);
  EvalResult out;
  out.prompt_reward_mean.assign(C, 0.0);
  out.prompt_x0_mean.assign(C, std::vector<double>(d, 0.0));
  out.prompt_x0_sigma.assign(C, 0.0);
  for (std::size_t i = 0; i < s.prompts.size(); ++i) {
    const auto& tr = s.batch.trajectories[i];
    const double r = rewards::evaluate_reward(spec, tr.x0(), tr.prompt);
    out.rewards.push_back(r);
    out.prompt_reward_mean[tr.prompt] += r / per_prompt;
    for (std::size_t k = 0; k < d; ++k) {
      out.prompt_x0_mean[tr.prompt][k] += tr.x0()[k] / per_prompt;
    }
  }
  for (std::size_t i = 0; i < s.prompts.size(); ++i) {
    const auto& tr = s.batch.trajectories[i];
    for (std::size_t k = 0; k < d; ++k) {
      const double dev = tr.x0()[k] - out.prompt_x0_mean[tr.prompt][k];
      out.prompt_x0_sigma[tr.prompt] += dev * dev;
    }
  }
  for (double& v : out.prompt_x0_sigma) {
    v = std::sqrt(v / std::max(per_prompt - 1, 1) / static_cast<double>(d));
  }
  out.reward_mean = mean_of(out.rewards);
  out.reward_stderr = stderr_of(out.rewards);
  out.kl_mean = mean_of(s.rhat);
  out.kl_stderr = stderr_of(s.rhat);
  return out;
}

KlEstimate kl_estimate(const PolicyNet& policy, const PolicyNet& ref,
                       const NoiseSchedule& schedule, int prompts, int n,
                       std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("kl_estimate: n must be >= 1");
  const Samples s = draw_fixed(policy, ref, schedule, prompts, n, seed);
  return {mean_of(s.rhat), stderr_of(s.rhat)};
}

RunResult run_training(const TrainConfig& config) {
  return run_training(config, load_reference(config));
}

RunResult run_training(const TrainConfig& config, const Checkpoint& reference) {
  using Clock = std::chrono::steady_clock;
  config.validate();
  const PolicyNet& ref = reference.policy;
  const NoiseSchedule& schedule = reference.schedule;
  if (ref.arch().prompt_count != static_cast<std::size_t>(config.prompts)) {
    throw ConfigError("reference has " + std::to_string(ref.arch().prompt_count) +
                      " prompts, config says " + std::to_string(config.prompts));
  }
  if (schedule.steps() != config.ddpm_steps) {
    throw ConfigError("reference has " + std::to_string(schedule.steps()) +
                      " denoising steps, config says " +
                      std::to_string(config.ddpm_steps));
  }
  const auto spec = reward_spec(config);
  rewards::RewardOracle oracle(spec);
  const int N = config.prompts_per_epoch;
  const int B = config.images_per_prompt;
  const int pool = config.prompt_pool > 0 ? config.prompt_pool : config.prompts;
  const bool online = config.algorithm != Algorithm::kPrdpOffline;

  std::optional<rdp::ClipConfig> clip;
  if (config.clip && config.algorithm == Algorithm::kPrdp) {
    clip = rdp::ClipConfig{config.clip_epsilon, config.trajectory_clip, std::nullopt};
  }

  RunResult result{ref, {}, {}, {}, 0, 0, RunStatus::kCompleted, ""};
  result.reference_eval =
      evaluate(ref, ref, schedule, spec, pool, config.eval_samples, config.eval_seed);

  PolicyNet& policy = result.policy;
  AdamW opt(AdamWConfig{.learning_rate = config.learning_rate,
                        .weight_decay = config.weight_decay,
                        .grad_clip_norm = config.grad_clip_norm});
  Rng rng(config.seed);
  baselines::RewardNormalizer normalizer(config.normalizer);

  auto draw_prompts = [&](std::size_t groups) {
    std::vector<int> out;
    for (std::size_t g = 0; g < groups; ++g) {
      out.insert(out.end(), B, static_cast<int>(rng.index(pool)));
    }
    return out;
  };

  std::optional<baselines::OfflineDataset> dataset;
  if (!online) {
    const auto prompts = draw_prompts(static_cast<std::size_t>(config.epochs) * N);
    dataset = baselines::build_offline_dataset(ref, schedule, prompts, oracle, rng);
  }

  auto diverge = [&](const std::string& why) {
    result.status = RunStatus::kDiverged;
    result.message = why;
  };

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = Clock::now();
    const PolicyNet old = policy;
    rdp::PairBatch batch;
    baselines::Rollouts rollouts;
    try {
      if (online) {
        const auto prompts = draw_prompts(N);
        auto sampled = diffusion::sample_batch(old, schedule, prompts, rng);
        std::vector<double> rewards;
        for (const auto& tr : sampled.trajectories) {
          rewards.push_back(oracle.query(tr.x0(), tr.prompt));
        }
        batch = rdp::make_pair_batch(old, ref, schedule, sampled.trajectories,
                                     rewards, B, sampled.means);
        if (config.algorithm == Algorithm::kDdpo) {
          rollouts.advantages = normalizer.normalize_batch(prompts, rewards);
          rollouts.trajectories = std::move(sampled.trajectories);
          rollouts.old_means = std::move(sampled.means);
        }
      } else {
        batch = baselines::draw_offline_batch(*dataset, ref, schedule, N, B, rng);
      }
    } catch (const NonFiniteError& e) {
      diverge(std::string("epoch ") + std::to_string(epoch) + ": " + e.what());
      break;
    }

    EpochStats st;
    st.epoch = epoch;
    std::vector<double> losses;
    for (int k = 0; k < config.updates_per_epoch && result.status == RunStatus::kCompleted;
         ++k) {
      try {
        const ad::Graph graph =
            config.algorithm == Algorithm::kDdpo
                ? baselines::build_ddpo_loss_graph(policy, schedule, rollouts,
                                                   config.ddpo_clip_range)
                : rdp::build_batch_loss_graph(policy, schedule, batch, config.beta, clip);
        const auto diag = rdp::diagnose(policy, schedule, batch, config.beta, clip);
        auto gr = graph.backward(policy.params());
        const double loss = gr.output.item();
        if (!std::isfinite(loss) || !all_finite(gr.grads)) {
          diverge("non-finite loss at epoch " + std::to_string(epoch));
          break;
        }
        const double norm = opt.step(policy.mutable_params(), std::move(gr.grads));
        ++result.gradient_updates;
        losses.push_back(loss);
        st.max_abs_step_ratio = std::max(st.max_abs_step_ratio, diag.max_abs_step_ratio);
        result.updates.push_back({epoch, loss, norm, diag.max_abs_step_ratio,
                                  diag.max_clipped_deviation,
                                  diag.clipped_branch_fraction});
      } catch (const NonFiniteError& e) {
        diverge(std::string("epoch ") + std::to_string(epoch) + ": " + e.what());
      }
    }
    if (result.status != RunStatus::kCompleted) break;

    try {
      const auto after = rdp::diagnose(policy, schedule, batch, config.beta, clip);
      st.max_abs_step_ratio = std::max(st.max_abs_step_ratio, after.max_abs_step_ratio);
      const auto ev = evaluate(policy, ref, schedule, spec, pool, config.eval_samples,
                               config.eval_seed);
      st.reward_mean = ev.reward_mean;
      st.reward_stderr = ev.reward_stderr;
      st.kl_estimate = ev.kl_mean;
    } catch (const NonFiniteError& e) {
      diverge(std::string("epoch ") + std::to_string(epoch) + ": " + e.what());
      break;
    }
    st.loss = mean_of(losses);
    if (config.record_wall_time) {
      st.wall_ms =
          std::chrono::duration<double, std::milli>(Clock::now() - start).count();
    }
    result.stats.push_back(st);
  }
  result.reward_queries = oracle.queries();
  return result;
}

bool is_stable(const RunResult& run) {
  if (run.status != RunStatus::kCompleted || run.stats.empty()) return false;
  for (const auto& u : run.updates) {
    if (!std::isfinite(u.loss)) return false;
  }
  const std::size_t n = run.stats.size();
  const std::size_t q = std::max<std::size_t>(1, n / 4);
  double s = 0.0;
  for (std::size_t i = n - q; i < n; ++i) s += run.stats[i].reward_mean;
  return s / static_cast<double>(q) >= run.reference_eval.reward_mean;
}

SweepResult sweep(const TrainConfig& base, const Checkpoint& reference,
                  const std::string& axis,
                  const std::vector<std::string>& values) {
  get_value(base, axis);  // rejects unknown axes up front
  SweepResult out;
  out.axis = axis;
  for (const auto& v : values) {
    SweepRun run;
    run.value = v;
    try {
      TrainConfig cfg = base;
      set_value(cfg, axis, v);
      run.result = run_training(cfg, reference);
    } catch (const std::exception& e) {
      run.error = e.what();
    }
    out.runs.push_back(std::move(run));
  }
  return out;
}

}  // namespace prdp::harness
