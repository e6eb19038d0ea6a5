// Copyright 2026 The PRDP Lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Training loop, run configuration, evaluation, metrics and plots.

#ifndef PRDP_HARNESS_H_
#define PRDP_HARNESS_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "prdp/baselines.h"
#include "prdp/diffusion.h"
#include "prdp/rewards.h"

namespace prdp::harness {

using diffusion::Checkpoint;
using diffusion::NoiseSchedule;
using diffusion::PolicyNet;

enum class Algorithm { kPrdp, kPrdpOffline, kDdpo };

const char* algorithm_name(Algorithm a);
Algorithm parse_algorithm(const std::string& name);

// Defaults are the toy scale. The large-model values are E=100, K=10, N=32,
// B=16, beta=3e-5, eps=1e-6, T=50, lr=1e-5.
struct TrainConfig {
  int epochs = 100;
  int updates_per_epoch = 10;
  int prompts_per_epoch = 4;
  int images_per_prompt = 8;
  double beta = 0.1;
  double clip_epsilon = 0.05;
  bool clip = true;
  bool trajectory_clip = false;
  int ddpm_steps = 10;
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  double grad_clip_norm = 1.0;
  std::uint64_t seed = 0;
  Algorithm algorithm = Algorithm::kPrdp;

  std::string reward = "target-distance";
  double reward_scale = 1.0;
  int target_mode = 0;
  std::vector<double> reward_field = {1.0, 0.0};
  std::vector<double> reward_offsets;  // per prompt; empty = none

  baselines::NormalizerMode normalizer = baselines::NormalizerMode::kPerPrompt;
  double ddpo_clip_range = 1e-4;
  // Prompts are drawn from the first prompt_pool ids; 0 = all of them.
  int prompt_pool = 0;

  // Per prompt, every epoch, over the prompts the run trains on.
  int eval_samples = 64;
  std::uint64_t eval_seed = 1234;
  bool record_wall_time = false;

  // Reference checkpoint; empty means pretrain the toy model in process.
  std::string reference;
  int prompts = 4;
  std::vector<std::size_t> hidden = {64, 64};
  int pretrain_steps = 4000;
  int pretrain_batch = 256;
  double pretrain_lr = 2e-3;
  std::uint64_t pretrain_seed = 7;
  int data_per_prompt = 2000;
  double toy_radius = 1.5;
  double toy_spread = 0.75;
  double toy_mode_std = 0.2;

  // Throws ConfigError.
  void validate() const;
};

// Assigns one key. Throws ConfigError on unknown keys or bad values.
void set_value(TrainConfig& config, const std::string& key,
               const std::string& value);
std::string get_value(const TrainConfig& config, const std::string& key);
std::vector<std::string> config_keys();

// `key = value` lines, `#` starts a comment.
TrainConfig parse_config(const std::string& text);
TrainConfig load_config(const std::string& path);
// "key=value"
void apply_override(TrainConfig& config, const std::string& assignment);
std::string config_to_text(const TrainConfig& config);

diffusion::ToyTaskConfig toy_task(const TrainConfig& config);
rewards::RewardSpec reward_spec(const TrainConfig& config);

// Pretrains the toy reference described by the config.
Checkpoint pretrain_toy_reference(const TrainConfig& config);
// Loads config.reference, or pretrains when it is empty.
Checkpoint load_reference(const TrainConfig& config);

struct EpochStats {
  int epoch = 0;
  double reward_mean = 0.0;
  double reward_stderr = 0.0;
  double loss = 0.0;  // mean over the epoch's updates
  double kl_estimate = 0.0;
  double max_abs_step_ratio = 0.0;
  double wall_ms = 0.0;

  bool operator==(const EpochStats&) const = default;
};

struct UpdateRecord {
  int epoch = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
  double max_abs_step_ratio = 0.0;
  double max_clipped_deviation = 0.0;
  double clipped_branch_fraction = 0.0;
};

struct EvalResult {
  std::vector<double> prompt_reward_mean;
  double reward_mean = 0.0;
  double reward_stderr = 0.0;
  std::vector<std::vector<double>> prompt_x0_mean;
  std::vector<double> prompt_x0_sigma;  // sqrt(trace(cov) / d)
  double kl_mean = 0.0;
  double kl_stderr = 0.0;
  std::vector<double> rewards;  // every sample, prompt-major
};

// Samples `per_prompt` trajectories for each of prompts 0..prompts-1 from
// noise fixed by `seed`, so two policies evaluated with one seed see
// identical draws. Rewards are computed directly and never counted as
// training queries.
EvalResult evaluate(const PolicyNet& policy, const PolicyNet& ref,
                    const NoiseSchedule& schedule,
                    const rewards::RewardSpec& spec, int prompts,
                    int per_prompt, std::uint64_t seed);

struct KlEstimate {
  double mean = 0.0;
  double stderr_ = 0.0;
};

// Mean implicit reward of n fresh trajectories per prompt.
KlEstimate kl_estimate(const PolicyNet& policy, const PolicyNet& ref,
                       const NoiseSchedule& schedule, int prompts, int n,
                       std::uint64_t seed);

enum class RunStatus { kCompleted, kDiverged };

struct RunResult {
  PolicyNet policy;
  std::vector<EpochStats> stats;
  std::vector<UpdateRecord> updates;
  EvalResult reference_eval;
  std::uint64_t reward_queries = 0;
  std::uint64_t gradient_updates = 0;
  RunStatus status = RunStatus::kCompleted;
  std::string message;
};

RunResult run_training(const TrainConfig& config, const Checkpoint& reference);
RunResult run_training(const TrainConfig& config);

// Finite losses throughout and mean reward over the final quarter of epochs
// at or above the reference's.
bool is_stable(const RunResult& run);

struct SweepRun {
  std::string value;
  std::optional<RunResult> result;
  std::string error;
};

struct SweepResult {
  std::string axis;
  std::vector<SweepRun> runs;
};

SweepResult sweep(const TrainConfig& base, const Checkpoint& reference,
                  const std::string& axis,
                  const std::vector<std::string>& values);

void emit_metrics(const std::vector<EpochStats>& stats, const std::string& path);
std::vector<EpochStats> parse_metrics(const std::string& text);
std::vector<EpochStats> load_metrics(const std::string& path);

void emit_sweep_table(const SweepResult& sweep, const std::string& path);

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

std::string render_svg(const std::string& title, const std::string& x_label,
                       const std::string& y_label,
                       const std::vector<Series>& series);
// reward.svg, loss.svg, kl.svg under dir.
void emit_plots(const std::vector<EpochStats>& stats, const std::string& dir);
// One series per sweep value; reward.svg and kl.svg under dir.
void emit_sweep_plots(const SweepResult& sweep, const std::string& dir);

struct VerifyOptions {
  std::uint64_t seed = 2026;
  int kl_instances = 1000;
  int optimum_instances = 100;
  int optimum_policies = 1000;
};

struct VerifyCheck {
  std::string name;
  bool pass = false;
  double value = 0.0;      // the measured quantity
  double threshold = 0.0;  // what it was compared against
  std::string detail;
};

struct VerifyReport {
  std::vector<VerifyCheck> checks;
  bool pass() const;
};

// Tabular suite: KL lower bound, optimality of the tilted distribution,
// convergence of exact-gradient training, and the partition function.
VerifyReport run_verification(const VerifyOptions& options);

}  // namespace prdp::harness

#endif  // PRDP_HARNESS_H_
