// Copyright 2026 The PRDP Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "prdp/error.h"
#include "prdp/harness.h"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace prdp;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "run config (key = value lines)");
  cmd->add_option("--seed", c.seed, "seed override");
  cmd->add_option("--out", c.out, "output directory");
  cmd->add_option("--override", c.overrides, "key=value, repeatable");
}

harness::TrainConfig resolve(const Common& c) {
  harness::TrainConfig cfg =
      c.config_path.empty() ? harness::TrainConfig{} : harness::load_config(c.config_path);
  for (const auto& o : c.overrides) harness::apply_override(cfg, o);
  if (c.seed) cfg.seed = *c.seed;
  cfg.validate();
  return cfg;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream os(p);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  os << text;
}

json eval_json(const harness::EvalResult& e) {
  return {{"reward_mean", e.reward_mean},
          {"reward_stderr", e.reward_stderr},
          {"prompt_reward_mean", e.prompt_reward_mean},
          {"prompt_x0_mean", e.prompt_x0_mean},
          {"prompt_x0_sigma", e.prompt_x0_sigma},
          {"kl_estimate", e.kl_mean},
          {"kl_stderr", e.kl_stderr}};
}

json run_json(const harness::TrainConfig& cfg, const harness::RunResult& r) {
  json j{{"algorithm", harness::algorithm_name(cfg.algorithm)},
         {"status", r.status == harness::RunStatus::kCompleted ? "completed" : "diverged"},
         {"message", r.message},
         {"epochs_completed", r.stats.size()},
         {"reward_queries", r.reward_queries},
         {"gradient_updates", r.gradient_updates},
         {"stable", harness::is_stable(r)},
         {"reference_reward_mean", r.reference_eval.reward_mean}};
  if (!r.stats.empty()) {
    j["final_reward_mean"] = r.stats.back().reward_mean;
    j["final_kl_estimate"] = r.stats.back().kl_estimate;
  }
  return j;
}

int cmd_pretrain(const Common& c) {
  auto cfg = resolve(c);
  fs::create_directories(c.out);
  auto ck = harness::pretrain_toy_reference(cfg);
  const auto path = fs::path(c.out) / "reference.ckpt";
  diffusion::save_checkpoint(path.string(), ck);
  std::cout << "wrote " << path.string() << " (final loss "
            << ck.metadata["final_loss"] << ")\n";
  return 0;
}

int cmd_train(const Common& c) {
  auto cfg = resolve(c);
  const auto ref = harness::load_reference(cfg);
  fs::create_directories(c.out);
  write_text(fs::path(c.out) / "config.txt", harness::config_to_text(cfg));
  const auto r = harness::run_training(cfg, ref);
  if (!r.stats.empty()) {
    harness::emit_metrics(r.stats, (fs::path(c.out) / "metrics.csv").string());
    harness::emit_plots(r.stats, (fs::path(c.out) / "plots").string());
  }
  diffusion::save_checkpoint((fs::path(c.out) / "policy.ckpt").string(),
                             {r.policy, ref.schedule, cfg.seed, {{"algorithm",
                                 harness::algorithm_name(cfg.algorithm)}}});
  write_text(fs::path(c.out) / "run.json", run_json(cfg, r).dump(2) + "\n");
  std::cout << run_json(cfg, r).dump(2) << "\n";
  if (r.status != harness::RunStatus::kCompleted) {
    std::cerr << "run diverged: " << r.message << "\n";
    return 1;
  }
  return 0;
}

int cmd_eval(const Common& c, const std::string& policy_path, int samples) {
  auto cfg = resolve(c);
  const auto ref = harness::load_reference(cfg);
  const auto spec = harness::reward_spec(cfg);
  const std::uint64_t seed = c.seed.value_or(cfg.eval_seed);
  const int pool = cfg.prompt_pool > 0 ? cfg.prompt_pool : cfg.prompts;
  json j{{"samples_per_prompt", samples}, {"seed", seed}};
  j["reference"] = eval_json(
      harness::evaluate(ref.policy, ref.policy, ref.schedule, spec, pool, samples, seed));
  if (!policy_path.empty()) {
    const auto ck = diffusion::load_checkpoint(policy_path);
    j["policy"] = eval_json(
        harness::evaluate(ck.policy, ref.policy, ref.schedule, spec, pool, samples, seed));
  }
  fs::create_directories(c.out);
  write_text(fs::path(c.out) / "eval.json", j.dump(2) + "\n");
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_verify(const Common& c) {
  harness::VerifyOptions opt;
  if (c.seed) opt.seed = *c.seed;
  const auto rep = harness::run_verification(opt);
  json checks = json::array();
  for (const auto& ch : rep.checks) {
    checks.push_back({{"name", ch.name},
                      {"pass", ch.pass},
                      {"value", ch.value},
                      {"threshold", ch.threshold},
                      {"detail", ch.detail}});
  }
  json j{{"seed", opt.seed}, {"pass", rep.pass()}, {"checks", checks}};
  fs::create_directories(c.out);
  write_text(fs::path(c.out) / "verify.json", j.dump(2) + "\n");
  std::cout << j.dump(2) << "\n";
  return rep.pass() ? 0 : 1;
}

int cmd_sweep(const Common& c, const std::string& axis,
              const std::vector<std::string>& values) {
  auto cfg = resolve(c);
  const auto ref = harness::load_reference(cfg);
  const auto s = harness::sweep(cfg, ref, axis, values);
  fs::create_directories(c.out);
  harness::emit_sweep_table(s, (fs::path(c.out) / "sweep.csv").string());
  harness::emit_sweep_plots(s, (fs::path(c.out) / "plots").string());
  bool ok = true;
  for (const auto& run : s.runs) {
    const fs::path dir = fs::path(c.out) / (axis + "=" + run.value);
    if (run.result && !run.result->stats.empty()) {
      fs::create_directories(dir);
      harness::emit_metrics(run.result->stats, (dir / "metrics.csv").string());
    }
    if (!run.result || run.result->status != harness::RunStatus::kCompleted) ok = false;
  }
  std::ifstream table(fs::path(c.out) / "sweep.csv");
  std::cout << table.rdbuf();
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Proximal reward difference prediction on toy diffusion models"};
  app.require_subcommand(1);

  Common pre, train, eval, verify, sw;
  add_common(app.add_subcommand("pretrain", "pretrain the toy reference model"), pre);
  add_common(app.add_subcommand("train", "run a training config"), train);
  auto* eval_cmd = app.add_subcommand("eval", "paired evaluation against the reference");
  add_common(eval_cmd, eval);
  std::string policy_path;
  int samples = 256;
  eval_cmd->add_option("--policy", policy_path, "trained policy checkpoint");
  eval_cmd->add_option("--samples", samples, "samples per prompt")
      ->check(CLI::PositiveNumber);
  add_common(app.add_subcommand("verify", "tabular oracle checks"), verify);
  auto* sweep_cmd = app.add_subcommand("sweep", "sweep one config key");
  add_common(sweep_cmd, sw);
  std::string axis;
  std::vector<std::string> values;
  sweep_cmd->add_option("--axis", axis, "config key to vary")->required();
  sweep_cmd->add_option("--values", values, "values")->required()->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (app.got_subcommand("pretrain")) return cmd_pretrain(pre);
    if (app.got_subcommand("train")) return cmd_train(train);
    if (app.got_subcommand("eval")) return cmd_eval(eval, policy_path, samples);
    if (app.got_subcommand("verify")) return cmd_verify(verify);
    if (app.got_subcommand("sweep")) return cmd_sweep(sw, axis, values);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
