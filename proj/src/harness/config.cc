// Copyright 2026 The PRDP Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "prdp/error.h"
#include "prdp/harness.h"

namespace prdp::harness {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
  throw ConfigError("bad value for " + key + ": '" + value + "'");
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out)) {
    bad_value(key, v);
  }
  return out;
}

template <typename Int>
Int to_int(const std::string& key, const std::string& v) {
  Int out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v);
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "on" || v == "1") return true;
  if (v == "false" || v == "off" || v == "0") return false;
  bad_value(key, v);
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct Field {
  const char* name;
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

template <typename T>
Field int_field(const char* name, T TrainConfig::*m) {
  return {name,
          [=](TrainConfig& c, const std::string& v) { c.*m = to_int<T>(name, v); },
          [=](const TrainConfig& c) { return std::to_string(c.*m); }};
}

Field real_field(const char* name, double TrainConfig::*m) {
  return {name,
          [=](TrainConfig& c, const std::string& v) { c.*m = to_double(name, v); },
          [=](const TrainConfig& c) { return fmt(c.*m); }};
}

Field bool_field(const char* name, bool TrainConfig::*m) {
  return {name,
          [=](TrainConfig& c, const std::string& v) { c.*m = to_bool(name, v); },
          [=](const TrainConfig& c) { return std::string(c.*m ? "true" : "false"); }};
}

Field string_field(const char* name, std::string TrainConfig::*m) {
  return {name, [=](TrainConfig& c, const std::string& v) { c.*m = v; },
          [=](const TrainConfig& c) { return c.*m; }};
}

Field real_list_field(const char* name, std::vector<double> TrainConfig::*m) {
  return {name,
          [=](TrainConfig& c, const std::string& v) {
            std::vector<double> out;
            for (const auto& item : split_list(v)) out.push_back(to_double(name, item));
            c.*m = std::move(out);
          },
          [=](const TrainConfig& c) {
            std::string s;
            for (double x : c.*m) s += (s.empty() ? "" : ",") + fmt(x);
            return s;
          }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      int_field("epochs", &TrainConfig::epochs),
      int_field("updates_per_epoch", &TrainConfig::updates_per_epoch),
      int_field("prompts_per_epoch", &TrainConfig::prompts_per_epoch),
      int_field("images_per_prompt", &TrainConfig::images_per_prompt),
      real_field("beta", &TrainConfig::beta),
      real_field("clip_epsilon", &TrainConfig::clip_epsilon),
      bool_field("clip", &TrainConfig::clip),
      bool_field("trajectory_clip", &TrainConfig::trajectory_clip),
      int_field("ddpm_steps", &TrainConfig::ddpm_steps),
      real_field("learning_rate", &TrainConfig::learning_rate),
      real_field("weight_decay", &TrainConfig::weight_decay),
      real_field("grad_clip_norm", &TrainConfig::grad_clip_norm),
      int_field("seed", &TrainConfig::seed),
      {"algorithm",
       [](TrainConfig& c, const std::string& v) {
         try {
           c.algorithm = parse_algorithm(v);
         } catch (const std::invalid_argument&) {
           bad_value("algorithm", v);
         }
       },
       [](const TrainConfig& c) { return std::string(algorithm_name(c.algorithm)); }},
      string_field("reward", &TrainConfig::reward),
      real_field("reward_scale", &TrainConfig::reward_scale),
      int_field("target_mode", &TrainConfig::target_mode),
      real_list_field("reward_field", &TrainConfig::reward_field),
      real_list_field("reward_offsets", &TrainConfig::reward_offsets),
      {"normalizer",
       [](TrainConfig& c, const std::string& v) {
         try {
           c.normalizer = baselines::parse_mode(v);
         } catch (const std::invalid_argument&) {
           bad_value("normalizer", v);
         }
       },
       [](const TrainConfig& c) { return std::string(baselines::mode_name(c.normalizer)); }},
      real_field("ddpo_clip_range", &TrainConfig::ddpo_clip_range),
      int_field("prompt_pool", &TrainConfig::prompt_pool),
      int_field("eval_samples", &TrainConfig::eval_samples),
      int_field("eval_seed", &TrainConfig::eval_seed),
      bool_field("record_wall_time", &TrainConfig::record_wall_time),
      string_field("reference", &TrainConfig::reference),
      int_field("prompts", &TrainConfig::prompts),
      {"hidden",
       [](TrainConfig& c, const std::string& v) {
         std::vector<std::size_t> out;
         for (const auto& item : split_list(v)) {
           out.push_back(to_int<std::size_t>("hidden", item));
         }
         c.hidden = std::move(out);
       },
       [](const TrainConfig& c) {
         std::string s;
         for (std::size_t h : c.hidden) s += (s.empty() ? "" : ",") + std::to_string(h);
         return s;
       }},
      int_field("pretrain_steps", &TrainConfig::pretrain_steps),
      int_field("pretrain_batch", &TrainConfig::pretrain_batch),
      real_field("pretrain_lr", &TrainConfig::pretrain_lr),
      int_field("pretrain_seed", &TrainConfig::pretrain_seed),
      int_field("data_per_prompt", &TrainConfig::data_per_prompt),
      real_field("toy_radius", &TrainConfig::toy_radius),
      real_field("toy_spread", &TrainConfig::toy_spread),
      real_field("toy_mode_std", &TrainConfig::toy_mode_std),
  };
  return table;
}

const Field& find_field(const std::string& key) {
  for (const Field& f : fields()) {
    if (key == f.name) return f;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

const char* algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::kPrdp: return "prdp";
    case Algorithm::kPrdpOffline: return "prdp-offline";
    case Algorithm::kDdpo: return "ddpo";
  }
  return "?";
}

Algorithm parse_algorithm(const std::string& name) {
  if (name == "prdp") return Algorithm::kPrdp;
  if (name == "prdp-offline") return Algorithm::kPrdpOffline;
  if (name == "ddpo") return Algorithm::kDdpo;
  throw std::invalid_argument("unknown algorithm " + name);
}

void TrainConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  require(epochs >= 1, "epochs must be >= 1");
  require(updates_per_epoch >= 0, "updates_per_epoch must be >= 0");
  require(prompts_per_epoch >= 1, "prompts_per_epoch must be >= 1");
  require(images_per_prompt >= 2, "images_per_prompt must be >= 2");
  require(beta > 0.0, "beta must be > 0");
  require(clip_epsilon > 0.0, "clip_epsilon must be > 0");
  require(ddpm_steps >= 1, "ddpm_steps must be >= 1");
  require(learning_rate > 0.0, "learning_rate must be > 0");
  require(weight_decay >= 0.0, "weight_decay must be >= 0");
  require(ddpo_clip_range > 0.0, "ddpo_clip_range must be > 0");
  require(prompts >= 1, "prompts must be >= 1");
  require(prompt_pool >= 0 && prompt_pool <= prompts,
          "prompt_pool must be in 0..prompts");
  require(eval_samples >= 2, "eval_samples must be >= 2");
  require(reward == "target-distance" || reward == "density" ||
              reward == "scalar-field",
          "reward must be target-distance, density or scalar-field");
  require(target_mode >= 0, "target_mode must be >= 0");
  require(reward_offsets.empty() ||
              reward_offsets.size() == static_cast<std::size_t>(prompts),
          "reward_offsets needs one value per prompt");
  require(pretrain_steps >= 1 && pretrain_batch >= 1 && pretrain_lr > 0.0,
          "bad pretraining settings");
  require(data_per_prompt >= 1, "data_per_prompt must be >= 1");
}

void set_value(TrainConfig& config, const std::string& key,
               const std::string& value) {
  find_field(key).set(config, value);
}

std::string get_value(const TrainConfig& config, const std::string& key) {
  return find_field(key).get(config);
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const Field& f : fields()) out.emplace_back(f.name);
  return out;
}

TrainConfig parse_config(const std::string& text) {
  TrainConfig config;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    }
    set_value(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  config.validate();
  return config;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

void apply_override(TrainConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw ConfigError("override must look like key=value: " + assignment);
  }
  set_value(config, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

std::string config_to_text(const TrainConfig& config) {
  std::string out;
  for (const Field& f : fields()) {
    out += std::string(f.name) + " = " + f.get(config) + "\n";
  }
  return out;
}

}  // namespace prdp::harness
