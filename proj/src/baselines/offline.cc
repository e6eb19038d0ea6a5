// Copyright 2026 The PRDP Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "prdp/baselines.h"

namespace prdp::baselines {

OfflineDataset::OfflineDataset(std::vector<OfflineEntry> entries)
    : entries_(std::move(entries)) {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    by_prompt_[entries_[i].trajectory.prompt].push_back(i);
  }
}

bool OfflineDataset::has_pair() const {
  for (const auto& [p, idx] : by_prompt_) {
    if (idx.size() >= 2) return true;
  }
  return false;
}

OfflineDataset build_offline_dataset(const PolicyNet& ref,
                                     const NoiseSchedule& schedule,
                                     std::span<const int> prompts,
                                     rewards::RewardOracle& oracle, Rng& rng) {
  if (prompts.size() < 2) {
    throw std::invalid_argument("offline dataset needs at least two entries");
  }
  diffusion::SampledBatch b = diffusion::sample_batch(ref, schedule, prompts, rng);
  std::vector<OfflineEntry> entries;
  entries.reserve(prompts.size());
  for (auto& tr : b.trajectories) {
    const double r = oracle.query(tr.x0(), tr.prompt);
    entries.push_back({std::move(tr), r});
  }
  return OfflineDataset(std::move(entries));
}

void save_offline_dataset(const std::string& path, const OfflineDataset& data) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write dataset " + path);
  std::size_t dim = 0, steps = 0;
  if (data.size() > 0) {
    dim = data.entries().front().trajectory.dim;
    steps = data.entries().front().trajectory.steps;
  }
  os << "format prdp-offline 1\n";
  os << "entries " << data.size() << " dim " << dim << " steps " << steps << '\n';
  char buf[40];
  for (const auto& e : data.entries()) {
    std::snprintf(buf, sizeof buf, "%.17g", e.reward);
    os << e.trajectory.prompt << ' ' << buf;
    for (double v : e.trajectory.states) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      os << ' ' << buf;
    }
    os << '\n';
  }
  if (!os) throw std::runtime_error("failed writing dataset " + path);
}

OfflineDataset load_offline_dataset(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open dataset " + path);
  std::string line, word;
  std::size_t n = 0, dim = 0, steps = 0;
  if (!std::getline(is, line) || line != "format prdp-offline 1") {
    throw std::runtime_error("dataset " + path + ": unrecognized header");
  }
  std::getline(is, line);
  std::istringstream head(line);
  std::string k1, k2, k3;
  if (!(head >> k1 >> n >> k2 >> dim >> k3 >> steps) || k1 != "entries") {
    throw std::runtime_error("dataset " + path + ": malformed size line");
  }
  std::vector<OfflineEntry> entries(n);
  for (auto& e : entries) {
    if (!std::getline(is, line)) {
      throw std::runtime_error("dataset " + path + ": fewer entries than declared");
    }
    std::istringstream in(line);
    in >> e.trajectory.prompt >> word;
    e.reward = std::stod(word);
    e.trajectory.dim = dim;
    e.trajectory.steps = static_cast<int>(steps);
    e.trajectory.states.resize((steps + 1) * dim);
    for (double& v : e.trajectory.states) {
      if (!(in >> word)) throw std::runtime_error("dataset " + path + ": short record");
      v = std::stod(word);
    }
  }
  return OfflineDataset(std::move(entries));
}

rdp::PairBatch draw_offline_batch(const OfflineDataset& data,
                                  const PolicyNet& ref,
                                  const NoiseSchedule& schedule, int groups,
                                  int group_size, Rng& rng) {
  if (groups < 1 || group_size < 2) {
    throw std::invalid_argument("offline batch needs groups >= 1, group size >= 2");
  }
  std::vector<const std::vector<std::size_t>*> eligible;
  for (const auto& [p, idx] : data.by_prompt()) {
    if (idx.size() >= 2) eligible.push_back(&idx);
  }
  if (eligible.empty()) {
    throw std::invalid_argument("offline dataset has no same-prompt pair");
  }
  rdp::PairBatch batch;
  for (int g = 0; g < groups; ++g) {
    std::vector<std::size_t> pool = *eligible[rng.index(eligible.size())];
    const std::size_t take = std::min<std::size_t>(group_size, pool.size());
    // Partial Fisher-Yates.
    for (std::size_t i = 0; i < take; ++i) {
      std::swap(pool[i], pool[i + rng.index(pool.size() - i)]);
    }
    std::vector<Trajectory> trajs;
    std::vector<double> rewards;
    for (std::size_t i = 0; i < take; ++i) {
      trajs.push_back(data.entries()[pool[i]].trajectory);
      rewards.push_back(data.entries()[pool[i]].reward);
    }
    rdp::PairBatch part =
        rdp::make_pair_batch(ref, ref, schedule, trajs, rewards, take);
    batch.groups.push_back(std::move(part.groups.front()));
  }
  return batch;
}

OfflineStep offline_rdp_step(const PolicyNet& policy, const PolicyNet& ref,
                             const NoiseSchedule& schedule,
                             const OfflineDataset& data, int groups,
                             int group_size, double beta,
                             const std::optional<rdp::ClipConfig>& clip,
                             Rng& rng) {
  OfflineStep step;
  step.batch = draw_offline_batch(data, ref, schedule, groups, group_size, rng);
  step.loss = rdp::batch_loss(policy, schedule, step.batch, beta, clip);
  return step;
}

}  // namespace prdp::baselines
