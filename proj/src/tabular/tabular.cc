// Copyright 2026 The PRDP Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "prdp/tabular.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "prdp/optim.h"

namespace prdp::tabular {

namespace {

double log_sum_exp(const std::vector<double>& v) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : v) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

// Log-softmax of each consecutive run of `width` entries.
std::vector<double> log_softmax_runs(const std::vector<double>& v,
                                     std::size_t width) {
  std::vector<double> out(v.size());
  for (std::size_t start = 0; start < v.size(); start += width) {
    std::vector<double> row(v.begin() + start, v.begin() + start + width);
    const double lse = log_sum_exp(row);
    for (std::size_t j = 0; j < width; ++j) out[start + j] = row[j] - lse;
  }
  return out;
}

std::size_t power(std::size_t base, int exp) {
  std::size_t r = 1;
  for (int i = 0; i < exp; ++i) r *= base;
  return r;
}

void check_prompt(const TabularDiffusion& m, int prompt) {
  if (prompt < 0 || prompt >= m.prompts) {
    throw std::out_of_range("unknown prompt id " + std::to_string(prompt));
  }
}

std::vector<double> reference_log_probs(const TabularDiffusion& model,
                                        int prompt) {
  return enumerate_distribution(model, reference_policy(model), prompt).log_probs;
}

}  // namespace

std::size_t TabularDiffusion::trajectory_count() const {
  return power(static_cast<std::size_t>(states), steps + 1);
}

std::size_t TabularDiffusion::row_index(int t, int xt, int c) const {
  return ((static_cast<std::size_t>(t - 1) * states + xt) * prompts + c) * states;
}

double TabularDiffusion::ref_prob(int t, int xt, int c, int xprev) const {
  return ref[row_index(t, xt, c) + xprev];
}

void TabularDiffusion::validate() const {
  if (states < 2 || states > kMaxStates) {
    throw std::invalid_argument("tabular: states must be in 2.." + std::to_string(kMaxStates));
  }
  if (steps < 1 || steps > kMaxSteps) {
    throw std::invalid_argument("tabular: steps must be in 1.." + std::to_string(kMaxSteps));
  }
  if (prompts < 1) throw std::invalid_argument("tabular: prompts must be >= 1");
  if (trajectory_count() > kEnumerationBudget) {
    throw std::invalid_argument("tabular: enumeration budget exceeded");
  }
  if (!(beta > 0.0) || !std::isfinite(beta)) {
    throw std::invalid_argument("tabular: beta must be positive");
  }
  const std::size_t S = states;
  if (prior.size() != S ||
      ref.size() != static_cast<std::size_t>(steps) * S * prompts * S ||
      reward.size() != S * prompts) {
    throw std::invalid_argument("tabular: table sizes do not match S, T, C");
  }
  auto check_row = [&](const double* row) {
    double s = 0.0;
    for (std::size_t j = 0; j < S; ++j) {
      if (!(row[j] >= kProbabilityFloor)) {
        throw std::invalid_argument("tabular: probability below the support floor");
      }
      s += row[j];
    }
    if (std::abs(s - 1.0) > 1e-12) {
      throw std::invalid_argument("tabular: categorical row does not sum to 1");
    }
  };
  check_row(prior.data());
  for (std::size_t start = 0; start < ref.size(); start += S) check_row(&ref[start]);
  for (double r : reward) {
    if (!std::isfinite(r)) throw std::invalid_argument("tabular: reward not finite");
  }
}

std::vector<int> decode(const TabularDiffusion& model, std::size_t k) {
  std::vector<int> x(model.steps + 1);
  for (int i = model.steps; i >= 0; --i) {
    x[i] = static_cast<int>(k % model.states);
    k /= model.states;
  }
  return x;
}

std::vector<double> TabularPolicy::log_transition(const TabularDiffusion& model) const {
  if (logits.size() != model.ref.size()) {
    throw std::invalid_argument("tabular policy: logits table has wrong size");
  }
  return log_softmax_runs(logits, model.states);
}

std::vector<double> TabularPolicy::log_prior(const TabularDiffusion& model) const {
  if (prior_logits.size() != static_cast<std::size_t>(model.prompts * model.states)) {
    throw std::invalid_argument("tabular policy: prior logits have wrong size");
  }
  return log_softmax_runs(prior_logits, model.states);
}

TabularPolicy reference_policy(const TabularDiffusion& model) {
  TabularPolicy p;
  p.logits.resize(model.ref.size());
  for (std::size_t i = 0; i < model.ref.size(); ++i) p.logits[i] = std::log(model.ref[i]);
  for (int c = 0; c < model.prompts; ++c) {
    for (double q : model.prior) p.prior_logits.push_back(std::log(q));
  }
  return p;
}

TabularPolicy random_policy(const TabularDiffusion& model, Rng& rng, double scale) {
  TabularPolicy p;
  p.logits.resize(model.ref.size());
  for (double& v : p.logits) v = scale * rng.normal();
  p.prior_logits.resize(static_cast<std::size_t>(model.prompts) * model.states);
  for (double& v : p.prior_logits) v = scale * rng.normal();
  return p;
}

double TrajectoryDistribution::total() const {
  double s = 0.0;
  for (double p : probs) s += p;
  return s;
}

std::vector<double> TrajectoryDistribution::marginal_x0(int states) const {
  std::vector<double> m(states, 0.0);
  for (std::size_t k = 0; k < probs.size(); ++k) m[x0[k]] += probs[k];
  return m;
}

TrajectoryDistribution enumerate_distribution(const TabularDiffusion& model,
                                              const TabularPolicy& policy,
                                              int prompt) {
  model.validate();
  check_prompt(model, prompt);
  const auto lt = policy.log_transition(model);
  const auto lp = policy.log_prior(model);
  const std::size_t n = model.trajectory_count();
  const int T = model.steps;
  TrajectoryDistribution d;
  d.prompt = prompt;
  d.log_probs.resize(n);
  d.probs.resize(n);
  d.x0.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const auto x = decode(model, k);
    double l = lp[prompt * model.states + x[0]];
    for (int t = T; t >= 1; --t) {
      l += lt[model.row_index(t, x[T - t], prompt) + x[T - t + 1]];
    }
    d.log_probs[k] = l;
    d.probs[k] = std::exp(l);
    d.x0[k] = x[T];
  }
  return d;
}

double log_partition_function(const TabularDiffusion& model, int prompt) {
  auto ref = enumerate_distribution(model, reference_policy(model), prompt);
  std::vector<double> terms(ref.log_probs.size());
  for (std::size_t k = 0; k < terms.size(); ++k) {
    terms[k] = ref.log_probs[k] + model.r(ref.x0[k], prompt) / model.beta;
  }
  return log_sum_exp(terms);
}

double partition_function(const TabularDiffusion& model, int prompt) {
  return std::exp(log_partition_function(model, prompt));
}

TrajectoryDistribution optimal_distribution(const TabularDiffusion& model,
                                            int prompt) {
  auto d = enumerate_distribution(model, reference_policy(model), prompt);
  const double log_z = log_partition_function(model, prompt);
  for (std::size_t k = 0; k < d.log_probs.size(); ++k) {
    d.log_probs[k] += model.r(d.x0[k], prompt) / model.beta - log_z;
    d.probs[k] = std::exp(d.log_probs[k]);
  }
  return d;
}

TabularPolicy optimal_policy(const TabularDiffusion& model) {
  model.validate();
  const int S = model.states;
  TabularPolicy p;
  p.logits.resize(model.ref.size());
  p.prior_logits.resize(static_cast<std::size_t>(model.prompts) * S);
  for (int c = 0; c < model.prompts; ++c) {
    std::vector<double> v(S);
    for (int x = 0; x < S; ++x) v[x] = model.r(x, c) / model.beta;
    for (int t = 1; t <= model.steps; ++t) {
      std::vector<double> next(S);
      for (int x = 0; x < S; ++x) {
        std::vector<double> terms(S);
        for (int y = 0; y < S; ++y) {
          terms[y] = std::log(model.ref_prob(t, x, c, y)) + v[y];
        }
        next[x] = log_sum_exp(terms);
        for (int y = 0; y < S; ++y) {
          p.logits[model.row_index(t, x, c) + y] = terms[y] - next[x];
        }
      }
      v = std::move(next);
    }
    std::vector<double> terms(S);
    for (int x = 0; x < S; ++x) terms[x] = std::log(model.prior[x]) + v[x];
    const double log_z = log_sum_exp(terms);
    for (int x = 0; x < S; ++x) p.prior_logits[c * S + x] = terms[x] - log_z;
  }
  return p;
}

double kl(const TrajectoryDistribution& p, const TrajectoryDistribution& q) {
  if (p.probs.size() != q.probs.size()) {
    throw std::invalid_argument("kl: distributions over different spaces");
  }
  double s = 0.0;
  for (std::size_t k = 0; k < p.probs.size(); ++k) {
    if (p.probs[k] > 0.0) s += p.probs[k] * (p.log_probs[k] - q.log_probs[k]);
  }
  return s;
}

double kl_trajectory(const TabularDiffusion& model, const TabularPolicy& p,
                     const TabularPolicy& q, int prompt) {
  return kl(enumerate_distribution(model, p, prompt),
            enumerate_distribution(model, q, prompt));
}

double kl_marginal(const TabularDiffusion& model, const TabularPolicy& p,
                   const TabularPolicy& q, int prompt) {
  const auto mp = enumerate_distribution(model, p, prompt).marginal_x0(model.states);
  const auto mq = enumerate_distribution(model, q, prompt).marginal_x0(model.states);
  double s = 0.0;
  for (int x = 0; x < model.states; ++x) {
    if (mp[x] > 0.0) s += mp[x] * (std::log(mp[x]) - std::log(mq[x]));
  }
  return s;
}

double total_variation(const TrajectoryDistribution& p,
                       const TrajectoryDistribution& q) {
  if (p.probs.size() != q.probs.size()) {
    throw std::invalid_argument("total_variation: different spaces");
  }
  double s = 0.0;
  for (std::size_t k = 0; k < p.probs.size(); ++k) s += std::abs(p.probs[k] - q.probs[k]);
  return 0.5 * s;
}

double rlhf_objective(const TabularDiffusion& model,
                      const TabularPolicy& policy, int prompt) {
  const auto d = enumerate_distribution(model, policy, prompt);
  const auto ref = reference_log_probs(model, prompt);
  double s = 0.0;
  for (std::size_t k = 0; k < d.probs.size(); ++k) {
    s += d.probs[k] * (model.r(d.x0[k], prompt) -
                       model.beta * (d.log_probs[k] - ref[k]));
  }
  return s;
}

OptimalityReport verify_optimality_condition(const TabularDiffusion& model,
                                             const TabularPolicy& policy,
                                             int prompt, double tol) {
  const auto d = enumerate_distribution(model, policy, prompt);
  const auto ref = reference_log_probs(model, prompt);
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::size_t k = 0; k < d.probs.size(); ++k) {
    const double g = d.log_probs[k] - ref[k] - model.r(d.x0[k], prompt) / model.beta;
    lo = std::min(lo, g);
    hi = std::max(hi, g);
  }
  OptimalityReport rep;
  rep.residual = hi - lo;
  rep.pass = rep.residual <= tol;
  return rep;
}

double rdp_loss(const TabularDiffusion& model, const TabularPolicy& policy) {
  double total = 0.0;
  for (int c = 0; c < model.prompts; ++c) {
    const auto d = enumerate_distribution(model, policy, c);
    const auto ref = enumerate_distribution(model, reference_policy(model), c);
    double mean = 0.0;
    std::vector<double> g(d.probs.size());
    for (std::size_t k = 0; k < g.size(); ++k) {
      g[k] = d.log_probs[k] - ref.log_probs[k] - model.r(d.x0[k], c) / model.beta;
      mean += ref.probs[k] * g[k];
    }
    double var = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) {
      var += ref.probs[k] * (g[k] - mean) * (g[k] - mean);
    }
    total += 2.0 * var / model.prompts;
  }
  return total;
}

namespace {

struct Layout {
  std::size_t n = 0;                   // trajectories per prompt
  std::vector<std::size_t> trans_idx;  // [C*n*T] into the flattened logits
  std::vector<std::size_t> prior_idx;  // [C*n] into the flattened prior logits
  std::vector<double> ref_trans;
  std::vector<double> ref_prior;
  std::vector<double> target;  // r / beta
  std::vector<double> ref_w;   // pi_ref of each trajectory
};

Layout make_layout(const TabularDiffusion& model) {
  Layout L;
  L.n = model.trajectory_count();
  const int T = model.steps;
  const int S = model.states;
  for (int c = 0; c < model.prompts; ++c) {
    for (std::size_t k = 0; k < L.n; ++k) {
      const auto x = decode(model, k);
      double w = model.prior[x[0]];
      L.prior_idx.push_back(static_cast<std::size_t>(c) * S + x[0]);
      L.ref_prior.push_back(std::log(model.prior[x[0]]));
      for (int t = T; t >= 1; --t) {
        const std::size_t idx = model.row_index(t, x[T - t], c) + x[T - t + 1];
        L.trans_idx.push_back(idx);
        L.ref_trans.push_back(std::log(model.ref[idx]));
        w *= model.ref[idx];
      }
      L.target.push_back(model.r(x[T], c) / model.beta);
      L.ref_w.push_back(w);
    }
  }
  return L;
}

ad::Tensor vec(std::vector<double> v) { return ad::Tensor::vector(std::move(v)); }

}  // namespace

ad::Graph build_rdp_loss_graph(const TabularDiffusion& model,
                               const std::optional<TabularPolicy>& snapshot,
                               double epsilon) {
  model.validate();
  const Layout L = make_layout(model);
  const std::size_t S = model.states;
  const std::size_t C = model.prompts;
  const std::size_t T = model.steps;
  const std::size_t all = C * L.n;

  ad::GraphBuilder g;
  ad::Var logits = g.input("logits", {T * S * C, S});
  ad::Var prior = g.input("prior_logits", {C, S});
  ad::Var lt = g.log_softmax_rows(logits);
  ad::Var lp = g.log_softmax_rows(prior);
  ad::Var step_trans = g.sub(g.gather(lt, L.trans_idx), g.constant(vec(L.ref_trans)));
  ad::Var step_prior = g.sub(g.gather(lp, L.prior_idx), g.constant(vec(L.ref_prior)));
  auto rhat_of = [&](ad::Var st, ad::Var sp) {
    return g.add(sp, g.row_sum(g.reshape(st, {all, T})));
  };
  const double pc = 1.0 / static_cast<double>(C);

  if (!snapshot) {
    ad::Var gvec = g.sub(rhat_of(step_trans, step_prior), g.constant(vec(L.target)));
    std::vector<double> a(C * all, 0.0), e(all * C, 0.0), w(all);
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t k = 0; k < L.n; ++k) {
        const std::size_t i = c * L.n + k;
        a[c * all + i] = L.ref_w[i];
        e[i * C + c] = 1.0;
        w[i] = 2.0 * pc * L.ref_w[i];
      }
    }
    ad::Var col = g.reshape(gvec, {all, 1});
    ad::Var means = g.matmul(g.constant(ad::Tensor::matrix(C, all, a)), col);
    ad::Var spread = g.matmul(g.constant(ad::Tensor::matrix(all, C, e)), means);
    ad::Var dev = g.reshape(g.sub(col, spread), {all});
    return g.build(g.sum(g.mul(g.constant(vec(w)), g.square(dev))));
  }

  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) {
    throw std::invalid_argument("tabular: clip epsilon must be >= 0");
  }
  const std::size_t pairs = C * L.n * (L.n - 1) / 2;
  if (pairs > 4'000'000) {
    throw std::invalid_argument("tabular: too many pairs for the clipped loss");
  }
  const auto old_lt = snapshot->log_transition(model);
  const auto old_lp = snapshot->log_prior(model);
  std::vector<double> lo_t(L.trans_idx.size()), hi_t(L.trans_idx.size());
  for (std::size_t i = 0; i < L.trans_idx.size(); ++i) {
    const double r = old_lt[L.trans_idx[i]] - L.ref_trans[i];
    lo_t[i] = r - epsilon;
    hi_t[i] = r + epsilon;
  }
  std::vector<double> lo_p(all), hi_p(all);
  for (std::size_t i = 0; i < all; ++i) {
    const double r = old_lp[L.prior_idx[i]] - L.ref_prior[i];
    lo_p[i] = r - epsilon;
    hi_p[i] = r + epsilon;
  }
  ad::Var rh = rhat_of(step_trans, step_prior);
  ad::Var rh_clip = rhat_of(g.clip(step_trans, vec(lo_t), vec(hi_t)),
                            g.clip(step_prior, vec(lo_p), vec(hi_p)));

  std::vector<std::size_t> pa, pb;
  std::vector<double> target, weight;
  pa.reserve(pairs);
  pb.reserve(pairs);
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t i = 0; i < L.n; ++i) {
      for (std::size_t j = i + 1; j < L.n; ++j) {
        const std::size_t a = c * L.n + i, b = c * L.n + j;
        pa.push_back(a);
        pb.push_back(b);
        target.push_back(L.target[a] - L.target[b]);
        weight.push_back(2.0 * pc * L.ref_w[a] * L.ref_w[b]);
      }
    }
  }
  ad::Var t = g.constant(vec(std::move(target)));
  auto pair_loss = [&](ad::Var r) {
    return g.square(g.sub(g.sub(g.gather(r, pa), g.gather(r, pb)), t));
  };
  ad::Var l = g.maximum(pair_loss(rh), pair_loss(rh_clip));
  return g.build(g.sum(g.mul(g.constant(vec(std::move(weight))), l)));
}

ad::Bindings to_bindings(const TabularDiffusion& model,
                         const TabularPolicy& policy) {
  const std::size_t S = model.states;
  const std::size_t C = model.prompts;
  const std::size_t T = model.steps;
  if (policy.logits.size() != T * S * C * S || policy.prior_logits.size() != C * S) {
    throw std::invalid_argument("tabular policy does not match the model");
  }
  ad::Bindings b;
  b.emplace("logits", ad::Tensor::matrix(T * S * C, S, policy.logits));
  b.emplace("prior_logits", ad::Tensor::matrix(C, S, policy.prior_logits));
  return b;
}

TabularTrainResult train_tabular_rdp(const TabularDiffusion& model,
                                     const TabularPolicy& init,
                                     const TabularTrainConfig& config) {
  if (config.steps < 0) throw std::invalid_argument("tabular: steps must be >= 0");
  if (config.clip && config.clip->refresh_every < 1) {
    throw std::invalid_argument("tabular: refresh_every must be >= 1");
  }
  AdamW opt(AdamWConfig{.learning_rate = config.learning_rate,
                        .weight_decay = 0.0,
                        .grad_clip_norm = 0.0});
  ad::Bindings params = to_bindings(model, init);
  auto current = [&] {
    return TabularPolicy{params.at("logits").values(),
                         params.at("prior_logits").values()};
  };
  TabularTrainResult res;
  std::optional<ad::Graph> graph;
  if (!config.clip) graph = build_rdp_loss_graph(model, std::nullopt);
  for (int step = 0; step < config.steps; ++step) {
    if (config.clip && step % config.clip->refresh_every == 0) {
      graph = build_rdp_loss_graph(model, current(), config.clip->epsilon);
    }
    auto gr = graph->backward(params);
    res.losses.push_back(gr.output.item());
    opt.step(params, std::move(gr.grads));
  }
  res.policy = current();
  return res;
}

TabularDiffusion random_instance(int states, int steps, int prompts,
                                 double beta, Rng& rng, double reward_scale,
                                 double concentration) {
  constexpr double kUniformMix = 0.05;
  TabularDiffusion m;
  m.states = states;
  m.steps = steps;
  m.prompts = prompts;
  m.beta = beta;
  auto row = [&](std::vector<double>& out) {
    std::vector<double> z(states);
    double mx = -std::numeric_limits<double>::infinity();
    for (double& v : z) {
      v = concentration * rng.normal();
      mx = std::max(mx, v);
    }
    double s = 0.0;
    for (double& v : z) s += (v = std::exp(v - mx));
    std::vector<double> p(states);
    double total = 0.0;
    for (int j = 0; j < states; ++j) {
      p[j] = (1.0 - kUniformMix) * z[j] / s + kUniformMix / states;
      total += p[j];
    }
    for (double v : p) out.push_back(v / total);
  };
  if (states < 2 || states > kMaxStates || steps < 1 || steps > kMaxSteps ||
      prompts < 1) {
    throw std::invalid_argument("tabular: instance dimensions out of range");
  }
  row(m.prior);
  for (int i = 0; i < steps * states * prompts; ++i) row(m.ref);
  for (int i = 0; i < states * prompts; ++i) {
    m.reward.push_back(reward_scale * rng.uniform());
  }
  m.validate();
  return m;
}

TabularDiffusion default_instance() {
  Rng rng(20260417);
  return random_instance(3, 2, 2, 0.5, rng);
}

TabularDiffusion two_state_instance() {
  TabularDiffusion m;
  m.states = 2;
  m.steps = 1;
  m.prompts = 1;
  m.prior = {0.5, 0.5};
  m.ref = {0.5, 0.5, 0.5, 0.5};
  m.reward = {0.0, std::log(2.0)};
  m.beta = 1.0;
  return m;
}

}  // namespace prdp::tabular
