// Copyright 2026 The PRDP Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <stdexcept>
#include <string>

#include "prdp/diffusion.h"
#include "prdp/error.h"

namespace prdp::diffusion {

NoiseSchedule::NoiseSchedule(std::vector<double> betas,
                             std::vector<double> sigma)
    : betas_(std::move(betas)), sigma_(std::move(sigma)) {
  if (betas_.empty()) throw std::invalid_argument("schedule needs T >= 1");
  if (sigma_.size() != betas_.size()) {
    throw std::invalid_argument("schedule: sigma and beta lengths differ");
  }
  double prod = 1.0;
  for (std::size_t i = 0; i < betas_.size(); ++i) {
    if (!(betas_[i] > 0.0 && betas_[i] < 1.0)) {
      throw std::invalid_argument("schedule: beta outside (0, 1)");
    }
    if (!(sigma_[i] > 0.0) || !std::isfinite(sigma_[i])) {
      throw std::invalid_argument("schedule: sigma_t must be positive");
    }
    prod *= 1.0 - betas_[i];
    alpha_bar_.push_back(prod);
  }
}

NoiseSchedule NoiseSchedule::linear(int steps, double beta_start,
                                    double beta_end) {
  if (steps < 1) throw std::invalid_argument("schedule needs T >= 1");
  std::vector<double> betas(steps);
  for (int i = 0; i < steps; ++i) {
    betas[i] = steps == 1 ? beta_end
                          : beta_start + (beta_end - beta_start) * i /
                                             static_cast<double>(steps - 1);
  }
  std::vector<double> sigma(steps);
  double prev_bar = 1.0;
  for (int i = 0; i < steps; ++i) {
    const double bar = prev_bar * (1.0 - betas[i]);
    sigma[i] = i == 0 ? std::sqrt(betas[0])
                      : std::sqrt((1.0 - prev_bar) / (1.0 - bar) * betas[i]);
    prev_bar = bar;
  }
  return NoiseSchedule(std::move(betas), std::move(sigma));
}

NoiseSchedule NoiseSchedule::linear(int steps) {
  const double t = static_cast<double>(steps);
  return linear(steps, std::min(0.1 / t, 0.5), std::min(5.0 / t, 0.999));
}

double NoiseSchedule::x_coef(int t) const { return 1.0 / std::sqrt(alpha(t)); }

double NoiseSchedule::eps_coef(int t) const {
  return beta(t) / (std::sqrt(alpha(t)) * std::sqrt(1.0 - alpha_bar(t)));
}

std::vector<double> PromptSpace::embedding(int prompt) const {
  if (prompt < 0 || prompt >= count) {
    throw std::out_of_range("unknown prompt id " + std::to_string(prompt));
  }
  std::vector<double> e(count, 0.0);
  e[prompt] = 1.0;
  return e;
}

namespace {

std::string weight_name(std::size_t layer) {
  return "l" + std::to_string(layer) + ".w";
}
std::string bias_name(std::size_t layer) {
  return "l" + std::to_string(layer) + ".b";
}

std::vector<std::size_t> layer_sizes(const PolicyArch& arch) {
  std::vector<std::size_t> sizes{arch.input_dim()};
  sizes.insert(sizes.end(), arch.hidden.begin(), arch.hidden.end());
  sizes.push_back(arch.state_dim);
  return sizes;
}

}  // namespace

PolicyNet::PolicyNet(PolicyArch arch, ad::Bindings params)
    : arch_(std::move(arch)), params_(std::move(params)) {
  if (arch_.state_dim == 0 || arch_.prompt_count == 0) {
    throw std::invalid_argument("policy needs state_dim, prompt_count >= 1");
  }
  const auto sizes = layer_sizes(arch_);
  std::size_t expected = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const auto& w = params_.at(weight_name(l));
    const auto& b = params_.at(bias_name(l));
    if (w.shape() != ad::Shape{sizes[l], sizes[l + 1]} ||
        b.shape() != ad::Shape{sizes[l + 1]}) {
      throw ShapeError("policy layer " + std::to_string(l) +
                       " has wrong parameter shapes");
    }
    expected += 2;
  }
  if (params_.size() != expected) {
    throw ShapeError("policy has unexpected extra parameters");
  }
}

PolicyNet PolicyNet::initialize(const PolicyArch& arch, Rng& rng) {
  const auto sizes = layer_sizes(arch);
  ad::Bindings params;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(sizes[l]));
    std::vector<double> w(sizes[l] * sizes[l + 1]);
    for (double& v : w) v = scale * rng.normal();
    params.emplace(weight_name(l),
                   ad::Tensor::matrix(sizes[l], sizes[l + 1], std::move(w)));
    params.emplace(bias_name(l), ad::Tensor::zeros({sizes[l + 1]}));
  }
  return PolicyNet(arch, std::move(params));
}

PolicyNet PolicyNet::zeros(const PolicyArch& arch) {
  const auto sizes = layer_sizes(arch);
  ad::Bindings params;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    params.emplace(weight_name(l), ad::Tensor::zeros({sizes[l], sizes[l + 1]}));
    params.emplace(bias_name(l), ad::Tensor::zeros({sizes[l + 1]}));
  }
  return PolicyNet(arch, std::move(params));
}

std::size_t PolicyNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params_) n += t.size();
  return n;
}

std::vector<double> PolicyNet::features(const NoiseSchedule& schedule,
                                        std::span<const double> states,
                                        std::span<const int> prompts,
                                        std::span<const int> steps) const {
  const std::size_t n = prompts.size();
  const std::size_t d = arch_.state_dim;
  const std::size_t in = arch_.input_dim();
  if (states.size() != n * d || steps.size() != n) {
    throw ShapeError("policy rows: states/prompts/steps lengths disagree");
  }
  const double inv_t = 1.0 / static_cast<double>(schedule.steps());
  std::vector<double> f(n * in, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    if (prompts[r] < 0 ||
        static_cast<std::size_t>(prompts[r]) >= arch_.prompt_count) {
      throw std::out_of_range("unknown prompt id " + std::to_string(prompts[r]));
    }
    if (steps[r] < 1 || steps[r] > schedule.steps()) {
      throw std::out_of_range("step outside 1..T");
    }
    double* row = &f[r * in];
    for (std::size_t k = 0; k < d; ++k) row[k] = states[r * d + k];
    row[d + prompts[r]] = 1.0;
    row[in - 1] = steps[r] * inv_t;
  }
  return f;
}

std::vector<double> PolicyNet::means(const NoiseSchedule& schedule,
                                     std::span<const double> states,
                                     std::span<const int> prompts,
                                     std::span<const int> steps) const {
  const std::size_t n = prompts.size();
  const std::size_t d = arch_.state_dim;
  std::vector<double> act = features(schedule, states, prompts, steps);
  std::size_t width = arch_.input_dim();
  const std::size_t layers = layer_count();
  for (std::size_t l = 0; l < layers; ++l) {
    const auto& w = params_.at(weight_name(l));
    const auto& b = params_.at(bias_name(l));
    const std::size_t out_w = w.cols();
    std::vector<double> next(n * out_w);
    for (std::size_t r = 0; r < n; ++r) {
      double* o = &next[r * out_w];
      for (std::size_t c = 0; c < out_w; ++c) o[c] = b[c];
      for (std::size_t j = 0; j < width; ++j) {
        const double a = act[r * width + j];
        if (a == 0.0) continue;
        const double* wrow = &w.values()[j * out_w];
        for (std::size_t c = 0; c < out_w; ++c) o[c] += a * wrow[c];
      }
      if (l + 1 < layers) {
        for (std::size_t c = 0; c < out_w; ++c) o[c] = std::tanh(o[c]);
      }
    }
    act = std::move(next);
    width = out_w;
  }
  if (arch_.parameterization == MeanParameterization::kEpsilon) {
    for (std::size_t r = 0; r < n; ++r) {
      const double xc = schedule.x_coef(steps[r]);
      const double ec = schedule.eps_coef(steps[r]);
      for (std::size_t k = 0; k < d; ++k) {
        act[r * d + k] = xc * states[r * d + k] - ec * act[r * d + k];
      }
    }
  }
  return act;
}

std::map<std::string, ad::Var> PolicyNet::declare_params(
    ad::GraphBuilder& g) const {
  std::map<std::string, ad::Var> vars;
  for (const auto& [name, t] : params_) vars[name] = g.input(name, t.shape());
  return vars;
}

ad::Var PolicyNet::build_output(ad::GraphBuilder& g,
                                const std::map<std::string, ad::Var>& params,
                                const NoiseSchedule& schedule,
                                std::span<const double> states,
                                std::span<const int> prompts,
                                std::span<const int> steps) const {
  ad::Var h = g.constant(ad::Tensor::matrix(
      prompts.size(), arch_.input_dim(),
      features(schedule, states, prompts, steps)));
  const std::size_t layers = layer_count();
  for (std::size_t l = 0; l < layers; ++l) {
    h = g.add_row(g.matmul(h, params.at(weight_name(l))),
                  params.at(bias_name(l)));
    if (l + 1 < layers) h = g.tanh(h);
  }
  return h;
}

ad::Var PolicyNet::build_means(ad::GraphBuilder& g,
                               const std::map<std::string, ad::Var>& params,
                               const NoiseSchedule& schedule,
                               std::span<const double> states,
                               std::span<const int> prompts,
                               std::span<const int> steps) const {
  const std::size_t n = prompts.size();
  const std::size_t d = arch_.state_dim;
  ad::Var h = build_output(g, params, schedule, states, prompts, steps);
  if (arch_.parameterization == MeanParameterization::kDirect) return h;

  std::vector<double> base(n * d), coef(n * d);
  for (std::size_t r = 0; r < n; ++r) {
    const double xc = schedule.x_coef(steps[r]);
    const double ec = schedule.eps_coef(steps[r]);
    for (std::size_t k = 0; k < d; ++k) {
      base[r * d + k] = xc * states[r * d + k];
      coef[r * d + k] = ec;
    }
  }
  return g.sub(g.constant(ad::Tensor::matrix(n, d, std::move(base))),
               g.mul(g.constant(ad::Tensor::matrix(n, d, std::move(coef))), h));
}

}  // namespace prdp::diffusion
