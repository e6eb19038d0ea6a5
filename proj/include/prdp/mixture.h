// Copyright 2026 The PRDP Lab Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef PRDP_MIXTURE_H_
#define PRDP_MIXTURE_H_

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

namespace prdp {

// Isotropic Gaussian component.
struct MixtureComponent {
  std::vector<double> mean;
  double stddev = 1.0;
  double weight = 1.0;
};

// Isotropic Gaussian mixture; weights need not be normalized.
struct GaussianMixture {
  std::vector<MixtureComponent> components;

  std::size_t dim() const {
    return components.empty() ? 0 : components.front().mean.size();
  }

  double total_weight() const {
    double w = 0.0;
    for (const auto& c : components) w += c.weight;
    return w;
  }

  double log_density(std::span<const double> x) const {
    if (components.empty()) throw std::invalid_argument("empty mixture");
    const double total = total_weight();
    std::vector<double> terms;
    terms.reserve(components.size());
    for (const auto& c : components) {
      if (c.mean.size() != x.size()) {
        throw std::invalid_argument("mixture dimension mismatch");
      }
      double sq = 0.0;
      for (std::size_t k = 0; k < x.size(); ++k) {
        const double diff = x[k] - c.mean[k];
        sq += diff * diff;
      }
      const double var = c.stddev * c.stddev;
      terms.push_back(std::log(c.weight / total) -
                      0.5 * static_cast<double>(x.size()) *
                          std::log(2.0 * std::numbers::pi * var) -
                      0.5 * sq / var);
    }
    const double mx = *std::max_element(terms.begin(), terms.end());
    double s = 0.0;
    for (double t : terms) s += std::exp(t - mx);
    return mx + std::log(s);
  }

  // Mixture mean.
  std::vector<double> mean() const {
    std::vector<double> m(dim(), 0.0);
    const double total = total_weight();
    for (const auto& c : components) {
      for (std::size_t k = 0; k < m.size(); ++k) {
        m[k] += c.weight / total * c.mean[k];
      }
    }
    return m;
  }
};

}  // namespace prdp

#endif  // PRDP_MIXTURE_H_
