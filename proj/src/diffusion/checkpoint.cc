// Copyright 2026 The PRDP Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "prdp/diffusion.h"

namespace prdp::diffusion {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_list(std::ostream& os, const std::string& key,
                const std::vector<double>& values) {
  os << key << ' ' << values.size();
  for (double v : values) os << ' ' << fmt(v);
  os << '\n';
}

[[noreturn]] void bad(const std::string& path, const std::string& what) {
  throw std::runtime_error("checkpoint " + path + ": " + what);
}

std::vector<double> read_list(std::istringstream& in, const std::string& path) {
  std::size_t n = 0;
  if (!(in >> n)) bad(path, "missing list length");
  std::vector<double> out(n);
  for (double& v : out) {
    std::string tok;
    if (!(in >> tok)) bad(path, "list shorter than declared");
    v = std::stod(tok);
  }
  return out;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write checkpoint " + path);
  const PolicyArch& arch = ck.policy.arch();
  os << "format prdp-checkpoint 1\n";
  os << "seed " << ck.seed << '\n';
  os << "state_dim " << arch.state_dim << '\n';
  os << "prompt_count " << arch.prompt_count << '\n';
  os << "hidden " << arch.hidden.size();
  for (std::size_t h : arch.hidden) os << ' ' << h;
  os << '\n';
  os << "parameterization "
     << (arch.parameterization == MeanParameterization::kEpsilon ? "epsilon"
                                                                 : "direct")
     << '\n';
  write_list(os, "betas", ck.schedule.betas());
  write_list(os, "sigmas", ck.schedule.sigmas());
  for (const auto& [k, v] : ck.metadata) {
    if (k.find_first_of(" \n") != std::string::npos ||
        v.find('\n') != std::string::npos) {
      throw std::invalid_argument("checkpoint metadata must be single-line");
    }
    os << "meta " << k << ' ' << v << '\n';
  }
  for (const auto& [name, t] : ck.policy.params()) {
    os << "tensor " << name << ' ' << t.rank();
    for (std::size_t s : t.shape()) os << ' ' << s;
    os << '\n';
    for (std::size_t i = 0; i < t.size(); ++i) {
      os << (i ? " " : "") << fmt(t[i]);
    }
    os << '\n';
  }
  if (!os) throw std::runtime_error("failed writing checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path);
  std::string line;
  if (!std::getline(is, line) || line != "format prdp-checkpoint 1") {
    bad(path, "unrecognized header");
  }
  PolicyArch arch;
  arch.hidden.clear();
  std::vector<double> betas, sigmas;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> meta;
  ad::Bindings params;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream in(line);
    std::string key;
    in >> key;
    if (key == "seed") {
      in >> seed;
    } else if (key == "state_dim") {
      in >> arch.state_dim;
    } else if (key == "prompt_count") {
      in >> arch.prompt_count;
    } else if (key == "hidden") {
      std::size_t n = 0;
      in >> n;
      arch.hidden.resize(n);
      for (auto& h : arch.hidden) in >> h;
    } else if (key == "parameterization") {
      std::string p;
      in >> p;
      if (p == "epsilon") {
        arch.parameterization = MeanParameterization::kEpsilon;
      } else if (p == "direct") {
        arch.parameterization = MeanParameterization::kDirect;
      } else {
        bad(path, "unknown parameterization " + p);
      }
    } else if (key == "betas") {
      betas = read_list(in, path);
    } else if (key == "sigmas") {
      sigmas = read_list(in, path);
    } else if (key == "meta") {
      std::string k;
      in >> k;
      std::string v;
      if (k.empty()) bad(path, "metadata record without key");
      std::getline(in >> std::ws, v);
      in.clear();
      meta[k] = v;
    } else if (key == "tensor") {
      std::string name;
      std::size_t rank = 0;
      in >> name >> rank;
      ad::Shape shape(rank);
      for (auto& s : shape) in >> s;
      std::string values;
      if (!std::getline(is, values)) bad(path, "tensor " + name + " has no data");
      std::istringstream vin(values);
      std::vector<double> data(ad::shape_size(shape));
      for (double& v : data) {
        std::string tok;
        if (!(vin >> tok)) bad(path, "tensor " + name + " is truncated");
        v = std::stod(tok);
      }
      params.emplace(name, ad::Tensor(shape, std::move(data)));
    } else {
      bad(path, "unknown record " + key);
    }
    if (in.fail()) bad(path, "malformed record " + key);
  }
  return Checkpoint{PolicyNet(arch, std::move(params)),
                    NoiseSchedule(std::move(betas), std::move(sigmas)), seed,
                    std::move(meta)};
}

}  // namespace prdp::diffusion
