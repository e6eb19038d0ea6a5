// Copyright 2026 The PRDP Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "prdp/harness.h"

namespace prdp::harness {

namespace {

constexpr const char* kHeader =
    "epoch,reward_mean,reward_stderr,loss,kl_estimate,max_abs_step_ratio,wall_ms";

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_tick(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << text;
  if (!os) throw std::runtime_error("failed writing " + path);
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                          "#9467bd", "#8c564b", "#e377c2", "#17becf"};

}  // namespace

void emit_metrics(const std::vector<EpochStats>& stats, const std::string& path) {
  if (stats.empty()) throw std::invalid_argument("emit_metrics: no epochs");
  std::string out = std::string(kHeader) + "\n";
  for (const auto& s : stats) {
    out += std::to_string(s.epoch) + "," + fmt(s.reward_mean) + "," +
           fmt(s.reward_stderr) + "," + fmt(s.loss) + "," + fmt(s.kl_estimate) +
           "," + fmt(s.max_abs_step_ratio) + "," + fmt(s.wall_ms) + "\n";
  }
  write_file(path, out);
}

std::vector<EpochStats> parse_metrics(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kHeader) {
    throw std::invalid_argument("metrics: unexpected header");
  }
  std::vector<EpochStats> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 7) throw std::invalid_argument("metrics: bad row " + line);
    EpochStats s;
    s.epoch = std::stoi(cells[0]);
    s.reward_mean = std::stod(cells[1]);
    s.reward_stderr = std::stod(cells[2]);
    s.loss = std::stod(cells[3]);
    s.kl_estimate = std::stod(cells[4]);
    s.max_abs_step_ratio = std::stod(cells[5]);
    s.wall_ms = std::stod(cells[6]);
    if (!out.empty() && s.epoch <= out.back().epoch) {
      throw std::invalid_argument("metrics: epochs out of order");
    }
    out.push_back(s);
  }
  return out;
}

std::vector<EpochStats> load_metrics(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_metrics(ss.str());
}

void emit_sweep_table(const SweepResult& sweep, const std::string& path) {
  std::string out = sweep.axis +
                    ",status,final_reward_mean,final_reward_stderr,final_kl_estimate,"
                    "reward_queries,gradient_updates,stable\n";
  for (const auto& run : sweep.runs) {
    out += run.value + ",";
    if (!run.result) {
      std::string err = run.error;
      std::replace(err.begin(), err.end(), ',', ';');
      out += "error: " + err + ",,,,,,\n";
      continue;
    }
    const RunResult& r = *run.result;
    out += r.status == RunStatus::kCompleted ? "completed," : "diverged,";
    if (r.stats.empty()) {
      out += ",,,";
    } else {
      out += fmt(r.stats.back().reward_mean) + "," + fmt(r.stats.back().reward_stderr) +
             "," + fmt(r.stats.back().kl_estimate) + ",";
    }
    out += std::to_string(r.reward_queries) + "," + std::to_string(r.gradient_updates) +
           "," + (is_stable(r) ? "true" : "false") + "\n";
  }
  write_file(path, out);
}

std::string render_svg(const std::string& title, const std::string& x_label,
                       const std::string& y_label,
                       const std::vector<Series>& series) {
  const double W = 640, H = 420, left = 70, right = 150, top = 40, bottom = 55;
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y0 -= 0.5, y1 += 0.5;
  const double pw = W - left - right, ph = H - top - bottom;
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return top + (1.0 - (y - y0) / (y1 - y0)) * ph; };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\""
     << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
     << escape(title) << "</text>\n";
  os << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw
     << "\" height=\"" << ph << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4, yv = y0 + (y1 - y0) * i / 4;
    os << "<text x=\"" << px(xv) << "\" y=\"" << top + ph + 16
       << "\" text-anchor=\"middle\">" << fmt_tick(xv) << "</text>\n";
    os << "<text x=\"" << left - 6 << "\" y=\"" << py(yv) + 4
       << "\" text-anchor=\"end\">" << fmt_tick(yv) << "</text>\n";
  }
  os << "<text class=\"x-label\" x=\"" << left + pw / 2 << "\" y=\"" << H - 12
     << "\" text-anchor=\"middle\">" << escape(x_label) << "</text>\n";
  os << "<text class=\"y-label\" x=\"16\" y=\"" << top + ph / 2
     << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << top + ph / 2 << ")\">"
     << escape(y_label) << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = kPalette[k % std::size(kPalette)];
    os << "<g class=\"series\" data-label=\"" << escape(s.label) << "\">\n";
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      os << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
    }
    os << "\"/>\n";
    const double ly = top + 14 + 18 * static_cast<double>(k);
    os << "<line x1=\"" << left + pw + 10 << "\" y1=\"" << ly - 4 << "\" x2=\""
       << left + pw + 30 << "\" y2=\"" << ly - 4 << "\" stroke=\"" << color
       << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << left + pw + 35 << "\" y=\"" << ly << "\">" << escape(s.label)
       << "</text>\n</g>\n";
  }
  os << "</svg>\n";
  return os.str();
}

void emit_plots(const std::vector<EpochStats>& stats, const std::string& dir) {
  if (stats.empty()) throw std::invalid_argument("emit_plots: no epochs");
  std::filesystem::create_directories(dir);
  Series reward{"reward", {}, {}}, loss{"loss", {}, {}}, kl{"kl", {}, {}};
  for (const auto& s : stats) {
    for (Series* p : {&reward, &loss, &kl}) p->x.push_back(s.epoch);
    reward.y.push_back(s.reward_mean);
    loss.y.push_back(s.loss);
    kl.y.push_back(s.kl_estimate);
  }
  const std::filesystem::path d(dir);
  write_file((d / "reward.svg").string(),
             render_svg("Mean reward", "epoch", "reward", {reward}));
  write_file((d / "loss.svg").string(), render_svg("Training loss", "epoch", "loss", {loss}));
  write_file((d / "kl.svg").string(),
             render_svg("KL estimate to reference", "epoch", "KL (nats)", {kl}));
}

void emit_sweep_plots(const SweepResult& sweep, const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::vector<Series> reward, kl;
  for (const auto& run : sweep.runs) {
    if (!run.result) continue;
    Series r{sweep.axis + "=" + run.value, {}, {}}, k{sweep.axis + "=" + run.value, {}, {}};
    for (const auto& s : run.result->stats) {
      r.x.push_back(s.epoch);
      r.y.push_back(s.reward_mean);
      k.x.push_back(s.epoch);
      k.y.push_back(s.kl_estimate);
    }
    reward.push_back(std::move(r));
    kl.push_back(std::move(k));
  }
  const std::filesystem::path d(dir);
  write_file((d / "reward.svg").string(),
             render_svg("Mean reward by " + sweep.axis, "epoch", "reward", reward));
  write_file((d / "kl.svg").string(),
             render_svg("KL estimate by " + sweep.axis, "epoch", "KL (nats)", kl));
}

}  // namespace prdp::harness
