// Copyright 2026 The PRDP Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "prdp/error.h"
#include "prdp/harness.h"
#include "prdp/tabular.h"

namespace py = pybind11;
using namespace prdp;

namespace {

py::dict eval_dict(const harness::EvalResult& e) {
  py::dict d;
  d["reward_mean"] = e.reward_mean;
  d["reward_stderr"] = e.reward_stderr;
  d["prompt_reward_mean"] = e.prompt_reward_mean;
  d["prompt_x0_mean"] = e.prompt_x0_mean;
  d["prompt_x0_sigma"] = e.prompt_x0_sigma;
  d["kl_estimate"] = e.kl_mean;
  d["kl_stderr"] = e.kl_stderr;
  return d;
}

py::dict stats_dict(const harness::EpochStats& s) {
  py::dict d;
  d["epoch"] = s.epoch;
  d["reward_mean"] = s.reward_mean;
  d["reward_stderr"] = s.reward_stderr;
  d["loss"] = s.loss;
  d["kl_estimate"] = s.kl_estimate;
  d["max_abs_step_ratio"] = s.max_abs_step_ratio;
  d["wall_ms"] = s.wall_ms;
  return d;
}

harness::TrainConfig config_from_kwargs(const py::kwargs& kw) {
  harness::TrainConfig c;
  for (const auto& [k, v] : kw) {
    harness::set_value(c, py::str(k), py::str(v));
  }
  c.validate();
  return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Reward-difference finetuning of toy diffusion models";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<RunError>(m, "RunError", PyExc_RuntimeError);
  py::register_exception<NonFiniteError>(m, "NonFiniteError", PyExc_ArithmeticError);

  py::class_<harness::TrainConfig>(m, "Config")
      .def(py::init([](const py::kwargs& kw) { return config_from_kwargs(kw); }))
      .def_static("from_text", &harness::parse_config)
      .def_static("load", &harness::load_config)
      .def_static("keys", &harness::config_keys)
      .def("set",
           [](harness::TrainConfig& c, const std::string& k, py::object v) {
             harness::set_value(c, k, py::str(v));
             c.validate();
           })
      .def("get", &harness::get_value)
      .def("to_text", &harness::config_to_text)
      .def("__repr__", [](const harness::TrainConfig& c) {
        return "Config(algorithm=" + harness::get_value(c, "algorithm") +
               ", epochs=" + harness::get_value(c, "epochs") +
               ", beta=" + harness::get_value(c, "beta") + ")";
      });

  py::class_<diffusion::Checkpoint>(m, "Checkpoint")
      .def_property_readonly("steps",
                             [](const diffusion::Checkpoint& c) { return c.schedule.steps(); })
      .def_property_readonly("prompt_count",
                             [](const diffusion::Checkpoint& c) {
                               return c.policy.arch().prompt_count;
                             })
      .def_property_readonly("parameter_count",
                             [](const diffusion::Checkpoint& c) {
                               return c.policy.parameter_count();
                             })
      .def_readonly("metadata", &diffusion::Checkpoint::metadata)
      .def("save", [](const diffusion::Checkpoint& c,
                      const std::string& path) { diffusion::save_checkpoint(path, c); })
      .def(
          "sample",
          [](const diffusion::Checkpoint& c, int prompt, int n, std::uint64_t seed) {
            Rng rng(seed);
            std::vector<int> prompts(n, prompt);
            auto b = diffusion::sample_batch(c.policy, c.schedule, prompts, rng);
            std::vector<std::vector<double>> out;
            for (const auto& tr : b.trajectories) {
              out.emplace_back(tr.x0().begin(), tr.x0().end());
            }
            return out;
          },
          py::arg("prompt"), py::arg("n"), py::arg("seed") = 0,
          "x0 of n ancestral samples");

  m.def("load_checkpoint", &diffusion::load_checkpoint, py::arg("path"));
  m.def("pretrain_reference", &harness::pretrain_toy_reference, py::arg("config"),
        py::call_guard<py::gil_scoped_release>());

  py::class_<harness::RunResult>(m, "RunResult")
      .def_property_readonly("stats",
                             [](const harness::RunResult& r) {
                               py::list out;
                               for (const auto& s : r.stats) out.append(stats_dict(s));
                               return out;
                             })
      .def_readonly("reward_queries", &harness::RunResult::reward_queries)
      .def_readonly("gradient_updates", &harness::RunResult::gradient_updates)
      .def_readonly("message", &harness::RunResult::message)
      .def_property_readonly("completed",
                             [](const harness::RunResult& r) {
                               return r.status == harness::RunStatus::kCompleted;
                             })
      .def_property_readonly("stable", &harness::is_stable)
      .def_property_readonly("reference_eval",
                             [](const harness::RunResult& r) {
                               return eval_dict(r.reference_eval);
                             })
      .def("policy_checkpoint",
           [](const harness::RunResult& r, const diffusion::Checkpoint& ref) {
             return diffusion::Checkpoint{r.policy, ref.schedule, 0, {}};
           })
      .def("write_metrics", [](const harness::RunResult& r, const std::string& path) {
        harness::emit_metrics(r.stats, path);
      });

  m.def("run_training", py::overload_cast<const harness::TrainConfig&,
                                          const diffusion::Checkpoint&>(
                            &harness::run_training),
        py::arg("config"), py::arg("reference"),
        py::call_guard<py::gil_scoped_release>());

  m.def(
      "evaluate",
      [](const diffusion::Checkpoint& policy, const diffusion::Checkpoint& ref,
         const harness::TrainConfig& config, int per_prompt, std::uint64_t seed) {
        const int pool = config.prompt_pool > 0 ? config.prompt_pool : config.prompts;
        return eval_dict(harness::evaluate(policy.policy, ref.policy, ref.schedule,
                                           harness::reward_spec(config), pool,
                                           per_prompt, seed));
      },
      py::arg("policy"), py::arg("reference"), py::arg("config"),
      py::arg("per_prompt") = 256, py::arg("seed") = 1234);

  m.def(
      "verify",
      [](std::uint64_t seed, int kl_instances, int optimum_instances,
         int optimum_policies) {
        harness::VerifyOptions opt{seed, kl_instances, optimum_instances,
                                   optimum_policies};
        harness::VerifyReport rep;
        {
          py::gil_scoped_release release;
          rep = harness::run_verification(opt);
        }
        py::dict out;
        for (const auto& c : rep.checks) {
          py::dict d;
          d["pass"] = c.pass;
          d["value"] = c.value;
          d["threshold"] = c.threshold;
          d["detail"] = c.detail;
          out[py::str(c.name)] = d;
        }
        return out;
      },
      py::arg("seed") = 2026, py::arg("kl_instances") = 1000,
      py::arg("optimum_instances") = 100, py::arg("optimum_policies") = 1000);

  py::class_<tabular::TabularDiffusion>(m, "TabularModel")
      .def_static("default", &tabular::default_instance)
      .def_static("two_state", &tabular::two_state_instance)
      .def_static(
          "random",
          [](int states, int steps, int prompts, double beta, std::uint64_t seed) {
            Rng rng(seed);
            return tabular::random_instance(states, steps, prompts, beta, rng);
          },
          py::arg("states"), py::arg("steps"), py::arg("prompts"), py::arg("beta"),
          py::arg("seed") = 0)
      .def_readonly("states", &tabular::TabularDiffusion::states)
      .def_readonly("steps", &tabular::TabularDiffusion::steps)
      .def_readonly("prompts", &tabular::TabularDiffusion::prompts)
      .def_readonly("beta", &tabular::TabularDiffusion::beta)
      .def("partition_function", &tabular::partition_function, py::arg("prompt"))
      .def("optimal_distribution",
           [](const tabular::TabularDiffusion& model, int prompt) {
             return tabular::optimal_distribution(model, prompt).probs;
           })
      .def("reference_distribution",
           [](const tabular::TabularDiffusion& model, int prompt) {
             return tabular::enumerate_distribution(model, tabular::reference_policy(model),
                                                    prompt)
                 .probs;
           })
      .def(
          "train",
          [](const tabular::TabularDiffusion& model, int steps, double lr) {
            tabular::TabularTrainConfig cfg;
            cfg.steps = steps;
            cfg.learning_rate = lr;
            auto res = tabular::train_tabular_rdp(model, tabular::reference_policy(model), cfg);
            std::vector<std::vector<double>> dists;
            for (int c = 0; c < model.prompts; ++c) {
              dists.push_back(tabular::enumerate_distribution(model, res.policy, c).probs);
            }
            return py::make_tuple(res.losses, dists);
          },
          py::arg("steps") = 3000, py::arg("learning_rate") = 0.05,
          "exact-gradient training from the reference; returns (losses, "
          "per-prompt trajectory distributions)");
}
