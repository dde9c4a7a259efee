// Copyright 2026 The edpo-lab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Python bindings for the core operations and the experiment pipeline.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "edpo/dpo/dpo.hpp"
#include "edpo/epsilon/epsilon_control.hpp"
#include "edpo/errors.hpp"
#include "edpo/eval/experiment.hpp"
#include "edpo/oracle/oracle.hpp"
#include "edpo/trainer/trainer.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace edpo;

namespace {

using Rows = std::vector<std::vector<double>>;

numerics::Tensor to_matrix(const Rows& rows) {
  const std::size_t cols = rows.empty() ? 0 : rows[0].size();
  std::vector<double> flat;
  flat.reserve(rows.size() * cols);
  for (const auto& r : rows) {
    if (r.size() != cols) throw ArgumentError("logit rows must have equal length");
    flat.insert(flat.end(), r.begin(), r.end());
  }
  return numerics::Tensor::matrix(rows.size(), cols, std::move(flat));
}

epsilon::Perturbation perturbation_from_string(const std::string& which) {
  if (which == "minus") return epsilon::Perturbation::kMinus;
  if (which == "plus") return epsilon::Perturbation::kPlus;
  throw ArgumentError("perturbation must be 'minus' or 'plus'");
}

std::string train(const std::string& config_path, const std::string& out,
                  const std::string& data_dir, std::optional<std::string> method,
                  std::optional<double> beta, std::optional<double> eps,
                  std::optional<std::uint64_t> seed) {
  auto config = eval::load_config(config_path);
  if (method) config.train.method = trainer::method_from_string(*method);
  if (beta) config.train.beta = *beta;
  if (eps) config.train.eps = *eps;
  if (seed) config.train.seed = *seed;
  config.train.betadpo.beta0 = config.train.beta;
  config.train.validate();
  const auto task = eval::build_task(config.task);
  eval::DataSplits data;
  fs::path train_path, test_path;
  if (data_dir.empty()) {
    data = eval::generate_data(config.task, task);
  } else {
    train_path = fs::path(data_dir) / "train.jsonl";
    test_path = fs::path(data_dir) / "test.jsonl";
    data = {oracle::read_dataset(train_path), oracle::read_dataset(test_path)};
  }
  py::gil_scoped_release release;
  eval::run_experiment(config, data.train, data.test, out, train_path, test_path);
  return (fs::path(out) / "summary.json").string();
}

}  // namespace

PYBIND11_MODULE(_edpo, m) {
  m.doc() = "Adaptive-beta preference optimization core";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<RuntimeFailure>(m, "RuntimeFailure", PyExc_RuntimeError);
  py::register_exception<InternalError>(m, "InternalError", PyExc_RuntimeError);
  py::register_exception<eval::NoRunsFound>(m, "NoRunsFound", PyExc_RuntimeError);

  m.def("perturbed_betas", [](double beta, double eps) {
    const auto b = epsilon::perturbed_betas(beta, eps);
    return py::make_tuple(b.minus, b.plus);
  }, py::arg("beta"), py::arg("eps"));

  m.def("interpolate_logits", [](const std::vector<double>& f, const std::vector<double>& ref,
                                 double lam) {
    return epsilon::interpolate_logits(f, ref, lam);
  }, py::arg("policy_logits"), py::arg("reference_logits"), py::arg("lam"));

  m.def("estimated_perturbed_logprob",
        [](const std::vector<std::uint32_t>& tokens, const Rows& policy_logits,
           const Rows& reference_logits, double eps, const std::string& which) {
          dpo::ResponseLogits logits;
          logits.tokens.assign(tokens.begin(), tokens.end());
          logits.policy = to_matrix(policy_logits);
          logits.reference = to_matrix(reference_logits);
          return epsilon::estimated_perturbed_logprob(logits, eps,
                                                      perturbation_from_string(which));
        },
        py::arg("tokens"), py::arg("policy_logits"), py::arg("reference_logits"),
        py::arg("eps"), py::arg("which"));

  m.def("select_beta", [](double z_minus, double z_zero, double z_plus, double beta,
                          double eps) {
    const auto d = epsilon::select_beta({z_minus, z_zero, z_plus}, beta, eps);
    return py::make_tuple(d.beta_tilde, static_cast<int>(d.direction));
  }, py::arg("z_minus"), py::arg("z_zero"), py::arg("z_plus"), py::arg("beta"), py::arg("eps"));

  m.def("mean_beta", [](double beta, const std::vector<double>& beta_tilde) {
    std::vector<epsilon::BetaDecision> decisions;
    for (double b : beta_tilde) decisions.push_back({b, epsilon::Direction::kZero});
    return epsilon::mean_beta(beta, decisions);
  }, py::arg("beta"), py::arg("beta_tilde"));

  m.def("epsilon_grid", &epsilon::epsilon_grid, py::arg("lo"), py::arg("hi"),
        py::arg("n_points"));
  m.def("preference_prob", &dpo::preference_prob, py::arg("z"), py::arg("gamma"),
        py::arg("beta"));
  m.def("dpo_loss", &dpo::dpo_loss_value, py::arg("z"), py::arg("gamma"), py::arg("beta"),
        py::arg("label") = 1.0);
  m.def("dpo_loss_dz", &dpo::dpo_loss_dz, py::arg("z"), py::arg("gamma"), py::arg("beta"),
        py::arg("label") = 1.0);

  m.def("load_config", [](const std::string& path) {
    return eval::to_json(eval::load_config(path)).dump();
  }, py::arg("path"));
  m.def("config_hash", [](const std::string& path) {
    return eval::config_hash(eval::load_config(path));
  }, py::arg("path"));

  m.def("gen_data", [](const std::string& config_path, const std::string& out) {
    const auto config = eval::load_config(config_path);
    const auto task = eval::build_task(config.task);
    const auto data = eval::generate_data(config.task, task);
    fs::create_directories(out);
    oracle::write_dataset(fs::path(out) / "train.jsonl", data.train);
    oracle::write_dataset(fs::path(out) / "test.jsonl", data.test);
    return py::make_tuple(data.train.size(), data.test.size());
  }, py::arg("config"), py::arg("out"));

  m.def("train", &train, py::arg("config"), py::arg("out"), py::arg("data_dir") = "",
        py::arg("method") = py::none(), py::arg("beta") = py::none(),
        py::arg("eps") = py::none(), py::arg("seed") = py::none());

  m.def("sweep", [](const std::string& config_path, const std::string& out,
                    std::size_t jobs) {
    const auto config = eval::load_config(config_path);
    std::vector<eval::SweepEntry> entries;
    {
      py::gil_scoped_release release;
      entries = eval::run_sweep(config, out, jobs);
    }
    py::list result;
    for (const auto& e : entries) {
      py::dict d;
      d["run"] = e.run;
      d["method"] = e.method;
      d["beta0"] = e.beta0;
      d["eps"] = e.eps;
      d["seed"] = e.seed;
      d["status"] = e.status;
      d["config_hash"] = e.config_hash;
      result.append(d);
    }
    return result;
  }, py::arg("config"), py::arg("out"), py::arg("jobs") = 1);

  m.def("analyze", [](const std::string& runs, const std::string& out) {
    const auto result = eval::analyze_runs(runs, out);
    return result.runs;
  }, py::arg("runs"), py::arg("out"));
}
