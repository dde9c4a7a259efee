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

// Command-line front end: gen-data, train, eval, sweep, analyze.
//
// Exit codes: 0 success, 1 usage error, 2 config error, 3 runtime failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "edpo/errors.hpp"
#include "edpo/eval/experiment.hpp"

namespace {

namespace fs = std::filesystem;
using namespace edpo;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> method;
  std::optional<double> beta;
  std::optional<double> eps;
};

void apply(const Overrides& o, eval::ExperimentConfig& c) {
  if (o.seed) c.train.seed = *o.seed;
  if (o.method) c.train.method = trainer::method_from_string(*o.method);
  if (o.beta) c.train.beta = *o.beta;
  if (o.eps) c.train.eps = *o.eps;
  c.train.betadpo.beta0 = c.train.beta;
  c.train.validate();
}

eval::DataSplits load_or_generate(const eval::ExperimentConfig& config,
                                  const eval::Task& task,
                                  const std::string& data_dir) {
  if (data_dir.empty()) return eval::generate_data(config.task, task);
  return {oracle::read_dataset(fs::path(data_dir) / "train.jsonl"),
          oracle::read_dataset(fs::path(data_dir) / "test.jsonl")};
}

int cmd_gen_data(const std::string& config_path, const std::string& out) {
  const auto config = eval::load_config(config_path);
  const auto task = eval::build_task(config.task);
  const auto data = eval::generate_data(config.task, task);
  fs::create_directories(out);
  oracle::write_dataset(fs::path(out) / "train.jsonl", data.train);
  oracle::write_dataset(fs::path(out) / "test.jsonl", data.test);
  std::cout << "wrote " << data.train.size() << " train and "
            << data.test.size() << " test pairs to " << out
            << " (config " << eval::config_hash(config) << ")\n";
  return kExitOk;
}

int cmd_train(const std::string& config_path, const std::string& out,
              const std::string& data_dir, const Overrides& overrides) {
  auto config = eval::load_config(config_path);
  apply(overrides, config);
  const auto task = eval::build_task(config.task);
  const auto data = load_or_generate(config, task, data_dir);
  fs::path train_path, test_path;
  if (!data_dir.empty()) {
    train_path = fs::path(data_dir) / "train.jsonl";
    test_path = fs::path(data_dir) / "test.jsonl";
  }
  const auto run =
      eval::run_experiment(config, data.train, data.test, out, train_path, test_path);
  const auto& r = run.report;
  std::cout << r.method << " seed=" << r.seed << " steps="
            << run.train.metrics.size() << " beta_final="
            << trainer::format_double(r.beta_final)
            << " kl=" << trainer::format_double(r.forward_kl)
            << " win_rate=" << trainer::format_double(r.win_rate)
            << " config=" << r.config_hash << "\n";
  return kExitOk;
}

int cmd_eval(const std::string& run_dir, const std::string& out) {
  const fs::path dir(run_dir);
  if (!fs::exists(dir / "summary.json")) {
    throw RuntimeFailure("not a run directory: " + run_dir);
  }
  const auto config = eval::load_config(dir / "config.json");
  const auto task = eval::build_task(config.task);
  nlohmann::json summary;
  {
    std::ifstream in(dir / "summary.json");
    if (!in) throw RuntimeFailure("missing summary.json in " + run_dir);
    summary = nlohmann::json::parse(in);
  }
  const auto policy = policy::load_policy(dir / "final.ckpt");
  const auto test =
      oracle::read_dataset(dir / summary.at("test_data").get<std::string>());
  trainer::TrainResult train;
  train.final_beta = summary.at("final_beta").get<double>();
  const auto& occ = summary.at("occurrences");
  train.occurrences = {occ.at("minus").get<std::uint64_t>(),
                       occ.at("zero").get<std::uint64_t>(),
                       occ.at("plus").get<std::uint64_t>()};
  auto report = eval::evaluate(config, task, *policy, train, test);
  report.beta_min_seen = summary.value("beta_min_seen", report.beta_min_seen);
  report.beta_max_seen = summary.value("beta_max_seen", report.beta_max_seen);
  const fs::path target = out.empty() ? dir / "eval.csv" : fs::path(out);
  std::ofstream csv(target);
  if (!csv) throw RuntimeFailure("cannot open " + target.string());
  eval::write_eval_csv(csv, std::span<const eval::EvalReport>(&report, 1));
  std::cout << "wrote " << target.string() << "\n";
  return kExitOk;
}

int cmd_sweep(const std::string& config_path, const std::string& out,
              std::size_t jobs) {
  const auto config = eval::load_config(config_path);
  const auto entries = eval::run_sweep(config, out, jobs);
  std::size_t failed = 0;
  for (const auto& e : entries) {
    if (e.status != "ok") {
      ++failed;
      std::cerr << e.run << ": " << e.status << "\n";
    }
  }
  std::cout << entries.size() - failed << " of " << entries.size()
            << " runs succeeded; manifest at "
            << (fs::path(out) / "manifest.csv").string() << "\n";
  return failed == 0 ? kExitOk : kExitRuntime;
}

int cmd_analyze(const std::string& runs, const std::string& out) {
  const auto result = eval::analyze_runs(runs, out);
  std::size_t non_dominated = 0;
  for (const auto& p : result.points) non_dominated += p.dominated ? 0 : 1;
  std::cout << "analyzed " << result.runs << " runs (" << non_dominated
            << " on the joint frontier); outputs in " << out << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Desk-scale lab for adaptive-beta preference optimization"};
  app.require_subcommand(1);

  std::string config_path, out, data_dir, run_dir, runs_dir;
  std::size_t jobs = 1;
  Overrides overrides;

  auto* gen = app.add_subcommand("gen-data", "Generate train/test preference data");
  gen->add_option("-c,--config", config_path, "Experiment config")->required();
  gen->add_option("-o,--out", out, "Output directory")->required();

  auto* train = app.add_subcommand("train", "Train one run");
  train->add_option("-c,--config", config_path, "Experiment config")->required();
  train->add_option("-o,--out", out, "Run directory")->required();
  train->add_option("-d,--data", data_dir, "Directory with train.jsonl and test.jsonl");
  train->add_option("--seed", overrides.seed, "Override train.seed");
  train->add_option("--method", overrides.method, "Override train.method");
  train->add_option("--beta", overrides.beta, "Override train.beta");
  train->add_option("--eps", overrides.eps, "Override train.eps");

  auto* ev = app.add_subcommand("eval", "Re-evaluate a finished run");
  ev->add_option("-r,--run", run_dir, "Run directory")->required();
  ev->add_option("-o,--out", out, "Output CSV (default <run>/eval.csv)");

  auto* sweep = app.add_subcommand("sweep", "Grid over method x beta x eps x seed");
  sweep->add_option("-c,--config", config_path, "Experiment config")->required();
  sweep->add_option("-o,--out", out, "Sweep directory")->required();
  sweep->add_option("-j,--jobs", jobs, "Parallel runs")->check(CLI::PositiveNumber);

  auto* analyze = app.add_subcommand("analyze", "Tables and plots from finished runs");
  analyze->add_option("-r,--runs", runs_dir, "Directory holding runs")->required();
  analyze->add_option("-o,--out", out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*gen) return cmd_gen_data(config_path, out);
    if (*train) return cmd_train(config_path, out, data_dir, overrides);
    if (*ev) return cmd_eval(run_dir, out);
    if (*sweep) return cmd_sweep(config_path, out, jobs);
    if (*analyze) return cmd_analyze(runs_dir, out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const eval::NoRunsFound& e) {
    std::cerr << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
