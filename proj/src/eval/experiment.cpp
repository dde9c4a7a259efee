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

#include "edpo/eval/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <thread>

#include "common/json_util.hpp"
#include "edpo/errors.hpp"
#include "edpo/policy/tabular.hpp"

namespace edpo::eval {
namespace {

namespace fs = std::filesystem;
using detail::check_keys;
using detail::read_opt;
using nlohmann::json;
using trainer::format_double;

constexpr std::uint64_t kTestStream = 0x9E3779B97F4A7C15ULL;

const json& section(const json& j, const char* key) {
  static const json kEmpty = json::object();
  return j.contains(key) ? j.at(key) : kEmpty;
}

TaskConfig task_from_json(const json& j) {
  check_keys(j,
             {"vocab_size", "max_len", "eos", "num_prompts", "policy",
              "reference", "reward", "data"},
             "task");
  TaskConfig t;
  read_opt(j, "vocab_size", t.vocab_size);
  read_opt(j, "max_len", t.max_len);
  read_opt(j, "eos", t.eos);
  read_opt(j, "num_prompts", t.num_prompts);
  const json& p = section(j, "policy");
  check_keys(p, {"kind", "dim", "layers"}, "task.policy");
  std::string kind = "tabular";
  read_opt(p, "kind", kind);
  if (kind == "tabular") {
    t.policy = PolicyKind::kTabular;
  } else if (kind == "neural") {
    t.policy = PolicyKind::kNeural;
  } else {
    throw ConfigError("unknown policy kind '" + kind + "'");
  }
  read_opt(p, "dim", t.neural.dim);
  read_opt(p, "layers", t.neural.layers);
  const json& r = section(j, "reference");
  check_keys(r, {"init_scale", "seed"}, "task.reference");
  read_opt(r, "init_scale", t.reference_scale);
  read_opt(r, "seed", t.reference_seed);
  const json& w = section(j, "reward");
  check_keys(w, {"scale", "seed"}, "task.reward");
  read_opt(w, "scale", t.reward_scale);
  read_opt(w, "seed", t.reward_seed);
  const json& d = section(j, "data");
  check_keys(d, {"n_train", "n_test", "label_mode", "sampler", "seed"},
             "task.data");
  read_opt(d, "n_train", t.n_train);
  read_opt(d, "n_test", t.n_test);
  std::string mode = "hard";
  read_opt(d, "label_mode", mode);
  t.label_mode = oracle::label_mode_from_string(mode);
  std::string sampler = "reference";
  read_opt(d, "sampler", sampler);
  if (sampler != "reference" && sampler != "uniform") {
    throw ConfigError("task.data.sampler must be 'reference' or 'uniform'");
  }
  t.sample_from_reference = sampler == "reference";
  read_opt(d, "seed", t.data_seed);
  if (t.vocab_size < 2) throw ConfigError("task.vocab_size must be at least 2");
  if (t.max_len < 1) throw ConfigError("task.max_len must be at least 1");
  if (t.num_prompts < 1) throw ConfigError("task.num_prompts must be at least 1");
  if (t.n_train < 1) throw ConfigError("task.data.n_train must be at least 1");
  if (!(t.reference_scale >= 0.0) || !(t.reward_scale >= 0.0)) {
    throw ConfigError("task scales must be non-negative");
  }
  if (t.neural.dim < 1 || t.neural.layers > 16) {
    throw ConfigError("task.policy dim/layers out of range");
  }
  try {
    t.space().validate();
  } catch (const ArgumentError& e) {
    throw ConfigError(std::string("task: ") + e.what());
  }
  return t;
}

json task_to_json(const TaskConfig& t) {
  return {{"vocab_size", t.vocab_size},
          {"max_len", t.max_len},
          {"eos", t.eos},
          {"num_prompts", t.num_prompts},
          {"policy",
           {{"kind", t.policy == PolicyKind::kTabular ? "tabular" : "neural"},
            {"dim", t.neural.dim},
            {"layers", t.neural.layers}}},
          {"reference",
           {{"init_scale", t.reference_scale}, {"seed", t.reference_seed}}},
          {"reward", {{"scale", t.reward_scale}, {"seed", t.reward_seed}}},
          {"data",
           {{"n_train", t.n_train},
            {"n_test", t.n_test},
            {"label_mode", oracle::to_string(t.label_mode)},
            {"sampler", t.sample_from_reference ? "reference" : "uniform"},
            {"seed", t.data_seed}}}};
}

EvalConfig eval_from_json(const json& j) {
  check_keys(j,
             {"kl_mode", "kl_samples", "win_rate", "win_samples", "seed",
              "eps_range", "eps_points"},
             "eval");
  EvalConfig e;
  std::string kl = "exact";
  read_opt(j, "kl_mode", kl);
  e.kl_mode = kl_mode_from_string(kl);
  read_opt(j, "kl_samples", e.kl_samples);
  std::string win = "exact";
  read_opt(j, "win_rate", win);
  if (win != "exact" && win != "mc") {
    throw ConfigError("eval.win_rate must be 'exact' or 'mc'");
  }
  e.exact_win_rate = win == "exact";
  read_opt(j, "win_samples", e.win_samples);
  read_opt(j, "seed", e.seed);
  if (j.contains("eps_range")) {
    std::vector<double> range;
    read_opt(j, "eps_range", range);
    if (range.size() != 2) throw ConfigError("eval.eps_range needs two values");
    e.eps_lo = range[0];
    e.eps_hi = range[1];
  }
  read_opt(j, "eps_points", e.eps_points);
  if (!(e.eps_lo > 0.0 && e.eps_lo < e.eps_hi && e.eps_hi < 1.0)) {
    throw ConfigError("eval.eps_range must satisfy 0 < lo < hi < 1");
  }
  if (e.eps_points < 2) throw ConfigError("eval.eps_points must be at least 2");
  if (e.kl_samples < 1 || e.win_samples < 1) {
    throw ConfigError("eval sample counts must be positive");
  }
  return e;
}

json eval_to_json(const EvalConfig& e) {
  return {{"kl_mode", to_string(e.kl_mode)},
          {"kl_samples", e.kl_samples},
          {"win_rate", e.exact_win_rate ? "exact" : "mc"},
          {"win_samples", e.win_samples},
          {"seed", e.seed},
          {"eps_range", {e.eps_lo, e.eps_hi}},
          {"eps_points", e.eps_points}};
}

SweepConfig sweep_from_json(const json& j) {
  check_keys(j, {"methods", "betas", "eps", "seeds"}, "sweep");
  SweepConfig s;
  read_opt(j, "methods", s.methods);
  read_opt(j, "betas", s.betas);
  read_opt(j, "eps", s.eps);
  read_opt(j, "seeds", s.seeds);
  for (const auto& m : s.methods) trainer::method_from_string(m);
  if (s.methods.empty() || s.betas.empty() || s.eps.empty() || s.seeds.empty()) {
    throw ConfigError("sweep lists must be non-empty");
  }
  for (double b : s.betas) {
    if (!(b > 0.0)) throw ConfigError("sweep.betas must be positive");
  }
  for (double e : s.eps) {
    if (!(e > 0.0 && e < 1.0)) throw ConfigError("sweep.eps must lie in (0, 1)");
  }
  return s;
}

json sweep_to_json(const SweepConfig& s) {
  return {{"methods", s.methods},
          {"betas", s.betas},
          {"eps", s.eps},
          {"seeds", s.seeds}};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot open " + path.string() + " for writing");
  out << text;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw RuntimeFailure("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace

policy::SequenceSpace TaskConfig::space() const {
  policy::SequenceSpace s;
  s.vocab.size = vocab_size;
  if (eos) s.vocab.eos = static_cast<policy::Token>(vocab_size - 1);
  s.num_prompts = num_prompts;
  s.max_len = max_len;
  return s;
}

ExperimentConfig config_from_json(const json& j) {
  check_keys(j, {"schema_version", "name", "task", "train", "eval", "sweep"},
             "config");
  if (!j.contains("schema_version")) {
    throw ConfigError("config is missing schema_version");
  }
  int version = 0;
  read_opt(j, "schema_version", version);
  if (version != kSchemaVersion) {
    throw ConfigError("unsupported schema_version " + std::to_string(version) +
                      " (expected " + std::to_string(kSchemaVersion) + ")");
  }
  ExperimentConfig c;
  read_opt(j, "name", c.name);
  c.task = task_from_json(section(j, "task"));
  c.train = trainer::train_config_from_json(section(j, "train"));
  c.eval = eval_from_json(section(j, "eval"));
  c.sweep = sweep_from_json(section(j, "sweep"));
  return c;
}

json to_json(const ExperimentConfig& c) {
  return {{"schema_version", kSchemaVersion},
          {"name", c.name},
          {"task", task_to_json(c.task)},
          {"train", trainer::to_json(c.train)},
          {"eval", eval_to_json(c.eval)},
          {"sweep", sweep_to_json(c.sweep)}};
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

std::string config_hash(const ExperimentConfig& config) {
  const std::string text = to_json(config).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Task build_task(const TaskConfig& config) {
  const policy::SequenceSpace space = config.space();
  std::unique_ptr<policy::Policy> reference;
  if (config.policy == PolicyKind::kTabular) {
    reference = std::make_unique<policy::TabularPolicy>(policy::TabularPolicy::random(
        space, config.reference_scale, config.reference_seed));
  } else {
    policy::NeuralConfig n = config.neural;
    n.init_scale = config.reference_scale;
    n.seed = config.reference_seed;
    reference = std::make_unique<policy::NeuralPolicy>(space, n);
  }
  return {space, std::move(reference),
          oracle::RewardSpec::random_additive(space, config.reward_scale,
                                              config.reward_seed)};
}

std::vector<std::size_t> all_prompts(const policy::SequenceSpace& space) {
  std::vector<std::size_t> prompts(space.num_prompts);
  std::iota(prompts.begin(), prompts.end(), std::size_t{0});
  return prompts;
}

DataSplits generate_data(const TaskConfig& config, const Task& task) {
  const auto prompts = all_prompts(task.space);
  const oracle::ResponseSampler sampler =
      config.sample_from_reference ? oracle::policy_sampler(*task.reference)
                                   : oracle::uniform_sampler(task.space);
  oracle::SampleOptions options;
  options.mode = config.label_mode;
  policy::Rng train_rng(config.data_seed);
  policy::Rng test_rng(config.data_seed ^ kTestStream);
  DataSplits out{
      oracle::sample_preferences(task.reward, prompts, sampler, config.n_train,
                                 options, train_rng),
      config.n_test > 0
          ? oracle::sample_preferences(task.reward, prompts, sampler,
                                       config.n_test, options, test_rng)
          : oracle::Dataset{task.space, json::object(), {}}};
  const json generator = {
      {"label_mode", oracle::to_string(config.label_mode)},
      {"sampler", config.sample_from_reference ? "reference" : "uniform"},
      {"reward_scale", config.reward_scale},
      {"reward_seed", config.reward_seed},
      {"data_seed", config.data_seed}};
  out.train.generator = generator;
  out.train.generator["split"] = "train";
  out.test.generator = generator;
  out.test.generator["split"] = "test";
  return out;
}

EvalReport evaluate(const ExperimentConfig& config, const Task& task,
                    const policy::Policy& policy,
                    const trainer::TrainResult& train,
                    const oracle::Dataset& test) {
  const auto prompts = all_prompts(task.space);
  const EvalConfig& e = config.eval;
  EvalReport r;
  r.method = trainer::to_string(config.train.method);
  r.beta0 = config.train.beta;
  r.eps = config.train.eps;
  r.seed = config.train.seed;
  r.config_hash = config_hash(config);
  r.beta_final = train.final_beta;
  r.beta_min_seen = config.train.beta;
  r.beta_max_seen = config.train.beta;
  for (const auto& m : train.metrics) {
    r.beta_min_seen = std::min(r.beta_min_seen, m.beta_after);
    r.beta_max_seen = std::max(r.beta_max_seen, m.beta_after);
  }
  r.forward_kl = forward_kl(*task.reference, policy, prompts, e.kl_mode,
                            e.kl_samples, e.seed);
  if (e.exact_win_rate) {
    r.win_rate = exact_win_rate(oracle::exact_policy_of(policy),
                                oracle::exact_policy_of(*task.reference),
                                task.reward, prompts);
  } else {
    policy::Rng rng(e.seed);
    r.win_rate = win_rate(oracle::policy_sampler(policy),
                          oracle::policy_sampler(*task.reference), task.reward,
                          prompts, rng, e.win_samples);
  }
  const auto triplets = test.triplets();
  if (!triplets.empty()) {
    double sum = 0.0;
    for (const auto& t : triplets) {
      sum += dpo::implicit_reward_margin(t, policy, *task.reference,
                                         config.train.beta);
    }
    r.margin_mean = sum / static_cast<double>(triplets.size());
    r.eps_bounds = epsilon_bound_summary(policy, *task.reference, triplets,
                                         e.eps_lo, e.eps_hi, e.eps_points);
  }
  const double total = static_cast<double>(
      train.occurrences[0] + train.occurrences[1] + train.occurrences[2]);
  if (total > 0) {
    r.frac_minus = static_cast<double>(train.occurrences[0]) / total;
    r.frac_zero = static_cast<double>(train.occurrences[1]) / total;
    r.frac_plus = static_cast<double>(train.occurrences[2]) / total;
  }
  return r;
}

RunSummary run_experiment(const ExperimentConfig& config,
                          const oracle::Dataset& train,
                          const oracle::Dataset& test, const fs::path& dir,
                          const fs::path& train_path, const fs::path& test_path) {
  config.train.validate();
  Task task = build_task(config.task);
  if (train.space != task.space || test.space != task.space) {
    throw ConfigError("dataset sequence space does not match the task");
  }
  fs::create_directories(dir);
  const std::string hash = config_hash(config);
  write_text(dir / "config.json", to_json(config).dump(2) + "\n");
  policy::save_policy(dir / "reference.ckpt", *task.reference,
                      {{"config_hash", hash}});

  fs::path train_file = train_path;
  fs::path test_file = test_path;
  if (train_file.empty()) {
    train_file = dir / "train.jsonl";
    oracle::write_dataset(train_file, train);
  }
  if (test_file.empty()) {
    test_file = dir / "test.jsonl";
    oracle::write_dataset(test_file, test);
  }

  trainer::RunOptions options;
  if (config.train.checkpoint_every > 0.0) options.checkpoint_dir = dir / "checkpoints";
  const auto triplets = train.triplets();
  RunSummary summary;
  summary.dir = dir;
  summary.train = trainer::run_training(config.train, triplets, *task.reference,
                                        options);
  const trainer::MetricsProvenance provenance{
      trainer::to_string(config.train.method), config.train.seed, hash};
  trainer::write_metrics_csv(dir / "metrics.csv", summary.train.metrics,
                             provenance, config.train.record_wall_time);
  trainer::write_timing_csv(dir / "timing.csv", summary.train.metrics);
  policy::save_policy(dir / "final.ckpt", *summary.train.policy,
                      {{"config_hash", hash},
                       {"seed", std::to_string(config.train.seed)},
                       {"method", provenance.method}});

  summary.report = evaluate(config, task, *summary.train.policy, summary.train, test);
  {
    std::ofstream out(dir / "eval.csv");
    write_eval_csv(out, std::span<const EvalReport>(&summary.report, 1));
  }
  const auto& occ = summary.train.occurrences;
  const json s = {
      {"method", provenance.method},
      {"seed", config.train.seed},
      {"config_hash", hash},
      {"beta0", config.train.beta},
      {"eps", config.train.eps},
      {"steps", summary.train.metrics.size()},
      {"final_beta", summary.train.final_beta},
      {"beta_min_seen", summary.report.beta_min_seen},
      {"beta_max_seen", summary.report.beta_max_seen},
      {"clamp_events", summary.train.clamp_events},
      {"occurrences", {{"minus", occ[0]}, {"zero", occ[1]}, {"plus", occ[2]}}},
      {"train_data", fs::relative(fs::absolute(train_file), fs::absolute(dir)).string()},
      {"test_data", fs::relative(fs::absolute(test_file), fs::absolute(dir)).string()}};
  json out = s;
  if (config.train.method == trainer::Method::kBetaDpo) {
    out["note"] =
        "betadpo is a simplified batch-level comparator, not a published rule";
  }
  write_text(dir / "summary.json", out.dump(2) + "\n");
  return summary;
}

std::string run_name(const std::string& method, double beta0, double eps,
                     std::uint64_t seed) {
  return method + "_beta" + format_double(beta0) + "_eps" + format_double(eps) +
         "_seed" + std::to_string(seed);
}

std::vector<SweepEntry> run_sweep(const ExperimentConfig& config,
                                  const fs::path& out, std::size_t jobs) {
  const Task task = build_task(config.task);
  const DataSplits data = generate_data(config.task, task);
  fs::create_directories(out / "data");
  fs::create_directories(out / "runs");
  const fs::path train_path = out / "data" / "train.jsonl";
  const fs::path test_path = out / "data" / "test.jsonl";
  oracle::write_dataset(train_path, data.train);
  oracle::write_dataset(test_path, data.test);

  std::vector<ExperimentConfig> grid;
  for (const auto& method : config.sweep.methods) {
    const bool uses_eps = trainer::method_from_string(method) ==
                          trainer::Method::kEpsilonDpo;
    const std::vector<double> eps_list =
        uses_eps ? config.sweep.eps : std::vector<double>{config.train.eps};
    for (double beta : config.sweep.betas) {
      for (double eps : eps_list) {
        for (std::uint64_t seed : config.sweep.seeds) {
          ExperimentConfig c = config;
          c.train.method = trainer::method_from_string(method);
          c.train.beta = beta;
          c.train.betadpo.beta0 = beta;
          c.train.eps = eps;
          c.train.seed = seed;
          grid.push_back(std::move(c));
        }
      }
    }
  }

  std::vector<SweepEntry> entries(grid.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t k = next.fetch_add(1); k < grid.size(); k = next.fetch_add(1)) {
      const ExperimentConfig& c = grid[k];
      SweepEntry& e = entries[k];
      e.method = trainer::to_string(c.train.method);
      e.beta0 = c.train.beta;
      e.eps = c.train.eps;
      e.seed = c.train.seed;
      e.run = run_name(e.method, e.beta0, e.eps, e.seed);
      try {
        e.config_hash = config_hash(c);
        run_experiment(c, data.train, data.test, out / "runs" / e.run,
                       train_path, test_path);
        e.status = "ok";
      } catch (const std::exception& ex) {
        e.status = std::string("failed: ") + ex.what();
        std::replace(e.status.begin(), e.status.end(), ',', ';');
        std::replace(e.status.begin(), e.status.end(), '\n', ' ');
      }
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(jobs, grid.size()));
  std::vector<std::thread> threads;
  for (std::size_t t = 1; t < n_threads; ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();

  std::sort(entries.begin(), entries.end(),
            [](const SweepEntry& a, const SweepEntry& b) { return a.run < b.run; });
  std::ofstream manifest(out / "manifest.csv");
  manifest << "run,method,beta0,eps,seed,status,config_hash\n";
  for (const auto& e : entries) {
    manifest << e.run << ',' << e.method << ',' << format_double(e.beta0) << ','
             << format_double(e.eps) << ',' << e.seed << ',' << e.status << ','
             << e.config_hash << '\n';
  }
  return entries;
}

AnalysisOutputs analyze_runs(const fs::path& runs_dir, const fs::path& out) {
  std::vector<fs::path> dirs;
  if (fs::is_directory(runs_dir)) {
    for (const auto& entry : fs::recursive_directory_iterator(runs_dir)) {
      if (entry.is_regular_file() && entry.path().filename() == "summary.json" &&
          fs::exists(entry.path().parent_path() / "eval.csv")) {
        dirs.push_back(entry.path().parent_path());
      }
    }
  }
  if (dirs.empty()) throw NoRunsFound("no runs found under " + runs_dir.string());
  std::sort(dirs.begin(), dirs.end());
  fs::create_directories(out);

  AnalysisOutputs result;
  result.runs = dirs.size();
  std::ofstream occurrence(out / "occurrence.csv");
  occurrence << "run,method,beta0,eps,seed,frac_minus,frac_zero,frac_plus,config_hash\n";
  std::ofstream bounds(out / "eps_bounds.csv");
  bounds << "run,method,beta0,eps,seed,count_down,mean_down,count_up,mean_up,config_hash\n";
  std::ofstream mono(out / "monotonicity.csv");
  mono << "run,method,beta0,eps,seed,direction,count,mean,std,ci_low,ci_high,config_hash\n";

  for (const auto& dir : dirs) {
    const std::string run = fs::relative(dir, runs_dir).string();
    std::ifstream in(dir / "eval.csv");
    const auto reports = read_eval_csv(in);
    if (reports.empty()) throw ParseError((dir / "eval.csv").string() + ": no rows");
    const EvalReport& r = reports.front();
    const std::string prefix = run + ',' + r.method + ',' + format_double(r.beta0) +
                               ',' + format_double(r.eps) + ',' +
                               std::to_string(r.seed) + ',';
    ParetoPoint p;
    p.kl = r.forward_kl;
    p.win_rate = r.win_rate;
    p.method = r.method;
    p.beta0 = r.beta0;
    p.eps = r.eps;
    p.seed = r.seed;
    p.config_hash = r.config_hash;
    result.points.push_back(p);
    occurrence << prefix << format_double(r.frac_minus) << ','
               << format_double(r.frac_zero) << ',' << format_double(r.frac_plus)
               << ',' << r.config_hash << '\n';
    bounds << prefix << r.eps_bounds.count_down << ','
           << format_double(r.eps_bounds.mean_down) << ','
           << r.eps_bounds.count_up << ',' << format_double(r.eps_bounds.mean_up)
           << ',' << r.config_hash << '\n';

    const json summary = read_json(dir / "summary.json");
    const auto policy = policy::load_policy(dir / "final.ckpt");
    const auto reference = policy::load_policy(dir / "reference.ckpt");
    const fs::path test_path = dir / summary.at("test_data").get<std::string>();
    const oracle::Dataset test = oracle::read_dataset(test_path);
    const auto triplets = test.triplets();
    const MonotonicityReport report =
        margin_by_monotonicity(*policy, *reference, triplets, r.beta0, r.eps);
    for (const MarginClass& c : report.classes) {
      mono << prefix << c.direction << ',' << c.count << ',';
      if (c.present()) {
        mono << format_double(c.mean) << ',' << format_double(c.std_dev) << ','
             << format_double(c.ci_low) << ',' << format_double(c.ci_high);
      } else {
        mono << ",,,";
      }
      mono << ',' << r.config_hash << '\n';
    }
  }
  {
    std::ofstream csv(out / "pareto.csv");
    write_pareto_csv(csv, result.points);
    std::ofstream svg(out / "pareto.svg");
    write_pareto_svg(svg, result.points);
  }
  mark_dominated(result.points);
  return result;
}

}  // namespace edpo::eval
