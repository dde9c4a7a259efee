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

#include "edpo/trainer/trainer.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "common/json_util.hpp"
#include "edpo/errors.hpp"

namespace edpo::trainer {
namespace {

using detail::check_keys;
using detail::read_opt;
using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

bool open_unit(double v) { return v > 0.0 && v < 1.0; }

void stack_rows(std::span<const numerics::Var> rows, numerics::Tensor& out) {
  const std::size_t v = rows.empty() ? 0 : rows[0].value().size();
  if (out.rank() != 2 || out.rows() != rows.size() || out.cols() != v) {
    out = numerics::Tensor({rows.size(), v});
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i].value();
    for (std::size_t k = 0; k < v; ++k) out.at(i, k) = r[k];
  }
}

std::string describe(const PreferenceTriplet& t, double z, double gamma,
                     double beta, double loss) {
  std::ostringstream os;
  os << "non-finite loss at instance prompt=" << t.prompt
     << " chosen=" << policy::format_tokens(t.chosen)
     << " rejected=" << policy::format_tokens(t.rejected)
     << " label=" << format_double(t.label) << " z=" << format_double(z)
     << " gamma=" << format_double(gamma) << " beta=" << format_double(beta)
     << " loss=" << format_double(loss);
  return os.str();
}

}  // namespace

Method method_from_string(const std::string& name) {
  if (name == "dpo") return Method::kDpo;
  if (name == "edpo") return Method::kEpsilonDpo;
  if (name == "trdpo") return Method::kTrDpo;
  if (name == "betadpo") return Method::kBetaDpo;
  throw ConfigError("unknown method '" + name +
                    "' (expected dpo, edpo, trdpo or betadpo)");
}

std::string to_string(Method method) {
  switch (method) {
    case Method::kDpo:
      return "dpo";
    case Method::kEpsilonDpo:
      return "edpo";
    case Method::kTrDpo:
      return "trdpo";
    case Method::kBetaDpo:
      return "betadpo";
  }
  return "dpo";
}

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("train.epochs must be at least 1");
  if (batch_size == 0) throw ConfigError("train.batch_size must be at least 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("train.learning_rate must be positive");
  }
  if (!(warmup_ratio >= 0.0 && warmup_ratio < 1.0)) {
    throw ConfigError("train.warmup_ratio must lie in [0, 1)");
  }
  if (!(beta > 0.0) || !std::isfinite(beta)) {
    throw ConfigError("train.beta must be positive");
  }
  if (!open_unit(eps)) throw ConfigError("train.eps must lie in (0, 1)");
  if (!open_unit(eps_c())) throw ConfigError("train.eps_criterion must lie in (0, 1)");
  if (!open_unit(eps_s())) throw ConfigError("train.eps_step must lie in (0, 1)");
  const double lo = beta_min.value_or(beta / 10.0);
  const double hi = beta_max.value_or(beta * 10.0);
  if (!(lo > 0.0 && lo <= beta && beta <= hi)) {
    throw ConfigError("beta clamp bounds must satisfy 0 < beta_min <= beta <= beta_max");
  }
  if (!(checkpoint_every >= 0.0) || !std::isfinite(checkpoint_every)) {
    throw ConfigError("train.checkpoint_every must be non-negative");
  }
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 &&
        adam.beta2 < 1.0 && adam.eps > 0.0 && adam.weight_decay >= 0.0)) {
    throw ConfigError("invalid adam settings");
  }
  trdpo.validate();
  baselines::BetaDpoConfig b = betadpo;
  b.beta0 = beta;
  b.validate();
}

nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json j = {
      {"method", to_string(c.method)},
      {"epochs", c.epochs},
      {"batch_size", c.batch_size},
      {"learning_rate", c.learning_rate},
      {"scheduler", c.scheduler == Scheduler::kCosine ? "cosine" : "constant"},
      {"warmup_ratio", c.warmup_ratio},
      {"seed", c.seed},
      {"beta", c.beta},
      {"eps", c.eps},
      {"trdpo",
       {{"mode", baselines::to_string(c.trdpo.mode)},
        {"tau", c.trdpo.tau},
        {"alpha", c.trdpo.alpha}}},
      {"betadpo",
       {{"momentum", c.betadpo.momentum},
        {"sensitivity", c.betadpo.sensitivity}}},
      {"adam",
       {{"beta1", c.adam.beta1},
        {"beta2", c.adam.beta2},
        {"eps", c.adam.eps},
        {"weight_decay", c.adam.weight_decay}}},
      {"checkpoint_every", c.checkpoint_every},
      {"record_wall_time", c.record_wall_time}};
  if (c.eps_criterion) j["eps_criterion"] = *c.eps_criterion;
  if (c.eps_step) j["eps_step"] = *c.eps_step;
  if (c.beta_min) j["beta_min"] = *c.beta_min;
  if (c.beta_max) j["beta_max"] = *c.beta_max;
  return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  check_keys(j,
             {"method", "epochs", "batch_size", "learning_rate", "scheduler",
              "warmup_ratio", "seed", "beta", "eps", "eps_criterion",
              "eps_step", "beta_min", "beta_max", "trdpo", "betadpo", "adam",
              "checkpoint_every", "record_wall_time"},
             "train");
  TrainConfig c;
  std::string method = to_string(c.method);
  read_opt(j, "method", method);
  c.method = method_from_string(method);
  read_opt(j, "epochs", c.epochs);
  read_opt(j, "batch_size", c.batch_size);
  read_opt(j, "learning_rate", c.learning_rate);
  std::string scheduler = "cosine";
  read_opt(j, "scheduler", scheduler);
  if (scheduler == "cosine") {
    c.scheduler = Scheduler::kCosine;
  } else if (scheduler == "constant") {
    c.scheduler = Scheduler::kConstant;
  } else {
    throw ConfigError("unknown scheduler '" + scheduler + "'");
  }
  read_opt(j, "warmup_ratio", c.warmup_ratio);
  read_opt(j, "seed", c.seed);
  read_opt(j, "beta", c.beta);
  read_opt(j, "eps", c.eps);
  read_opt(j, "eps_criterion", c.eps_criterion);
  read_opt(j, "eps_step", c.eps_step);
  read_opt(j, "beta_min", c.beta_min);
  read_opt(j, "beta_max", c.beta_max);
  read_opt(j, "checkpoint_every", c.checkpoint_every);
  read_opt(j, "record_wall_time", c.record_wall_time);
  if (j.contains("trdpo")) {
    const auto& t = j.at("trdpo");
    check_keys(t, {"mode", "tau", "alpha"}, "train.trdpo");
    std::string mode = "hard";
    read_opt(t, "mode", mode);
    c.trdpo.mode = baselines::trdpo_mode_from_string(mode);
    read_opt(t, "tau", c.trdpo.tau);
    read_opt(t, "alpha", c.trdpo.alpha);
  }
  if (j.contains("betadpo")) {
    const auto& b = j.at("betadpo");
    check_keys(b, {"momentum", "sensitivity"}, "train.betadpo");
    read_opt(b, "momentum", c.betadpo.momentum);
    read_opt(b, "sensitivity", c.betadpo.sensitivity);
  }
  if (j.contains("adam")) {
    const auto& a = j.at("adam");
    check_keys(a, {"beta1", "beta2", "eps", "weight_decay"}, "train.adam");
    read_opt(a, "beta1", c.adam.beta1);
    read_opt(a, "beta2", c.adam.beta2);
    read_opt(a, "eps", c.adam.eps);
    read_opt(a, "weight_decay", c.adam.weight_decay);
  }
  c.betadpo.beta0 = c.beta;
  c.validate();
  return c;
}

double scheduled_lr(const TrainConfig& config, std::uint64_t step,
                    std::uint64_t total_steps) {
  if (config.scheduler == Scheduler::kConstant) return config.learning_rate;
  const auto warmup = static_cast<std::uint64_t>(
      std::ceil(config.warmup_ratio * static_cast<double>(total_steps)));
  if (step < warmup) {
    return config.learning_rate * static_cast<double>(step + 1) /
           static_cast<double>(warmup);
  }
  const double span = static_cast<double>(std::max<std::uint64_t>(1, total_steps - warmup));
  const double progress = static_cast<double>(step - warmup) / span;
  return config.learning_rate * 0.5 * (1.0 + std::cos(M_PI * progress));
}

Trainer::Trainer(TrainConfig config, const Policy& initial_reference,
                 std::size_t dataset_size)
    : config_(std::move(config)),
      reference_(initial_reference.clone()),
      policy_(initial_reference.clone()),
      cache_(*reference_, dataset_size),
      beta_(config_.beta) {
  config_.betadpo.beta0 = config_.beta;
  config_.validate();
  auto ptrs = policy_->parameter_ptrs();
  adam_ = numerics::make_adam_state(ptrs);
  if (config_.method == Method::kEpsilonDpo) {
    controller_.emplace(config_.beta, config_.eps_c(), config_.eps_s(),
                        config_.beta_min, config_.beta_max);
  }
  if (config_.method == Method::kBetaDpo) betadpo_.emplace(config_.betadpo);
  policy_->reset_forward_passes();
  reference_->reset_forward_passes();
}

std::uint64_t Trainer::clamp_events() const {
  if (controller_) return controller_->clamp_events();
  if (betadpo_) return betadpo_->clamp_events();
  return 0;
}

StepMetrics Trainer::train_step(std::span<const PreferenceTriplet> batch,
                                std::span<const std::size_t> keys, double lr) {
  if (batch.empty()) throw ArgumentError("training batch is empty");
  if (keys.size() != batch.size()) {
    throw ArgumentError("one cache key per batch instance is required");
  }
  const auto start = Clock::now();
  const std::uint64_t policy_passes = policy_->forward_passes();
  const std::uint64_t ref_passes = reference_->forward_passes();
  ++step_;
  StepMetrics m;
  m.step = step_;
  m.beta_before = beta_;
  m.learning_rate = lr;

  const std::size_t n = batch.size();
  const bool epsilon = config_.method == Method::kEpsilonDpo;
  numerics::Tape tape;
  const std::vector<numerics::Var> params = policy_->bind(tape);
  policy_->zero_grad();

  std::vector<numerics::Var> z(n);
  std::vector<double> gamma(n);
  std::vector<epsilon::BetaDecision> decisions;
  std::vector<double> betas(n, beta_);
  double estimate_ms = 0.0;
  dpo::TripletLogits logits;
  if (epsilon) decisions.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const PreferenceTriplet& t = batch[i];
    const auto rows_w =
        policy_->response_logits(tape, params, t.prompt, t.chosen);
    const auto rows_l =
        policy_->response_logits(tape, params, t.prompt, t.rejected);
    z[i] = tape.sub(policy::seq_logprob(tape, rows_w, t.chosen),
                    policy::seq_logprob(tape, rows_l, t.rejected));
    const dpo::ReferenceCache::Entry& entry = cache_.get(keys[i], t);
    gamma[i] = entry.gamma();
    if (epsilon) {
      const auto est_start = Clock::now();
      logits.chosen.tokens = t.chosen;
      logits.rejected.tokens = t.rejected;
      stack_rows(rows_w, logits.chosen.policy);
      stack_rows(rows_l, logits.rejected.policy);
      logits.chosen.reference = entry.chosen_logits;
      logits.rejected.reference = entry.rejected_logits;
      const epsilon::BetaDecision d = controller_->decide(logits, z[i].item());
      decisions.push_back(d);
      betas[i] = d.beta_tilde;
      estimate_ms += elapsed_ms(est_start);
    }
  }
  if (betadpo_) {
    std::vector<double> margins(n);
    for (std::size_t i = 0; i < n; ++i) {
      margins[i] = config_.beta * (z[i].item() - gamma[i]);
    }
    const double b = betadpo_->batch_beta(margins);
    std::fill(betas.begin(), betas.end(), b);
  }

  std::vector<numerics::Var> losses(n);
  for (std::size_t i = 0; i < n; ++i) {
    losses[i] = dpo::dpo_loss(tape, z[i], gamma[i], betas[i], batch[i].label);
  }
  const numerics::Var total = tape.mean(losses);
  if (!std::isfinite(total.item())) {
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite(losses[i].item())) {
        throw RuntimeFailure(describe(batch[i], z[i].item(), gamma[i], betas[i],
                                      losses[i].item()));
      }
    }
    throw RuntimeFailure("non-finite mean loss at step " + std::to_string(step_));
  }
  tape.backward(total);
  auto ptrs = policy_->parameter_ptrs();
  numerics::adam_step(ptrs, adam_, lr, config_.adam);

  m.loss = total.item();
  double margin_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    margin_sum += betas[i] * (z[i].item() - gamma[i]);
  }
  m.margin_mean = margin_sum / static_cast<double>(n);

  std::array<std::uint64_t, 3> batch_counts{0, n, 0};
  switch (config_.method) {
    case Method::kEpsilonDpo: {
      const auto est_start = Clock::now();
      batch_counts = {0, 0, 0};
      for (const auto& d : decisions) {
        batch_counts[static_cast<int>(d.direction) + 1] += 1;
      }
      beta_ = controller_->update(decisions);
      estimate_ms += elapsed_ms(est_start);
      break;
    }
    case Method::kTrDpo:
      if (baselines::trdpo_maybe_update(*reference_, *policy_, step_,
                                        config_.trdpo)) {
        cache_.invalidate();
      }
      break;
    case Method::kBetaDpo:
      beta_ = betas[0];
      break;
    case Method::kDpo:
      break;
  }
  for (int k = 0; k < 3; ++k) counts_[k] += batch_counts[k];
  const double dn = static_cast<double>(n);
  m.frac_minus = static_cast<double>(batch_counts[0]) / dn;
  m.frac_zero = static_cast<double>(batch_counts[1]) / dn;
  m.frac_plus = static_cast<double>(batch_counts[2]) / dn;
  m.beta_after = beta_;
  m.fwd_passes_policy = policy_->forward_passes() - policy_passes;
  m.fwd_passes_ref = reference_->forward_passes() - ref_passes;
  m.estimate_ms = estimate_ms;
  m.wall_ms = elapsed_ms(start);
  return m;
}

void shuffle_indices(std::vector<std::size_t>& indices, policy::Rng& rng) {
  for (std::size_t i = indices.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(indices[i - 1], indices[j]);
  }
}

TrainResult run_training(const TrainConfig& config,
                         std::span<const PreferenceTriplet> dataset,
                         const Policy& reference, const RunOptions& options) {
  config.validate();
  if (dataset.empty()) throw ArgumentError("training dataset is empty");
  for (const auto& t : dataset) t.validate(reference.space());
  Trainer trainer(config, reference, dataset.size());
  const std::size_t n = dataset.size();
  const std::size_t per_epoch = (n + config.batch_size - 1) / config.batch_size;
  const std::uint64_t total = config.epochs * per_epoch;

  TrainResult result;
  result.metrics.reserve(total);
  const bool save = !options.checkpoint_dir.empty();
  if (save) std::filesystem::create_directories(options.checkpoint_dir);
  auto checkpoint = [&](std::uint64_t step) {
    const double epoch = static_cast<double>(step) / static_cast<double>(per_epoch);
    char name[32];
    std::snprintf(name, sizeof(name), "step_%06llu.ckpt",
                  static_cast<unsigned long long>(step));
    const auto path = options.checkpoint_dir / name;
    policy::save_policy(path, trainer.policy(),
                        {{"step", std::to_string(step)},
                         {"epoch", format_double(epoch)},
                         {"beta", format_double(trainer.beta())},
                         {"method", to_string(config.method)}});
    result.checkpoints.push_back({step, epoch, path});
  };

  policy::Rng rng(config.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<PreferenceTriplet> batch;
  std::vector<std::size_t> keys;
  std::uint64_t global = 0;
  std::uint64_t last_slot = 0;
  for (std::uint64_t epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_indices(order, rng);
    for (std::size_t b = 0; b < per_epoch; ++b) {
      const std::size_t lo = b * config.batch_size;
      const std::size_t hi = std::min(n, lo + config.batch_size);
      batch.clear();
      keys.clear();
      for (std::size_t k = lo; k < hi; ++k) {
        batch.push_back(dataset[order[k]]);
        keys.push_back(order[k]);
      }
      const double lr = scheduled_lr(config, global, total);
      result.metrics.push_back(trainer.train_step(batch, keys, lr));
      ++global;
      if (save && config.checkpoint_every > 0.0) {
        // Small slack so that e.g. 0.2-epoch slots land on exact boundaries.
        const double progress = static_cast<double>(global) /
                                static_cast<double>(per_epoch);
        const auto slot = static_cast<std::uint64_t>(
            std::floor(progress / config.checkpoint_every + 1e-9));
        if (slot > last_slot) {
          last_slot = slot;
          checkpoint(global);
        }
      }
    }
  }
  if (save && (result.checkpoints.empty() ||
               result.checkpoints.back().step != global)) {
    checkpoint(global);
  }
  result.occurrences = trainer.occurrences();
  result.clamp_events = trainer.clamp_events();
  result.final_beta = trainer.beta();
  result.policy = trainer.policy().clone();
  return result;
}

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) throw InternalError("failed to format a double");
  return std::string(buf, ptr);
}

void write_metrics_csv(std::ostream& out, std::span<const StepMetrics> metrics,
                       const MetricsProvenance& provenance,
                       bool record_wall_time) {
  out << "step,loss,beta,margin_mean,frac_minus,frac_zero,frac_plus,"
         "fwd_passes_policy,fwd_passes_ref,wall_ms,method,seed,config_hash\n";
  for (const StepMetrics& m : metrics) {
    out << m.step << ',' << format_double(m.loss) << ','
        << format_double(m.beta_after) << ',' << format_double(m.margin_mean)
        << ',' << format_double(m.frac_minus) << ','
        << format_double(m.frac_zero) << ',' << format_double(m.frac_plus)
        << ',' << m.fwd_passes_policy << ',' << m.fwd_passes_ref << ','
        << format_double(record_wall_time ? m.wall_ms : 0.0) << ','
        << provenance.method << ',' << provenance.seed << ','
        << provenance.config_hash << '\n';
  }
}

void write_metrics_csv(const std::filesystem::path& path,
                       std::span<const StepMetrics> metrics,
                       const MetricsProvenance& provenance,
                       bool record_wall_time) {
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot open " + path.string() + " for writing");
  write_metrics_csv(out, metrics, provenance, record_wall_time);
}

void write_timing_csv(const std::filesystem::path& path,
                      std::span<const StepMetrics> metrics) {
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot open " + path.string() + " for writing");
  out << "step,wall_ms,estimate_ms\n";
  for (const StepMetrics& m : metrics) {
    out << m.step << ',' << format_double(m.wall_ms) << ','
        << format_double(m.estimate_ms) << '\n';
  }
}

}  // namespace edpo::trainer
