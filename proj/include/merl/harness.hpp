#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "merl/checkpoint.hpp"
#include "merl/config.hpp"
#include "merl/env/registry.hpp"
#include "merl/gradsuite.hpp"
#include "merl/metrics.hpp"

namespace merl {

struct RunResult {
  std::string run_dir;
  std::string metrics_path;
  double final_score = 0.0;
  long episodes = 0;
  long updates = 0;
  bool failed = false;
  std::string error;
  // transfer continuity hashes (0 unless this run switched tasks)
  std::uint64_t hash_pre_switch = 0;
  std::uint64_t hash_post_switch = 0;
};

namespace detail {

struct TrainSpec {
  std::string start_env;
  long total_steps = 0;
  long switch_at = -1;          // global step at which the env swaps
  std::string switch_env_id;    // target of the swap
  long step_offset = 0;         // added to recorded steps (control alignment)
  std::string pre_phase = "single";
  std::string post_phase = "post";
};

inline double ms_between(std::chrono::steady_clock::time_point a,
                         std::chrono::steady_clock::time_point b) {
  return std::chrono::duration<double, std::milli>(b - a).count();
}

// The full training loop behind every harness entry point. Deterministic in
// (cfg, seed): metrics, checkpoints and the summary depend on nothing else;
// wall-clock goes only to the timing sidecar.
inline RunResult train_run(const ExperimentConfig& cfg, std::uint64_t seed,
                           const std::string& run_dir, const TrainSpec& ts) {
  namespace fs = std::filesystem;
  fs::create_directories(run_dir);

  RunResult result;
  result.run_dir = run_dir;
  result.metrics_path = run_dir + "/metrics.jsonl";

  auto probe = env::make_env(ts.start_env, cfg.env_overrides);
  AgentParams params =
      make_agent(probe->observation_spec(), probe->action_spec(), cfg.arch, Rng::mix(seed, 0xA6),
                 cfg.hidden, cfg.depth, cfg.scale_observations);
  AgentOptimizers opt = make_optimizers(params);
  RolloutCollector collector(env::env_factory(ts.start_env, cfg.env_overrides),
                             cfg.hyper.num_actors,
                             Rng::mix(seed, 0xC0));
  Rng shuffle(Rng::mix(seed, 0x51));

  const long n_per_update = static_cast<long>(cfg.hyper.num_actors) * cfg.hyper.horizon;
  const long updates = std::max<long>(1, (ts.total_steps + n_per_update - 1) / n_per_update);
  result.updates = updates;

  MetricsWriter metrics(result.metrics_path);
  TimingWriter timing(run_dir + "/timing.jsonl");

  bool switched = false;
  std::size_t window_start = 0;  // episode-return index where the current phase began

  auto rolling = [&](std::size_t window) {
    const auto& returns = collector.episode_returns();
    if (returns.size() <= window_start) return 0.0;
    const std::size_t avail = returns.size() - window_start;
    const std::size_t n = std::min(window, avail);
    double s = 0.0;
    for (std::size_t i = returns.size() - n; i < returns.size(); ++i) s += returns[i];
    return s / static_cast<double>(n);
  };

  auto finish_summary = [&](bool failed, const std::string& error) {
    result.failed = failed;
    result.error = error;
    result.episodes = static_cast<long>(collector.episode_returns().size());
    result.final_score = rolling(100);
    Json s;
    s["format"] = "merl-summary-v1";
    s["env"] = ts.start_env;
    s["transfer_env"] = ts.switch_env_id;
    s["profile"] = cfg.profile;
    s["arch"] = cfg.arch == Arch::Separate ? "separate" : "shared_trunk";
    s["heads"] = {{"ve", cfg.heads.ve}, {"fs", cfg.heads.fs}};
    s["c_ve"] = cfg.hyper.c_ve;
    s["c_fs"] = cfg.hyper.c_fs;
    s["seed"] = seed;
    s["total_steps"] = ts.total_steps;
    s["updates"] = updates;
    s["episodes"] = result.episodes;
    s["final_score"] = result.final_score;
    s["param_hash_final"] = param_hash(params);
    if (ts.switch_at >= 0) {
      s["transfer"] = {{"switch_step", ts.switch_at},
                       {"param_hash_pre_switch", result.hash_pre_switch},
                       {"param_hash_post_switch", result.hash_post_switch}};
    } else {
      s["transfer"] = nullptr;
    }
    s["failed"] = failed;
    if (failed) s["error"] = error;
    std::ofstream out(run_dir + "/summary.json");
    out << s.dump(1) << "\n";
  };

  try {
    for (long k = 1; k <= updates; ++k) {
      const long completed = (k - 1) * n_per_update;
      if (ts.switch_at >= 0 && !switched && completed >= ts.switch_at) {
        result.hash_pre_switch = param_hash(params);
        collector.switch_env(env::env_factory(ts.switch_env_id, cfg.env_overrides));
        result.hash_post_switch = param_hash(params);
        switched = true;
        window_start = collector.episode_returns().size();
      }

      const auto t0 = std::chrono::steady_clock::now();
      RolloutBatch batch = collector.collect(params, cfg.hyper.horizon);
      const PreparedTargets prep = prepare_batch(batch, cfg.hyper, cfg.features);
      const auto t1 = std::chrono::steady_clock::now();
      const UpdateStats stats =
          update(batch, params, opt, cfg.hyper, cfg.features, cfg.heads, prep.targets, shuffle);
      const auto t2 = std::chrono::steady_clock::now();

      MetricsRecord rec;
      rec.step = ts.step_offset + k * n_per_update;
      rec.update = k;
      rec.mean_return = rolling(100);
      rec.episodes = static_cast<long>(collector.episode_returns().size());
      rec.stats = stats;
      rec.vex_mean = prep.targets.vex_mean;
      rec.vex_min = prep.targets.vex_min;
      rec.vex_max = prep.targets.vex_max;
      rec.vex_masked_frac = prep.targets.masked_fraction;
      rec.phase = ts.switch_at < 0 ? ts.pre_phase : (switched ? ts.post_phase : "pre");
      metrics.write(rec);
      metrics.flush();
      timing.write(k, ms_between(t0, t2), ms_between(t1, t2));

      if (cfg.checkpoint_every > 0 && k % cfg.checkpoint_every == 0) {
        char name[64];
        std::snprintf(name, sizeof(name), "/checkpoint_%06ld.json", k);
        save_checkpoint(params, run_dir + name);
      }
    }
  } catch (const std::exception& e) {
    std::ofstream marker(run_dir + "/FAILED");
    marker << e.what() << "\n";
    finish_summary(true, e.what());
    throw;
  }

  save_checkpoint(params, run_dir + "/checkpoint_final.json");
  finish_summary(false, "");
  return result;
}

}  // namespace detail

// Plain single-task training run.
inline RunResult run_experiment(const ExperimentConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  detail::TrainSpec ts;
  ts.start_env = cfg.env_id;
  ts.total_steps = cfg.total_steps;
  const std::string dir = cfg.out_dir + "/train_seed" + std::to_string(seed);
  return detail::train_run(cfg, seed, dir, ts);
}

inline const std::vector<std::pair<std::string, HeadToggles>>& ablation_variants() {
  static const std::vector<std::pair<std::string, HeadToggles>> v = {
      {"none", {false, false}},
      {"ve", {true, false}},
      {"fs", {false, true}},
      {"vefs", {true, true}}};
  return v;
}

// 4 head-toggle variants x all configured seeds, isolated per run: one
// failure does not stop the grid.
inline std::vector<RunResult> run_ablation(const ExperimentConfig& cfg) {
  validate(cfg);
  std::vector<RunResult> results;
  for (std::uint64_t seed : cfg.seeds) {
    for (const auto& [name, toggles] : ablation_variants()) {
      ExperimentConfig arm = cfg;
      arm.heads = toggles;
      detail::TrainSpec ts;
      ts.start_env = cfg.env_id;
      ts.total_steps = cfg.total_steps;
      const std::string dir =
          cfg.out_dir + "/ablate_" + name + "_seed" + std::to_string(seed);
      try {
        results.push_back(detail::train_run(arm, seed, dir, ts));
      } catch (const std::exception& e) {
        RunResult r;
        r.run_dir = dir;
        r.failed = true;
        r.error = e.what();
        results.push_back(std::move(r));
      }
    }
  }
  return results;
}

struct TransferResult {
  RunResult transfer;
  RunResult control;  // fresh parameters, second task only
};

// Mid-training task switch with parameter and optimizer continuity, plus a
// from-scratch control run on the second task covering the post-switch
// window.
inline std::vector<TransferResult> run_transfer(const ExperimentConfig& cfg) {
  validate(cfg);
  if (cfg.transfer_env_id.empty())
    throw ConfigError("run_transfer: config has no transfer_env");
  {
    auto a = env::make_env(cfg.env_id);
    auto b = env::make_env(cfg.transfer_env_id);
    if (a->observation_spec().dim != b->observation_spec().dim ||
        !(a->action_spec() == b->action_spec()))
      throw ConfigError("run_transfer: " + cfg.env_id + " and " + cfg.transfer_env_id +
                        " have incompatible observation/action specs");
  }
  const long switch_at = cfg.switch_step > 0 ? cfg.switch_step : cfg.total_steps / 2;

  std::vector<TransferResult> out;
  for (std::uint64_t seed : cfg.seeds) {
    TransferResult tr;

    detail::TrainSpec ts;
    ts.start_env = cfg.env_id;
    ts.total_steps = cfg.total_steps;
    ts.switch_at = switch_at;
    ts.switch_env_id = cfg.transfer_env_id;
    ts.pre_phase = "pre";
    ts.post_phase = "post";
    tr.transfer = detail::train_run(cfg, seed, cfg.out_dir + "/transfer_seed" + std::to_string(seed), ts);

    detail::TrainSpec cs;
    cs.start_env = cfg.transfer_env_id;
    cs.total_steps = cfg.total_steps - switch_at;
    cs.step_offset = switch_at;
    cs.pre_phase = "control";
    tr.control = detail::train_run(cfg, seed,
                                   cfg.out_dir + "/transfer_control_seed" + std::to_string(seed), cs);
    out.push_back(std::move(tr));
  }
  return out;
}

// ---- seed aggregation ----

struct AggregateSummary {
  std::vector<long> steps;
  Vec mean, stdev;     // across runs, per step bucket
  Vec final_scores;    // per run, input order
  double final_mean = 0.0;
  double final_std = 0.0;  // sample std (n-1); 0 with a warning for one run
  bool single_seed = false;
};

namespace detail {
// mean/std over a sorted copy so aggregation is exactly permutation
// invariant in the run order
inline std::pair<double, double> mean_sample_std(Vec values) {
  std::sort(values.begin(), values.end());
  const double m = mean_of(values);
  if (values.size() < 2) return {m, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - m) * (v - m);
  return {m, std::sqrt(ss / static_cast<double>(values.size() - 1))};
}
}  // namespace detail

inline AggregateSummary aggregate_seeds(const std::vector<std::string>& metrics_files) {
  if (metrics_files.empty()) throw UsageError("aggregate_seeds: no metrics files");
  std::vector<std::vector<MetricsRecord>> runs;
  for (const auto& f : metrics_files) runs.push_back(read_metrics(f));

  AggregateSummary out;
  const std::size_t n_records = runs.front().size();
  for (const auto& r : runs) {
    if (r.size() != n_records)
      throw UsageError("aggregate_seeds: runs have different record counts (misaligned)");
  }
  for (std::size_t i = 0; i < n_records; ++i) {
    const long step = runs.front()[i].step;
    Vec bucket;
    for (const auto& r : runs) {
      if (r[i].step != step)
        throw UsageError("aggregate_seeds: step sequences are misaligned at record " +
                         std::to_string(i));
      bucket.push_back(r[i].mean_return);
    }
    const auto [m, s] = detail::mean_sample_std(bucket);
    out.steps.push_back(step);
    out.mean.push_back(m);
    out.stdev.push_back(s);
  }
  for (const auto& r : runs) out.final_scores.push_back(r.back().mean_return);
  const auto [fm, fs_] = detail::mean_sample_std(out.final_scores);
  out.final_mean = fm;
  out.final_std = fs_;
  out.single_seed = runs.size() == 1;
  return out;
}

inline void write_aggregate_csv(const AggregateSummary& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write csv: " + path);
  out << "step,mean,std\n";
  for (std::size_t i = 0; i < s.steps.size(); ++i)
    out << s.steps[i] << "," << s.mean[i] << "," << s.stdev[i] << "\n";
}

// "task, baseline mean+/-std, other mean+/-std" row in the layout of the
// results table.
inline std::string comparison_row(const std::string& task, const AggregateSummary& baseline,
                                  const AggregateSummary& other) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%s, %.2f+/-%.2f, %.2f+/-%.2f", task.c_str(),
                baseline.final_mean, baseline.final_std, other.final_mean, other.final_std);
  return buf;
}

}  // namespace merl
