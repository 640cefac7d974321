#pragma once

#include <fstream>
#include <json.hpp>
#include <string>

#include "merl/ppo.hpp"

namespace merl {

// One update's logged statistics. Serialized as one JSON object per line.
// Wall-clock time is deliberately NOT part of this record: metrics files
// are byte-deterministic for a given (config, seed); timings go to a
// sidecar stream instead.
struct MetricsRecord {
  long step = 0;
  long update = 0;
  double mean_return = 0.0;  // rolling mean over the last 100 episodes
  long episodes = 0;
  UpdateStats stats;
  double vex_mean = 0.0, vex_min = 0.0, vex_max = 0.0;
  double vex_masked_frac = 0.0;
  std::string phase = "single";  // single | pre | post | control
};

inline nlohmann::ordered_json metrics_to_json(const MetricsRecord& r) {
  nlohmann::ordered_json j;
  j["step"] = r.step;
  j["update"] = r.update;
  j["mean_return"] = r.mean_return;
  j["episodes"] = r.episodes;
  j["policy_loss"] = r.stats.policy_loss;
  j["value_mse"] = r.stats.value_mse;
  j["ve_loss"] = r.stats.ve_loss;
  j["fs_loss"] = r.stats.fs_loss;
  j["ratio_mean"] = r.stats.ratio_mean;
  j["ratio_max"] = r.stats.ratio_max;
  j["clip_fraction"] = r.stats.clip_fraction;
  j["grad_norm_policy"] = r.stats.grad_norm_policy;
  j["grad_norm_value"] = r.stats.grad_norm_value;
  j["entropy"] = r.stats.entropy;
  j["vex_mean"] = r.vex_mean;
  j["vex_min"] = r.vex_min;
  j["vex_max"] = r.vex_max;
  j["vex_masked_frac"] = r.vex_masked_frac;
  j["phase"] = r.phase;
  return j;
}

inline MetricsRecord metrics_from_json(const nlohmann::ordered_json& j) {
  MetricsRecord r;
  r.step = j.at("step").get<long>();
  r.update = j.at("update").get<long>();
  r.mean_return = j.at("mean_return").get<double>();
  r.episodes = j.at("episodes").get<long>();
  r.stats.policy_loss = j.at("policy_loss").get<double>();
  r.stats.value_mse = j.at("value_mse").get<double>();
  r.stats.ve_loss = j.at("ve_loss").get<double>();
  r.stats.fs_loss = j.at("fs_loss").get<double>();
  r.stats.ratio_mean = j.at("ratio_mean").get<double>();
  r.stats.ratio_max = j.at("ratio_max").get<double>();
  r.stats.clip_fraction = j.at("clip_fraction").get<double>();
  r.stats.grad_norm_policy = j.at("grad_norm_policy").get<double>();
  r.stats.grad_norm_value = j.at("grad_norm_value").get<double>();
  r.stats.entropy = j.at("entropy").get<double>();
  r.vex_mean = j.at("vex_mean").get<double>();
  r.vex_min = j.at("vex_min").get<double>();
  r.vex_max = j.at("vex_max").get<double>();
  r.vex_masked_frac = j.at("vex_masked_frac").get<double>();
  r.phase = j.at("phase").get<std::string>();
  return r;
}

class MetricsWriter {
 public:
  explicit MetricsWriter(const std::string& path) : out_(path) {
    if (!out_) throw UsageError("cannot open metrics file for writing: " + path);
  }
  void write(const MetricsRecord& r) { out_ << metrics_to_json(r).dump() << "\n"; }
  void flush() { out_.flush(); }

 private:
  std::ofstream out_;
};

inline std::vector<MetricsRecord> read_metrics(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open metrics file: " + path);
  std::vector<MetricsRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(metrics_from_json(nlohmann::ordered_json::parse(line)));
  }
  return out;
}

// Per-update wall times, one JSON line per update. Kept out of the metrics
// stream so determinism checks can compare whole files.
class TimingWriter {
 public:
  explicit TimingWriter(const std::string& path) : out_(path) {
    if (!out_) throw UsageError("cannot open timing file for writing: " + path);
  }
  void write(long update, double iter_ms, double learn_ms) {
    nlohmann::ordered_json j;
    j["update"] = update;
    j["iter_ms"] = iter_ms;
    j["learn_ms"] = learn_ms;
    out_ << j.dump() << "\n";
  }

 private:
  std::ofstream out_;
};

struct TimingRecord {
  long update = 0;
  double iter_ms = 0.0;
  double learn_ms = 0.0;
};

inline std::vector<TimingRecord> read_timings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open timing file: " + path);
  std::vector<TimingRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::ordered_json::parse(line);
    out.push_back({j.at("update").get<long>(), j.at("iter_ms").get<double>(),
                   j.at("learn_ms").get<double>()});
  }
  return out;
}

}  // namespace merl
