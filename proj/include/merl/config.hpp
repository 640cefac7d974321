#pragma once

#include <fstream>
#include <json.hpp>
#include <string>
#include <vector>

#include "merl/env/base.hpp"
#include "merl/ppo.hpp"

namespace merl {

using Json = nlohmann::ordered_json;

// Full description of one experiment. Two preset profiles ship with the
// library: "control" (separate networks, long horizon) and "shared"
// (shared trunk, short horizon, 4 actors), matching the two tuned columns
// of the hyper-parameter tables.
struct ExperimentConfig {
  std::string env_id = "point_mass";
  std::string transfer_env_id;  // second task; empty unless transferring
  env::EnvOverrides env_overrides;  // named env constants, applied to both tasks
  std::string profile = "control";
  Arch arch = Arch::Separate;
  HyperParams hyper;
  FeatureFlags features;
  HeadToggles heads;
  std::vector<std::uint64_t> seeds = {0};
  long total_steps = 200000;
  long switch_step = -1;  // transfer: defaults to half the budget
  int checkpoint_every = 0;  // updates between checkpoints; 0 = final only
  int hidden = 64;
  int depth = 2;
  bool scale_observations = true;
  std::string out_dir = "runs";
};

inline ExperimentConfig control_profile() {
  ExperimentConfig c;
  c.profile = "control";
  c.arch = Arch::Separate;
  c.hyper.horizon = 2048;
  c.hyper.lr = 3e-4;
  c.hyper.epochs = 10;
  c.hyper.minibatch_size = 64;
  c.hyper.num_actors = 1;
  c.hyper.clip_eps = 0.2;
  return c;
}

inline ExperimentConfig shared_profile() {
  ExperimentConfig c;
  c.profile = "shared";
  c.arch = Arch::SharedTrunk;
  c.hyper.horizon = 128;
  c.hyper.lr = 2.5e-4;
  c.hyper.epochs = 3;
  c.hyper.minibatch_size = 32;
  c.hyper.num_actors = 4;
  c.hyper.clip_eps = 0.1;
  return c;
}

inline ExperimentConfig profile_by_name(const std::string& name) {
  if (name == "control") return control_profile();
  if (name == "shared") return shared_profile();
  throw ConfigError("unknown profile: " + name + " (expected control or shared)");
}

inline Json to_json(const ExperimentConfig& c) {
  Json j;
  j["env"] = c.env_id;
  j["transfer_env"] = c.transfer_env_id;
  j["env_overrides"] = c.env_overrides;
  j["profile"] = c.profile;
  j["arch"] = c.arch == Arch::Separate ? "separate" : "shared_trunk";
  j["hyper"] = {{"gamma", c.hyper.gamma},
                {"lambda", c.hyper.lambda},
                {"clip_eps", c.hyper.clip_eps},
                {"horizon", c.hyper.horizon},
                {"epochs", c.hyper.epochs},
                {"minibatch_size", c.hyper.minibatch_size},
                {"lr", c.hyper.lr},
                {"value_coef", c.hyper.value_coef},
                {"c_ve", c.hyper.c_ve},
                {"c_fs", c.hyper.c_fs},
                {"num_actors", c.hyper.num_actors}};
  j["heads"] = {{"ve", c.heads.ve}, {"fs", c.heads.fs}};
  j["features"] = {{"normalize_advantages", c.features.normalize_advantages},
                   {"grad_clip", c.features.grad_clip},
                   {"entropy_coef", c.features.entropy_coef}};
  j["seeds"] = c.seeds;
  j["total_steps"] = c.total_steps;
  j["switch_step"] = c.switch_step;
  j["checkpoint_every"] = c.checkpoint_every;
  j["hidden"] = c.hidden;
  j["depth"] = c.depth;
  j["scale_observations"] = c.scale_observations;
  j["out"] = c.out_dir;
  return j;
}

inline ExperimentConfig config_from_json(const Json& j) {
  ExperimentConfig c = j.contains("profile") ? profile_by_name(j["profile"].get<std::string>())
                                             : ExperimentConfig{};
  if (j.contains("env")) c.env_id = j["env"].get<std::string>();
  if (j.contains("transfer_env")) c.transfer_env_id = j["transfer_env"].get<std::string>();
  if (j.contains("env_overrides")) c.env_overrides = j["env_overrides"].get<env::EnvOverrides>();
  if (j.contains("arch")) {
    const std::string a = j["arch"].get<std::string>();
    if (a == "separate") c.arch = Arch::Separate;
    else if (a == "shared_trunk") c.arch = Arch::SharedTrunk;
    else throw ConfigError("unknown arch: " + a);
  }
  if (j.contains("hyper")) {
    const auto& h = j["hyper"];
    if (h.contains("gamma")) c.hyper.gamma = h["gamma"].get<double>();
    if (h.contains("lambda")) c.hyper.lambda = h["lambda"].get<double>();
    if (h.contains("clip_eps")) c.hyper.clip_eps = h["clip_eps"].get<double>();
    if (h.contains("horizon")) c.hyper.horizon = h["horizon"].get<int>();
    if (h.contains("epochs")) c.hyper.epochs = h["epochs"].get<int>();
    if (h.contains("minibatch_size")) c.hyper.minibatch_size = h["minibatch_size"].get<int>();
    if (h.contains("lr")) c.hyper.lr = h["lr"].get<double>();
    if (h.contains("value_coef")) c.hyper.value_coef = h["value_coef"].get<double>();
    if (h.contains("c_ve")) c.hyper.c_ve = h["c_ve"].get<double>();
    if (h.contains("c_fs")) c.hyper.c_fs = h["c_fs"].get<double>();
    if (h.contains("num_actors")) c.hyper.num_actors = h["num_actors"].get<int>();
  }
  if (j.contains("heads")) {
    c.heads.ve = j["heads"].value("ve", c.heads.ve);
    c.heads.fs = j["heads"].value("fs", c.heads.fs);
  }
  if (j.contains("features")) {
    const auto& f = j["features"];
    c.features.normalize_advantages =
        f.value("normalize_advantages", c.features.normalize_advantages);
    c.features.grad_clip = f.value("grad_clip", c.features.grad_clip);
    c.features.entropy_coef = f.value("entropy_coef", c.features.entropy_coef);
  }
  if (j.contains("seeds")) c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
  if (j.contains("total_steps")) c.total_steps = j["total_steps"].get<long>();
  if (j.contains("switch_step")) c.switch_step = j["switch_step"].get<long>();
  if (j.contains("checkpoint_every")) c.checkpoint_every = j["checkpoint_every"].get<int>();
  if (j.contains("hidden")) c.hidden = j["hidden"].get<int>();
  if (j.contains("depth")) c.depth = j["depth"].get<int>();
  if (j.contains("scale_observations")) c.scale_observations = j["scale_observations"].get<bool>();
  if (j.contains("out")) c.out_dir = j["out"].get<std::string>();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  Json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  return config_from_json(j);
}

// "key=value" overrides with dotted paths, e.g. "hyper.lr=1e-3",
// "heads.ve=false", "env=sparse_car".
inline void apply_override(ExperimentConfig& c, const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos) throw ConfigError("override must be key=value: " + kv);
  const std::string key = kv.substr(0, eq);
  const std::string val = kv.substr(eq + 1);
  Json j = to_json(c);
  Json* node = &j;
  std::size_t pos = 0;
  std::string part;
  std::vector<std::string> parts;
  std::string rest = key;
  while ((pos = rest.find('.')) != std::string::npos) {
    parts.push_back(rest.substr(0, pos));
    rest = rest.substr(pos + 1);
  }
  parts.push_back(rest);
  // env_overrides takes arbitrary keys, validated by the environment itself
  if (parts.size() == 2 && parts[0] == "env_overrides") {
    j["env_overrides"][parts[1]] = std::stod(val);
    c = config_from_json(j);
    return;
  }
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->contains(parts[i])) throw ConfigError("unknown config key: " + key);
    node = &(*node)[parts[i]];
  }
  const std::string leaf = parts.back();
  if (!node->contains(leaf)) throw ConfigError("unknown config key: " + key);
  Json& slot = (*node)[leaf];
  if (slot.is_string()) slot = val;
  else if (slot.is_boolean()) slot = (val == "true" || val == "1");
  else if (slot.is_number_integer()) slot = std::stol(val);
  else if (slot.is_number_float()) slot = std::stod(val);
  else if (slot.is_array()) {
    Json arr = Json::array();
    std::string item;
    std::istringstream ss(val);
    while (std::getline(ss, item, ',')) arr.push_back(std::stoull(item));
    slot = arr;
  } else throw ConfigError("cannot override key: " + key);
  c = config_from_json(j);
}

inline void validate(const ExperimentConfig& c) {
  validate(c.hyper);
  if (c.seeds.empty()) throw ConfigError("seed list must be non-empty");
  if (c.total_steps <= 0) throw ConfigError("total_steps must be > 0");
  if (!c.transfer_env_id.empty()) {
    const long sw = c.switch_step > 0 ? c.switch_step : c.total_steps / 2;
    if (sw >= c.total_steps) throw ConfigError("switch_step must be < total_steps");
    const long n = static_cast<long>(c.hyper.num_actors) * c.hyper.horizon;
    if (sw % n != 0)
      throw ConfigError("switch_step must be a multiple of num_actors * horizon");
  }
  if (c.hidden <= 0 || c.depth <= 0) throw ConfigError("hidden and depth must be > 0");
}

}  // namespace merl
