#pragma once

#include <fstream>
#include <json.hpp>
#include <string>

#include "merl/agent.hpp"

namespace merl {

// Versioned JSON snapshot format for parameter sets: ordered layer list,
// row-major matrices, 64-bit floats (doubles round-trip exactly through the
// JSON writer). Shared by checkpointing, the transfer runner and tests.
inline constexpr const char* kCheckpointFormat = "merl-checkpoint-v1";

inline nlohmann::ordered_json mlp_to_json(const Mlp& net) {
  nlohmann::ordered_json j;
  j["hidden"] = net.hidden == Activation::Tanh ? "tanh" : "identity";
  j["output"] = net.output == Activation::Tanh ? "tanh" : "identity";
  j["layers"] = nlohmann::ordered_json::array();
  for (const auto& l : net.layers) {
    nlohmann::ordered_json lj;
    lj["rows"] = l.w.rows;
    lj["cols"] = l.w.cols;
    lj["w"] = l.w.data;
    lj["b"] = l.b;
    j["layers"].push_back(std::move(lj));
  }
  return j;
}

inline Mlp mlp_from_json(const nlohmann::ordered_json& j) {
  Mlp net;
  auto act = [](const std::string& s) {
    if (s == "tanh") return Activation::Tanh;
    if (s == "identity") return Activation::Identity;
    throw ConfigError("checkpoint: unknown activation " + s);
  };
  net.hidden = act(j.at("hidden").get<std::string>());
  net.output = act(j.at("output").get<std::string>());
  for (const auto& lj : j.at("layers")) {
    DenseLayer l;
    l.w = Mat(lj.at("rows").get<int>(), lj.at("cols").get<int>());
    l.w.data = lj.at("w").get<Vec>();
    l.b = lj.at("b").get<Vec>();
    if (l.w.data.size() != static_cast<std::size_t>(l.w.rows) * l.w.cols)
      throw ConfigError("checkpoint: weight matrix size mismatch");
    net.layers.push_back(std::move(l));
  }
  check_chained(net);
  return net;
}

inline nlohmann::ordered_json agent_to_json(const AgentParams& p) {
  nlohmann::ordered_json j;
  j["format"] = kCheckpointFormat;
  j["arch"] = p.arch == Arch::Separate ? "separate" : "shared_trunk";
  j["continuous"] = p.continuous_actions;
  j["obs_dim"] = p.obs_dim;
  j["action_dim"] = p.action_dim;
  j["embed_dim"] = p.embed_dim;
  j["scaler"] = {{"enabled", p.scaler.enabled},
                 {"center", p.scaler.center},
                 {"half_range", p.scaler.half_range}};
  j["log_std"] = p.log_std;
  if (p.arch == Arch::Separate) j["policy"] = mlp_to_json(p.policy);
  else j["policy_head"] = mlp_to_json(p.policy_head);
  j["trunk"] = mlp_to_json(p.trunk);
  j["value_head"] = mlp_to_json(p.value_head);
  j["ve_head"] = mlp_to_json(p.ve_head);
  j["fs_head"] = mlp_to_json(p.fs_head);
  return j;
}

inline AgentParams agent_from_json(const nlohmann::ordered_json& j) {
  if (j.at("format").get<std::string>() != kCheckpointFormat)
    throw ConfigError("checkpoint: unsupported format tag");
  AgentParams p;
  p.arch = j.at("arch").get<std::string>() == "separate" ? Arch::Separate : Arch::SharedTrunk;
  p.continuous_actions = j.at("continuous").get<bool>();
  p.obs_dim = j.at("obs_dim").get<int>();
  p.action_dim = j.at("action_dim").get<int>();
  p.embed_dim = j.at("embed_dim").get<int>();
  p.scaler.enabled = j.at("scaler").at("enabled").get<bool>();
  p.scaler.center = j.at("scaler").at("center").get<Vec>();
  p.scaler.half_range = j.at("scaler").at("half_range").get<Vec>();
  p.log_std = j.at("log_std").get<Vec>();
  if (p.arch == Arch::Separate) p.policy = mlp_from_json(j.at("policy"));
  else p.policy_head = mlp_from_json(j.at("policy_head"));
  p.trunk = mlp_from_json(j.at("trunk"));
  p.value_head = mlp_from_json(j.at("value_head"));
  p.ve_head = mlp_from_json(j.at("ve_head"));
  p.fs_head = mlp_from_json(j.at("fs_head"));
  return p;
}

inline void save_checkpoint(const AgentParams& p, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write checkpoint: " + path);
  out << agent_to_json(p).dump(1) << "\n";
}

inline AgentParams load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read checkpoint: " + path);
  nlohmann::ordered_json j;
  in >> j;
  return agent_from_json(j);
}

// FNV-1a over the serialized parameters; used for the transfer-continuity
// check and determinism tests.
inline std::uint64_t param_hash(const AgentParams& p) {
  const std::string s = agent_to_json(p).dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace merl
