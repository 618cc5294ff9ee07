#pragma once

// JSON configuration, CSV writing and run manifests.

#include "wcpg/eval.hpp"
#include "wcpg/sim/scenario.hpp"
#include "wcpg/trainer.hpp"

#include <json.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <type_traits>
#include <string>
#include <vector>

namespace wcpg::io {

using json = nlohmann::json;
namespace fs = std::filesystem;

inline json to_json(const sim::ScenarioConfig& c) {
  return {{"scenario", sim::to_string(c.scenario)},
          {"scale", c.scale},
          {"ego_init_speed_range", c.ego_init_speed_range},
          {"agent_speed_range", c.agent_speed_range},
          {"spawn_rate", c.spawn_rate},
          {"behavior_mix", c.behavior_mix},
          {"max_steps", c.max_steps},
          {"dt", c.dt},
          {"extra_agents", c.extra_agents},
          {"max_agents", c.max_agents}};
}

/// Missing fields take the named scenario's defaults; unknown fields are rejected.
inline sim::ScenarioConfig scenario_from_json(const json& j) {
  sim::ScenarioConfig c =
      sim::ScenarioConfig::for_kind(sim::scenario_from_string(j.value("scenario", std::string("left_turn"))));
  for (const auto& [k, v] : j.items()) {
    if (k == "scenario") continue;
    else if (k == "scale") c.scale = v;
    else if (k == "ego_init_speed_range") c.ego_init_speed_range = v;
    else if (k == "agent_speed_range") c.agent_speed_range = v;
    else if (k == "spawn_rate") c.spawn_rate = v;
    else if (k == "behavior_mix") c.behavior_mix = v;
    else if (k == "max_steps") c.max_steps = v;
    else if (k == "dt") c.dt = v;
    else if (k == "extra_agents") c.extra_agents = v;
    else if (k == "max_agents") c.max_agents = v;
    else throw std::invalid_argument("unknown scenario field: " + k);
  }
  c.validate();
  return c;
}

inline json to_json(const TrainConfig& c) {
  return {{"episodes", c.episodes},
          {"max_steps", c.max_steps},
          {"gamma", c.gamma},
          {"batch", c.batch},
          {"lr_actor", c.lr_actor},
          {"lr_critic", c.lr_critic},
          {"tau", c.tau},
          {"noise_sigma", c.noise_sigma},
          {"action_repeat", c.action_repeat},
          {"alpha_range", c.alpha_range},
          {"seed", c.seed},
          {"eval_every", c.eval_every},
          {"eval_trials", c.eval_trials},
          {"eval_alphas", c.eval_alphas},
          {"checkpoint_dir", c.checkpoint_dir},
          {"cvar_rule", to_string(c.cvar_rule)},
          {"update_every_env_step", c.update_every_env_step},
          {"replay_capacity", c.replay_capacity}};
}

inline TrainConfig train_from_json(const json& j) {
  TrainConfig c;
  for (const auto& [k, v] : j.items()) {
    if (k == "episodes") c.episodes = v;
    else if (k == "max_steps") c.max_steps = v;
    else if (k == "gamma") c.gamma = v;
    else if (k == "batch") c.batch = v;
    else if (k == "lr_actor") c.lr_actor = v;
    else if (k == "lr_critic") c.lr_critic = v;
    else if (k == "tau") c.tau = v;
    else if (k == "noise_sigma") c.noise_sigma = v;
    else if (k == "action_repeat") c.action_repeat = v;
    else if (k == "alpha_range") c.alpha_range = v;
    else if (k == "seed") c.seed = v;
    else if (k == "eval_every") c.eval_every = v;
    else if (k == "eval_trials") c.eval_trials = v;
    else if (k == "eval_alphas") c.eval_alphas = v.get<std::vector<double>>();
    else if (k == "checkpoint_dir") c.checkpoint_dir = v;
    else if (k == "cvar_rule") c.cvar_rule = cvar_rule_from_string(v);
    else if (k == "update_every_env_step") c.update_every_env_step = v;
    else if (k == "replay_capacity") c.replay_capacity = v;
    else throw std::invalid_argument("unknown training field: " + k);
  }
  c.validate();
  return c;
}

/// A run configuration file: {"scenario": {...}, "train": {...}}.
struct RunConfig {
  sim::ScenarioConfig scenario;
  TrainConfig train;
};

inline json to_json(const RunConfig& r) { return {{"scenario", to_json(r.scenario)}, {"train", to_json(r.train)}}; }

inline RunConfig run_config_from_json(const json& j) {
  RunConfig r;
  for (const auto& [k, v] : j.items())
    if (k != "scenario" && k != "train") throw std::invalid_argument("unknown config section: " + k);
  if (j.contains("scenario")) r.scenario = scenario_from_json(j.at("scenario"));
  if (j.contains("train")) r.train = train_from_json(j.at("train"));
  return r;
}

inline json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  return json::parse(in);
}

/// FNV-1a over the compact JSON dump, as 16 hex digits.
inline std::string config_hash(const json& j) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : j.dump()) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// Shortest decimal that round-trips the double.
inline std::string fmt(double v) {
  char buf[32];
  for (int prec = 6; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

class CsvWriter {
 public:
  CsvWriter(const fs::path& file, const std::vector<std::string>& header) : out_(file, std::ios::trunc) {
    if (!out_) throw std::runtime_error("cannot write " + file.string());
    row_strings(header);
  }

  template <typename... T>
  void row(const T&... cells) {
    std::vector<std::string> v;
    (v.push_back(cell(cells)), ...);
    row_strings(v);
  }

  void flush() { out_.flush(); }

 private:
  static std::string cell(const std::string& s) { return s; }
  static std::string cell(const char* s) { return s; }
  static std::string cell(double v) { return fmt(v); }
  static std::string cell(bool v) { return v ? "1" : "0"; }
  template <typename I>
    requires std::is_integral_v<I>
  static std::string cell(I v) {
    return std::to_string(v);
  }

  void row_strings(const std::vector<std::string>& v) {
    for (std::size_t i = 0; i < v.size(); ++i) out_ << (i ? "," : "") << v[i];
    out_ << '\n';
    if (!out_) throw std::runtime_error("CSV write failed");
  }

  std::ofstream out_;
};

/// run.json: the command, its seed, the full resolved configuration and its hash.
inline void write_manifest(const fs::path& dir, const std::string& command, std::uint64_t seed, json config,
                           const std::vector<std::string>& outputs) {
  json m;
  m["command"] = command;
  m["seed"] = seed;
  m["config"] = config;
  m["config_hash"] = config_hash(config);
  m["outputs"] = outputs;
  std::ofstream out(dir / "run.json", std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write run.json in " + dir.string());
  out << m.dump(2) << '\n';
}

}  // namespace wcpg::io
