#pragma once

// Checkpoints: a directory holding manifest.json (layer specs and shapes per
// key) and one raw little-endian float64 file per key, parameters in
// declaration order (per layer: weight column-major, then bias).

#include "wcpg/actor.hpp"
#include "wcpg/critic.hpp"
#include "wcpg/nn.hpp"
#include "wcpg/replay.hpp"

#include <json.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace wcpg::ckpt {

namespace fs = std::filesystem;
using json = nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline void write_f64(const fs::path& file, const std::vector<double>& v) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + file.string() + " for writing");
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  if (!out) throw std::runtime_error("write failed: " + file.string());
}

inline std::vector<double> read_f64(const fs::path& file, std::size_t expected) {
  std::ifstream in(file, std::ios::binary | std::ios::ate);
  if (!in) throw std::runtime_error("cannot open " + file.string());
  const auto bytes = static_cast<std::size_t>(in.tellg());
  if (bytes != expected * sizeof(double))
    throw std::runtime_error(file.string() + ": expected " + std::to_string(expected) + " values, found " +
                             std::to_string(bytes / sizeof(double)));
  std::vector<double> v(expected);
  in.seekg(0);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(bytes));
  if (!in) throw std::runtime_error("read failed: " + file.string());
  return v;
}

inline json spec_to_json(const nn::NetworkSpec& s) {
  json j;
  for (const auto& i : s.inputs) j["inputs"].push_back({{"name", i.name}, {"width", i.width}});
  for (const auto& l : s.layers)
    j["layers"].push_back({{"name", l.name},
                           {"sources", l.sources},
                           {"output_width", l.output_width},
                           {"activation", nn::to_string(l.activation)},
                           {"init_sigma", l.init_sigma}});
  return j;
}

inline nn::NetworkSpec spec_from_json(const json& j) {
  nn::NetworkSpec s;
  for (const auto& i : j.at("inputs")) s.inputs.push_back({i.at("name"), i.at("width").get<nn::Index>()});
  for (const auto& l : j.at("layers"))
    s.layers.push_back({l.at("name"), l.at("sources").get<std::vector<std::string>>(),
                        l.at("output_width").get<nn::Index>(),
                        nn::activation_from_string(l.at("activation")), l.at("init_sigma")});
  return s;
}

inline std::vector<double> to_vector(const nn::ParamSet& p) {
  const nn::Vector flat = nn::flatten(p);
  return {flat.data(), flat.data() + flat.size()};
}

struct Bundle {
  ActorNet actor, actor_target;
  CriticNet critic, critic_target;
  RunningNormalizer normalizer;
  json extra = json::object();
};

inline void save_network(const fs::path& dir, const std::string& key, const nn::Mlp& net, json& manifest) {
  json entry;
  entry["spec"] = spec_to_json(net.spec());
  for (const auto& l : net.params())
    entry["shapes"].push_back({{"weight", {l.weight.rows(), l.weight.cols()}}, {"bias", {l.bias.size()}}});
  entry["count"] = net.parameter_count();
  entry["file"] = key + ".bin";
  manifest["networks"][key] = entry;
  write_f64(dir / (key + ".bin"), to_vector(net.params()));
}

inline nn::Mlp load_network(const fs::path& dir, const std::string& key, const json& manifest,
                            const nn::NetworkSpec& expected) {
  const json& entry = manifest.at("networks").at(key);
  const nn::NetworkSpec spec = spec_from_json(entry.at("spec"));
  if (!(spec == expected)) throw std::runtime_error("checkpoint '" + key + "' has an unexpected architecture");
  nn::Mlp net(spec);
  const std::vector<double> v = read_f64(dir / entry.at("file").get<std::string>(), net.parameter_count());
  nn::unflatten(Eigen::Map<const nn::Vector>(v.data(), static_cast<nn::Index>(v.size())), net.params());
  return net;
}

inline void save(const fs::path& dir, const Bundle& b) {
  fs::create_directories(dir);
  json m;
  m["format"] = "wcpg-checkpoint";
  m["version"] = 1;
  m["dtype"] = "float64-le";
  save_network(dir, "actor", b.actor.net(), m);
  save_network(dir, "actor_target", b.actor_target.net(), m);
  save_network(dir, "critic", b.critic.net(), m);
  save_network(dir, "critic_target", b.critic_target.net(), m);
  std::vector<double> norm;
  norm.push_back(static_cast<double>(b.normalizer.count()));
  norm.insert(norm.end(), b.normalizer.mean().begin(), b.normalizer.mean().end());
  norm.insert(norm.end(), b.normalizer.m2().begin(), b.normalizer.m2().end());
  write_f64(dir / "normalizer.bin", norm);
  m["normalizer"] = {{"file", "normalizer.bin"}, {"layout", "count, mean[16], m2[16]"}};
  m["extra"] = b.extra;
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write manifest in " + dir.string());
  out << m.dump(2) << '\n';
  if (!out) throw std::runtime_error("manifest write failed in " + dir.string());
}

inline Bundle load(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw std::runtime_error("no checkpoint manifest in " + dir.string());
  const json m = json::parse(in);
  if (m.value("format", "") != "wcpg-checkpoint") throw std::runtime_error("not a checkpoint: " + dir.string());
  Bundle b;
  b.actor = ActorNet(load_network(dir, "actor", m, ActorNet::architecture()));
  b.actor_target = ActorNet(load_network(dir, "actor_target", m, ActorNet::architecture()));
  b.critic = CriticNet(load_network(dir, "critic", m, CriticNet::architecture()));
  b.critic_target = CriticNet(load_network(dir, "critic_target", m, CriticNet::architecture()));
  const std::vector<double> norm = read_f64(dir / "normalizer.bin", 1 + 2 * kObsDim);
  Observation mean{}, m2{};
  std::copy(norm.begin() + 1, norm.begin() + 1 + kObsDim, mean.begin());
  std::copy(norm.begin() + 1 + kObsDim, norm.end(), m2.begin());
  b.normalizer.restore(static_cast<std::uint64_t>(norm[0]), mean, m2);
  b.extra = m.value("extra", json::object());
  return b;
}

}  // namespace wcpg::ckpt
