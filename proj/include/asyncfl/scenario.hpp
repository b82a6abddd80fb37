/*
 * Copyright 2026 The asyncfl Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Scenario files and the experiment runner behind the command-line tool.
//
// Grammar (one item per line):
//
//   # comment                 a '#' anywhere starts a comment
//   key = value               global setting
//   [client.N]                following keys apply to client N (1-based)
//
// Lists are comma separated (`layer_sizes = 5,16,1`, `methods = async_fl,local`,
// `methods = all`). Unknown keys, malformed values and sections for clients
// beyond n_clients are errors. Overrides use the same keys, with
// `client.N.key` addressing a client section.

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "asyncfl/error.hpp"
#include "asyncfl/metrics.hpp"
#include "asyncfl/sim.hpp"
#include "asyncfl/streaming.hpp"

namespace asyncfl {

struct ClientConfig {
  std::string profile = "highway_city";
  double angle_range = 50.0;
  double turn_rate = 0.3;
  double noise_sd = 1.0;
  double seconds_per_batch = 0.01;
  std::size_t regime_frames = 0;
  std::string trace_path;  // when set, the stream is read from this CSV instead

  friend bool operator==(const ClientConfig&, const ClientConfig&) = default;
};

// Vehicles 1 and 2 drive highway/city, 3 hill, 4 hill/city; vehicle 2 is the
// slow one (no accelerator). Larger fleets cycle the pattern.
inline ClientConfig default_client(int k) {
  ClientConfig c;
  const int slot = (k - 1) % 4;
  const char* names[] = {"highway_city", "highway_city", "hill", "hill_city"};
  const StreamProfile p = *profile_preset(names[slot], 0);
  c.profile = p.name;
  c.angle_range = p.angle_range;
  c.turn_rate = p.turn_rate;
  c.noise_sd = p.noise_sd;
  c.seconds_per_batch = slot == 1 ? 0.04 : 0.01;
  return c;
}

struct ScenarioConfig {
  std::vector<Method> methods{std::begin(kAllMethods), std::end(kAllMethods)};
  int n_clients = 4;
  std::uint64_t total_epochs = 50;
  int epochs_per_round = 1;
  std::int64_t a_l = 2;
  std::int64_t a_u = 6;
  std::size_t storage_capacity = 100;
  std::size_t training_capacity = 2000;
  std::size_t batch_size = 16;
  double learning_rate = 1e-5;
  double beta1 = 0.6;
  double beta2 = 0.99;
  double epsilon = 1e-8;
  std::vector<std::size_t> layer_sizes{5, 16, 1};
  Activation activation = Activation::kRelu;
  double max_angle = 100.0;
  std::size_t frames_per_client = 10000;
  double train_fraction = 0.7;
  std::size_t frames_per_epoch = 140;
  double latency_s = 0.005;
  double bytes_per_second = 1.0e6;
  double server_seconds_per_batch = 0.01;
  double eval_interval_s = 5.0;
  std::uint64_t seed = 1;
  std::string out_dir = "out";
  bool trace = false;
  bool parallel = false;
  std::vector<ClientConfig> clients;  // index client_id - 1

  const ClientConfig& client(int k) const { return clients.at(static_cast<std::size_t>(k - 1)); }
};

// ---------------------------------------------------------------------------
// Seeds.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::string_view label) {
  std::uint64_t h = 0xCBF29CE484222325ULL;  // FNV-1a
  for (char c : label) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return splitmix64(master ^ splitmix64(h));
}

// ---------------------------------------------------------------------------
// Parsing.

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline ConfigError bad_value(const std::string& key, const std::string& value,
                             const std::string& expected) {
  return ConfigError("bad value for key '" + key + "': '" + value + "' (expected " + expected + ")");
}

template <typename T>
T parse_value(const std::string& key, const std::string& value) {
  T out{};
  if constexpr (std::is_same_v<T, bool>) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw bad_value(key, value, "true or false");
  } else {
    if (!parse_number(value, out)) {
      throw bad_value(key, value, std::is_floating_point_v<T> ? "a number" : "an integer");
    }
    return out;
  }
}

inline std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  for (std::string_view part : split_commas(value)) out.push_back(trim(part));
  return out;
}

struct RawEntry {
  std::string key;
  std::string value;
};

struct RawConfig {
  std::vector<RawEntry> global;
  std::map<int, std::vector<RawEntry>> clients;
};

inline int parse_client_index(const std::string& text, const std::string& where) {
  int k = 0;
  if (!parse_number(text, k) || k < 1) throw ConfigError(where + ": bad client index '" + text + "'");
  return k;
}

inline RawConfig parse_raw(std::string_view text, const std::string& source) {
  RawConfig raw;
  std::optional<int> section;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = source + ":" + std::to_string(lineno);
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string content = trim(line);
    if (content.empty()) continue;
    if (content.front() == '[') {
      if (content.back() != ']') throw ConfigError(where + ": unterminated section header");
      const std::string name = trim(std::string_view(content).substr(1, content.size() - 2));
      if (name.rfind("client.", 0) != 0) throw ConfigError(where + ": unknown section [" + name + "]");
      section = parse_client_index(name.substr(7), where);
      raw.clients[*section];
      continue;
    }
    const auto eq = content.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    RawEntry entry{trim(std::string_view(content).substr(0, eq)),
                   trim(std::string_view(content).substr(eq + 1))};
    if (entry.key.empty()) throw ConfigError(where + ": empty key");
    if (section) {
      raw.clients[*section].push_back(std::move(entry));
    } else {
      raw.global.push_back(std::move(entry));
    }
  }
  return raw;
}

inline void apply_override(RawConfig& raw, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = trim(std::string_view(assignment).substr(0, eq));
  const std::string value = trim(std::string_view(assignment).substr(eq + 1));
  if (key.rfind("client.", 0) == 0) {
    const auto dot = key.find('.', 7);
    if (dot == std::string::npos) throw ConfigError("override '" + key + "' needs client.N.key");
    const int k = parse_client_index(key.substr(7, dot - 7), "override");
    raw.clients[k].push_back({key.substr(dot + 1), value});
  } else {
    raw.global.push_back({key, value});
  }
}

inline std::vector<Method> parse_methods(const std::string& key, const std::string& value) {
  if (value == "all") return {std::begin(kAllMethods), std::end(kAllMethods)};
  std::vector<Method> out;
  for (const std::string& name : split_list(value)) {
    const auto m = parse_method(name);
    if (!m) throw bad_value(key, name, "async_fl, sync_fl, centralized, local or all");
    if (std::find(out.begin(), out.end(), *m) == out.end()) out.push_back(*m);
  }
  if (out.empty()) throw bad_value(key, value, "at least one method");
  return out;
}

inline void apply_global(ScenarioConfig& c, const std::string& key, const std::string& v) {
  using std::size_t;
  if (key == "methods" || key == "method") c.methods = parse_methods(key, v);
  else if (key == "n_clients") c.n_clients = parse_value<int>(key, v);
  else if (key == "total_epochs") c.total_epochs = parse_value<std::uint64_t>(key, v);
  else if (key == "epochs_per_round") c.epochs_per_round = parse_value<int>(key, v);
  else if (key == "a_l") c.a_l = parse_value<std::int64_t>(key, v);
  else if (key == "a_u") c.a_u = parse_value<std::int64_t>(key, v);
  else if (key == "storage_capacity") c.storage_capacity = parse_value<size_t>(key, v);
  else if (key == "training_capacity") c.training_capacity = parse_value<size_t>(key, v);
  else if (key == "batch_size") c.batch_size = parse_value<size_t>(key, v);
  else if (key == "learning_rate") c.learning_rate = parse_value<double>(key, v);
  else if (key == "beta1") c.beta1 = parse_value<double>(key, v);
  else if (key == "beta2") c.beta2 = parse_value<double>(key, v);
  else if (key == "epsilon") c.epsilon = parse_value<double>(key, v);
  else if (key == "layer_sizes") {
    c.layer_sizes.clear();
    for (const std::string& s : split_list(v)) c.layer_sizes.push_back(parse_value<size_t>(key, s));
  }
  else if (key == "activation") {
    if (v != "relu" && v != "elu") throw bad_value(key, v, "relu or elu");
    c.activation = parse_activation(v);
  }
  else if (key == "max_angle") c.max_angle = parse_value<double>(key, v);
  else if (key == "frames_per_client") c.frames_per_client = parse_value<size_t>(key, v);
  else if (key == "train_fraction") c.train_fraction = parse_value<double>(key, v);
  else if (key == "frames_per_epoch") c.frames_per_epoch = parse_value<size_t>(key, v);
  else if (key == "latency_s") c.latency_s = parse_value<double>(key, v);
  else if (key == "bytes_per_second") c.bytes_per_second = parse_value<double>(key, v);
  else if (key == "server_seconds_per_batch") c.server_seconds_per_batch = parse_value<double>(key, v);
  else if (key == "eval_interval_s") c.eval_interval_s = parse_value<double>(key, v);
  else if (key == "seed") c.seed = parse_value<std::uint64_t>(key, v);
  else if (key == "out_dir") c.out_dir = v;
  else if (key == "trace") c.trace = parse_value<bool>(key, v);
  else if (key == "parallel") c.parallel = parse_value<bool>(key, v);
  else throw ConfigError("unknown key '" + key + "'");
}

inline void apply_client(ClientConfig& c, int k, const std::string& key, const std::string& v) {
  const std::string full = "client." + std::to_string(k) + "." + key;
  if (key == "profile") {
    const auto preset = profile_preset(v, 0);
    if (!preset) throw bad_value(full, v, "highway_city, hill or hill_city");
    c.profile = preset->name;
    c.angle_range = preset->angle_range;
    c.turn_rate = preset->turn_rate;
    c.noise_sd = preset->noise_sd;
  }
  else if (key == "angle_range") c.angle_range = parse_value<double>(full, v);
  else if (key == "turn_rate") c.turn_rate = parse_value<double>(full, v);
  else if (key == "noise_sd") c.noise_sd = parse_value<double>(full, v);
  else if (key == "seconds_per_batch") c.seconds_per_batch = parse_value<double>(full, v);
  else if (key == "regime_frames") c.regime_frames = parse_value<std::size_t>(full, v);
  else if (key == "trace_path") c.trace_path = v;
  else throw ConfigError("unknown key '" + full + "'");
}

}  // namespace detail

inline void validate(const ScenarioConfig& c) {
  if (c.n_clients < 1) throw ConfigError("n_clients must be >= 1");
  if (c.a_l < 0) throw ConfigError("a_l must be >= 0");
  if (c.a_l > c.a_u) {
    throw ConfigError("a_l (" + std::to_string(c.a_l) + ") must not exceed a_u (" +
                      std::to_string(c.a_u) + ")");
  }
  if (c.total_epochs < 1) throw ConfigError("total_epochs must be >= 1");
  if (c.epochs_per_round < 1) throw ConfigError("epochs_per_round must be >= 1");
  if (c.storage_capacity < 1) throw ConfigError("storage_capacity must be >= 1");
  if (c.training_capacity < 1) throw ConfigError("training_capacity must be >= 1");
  if (c.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(c.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(c.beta1 >= 0.0 && c.beta1 < 1.0)) throw ConfigError("beta1 must lie in [0, 1)");
  if (!(c.beta2 >= 0.0 && c.beta2 < 1.0)) throw ConfigError("beta2 must lie in [0, 1)");
  if (!(c.epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (c.layer_sizes.size() < 2 ||
      std::find(c.layer_sizes.begin(), c.layer_sizes.end(), 0u) != c.layer_sizes.end()) {
    throw ConfigError("layer_sizes needs >= 2 positive entries");
  }
  if (c.layer_sizes.back() != 1) throw ConfigError("layer_sizes must end in 1 (angle regression)");
  if (!(c.max_angle > 0.0)) throw ConfigError("max_angle must be positive");
  if (c.frames_per_client < 2) throw ConfigError("frames_per_client must be >= 2");
  if (!(c.train_fraction > 0.0 && c.train_fraction < 1.0)) {
    throw ConfigError("train_fraction must lie strictly between 0 and 1");
  }
  if (c.frames_per_epoch < 1) throw ConfigError("frames_per_epoch must be >= 1");
  if (!(c.latency_s >= 0.0)) throw ConfigError("latency_s must be >= 0");
  if (!(c.bytes_per_second > 0.0)) throw ConfigError("bytes_per_second must be positive");
  if (!(c.server_seconds_per_batch > 0.0)) throw ConfigError("server_seconds_per_batch must be positive");
  if (!(c.eval_interval_s >= 0.0)) throw ConfigError("eval_interval_s must be >= 0");
  for (int k = 1; k <= c.n_clients; ++k) {
    const ClientConfig& cc = c.client(k);
    const std::string p = "client." + std::to_string(k) + ".";
    if (!(cc.seconds_per_batch > 0.0)) throw ConfigError(p + "seconds_per_batch must be positive");
    if (cc.trace_path.empty()) {
      if (!(cc.angle_range > 0.0)) throw ConfigError(p + "angle_range must be positive");
      if (!(cc.turn_rate >= 0.0 && cc.turn_rate <= 1.0)) throw ConfigError(p + "turn_rate must lie in [0, 1]");
      if (!(cc.noise_sd >= 0.0)) throw ConfigError(p + "noise_sd must be >= 0");
    }
    if (cc.trace_path.empty() && c.layer_sizes.front() != kLagFeatureDim) {
      throw ConfigError("layer_sizes must start with " + std::to_string(kLagFeatureDim) +
                        " for synthetic streams (client " + std::to_string(k) + ")");
    }
  }
}

// Parses config text, then applies `overrides` (key=value) on top.
inline ScenarioConfig parse_config_text(std::string_view text, const std::string& source = "<config>",
                                        const std::vector<std::string>& overrides = {}) {
  detail::RawConfig raw = detail::parse_raw(text, source);
  for (const std::string& o : overrides) detail::apply_override(raw, o);

  ScenarioConfig cfg;
  for (const auto& e : raw.global) detail::apply_global(cfg, e.key, e.value);
  if (cfg.n_clients < 1) throw ConfigError("n_clients must be >= 1");
  for (const auto& [k, entries] : raw.clients) {
    if (k > cfg.n_clients) {
      throw ConfigError("section [client." + std::to_string(k) + "] exceeds n_clients = " +
                        std::to_string(cfg.n_clients));
    }
  }
  cfg.clients.clear();
  for (int k = 1; k <= cfg.n_clients; ++k) {
    ClientConfig cc = default_client(k);
    if (const auto it = raw.clients.find(k); it != raw.clients.end()) {
      for (const auto& e : it->second) detail::apply_client(cc, k, e.key, e.value);
    }
    cfg.clients.push_back(std::move(cc));
  }
  validate(cfg);
  return cfg;
}

inline ScenarioConfig parse_config_file(const std::string& path,
                                        const std::vector<std::string>& overrides = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path, overrides);
}

// Canonical text form; parsing it yields the same configuration.
inline std::string to_config_text(const ScenarioConfig& c) {
  using detail::format_double;
  std::ostringstream out;
  std::string methods;
  for (Method m : c.methods) methods += (methods.empty() ? "" : ",") + std::string(method_name(m));
  std::string layers;
  for (std::size_t s : c.layer_sizes) layers += (layers.empty() ? "" : ",") + std::to_string(s);
  out << "methods = " << methods << '\n'
      << "n_clients = " << c.n_clients << '\n'
      << "total_epochs = " << c.total_epochs << '\n'
      << "epochs_per_round = " << c.epochs_per_round << '\n'
      << "a_l = " << c.a_l << '\n'
      << "a_u = " << c.a_u << '\n'
      << "storage_capacity = " << c.storage_capacity << '\n'
      << "training_capacity = " << c.training_capacity << '\n'
      << "batch_size = " << c.batch_size << '\n'
      << "learning_rate = " << format_double(c.learning_rate) << '\n'
      << "beta1 = " << format_double(c.beta1) << '\n'
      << "beta2 = " << format_double(c.beta2) << '\n'
      << "epsilon = " << format_double(c.epsilon) << '\n'
      << "layer_sizes = " << layers << '\n'
      << "activation = " << to_string(c.activation) << '\n'
      << "max_angle = " << format_double(c.max_angle) << '\n'
      << "frames_per_client = " << c.frames_per_client << '\n'
      << "train_fraction = " << format_double(c.train_fraction) << '\n'
      << "frames_per_epoch = " << c.frames_per_epoch << '\n'
      << "latency_s = " << format_double(c.latency_s) << '\n'
      << "bytes_per_second = " << format_double(c.bytes_per_second) << '\n'
      << "server_seconds_per_batch = " << format_double(c.server_seconds_per_batch) << '\n'
      << "eval_interval_s = " << format_double(c.eval_interval_s) << '\n'
      << "seed = " << c.seed << '\n'
      << "out_dir = " << c.out_dir << '\n'
      << "trace = " << (c.trace ? "true" : "false") << '\n'
      << "parallel = " << (c.parallel ? "true" : "false") << '\n';
  for (int k = 1; k <= c.n_clients; ++k) {
    const ClientConfig& cc = c.client(k);
    out << "\n[client." << k << "]\n"
        << "profile = " << cc.profile << '\n'
        << "angle_range = " << format_double(cc.angle_range) << '\n'
        << "turn_rate = " << format_double(cc.turn_rate) << '\n'
        << "noise_sd = " << format_double(cc.noise_sd) << '\n'
        << "seconds_per_batch = " << format_double(cc.seconds_per_batch) << '\n'
        << "regime_frames = " << cc.regime_frames << '\n';
    if (!cc.trace_path.empty()) out << "trace_path = " << cc.trace_path << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Running.

inline std::uint64_t method_seed(const ScenarioConfig& c, Method m) {
  return derive_seed(c.seed, method_name(m));
}

// Data depends only on the master seed; model init and shuffling are
// derived per method.
inline std::vector<ClientSetup> build_setups(const ScenarioConfig& c, Method m) {
  std::vector<ClientSetup> setups;
  const std::uint64_t mseed = method_seed(c, m);
  for (int k = 1; k <= c.n_clients; ++k) {
    const ClientConfig& cc = c.client(k);
    std::vector<Frame> stream;
    if (!cc.trace_path.empty()) {
      stream = load_trace_csv(cc.trace_path);
      for (const Frame& f : stream) {
        if (f.features.size() != c.layer_sizes.front()) {
          throw ConfigError(cc.trace_path + ": feature dimension " +
                            std::to_string(f.features.size()) + " does not match layer_sizes[0] = " +
                            std::to_string(c.layer_sizes.front()));
        }
      }
    } else {
      const StreamProfile profile{cc.profile, cc.angle_range, cc.turn_rate, cc.noise_sd,
                                  derive_seed(c.seed, "stream.client." + std::to_string(k)),
                                  cc.regime_frames};
      stream = synth_stream(profile, c.frames_per_client);
    }
    auto [train, eval] = split_stream(stream, c.train_fraction);
    if (train.empty() || eval.empty()) {
      throw ConfigError("client " + std::to_string(k) + ": stream too short to split");
    }
    ClientSetup s;
    s.client_id = k;
    s.train_stream = std::move(train);
    s.eval_frames = std::move(eval);
    s.speed = {k, cc.seconds_per_batch};
    s.shuffle_seed = derive_seed(mseed, "shuffle.client." + std::to_string(k));
    setups.push_back(std::move(s));
  }
  return setups;
}

inline EngineConfig engine_config(const ScenarioConfig& c, Method m) {
  EngineConfig e;
  e.mlp.layer_sizes = c.layer_sizes;
  e.mlp.hidden_activation = c.activation;
  e.mlp.seed = derive_seed(method_seed(c, m), "init");
  e.client.a_l = c.a_l;
  e.client.a_u = c.a_u;
  e.client.epochs_per_round = c.epochs_per_round;
  e.client.storage_capacity = c.storage_capacity;
  e.client.training_capacity = c.training_capacity;
  e.client.learning_rate = c.learning_rate;
  e.client.beta1 = c.beta1;
  e.client.beta2 = c.beta2;
  e.client.epsilon = c.epsilon;
  e.hyper.batch_size = c.batch_size;
  e.hyper.norm = {c.max_angle, c.max_angle};
  e.total_epochs = c.total_epochs;
  e.frames_per_epoch = c.frames_per_epoch;
  e.net = {c.latency_s, c.bytes_per_second};
  e.server_seconds_per_batch = c.server_seconds_per_batch;
  return e;
}

struct MethodOutcome {
  Method method = Method::kAsyncFl;
  RunResult run;
  MetricsLog metrics;
  std::vector<SummaryRow> summary;
  std::vector<ClientSetup> setups;
  EngineConfig engine;
};

inline MethodOutcome run_one_method(const ScenarioConfig& c, Method m) {
  try {
    MethodOutcome out;
    out.method = m;
    out.setups = build_setups(c, m);
    out.engine = engine_config(c, m);
    const EngineConfig& e = out.engine;
    out.run = run_method(m, out.setups, e);
    out.metrics = metrics_from_run(out.run, out.setups, e.mlp, e.hyper.norm, c.eval_interval_s);
    out.summary = summarize(out.run, out.setups, e.mlp, e.hyper.norm);
    return out;
  } catch (const ConfigError& ex) {
    throw ConfigError(std::string(method_name(m)) + ": " + ex.what());
  } catch (const std::exception& ex) {
    throw Error(std::string(method_name(m)) + ": " + ex.what());
  }
}

inline void write_acc_sq_err_csv(const MethodOutcome& o, const std::string& path) {
  const auto& setups = o.setups;
  const EngineConfig& e = o.engine;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "scope,frame_index,acc_sq_err\n";
  for (std::size_t k = 0; k < setups.size(); ++k) {
    const auto acc =
        accumulated_sq_error(o.run.final_models[k], e.mlp, e.hyper.norm, setups[k].eval_frames);
    for (std::size_t i = 0; i < acc.size(); ++i) {
      out << actor_name(static_cast<int>(k + 1)) << ',' << i << ',' << detail::format_double(acc[i])
          << '\n';
    }
  }
  if (!out) throw IoError("write failed for " + path);
}

inline void print_summary(std::span<const SummaryRow> rows, std::ostream& out) {
  out << std::left << std::setw(13) << "method" << std::setw(16) << "vehicle" << std::right
      << std::setw(12) << "rmse" << std::setw(16) << "train_time_s" << std::setw(14) << "bytes" << '\n';
  for (const SummaryRow& r : rows) {
    out << std::left << std::setw(13) << r.method << std::setw(16) << r.vehicle << std::right
        << std::fixed << std::setprecision(4) << std::setw(12) << r.rmse << std::setw(16)
        << std::setprecision(2) << r.train_time_s << std::setw(14) << r.bytes << '\n';
    out.unsetf(std::ios::fixed);
  }
}

struct ScenarioOutcome {
  std::vector<MethodOutcome> methods;
  std::vector<SummaryRow> summary;
};

// Runs every requested method and writes, under out_dir:
//   effective_config, summary.csv, <method>_metrics.csv,
//   <method>_acc_sq_err.csv and, with trace enabled, <method>_trace.csv.
inline ScenarioOutcome run_scenario(const ScenarioConfig& c, std::ostream& log) {
  validate(c);
  namespace fs = std::filesystem;
  const fs::path dir(c.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + c.out_dir + ": " + ec.message());

  {
    std::ofstream out(dir / "effective_config", std::ios::binary);
    out << to_config_text(c);
    if (!out) throw IoError("cannot write effective_config");
  }

  ScenarioOutcome outcome;
  if (c.parallel) {
    std::vector<std::future<MethodOutcome>> futures;
    for (Method m : c.methods) {
      futures.push_back(std::async(std::launch::async, [&c, m] { return run_one_method(c, m); }));
    }
    for (auto& f : futures) outcome.methods.push_back(f.get());
  } else {
    for (Method m : c.methods) {
      log << "running " << method_name(m) << " ...\n";
      outcome.methods.push_back(run_one_method(c, m));
    }
  }

  for (const MethodOutcome& o : outcome.methods) {
    const std::string name(method_name(o.method));
    write_metrics_csv(o.metrics, (dir / (name + "_metrics.csv")).string());
    write_acc_sq_err_csv(o, (dir / (name + "_acc_sq_err.csv")).string());
    if (c.trace) {
      std::ofstream out(dir / (name + "_trace.csv"), std::ios::binary);
      write_event_trace_csv(out, o.run.trace);
      if (!out) throw IoError("cannot write trace for " + name);
    }
    outcome.summary.insert(outcome.summary.end(), o.summary.begin(), o.summary.end());
  }
  write_summary_csv(outcome.summary, (dir / "summary.csv").string());
  print_summary(outcome.summary, log);
  return outcome;
}

}  // namespace asyncfl
