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

// asyncfl-sim: runs a scenario file through one or more training methods.
//
// Exit codes: 0 success, 1 configuration error, 2 runtime failure.

#include <cstdint>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "asyncfl/error.hpp"
#include "asyncfl/scenario.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Simulate asynchronous federated learning against its baselines"};
  std::string config_path;
  std::string methods;
  std::uint64_t seed = 0;
  std::string out_dir;
  bool trace = false;
  bool parallel = false;
  std::vector<std::string> overrides;

  app.add_option("--config", config_path, "Scenario file (key = value, [client.N] sections)");
  auto* method_opt =
      app.add_option("--method", methods, "Comma-separated: async_fl,sync_fl,centralized,local or all");
  auto* seed_opt = app.add_option("--seed", seed, "Master seed");
  auto* out_opt = app.add_option("--out-dir", out_dir, "Output directory");
  app.add_flag("--trace", trace, "Also write <method>_trace.csv event traces");
  app.add_flag("--parallel", parallel, "Run methods concurrently");
  app.add_option("--set", overrides, "Override a config key, KEY=VALUE (repeatable)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  asyncfl::ScenarioConfig cfg;
  try {
    if (!method_opt->empty()) overrides.push_back("methods=" + methods);
    if (!seed_opt->empty()) overrides.push_back("seed=" + std::to_string(seed));
    if (!out_opt->empty()) overrides.push_back("out_dir=" + out_dir);
    if (trace) overrides.push_back("trace=true");
    if (parallel) overrides.push_back("parallel=true");
    cfg = config_path.empty() ? asyncfl::parse_config_text("", "<defaults>", overrides)
                              : asyncfl::parse_config_file(config_path, overrides);
  } catch (const asyncfl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  }

  try {
    asyncfl::run_scenario(cfg, std::cout);
  } catch (const asyncfl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
