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

// Small fleets for engine tests.

#pragma once

#include <vector>

#include "asyncfl/sim_core.hpp"
#include "asyncfl/streaming.hpp"

namespace asyncfl::testing {

inline std::vector<ClientSetup> small_fleet(std::size_t k, std::size_t frames = 1200,
                                            std::vector<double> speeds = {}) {
  std::vector<ClientSetup> out;
  for (std::size_t i = 0; i < k; ++i) {
    StreamProfile p = i % 2 == 0 ? highway_city_profile(100 + i) : hill_profile(100 + i);
    auto [train, eval] = split_stream(synth_stream(p, frames), 0.7);
    ClientSetup s;
    s.client_id = static_cast<int>(i + 1);
    s.train_stream = std::move(train);
    s.eval_frames = std::move(eval);
    s.speed = {s.client_id, i < speeds.size() ? speeds[i] : 0.01};
    s.shuffle_seed = 1000 + i;
    out.push_back(std::move(s));
  }
  return out;
}

inline EngineConfig small_engine(std::uint64_t epochs = 6) {
  EngineConfig e;
  e.mlp.seed = 42;
  e.client.learning_rate = 1e-3;
  e.total_epochs = epochs;
  e.frames_per_epoch = 100;
  return e;
}

}  // namespace asyncfl::testing
