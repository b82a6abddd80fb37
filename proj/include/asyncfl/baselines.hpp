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

// Comparison trainers: synchronous FedAvg, centralized training on pooled
// data, and isolated local training. They reuse the client round of the
// asynchronous engine so only the exchange pattern differs.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "asyncfl/error.hpp"
#include "asyncfl/model.hpp"
#include "asyncfl/protocol.hpp"
#include "asyncfl/sim_core.hpp"
#include "asyncfl/streaming.hpp"

namespace asyncfl {

// Coordinate-wise mean weighted by n_k / sum(n).
inline ParameterVector fedavg_aggregate(std::span<const ParameterVector> models,
                                        std::span<const std::uint64_t> sample_counts) {
  if (models.empty()) throw Error("fedavg_aggregate needs at least one model");
  if (models.size() != sample_counts.size()) {
    throw DimensionError("fedavg_aggregate: models and sample counts differ in length");
  }
  std::uint64_t total = 0;
  for (std::size_t k = 0; k < models.size(); ++k) {
    if (models[k].size() != models[0].size()) {
      throw DimensionError("fedavg_aggregate: model lengths differ");
    }
    if (sample_counts[k] < 1) throw Error("fedavg_aggregate: sample counts must be >= 1");
    total += sample_counts[k];
  }
  ParameterVector out(models[0].size(), 0.0);
  for (std::size_t k = 0; k < models.size(); ++k) {
    const double weight = static_cast<double>(sample_counts[k]) / static_cast<double>(total);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += weight * models[k][i];
  }
  return out;
}

namespace detail {

inline RunResult empty_result(std::string method, std::size_t k, const ParameterVector& w0) {
  RunResult r;
  r.method = std::move(method);
  r.global = w0;
  r.final_models.assign(k, w0);
  r.completion_time_s.assign(k, 0.0);
  r.epoch_losses.assign(k, {});
  r.accepted_updates.assign(k, 0);
  for (std::size_t i = 0; i < k; ++i) r.deployments.push_back({0.0, static_cast<int>(i + 1), w0});
  return r;
}

inline void finish(RunResult& result, const EventQueue& queue) {
  if (queue.enqueued() != queue.processed()) {
    throw Error(result.method + ": " + std::to_string(queue.enqueued() - queue.processed()) +
                " events left unprocessed");
  }
  result.end_time_s = queue.now();
}

}  // namespace detail

// Every round each client trains E epochs from the current global model;
// the server waits for all uploads, averages, and sends the result back.
// The first round starts from the shared initial model.
inline RunResult run_fedavg(std::span<const ClientSetup> setups, const EngineConfig& cfg) {
  check_setups(setups);
  const std::size_t k_clients = setups.size();
  const ParameterVector w0 = init_params(cfg.mlp);
  auto parts = make_participants(setups, cfg, w0, 0);
  RunResult result = detail::empty_result("sync_fl", k_clients, w0);

  EventQueue queue;
  std::vector<ParameterVector> uploads(k_clients);
  std::vector<std::uint64_t> counts(k_clients, 0);
  std::size_t received = 0;
  Version round = 0;
  double round_start = 0.0;
  std::uint64_t round_bytes = 0;
  const std::uint64_t model_bytes = model_message_bytes(w0.size());

  auto send = [&](int from, int to, ProtocolMessage msg) {
    const std::uint64_t bytes = message_bytes(msg);
    result.ledger.charge(from, to, bytes);
    round_bytes += bytes;
    SimEvent ev;
    ev.time_s = queue.now() + transfer_time(cfg.net, bytes);
    ev.actor = to;
    ev.peer = from;
    ev.kind = EventKind::kDeliver;
    ev.message = std::move(msg);
    ev.bytes = bytes;
    queue.push(std::move(ev));
  };
  auto start_round = [&](Participant& p) {
    const double cost = run_local_round(p, cfg);
    SimEvent ev;
    ev.time_s = queue.now() + cost;
    ev.actor = p.state.client_id;
    ev.kind = EventKind::kTrainComplete;
    ev.label = "TrainComplete";
    queue.push(std::move(ev));
  };

  for (Participant& p : parts) start_round(p);

  while (!queue.empty()) {
    SimEvent ev = queue.pop();
    result.trace.push_back(trace_of(ev));
    const double now = ev.time_s;

    if (ev.kind == EventKind::kTrainComplete) {
      Participant& p = parts[static_cast<std::size_t>(ev.actor - 1)];
      result.deployments.push_back({now, ev.actor, p.state.w});
      result.epoch_marks.push_back({now, ev.actor, p.state.epochs_done});
      send(ev.actor, kServerActor, PushUpdate{ev.actor, p.state.w, round});
      continue;
    }

    if (ev.actor == kServerActor) {
      const auto* push = std::get_if<PushUpdate>(&*ev.message);
      if (!push) throw ProtocolError("sync_fl: server expected PushUpdate");
      const auto idx = static_cast<std::size_t>(push->from - 1);
      uploads[idx] = push->w_k;
      counts[idx] = parts[idx].state.training.size();
      result.accepted_updates[idx] += 1;
      if (++received < k_clients) continue;

      received = 0;
      result.global = fedavg_aggregate(uploads, counts);
      ++round;
      for (const Participant& p : parts) {
        send(kServerActor, p.state.client_id, ModelReply{result.global, round});
      }
      RoundReport report;
      report.round_index = static_cast<std::uint64_t>(round);
      for (const Participant& p : parts) report.per_client_loss.push_back(p.state.epoch_losses.back());
      report.wall_time_sim = now + transfer_time(cfg.net, model_bytes) - round_start;
      report.bytes_this_round = round_bytes;
      round_start += report.wall_time_sim;
      round_bytes = 0;
      result.rounds.push_back(std::move(report));
      continue;
    }

    Participant& p = parts[static_cast<std::size_t>(ev.actor - 1)];
    const auto* reply = std::get_if<ModelReply>(&*ev.message);
    if (!reply) throw ProtocolError("sync_fl: client expected ModelReply");
    p.state.w = reply->w;
    p.state.ver = reply->ver;
    p.state.phase = ClientPhase::kReadyToTrain;
    result.deployments.push_back({now, ev.actor, p.state.w});
    if (p.state.epochs_done >= cfg.total_epochs) {
      result.completion_time_s[static_cast<std::size_t>(ev.actor - 1)] = now;
    } else {
      start_round(p);
    }
  }

  detail::finish(result, queue);
  for (std::size_t i = 0; i < k_clients; ++i) {
    result.final_models[i] = parts[i].state.w;
    result.epoch_losses[i] = parts[i].state.epoch_losses;
  }
  return result;
}

// No exchange at all: each client trains on its own stream.
inline RunResult run_local_only(std::span<const ClientSetup> setups, const EngineConfig& cfg) {
  check_setups(setups);
  const std::size_t k_clients = setups.size();
  const ParameterVector w0 = init_params(cfg.mlp);
  auto parts = make_participants(setups, cfg, w0, 0);
  RunResult result = detail::empty_result("local", k_clients, w0);

  EventQueue queue;
  auto start_round = [&](Participant& p) {
    const double cost = run_local_round(p, cfg);
    SimEvent ev;
    ev.time_s = queue.now() + cost;
    ev.actor = p.state.client_id;
    ev.kind = EventKind::kTrainComplete;
    ev.label = "TrainComplete";
    queue.push(std::move(ev));
  };
  for (Participant& p : parts) start_round(p);

  while (!queue.empty()) {
    SimEvent ev = queue.pop();
    result.trace.push_back(trace_of(ev));
    Participant& p = parts[static_cast<std::size_t>(ev.actor - 1)];
    result.deployments.push_back({ev.time_s, ev.actor, p.state.w});
    result.epoch_marks.push_back({ev.time_s, ev.actor, p.state.epochs_done});
    if (p.state.epochs_done >= cfg.total_epochs) {
      result.completion_time_s[static_cast<std::size_t>(ev.actor - 1)] = ev.time_s;
    } else {
      p.state.phase = ClientPhase::kReadyToTrain;
      start_round(p);
    }
  }

  detail::finish(result, queue);
  for (std::size_t i = 0; i < k_clients; ++i) {
    result.final_models[i] = parts[i].state.w;
    result.epoch_losses[i] = parts[i].state.epoch_losses;
  }
  return result;
}

// Interleaves the clients' training streams frame by frame and renumbers
// the timesteps, giving the server one chronological pooled stream.
inline std::vector<Frame> pool_streams(std::span<const ClientSetup> setups) {
  std::vector<Frame> pooled;
  std::size_t longest = 0;
  for (const ClientSetup& s : setups) longest = std::max(longest, s.train_stream.size());
  for (std::size_t i = 0; i < longest; ++i) {
    for (const ClientSetup& s : setups) {
      if (i < s.train_stream.size()) pooled.push_back(s.train_stream[i]);
    }
  }
  for (std::size_t i = 0; i < pooled.size(); ++i) pooled[i].t = i;
  return pooled;
}

// All raw training data is uploaded once, then a single learner trains on
// the pooled stream with the same hyperparameters. It ingests K clients'
// worth of frames per epoch.
inline RunResult run_centralized(std::span<const ClientSetup> setups, const EngineConfig& cfg) {
  check_setups(setups);
  const std::size_t k_clients = setups.size();
  const ParameterVector w0 = init_params(cfg.mlp);
  RunResult result = detail::empty_result("centralized", k_clients, w0);

  ClientOptions opts = cfg.client;
  opts.shuffle_seed = setups.front().shuffle_seed;
  Participant server{make_client(kServerActor, w0, 0, opts), StreamFeeder(pool_streams(setups)),
                     ClientSpeedProfile{kServerActor, cfg.server_seconds_per_batch}};
  EngineConfig pooled_cfg = cfg;
  pooled_cfg.frames_per_epoch = cfg.frames_per_epoch * k_clients;

  EventQueue queue;
  for (const ClientSetup& s : setups) {
    const std::uint64_t bytes = frame_bytes(s.train_stream);
    result.ledger.charge(s.client_id, kServerActor, bytes);
    SimEvent ev;
    ev.time_s = transfer_time(cfg.net, bytes);
    ev.actor = kServerActor;
    ev.peer = s.client_id;
    ev.kind = EventKind::kDeliver;
    ev.label = "DataUpload";
    ev.bytes = bytes;
    queue.push(std::move(ev));
  }

  std::size_t uploads = 0;
  auto start_round = [&] {
    server.state.phase = ClientPhase::kReadyToTrain;
    const double cost = run_local_round(server, pooled_cfg);
    SimEvent ev;
    ev.time_s = queue.now() + cost;
    ev.actor = kServerActor;
    ev.kind = EventKind::kTrainComplete;
    ev.label = "TrainComplete";
    queue.push(std::move(ev));
  };

  while (!queue.empty()) {
    SimEvent ev = queue.pop();
    result.trace.push_back(trace_of(ev));
    if (ev.kind == EventKind::kDeliver) {
      if (++uploads == k_clients) start_round();
      continue;
    }
    for (const ClientSetup& s : setups) {
      result.deployments.push_back({ev.time_s, s.client_id, server.state.w});
      result.epoch_marks.push_back({ev.time_s, s.client_id, server.state.epochs_done});
    }
    if (server.state.epochs_done < cfg.total_epochs) start_round();
  }

  detail::finish(result, queue);
  result.global = server.state.w;
  for (std::size_t i = 0; i < k_clients; ++i) {
    result.final_models[i] = server.state.w;
    result.completion_time_s[i] = result.end_time_s;
    result.epoch_losses[i] = server.state.epoch_losses;
  }
  return result;
}

}  // namespace asyncfl
