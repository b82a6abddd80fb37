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

// Event-driven runner for the asynchronous protocol, plus a single entry
// point that runs any training method and turns its timeline into metrics.

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "asyncfl/baselines.hpp"
#include "asyncfl/error.hpp"
#include "asyncfl/metrics.hpp"
#include "asyncfl/model.hpp"
#include "asyncfl/protocol.hpp"
#include "asyncfl/sim_core.hpp"

namespace asyncfl {

// Clients start from the shared initial model tagged version 0 while the
// server starts at a_l, so the first gate sees d = a_l and pushes. Every
// epoch, including the last, ends with a version check; a client is done
// once that final exchange has settled.
inline RunResult run_async_fl(std::span<const ClientSetup> setups, const EngineConfig& cfg) {
  check_setups(setups);
  const std::size_t k_clients = setups.size();
  const ParameterVector w0 = init_params(cfg.mlp);
  GlobalModelState server = server_init(w0, cfg.client.a_l);
  auto parts = make_participants(setups, cfg, w0, 0);
  RunResult result = detail::empty_result("async_fl", k_clients, w0);

  EventQueue queue;
  auto send = [&](int from, int to, ProtocolMessage msg) {
    const std::uint64_t bytes = message_bytes(msg);
    result.ledger.charge(from, to, bytes);
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
  auto fail = [&](const SimEvent& ev, const std::string& why) {
    return ProtocolError("async_fl: event seq " + std::to_string(ev.seq) + " at t=" +
                         detail::format_double(ev.time_s) + " (" + actor_name(ev.actor) +
                         "): " + why);
  };

  for (Participant& p : parts) start_round(p);

  while (!queue.empty()) {
    SimEvent ev = queue.pop();
    result.trace.push_back(trace_of(ev));
    const double now = ev.time_s;

    try {
      if (ev.kind == EventKind::kTrainComplete) {
        Participant& p = parts[static_cast<std::size_t>(ev.actor - 1)];
        result.deployments.push_back({now, ev.actor, p.state.w});
        result.epoch_marks.push_back({now, ev.actor, p.state.epochs_done});
        auto step = client_step(p.state, std::nullopt);
        send(ev.actor, kServerActor, std::move(*step.outbound));
        continue;
      }

      if (ev.actor == kServerActor) {
        const Version before = server.ver;
        ServerResult handled = server_handle(server, *ev.message);
        if (server.ver != before + (handled.accepted_update ? 1 : 0)) {
          throw fail(ev, "global version moved unexpectedly");
        }
        if (handled.accepted_update) result.accepted_updates[static_cast<std::size_t>(ev.peer - 1)] += 1;
        send(kServerActor, ev.peer, std::move(handled.reply));
        continue;
      }

      Participant& p = parts[static_cast<std::size_t>(ev.actor - 1)];
      const bool adopts = std::holds_alternative<ModelReply>(*ev.message);
      ClientStepResult step = client_step(p.state, ev.message);
      if (p.state.ver > server.ver) throw fail(ev, "client version ahead of the server");
      if (adopts) result.deployments.push_back({now, ev.actor, p.state.w});
      if (step.outbound) send(ev.actor, kServerActor, std::move(*step.outbound));
      if (step.resume_training) {
        if (p.state.epochs_done >= cfg.total_epochs) {
          result.completion_time_s[static_cast<std::size_t>(ev.actor - 1)] = now;
        } else {
          start_round(p);
        }
      }
    } catch (const ProtocolError&) {
      throw;
    } catch (const Error& e) {
      throw fail(ev, e.what());
    }
  }

  detail::finish(result, queue);
  result.global = server.w;
  for (std::size_t i = 0; i < k_clients; ++i) {
    result.final_models[i] = parts[i].state.w;
    result.epoch_losses[i] = parts[i].state.epoch_losses;
  }
  return result;
}

enum class Method { kAsyncFl, kSyncFl, kCentralized, kLocal };

inline constexpr Method kAllMethods[] = {Method::kAsyncFl, Method::kSyncFl, Method::kCentralized,
                                         Method::kLocal};

inline std::string_view method_name(Method m) {
  switch (m) {
    case Method::kAsyncFl: return "async_fl";
    case Method::kSyncFl: return "sync_fl";
    case Method::kCentralized: return "centralized";
    case Method::kLocal: return "local";
  }
  return "?";
}

inline std::optional<Method> parse_method(std::string_view name) {
  for (Method m : kAllMethods) {
    if (method_name(m) == name) return m;
  }
  return std::nullopt;
}

inline RunResult run_method(Method method, std::span<const ClientSetup> setups,
                            const EngineConfig& cfg) {
  switch (method) {
    case Method::kAsyncFl: return run_async_fl(setups, cfg);
    case Method::kSyncFl: return run_fedavg(setups, cfg);
    case Method::kCentralized: return run_centralized(setups, cfg);
    case Method::kLocal: return run_local_only(setups, cfg);
  }
  throw Error("unknown method");
}

// Samples every client's deployed model on a fixed clock grid (plus the end
// time). Deployed models are piecewise constant between events, so sampling
// afterwards sees exactly what an in-loop probe would.
inline MetricsLog metrics_from_run(const RunResult& run, std::span<const ClientSetup> setups,
                                   const MlpConfig& mlp, const Normalizer& norm,
                                   double eval_interval_s) {
  MetricsLog log;
  const std::size_t k_clients = setups.size();

  for (const EpochMark& m : run.epoch_marks) {
    log.add(m.time_s, actor_name(m.client_id), "epochs_done", static_cast<double>(m.epochs_done));
  }

  std::vector<double> grid;
  if (eval_interval_s > 0.0) {
    for (std::size_t i = 0;; ++i) {
      const double g = static_cast<double>(i) * eval_interval_s;
      if (g >= run.end_time_s) break;
      grid.push_back(g);
    }
  }
  grid.push_back(run.end_time_s);

  std::vector<std::vector<const Deployment*>> per_client(k_clients);
  for (const Deployment& d : run.deployments) {
    per_client[static_cast<std::size_t>(d.client_id - 1)].push_back(&d);
  }

  std::vector<std::size_t> cursor(k_clients, 0);
  std::vector<const Deployment*> cached_for(k_clients, nullptr);
  std::vector<double> cached_sq(k_clients, 0.0);
  std::vector<std::size_t> counts(k_clients);
  for (std::size_t k = 0; k < k_clients; ++k) counts[k] = setups[k].eval_frames.size();

  for (double g : grid) {
    std::vector<double> rmses(k_clients);
    double total_sq = 0.0;
    for (std::size_t k = 0; k < k_clients; ++k) {
      const auto& deps = per_client[k];
      while (cursor[k] + 1 < deps.size() && deps[cursor[k] + 1]->time_s <= g) ++cursor[k];
      const Deployment* d = deps[cursor[k]];
      if (d != cached_for[k]) {
        const auto acc = accumulated_sq_error(d->w, mlp, norm, setups[k].eval_frames);
        cached_sq[k] = acc.back();
        cached_for[k] = d;
      }
      rmses[k] = std::sqrt(cached_sq[k] / static_cast<double>(counts[k]));
      total_sq += cached_sq[k];
      log.add(g, actor_name(static_cast<int>(k + 1)), "rmse", rmses[k]);
      log.add(g, actor_name(static_cast<int>(k + 1)), "acc_sq_err", cached_sq[k]);
    }
    log.add(g, "overall", "rmse", overall_rmse(rmses, counts));
    log.add(g, "overall", "acc_sq_err", total_sq);
  }
  return log;
}

// One row per vehicle followed by the two cross-vehicle aggregates.
inline std::vector<SummaryRow> summarize(const RunResult& run, std::span<const ClientSetup> setups,
                                         const MlpConfig& mlp, const Normalizer& norm) {
  std::vector<SummaryRow> rows;
  std::vector<double> rmses;
  std::vector<std::size_t> counts;
  const std::string method = run.method;
  for (std::size_t k = 0; k < setups.size(); ++k) {
    const double r = eval_rmse(run.final_models[k], mlp, norm, setups[k].eval_frames);
    rmses.push_back(r);
    counts.push_back(setups[k].eval_frames.size());
    rows.push_back({method, std::to_string(k + 1), r, run.completion_time_s[k],
                    run.ledger.actor_bytes(static_cast<int>(k + 1))});
  }
  const double mean_time = run.mean_completion_time();
  rows.push_back({method, "overall_pooled", overall_rmse(rmses, counts), mean_time,
                  run.ledger.total_bytes()});
  rows.push_back({method, "overall_mean", overall_mean_rmse(rmses), mean_time,
                  run.ledger.total_bytes()});
  return rows;
}

// Re-derives the byte total from the trace alone.
inline std::uint64_t recount_trace_bytes(std::span<const TraceRecord> trace,
                                         std::size_t parameter_count) {
  std::uint64_t total = 0;
  for (const TraceRecord& r : trace) {
    if (r.action == "PushUpdate" || r.action == "ModelReply") {
      total += model_message_bytes(parameter_count);
    } else if (r.action == "PullVersion" || r.action == "VersionReply" || r.action == "FetchModel") {
      total += kHeaderBytes;
    } else if (r.action == "DataUpload") {
      total += r.bytes;
    }
  }
  return total;
}

}  // namespace asyncfl
