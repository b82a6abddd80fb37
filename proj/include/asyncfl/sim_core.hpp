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

// Discrete-event plumbing shared by every training engine: cost model,
// event queue, bandwidth ledger, trace records and the per-run result.

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <queue>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "asyncfl/error.hpp"
#include "asyncfl/model.hpp"
#include "asyncfl/protocol.hpp"
#include "asyncfl/streaming.hpp"

namespace asyncfl {

inline constexpr int kServerActor = 0;

inline std::string actor_name(int actor) {
  return actor == kServerActor ? "server" : "client." + std::to_string(actor);
}

struct ClientSpeedProfile {
  int client_id = 1;
  double seconds_per_batch = 0.01;
};

struct NetworkProfile {
  double latency_s = 0.005;
  double bytes_per_second = 1.0e6;
};

inline double compute_time(const ClientSpeedProfile& profile, std::uint64_t n_batches,
                           std::uint64_t n_epochs) {
  return profile.seconds_per_batch * static_cast<double>(n_batches) * static_cast<double>(n_epochs);
}

inline double transfer_time(const NetworkProfile& net, std::uint64_t n_bytes) {
  return net.latency_s + static_cast<double>(n_bytes) / net.bytes_per_second;
}

// 8 bytes per feature, per angle and per timestamp.
inline std::uint64_t frame_bytes(const Frame& f) { return 8 * f.features.size() + 16; }

inline std::uint64_t frame_bytes(std::span<const Frame> frames) {
  std::uint64_t total = 0;
  for (const Frame& f : frames) total += frame_bytes(f);
  return total;
}

enum class EventKind { kTrainComplete, kDeliver };

struct SimEvent {
  double time_s = 0.0;
  std::uint64_t seq = 0;
  int actor = kServerActor;  // who handles the event
  int peer = kServerActor;   // sender, for deliveries
  EventKind kind = EventKind::kTrainComplete;
  std::optional<ProtocolMessage> message;
  std::uint64_t bytes = 0;
  std::string label;  // trace action for non-protocol payloads

  // Client whose id breaks ties at equal timestamps.
  int tiebreak() const { return actor == kServerActor ? peer : actor; }
};

// Min-queue on (time, client id, insertion sequence).
class EventQueue {
 public:
  std::uint64_t push(SimEvent ev) {
    if (ev.time_s < now_) throw Error("event scheduled in the past");
    ev.seq = next_seq_++;
    heap_.push(std::move(ev));
    ++enqueued_;
    return next_seq_ - 1;
  }

  SimEvent pop() {
    SimEvent ev = heap_.top();
    heap_.pop();
    if (ev.time_s < now_) throw Error("clock went backwards");
    now_ = ev.time_s;
    ++processed_;
    return ev;
  }

  bool empty() const { return heap_.empty(); }
  double now() const { return now_; }
  std::uint64_t enqueued() const { return enqueued_; }
  std::uint64_t processed() const { return processed_; }

 private:
  struct Later {
    bool operator()(const SimEvent& a, const SimEvent& b) const {
      if (a.time_s != b.time_s) return a.time_s > b.time_s;
      if (a.tiebreak() != b.tiebreak()) return a.tiebreak() > b.tiebreak();
      return a.seq > b.seq;
    }
  };
  std::priority_queue<SimEvent, std::vector<SimEvent>, Later> heap_;
  std::uint64_t next_seq_ = 0;
  std::uint64_t enqueued_ = 0;
  std::uint64_t processed_ = 0;
  double now_ = 0.0;
};

class BandwidthLedger {
 public:
  void charge(int from, int to, std::uint64_t bytes) {
    directed_[{from, to}] += bytes;
    total_ += bytes;
  }

  std::uint64_t total_bytes() const { return total_; }

  std::uint64_t directed(int from, int to) const {
    const auto it = directed_.find({from, to});
    return it == directed_.end() ? 0 : it->second;
  }

  // Bytes sent plus bytes received by one actor.
  std::uint64_t actor_bytes(int actor) const {
    std::uint64_t sum = 0;
    for (const auto& [key, bytes] : directed_) {
      if (key.first == actor || key.second == actor) sum += bytes;
    }
    return sum;
  }

  const std::map<std::pair<int, int>, std::uint64_t>& entries() const { return directed_; }

  friend bool operator==(const BandwidthLedger&, const BandwidthLedger&) = default;

 private:
  std::map<std::pair<int, int>, std::uint64_t> directed_;
  std::uint64_t total_ = 0;
};

struct TraceRecord {
  double time_s = 0.0;
  std::uint64_t seq = 0;
  int actor = kServerActor;
  std::string action;
  std::uint64_t bytes = 0;

  friend bool operator==(const TraceRecord&, const TraceRecord&) = default;
};

inline TraceRecord trace_of(const SimEvent& ev) {
  std::string action = ev.message ? std::string(message_name(*ev.message)) : ev.label;
  return {ev.time_s, ev.seq, ev.actor, std::move(action), ev.bytes};
}

inline void write_event_trace_csv(std::ostream& out, std::span<const TraceRecord> trace) {
  out << "time_s,seq,actor,action,bytes\n";
  for (const TraceRecord& r : trace) {
    out << detail::format_double(r.time_s) << ',' << r.seq << ',' << actor_name(r.actor) << ','
        << r.action << ',' << r.bytes << '\n';
  }
}

// A client's usable model changed at time_s.
struct Deployment {
  double time_s = 0.0;
  int client_id = 1;
  ParameterVector w;
};

struct EpochMark {
  double time_s = 0.0;
  int client_id = 1;
  std::uint64_t epochs_done = 0;
};

struct RoundReport {
  std::uint64_t round_index = 0;
  std::vector<double> per_client_loss;
  double wall_time_sim = 0.0;
  std::uint64_t bytes_this_round = 0;
};

struct ClientSetup {
  int client_id = 1;
  std::vector<Frame> train_stream;
  std::vector<Frame> eval_frames;
  ClientSpeedProfile speed;
  std::uint64_t shuffle_seed = 0;
};

struct EngineConfig {
  MlpConfig mlp;
  ClientOptions client;
  TrainingHyper hyper;
  std::uint64_t total_epochs = 50;
  std::size_t frames_per_epoch = 140;
  NetworkProfile net;
  double server_seconds_per_batch = 0.01;
};

struct RunResult {
  std::string method;
  ParameterVector global;
  std::vector<ParameterVector> final_models;  // index client_id - 1
  std::vector<double> completion_time_s;
  std::vector<std::vector<double>> epoch_losses;
  std::vector<std::uint64_t> accepted_updates;
  std::vector<Deployment> deployments;
  std::vector<EpochMark> epoch_marks;
  std::vector<RoundReport> rounds;
  BandwidthLedger ledger;
  std::vector<TraceRecord> trace;
  double end_time_s = 0.0;

  double mean_completion_time() const {
    if (completion_time_s.empty()) return 0.0;
    double s = 0.0;
    for (double t : completion_time_s) s += t;
    return s / static_cast<double>(completion_time_s.size());
  }
  double makespan() const {
    double m = 0.0;
    for (double t : completion_time_s) m = std::max(m, t);
    return m;
  }
};

inline void check_setups(std::span<const ClientSetup> setups) {
  if (setups.empty()) throw Error("need at least one client");
  for (std::size_t i = 0; i < setups.size(); ++i) {
    if (setups[i].client_id != static_cast<int>(i + 1)) {
      throw Error("client ids must be 1..K in order");
    }
    if (setups[i].train_stream.empty()) {
      throw StreamError("client " + std::to_string(i + 1) + " has no training data");
    }
    if (!(setups[i].speed.seconds_per_batch > 0.0)) {
      throw Error("seconds_per_batch must be positive");
    }
  }
}

// One simulated edge learner: protocol state plus its data feed.
struct Participant {
  ClientState state;
  StreamFeeder feeder;
  ClientSpeedProfile speed;
};

inline std::vector<Participant> make_participants(std::span<const ClientSetup> setups,
                                                  const EngineConfig& cfg,
                                                  const ParameterVector& w0, Version ver0) {
  std::vector<Participant> out;
  for (const ClientSetup& s : setups) {
    ClientOptions opts = cfg.client;
    opts.shuffle_seed = s.shuffle_seed;
    out.push_back({make_client(s.client_id, w0, ver0, opts), StreamFeeder(s.train_stream), s.speed});
  }
  return out;
}

// Streams in the next round's frames, trains, and returns its compute cost.
inline double run_local_round(Participant& p, const EngineConfig& cfg) {
  p.feeder.ingest(p.state.storage, p.state.training,
                  cfg.frames_per_epoch * static_cast<std::size_t>(p.state.epochs_per_round));
  client_train_round(p.state, cfg.mlp, cfg.hyper);
  const std::uint64_t per_epoch = batch_count(p.state.training.size(), cfg.hyper.batch_size);
  return compute_time(p.speed, per_epoch, static_cast<std::uint64_t>(p.state.epochs_per_round));
}

}  // namespace asyncfl
