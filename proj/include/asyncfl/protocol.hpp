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

// Version-gated asynchronous aggregation.
//
// The server keeps (w, ver). A client trains locally, asks for the global
// version, and decides from the staleness d = ver - ver_k whether to refetch
// (d > a_u), keep training (d < a_l) or push its weights (a_l <= d <= a_u).
// A pushed model is folded in with weight alpha = 1 / (d + 1), where d is
// measured when the push is applied.
//
// Both sides are plain state machines driven by ProtocolMessage values, so
// they can sit behind the simulator or any real transport.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "asyncfl/error.hpp"
#include "asyncfl/model.hpp"
#include "asyncfl/streaming.hpp"

namespace asyncfl {

using Version = std::int64_t;

struct GlobalModelState {
  ParameterVector w;
  Version ver = 0;
};

struct PullVersion {
  int from = 0;
};
struct VersionReply {
  Version ver = 0;
};
struct PushUpdate {
  int from = 0;
  ParameterVector w_k;
  Version ver_k = 0;  // version w_k derives from, never the server's current one
};
struct FetchModel {
  int from = 0;
};
struct ModelReply {
  ParameterVector w;
  Version ver = 0;
};

using ProtocolMessage = std::variant<PullVersion, VersionReply, PushUpdate, FetchModel, ModelReply>;

inline constexpr std::uint64_t kHeaderBytes = 64;
inline constexpr std::uint64_t kBytesPerParameter = 8;

inline std::uint64_t model_message_bytes(std::size_t parameter_count) {
  return kHeaderBytes + kBytesPerParameter * parameter_count;
}

inline std::string_view message_name(const ProtocolMessage& msg) {
  struct Namer {
    std::string_view operator()(const PullVersion&) const { return "PullVersion"; }
    std::string_view operator()(const VersionReply&) const { return "VersionReply"; }
    std::string_view operator()(const PushUpdate&) const { return "PushUpdate"; }
    std::string_view operator()(const FetchModel&) const { return "FetchModel"; }
    std::string_view operator()(const ModelReply&) const { return "ModelReply"; }
  };
  return std::visit(Namer{}, msg);
}

// Canonical on-the-wire size used for bandwidth accounting.
inline std::uint64_t message_bytes(const ProtocolMessage& msg) {
  if (const auto* p = std::get_if<PushUpdate>(&msg)) return model_message_bytes(p->w_k.size());
  if (const auto* r = std::get_if<ModelReply>(&msg)) return model_message_bytes(r->w.size());
  return kHeaderBytes;
}

enum class GateDecision { kTooOld, kTooFresh, kSend };

inline std::string_view to_string(GateDecision g) {
  switch (g) {
    case GateDecision::kTooOld: return "TooOld";
    case GateDecision::kTooFresh: return "TooFresh";
    case GateDecision::kSend: return "Send";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Server side.

inline GlobalModelState server_init(ParameterVector w0, Version a_l) {
  if (a_l < 0) throw ProtocolError("a_l must be non-negative");
  return {std::move(w0), a_l};
}

inline double staleness_weight(Version ver, Version ver_k) {
  return 1.0 / static_cast<double>(ver - ver_k + 1);
}

inline GlobalModelState server_aggregate(const GlobalModelState& state, const ParameterVector& w_k,
                                         Version ver_k) {
  if (ver_k > state.ver) {
    throw ProtocolError("push claims version " + std::to_string(ver_k) +
                        " ahead of global version " + std::to_string(state.ver));
  }
  if (ver_k < 0) throw ProtocolError("negative client version");
  if (w_k.size() != state.w.size()) {
    throw DimensionError("pushed model has " + std::to_string(w_k.size()) + " parameters, global has " +
                         std::to_string(state.w.size()));
  }
  const double alpha = staleness_weight(state.ver, ver_k);
  GlobalModelState next{ParameterVector(state.w.size()), state.ver + 1};
  for (std::size_t i = 0; i < w_k.size(); ++i) {
    next.w[i] = (1.0 - alpha) * state.w[i] + alpha * w_k[i];
  }
  return next;
}

struct ServerResult {
  ProtocolMessage reply;
  bool accepted_update = false;
};

// Applies one inbound message atomically. The reply goes back to the sender.
inline ServerResult server_handle(GlobalModelState& state, const ProtocolMessage& msg) {
  if (std::holds_alternative<PullVersion>(msg)) {
    return {VersionReply{state.ver}, false};
  }
  if (const auto* push = std::get_if<PushUpdate>(&msg)) {
    state = server_aggregate(state, push->w_k, push->ver_k);
    return {ModelReply{state.w, state.ver}, true};
  }
  if (std::holds_alternative<FetchModel>(msg)) {
    return {ModelReply{state.w, state.ver}, false};
  }
  throw ProtocolError("server received client-bound message " + std::string(message_name(msg)));
}

// ---------------------------------------------------------------------------
// Client side.

inline GateDecision client_gate(Version global_ver, Version ver_k, Version a_l, Version a_u) {
  const Version d = global_ver - ver_k;
  if (d > a_u) return GateDecision::kTooOld;
  if (d < a_l) return GateDecision::kTooFresh;
  return GateDecision::kSend;
}

enum class ClientPhase {
  kReadyToTrain,
  kRoundDone,
  kAwaitingVersion,
  kAwaitingModel,      // after FetchModel
  kAwaitingAggregate,  // after PushUpdate
};

inline std::string_view to_string(ClientPhase p) {
  switch (p) {
    case ClientPhase::kReadyToTrain: return "ReadyToTrain";
    case ClientPhase::kRoundDone: return "RoundDone";
    case ClientPhase::kAwaitingVersion: return "AwaitingVersion";
    case ClientPhase::kAwaitingModel: return "AwaitingModel";
    case ClientPhase::kAwaitingAggregate: return "AwaitingAggregate";
  }
  return "?";
}

struct ProtocolCounters {
  std::uint64_t pushes = 0;
  std::uint64_t fetches = 0;
  std::uint64_t skips = 0;  // TooFresh decisions
};

struct TrainingHyper {
  std::size_t batch_size = 16;
  Normalizer norm;
};

struct ClientState {
  int client_id = 0;
  ParameterVector w;
  Version ver = 0;  // version of the global model w was last synced from
  Version a_l = 2;
  Version a_u = 6;
  int epochs_per_round = 1;
  AdamState optimizer;
  StorageWindow storage{100};
  TrainingWindow training{2000};

  ClientPhase phase = ClientPhase::kReadyToTrain;
  std::uint64_t epochs_done = 0;
  std::uint64_t shuffle_seed = 0;  // epoch e shuffles with shuffle_seed + e
  std::uint64_t batches_last_round = 0;
  std::vector<double> epoch_losses;
  ProtocolCounters counters;
};

struct ClientOptions {
  Version a_l = 2;
  Version a_u = 6;
  int epochs_per_round = 1;
  std::size_t storage_capacity = 100;
  std::size_t training_capacity = 2000;
  double learning_rate = 1e-5;
  double beta1 = 0.6;
  double beta2 = 0.99;
  double epsilon = 1e-8;
  std::uint64_t shuffle_seed = 0;
};

inline ClientState make_client(int client_id, ParameterVector w, Version ver,
                               const ClientOptions& opts) {
  if (opts.a_l < 0 || opts.a_l > opts.a_u) {
    throw ProtocolError("gating bounds need 0 <= a_l <= a_u");
  }
  if (opts.epochs_per_round < 1) throw ProtocolError("epochs_per_round must be >= 1");
  ClientState c;
  c.client_id = client_id;
  c.optimizer = AdamState::fresh(w.size(), opts.learning_rate, opts.beta1, opts.beta2, opts.epsilon);
  c.w = std::move(w);
  c.ver = ver;
  c.a_l = opts.a_l;
  c.a_u = opts.a_u;
  c.epochs_per_round = opts.epochs_per_round;
  c.storage = StorageWindow(opts.storage_capacity);
  c.training = TrainingWindow(opts.training_capacity);
  c.shuffle_seed = opts.shuffle_seed;
  return c;
}

// E local epochs of mini-batch Adam over the training window. The windows
// themselves are not touched.
inline void client_train_round(ClientState& client, const MlpConfig& config,
                               const TrainingHyper& hyper) {
  if (client.training.empty()) {
    throw StreamError("client " + std::to_string(client.client_id) + ": empty training window");
  }
  if (client.phase != ClientPhase::kReadyToTrain) {
    throw ProtocolError("client " + std::to_string(client.client_id) + " cannot train in phase " +
                        std::string(to_string(client.phase)));
  }
  client.batches_last_round = 0;
  for (int e = 0; e < client.epochs_per_round; ++e) {
    const auto batches = make_batches(client.training, hyper.batch_size,
                                      client.shuffle_seed + client.epochs_done, hyper.norm);
    double weighted = 0.0;
    std::size_t seen = 0;
    for (const Batch& b : batches) {
      auto lg = loss_and_gradient(client.w, config, b);
      adam_step(client.w, lg.gradient, client.optimizer);
      weighted += lg.loss * static_cast<double>(b.size());
      seen += b.size();
    }
    client.epoch_losses.push_back(weighted / static_cast<double>(seen));
    client.epochs_done += 1;
    client.batches_last_round += batches.size();
  }
  client.phase = ClientPhase::kRoundDone;
}

struct ClientStepResult {
  std::optional<ProtocolMessage> outbound;
  bool resume_training = false;
  std::optional<GateDecision> gate;
};

// Advances the client after a finished round (no inbound message) or on a
// server reply.
inline ClientStepResult client_step(ClientState& client,
                                    const std::optional<ProtocolMessage>& inbound) {
  const auto unexpected = [&](std::string_view what) {
    return ProtocolError("client " + std::to_string(client.client_id) + ": unexpected " +
                         std::string(what) + " in phase " + std::string(to_string(client.phase)));
  };

  if (!inbound) {
    if (client.phase != ClientPhase::kRoundDone) throw unexpected("step without reply");
    client.phase = ClientPhase::kAwaitingVersion;
    return {PullVersion{client.client_id}, false, std::nullopt};
  }

  if (const auto* vr = std::get_if<VersionReply>(&*inbound)) {
    if (client.phase != ClientPhase::kAwaitingVersion) throw unexpected("VersionReply");
    if (vr->ver < client.ver) {
      throw ProtocolError("client " + std::to_string(client.client_id) + " holds version " +
                          std::to_string(client.ver) + " newer than global " +
                          std::to_string(vr->ver));
    }
    const GateDecision gate = client_gate(vr->ver, client.ver, client.a_l, client.a_u);
    switch (gate) {
      case GateDecision::kTooOld:
        client.phase = ClientPhase::kAwaitingModel;
        client.counters.fetches += 1;
        return {FetchModel{client.client_id}, false, gate};
      case GateDecision::kTooFresh:
        client.phase = ClientPhase::kReadyToTrain;
        client.counters.skips += 1;
        return {std::nullopt, true, gate};
      case GateDecision::kSend:
        client.phase = ClientPhase::kAwaitingAggregate;
        client.counters.pushes += 1;
        return {PushUpdate{client.client_id, client.w, client.ver}, false, gate};
    }
  }

  if (const auto* mr = std::get_if<ModelReply>(&*inbound)) {
    if (client.phase != ClientPhase::kAwaitingModel &&
        client.phase != ClientPhase::kAwaitingAggregate) {
      throw unexpected("ModelReply");
    }
    if (mr->w.size() != client.w.size()) throw DimensionError("ModelReply size mismatch");
    client.w = mr->w;
    client.ver = mr->ver;
    client.phase = ClientPhase::kReadyToTrain;
    return {std::nullopt, true, std::nullopt};
  }

  throw unexpected(message_name(*inbound));
}

}  // namespace asyncfl
