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

#include <gtest/gtest.h>

#include <sstream>

#include "asyncfl/sim.hpp"
#include "test_support.hpp"

namespace asyncfl {
namespace {

using testing::small_engine;
using testing::small_fleet;

TEST(CostModel, ComputeTime) {
  const ClientSpeedProfile fast{1, 0.01};
  const ClientSpeedProfile slow{2, 0.04};
  EXPECT_EQ(compute_time(fast, 0, 1), 0.0);
  EXPECT_DOUBLE_EQ(compute_time(fast, 125, 1), 1.25);
  EXPECT_DOUBLE_EQ(compute_time(slow, 125, 3), 4.0 * compute_time(fast, 125, 3));
}

TEST(CostModel, TransferTime) {
  const NetworkProfile net{0.005, 1e6};
  EXPECT_EQ(transfer_time(net, 0), 0.005);
  EXPECT_EQ(transfer_time(NetworkProfile{0.0, 1e6}, 1000000), 1.0);
}

TEST(CostModel, FrameBytes) {
  EXPECT_EQ(frame_bytes(Frame{0, std::vector<double>(5), 0.0}), 56u);
}

TEST(EventQueue, OrdersByTimeThenClientThenSequence) {
  EventQueue q;
  auto ev = [](double t, int actor, int peer, std::string label) {
    SimEvent e;
    e.time_s = t;
    e.actor = actor;
    e.peer = peer;
    e.label = std::move(label);
    return e;
  };
  q.push(ev(2.0, 1, 0, "late"));
  q.push(ev(1.0, 3, 0, "c3"));
  q.push(ev(1.0, kServerActor, 2, "from2"));
  q.push(ev(1.0, 1, 0, "c1-first"));
  q.push(ev(1.0, 1, 0, "c1-second"));
  std::vector<std::string> order;
  while (!q.empty()) order.push_back(q.pop().label);
  EXPECT_EQ(order, (std::vector<std::string>{"c1-first", "c1-second", "from2", "c3", "late"}));
  EXPECT_EQ(q.enqueued(), 5u);
  EXPECT_EQ(q.processed(), 5u);
  EXPECT_THROW(q.push(ev(1.0, 1, 0, "past")), Error);
}

TEST(Ledger, DirectedAndActorTotals) {
  BandwidthLedger l;
  l.charge(1, 0, 100);
  l.charge(0, 1, 50);
  l.charge(2, 0, 7);
  EXPECT_EQ(l.total_bytes(), 157u);
  EXPECT_EQ(l.directed(1, 0), 100u);
  EXPECT_EQ(l.directed(0, 2), 0u);
  EXPECT_EQ(l.actor_bytes(1), 150u);
  EXPECT_EQ(l.actor_bytes(kServerActor), 157u);
}

TEST(AsyncFl, EveryClientFinishesItsEpochs) {
  const auto setups = small_fleet(4, 1200, {0.01, 0.04, 0.01, 0.02});
  const EngineConfig cfg = small_engine(8);
  const auto run = run_async_fl(setups, cfg);
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_EQ(run.epoch_losses[k].size(), 8u);
    EXPECT_GT(run.completion_time_s[k], 0.0);
    EXPECT_LE(run.completion_time_s[k], run.end_time_s);
  }
  std::uint64_t accepted = 0;
  for (auto a : run.accepted_updates) accepted += a;
  EXPECT_GT(accepted, 0u);
  // The server version starts at a_l and gains one per accepted push.
  std::uint64_t pushes = 0;
  for (const TraceRecord& r : run.trace) pushes += r.action == "PushUpdate" && r.actor == kServerActor;
  EXPECT_EQ(pushes, accepted);
}

TEST(AsyncFl, LedgerMatchesTraceRecount) {
  const auto setups = small_fleet(3, 1200, {0.01, 0.03, 0.02});
  const EngineConfig cfg = small_engine(6);
  const auto run = run_async_fl(setups, cfg);
  EXPECT_EQ(run.ledger.total_bytes(), recount_trace_bytes(run.trace, parameter_count(cfg.mlp)));
  std::uint64_t sum = 0;
  for (const TraceRecord& r : run.trace) sum += r.bytes;
  EXPECT_EQ(sum, run.ledger.total_bytes());
}

TEST(AsyncFl, TraceIsTimeOrdered) {
  const auto run = run_async_fl(small_fleet(3), small_engine(4));
  for (std::size_t i = 1; i < run.trace.size(); ++i) {
    EXPECT_LE(run.trace[i - 1].time_s, run.trace[i].time_s);
  }
}

TEST(AsyncFl, Deterministic) {
  const auto setups = small_fleet(3, 1200, {0.01, 0.04, 0.02});
  const EngineConfig cfg = small_engine(5);
  const auto a = run_async_fl(setups, cfg);
  const auto b = run_async_fl(setups, cfg);
  EXPECT_EQ(a.trace, b.trace);
  EXPECT_EQ(a.ledger, b.ledger);
  EXPECT_EQ(a.global, b.global);
  EXPECT_EQ(a.epoch_losses, b.epoch_losses);
  std::ostringstream ta, tb;
  write_event_trace_csv(ta, a.trace);
  write_event_trace_csv(tb, b.trace);
  EXPECT_EQ(ta.str(), tb.str());
}

TEST(AsyncFl, FasterClientContributesAtLeastAsOften) {
  const auto setups = small_fleet(2, 3000, {0.01, 0.04});
  EngineConfig cfg = small_engine(12);
  cfg.client.a_l = 0;
  cfg.client.a_u = 6;
  const auto run = run_async_fl(setups, cfg);
  EXPECT_GE(run.accepted_updates[0], run.accepted_updates[1]);
  EXPECT_LT(run.completion_time_s[0], run.completion_time_s[1]);
}

TEST(AsyncFl, DoesNotWaitForStragglers) {
  const auto setups = small_fleet(4, 1200, {0.01, 0.04, 0.01, 0.01});
  const EngineConfig cfg = small_engine(6);
  const auto async = run_async_fl(setups, cfg);
  const auto sync = run_fedavg(setups, cfg);
  EXPECT_LT(async.mean_completion_time(), sync.mean_completion_time());
  EXPECT_LT(async.completion_time_s[0], sync.completion_time_s[0]);
}

TEST(AsyncFl, SingleClientWithOpenGatesMatchesLocalOnly) {
  const auto setups = small_fleet(1);
  EngineConfig cfg = small_engine(6);
  cfg.client.a_l = 0;
  cfg.client.a_u = 1000;
  const auto async = run_async_fl(setups, cfg);
  const auto local = run_local_only(setups, cfg);
  ASSERT_EQ(async.epoch_losses[0].size(), 6u);
  for (std::size_t e = 0; e < 6; ++e) {
    EXPECT_NEAR(async.epoch_losses[0][e], local.epoch_losses[0][e], 1e-12 * local.epoch_losses[0][e]);
  }
}

TEST(AsyncFl, RejectsMalformedSetups) {
  auto setups = small_fleet(2);
  setups[1].client_id = 5;
  EXPECT_THROW(run_async_fl(setups, small_engine(2)), Error);
  std::vector<ClientSetup> none;
  EXPECT_THROW(run_async_fl(none, small_engine(2)), Error);
}

TEST(Methods, NamesRoundTrip) {
  for (Method m : kAllMethods) EXPECT_EQ(parse_method(method_name(m)), m);
  EXPECT_FALSE(parse_method("fedprox"));
}

TEST(Metrics, GridCoversRunAndEndTime) {
  const auto setups = small_fleet(2);
  const EngineConfig cfg = small_engine(3);
  const auto run = run_async_fl(setups, cfg);
  const auto log = metrics_from_run(run, setups, cfg.mlp, cfg.hyper.norm, 0.5);
  std::size_t overall = 0;
  double last = -1.0;
  for (const MetricRow& r : log.rows) {
    if (r.scope == "overall" && r.metric == "rmse") {
      ++overall;
      last = r.sim_time_s;
    }
  }
  std::size_t points = 0;
  while (0.5 * static_cast<double>(points) < run.end_time_s) ++points;
  EXPECT_EQ(overall, points + 1);
  EXPECT_EQ(last, run.end_time_s);
}

TEST(Metrics, EndOfRunRmseMatchesSummary) {
  const auto setups = small_fleet(2);
  const EngineConfig cfg = small_engine(3);
  const auto run = run_fedavg(setups, cfg);
  const auto log = metrics_from_run(run, setups, cfg.mlp, cfg.hyper.norm, 1.0);
  const auto summary = summarize(run, setups, cfg.mlp, cfg.hyper.norm);
  ASSERT_EQ(summary.size(), 4u);
  EXPECT_EQ(summary[2].vehicle, "overall_pooled");
  EXPECT_EQ(summary[3].vehicle, "overall_mean");
  for (const MetricRow& r : log.rows) {
    if (r.sim_time_s == run.end_time_s && r.metric == "rmse") {
      if (r.scope == "client.1") EXPECT_DOUBLE_EQ(r.value, summary[0].rmse);
      if (r.scope == "client.2") EXPECT_DOUBLE_EQ(r.value, summary[1].rmse);
      if (r.scope == "overall") EXPECT_DOUBLE_EQ(r.value, summary[2].rmse);
    }
  }
}

}  // namespace
}  // namespace asyncfl
