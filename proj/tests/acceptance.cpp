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

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "asyncfl/scenario.hpp"

namespace fs = std::filesystem;
using namespace asyncfl;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const char* title, double budget_s, const std::function<Outcome()>& check) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool ok = o.pass && secs < budget_s;
  if (!ok) ++failures;
  std::printf("criterion %d: %s  %s  [%s; %.2fs of %.0fs]\n", id, ok ? "PASS" : "FAIL", title,
              o.detail.c_str(), secs, budget_s);
  std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome aggregation_exactness() {
  std::mt19937_64 rng(20261014);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  double worst = 0.0;
  bool versions_ok = true;
  for (int trial = 0; trial < 1000; ++trial) {
    const Version ver = static_cast<Version>(rng() % 1000);
    const Version ver_k = static_cast<Version>(rng() % (ver + 1));
    const std::size_t n = 1 + rng() % 200;
    ParameterVector w(n), wk(n);
    for (std::size_t i = 0; i < n; ++i) {
      w[i] = u(rng);
      wk[i] = u(rng);
    }
    const GlobalModelState next = server_aggregate({w, ver}, wk, ver_k);
    versions_ok = versions_ok && next.ver == ver + 1;
    const long double alpha = 1.0L / static_cast<long double>(ver - ver_k + 1);
    for (std::size_t i = 0; i < n; ++i) {
      const long double expected = (1.0L - alpha) * w[i] + alpha * wk[i];
      const long double err = std::fabs(static_cast<long double>(next.w[i]) - expected);
      const long double scale = std::max(std::fabs(expected), 1e-300L);
      worst = std::max(worst, static_cast<double>(err / scale));
    }
  }
  return {versions_ok && worst < 1e-12, "max rel err " + fmt("%.3g", worst) +
                                            (versions_ok ? ", ver +1 each call" : ", version step wrong")};
}

Outcome gating_exhaustiveness() {
  std::mt19937_64 rng(7);
  std::size_t checked = 0, wrong = 0;
  auto sweep = [&](Version lo, Version hi) {
    for (Version d = 0; d <= 20; ++d) {
      const Version ver_k = static_cast<Version>(rng() % 50);
      const GateDecision g = client_gate(ver_k + d, ver_k, lo, hi);
      const GateDecision want =
          d > hi ? GateDecision::kTooOld : (d < lo ? GateDecision::kTooFresh : GateDecision::kSend);
      ++checked;
      wrong += g != want;
    }
    wrong += client_gate(lo, 0, lo, hi) != GateDecision::kSend;
    wrong += client_gate(hi, 0, lo, hi) != GateDecision::kSend;
    checked += 2;
  };
  sweep(2, 6);
  for (int i = 0; i < 100; ++i) {
    const Version lo = static_cast<Version>(rng() % 15);
    sweep(lo, lo + static_cast<Version>(rng() % 15));
  }
  return {wrong == 0, std::to_string(checked) + " cases, " + std::to_string(wrong) + " wrong"};
}

Outcome gradient_correctness() {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst = 0.0;
  std::size_t bad = 0;
  for (int trial = 0; trial < 100; ++trial) {
    MlpConfig cfg{{5, 16, 1}, Activation::kRelu, rng()};
    ParameterVector p = init_params(cfg);
    for (double& v : p) v += 0.05 * u(rng);
    Batch b;
    const std::size_t rows = 1 + rng() % 16;
    b.inputs = Matrix(rows, 5);
    for (double& v : b.inputs.data) v = u(rng);
    for (std::size_t r = 0; r < rows; ++r) b.targets.push_back(u(rng));
    const ParameterVector g = backward(p, cfg, b);
    const double h = 1e-5;
    for (std::size_t i = 0; i < p.size(); ++i) {
      ParameterVector plus = p, minus = p;
      plus[i] += h;
      minus[i] -= h;
      const double fd = (mse_loss(forward(plus, cfg, b.inputs), b.targets) -
                         mse_loss(forward(minus, cfg, b.inputs), b.targets)) /
                        (2 * h);
      const double diff = std::abs(fd - g[i]);
      const double scale = std::max(std::abs(fd), std::abs(g[i]));
      // Coordinates whose gradient is zero on both sides (dead units) have no
      // relative error to speak of; they must agree to rounding.
      if (scale < 1e-10) {
        bad += diff > 1e-10;
        continue;
      }
      worst = std::max(worst, diff / scale);
      bad += diff / scale > 1e-4;
    }
  }
  return {bad == 0, "max rel err " + fmt("%.3g", worst) + ", " + std::to_string(bad) + " coordinates over 1e-4"};
}

Outcome window_semantics() {
  std::mt19937_64 rng(4);
  std::size_t violations = 0, flushes = 0, evicted_total_all = 0;
  for (int trial = 0; trial < 5; ++trial) {
    StorageWindow storage(100);
    TrainingWindow training(2000);
    std::deque<std::uint64_t> expected;  // reference FIFO of training timestamps
    std::size_t evicted_total = 0;
    std::uint64_t t = rng() % 10;
    for (std::size_t i = 0; i < 10000; ++i) {
      t += 1 + rng() % 3;
      if (push_frame(storage, Frame{t, {0, 0, 0, 0, 0}, 0.0}) == FlushSignal::kReady) {
        const std::size_t before = training.size();
        for (const Frame& f : storage.frames()) expected.push_back(f.t);
        const std::vector<Frame> evicted = flush(storage, training);
        ++flushes;
        const std::size_t overflow = before + 100 > 2000 ? before + 100 - 2000 : 0;
        violations += evicted.size() != overflow;
        for (const Frame& f : evicted) {
          violations += expected.empty() || expected.front() != f.t;
          if (!expected.empty()) expected.pop_front();
        }
        evicted_total += evicted.size();
      }
      violations += training.size() > 2000;
      violations += storage.size() + training.size() + evicted_total != i + 1;
    }
    violations += training.size() != expected.size();
    for (std::size_t j = 0; j < training.size() && j < expected.size(); ++j) {
      violations += training.frames()[j].t != expected[j];
    }
    evicted_total_all += evicted_total;
  }
  return {violations == 0, std::to_string(flushes) + " flushes, " + std::to_string(evicted_total_all) +
                               " evictions, " + std::to_string(violations) + " violations"};
}

// The straggler scenario shared by criteria 5, 6 and 8: four vehicles, the
// second four times slower, 50 epochs.
ScenarioConfig straggler_scenario(std::uint64_t seed, const fs::path& out, bool trace) {
  std::vector<std::string> overrides{"seed=" + std::to_string(seed), "out_dir=" + out.string(),
                                     "learning_rate=3e-3", trace ? "trace=true" : "trace=false"};
  ScenarioConfig c = parse_config_text("", "<acceptance>", overrides);
  return c;
}

const SummaryRow& row(const ScenarioOutcome& o, std::string_view method, std::string_view vehicle) {
  for (const SummaryRow& r : o.summary) {
    if (r.method == method && r.vehicle == vehicle) return r;
  }
  throw Error("missing summary row " + std::string(method) + "/" + std::string(vehicle));
}

const MethodOutcome& outcome_of(const ScenarioOutcome& o, Method m) {
  for (const MethodOutcome& x : o.methods) {
    if (x.method == m) return x;
  }
  throw Error("missing method outcome");
}

std::vector<ScenarioOutcome> seed_runs;
fs::path root;

Outcome straggler_speedup() {
  const ScenarioConfig c = straggler_scenario(1, root / "seed1", true);
  if (c.client(2).seconds_per_batch != 4.0 * c.client(1).seconds_per_batch ||
      c.client(3).seconds_per_batch != c.client(1).seconds_per_batch ||
      c.client(4).seconds_per_batch != c.client(1).seconds_per_batch || c.total_epochs != 50) {
    return {false, "scenario is not the (1x,4x,1x,1x) 50-epoch fleet"};
  }
  std::ostringstream log;
  seed_runs.push_back(run_scenario(c, log));
  const ScenarioOutcome& o = seed_runs.back();
  const RunResult& a = outcome_of(o, Method::kAsyncFl).run;
  const RunResult& s = outcome_of(o, Method::kSyncFl).run;
  bool epochs_ok = true;
  for (const RunResult* r : {&a, &s}) {
    for (const auto& losses : r->epoch_losses) epochs_ok = epochs_ok && losses.size() == 50;
  }
  const double ratio = a.mean_completion_time() / s.mean_completion_time();
  const bool pass = epochs_ok && a.mean_completion_time() < s.mean_completion_time() && ratio <= 0.5;
  return {pass, "mean per-vehicle training time async " + fmt("%.2f", a.mean_completion_time()) +
                    " s vs sync " + fmt("%.2f", s.mean_completion_time()) + " s, ratio " +
                    fmt("%.3f", ratio) + " (<= 0.5); makespan " + fmt("%.2f", a.makespan()) + " vs " +
                    fmt("%.2f", s.makespan())};
}

Outcome bandwidth_ordering() {
  if (seed_runs.empty()) return {false, "straggler scenario did not run"};
  const ScenarioOutcome& o = seed_runs.front();
  const MethodOutcome& a = outcome_of(o, Method::kAsyncFl);
  const MethodOutcome& s = outcome_of(o, Method::kSyncFl);
  const MethodOutcome& c = outcome_of(o, Method::kCentralized);
  const std::size_t params = parameter_count(a.engine.mlp);
  std::uint64_t data_bytes = 0;
  for (const ClientSetup& cs : c.setups) data_bytes += frame_bytes(cs.train_stream);
  const bool small_model = 10 * kBytesPerParameter * params <= data_bytes;
  const std::uint64_t ab = a.run.ledger.total_bytes(), sb = s.run.ledger.total_bytes();
  const std::uint64_t cb = c.run.ledger.total_bytes();
  const bool recount = recount_trace_bytes(a.run.trace, params) == ab &&
                       recount_trace_bytes(s.run.trace, params) == sb && cb == data_bytes;
  const bool pass = small_model && recount && ab < cb && sb < cb;
  return {pass, "async " + std::to_string(ab) + " B, sync " + std::to_string(sb) + " B, centralized " +
                    std::to_string(cb) + " B; trace recount " + (recount ? "exact" : "MISMATCH") +
                    "; model/data " + fmt("%.5f", static_cast<double>(kBytesPerParameter * params) / data_bytes)};
}

Outcome learning_quality() {
  // Seed 1 ran under criterion 5.
  for (std::uint64_t seed = 2; seed <= 5; ++seed) {
    std::ostringstream log;
    seed_runs.push_back(run_scenario(straggler_scenario(seed, root / ("seed" + std::to_string(seed)), false), log));
  }
  if (seed_runs.size() != 5) return {false, "expected 5 seed runs"};
  double async_pooled = 0.0, local_pooled = 0.0;
  std::vector<double> av(4, 0.0), lv(4, 0.0);
  for (const ScenarioOutcome& o : seed_runs) {
    async_pooled += row(o, "async_fl", "overall_pooled").rmse / 5.0;
    local_pooled += row(o, "local", "overall_pooled").rmse / 5.0;
    for (int k = 1; k <= 4; ++k) {
      av[k - 1] += row(o, "async_fl", std::to_string(k)).rmse / 5.0;
      lv[k - 1] += row(o, "local", std::to_string(k)).rmse / 5.0;
    }
  }
  bool per_vehicle = true;
  std::string ratios;
  for (int k = 0; k < 4; ++k) {
    per_vehicle = per_vehicle && av[k] <= 1.1 * lv[k];
    ratios += (k ? "," : "") + fmt("%.3f", av[k] / lv[k]);
  }
  return {async_pooled <= local_pooled && per_vehicle,
          "pooled RMSE async " + fmt("%.4f", async_pooled) + " vs local " + fmt("%.4f", local_pooled) +
              "; per-vehicle async/local " + ratios + " (<= 1.1)"};
}

Outcome determinism() {
  std::ostringstream log;
  const fs::path again = root / "seed1_again";
  run_scenario(straggler_scenario(1, again, true), log);
  std::size_t files = 0, differing = 0;
  for (const auto& e : fs::directory_iterator(root / "seed1")) {
    const std::string name = e.path().filename().string();
    const bool wanted = name == "summary.csv" || name.ends_with("_metrics.csv") || name.ends_with("_trace.csv");
    if (!wanted) continue;
    ++files;
    differing += !fs::exists(again / name) || slurp(e.path()) != slurp(again / name);
  }
  return {files == 9 && differing == 0,
          std::to_string(files) + " files compared, " + std::to_string(differing) + " differ"};
}

Outcome degenerate_federation() {
  ScenarioConfig c = parse_config_text("n_clients = 1\na_l = 0\na_u = 1000000\nlearning_rate = 3e-3\n");
  // One set of seeds for all three engines.
  const std::vector<ClientSetup> setups = build_setups(c, Method::kLocal);
  const EngineConfig e = engine_config(c, Method::kLocal);
  const RunResult a = run_async_fl(setups, e);
  const RunResult s = run_fedavg(setups, e);
  const RunResult l = run_local_only(setups, e);
  const auto& ref = l.epoch_losses[0];
  double worst = 0.0;
  bool lengths = ref.size() == c.total_epochs && a.epoch_losses[0].size() == ref.size() &&
                 s.epoch_losses[0].size() == ref.size();
  for (std::size_t i = 0; lengths && i < ref.size(); ++i) {
    for (const RunResult* r : {&a, &s}) {
      worst = std::max(worst, std::abs(r->epoch_losses[0][i] - ref[i]) / std::abs(ref[i]));
    }
  }
  return {lengths && worst <= 1e-12,
          std::to_string(ref.size()) + " epochs, max rel diff " + fmt("%.3g", worst)};
}

}  // namespace

int main() {
  root = fs::temp_directory_path() / "asyncfl_acceptance";
  fs::remove_all(root);

  report(1, "aggregation formula exactness", 1, aggregation_exactness);
  report(2, "gating exhaustiveness", 1, gating_exhaustiveness);
  report(3, "gradient vs central differences", 30, gradient_correctness);
  report(4, "window conservation and eviction", 5, window_semantics);
  report(5, "straggler speedup", 120, straggler_speedup);
  report(6, "bandwidth ordering", 120, bandwidth_ordering);
  report(7, "learning quality over 5 seeds", 600, learning_quality);
  report(8, "determinism", 120, determinism);
  report(9, "degenerate federation equivalence", 30, degenerate_federation);

  fs::remove_all(root);
  std::printf("%s: %d of 9 criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
