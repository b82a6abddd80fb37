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

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "asyncfl/error.hpp"
#include "asyncfl/model.hpp"
#include "asyncfl/streaming.hpp"

namespace asyncfl {

// Predictions in degrees for every frame.
inline std::vector<double> predict_angles(const ParameterVector& params, const MlpConfig& config,
                                          const Normalizer& norm, std::span<const Frame> frames) {
  std::vector<const Frame*> ptrs;
  ptrs.reserve(frames.size());
  for (const Frame& f : frames) ptrs.push_back(&f);
  std::vector<double> out = forward(params, config, feature_matrix(ptrs, norm));
  for (double& v : out) v = norm.angle_from_model(v);
  return out;
}

inline std::vector<double> true_angles(std::span<const Frame> frames) {
  std::vector<double> out;
  out.reserve(frames.size());
  for (const Frame& f : frames) out.push_back(f.angle);
  return out;
}

inline double eval_rmse(const ParameterVector& params, const MlpConfig& config,
                        const Normalizer& norm, std::span<const Frame> eval_frames) {
  if (eval_frames.empty()) throw StreamError("eval_rmse on an empty evaluation set");
  return rmse(predict_angles(params, config, norm, eval_frames), true_angles(eval_frames));
}

// Running sum of squared angle errors, element i covering frames 0..i.
inline std::vector<double> accumulated_sq_error(const ParameterVector& params,
                                                const MlpConfig& config, const Normalizer& norm,
                                                std::span<const Frame> eval_frames) {
  const auto pred = predict_angles(params, config, norm, eval_frames);
  std::vector<double> out(eval_frames.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < eval_frames.size(); ++i) {
    const double d = eval_frames[i].angle - pred[i];
    acc += d * d;
    out[i] = acc;
  }
  return out;
}

// RMSE over the union of all evaluation sets.
inline double overall_rmse(std::span<const double> per_vehicle_rmse,
                           std::span<const std::size_t> per_vehicle_counts) {
  if (per_vehicle_rmse.size() != per_vehicle_counts.size()) {
    throw DimensionError("overall_rmse: rmse and count lists differ in length");
  }
  if (per_vehicle_rmse.empty()) throw DimensionError("overall_rmse on empty input");
  double weighted = 0.0;
  double n = 0.0;
  for (std::size_t i = 0; i < per_vehicle_rmse.size(); ++i) {
    const double c = static_cast<double>(per_vehicle_counts[i]);
    weighted += c * per_vehicle_rmse[i] * per_vehicle_rmse[i];
    n += c;
  }
  if (n <= 0.0) throw DimensionError("overall_rmse: counts sum to zero");
  return std::sqrt(weighted / n);
}

inline double overall_mean_rmse(std::span<const double> per_vehicle_rmse) {
  if (per_vehicle_rmse.empty()) throw DimensionError("overall_mean_rmse on empty input");
  double s = 0.0;
  for (double v : per_vehicle_rmse) s += v;
  return s / static_cast<double>(per_vehicle_rmse.size());
}

// ---------------------------------------------------------------------------

struct MetricRow {
  double sim_time_s = 0.0;
  std::string scope;   // "client.<k>" or "overall"
  std::string metric;  // rmse | acc_sq_err | epochs_done
  double value = 0.0;

  friend bool operator==(const MetricRow&, const MetricRow&) = default;
};

struct MetricsLog {
  std::vector<MetricRow> rows;

  void add(double t, std::string scope, std::string metric, double value) {
    rows.push_back({t, std::move(scope), std::move(metric), value});
  }
};

inline std::vector<MetricRow> sorted_rows(const MetricsLog& log) {
  std::vector<MetricRow> rows = log.rows;
  std::stable_sort(rows.begin(), rows.end(), [](const MetricRow& a, const MetricRow& b) {
    return std::tie(a.scope, a.metric, a.sim_time_s) < std::tie(b.scope, b.metric, b.sim_time_s);
  });
  return rows;
}

inline void write_metrics_csv(const MetricsLog& log, std::ostream& out) {
  out << "sim_time_s,scope,metric,value\n";
  for (const MetricRow& r : sorted_rows(log)) {
    out << detail::format_double(r.sim_time_s) << ',' << r.scope << ',' << r.metric << ','
        << detail::format_double(r.value) << '\n';
  }
}

inline void write_metrics_csv(const MetricsLog& log, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write metrics file " + path);
  write_metrics_csv(log, out);
  if (!out) throw IoError("write failed for " + path);
}

inline MetricsLog read_metrics_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "sim_time_s,scope,metric,value") {
    throw IoError("metrics csv: bad header");
  }
  MetricsLog log;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto cells = detail::split_commas(line);
    MetricRow r;
    if (cells.size() != 4 || !detail::parse_number(cells[0], r.sim_time_s) ||
        !detail::parse_number(cells[3], r.value)) {
      throw IoError("metrics csv: malformed row " + std::to_string(row));
    }
    r.scope = std::string(cells[1]);
    r.metric = std::string(cells[2]);
    log.rows.push_back(std::move(r));
  }
  return log;
}

struct SummaryRow {
  std::string method;
  std::string vehicle;  // "1".."K", "overall_pooled", "overall_mean"
  double rmse = 0.0;
  double train_time_s = 0.0;
  std::uint64_t bytes = 0;
};

inline void write_summary_csv(std::span<const SummaryRow> rows, std::ostream& out) {
  out << "method,vehicle,rmse,train_time_s,bytes\n";
  for (const SummaryRow& r : rows) {
    out << r.method << ',' << r.vehicle << ',' << detail::format_double(r.rmse) << ','
        << detail::format_double(r.train_time_s) << ',' << r.bytes << '\n';
  }
}

inline void write_summary_csv(std::span<const SummaryRow> rows, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write summary file " + path);
  write_summary_csv(rows, out);
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace asyncfl
