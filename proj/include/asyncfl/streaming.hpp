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

// Streaming data pipeline: frames flow through a small storage window that is
// flushed in bulk into a bounded FIFO training window. Also home to the
// synthetic per-vehicle stream generator and the CSV trace format.

#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <fstream>
#include <istream>
#include <numbers>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "asyncfl/error.hpp"
#include "asyncfl/model.hpp"

namespace asyncfl {

struct Frame {
  std::uint64_t t = 0;
  std::vector<double> features;
  double angle = 0.0;  // degrees

  friend bool operator==(const Frame&, const Frame&) = default;
};

enum class FlushSignal { kNone, kReady };

class StorageWindow {
 public:
  explicit StorageWindow(std::size_t capacity = 100) : capacity_(capacity) {
    if (capacity_ == 0) throw StreamError("storage window capacity must be positive");
  }

  // Returns kReady exactly when the window became full.
  FlushSignal push(Frame frame) {
    if (full()) throw StreamError("push into a full storage window; flush first");
    if (last_t_ && frame.t <= *last_t_) {
      throw StreamError("out-of-order frame: t=" + std::to_string(frame.t) +
                        " after t=" + std::to_string(*last_t_));
    }
    last_t_ = frame.t;
    buffer_.push_back(std::move(frame));
    return full() ? FlushSignal::kReady : FlushSignal::kNone;
  }

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return buffer_.size(); }
  bool empty() const { return buffer_.empty(); }
  bool full() const { return buffer_.size() == capacity_; }
  const std::deque<Frame>& frames() const { return buffer_; }

  std::deque<Frame> take_all() { return std::exchange(buffer_, {}); }

 private:
  std::size_t capacity_;
  std::deque<Frame> buffer_;
  std::optional<std::uint64_t> last_t_;
};

class TrainingWindow {
 public:
  explicit TrainingWindow(std::size_t capacity = 2000) : capacity_(capacity) {
    if (capacity_ == 0) throw StreamError("training window capacity must be positive");
  }

  // Appends in order and returns whatever fell off the front.
  std::vector<Frame> append(std::deque<Frame> incoming) {
    std::vector<Frame> evicted;
    for (Frame& f : incoming) {
      buffer_.push_back(std::move(f));
      if (buffer_.size() > capacity_) {
        evicted.push_back(std::move(buffer_.front()));
        buffer_.pop_front();
      }
    }
    return evicted;
  }

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return buffer_.size(); }
  bool empty() const { return buffer_.empty(); }
  const std::deque<Frame>& frames() const { return buffer_; }

 private:
  std::size_t capacity_;
  std::deque<Frame> buffer_;
};

inline FlushSignal push_frame(StorageWindow& storage, Frame frame) {
  return storage.push(std::move(frame));
}

// Moves the whole storage window into the training window. Returns the
// evicted (oldest) training frames.
inline std::vector<Frame> flush(StorageWindow& storage, TrainingWindow& training) {
  if (!storage.full()) {
    throw StreamError("flush on a storage window holding " + std::to_string(storage.size()) +
                      " of " + std::to_string(storage.capacity()) + " frames");
  }
  return training.append(storage.take_all());
}

// Maps raw degrees into the network's working range.
struct Normalizer {
  double feature_scale = 100.0;
  double angle_scale = 100.0;

  double angle_to_model(double degrees) const { return degrees / angle_scale; }
  double angle_from_model(double value) const { return value * angle_scale; }
};

inline Matrix feature_matrix(std::span<const Frame* const> frames, const Normalizer& norm) {
  if (frames.empty()) return {};
  const std::size_t dim = frames.front()->features.size();
  Matrix m(frames.size(), dim);
  for (std::size_t r = 0; r < frames.size(); ++r) {
    if (frames[r]->features.size() != dim) {
      throw DimensionError("frames with differing feature dimensions");
    }
    for (std::size_t c = 0; c < dim; ++c) m(r, c) = frames[r]->features[c] / norm.feature_scale;
  }
  return m;
}

template <typename Range>
Batch to_batch(const Range& frames, const Normalizer& norm) {
  std::vector<const Frame*> ptrs;
  for (const Frame& f : frames) ptrs.push_back(&f);
  Batch b;
  b.inputs = feature_matrix(ptrs, norm);
  for (const Frame* f : ptrs) b.targets.push_back(norm.angle_to_model(f->angle));
  return b;
}

// Shuffled partition of [0, n) into chunks of batch_size; the last may be short.
inline std::vector<std::vector<std::size_t>> make_batch_indices(std::size_t n,
                                                                std::size_t batch_size,
                                                                std::uint64_t shuffle_seed) {
  if (batch_size < 1) throw StreamError("batch_size must be >= 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(shuffle_seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t stop = std::min(n, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(stop));
  }
  return batches;
}

template <typename Container>
std::vector<Batch> make_batches(const Container& frames, std::size_t batch_size,
                                std::uint64_t shuffle_seed, const Normalizer& norm) {
  if (frames.empty()) throw StreamError("make_batches on an empty frame set");
  std::vector<Batch> batches;
  for (const auto& idx : make_batch_indices(frames.size(), batch_size, shuffle_seed)) {
    std::vector<const Frame*> chosen;
    chosen.reserve(idx.size());
    for (std::size_t i : idx) chosen.push_back(&frames[i]);
    Batch b;
    b.inputs = feature_matrix(chosen, norm);
    for (const Frame* f : chosen) b.targets.push_back(norm.angle_to_model(f->angle));
    batches.push_back(std::move(b));
  }
  return batches;
}

inline std::vector<Batch> make_batches(const TrainingWindow& training, std::size_t batch_size,
                                       std::uint64_t shuffle_seed, const Normalizer& norm) {
  return make_batches(training.frames(), batch_size, shuffle_seed, norm);
}

inline std::size_t batch_count(std::size_t n_frames, std::size_t batch_size) {
  return batch_size == 0 ? 0 : (n_frames + batch_size - 1) / batch_size;
}

// ---------------------------------------------------------------------------
// Synthetic driving streams.

struct StreamProfile {
  std::string name = "highway_city";
  double angle_range = 50.0;  // half-width of the typical angle support, degrees
  double turn_rate = 0.3;     // fraction of timesteps spent in turns
  double noise_sd = 1.0;
  std::uint64_t gen_seed = 0;
  // Mean length of a driving-scenario block; 0 keeps turn_rate stationary.
  // Blocks alternate between turn-heavy and straight-heavy stretches whose
  // turn rates average to turn_rate.
  std::size_t regime_frames = 0;
};

inline StreamProfile highway_city_profile(std::uint64_t seed) {
  return {"highway_city", 50.0, 0.3, 1.0, seed};
}
inline StreamProfile hill_profile(std::uint64_t seed) { return {"hill", 100.0, 0.6, 2.0, seed}; }
inline StreamProfile hill_city_profile(std::uint64_t seed) {
  return {"hill_city", 100.0, 0.45, 1.5, seed};
}

inline std::optional<StreamProfile> profile_preset(std::string_view name, std::uint64_t seed) {
  if (name == "highway_city") return highway_city_profile(seed);
  if (name == "hill") return hill_profile(seed);
  if (name == "hill_city") return hill_city_profile(seed);
  return std::nullopt;
}

inline constexpr std::size_t kLagFeatureDim = 5;

// [a(t-1), a(t-2), a(t-3), a(t-1)-a(t-2), a(t-2)-a(t-3)], zero before the start.
inline std::vector<double> lag_features(std::span<const double> angles, std::size_t t) {
  auto at = [&](std::size_t back) { return t >= back ? angles[t - back] : 0.0; };
  const double a1 = at(1), a2 = at(2), a3 = at(3);
  return {a1, a2, a3, a1 - a2, a2 - a3};
}

// Alternating straight and half-sine turn segments plus noise truncated at
// 3 sd, so |angle| <= angle_range + 3 * noise_sd holds for every frame.
inline std::vector<Frame> synth_stream(const StreamProfile& profile, std::size_t n_frames) {
  if (!(profile.angle_range > 0.0)) throw StreamError("angle_range must be positive");
  if (!(profile.turn_rate >= 0.0 && profile.turn_rate <= 1.0)) {
    throw StreamError("turn_rate must lie in [0, 1]");
  }
  if (!(profile.noise_sd >= 0.0)) throw StreamError("noise_sd must be non-negative");

  std::mt19937_64 rng(profile.gen_seed);
  std::uniform_int_distribution<std::size_t> turn_len(20, 80);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  // Turn-rate schedule as (end_frame, rate) blocks; one block when stationary.
  struct Block {
    std::size_t end;
    double rate;
  };
  std::vector<Block> blocks;
  if (profile.regime_frames > 0 && profile.turn_rate > 0.0 && profile.turn_rate < 1.0) {
    const double high = std::min(0.95, 2.0 * profile.turn_rate);
    const double low = 2.0 * profile.turn_rate - high;
    bool busy = unit(rng) < 0.5;
    std::size_t end = 0;
    while (end < n_frames) {
      end += static_cast<std::size_t>(static_cast<double>(profile.regime_frames) * (0.5 + unit(rng)));
      blocks.push_back({std::min(end, n_frames), busy ? high : low});
      busy = !busy;
    }
  } else {
    blocks.push_back({n_frames, profile.turn_rate});
  }

  const double mean_turn = 50.0;
  std::vector<double> signal;
  signal.reserve(n_frames);
  std::size_t block = 0;
  bool turning = false;
  while (signal.size() < n_frames) {
    while (signal.size() >= blocks[block].end) ++block;
    const double rate = blocks[block].rate;
    const std::size_t room = blocks[block].end - signal.size();
    if (rate >= 1.0 || (rate > 0.0 && turning)) {
      const std::size_t len = turn_len(rng);
      const double sign = unit(rng) < 0.5 ? -1.0 : 1.0;
      const double peak = sign * profile.angle_range * (0.3 + 0.7 * unit(rng));
      for (std::size_t i = 0; i < len && signal.size() < n_frames; ++i) {
        signal.push_back(peak * std::sin(std::numbers::pi * (static_cast<double>(i) + 0.5) /
                                         static_cast<double>(len)));
      }
    } else if (rate <= 0.0) {
      signal.insert(signal.end(), room, 0.0);
    } else {
      const double mean_straight = mean_turn * (1.0 - rate) / rate;
      const auto len = static_cast<std::size_t>(std::max(1.0, std::round(mean_straight * (0.5 + unit(rng)))));
      signal.insert(signal.end(), std::min(len, room), 0.0);
    }
    turning = !turning;
  }

  std::vector<double> angles(n_frames);
  for (std::size_t t = 0; t < n_frames; ++t) {
    double z = 0.0;
    if (profile.noise_sd > 0.0) {
      do {
        z = gauss(rng);
      } while (std::abs(z) > 3.0);
    }
    angles[t] = signal[t] + profile.noise_sd * z;
  }

  std::vector<Frame> frames(n_frames);
  for (std::size_t t = 0; t < n_frames; ++t) {
    frames[t].t = t;
    frames[t].features = lag_features(angles, t);
    frames[t].angle = angles[t];
  }
  return frames;
}

// ---------------------------------------------------------------------------
// CSV traces: header `t,f0,...,fk,angle`, one frame per row.

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

template <typename T>
bool parse_number(std::string_view text, T& out) {
  if (text.empty()) return false;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if constexpr (std::is_floating_point_v<T>) {
    if (*first == '+') ++first;
  }
  const auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

inline std::vector<Frame> read_trace_csv(std::istream& in, const std::string& source = "<stream>") {
  std::string line;
  if (!std::getline(in, line)) throw StreamError(source + ": missing header row");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = detail::split_commas(line);
  if (header.size() < 2 || header.front() != "t" || header.back() != "angle") {
    throw StreamError(source + ": header must be t,f0,...,fk,angle");
  }
  const std::size_t dim = header.size() - 2;
  for (std::size_t i = 0; i < dim; ++i) {
    if (header[i + 1] != "f" + std::to_string(i)) {
      throw StreamError(source + ": header column " + std::to_string(i + 2) + " should be f" +
                        std::to_string(i));
    }
  }

  std::vector<Frame> frames;
  std::size_t row = 0;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  while (!lines.empty() && lines.back().empty()) lines.pop_back();

  for (std::string& raw : lines) {
    ++row;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    const std::string where = source + ": row " + std::to_string(row) + " (line " +
                              std::to_string(row + 1) + ")";
    const auto cells = detail::split_commas(raw);
    if (cells.size() != header.size()) {
      throw StreamError(where + ": expected " + std::to_string(header.size()) + " columns, got " +
                        std::to_string(cells.size()));
    }
    Frame f;
    if (!detail::parse_number(cells[0], f.t)) throw StreamError(where + ": bad timestep");
    f.features.resize(dim);
    for (std::size_t i = 0; i < dim; ++i) {
      if (!detail::parse_number(cells[i + 1], f.features[i])) {
        throw StreamError(where + ": bad value in column f" + std::to_string(i));
      }
    }
    if (!detail::parse_number(cells.back(), f.angle)) throw StreamError(where + ": bad angle");
    if (!frames.empty() && f.t <= frames.back().t) {
      throw StreamError(where + ": timestep " + std::to_string(f.t) + " does not increase");
    }
    frames.push_back(std::move(f));
  }
  return frames;
}

inline std::vector<Frame> load_trace_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open trace file " + path);
  return read_trace_csv(in, path);
}

inline void write_trace_csv(std::ostream& out, std::span<const Frame> frames) {
  const std::size_t dim = frames.empty() ? 0 : frames.front().features.size();
  out << "t";
  for (std::size_t i = 0; i < dim; ++i) out << ",f" << i;
  out << ",angle\n";
  for (const Frame& f : frames) {
    out << f.t;
    for (double v : f.features) out << ',' << detail::format_double(v);
    out << ',' << detail::format_double(f.angle) << '\n';
  }
}

inline void save_trace_csv(const std::string& path, std::span<const Frame> frames) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write trace file " + path);
  write_trace_csv(out, frames);
  if (!out) throw IoError("write failed for " + path);
}

// Temporal prefix/suffix split at floor(n * train_fraction).
inline std::pair<std::vector<Frame>, std::vector<Frame>> split_stream(std::span<const Frame> frames,
                                                                      double train_fraction = 0.70) {
  if (frames.empty()) throw StreamError("split_stream on an empty stream");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw StreamError("train_fraction must lie strictly between 0 and 1");
  }
  // The epsilon absorbs decimal representation error (0.7 * 40000 = 27999.999...).
  const auto cut = static_cast<std::size_t>(
      std::floor(static_cast<double>(frames.size()) * train_fraction + 1e-9));
  return {std::vector<Frame>(frames.begin(), frames.begin() + static_cast<std::ptrdiff_t>(cut)),
          std::vector<Frame>(frames.begin() + static_cast<std::ptrdiff_t>(cut), frames.end())};
}

// Replays a recorded stream into the windows at a fixed pace.
class StreamFeeder {
 public:
  StreamFeeder() = default;
  explicit StreamFeeder(std::vector<Frame> frames) : frames_(std::move(frames)) {}

  // Pushes up to `count` frames, flushing each time the storage window fills.
  // If the training window is still empty afterwards, keeps going until the
  // first flush so that a round always has something to train on.
  std::size_t ingest(StorageWindow& storage, TrainingWindow& training, std::size_t count) {
    std::size_t pushed = 0;
    auto push_one = [&] {
      if (push_frame(storage, frames_[next_++]) == FlushSignal::kReady) flush(storage, training);
      ++pushed;
    };
    while (pushed < count && !exhausted()) push_one();
    while (training.empty() && !exhausted()) push_one();
    return pushed;
  }

  bool exhausted() const { return next_ >= frames_.size(); }
  std::size_t consumed() const { return next_; }
  std::size_t total() const { return frames_.size(); }
  const std::vector<Frame>& frames() const { return frames_; }

 private:
  std::vector<Frame> frames_;
  std::size_t next_ = 0;
};

}  // namespace asyncfl
