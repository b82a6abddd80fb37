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

// Feedforward regression network, MSE loss, analytic backprop and Adam.
// The rest of the library only ever sees the weights as a flat
// ParameterVector; the layout is documented on Layout below.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "asyncfl/error.hpp"

namespace asyncfl {

enum class Activation { kRelu, kElu };

inline std::string_view to_string(Activation a) {
  return a == Activation::kRelu ? "relu" : "elu";
}

inline Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "elu") return Activation::kElu;
  throw ConfigError("unknown activation '" + std::string(name) + "' (expected relu or elu)");
}

struct MlpConfig {
  std::vector<std::size_t> layer_sizes{5, 16, 1};
  Activation hidden_activation = Activation::kRelu;
  std::uint64_t seed = 0;

  std::size_t input_dim() const { return layer_sizes.front(); }
  std::size_t output_dim() const { return layer_sizes.back(); }
  std::size_t num_layers() const { return layer_sizes.size() - 1; }
};

inline void validate(const MlpConfig& config) {
  if (config.layer_sizes.size() < 2) {
    throw DimensionError("MlpConfig.layer_sizes needs at least 2 entries");
  }
  for (std::size_t s : config.layer_sizes) {
    if (s < 1) throw DimensionError("MlpConfig.layer_sizes entries must be >= 1");
  }
}

inline std::size_t parameter_count(const MlpConfig& config) {
  validate(config);
  std::size_t n = 0;
  for (std::size_t i = 0; i + 1 < config.layer_sizes.size(); ++i) {
    n += (config.layer_sizes[i] + 1) * config.layer_sizes[i + 1];
  }
  return n;
}

// Flat, fixed-length weight vector. There is intentionally no resize.
class ParameterVector {
 public:
  ParameterVector() = default;
  explicit ParameterVector(std::size_t n, double fill = 0.0) : values_(n, fill) {}
  explicit ParameterVector(std::vector<double> values) : values_(std::move(values)) {}
  ParameterVector(std::initializer_list<double> values) : values_(values) {}

  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  std::span<double> span() { return values_; }
  std::span<const double> span() const { return values_; }
  const std::vector<double>& values() const { return values_; }

  auto begin() { return values_.begin(); }
  auto end() { return values_.end(); }
  auto begin() const { return values_.begin(); }
  auto end() const { return values_.end(); }

  bool all_finite() const {
    for (double v : values_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  friend bool operator==(const ParameterVector&, const ParameterVector&) = default;

 private:
  std::vector<double> values_;
};

// Dense row-major matrix; rows are samples.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

// Targets are normalized angles (see Normalizer in streaming.hpp).
struct Batch {
  Matrix inputs;
  std::vector<double> targets;

  std::size_t size() const { return targets.size(); }
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step_count = 0;
  double beta1 = 0.6;
  double beta2 = 0.99;
  double epsilon = 1e-8;
  double learning_rate = 1e-5;

  static AdamState fresh(std::size_t n, double lr = 1e-5, double beta1 = 0.6, double beta2 = 0.99,
                         double epsilon = 1e-8) {
    AdamState s;
    s.m.assign(n, 0.0);
    s.v.assign(n, 0.0);
    s.learning_rate = lr;
    s.beta1 = beta1;
    s.beta2 = beta2;
    s.epsilon = epsilon;
    return s;
  }
};

// Per-layer slices into the flat vector. Layer l stores its weights first,
// row-major as [out][in], followed by its `out` biases.
struct LayerSlice {
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t weight_offset = 0;
  std::size_t bias_offset = 0;
};

inline std::vector<LayerSlice> layout(const MlpConfig& config) {
  validate(config);
  std::vector<LayerSlice> slices;
  std::size_t offset = 0;
  for (std::size_t l = 0; l < config.num_layers(); ++l) {
    LayerSlice s;
    s.in = config.layer_sizes[l];
    s.out = config.layer_sizes[l + 1];
    s.weight_offset = offset;
    s.bias_offset = offset + s.in * s.out;
    offset = s.bias_offset + s.out;
    slices.push_back(s);
  }
  return slices;
}

// Glorot-uniform weights, zero biases, deterministic in config.seed.
inline ParameterVector init_params(const MlpConfig& config) {
  ParameterVector params(parameter_count(config), 0.0);
  std::mt19937_64 rng(config.seed);
  for (const LayerSlice& s : layout(config)) {
    const double bound = std::sqrt(6.0 / static_cast<double>(s.in + s.out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (std::size_t i = 0; i < s.in * s.out; ++i) params[s.weight_offset + i] = dist(rng);
  }
  return params;
}

namespace detail {

inline double activate(Activation a, double x) {
  if (a == Activation::kRelu) return x > 0.0 ? x : 0.0;
  return x > 0.0 ? x : std::expm1(x);
}

// Derivative expressed through the pre-activation.
inline double activate_grad(Activation a, double x) {
  if (a == Activation::kRelu) return x > 0.0 ? 1.0 : 0.0;
  return x > 0.0 ? 1.0 : std::exp(x);
}

inline void check_params(const ParameterVector& params, const MlpConfig& config) {
  if (params.size() != parameter_count(config)) {
    throw DimensionError("parameter vector has " + std::to_string(params.size()) +
                         " entries, network expects " + std::to_string(parameter_count(config)));
  }
}

inline void check_inputs(const Matrix& inputs, const MlpConfig& config) {
  if (inputs.cols != config.input_dim()) {
    throw DimensionError("input has " + std::to_string(inputs.cols) + " columns, network expects " +
                         std::to_string(config.input_dim()));
  }
}

// Pre-activations per layer for one sample; the last layer is linear.
inline void forward_sample(const ParameterVector& params, const MlpConfig& config,
                           const std::vector<LayerSlice>& slices, std::span<const double> x,
                           std::vector<std::vector<double>>& pre,
                           std::vector<std::vector<double>>& post) {
  const std::size_t layers = slices.size();
  pre.resize(layers);
  post.resize(layers + 1);
  post[0].assign(x.begin(), x.end());
  for (std::size_t l = 0; l < layers; ++l) {
    const LayerSlice& s = slices[l];
    pre[l].assign(s.out, 0.0);
    post[l + 1].assign(s.out, 0.0);
    const bool hidden = l + 1 < layers;
    for (std::size_t o = 0; o < s.out; ++o) {
      double z = params[s.bias_offset + o];
      const std::size_t w = s.weight_offset + o * s.in;
      for (std::size_t i = 0; i < s.in; ++i) z += params[w + i] * post[l][i];
      pre[l][o] = z;
      post[l + 1][o] = hidden ? activate(config.hidden_activation, z) : z;
    }
  }
}

}  // namespace detail

// One prediction per input row (first output unit for multi-output nets).
inline std::vector<double> forward(const ParameterVector& params, const MlpConfig& config,
                                   const Matrix& inputs) {
  detail::check_params(params, config);
  detail::check_inputs(inputs, config);
  const auto slices = layout(config);
  std::vector<std::vector<double>> pre, post;
  std::vector<double> out(inputs.rows);
  for (std::size_t r = 0; r < inputs.rows; ++r) {
    detail::forward_sample(params, config, slices, inputs.row(r), pre, post);
    out[r] = post.back()[0];
  }
  return out;
}

inline double mse_loss(std::span<const double> predictions, std::span<const double> targets) {
  if (predictions.empty()) throw DimensionError("mse_loss on empty input");
  if (predictions.size() != targets.size()) {
    throw DimensionError("mse_loss: " + std::to_string(predictions.size()) + " predictions vs " +
                         std::to_string(targets.size()) + " targets");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double d = targets[i] - predictions[i];
    sum += d * d;
  }
  return sum / static_cast<double>(predictions.size());
}

inline double rmse(std::span<const double> predictions, std::span<const double> targets) {
  return std::sqrt(mse_loss(predictions, targets));
}

struct LossAndGradient {
  double loss = 0.0;
  ParameterVector gradient;
};

// Loss on the batch and its exact gradient w.r.t. every parameter.
inline LossAndGradient loss_and_gradient(const ParameterVector& params, const MlpConfig& config,
                                         const Batch& batch) {
  detail::check_params(params, config);
  detail::check_inputs(batch.inputs, config);
  if (batch.size() == 0) throw DimensionError("empty batch");
  if (batch.inputs.rows != batch.size()) {
    throw DimensionError("batch has " + std::to_string(batch.inputs.rows) + " input rows but " +
                         std::to_string(batch.size()) + " targets");
  }
  if (config.output_dim() != 1) throw DimensionError("regression loss needs output dim 1");

  const auto slices = layout(config);
  const std::size_t layers = slices.size();
  const double n = static_cast<double>(batch.size());
  LossAndGradient result{0.0, ParameterVector(params.size(), 0.0)};
  std::vector<std::vector<double>> pre, post;
  std::vector<double> delta, next_delta;

  for (std::size_t r = 0; r < batch.size(); ++r) {
    detail::forward_sample(params, config, slices, batch.inputs.row(r), pre, post);
    const double residual = post.back()[0] - batch.targets[r];
    result.loss += residual * residual;

    delta.assign(1, 2.0 * residual / n);
    for (std::size_t l = layers; l-- > 0;) {
      const LayerSlice& s = slices[l];
      for (std::size_t o = 0; o < s.out; ++o) {
        const std::size_t w = s.weight_offset + o * s.in;
        for (std::size_t i = 0; i < s.in; ++i) result.gradient[w + i] += delta[o] * post[l][i];
        result.gradient[s.bias_offset + o] += delta[o];
      }
      if (l == 0) break;
      next_delta.assign(s.in, 0.0);
      for (std::size_t i = 0; i < s.in; ++i) {
        double acc = 0.0;
        for (std::size_t o = 0; o < s.out; ++o) acc += params[s.weight_offset + o * s.in + i] * delta[o];
        next_delta[i] = acc * detail::activate_grad(config.hidden_activation, pre[l - 1][i]);
      }
      delta.swap(next_delta);
    }
  }
  result.loss /= n;
  return result;
}

inline ParameterVector backward(const ParameterVector& params, const MlpConfig& config,
                                const Batch& batch) {
  return loss_and_gradient(params, config, batch).gradient;
}

// In-place Adam update with bias correction.
inline void adam_step(ParameterVector& params, const ParameterVector& gradient, AdamState& state) {
  if (gradient.size() != params.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw DimensionError("adam_step: parameter, gradient and moment lengths differ");
  }
  if (!gradient.all_finite()) throw NumericError("adam_step: non-finite gradient entry");

  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = gradient[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    const double m_hat = state.m[i] / correction1;
    const double v_hat = state.v[i] / correction2;
    params[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
  }
  if (!params.all_finite()) throw NumericError("adam_step produced non-finite parameters");
}

}  // namespace asyncfl
