/* Copyright 2026 The GRM Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "grm/errors.hpp"

namespace grm {

enum class OptimizerKind { sgd, sgd_momentum, adam };

inline std::string to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::sgd: return "sgd";
    case OptimizerKind::sgd_momentum: return "momentum";
    case OptimizerKind::adam: return "adam";
  }
  return "adam";
}

inline OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "momentum" || s == "sgd_momentum") return OptimizerKind::sgd_momentum;
  if (s == "adam") return OptimizerKind::adam;
  throw InvalidInput("unknown optimizer '" + s + "'");
}

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 1e-4;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Step decay: lr · decay_factor^⌊epoch / decay_every⌋; decay_every = 0 disables.
  double decay_factor = 1.0;
  std::size_t decay_every = 0;

  /// Adam, lr 1e-4.
  static OptimizerConfig retrieval_default() { return {}; }

  /// SGD with momentum 0.9, lr 0.05, ×0.7 every 20 epochs.
  static OptimizerConfig classification_default() {
    OptimizerConfig c;
    c.kind = OptimizerKind::sgd_momentum;
    c.learning_rate = 0.05;
    c.momentum = 0.9;
    c.decay_factor = 0.7;
    c.decay_every = 20;
    return c;
  }

  double learning_rate_at(std::size_t epoch) const {
    if (decay_every == 0) return learning_rate;
    return learning_rate * std::pow(decay_factor, static_cast<double>(epoch / decay_every));
  }
};

/// Per-tensor accumulators for one parameter list.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config) : config_(config) {
    if (!(config_.learning_rate > 0.0)) throw InvalidInput("Optimizer: learning rate must be positive");
  }

  const OptimizerConfig& config() const { return config_; }
  std::size_t steps() const { return steps_; }

  void set_epoch(std::size_t epoch) { lr_ = config_.learning_rate_at(epoch); }
  double current_learning_rate() const { return lr_ > 0.0 ? lr_ : config_.learning_rate; }

  /// Applies one update. Throws NumericalFailure before touching any
  /// parameter if a gradient entry is non-finite.
  void step(const std::vector<std::span<double>>& params, const std::vector<std::span<const double>>& grads) {
    require_dims(params.size() == grads.size(), "Optimizer::step: parameter/gradient count mismatch");
    for (std::size_t t = 0; t < params.size(); ++t) {
      require_dims(params[t].size() == grads[t].size(), "Optimizer::step: tensor shape mismatch");
      for (std::size_t i = 0; i < grads[t].size(); ++i)
        if (!std::isfinite(grads[t][i]))
          throw NumericalFailure("Optimizer::step: non-finite gradient in tensor " + std::to_string(t) +
                                 " at index " + std::to_string(i) + "; step aborted");
    }
    if (first_.empty()) {
      first_.resize(params.size());
      second_.resize(params.size());
      for (std::size_t t = 0; t < params.size(); ++t) {
        first_[t].assign(params[t].size(), 0.0);
        if (config_.kind == OptimizerKind::adam) second_[t].assign(params[t].size(), 0.0);
      }
    }
    require_dims(first_.size() == params.size(), "Optimizer::step: parameter list changed between steps");

    ++steps_;
    const double lr = current_learning_rate();
    for (std::size_t t = 0; t < params.size(); ++t) {
      auto p = params[t];
      auto g = grads[t];
      require_dims(first_[t].size() == p.size(), "Optimizer::step: tensor resized between steps");
      switch (config_.kind) {
        case OptimizerKind::sgd:
          for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
          break;
        case OptimizerKind::sgd_momentum: {
          auto& v = first_[t];
          for (std::size_t i = 0; i < p.size(); ++i) {
            v[i] = config_.momentum * v[i] + g[i];
            p[i] -= lr * v[i];
          }
          break;
        }
        case OptimizerKind::adam: {
          auto& m = first_[t];
          auto& v = second_[t];
          const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
          const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
          for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
            v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
            p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.epsilon);
          }
          break;
        }
      }
    }
  }

 private:
  OptimizerConfig config_;
  double lr_ = 0.0;
  std::size_t steps_ = 0;
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
};

}  // namespace grm
