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

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "grm/covariance.hpp"
#include "grm/errors.hpp"
#include "grm/linalg.hpp"

namespace grm {

/// Number of rectifier operations (projection builds, rectifications, hook
/// steps) executed by this process. Evaluation code must leave it unchanged.
inline std::atomic<std::uint64_t>& grm_operation_count() {
  static std::atomic<std::uint64_t> counter{0};
  return counter;
}

enum class Estimator { queue, running_average };

inline std::string to_string(Estimator e) { return e == Estimator::queue ? "queue" : "avg"; }

inline Estimator parse_estimator(const std::string& s) {
  if (s == "queue" || s == "bank") return Estimator::queue;
  if (s == "avg" || s == "average" || s == "running_average") return Estimator::running_average;
  throw InvalidInput("unknown estimator '" + s + "'");
}

struct GrmConfig {
  double rectification_rate = 1.0;  // s
  double jitter = kDefaultJitter;
  std::size_t queue_capacity = kDefaultQueueCapacity;
  Estimator estimator = Estimator::queue;
  std::size_t refresh_period = 1;  // T

  /// Memory queue with s = 1.
  static GrmConfig bank_linear() { return {}; }

  /// Running average with s = 0.5.
  static GrmConfig average_sqrt() {
    GrmConfig c;
    c.rectification_rate = 0.5;
    c.estimator = Estimator::running_average;
    return c;
  }

  void validate() const {
    if (!(rectification_rate >= 0.0 && rectification_rate <= 2.0))
      throw InvalidInput("GrmConfig: rectification rate must lie in [0, 2]");
    if (!(jitter > 0.0) || !std::isfinite(jitter)) throw InvalidInput("GrmConfig: jitter must be positive");
    if (queue_capacity < 2) throw InvalidInput("GrmConfig: queue capacity must be at least 2");
    if (refresh_period < 1) throw InvalidInput("GrmConfig: refresh period must be at least 1");
  }
};

/// P* = U·diag((λ̄/λᵢ)^s)·Uᵀ together with the spectrum it was built from.
struct ProjectionMatrix {
  SymMatrix matrix;
  double rectification_rate = 0.0;
  double source_mean_eigenvalue = 1.0;
  std::vector<double> source_eigenvalues;
  std::vector<double> eigenvalues;  // (λ̄/λᵢ)^s, aligned with source_eigenvalues
  bool identity = false;

  std::size_t dim() const { return matrix.dim(); }

  static ProjectionMatrix make_identity(std::size_t dim, double rate = 0.0) {
    ProjectionMatrix p;
    p.matrix = SymMatrix::identity(dim);
    p.rectification_rate = rate;
    p.source_eigenvalues.assign(dim, 1.0);
    p.eigenvalues.assign(dim, 1.0);
    p.identity = true;
    return p;
  }
};

/// Eigendecomposes the covariance estimate and forms the rectifier. s = 0
/// returns the exact identity so that a zero rate is bit-identical to no
/// rectification.
inline ProjectionMatrix build_projection(const CovarianceEstimate& p, double s) {
  ++grm_operation_count();
  if (!(s >= 0.0) || !std::isfinite(s)) throw InvalidInput("build_projection: rate must be finite and nonnegative");
  const std::size_t n = p.matrix.dim();
  if (s == 0.0) return ProjectionMatrix::make_identity(n, 0.0);

  const EigenDecomposition e = eigh_sym(p.matrix);
  for (double l : e.eigenvalues)
    if (!(l > 0.0)) throw NumericalFailure("build_projection: covariance estimate is not positive definite");

  ProjectionMatrix out;
  out.rectification_rate = s;
  out.source_mean_eigenvalue = e.mean_eigenvalue;
  out.source_eigenvalues = e.eigenvalues;
  out.eigenvalues.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.eigenvalues[i] = std::pow(e.mean_eigenvalue / e.eigenvalues[i], s);
  out.matrix = sym_sandwich(e.basis, out.eigenvalues);
  return out;
}

/// g* = P*·g for every row g of `grads`.
inline Matrix rectify(const ProjectionMatrix& proj, const Matrix& grads) {
  ++grm_operation_count();
  require_dims(grads.cols() == proj.dim(), "rectify: gradient dimension differs from projection");
  if (!grads.all_finite()) throw InvalidInput("rectify: non-finite gradient");
  if (proj.identity) return grads;

  const std::size_t n = proj.dim();
  const Matrix& pm = proj.matrix.matrix();
  Matrix out(grads.rows(), n);
  for (std::size_t r = 0; r < grads.rows(); ++r) {
    auto g = grads.row(r);
    auto o = out.row(r);
    for (std::size_t i = 0; i < n; ++i) {
      auto pi = pm.row(i);
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += pi[j] * g[j];
      o[i] = acc;
    }
  }
  return out;
}

/// Stateful rectifier sitting between the loss and the encoder.
///
/// Each training step feeds it the forward descriptors and the loss
/// gradients at those descriptors. Descriptors go into the active estimator,
/// the projection is rebuilt every `refresh_period` steps once the estimator
/// holds enough samples, and the gradients come back multiplied by the
/// current projection (identity during warmup).
class GradientRectifier {
 public:
  GradientRectifier(GrmConfig config, std::size_t dim)
      : config_(config), dim_(dim),
        projection_(std::make_shared<const ProjectionMatrix>(ProjectionMatrix::make_identity(dim))) {
    config_.validate();
    if (dim == 0) throw InvalidInput("GradientRectifier: dimension must be positive");
    if (config_.estimator == Estimator::queue)
      queue_.emplace(config_.queue_capacity, dim);
    else
      running_ = RunningAverageState::initial(dim);
  }

  /// Samples the estimator must hold before the first rebuild: max(2C, 256).
  /// A queue whose capacity is below this never leaves warmup.
  std::size_t warmup_samples() const { return std::max<std::size_t>(2 * dim_, 256); }

  std::size_t samples_held() const { return queue_ ? queue_->count() : running_->total_count; }
  bool warmed_up() const { return samples_held() >= warmup_samples(); }

  /// One training step: record `descriptors`, maybe rebuild, rectify `grads`.
  Matrix step(const Matrix& descriptors, const Matrix& grads) {
    ++grm_operation_count();
    require_dims(descriptors.cols() == dim_, "GradientRectifier::step: descriptor dimension mismatch");
    require_dims(grads.cols() == dim_, "GradientRectifier::step: gradient dimension mismatch");

    if (queue_) {
      if (descriptors.rows() > queue_->capacity()) {
        // Keep only the newest rows that fit.
        const std::size_t skip = descriptors.rows() - queue_->capacity();
        Matrix tail(queue_->capacity(), dim_);
        for (std::size_t r = 0; r < tail.rows(); ++r)
          std::copy_n(descriptors.row(skip + r).begin(), dim_, tail.row(r).begin());
        queue_->enqueue(tail);
      } else {
        queue_->enqueue(descriptors);
      }
    } else {
      *running_ = running_update(*running_, descriptors);
    }

    if (step_ % config_.refresh_period == 0 && warmed_up()) {
      projection_ = std::make_shared<const ProjectionMatrix>(
          build_projection(current_estimate(), config_.rectification_rate));
      ++rebuilds_;
    }
    ++step_;
    return rectify(*projection_, grads);
  }

  /// Applies the current projection without touching the estimator.
  Matrix rectify_current(const Matrix& grads) const { return rectify(*projection_, grads); }

  CovarianceEstimate current_estimate() const {
    return queue_ ? estimate_from_queue(*queue_, config_.jitter)
                  : estimate_from_running(*running_, config_.jitter);
  }

  std::shared_ptr<const ProjectionMatrix> projection() const { return projection_; }
  const GrmConfig& config() const { return config_; }
  std::size_t dim() const { return dim_; }
  std::size_t steps() const { return step_; }
  std::size_t rebuilds() const { return rebuilds_; }
  const MemoryQueue* queue() const { return queue_ ? &*queue_ : nullptr; }
  const RunningAverageState* running_state() const { return running_ ? &*running_ : nullptr; }

 private:
  GrmConfig config_;
  std::size_t dim_;
  std::optional<MemoryQueue> queue_;
  std::optional<RunningAverageState> running_;
  std::shared_ptr<const ProjectionMatrix> projection_;
  std::size_t step_ = 0;
  std::size_t rebuilds_ = 0;
};

}  // namespace grm
