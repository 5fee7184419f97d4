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
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "grm/errors.hpp"
#include "grm/linalg.hpp"

namespace grm {

inline constexpr std::size_t kDefaultQueueCapacity = 10240;
inline constexpr double kDefaultJitter = 1e-3;

/// FIFO buffer of the K most recent descriptors (detached copies).
///
/// Backed by a ring of K·C doubles, so memory is fixed at construction.
class MemoryQueue {
 public:
  MemoryQueue(std::size_t capacity, std::size_t dim)
      : capacity_(capacity), dim_(dim), storage_(capacity * dim, 0.0) {
    if (capacity == 0) throw InvalidInput("MemoryQueue: capacity must be positive");
    if (dim == 0) throw InvalidInput("MemoryQueue: dimension must be positive");
  }

  std::size_t capacity() const { return capacity_; }
  std::size_t dim() const { return dim_; }
  std::size_t count() const { return count_; }
  bool full() const { return count_ == capacity_; }

  /// Appends every row of `batch`; the oldest rows are evicted once full.
  void enqueue(const Matrix& batch) {
    require_dims(batch.cols() == dim_, "MemoryQueue::enqueue: descriptor dimension mismatch");
    if (batch.rows() == 0) throw InvalidInput("MemoryQueue::enqueue: empty batch");
    if (batch.rows() > capacity_) throw InvalidInput("MemoryQueue::enqueue: batch larger than capacity");
    if (!batch.all_finite()) throw InvalidInput("MemoryQueue::enqueue: non-finite descriptor");
    for (std::size_t r = 0; r < batch.rows(); ++r) {
      const std::size_t slot = (head_ + count_) % capacity_;
      std::copy_n(batch.row(r).begin(), dim_, storage_.begin() + static_cast<std::ptrdiff_t>(slot * dim_));
      if (count_ < capacity_) {
        ++count_;
      } else {
        head_ = (head_ + 1) % capacity_;
      }
    }
  }

  /// i-th oldest descriptor.
  std::span<const double> at(std::size_t i) const {
    const std::size_t slot = (head_ + i) % capacity_;
    return {storage_.data() + slot * dim_, dim_};
  }

  /// Contents oldest-first, one descriptor per row.
  Matrix snapshot() const {
    Matrix m(count_, dim_);
    for (std::size_t i = 0; i < count_; ++i) std::copy_n(at(i).begin(), dim_, m.row(i).begin());
    return m;
  }

  void clear() {
    head_ = 0;
    count_ = 0;
  }

 private:
  std::size_t capacity_;
  std::size_t dim_;
  std::size_t head_ = 0;
  std::size_t count_ = 0;
  std::vector<double> storage_;
};

/// Covariance matrix with ε·I on the diagonal.
struct CovarianceEstimate {
  SymMatrix matrix;
  double jitter = 0.0;
  std::size_t sample_count = 0;
};

namespace detail {

inline Matrix add_jitter(Matrix m, double jitter) {
  for (std::size_t i = 0; i < m.rows(); ++i) m(i, i) += jitter;
  return m;
}

/// Two-pass unbiased scatter (mean first, then deviations). Row accessor
/// lets both Matrix and MemoryQueue feed it without copying.
template <typename RowFn>
Matrix two_pass_covariance(std::size_t count, std::size_t dim, RowFn&& row_of) {
  std::vector<double> mean(dim, 0.0);
  for (std::size_t i = 0; i < count; ++i) {
    auto x = row_of(i);
    for (std::size_t d = 0; d < dim; ++d) mean[d] += x[d];
  }
  for (double& m : mean) m /= static_cast<double>(count);

  Matrix scatter(dim, dim);
  std::vector<double> dev(dim);
  for (std::size_t i = 0; i < count; ++i) {
    auto x = row_of(i);
    for (std::size_t d = 0; d < dim; ++d) dev[d] = x[d] - mean[d];
    for (std::size_t a = 0; a < dim; ++a) {
      const double da = dev[a];
      auto out = scatter.row(a);
      for (std::size_t b = a; b < dim; ++b) out[b] += da * dev[b];
    }
  }
  const double norm = 1.0 / static_cast<double>(count - 1);
  for (std::size_t a = 0; a < dim; ++a)
    for (std::size_t b = a; b < dim; ++b) {
      scatter(a, b) *= norm;
      scatter(b, a) = scatter(a, b);
    }
  return scatter;
}

}  // namespace detail

/// Unbiased sample covariance of the rows of `samples` (no jitter).
inline SymMatrix sample_covariance(const Matrix& samples) {
  if (samples.rows() < 2) throw InsufficientSamples("sample_covariance: need at least 2 samples");
  if (!samples.all_finite()) throw InvalidInput("sample_covariance: non-finite sample");
  return SymMatrix(detail::two_pass_covariance(samples.rows(), samples.cols(),
                                               [&](std::size_t i) { return samples.row(i); }));
}

/// (1/(B−1))·Σ(x − x̄)(x − x̄)ᵀ + ε·I over everything in the queue.
inline CovarianceEstimate estimate_from_queue(const MemoryQueue& queue, double jitter = kDefaultJitter) {
  if (queue.count() < 2) throw InsufficientSamples("estimate_from_queue: need at least 2 queued descriptors");
  if (!(jitter >= 0.0) || !std::isfinite(jitter)) throw InvalidInput("estimate_from_queue: bad jitter");
  Matrix cov = detail::two_pass_covariance(queue.count(), queue.dim(),
                                           [&](std::size_t i) { return queue.at(i); });
  return {SymMatrix(detail::add_jitter(std::move(cov), jitter)), jitter, queue.count()};
}

/// Streaming estimator: N_k, running mean x̄_k and P_k.
///
/// Starts from N = 0, x̄ = 0, P = I. Each batch of b samples gives
///   N' = N + b
///   x̄' = ((N' − b)/N')·x̄ + (1/N')·Σxᵢ
///   P' = ((N' − b)/N')·P + (1/N')·Σ(xᵢ − x̄')(xᵢ − x̄')ᵀ
struct RunningAverageState {
  std::size_t total_count = 0;
  std::vector<double> mean;
  Matrix matrix;

  static RunningAverageState initial(std::size_t dim) {
    if (dim == 0) throw InvalidInput("RunningAverageState: dimension must be positive");
    return {0, std::vector<double>(dim, 0.0), Matrix::identity(dim)};
  }

  std::size_t dim() const { return mean.size(); }
};

inline RunningAverageState running_update(const RunningAverageState& state, const Matrix& batch) {
  const std::size_t dim = state.dim();
  require_dims(batch.cols() == dim, "running_update: descriptor dimension mismatch");
  if (batch.rows() == 0) throw InvalidInput("running_update: empty batch");
  if (!batch.all_finite()) throw InvalidInput("running_update: non-finite descriptor");

  const std::size_t b = batch.rows();
  RunningAverageState next;
  next.total_count = state.total_count + b;
  const double n_next = static_cast<double>(next.total_count);
  const double keep = static_cast<double>(next.total_count - b) / n_next;

  next.mean.assign(dim, 0.0);
  for (std::size_t r = 0; r < b; ++r)
    for (std::size_t d = 0; d < dim; ++d) next.mean[d] += batch(r, d);
  for (std::size_t d = 0; d < dim; ++d) next.mean[d] = keep * state.mean[d] + next.mean[d] / n_next;

  Matrix scatter(dim, dim);
  std::vector<double> dev(dim);
  for (std::size_t r = 0; r < b; ++r) {
    for (std::size_t d = 0; d < dim; ++d) dev[d] = batch(r, d) - next.mean[d];
    for (std::size_t i = 0; i < dim; ++i)
      for (std::size_t j = i; j < dim; ++j) scatter(i, j) += dev[i] * dev[j];
  }
  next.matrix = Matrix(dim, dim);
  for (std::size_t i = 0; i < dim; ++i)
    for (std::size_t j = i; j < dim; ++j) {
      const double v = keep * state.matrix(i, j) + scatter(i, j) / n_next;
      next.matrix(i, j) = v;
      next.matrix(j, i) = v;
    }
  return next;
}

/// P_k + ε·I, the form handed to the projection builder.
inline CovarianceEstimate estimate_from_running(const RunningAverageState& state,
                                                double jitter = kDefaultJitter) {
  if (!(jitter >= 0.0) || !std::isfinite(jitter)) throw InvalidInput("estimate_from_running: bad jitter");
  return {SymMatrix::symmetrized(detail::add_jitter(state.matrix, jitter)), jitter, state.total_count};
}

}  // namespace grm
