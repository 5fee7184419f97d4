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
#include <cstdint>
#include <map>
#include <numeric>
#include <vector>

#include "grm/covariance.hpp"
#include "grm/errors.hpp"
#include "grm/linalg.hpp"
#include "grm/losses.hpp"

namespace grm {

/// Eigenvalues (descending) and eigenbasis of a jitter-free sample covariance.
struct SpectrumReport {
  std::vector<double> eigenvalues;
  Matrix basis;
  double condition_number = 0.0;  // λ₁ / max(λ_C, 1e-300)
};

inline SpectrumReport spectrum_report(const Matrix& batch) {
  if (batch.rows() < 2) throw InsufficientSamples("spectrum_report: need at least 2 samples");
  EigenDecomposition e = eigh_sym(sample_covariance(batch));
  SpectrumReport r;
  r.condition_number = e.eigenvalues.front() / std::max(e.eigenvalues.back(), 1e-300);
  r.eigenvalues = std::move(e.eigenvalues);
  r.basis = std::move(e.basis);
  return r;
}

struct EvalReport {
  std::map<std::size_t, double> recall_at;
  std::vector<double> eigenvalues;  // database descriptor spectrum
  double condition_number = 0.0;
};

/// Indices of the `k` nearest database rows to `query` by squared L2
/// distance, ties broken by ascending database index.
inline std::vector<std::size_t> nearest_neighbors(std::span<const double> query, const Matrix& database,
                                                  std::size_t k) {
  std::vector<std::pair<double, std::size_t>> d(database.rows());
  for (std::size_t j = 0; j < database.rows(); ++j) d[j] = {pair_similarity(query, database.row(j)), j};
  k = std::min(k, d.size());
  std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
  std::vector<std::size_t> out(k);
  for (std::size_t i = 0; i < k; ++i) out[i] = d[i].second;
  return out;
}

/// Recall@N: the fraction of queries with at least one positive among
/// their N nearest database descriptors.
inline EvalReport recall_at_n(const Matrix& queries, const Matrix& database,
                              const std::vector<std::vector<std::size_t>>& positives,
                              const std::vector<std::size_t>& n_values) {
  if (database.rows() == 0) throw InvalidInput("recall_at_n: empty database");
  require_dims(queries.cols() == database.cols(), "recall_at_n: descriptor dimensions differ");
  require_dims(positives.size() == queries.rows(), "recall_at_n: one positive list per query required");
  std::size_t max_n = 0;
  for (auto n : n_values) {
    if (n == 0 || n > database.rows()) throw InvalidInput("recall_at_n: N must lie in [1, database size]");
    max_n = std::max(max_n, n);
  }

  std::vector<std::size_t> first_hit(queries.rows(), SIZE_MAX);
  for (std::size_t q = 0; q < queries.rows(); ++q) {
    if (positives[q].empty()) throw InvalidInput("recall_at_n: query without a positive");
    const auto nn = nearest_neighbors(queries.row(q), database, max_n);
    for (std::size_t rank = 0; rank < nn.size(); ++rank)
      if (std::find(positives[q].begin(), positives[q].end(), nn[rank]) != positives[q].end()) {
        first_hit[q] = rank;
        break;
      }
  }

  EvalReport report;
  for (auto n : n_values) {
    std::size_t hits = 0;
    for (auto h : first_hit)
      if (h < n) ++hits;
    report.recall_at[n] = queries.rows() == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(queries.rows());
  }
  if (database.rows() >= 2) {
    auto s = spectrum_report(database);
    report.eigenvalues = std::move(s.eigenvalues);
    report.condition_number = s.condition_number;
  }
  return report;
}

/// Positive lists from labels: database j is positive for query i when labels match.
template <typename Label>
std::vector<std::vector<std::size_t>> positives_from_labels(const std::vector<Label>& query_labels,
                                                            const std::vector<Label>& database_labels) {
  std::vector<std::vector<std::size_t>> out(query_labels.size());
  for (std::size_t q = 0; q < query_labels.size(); ++q)
    for (std::size_t j = 0; j < database_labels.size(); ++j)
      if (database_labels[j] == query_labels[q]) out[q].push_back(j);
  return out;
}

/// A[i][j] = |aᵢ · bⱼ| for the columns of two orthonormal bases.
struct AlignmentMatrix {
  Matrix entries;
  std::size_t dim() const { return entries.rows(); }
};

inline AlignmentMatrix alignment_matrix(const Matrix& basis_a, const Matrix& basis_b) {
  require_dims(basis_a.rows() == basis_a.cols() && basis_b.rows() == basis_b.cols() &&
                   basis_a.rows() == basis_b.rows(),
               "alignment_matrix: bases must be square and of equal dimension");
  if (orthonormality_error(basis_a) > 1e-8 || orthonormality_error(basis_b) > 1e-8)
    throw InvalidInput("alignment_matrix: basis is not orthonormal");
  const std::size_t n = basis_a.rows();
  AlignmentMatrix a{Matrix(n, n)};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < n; ++k) acc += basis_a(k, i) * basis_b(k, j);
      a.entries(i, j) = std::min(1.0, std::abs(acc));
    }
  return a;
}

/// Mean of A[i][i] over the leading `top_k` directions.
inline double diagonal_mass(const AlignmentMatrix& a, std::size_t top_k) {
  if (top_k == 0 || top_k > a.dim()) throw InvalidInput("diagonal_mass: top_k must lie in [1, dim]");
  double s = 0.0;
  for (std::size_t i = 0; i < top_k; ++i) s += a.entries(i, i);
  return s / static_cast<double>(top_k);
}

}  // namespace grm
