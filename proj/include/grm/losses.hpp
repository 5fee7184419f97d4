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
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "grm/errors.hpp"
#include "grm/linalg.hpp"

namespace grm {

/// Squared L2 distance ‖a − b‖².
inline double pair_similarity(std::span<const double> a, std::span<const double> b) {
  require_dims(a.size() == b.size(), "pair_similarity: descriptor dimensions differ");
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    s += d * d;
  }
  return s;
}

struct PairLabel {
  std::size_t query = 0;
  std::size_t sample = 0;
  bool positive = false;
};

struct ContrastiveParams {
  double margin = 1.0;  // τ
};

namespace detail {

inline void check_pairs(const Matrix& batch, std::span<const PairLabel> pairs) {
  for (const auto& p : pairs) {
    if (p.query >= batch.rows() || p.sample >= batch.rows())
      throw InvalidInput("pair index out of range");
    if (p.query == p.sample) throw InvalidInput("pair joins a descriptor with itself");
  }
}

}  // namespace detail

/// Σ over pairs of φ·s + (1 − φ)·max(τ − s, 0).
inline double contrastive_loss(const Matrix& batch, std::span<const PairLabel> pairs,
                               const ContrastiveParams& params) {
  detail::check_pairs(batch, pairs);
  double loss = 0.0;
  for (const auto& p : pairs) {
    const double s = pair_similarity(batch.row(p.query), batch.row(p.sample));
    loss += p.positive ? s : std::max(params.margin - s, 0.0);
  }
  return loss;
}

/// Exact gradient of contrastive_loss for every row of `batch`. The hinge
/// uses the indicator 1[s < τ]; at s = τ the pair contributes nothing.
inline Matrix contrastive_grad(const Matrix& batch, std::span<const PairLabel> pairs,
                               const ContrastiveParams& params) {
  detail::check_pairs(batch, pairs);
  Matrix grad(batch.rows(), batch.cols());
  for (const auto& p : pairs) {
    auto a = batch.row(p.query);
    auto b = batch.row(p.sample);
    double coeff;
    if (p.positive) {
      coeff = 2.0;
    } else {
      const double s = pair_similarity(a, b);
      if (!(s < params.margin)) continue;
      coeff = -2.0;
    }
    auto ga = grad.row(p.query);
    auto gb = grad.row(p.sample);
    for (std::size_t k = 0; k < batch.cols(); ++k) {
      const double d = coeff * (a[k] - b[k]);
      ga[k] += d;
      gb[k] -= d;
    }
  }
  return grad;
}

/// Σⱼ αⱼ(pᵢ − pⱼ) for query row `query` and (j, αⱼ) terms.
inline std::vector<double> pairwise_grad_decomposition(
    const Matrix& batch, std::size_t query, std::span<const std::pair<std::size_t, double>> terms) {
  require_dims(query < batch.rows(), "pairwise_grad_decomposition: query index out of range");
  std::vector<double> g(batch.cols(), 0.0);
  auto pi = batch.row(query);
  for (const auto& [j, alpha] : terms) {
    require_dims(j < batch.rows(), "pairwise_grad_decomposition: sample index out of range");
    if (!std::isfinite(alpha)) throw InvalidInput("pairwise_grad_decomposition: non-finite coefficient");
    auto pj = batch.row(j);
    for (std::size_t k = 0; k < g.size(); ++k) g[k] += alpha * (pi[k] - pj[k]);
  }
  return g;
}

// Triplet margin loss: Σ max(s_ap − s_an + m, 0).

struct TripletLabel {
  std::size_t anchor = 0;
  std::size_t positive = 0;
  std::size_t negative = 0;
};

struct TripletParams {
  double margin = 1.0;
};

inline double triplet_loss(const Matrix& batch, std::span<const TripletLabel> triplets,
                           const TripletParams& params) {
  double loss = 0.0;
  for (const auto& t : triplets) {
    if (t.anchor >= batch.rows() || t.positive >= batch.rows() || t.negative >= batch.rows())
      throw InvalidInput("triplet index out of range");
    const double sap = pair_similarity(batch.row(t.anchor), batch.row(t.positive));
    const double san = pair_similarity(batch.row(t.anchor), batch.row(t.negative));
    loss += std::max(sap - san + params.margin, 0.0);
  }
  return loss;
}

inline Matrix triplet_grad(const Matrix& batch, std::span<const TripletLabel> triplets,
                           const TripletParams& params) {
  Matrix grad(batch.rows(), batch.cols());
  for (const auto& t : triplets) {
    if (t.anchor >= batch.rows() || t.positive >= batch.rows() || t.negative >= batch.rows())
      throw InvalidInput("triplet index out of range");
    auto a = batch.row(t.anchor);
    auto p = batch.row(t.positive);
    auto n = batch.row(t.negative);
    if (!(pair_similarity(a, p) - pair_similarity(a, n) + params.margin > 0.0)) continue;
    auto ga = grad.row(t.anchor);
    auto gp = grad.row(t.positive);
    auto gn = grad.row(t.negative);
    for (std::size_t k = 0; k < batch.cols(); ++k) {
      const double dp = 2.0 * (a[k] - p[k]);
      const double dn = 2.0 * (a[k] - n[k]);
      ga[k] += dp - dn;
      gp[k] -= dp;
      gn[k] += dn;
    }
  }
  return grad;
}

/// One vector per class; starts at zero.
struct PrototypeSet {
  Matrix prototypes;  // classes × C

  static PrototypeSet zeros(std::size_t classes, std::size_t dim) { return {Matrix(classes, dim)}; }
  std::size_t classes() const { return prototypes.rows(); }
  std::size_t dim() const { return prototypes.cols(); }
};

struct PrototypeLossResult {
  double loss = 0.0;
  Matrix descriptor_grad;
  Matrix prototype_grad;
};

/// Distance-softmax prototype loss:
///   mean over samples of −log softmax_k(−γ·‖f − m_k‖²) at the true class,
/// with exact gradients for both descriptors and prototypes.
inline PrototypeLossResult prototype_loss_and_grad(const Matrix& descriptors,
                                                   std::span<const std::size_t> labels,
                                                   const PrototypeSet& protos, double temperature = 1.0) {
  const std::size_t n = descriptors.rows();
  const std::size_t c = descriptors.cols();
  const std::size_t k_count = protos.classes();
  if (n == 0) throw InvalidInput("prototype_loss_and_grad: empty batch");
  require_dims(labels.size() == n, "prototype_loss_and_grad: one label per descriptor required");
  require_dims(protos.dim() == c, "prototype_loss_and_grad: prototype dimension mismatch");

  PrototypeLossResult out{0.0, Matrix(n, c), Matrix(k_count, c)};
  std::vector<double> logits(k_count);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t y = labels[i];
    if (y >= k_count) throw InvalidInput("prototype_loss_and_grad: label out of range");
    auto f = descriptors.row(i);
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < k_count; ++k) {
      logits[k] = -temperature * pair_similarity(f, protos.prototypes.row(k));
      top = std::max(top, logits[k]);
    }
    double z = 0.0;
    for (std::size_t k = 0; k < k_count; ++k) z += std::exp(logits[k] - top);
    const double log_z = top + std::log(z);
    out.loss += (log_z - logits[y]) * inv_n;

    auto gf = out.descriptor_grad.row(i);
    for (std::size_t k = 0; k < k_count; ++k) {
      const double prob = std::exp(logits[k] - log_z);
      const double dz = (prob - (k == y ? 1.0 : 0.0)) * inv_n;
      if (dz == 0.0) continue;
      auto m = protos.prototypes.row(k);
      auto gm = out.prototype_grad.row(k);
      for (std::size_t d = 0; d < c; ++d) {
        const double diff = 2.0 * temperature * (f[d] - m[d]) * dz;
        gf[d] -= diff;
        gm[d] += diff;
      }
    }
  }
  return out;
}

/// Index of the nearest prototype for each descriptor (ties to the lower index).
inline std::vector<std::size_t> nearest_prototype(const Matrix& descriptors, const PrototypeSet& protos) {
  require_dims(protos.dim() == descriptors.cols(), "nearest_prototype: dimension mismatch");
  std::vector<std::size_t> out(descriptors.rows(), 0);
  for (std::size_t i = 0; i < descriptors.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < protos.classes(); ++k) {
      const double d = pair_similarity(descriptors.row(i), protos.prototypes.row(k));
      if (d < best) {
        best = d;
        out[i] = k;
      }
    }
  }
  return out;
}

/// Row-wise L2 normalization and its backward pass.
inline Matrix l2_normalize_rows(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double n = std::sqrt(dot(x.row(i), x.row(i)));
    const double inv = n > 0.0 ? 1.0 / n : 0.0;
    for (std::size_t k = 0; k < x.cols(); ++k) out(i, k) = x(i, k) * inv;
  }
  return out;
}

/// dL/dx given dL/dy for y = x/‖x‖: (g − y·(y·g))/‖x‖.
inline Matrix l2_normalize_rows_backward(const Matrix& x, const Matrix& grad_out) {
  require_dims(x.rows() == grad_out.rows() && x.cols() == grad_out.cols(),
               "l2_normalize_rows_backward: shape mismatch");
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double n = std::sqrt(dot(x.row(i), x.row(i)));
    if (n == 0.0) continue;
    double yg = 0.0;
    for (std::size_t k = 0; k < x.cols(); ++k) yg += x(i, k) / n * grad_out(i, k);
    for (std::size_t k = 0; k < x.cols(); ++k) out(i, k) = (grad_out(i, k) - x(i, k) / n * yg) / n;
  }
  return out;
}

}  // namespace grm
