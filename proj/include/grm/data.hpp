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
#include <random>
#include <vector>

#include "grm/errors.hpp"
#include "grm/linalg.hpp"

namespace grm {

/// Labeled vectors grouped by place. Within each place the first
/// `queries_per_place()` samples are queries, the rest form the database.
struct RetrievalDataset {
  std::uint32_t num_places = 0;
  std::uint32_t per_place = 0;
  std::uint32_t dim = 0;
  Matrix inputs;                        // (places·per_place) × dim, place-major
  std::vector<std::uint32_t> place_ids;

  std::size_t size() const { return inputs.rows(); }

  std::size_t queries_per_place() const {
    if (per_place < 2) return 0;
    return std::max<std::size_t>(1, per_place / 4);
  }

  bool is_query(std::size_t item) const { return item % per_place < queries_per_place(); }

  std::vector<std::size_t> query_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < size(); ++i)
      if (is_query(i)) out.push_back(i);
    return out;
  }

  std::vector<std::size_t> database_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < size(); ++i)
      if (!is_query(i)) out.push_back(i);
    return out;
  }

  Matrix rows(const std::vector<std::size_t>& idx) const {
    Matrix m(idx.size(), dim);
    for (std::size_t r = 0; r < idx.size(); ++r)
      std::copy_n(inputs.row(idx[r]).begin(), dim, m.row(r).begin());
    return m;
  }

  std::vector<std::uint32_t> labels(const std::vector<std::size_t>& idx) const {
    std::vector<std::uint32_t> out(idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r) out[r] = place_ids[idx[r]];
    return out;
  }

  bool operator==(const RetrievalDataset&) const = default;
};

/// Random orthogonal matrix (Gram–Schmidt on a Gaussian matrix, columns orthonormal).
inline Matrix random_orthonormal(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix q(n, n);
  for (double& v : q.data()) v = normal(rng);
  for (std::size_t j = 0; j < n; ++j) {
    for (int pass = 0; pass < 2; ++pass)
      for (std::size_t k = 0; k < j; ++k) {
        double d = 0.0;
        for (std::size_t i = 0; i < n; ++i) d += q(i, j) * q(i, k);
        for (std::size_t i = 0; i < n; ++i) q(i, j) -= d * q(i, k);
      }
    double norm = 0.0;
    for (std::size_t i = 0; i < n; ++i) norm += q(i, j) * q(i, j);
    norm = std::sqrt(norm);
    for (std::size_t i = 0; i < n; ++i) q(i, j) /= norm;
  }
  return q;
}

inline constexpr double kDefaultPlaceNoise = 1.0;

/// Place centers drawn from N(0, Σ) where Σ has a random eigenbasis and
/// geometrically spaced eigenvalues with ratio `anisotropy`, scaled to mean 1
/// (trace Σ = input_dim). Each sample is its center plus N(0, noise²·Σ).
/// Values are rounded to float32 so the binary dataset format stores them
/// exactly.
inline RetrievalDataset gen_synthetic_retrieval(std::uint32_t num_places, std::uint32_t per_place,
                                                std::uint32_t input_dim, double anisotropy,
                                                std::uint64_t seed, double noise = kDefaultPlaceNoise) {
  if (num_places == 0 || per_place == 0 || input_dim == 0)
    throw InvalidInput("gen_synthetic_retrieval: counts must be positive");
  if (!(anisotropy >= 1.0) || !std::isfinite(anisotropy))
    throw InvalidInput("gen_synthetic_retrieval: anisotropy must be >= 1");
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw InvalidInput("gen_synthetic_retrieval: bad noise level");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Matrix basis = random_orthonormal(input_dim, rng);
  std::vector<double> stddev(input_dim);
  double mean_var = 0.0;
  for (std::uint32_t k = 0; k < input_dim; ++k) {
    const double t = input_dim == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(input_dim - 1);
    stddev[k] = std::pow(anisotropy, -t);
    mean_var += stddev[k] / input_dim;
  }
  for (auto& sd : stddev) sd = std::sqrt(sd / mean_var);
  auto draw = [&](double scale, std::vector<double>& out) {
    std::vector<double> z(input_dim);
    for (auto& v : z) v = scale * normal(rng);
    for (std::uint32_t i = 0; i < input_dim; ++i) {
      double acc = 0.0;
      for (std::uint32_t k = 0; k < input_dim; ++k) acc += basis(i, k) * stddev[k] * z[k];
      out[i] = acc;
    }
  };

  RetrievalDataset ds;
  ds.num_places = num_places;
  ds.per_place = per_place;
  ds.dim = input_dim;
  ds.inputs = Matrix(static_cast<std::size_t>(num_places) * per_place, input_dim);
  ds.place_ids.resize(ds.inputs.rows());
  std::vector<double> center(input_dim), offset(input_dim);
  for (std::uint32_t p = 0; p < num_places; ++p) {
    draw(1.0, center);
    for (std::uint32_t s = 0; s < per_place; ++s) {
      draw(noise, offset);
      const std::size_t row = static_cast<std::size_t>(p) * per_place + s;
      for (std::uint32_t i = 0; i < input_dim; ++i)
        ds.inputs(row, i) = static_cast<double>(static_cast<float>(center[i] + offset[i]));
      ds.place_ids[row] = p;
    }
  }
  return ds;
}

/// Gaussian blobs for the prototype-classification task.
struct ClassificationDataset {
  std::size_t num_classes = 0;
  Matrix train_inputs;
  std::vector<std::size_t> train_labels;
  Matrix test_inputs;
  std::vector<std::size_t> test_labels;
};

/// Class means on a scaled random orthonormal frame (pairwise distance
/// `separation`·√2), isotropic unit noise.
inline ClassificationDataset gen_blobs(std::size_t num_classes, std::size_t train_per_class,
                                       std::size_t test_per_class, std::size_t dim, double separation,
                                       std::uint64_t seed) {
  if (num_classes == 0 || train_per_class == 0 || dim < num_classes)
    throw InvalidInput("gen_blobs: need classes > 0, samples > 0 and dim >= classes");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Matrix frame = random_orthonormal(dim, rng);

  ClassificationDataset ds;
  ds.num_classes = num_classes;
  auto fill = [&](std::size_t per_class, Matrix& x, std::vector<std::size_t>& y) {
    x = Matrix(num_classes * per_class, dim);
    y.resize(x.rows());
    for (std::size_t c = 0; c < num_classes; ++c)
      for (std::size_t s = 0; s < per_class; ++s) {
        const std::size_t r = c * per_class + s;
        for (std::size_t i = 0; i < dim; ++i) x(r, i) = separation * frame(i, c) + normal(rng);
        y[r] = c;
      }
  };
  fill(train_per_class, ds.train_inputs, ds.train_labels);
  fill(test_per_class, ds.test_inputs, ds.test_labels);
  return ds;
}

}  // namespace grm
