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
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "grm/data.hpp"
#include "grm/errors.hpp"
#include "grm/evaluation.hpp"
#include "grm/losses.hpp"
#include "grm/mlp.hpp"
#include "grm/optimizer.hpp"
#include "grm/rectifier.hpp"

namespace grm {

enum class LossKind { contrastive, triplet, prototype };

inline std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::contrastive: return "contrastive";
    case LossKind::triplet: return "triplet";
    case LossKind::prototype: return "prototype";
  }
  return "contrastive";
}

inline LossKind parse_loss(const std::string& s) {
  if (s == "contrastive") return LossKind::contrastive;
  if (s == "triplet") return LossKind::triplet;
  if (s == "prototype") return LossKind::prototype;
  throw InvalidInput("unknown loss '" + s + "'");
}

struct TrainConfig {
  std::vector<std::size_t> hidden_sizes{64};
  std::size_t descriptor_dim = 32;
  LossKind loss = LossKind::contrastive;
  double margin = 1.0;       // contrastive τ and triplet margin
  double temperature = 1.0;  // prototype loss γ
  bool normalize_descriptors = false;
  bool grm_enabled = true;
  GrmConfig grm;
  OptimizerConfig optimizer;
  std::size_t epochs = 50;
  std::size_t queries_per_batch = 16;
  std::size_t negatives_per_query = 5;
  std::size_t steps_per_epoch = 0;  // 0: one pass over the database anchors
  std::uint64_t seed = 7;

  void validate() const {
    if (descriptor_dim == 0 || epochs == 0 || queries_per_batch == 0 || negatives_per_query == 0)
      throw InvalidInput("TrainConfig: counts must be positive");
    for (auto h : hidden_sizes)
      if (h == 0) throw InvalidInput("TrainConfig: hidden sizes must be positive");
    if (!(margin > 0.0)) throw InvalidInput("TrainConfig: margin must be positive");
    if (!(temperature > 0.0)) throw InvalidInput("TrainConfig: temperature must be positive");
    if (grm_enabled) grm.validate();
  }
};

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;
  double desc_cond = 0.0;
  double grad_cond = 0.0;
  double recall1 = 0.0;
  double recall5 = 0.0;
  double recall10 = 0.0;
  SpectrumReport descriptors;  // database descriptors at the end of the epoch
  SpectrumReport gradients;    // nonzero descriptor gradients fed to the encoder during the epoch
};

struct TrainResult {
  MlpEncoder encoder;
  PrototypeSet prototypes;
  std::vector<EpochRecord> log;
  std::size_t projection_rebuilds = 0;
};

/// Thrown when the loss stops being finite; carries the encoder from the
/// last completed epoch.
class TrainingAborted : public NumericalFailure {
 public:
  TrainingAborted(const std::string& what, MlpEncoder last_good, std::size_t epoch)
      : NumericalFailure(what), last_good_(std::move(last_good)), epoch_(epoch) {}
  const MlpEncoder& last_good() const { return last_good_; }
  std::size_t epoch() const { return epoch_; }

 private:
  MlpEncoder last_good_;
  std::size_t epoch_;
};

/// Diagonal mass of the descriptor-vs-gradient alignment for one epoch.
inline double descriptor_gradient_diagonal_mass(const EpochRecord& r, std::size_t top_k) {
  return diagonal_mass(alignment_matrix(r.descriptors.basis, r.gradients.basis), top_k);
}

inline std::vector<std::size_t> encoder_layout(std::size_t input_dim, const TrainConfig& c) {
  std::vector<std::size_t> sizes{input_dim};
  sizes.insert(sizes.end(), c.hidden_sizes.begin(), c.hidden_sizes.end());
  sizes.push_back(c.descriptor_dim);
  return sizes;
}

/// Encodes the query and database splits and measures recall at 1, 5, 10
/// (each clamped to the database size). Never touches the rectifier.
inline EvalReport evaluate_retrieval(const MlpEncoder& enc, const RetrievalDataset& data,
                                     std::vector<std::size_t> n_values = {1, 5, 10}, bool normalize = false) {
  const auto qi = data.query_indices();
  const auto di = data.database_indices();
  if (di.empty()) throw InvalidInput("evaluate_retrieval: empty database");
  std::vector<std::size_t> clamped;
  for (auto n : n_values) clamped.push_back(std::min(n, di.size()));
  std::sort(clamped.begin(), clamped.end());
  clamped.erase(std::unique(clamped.begin(), clamped.end()), clamped.end());
  Matrix q = mlp_encode(enc, data.rows(qi));
  Matrix d = mlp_encode(enc, data.rows(di));
  if (normalize) {
    q = l2_normalize_rows(q);
    d = l2_normalize_rows(d);
  }
  EvalReport r = recall_at_n(q, d, positives_from_labels(data.labels(qi), data.labels(di)), clamped);
  // Report under the requested N even when it exceeded the database size.
  std::map<std::size_t, double> by_request;
  for (auto n : n_values) by_request[n] = r.recall_at.at(std::min(n, di.size()));
  r.recall_at = std::move(by_request);
  return r;
}

/// One step's worth of inputs with the row indices each loss needs.
struct TrainingBatch {
  Matrix inputs;
  std::vector<std::size_t> labels;
  std::vector<PairLabel> pairs;
  std::vector<TripletLabel> triplets;
};

namespace detail {

class BatchSampler {
 public:
  BatchSampler(const RetrievalDataset& data, std::uint64_t seed) : data_(data), rng_(seed) {
    anchors_ = data.database_indices();
    by_place_.resize(data.num_places);
    for (auto i : anchors_) by_place_[data.place_ids[i]].push_back(i);
    for (const auto& p : by_place_)
      if (p.size() < 2) throw InvalidInput("train: every place needs at least two database samples");
    if (data.num_places < 2) throw InvalidInput("train: need at least two places");
  }

  std::size_t anchor_count() const { return anchors_.size(); }

  void shuffle() {
    std::shuffle(anchors_.begin(), anchors_.end(), rng_);
    cursor_ = 0;
  }

  /// Rows per query: anchor, positive, then `negatives` negatives.
  TrainingBatch next(std::size_t queries, std::size_t negatives) {
    TrainingBatch b;
    const std::size_t per = 2 + negatives;
    b.inputs = Matrix(queries * per, data_.dim);
    std::vector<std::size_t> items;
    items.reserve(queries * per);
    for (std::size_t q = 0; q < queries; ++q) {
      if (cursor_ == anchors_.size()) shuffle();
      const std::size_t a = anchors_[cursor_++];
      const auto& same = by_place_[data_.place_ids[a]];
      std::size_t p;
      do {
        p = same[std::uniform_int_distribution<std::size_t>(0, same.size() - 1)(rng_)];
      } while (p == a);
      const std::size_t base = items.size();
      items.push_back(a);
      items.push_back(p);
      b.pairs.push_back({base, base + 1, true});
      for (std::size_t m = 0; m < negatives; ++m) {
        std::size_t n;
        do {
          n = anchors_[std::uniform_int_distribution<std::size_t>(0, anchors_.size() - 1)(rng_)];
        } while (data_.place_ids[n] == data_.place_ids[a]);
        b.pairs.push_back({base, items.size(), false});
        b.triplets.push_back({base, base + 1, items.size()});
        items.push_back(n);
      }
    }
    for (std::size_t r = 0; r < items.size(); ++r) {
      std::copy_n(data_.inputs.row(items[r]).begin(), data_.dim, b.inputs.row(r).begin());
      b.labels.push_back(data_.place_ids[items[r]]);
    }
    return b;
  }

 private:
  const RetrievalDataset& data_;
  std::mt19937_64 rng_;
  std::vector<std::size_t> anchors_;
  std::vector<std::vector<std::size_t>> by_place_;
  std::size_t cursor_ = 0;
};

inline void scale_in_place(Matrix& m, double s) {
  for (double& v : m.data()) v *= s;
}

/// Rows whose gradient is not identically zero.
inline void append_nonzero_rows(const Matrix& g, std::vector<double>& sink) {
  for (std::size_t r = 0; r < g.rows(); ++r) {
    auto row = g.row(r);
    if (std::any_of(row.begin(), row.end(), [](double v) { return v != 0.0; }))
      sink.insert(sink.end(), row.begin(), row.end());
  }
}

inline SpectrumReport spectrum_or_empty(std::vector<double> rows, std::size_t dim) {
  const std::size_t n = rows.size() / dim;
  if (n < 2) {
    SpectrumReport r;
    r.eigenvalues.assign(dim, 0.0);
    r.basis = Matrix::identity(dim);
    return r;
  }
  return spectrum_report(Matrix(n, dim, std::move(rows)));
}

}  // namespace detail

struct StepOutput {
  double loss = 0.0;
  Matrix descriptor_grad;  // as handed to the encoder (rectified when GRM is on)
};

/// One optimization step: forward, loss and descriptor gradient, optional
/// rectification, backprop, parameter update. Pair losses are divided by
/// the number of positive pairs (one per query).
inline StepOutput train_step(const TrainConfig& config, MlpEncoder& encoder, PrototypeSet& prototypes,
                             GradientRectifier* rectifier, Optimizer& optimizer, const TrainingBatch& batch) {
  std::size_t queries = 0;
  for (const auto& p : batch.pairs) queries += p.positive ? 1 : 0;
  const double inv_q = 1.0 / static_cast<double>(std::max<std::size_t>(queries, 1));
  auto fwd = mlp_forward(encoder, batch.inputs);
  const Matrix desc = config.normalize_descriptors ? l2_normalize_rows(fwd.outputs) : fwd.outputs;

  StepOutput out;
  Matrix proto_grad;
  switch (config.loss) {
    case LossKind::contrastive: {
      const ContrastiveParams params{config.margin};
      out.loss = contrastive_loss(desc, batch.pairs, params) * inv_q;
      out.descriptor_grad = contrastive_grad(desc, batch.pairs, params);
      detail::scale_in_place(out.descriptor_grad, inv_q);
      break;
    }
    case LossKind::triplet: {
      const TripletParams params{config.margin};
      out.loss = triplet_loss(desc, batch.triplets, params) * inv_q;
      out.descriptor_grad = triplet_grad(desc, batch.triplets, params);
      detail::scale_in_place(out.descriptor_grad, inv_q);
      break;
    }
    case LossKind::prototype: {
      auto r = prototype_loss_and_grad(desc, batch.labels, prototypes, config.temperature);
      out.loss = r.loss;
      out.descriptor_grad = std::move(r.descriptor_grad);
      proto_grad = std::move(r.prototype_grad);
      break;
    }
  }
  if (!std::isfinite(out.loss)) throw NumericalFailure("non-finite loss");

  const bool use_prototypes = config.loss == LossKind::prototype;
  if (rectifier) {
    out.descriptor_grad = rectifier->step(desc, out.descriptor_grad);
    if (use_prototypes) proto_grad = rectifier->rectify_current(proto_grad);
  }
  const Matrix encoder_grad = config.normalize_descriptors
                                  ? l2_normalize_rows_backward(fwd.outputs, out.descriptor_grad)
                                  : out.descriptor_grad;
  const MlpGradients pg = mlp_backward(encoder, fwd.cache, encoder_grad);

  auto params = encoder.parameters();
  auto grads = gradient_views(pg);
  if (use_prototypes) {
    params.emplace_back(prototypes.prototypes.data());
    grads.emplace_back(proto_grad.data());
  }
  optimizer.step(params, grads);
  return out;
}

/// End-to-end metric-learning loop. Per step: encode the batch, compute the
/// loss gradient at the descriptors, pass descriptors and gradients through
/// the rectifier (when enabled), backpropagate the rectified gradients and
/// take an optimizer step. Each epoch ends with a recall evaluation and the
/// descriptor/gradient spectra.
inline TrainResult train(const TrainConfig& config, const RetrievalDataset& data) {
  config.validate();
  if (data.size() == 0) throw InvalidInput("train: empty dataset");

  TrainResult result;
  result.encoder = MlpEncoder::init(encoder_layout(data.dim, config), config.seed);
  const bool use_prototypes = config.loss == LossKind::prototype;
  if (use_prototypes) result.prototypes = PrototypeSet::zeros(data.num_places, config.descriptor_dim);

  detail::BatchSampler sampler(data, config.seed ^ 0x9e3779b97f4a7c15ULL);
  sampler.shuffle();
  std::optional<GradientRectifier> rectifier;
  if (config.grm_enabled) rectifier.emplace(config.grm, config.descriptor_dim);
  Optimizer optimizer(config.optimizer);

  const std::size_t steps = config.steps_per_epoch > 0
                                ? config.steps_per_epoch
                                : (sampler.anchor_count() + config.queries_per_batch - 1) / config.queries_per_batch;
  const auto db_inputs = data.rows(data.database_indices());

  MlpEncoder last_good = result.encoder;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    optimizer.set_epoch(epoch - 1);
    double loss_sum = 0.0;
    std::vector<double> grad_rows;
    for (std::size_t s = 0; s < steps; ++s) {
      auto batch = sampler.next(config.queries_per_batch, config.negatives_per_query);
      StepOutput out;
      try {
        out = train_step(config, result.encoder, result.prototypes, rectifier ? &*rectifier : nullptr, optimizer,
                         batch);
      } catch (const Error& e) {
        throw TrainingAborted(std::string("train: epoch ") + std::to_string(epoch) + ": " + e.what(), last_good,
                              epoch - 1);
      }
      loss_sum += out.loss;
      detail::append_nonzero_rows(out.descriptor_grad, grad_rows);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = loss_sum / static_cast<double>(steps);
    const EvalReport eval = evaluate_retrieval(result.encoder, data, {1, 5, 10}, config.normalize_descriptors);
    rec.recall1 = eval.recall_at.at(1);
    rec.recall5 = eval.recall_at.at(5);
    rec.recall10 = eval.recall_at.at(10);
    Matrix db_desc = mlp_encode(result.encoder, db_inputs);
    if (config.normalize_descriptors) db_desc = l2_normalize_rows(db_desc);
    rec.descriptors = spectrum_report(db_desc);
    rec.desc_cond = rec.descriptors.condition_number;
    rec.gradients = detail::spectrum_or_empty(std::move(grad_rows), config.descriptor_dim);
    rec.grad_cond = rec.gradients.condition_number;
    result.log.push_back(std::move(rec));
    last_good = result.encoder;
  }
  if (rectifier) result.projection_rebuilds = rectifier->rebuilds();
  return result;
}

/// Raw (unrectified) descriptor gradients of one epoch's worth of batches at
/// a fixed encoder; rows that are identically zero are dropped. Used to form
/// gradient spectra from checkpoints.
inline Matrix sample_descriptor_gradients(const MlpEncoder& encoder, const RetrievalDataset& data,
                                          const TrainConfig& config) {
  config.validate();
  require_dims(encoder.input_dim() == data.dim, "sample_descriptor_gradients: encoder input differs from data");
  detail::BatchSampler sampler(data, config.seed ^ 0x9e3779b97f4a7c15ULL);
  sampler.shuffle();
  const std::size_t steps = (sampler.anchor_count() + config.queries_per_batch - 1) / config.queries_per_batch;
  PrototypeSet protos = PrototypeSet::zeros(data.num_places, encoder.output_dim());
  std::vector<double> rows;
  for (std::size_t s = 0; s < steps; ++s) {
    const auto batch = sampler.next(config.queries_per_batch, config.negatives_per_query);
    Matrix desc = mlp_encode(encoder, batch.inputs);
    if (config.normalize_descriptors) desc = l2_normalize_rows(desc);
    Matrix g;
    switch (config.loss) {
      case LossKind::contrastive: g = contrastive_grad(desc, batch.pairs, ContrastiveParams{config.margin}); break;
      case LossKind::triplet: g = triplet_grad(desc, batch.triplets, TripletParams{config.margin}); break;
      case LossKind::prototype:
        g = prototype_loss_and_grad(desc, batch.labels, protos, config.temperature).descriptor_grad;
        break;
    }
    detail::append_nonzero_rows(g, rows);
  }
  const std::size_t n = rows.size() / encoder.output_dim();
  return Matrix(n, encoder.output_dim(), std::move(rows));
}

struct ClassificationConfig {
  std::vector<std::size_t> hidden_sizes{32};
  std::size_t descriptor_dim = 8;
  double temperature = 1.0;
  bool grm_enabled = false;
  GrmConfig grm;
  OptimizerConfig optimizer = OptimizerConfig::classification_default();
  std::size_t epochs = 40;
  std::size_t batch_size = 32;
  std::uint64_t seed = 11;
};

struct ClassificationResult {
  MlpEncoder encoder;
  PrototypeSet prototypes;
  double accuracy = 0.0;  // top-1 on the test split
  std::vector<double> epoch_loss;
};

/// Prototype learning: the rectifier sees descriptor statistics and its
/// projection is applied to descriptor and prototype gradients alike.
inline ClassificationResult train_classification(const ClassificationConfig& config,
                                                 const ClassificationDataset& data) {
  if (data.train_inputs.rows() == 0) throw InvalidInput("train_classification: empty training set");
  if (config.batch_size == 0 || config.epochs == 0) throw InvalidInput("train_classification: counts must be positive");
  if (config.grm_enabled) config.grm.validate();

  std::vector<std::size_t> sizes{data.train_inputs.cols()};
  sizes.insert(sizes.end(), config.hidden_sizes.begin(), config.hidden_sizes.end());
  sizes.push_back(config.descriptor_dim);

  ClassificationResult result;
  result.encoder = MlpEncoder::init(sizes, config.seed);
  result.prototypes = PrototypeSet::zeros(data.num_classes, config.descriptor_dim);
  std::optional<GradientRectifier> rectifier;
  if (config.grm_enabled) rectifier.emplace(config.grm, config.descriptor_dim);
  Optimizer optimizer(config.optimizer);
  std::mt19937_64 rng(config.seed ^ 0x5bd1e995ULL);

  std::vector<std::size_t> order(data.train_inputs.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t dim = data.train_inputs.cols();
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    optimizer.set_epoch(epoch);
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t n = std::min(config.batch_size, order.size() - start);
      Matrix x(n, dim);
      std::vector<std::size_t> y(n);
      for (std::size_t r = 0; r < n; ++r) {
        std::copy_n(data.train_inputs.row(order[start + r]).begin(), dim, x.row(r).begin());
        y[r] = data.train_labels[order[start + r]];
      }
      auto fwd = mlp_forward(result.encoder, x);
      auto lr = prototype_loss_and_grad(fwd.outputs, y, result.prototypes, config.temperature);
      if (!std::isfinite(lr.loss)) throw NumericalFailure("train_classification: non-finite loss");
      loss_sum += lr.loss;
      ++batches;
      Matrix g = std::move(lr.descriptor_grad);
      Matrix pg = std::move(lr.prototype_grad);
      if (rectifier) {
        g = rectifier->step(fwd.outputs, g);
        pg = rectifier->rectify_current(pg);
      }
      const MlpGradients grads = mlp_backward(result.encoder, fwd.cache, g);
      auto params = result.encoder.parameters();
      auto views = gradient_views(grads);
      params.emplace_back(result.prototypes.prototypes.data());
      views.emplace_back(pg.data());
      optimizer.step(params, views);
    }
    result.epoch_loss.push_back(loss_sum / static_cast<double>(batches));
  }

  const auto pred = nearest_prototype(mlp_encode(result.encoder, data.test_inputs), result.prototypes);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (pred[i] == data.test_labels[i]) ++correct;
  result.accuracy = pred.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(pred.size());
  return result;
}

}  // namespace grm
