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

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "grm/io.hpp"
#include "grm/training.hpp"
#include "oracles.hpp"

namespace {

using grm::Matrix;

grm::TrainConfig small_config() {
  grm::TrainConfig c;
  c.hidden_sizes = {};
  c.descriptor_dim = 4;
  c.margin = 8.0;
  c.optimizer.kind = grm::OptimizerKind::sgd;
  c.optimizer.learning_rate = 0.002;
  c.epochs = 3;
  c.queries_per_batch = 8;
  c.negatives_per_query = 3;
  return c;
}

const grm::RetrievalDataset& small_data() {
  static const auto ds = grm::gen_synthetic_retrieval(12, 8, 6, 10.0, 5);
  return ds;
}

// One positive pair through a 2×2 identity encoder with the rectifier primed
// by 256 known descriptors; the weight update is checked against a
// closed-form projection of the 258 queued rows.
TEST(TrainStep, MatchesHandOracleWithRectification) {
  const auto enc0 = grm::MlpEncoder::from_layers({grm::DenseLayer{Matrix::identity(2), {0.0, 0.0}}});
  grm::MlpEncoder enc = enc0;
  grm::TrainConfig config;
  config.hidden_sizes = {};
  config.descriptor_dim = 2;
  config.optimizer.kind = grm::OptimizerKind::sgd;
  config.optimizer.learning_rate = 0.1;
  grm::GrmConfig gc;
  gc.queue_capacity = 300;
  grm::GradientRectifier rect(gc, 2);

  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal;
  Matrix prime(256, 2);
  for (std::size_t r = 0; r < 256; ++r) {
    prime(r, 0) = 3.0 * normal(rng);
    prime(r, 1) = 0.5 * normal(rng) + 0.2 * prime(r, 0);
  }
  rect.step(prime, Matrix(256, 2));

  grm::TrainingBatch batch;
  batch.inputs = Matrix::from_rows({{1.0, 2.0}, {0.5, -1.0}});
  batch.labels = {0, 0};
  batch.pairs = {{0, 1, true}};
  grm::PrototypeSet none;
  grm::Optimizer opt(config.optimizer);
  const auto out = grm::train_step(config, enc, none, &rect, opt, batch);
  EXPECT_DOUBLE_EQ(out.loss, 0.25 + 9.0);

  auto rows = oracle::to_rows(prime);
  rows.push_back({1.0, 2.0});
  rows.push_back({0.5, -1.0});
  auto cov = oracle::covariance(rows);
  cov[0][0] += grm::kDefaultJitter;
  cov[1][1] += grm::kDefaultJitter;
  const double mean_eig = (cov[0][0] + cov[1][1]) / 2.0;
  const auto p = oracle::matrix_function_2x2(cov, [&](double l) { return mean_eig / l; });

  const std::vector<std::vector<double>> x{{1.0, 2.0}, {0.5, -1.0}};
  const std::vector<double> d{0.5, 3.0};  // a − p
  const std::vector<std::vector<double>> g{{2 * d[0], 2 * d[1]}, {-2 * d[0], -2 * d[1]}};
  std::vector<std::vector<double>> pg(2);
  for (int r = 0; r < 2; ++r) pg[r] = oracle::matvec(p, g[r]);
  for (int r = 0; r < 2; ++r)
    for (int k = 0; k < 2; ++k) EXPECT_NEAR(out.descriptor_grad(r, k), pg[r][k], 1e-10);

  const auto& layer = enc.layers()[0];
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      const double dw = pg[0][i] * x[0][j] + pg[1][i] * x[1][j];
      EXPECT_NEAR(layer.weight(i, j), (i == j ? 1.0 : 0.0) - 0.1 * dw, 1e-10);
    }
    EXPECT_NEAR(layer.bias[i], -0.1 * (pg[0][i] + pg[1][i]), 1e-10);
  }
}

TEST(TrainStep, NoRectifierPassesRawGradient) {
  grm::MlpEncoder enc = grm::MlpEncoder::from_layers({grm::DenseLayer{Matrix::identity(2), {0.0, 0.0}}});
  grm::TrainConfig config;
  config.hidden_sizes = {};
  config.descriptor_dim = 2;
  config.optimizer.kind = grm::OptimizerKind::sgd;
  grm::TrainingBatch batch;
  batch.inputs = Matrix::from_rows({{1.0, 0.0}, {0.0, 0.0}});
  batch.labels = {0, 0};
  batch.pairs = {{0, 1, true}};
  grm::PrototypeSet none;
  grm::Optimizer opt(config.optimizer);
  const auto out = grm::train_step(config, enc, none, nullptr, opt, batch);
  EXPECT_EQ(out.descriptor_grad(0, 0), 2.0);
  EXPECT_EQ(out.descriptor_grad(1, 0), -2.0);
  EXPECT_EQ(out.descriptor_grad(0, 1), 0.0);
}

TEST(Train, ZeroRateMatchesGrmOffBitForBit) {
  auto off = small_config();
  off.grm_enabled = false;
  auto zero = small_config();
  zero.grm.rectification_rate = 0.0;
  zero.grm.queue_capacity = 512;
  const auto a = grm::train(off, small_data());
  const auto b = grm::train(zero, small_data());
  EXPECT_TRUE(a.encoder == b.encoder);
  ASSERT_EQ(a.log.size(), b.log.size());
  std::vector<grm::io::LogRow> ra, rb;
  for (const auto& r : a.log) ra.push_back(grm::io::to_log_row(r));
  for (const auto& r : b.log) rb.push_back(grm::io::to_log_row(r));
  EXPECT_EQ(grm::io::encode_log(ra), grm::io::encode_log(rb));
  EXPECT_GT(b.projection_rebuilds, 0u);
}

TEST(Train, DeterministicForFixedSeed) {
  const auto c = small_config();
  const auto a = grm::train(c, small_data());
  const auto b = grm::train(c, small_data());
  EXPECT_TRUE(a.encoder == b.encoder);
  for (std::size_t e = 0; e < a.log.size(); ++e) {
    EXPECT_EQ(a.log[e].loss, b.log[e].loss);
    EXPECT_EQ(a.log[e].desc_cond, b.log[e].desc_cond);
  }
  auto other = c;
  other.seed = 8;
  EXPECT_FALSE(grm::train(other, small_data()).encoder == a.encoder);
}

TEST(Train, LogHasOneRowPerEpochWithSortedSpectra) {
  auto c = small_config();
  c.loss = grm::LossKind::triplet;
  c.margin = 1.0;
  const auto r = grm::train(c, small_data());
  ASSERT_EQ(r.log.size(), 3u);
  for (std::size_t e = 0; e < 3; ++e) {
    EXPECT_EQ(r.log[e].epoch, e + 1);
    EXPECT_TRUE(std::isfinite(r.log[e].loss));
    EXPECT_LE(r.log[e].recall1, r.log[e].recall5);
    EXPECT_LE(r.log[e].recall5, r.log[e].recall10);
    for (std::size_t i = 1; i < 4; ++i) EXPECT_GE(r.log[e].descriptors.eigenvalues[i - 1], r.log[e].descriptors.eigenvalues[i]);
  }
}

TEST(Train, PrototypeLossRuns) {
  auto c = small_config();
  c.loss = grm::LossKind::prototype;
  c.grm.queue_capacity = 512;
  const auto r = grm::train(c, small_data());
  EXPECT_EQ(r.prototypes.classes(), 12u);
  EXPECT_TRUE(r.prototypes.prototypes.all_finite());
}

TEST(Train, DivergenceAbortsWithLastGoodEncoder) {
  auto c = small_config();
  c.grm_enabled = false;
  c.optimizer.learning_rate = 1e3;
  c.epochs = 50;
  try {
    grm::train(c, small_data());
    FAIL() << "expected TrainingAborted";
  } catch (const grm::TrainingAborted& e) {
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
    EXPECT_EQ(e.last_good().sizes(), (std::vector<std::size_t>{6, 4}));
    for (const auto& l : e.last_good().layers()) EXPECT_TRUE(l.weight.all_finite());
  }
}

TEST(Train, RejectsBadInputs) {
  auto c = small_config();
  c.margin = 0.0;
  EXPECT_THROW(grm::train(c, small_data()), grm::InvalidInput);
  EXPECT_THROW(grm::train(small_config(), grm::gen_synthetic_retrieval(1, 8, 6, 1.0, 1)), grm::InvalidInput);
}

TEST(Evaluation, LeavesRectifierCounterUntouched) {
  const auto r = grm::train(small_config(), small_data());
  const auto before = grm::grm_operation_count().load();
  const auto e = grm::evaluate_retrieval(r.encoder, small_data(), {1, 5, 1000});
  EXPECT_EQ(grm::grm_operation_count().load(), before);
  EXPECT_EQ(e.recall_at.at(1000), 1.0);
}

TEST(SampleDescriptorGradients, NonzeroRowsOfDescriptorWidth) {
  const auto c = small_config();
  const auto enc = grm::MlpEncoder::init({6, 4}, 1);
  const Matrix g = grm::sample_descriptor_gradients(enc, small_data(), c);
  EXPECT_EQ(g.cols(), 4u);
  EXPECT_GT(g.rows(), 0u);
  for (std::size_t r = 0; r < g.rows(); ++r) {
    double n = 0.0;
    for (double v : g.row(r)) n += v * v;
    EXPECT_GT(n, 0.0);
  }
  EXPECT_TRUE(g == grm::sample_descriptor_gradients(enc, small_data(), c));
  EXPECT_THROW(grm::sample_descriptor_gradients(grm::MlpEncoder::init({5, 4}, 1), small_data(), c),
               grm::DimensionMismatch);
}

TEST(Classification, TwoWellSeparatedBlobs) {
  const auto data = grm::gen_blobs(2, 100, 100, 8, 6.0, 2);
  grm::ClassificationConfig c;
  c.epochs = 20;
  EXPECT_GE(grm::train_classification(c, data).accuracy, 0.99);
  c.grm_enabled = true;
  c.grm.queue_capacity = 512;
  EXPECT_GE(grm::train_classification(c, data).accuracy, 0.99);
}

}  // namespace
