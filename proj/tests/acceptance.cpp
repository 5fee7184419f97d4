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

// Property suite: prints one PASS/FAIL line per criterion and exits nonzero
// if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "grm/grm.hpp"
#include "oracles.hpp"

namespace {

using grm::Matrix;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(int id, bool pass, const std::string& detail) {
  std::printf("criterion %2d: %s  %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Matrix gaussian(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Matrix m(r, c);
  for (double& v : m.data()) v = normal(rng);
  return m;
}

Matrix from_flat(const std::vector<double>& x, std::size_t r, std::size_t c) { return Matrix(r, c, x); }

std::vector<double> flat(const Matrix& m) { return {m.data().begin(), m.data().end()}; }

// ---------------------------------------------------------------------------

void gradient_correctness() {
  const auto t0 = Clock::now();
  constexpr std::size_t C = 8, B = 6;
  std::mt19937_64 rng(101);
  double worst[3] = {0, 0, 0};
  int points[3] = {0, 0, 0};

  // Contrastive: anchor 0, positive 1, negatives 2..5. Points whose hinge
  // sits within 1e-3 of the margin are redrawn.
  const std::vector<grm::PairLabel> pairs{{0, 1, true}, {0, 2, false}, {0, 3, false}, {0, 4, false}, {0, 5, false}};
  const grm::ContrastiveParams cp{9.0};
  while (points[0] < 100) {
    const Matrix x = gaussian(B, C, rng, 0.8);
    bool smooth = true;
    for (const auto& p : pairs)
      if (!p.positive && std::abs(grm::pair_similarity(x.row(p.query), x.row(p.sample)) - cp.margin) < 1e-3)
        smooth = false;
    if (!smooth) continue;
    const auto f = [&](const std::vector<double>& v) { return grm::contrastive_loss(from_flat(v, B, C), pairs, cp); };
    worst[0] = std::max(worst[0], oracle::gradient_relative_error(f, flat(x), flat(grm::contrastive_grad(x, pairs, cp))));
    ++points[0];
  }

  const std::vector<grm::TripletLabel> triplets{{0, 1, 2}, {0, 1, 3}, {4, 5, 2}};
  const grm::TripletParams tp{2.0};
  while (points[1] < 100) {
    const Matrix x = gaussian(B, C, rng, 0.5);
    bool smooth = true;
    for (const auto& t : triplets) {
      const double h = grm::pair_similarity(x.row(t.anchor), x.row(t.positive)) -
                       grm::pair_similarity(x.row(t.anchor), x.row(t.negative)) + tp.margin;
      if (std::abs(h) < 1e-3) smooth = false;
    }
    if (!smooth) continue;
    const auto f = [&](const std::vector<double>& v) { return grm::triplet_loss(from_flat(v, B, C), triplets, tp); };
    worst[1] = std::max(worst[1], oracle::gradient_relative_error(f, flat(x), flat(grm::triplet_grad(x, triplets, tp))));
    ++points[1];
  }

  // Prototype loss: descriptors and prototypes are both variables.
  const std::vector<std::size_t> labels{0, 1, 2, 0, 1, 2};
  for (; points[2] < 100; ++points[2]) {
    const Matrix x = gaussian(B, C, rng, 0.7);
    const grm::PrototypeSet protos{gaussian(3, C, rng, 0.7)};
    const auto r = grm::prototype_loss_and_grad(x, labels, protos, 1.0);
    std::vector<double> v = flat(x), g = flat(r.descriptor_grad);
    const auto pv = flat(protos.prototypes), pg = flat(r.prototype_grad);
    v.insert(v.end(), pv.begin(), pv.end());
    g.insert(g.end(), pg.begin(), pg.end());
    const auto f = [&](const std::vector<double>& w) {
      const std::vector<double> xs(w.begin(), w.begin() + B * C), ps(w.begin() + B * C, w.end());
      return grm::prototype_loss_and_grad(from_flat(xs, B, C), labels, grm::PrototypeSet{from_flat(ps, 3, C)}, 1.0)
          .loss;
    };
    worst[2] = std::max(worst[2], oracle::gradient_relative_error(f, v, g));
  }
  const double t = seconds_since(t0);
  const bool ok = worst[0] <= 1e-5 && worst[1] <= 1e-5 && worst[2] <= 1e-5 && t < 10.0;
  report(1, ok,
         fmt("max rel err contrastive %.2e triplet %.2e prototype %.2e (100 points each, C=8), %.2fs", worst[0],
             worst[1], worst[2], t));
}

void eigensolver_fidelity() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(202);
  double worst_rec = 0.0, worst_orth = 0.0;
  for (int i = 0; i < 50; ++i) {
    const std::size_t n = 2 + static_cast<std::size_t>(i) * 126 / 49;
    const Matrix a = oracle::random_spd(n, rng);
    const auto e = grm::eigh_sym(grm::SymMatrix(a));
    const auto rec = oracle::reconstruct(e.basis, e.eigenvalues);
    double diff = 0.0;
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < n; ++c) diff += (rec[r][c] - a(r, c)) * (rec[r][c] - a(r, c));
    worst_rec = std::max(worst_rec, std::sqrt(diff) / grm::frobenius_norm(a));
    double orth = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = 0; q < n; ++q) {
        double s = 0.0;
        for (std::size_t k = 0; k < n; ++k) s += e.basis(k, p) * e.basis(k, q);
        orth = std::max(orth, std::abs(s - (p == q ? 1.0 : 0.0)));
      }
    worst_orth = std::max(worst_orth, orth);
  }
  const double t = seconds_since(t0);
  report(2, worst_rec <= 1e-10 && worst_orth <= 1e-9 && t < 30.0,
         fmt("50 SPD matrices C=2..128: max reconstruction %.2e·||A||_F, orthonormality %.2e, %.2fs", worst_rec,
             worst_orth, t));
}

void estimator_equivalence() {
  std::mt19937_64 rng(303);
  std::uniform_int_distribution<std::size_t> pick(2, 40);
  double worst_queue = 0.0;
  for (int q = 0; q < 20; ++q) {
    const std::size_t dim = 1 + pick(rng) % 16, cap = pick(rng) + 1;
    grm::MemoryQueue queue(cap, dim);
    std::vector<std::vector<double>> seen;
    const std::size_t batches = 1 + pick(rng) % 6;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t rows = 1 + pick(rng) % cap;
      const Matrix m = gaussian(rows, dim, rng, 1.0 + static_cast<double>(q));
      queue.enqueue(m);
      for (auto& r : oracle::to_rows(m)) seen.push_back(r);
    }
    if (queue.count() < 2) {
      const Matrix m = gaussian(2, dim, rng);
      queue.enqueue(m);
      for (auto& r : oracle::to_rows(m)) seen.push_back(r);
    }
    // The oracle sees the newest `count` samples of everything pushed.
    const std::vector<std::vector<double>> newest(seen.end() - static_cast<std::ptrdiff_t>(queue.count()), seen.end());
    const auto cov = oracle::covariance(newest);
    const auto est = grm::estimate_from_queue(queue, 1e-3);
    for (std::size_t i = 0; i < dim; ++i)
      for (std::size_t j = 0; j < dim; ++j)
        worst_queue = std::max(worst_queue, std::abs(est.matrix(i, j) - cov[i][j] - (i == j ? 1e-3 : 0.0)));
  }

  constexpr std::size_t C = 8;
  std::mt19937_64 srng(304);
  const Matrix mix = gaussian(C, C, srng, 0.5);
  auto state = grm::RunningAverageState::initial(C);
  std::vector<std::vector<double>> all;
  for (int b = 0; b < 20; ++b) {  // 20 × 16 = 320 ≥ 10·C
    Matrix z = gaussian(16, C, srng);
    Matrix x = grm::matmul(z, mix);
    for (std::size_t r = 0; r < x.rows(); ++r) x(r, 0) += 2.0;
    state = grm::running_update(state, x);
    for (auto& r : oracle::to_rows(x)) all.push_back(r);
  }
  const auto brute = oracle::covariance(all);
  double worst_running = 0.0;
  for (std::size_t i = 0; i < C; ++i)
    for (std::size_t j = 0; j < C; ++j) worst_running = std::max(worst_running, std::abs(state.matrix(i, j) - brute[i][j]));
  report(3, worst_queue <= 1e-9 && worst_running <= 0.05,
         fmt("queue vs brute force max |diff| %.2e over 20 queues; running average vs brute force %.4f after %zu samples",
             worst_queue, worst_running, all.size()));
}

// Lower-triangular L with L·Lᵀ = a.
std::vector<std::vector<double>> cholesky(const Matrix& a) {
  const std::size_t n = a.rows();
  std::vector<std::vector<double>> l(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l[i][k] * l[j][k];
      l[i][j] = i == j ? std::sqrt(s) : s / l[j][j];
    }
  return l;
}

void isotropy_law() {
  constexpr std::size_t C = 8, draws = 50000;
  constexpr double c = 0.37;
  std::mt19937_64 rng(404);
  // Descriptor covariance with eigenvalues spanning two decades.
  Matrix desc(4000, C);
  {
    const Matrix z = gaussian(4000, C, rng);
    const Matrix frame = grm::random_orthonormal(C, rng);
    for (std::size_t r = 0; r < desc.rows(); ++r)
      for (std::size_t i = 0; i < C; ++i) {
        double acc = 0.0;
        for (std::size_t k = 0; k < C; ++k) acc += frame(i, k) * std::pow(10.0, -static_cast<double>(k) / (C - 1)) * z(r, k);
        desc(r, i) = acc;
      }
  }
  grm::MemoryQueue queue(desc.rows(), C);
  queue.enqueue(desc);
  const auto est = grm::estimate_from_queue(queue);

  Matrix scaled = est.matrix.matrix();
  for (double& v : scaled.data()) v *= c;
  const auto l = cholesky(scaled);
  const Matrix z = gaussian(draws, C, rng);
  Matrix g(draws, C);
  for (std::size_t r = 0; r < draws; ++r)
    for (std::size_t i = 0; i < C; ++i) {
      double acc = 0.0;
      for (std::size_t k = 0; k <= i; ++k) acc += l[i][k] * z(r, k);
      g(r, i) = acc;
    }

  const auto sqrt_cov = grm::sample_covariance(grm::rectify(grm::build_projection(est, 0.5), g));
  const auto sqrt_eig = grm::eigh_sym(sqrt_cov).eigenvalues;
  const double cond = sqrt_eig.front() / sqrt_eig.back();

  const auto lin = grm::build_projection(est, 1.0);
  const auto lin_eig = grm::eigh_sym(grm::sample_covariance(grm::rectify(lin, g))).eigenvalues;
  // Expected c·λ̄²/λᵢ, sorted descending (smallest λ first).
  std::vector<double> expected;
  for (double lam : lin.source_eigenvalues) expected.push_back(c * lin.source_mean_eigenvalue * lin.source_mean_eigenvalue / lam);
  std::sort(expected.rbegin(), expected.rend());
  double worst = 0.0;
  for (std::size_t i = 0; i < C; ++i) worst = std::max(worst, std::abs(lin_eig[i] - expected[i]) / expected[i]);
  report(4, cond <= 1.5 && worst <= 0.05,
         fmt("s=0.5 rectified covariance condition %.4f (source %.1f); s=1 max eigenvalue deviation %.2f%%", cond,
             est.matrix(0, 0) > 0 ? lin.source_eigenvalues.front() / lin.source_eigenvalues.back() : 0.0, 100 * worst));
}

// ---------------------------------------------------------------------------
// Desk-scale retrieval task shared by criteria 5 to 8.

const grm::RetrievalDataset& desk_data() {
  static const auto ds = grm::gen_synthetic_retrieval(200, 20, 32, 100.0, 7);
  return ds;
}

grm::TrainConfig desk_config(std::uint64_t seed) {
  grm::TrainConfig c;
  c.hidden_sizes = {64};
  c.descriptor_dim = 32;
  c.loss = grm::LossKind::contrastive;
  c.margin = 64.0;
  c.optimizer.kind = grm::OptimizerKind::sgd;
  c.optimizer.learning_rate = 0.002;
  c.epochs = 50;
  c.queries_per_batch = 16;
  c.negatives_per_query = 5;
  c.seed = seed;
  return c;
}

struct RunSummary {
  double cond = 0.0;
  double recall1 = 0.0;
  double diag_mass = 0.0;
  double seconds = 0.0;
};

std::map<std::string, RunSummary> cache;

RunSummary desk_run(const std::string& key, const grm::TrainConfig& config) {
  if (auto it = cache.find(key); it != cache.end()) return it->second;
  const auto t0 = Clock::now();
  const auto r = grm::train(config, desk_data());
  RunSummary s;
  s.seconds = seconds_since(t0);
  s.cond = r.log.back().desc_cond;
  s.recall1 = r.log.back().recall1;
  s.diag_mass = grm::descriptor_gradient_diagonal_mass(r.log.back(), 8);
  std::printf("  run %-14s cond %12.1f  recall@1 %.3f  diag_mass %.3f  %.1fs\n", key.c_str(), s.cond, s.recall1,
              s.diag_mass, s.seconds);
  std::fflush(stdout);
  return cache[key] = s;
}

grm::TrainConfig with_grm(grm::TrainConfig c, grm::GrmConfig g) {
  c.grm_enabled = true;
  c.grm = g;
  return c;
}

grm::TrainConfig without_grm(grm::TrainConfig c) {
  c.grm_enabled = false;
  return c;
}

std::string seed_key(const char* tag, std::uint64_t seed) { return std::string(tag) + "/seed" + std::to_string(seed); }

void collapse_mitigation() {
  const auto off = desk_run(seed_key("off", 7), without_grm(desk_config(7)));
  const auto on = desk_run(seed_key("queue-s1", 7), with_grm(desk_config(7), grm::GrmConfig::bank_linear()));
  const double ratio = on.cond / off.cond;
  const double t = off.seconds + on.seconds;
  report(5, ratio <= 0.2 && on.diag_mass < off.diag_mass && t < 300.0,
         fmt("condition %.1f -> %.1f (ratio %.3f); diagonal mass top 8: %.3f -> %.3f; %.0fs", off.cond, on.cond, ratio,
             off.diag_mass, on.diag_mass, t));
}

void retrieval_direction() {
  std::string detail;
  bool never_worse = true;
  int clear_gains = 0;
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto off = desk_run(seed_key("off", seed), without_grm(desk_config(seed)));
    const auto on = desk_run(seed_key("queue-s1", seed), with_grm(desk_config(seed), grm::GrmConfig::bank_linear()));
    const double delta = on.recall1 - off.recall1;
    never_worse = never_worse && delta >= -0.01;
    clear_gains += delta >= 0.02 ? 1 : 0;
    detail += fmt("seed %llu: %.3f -> %.3f (%+.3f); ", static_cast<unsigned long long>(seed), off.recall1, on.recall1, delta);
  }
  report(6, never_worse && clear_gains >= 2, detail + fmt("%d of 3 seeds gain >= 0.02", clear_gains));
}

void queue_size_trend() {
  std::vector<double> conds;
  std::string detail;
  for (std::size_t k : {32, 128, 1024}) {
    grm::GrmConfig g = grm::GrmConfig::bank_linear();
    g.queue_capacity = k;
    const auto r = desk_run("queue-K" + std::to_string(k), with_grm(desk_config(7), g));
    conds.push_back(r.cond);
    detail += fmt("K=%zu: %.1f; ", k, r.cond);
  }
  report(7, conds[0] >= conds[1] && conds[1] >= conds[2], detail + "non-increasing required");
}

void estimator_comparison() {
  const auto off = desk_run(seed_key("off", 7), without_grm(desk_config(7)));
  const auto queue = desk_run(seed_key("queue-s1", 7), with_grm(desk_config(7), grm::GrmConfig::bank_linear()));
  const auto avg = desk_run(seed_key("avg-s0.5", 7), with_grm(desk_config(7), grm::GrmConfig::average_sqrt()));
  const double rq = queue.cond / off.cond, ra = avg.cond / off.cond;
  report(8, rq <= 0.2 && ra <= 0.2,
         fmt("ratio to no-GRM condition %.1f: queue s=1 %.3f, running average s=0.5 %.3f (bound 0.2); recall@1 %.3f vs %.3f",
             off.cond, rq, ra, queue.recall1, avg.recall1));
}

// ---------------------------------------------------------------------------

void degeneracy_and_purity() {
  auto base = desk_config(7);
  base.epochs = 5;
  auto zero = with_grm(base, grm::GrmConfig::bank_linear());
  zero.grm.rectification_rate = 0.0;
  const auto a = grm::train(without_grm(base), desk_data());
  const auto b = grm::train(zero, desk_data());
  std::vector<grm::io::LogRow> la, lb;
  for (const auto& r : a.log) la.push_back(grm::io::to_log_row(r));
  for (const auto& r : b.log) lb.push_back(grm::io::to_log_row(r));
  const bool same_log = grm::io::encode_log(la) == grm::io::encode_log(lb);
  const bool same_model = grm::io::encode_checkpoint(a.encoder) == grm::io::encode_checkpoint(b.encoder);

  const auto before = grm::grm_operation_count().load();
  const auto eval = grm::evaluate_retrieval(b.encoder, desk_data(), {1, 5, 10});
  const auto delta = grm::grm_operation_count().load() - before;
  report(9, same_log && same_model && delta == 0,
         fmt("s=0 vs off: log %s, checkpoint %s; rectifier operations during evaluation: %llu (recall@1 %.3f)",
             same_log ? "identical" : "DIFFERENT", same_model ? "identical" : "DIFFERENT",
             static_cast<unsigned long long>(delta), eval.recall_at.at(1)));
}

void classification_toy() {
  const auto t0 = Clock::now();
  const auto data = grm::gen_blobs(3, 200, 200, 16, 4.0, 21);
  grm::ClassificationConfig c;
  const double plain = grm::train_classification(c, data).accuracy;
  c.grm_enabled = true;
  c.grm = grm::GrmConfig::bank_linear();
  const double rectified = grm::train_classification(c, data).accuracy;
  const double t = seconds_since(t0);
  report(10, plain >= 0.95 && rectified - plain >= -0.01 && t < 120.0,
         fmt("3-class blobs accuracy %.3f without GRM, %.3f with (delta %+.1f pp), %.1fs", plain, rectified,
             100 * (rectified - plain), t));
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  gradient_correctness();
  eigensolver_fidelity();
  estimator_equivalence();
  isotropy_law();
  collapse_mitigation();
  retrieval_direction();
  queue_size_trend();
  estimator_comparison();
  degeneracy_and_purity();
  classification_toy();
  std::printf("%d of 10 criteria failed (%.0fs)\n", failures, seconds_since(t0));
  return failures == 0 ? 0 : 1;
}
