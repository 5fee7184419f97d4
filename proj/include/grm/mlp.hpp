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
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "grm/errors.hpp"
#include "grm/linalg.hpp"

namespace grm {

struct DenseLayer {
  Matrix weight;             // out × in
  std::vector<double> bias;  // out

  std::size_t in() const { return weight.cols(); }
  std::size_t out() const { return weight.rows(); }
};

/// Gradients shaped like the encoder's layers.
struct MlpGradients {
  std::vector<DenseLayer> layers;
};

/// Everything mlp_backward needs from the matching forward pass.
struct MlpCache {
  std::uint64_t encoder_id = 0;
  std::uint64_t generation = 0;
  std::vector<Matrix> inputs;       // input to each layer (post-activation of the previous one)
  std::vector<Matrix> pre_activations;
};

/// Fully connected encoder: ReLU on hidden layers, linear output layer.
class MlpEncoder {
 public:
  MlpEncoder() = default;

  /// He-normal weights for layers feeding a ReLU, 1/fan_in variance for the
  /// output layer, zero biases.
  static MlpEncoder init(std::vector<std::size_t> sizes, std::uint64_t seed) {
    if (sizes.size() < 2) throw InvalidInput("MlpEncoder: need at least input and output sizes");
    for (auto s : sizes)
      if (s == 0) throw InvalidInput("MlpEncoder: layer sizes must be positive");
    MlpEncoder enc;
    enc.sizes_ = std::move(sizes);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t l = 0; l + 1 < enc.sizes_.size(); ++l) {
      const std::size_t in = enc.sizes_[l], out = enc.sizes_[l + 1];
      const bool last = l + 2 == enc.sizes_.size();
      const double scale = std::sqrt((last ? 1.0 : 2.0) / static_cast<double>(in));
      DenseLayer layer{Matrix(out, in), std::vector<double>(out, 0.0)};
      for (double& w : layer.weight.data()) w = scale * normal(rng);
      enc.layers_.push_back(std::move(layer));
    }
    return enc;
  }

  /// Builds an encoder from explicit layers (checkpoint loading, tests).
  static MlpEncoder from_layers(std::vector<DenseLayer> layers) {
    if (layers.empty()) throw InvalidInput("MlpEncoder: no layers");
    MlpEncoder enc;
    enc.sizes_.push_back(layers.front().in());
    for (std::size_t l = 0; l < layers.size(); ++l) {
      if (layers[l].bias.size() != layers[l].out()) throw InvalidInput("MlpEncoder: bias size mismatch");
      if (l > 0 && layers[l].in() != layers[l - 1].out()) throw InvalidInput("MlpEncoder: layer chain mismatch");
      if (!layers[l].weight.all_finite()) throw InvalidInput("MlpEncoder: non-finite weight");
      enc.sizes_.push_back(layers[l].out());
    }
    enc.layers_ = std::move(layers);
    return enc;
  }

  const std::vector<std::size_t>& sizes() const { return sizes_; }
  std::size_t input_dim() const { return sizes_.front(); }
  std::size_t output_dim() const { return sizes_.back(); }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  /// Mutable views of every parameter tensor (weight, bias, weight, bias, …).
  /// Invalidates caches from earlier forward passes.
  std::vector<std::span<double>> parameters() {
    ++generation_;
    std::vector<std::span<double>> out;
    for (auto& l : layers_) {
      out.emplace_back(l.weight.data());
      out.emplace_back(l.bias);
    }
    return out;
  }

  std::uint64_t generation() const { return generation_; }
  std::uint64_t id() const { return id_; }

  bool operator==(const MlpEncoder& o) const {
    if (sizes_ != o.sizes_) return false;
    for (std::size_t l = 0; l < layers_.size(); ++l)
      if (!(layers_[l].weight == o.layers_[l].weight) || layers_[l].bias != o.layers_[l].bias) return false;
    return true;
  }

 private:
  static std::uint64_t next_id() {
    static std::uint64_t counter = 0;
    return ++counter;
  }

  std::vector<std::size_t> sizes_;
  std::vector<DenseLayer> layers_;
  std::uint64_t generation_ = 0;
  std::uint64_t id_ = next_id();
};

struct MlpForward {
  Matrix outputs;
  MlpCache cache;
};

namespace detail {

// y = x·Wᵀ + b, one sample per row.
inline Matrix affine(const Matrix& x, const DenseLayer& layer) {
  Matrix y(x.rows(), layer.out());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto xr = x.row(r);
    auto yr = y.row(r);
    for (std::size_t o = 0; o < layer.out(); ++o) {
      auto w = layer.weight.row(o);
      double acc = layer.bias[o];
      for (std::size_t i = 0; i < xr.size(); ++i) acc += w[i] * xr[i];
      yr[o] = acc;
    }
  }
  return y;
}

}  // namespace detail

inline MlpForward mlp_forward(const MlpEncoder& enc, const Matrix& inputs) {
  require_dims(inputs.cols() == enc.input_dim(), "mlp_forward: input dimension mismatch");
  MlpForward out;
  out.cache.encoder_id = enc.id();
  out.cache.generation = enc.generation();
  Matrix x = inputs;
  const auto& layers = enc.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Matrix z = detail::affine(x, layers[l]);
    out.cache.inputs.push_back(std::move(x));
    if (l + 1 < layers.size()) {
      x = z;
      for (double& v : x.data()) v = v > 0.0 ? v : 0.0;
      out.cache.pre_activations.push_back(std::move(z));
    } else {
      out.outputs = std::move(z);
    }
  }
  return out;
}

/// Descriptors only, no cache. Used by evaluation.
inline Matrix mlp_encode(const MlpEncoder& enc, const Matrix& inputs) {
  return mlp_forward(enc, inputs).outputs;
}

inline MlpGradients mlp_backward(const MlpEncoder& enc, const MlpCache& cache, const Matrix& output_grad) {
  const auto& layers = enc.layers();
  if (cache.encoder_id != enc.id() || cache.generation != enc.generation() ||
      cache.inputs.size() != layers.size())
    throw InvalidInput("mlp_backward: cache does not belong to the current encoder state");
  const std::size_t batch = cache.inputs.front().rows();
  require_dims(output_grad.rows() == batch && output_grad.cols() == enc.output_dim(),
               "mlp_backward: gradient shape mismatch");

  MlpGradients grads;
  grads.layers.resize(layers.size());
  Matrix delta = output_grad;
  for (std::size_t l = layers.size(); l-- > 0;) {
    const DenseLayer& layer = layers[l];
    const Matrix& x = cache.inputs[l];
    DenseLayer g{Matrix(layer.out(), layer.in()), std::vector<double>(layer.out(), 0.0)};
    for (std::size_t r = 0; r < batch; ++r) {
      auto d = delta.row(r);
      auto xr = x.row(r);
      for (std::size_t o = 0; o < layer.out(); ++o) {
        if (d[o] == 0.0) continue;
        g.bias[o] += d[o];
        auto gw = g.weight.row(o);
        for (std::size_t i = 0; i < layer.in(); ++i) gw[i] += d[o] * xr[i];
      }
    }
    if (l > 0) {
      Matrix prev(batch, layer.in());
      const Matrix& z = cache.pre_activations[l - 1];
      for (std::size_t r = 0; r < batch; ++r) {
        auto d = delta.row(r);
        auto p = prev.row(r);
        for (std::size_t o = 0; o < layer.out(); ++o) {
          if (d[o] == 0.0) continue;
          auto w = layer.weight.row(o);
          for (std::size_t i = 0; i < layer.in(); ++i) p[i] += d[o] * w[i];
        }
        for (std::size_t i = 0; i < layer.in(); ++i)
          if (!(z(r, i) > 0.0)) p[i] = 0.0;
      }
      delta = std::move(prev);
    }
    grads.layers[l] = std::move(g);
  }
  return grads;
}

/// Read-only views of gradient tensors in the same order as MlpEncoder::parameters().
inline std::vector<std::span<const double>> gradient_views(const MlpGradients& g) {
  std::vector<std::span<const double>> out;
  for (const auto& l : g.layers) {
    out.emplace_back(l.weight.data());
    out.emplace_back(l.bias);
  }
  return out;
}

}  // namespace grm
