// Copyright 2026 The ESCI Rank Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "esci/model.h"

#include <algorithm>
#include <bit>
#include <cmath>

#include <fmt/format.h>

#include "esci/error.h"

namespace esci {
namespace {

constexpr double kProbFloor = 1e-12;

void glorot_fill(std::span<double> values, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : values) v = rng.uniform(-a, a);
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  const double m = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

LabelVector head_pass(const ModelParams& params, std::span<const double> input) {
  std::array<double, kNumClasses> logits;
  for (std::size_t c = 0; c < kNumClasses; ++c) logits[c] = params.head_bias[c];
  for (std::size_t j = 0; j < input.size(); ++j) {
    const double u = input[j];
    if (u == 0.0) continue;
    const auto w = params.head_weight.row(j);
    for (std::size_t c = 0; c < kNumClasses; ++c) logits[c] += u * w[c];
  }
  const auto s = softmax(logits);
  LabelVector out;
  std::copy(s.begin(), s.end(), out.p.begin());
  return out;
}

void check_shapes(const ModelParams& params, const ModelParams& other, std::string_view what) {
  const auto a = params.tensors();
  const auto b = other.tensors();
  if (a.size() != b.size()) {
    throw ShapeError(fmt::format("{}: tensor count {} != {}", what, a.size(), b.size()));
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].values.size() != b[i].values.size()) {
      throw ShapeError(fmt::format("{}: tensor '{}' has {} values, expected {}", what, b[i].name,
                                   b[i].values.size(), a[i].values.size()));
    }
  }
}

template <typename T, typename Params>
std::vector<TensorView<T>> collect_tensors(Params& p) {
  std::vector<TensorView<T>> out;
  out.push_back({"embedding", p.embedding.data, true});
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    out.push_back({fmt::format("layer{}.weight", l), p.layers[l].weight.data});
    out.push_back({fmt::format("layer{}.bias", l), p.layers[l].bias});
  }
  out.push_back({"pool_logits", p.pool_logits});
  out.push_back({"head.weight", p.head_weight.data});
  out.push_back({"head.bias", p.head_bias});
  return out;
}

}  // namespace

void ModelConfig::validate() const {
  if (vocab_size == 0) throw ConfigError("model: vocab_size must be positive");
  if (embed_dim < 1) throw ConfigError("model: embed_dim must be at least 1");
  if (hidden_dims.empty()) throw ConfigError("model: hidden_dims must not be empty");
  for (std::size_t d : hidden_dims) {
    if (d != hidden_dims.front()) {
      throw ConfigError("model: layer pooling needs equal hidden_dims");
    }
    if (d == 0) throw ConfigError("model: hidden dims must be positive");
  }
  for (double r : dropout_ratios) {
    if (!(r >= 0.0 && r < 1.0)) {
      throw ConfigError(fmt::format("model: dropout ratio {} outside [0, 1)", r));
    }
  }
}

ModelParams ModelParams::zeros_like(const ModelParams& p) { return zero_params(p.config); }

std::vector<TensorView<double>> ModelParams::tensors() { return collect_tensors<double>(*this); }

std::vector<TensorView<const double>> ModelParams::tensors() const {
  return collect_tensors<const double>(*this);
}

std::size_t ModelParams::num_values() const {
  std::size_t n = 0;
  for (const auto& t : tensors()) n += t.values.size();
  return n;
}

void ModelParams::set_zero() {
  for (auto& t : tensors()) std::fill(t.values.begin(), t.values.end(), 0.0);
}

void ModelParams::add_scaled(const ModelParams& other, double scale) {
  check_shapes(*this, other, "add_scaled");
  auto dst = tensors();
  const auto src = other.tensors();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    for (std::size_t k = 0; k < dst[i].values.size(); ++k) {
      dst[i].values[k] += scale * src[i].values[k];
    }
  }
}

ModelParams zero_params(const ModelConfig& cfg) {
  cfg.validate();
  ModelParams p;
  p.config = cfg;
  p.embedding = Matrix(cfg.vocab_size, cfg.embed_dim);
  std::size_t in = cfg.embed_dim;
  for (std::size_t out : cfg.hidden_dims) {
    p.layers.push_back({Matrix(out, in), std::vector<double>(out, 0.0)});
    in = out;
  }
  p.pool_logits.assign(cfg.num_layers(), 0.0);
  p.head_weight = Matrix(cfg.pool_dim(), kNumClasses);
  p.head_bias.assign(kNumClasses, 0.0);
  return p;
}

ModelParams init_params(const ModelConfig& cfg) {
  ModelParams p = zero_params(cfg);
  Rng rng(cfg.seed);
  glorot_fill(p.embedding.data, cfg.vocab_size, cfg.embed_dim, rng);
  for (auto& layer : p.layers) {
    glorot_fill(layer.weight.data, layer.weight.cols, layer.weight.rows, rng);
  }
  glorot_fill(p.head_weight.data, cfg.pool_dim(), kNumClasses, rng);
  return p;
}

ForwardCache forward(const ModelParams& params, const TokenizedInput& input, Mode mode, Rng* rng,
                     const Matrix* embedding_delta) {
  const std::size_t n = input.attention_len;
  const std::size_t dim = params.embedding.cols;
  if (n == 0 || n > input.ids.size()) {
    throw ShapeError(fmt::format("forward: attention_len {} invalid for {} ids", n,
                                 input.ids.size()));
  }
  if (embedding_delta && (embedding_delta->rows != n || embedding_delta->cols != dim)) {
    throw ShapeError(fmt::format("forward: embedding delta is {}x{}, expected {}x{}",
                                 embedding_delta->rows, embedding_delta->cols, n, dim));
  }
  if (mode == Mode::kTrain && !params.config.dropout_ratios.empty() && rng == nullptr) {
    throw ArgumentError("forward: training mode needs an rng");
  }

  ForwardCache cache;
  cache.mode = mode;
  cache.ids.assign(input.ids.begin(), input.ids.begin() + static_cast<std::ptrdiff_t>(n));
  cache.token_weights.assign(n, n == 1 ? 1.0 : 0.5 / static_cast<double>(n - 1));
  cache.token_weights[0] = n == 1 ? 1.0 : 0.5;

  cache.embeddings = Matrix(n, dim);
  std::vector<double> x(dim, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const TokenId id = cache.ids[i];
    if (id >= params.embedding.rows) {
      throw ShapeError(fmt::format("forward: token id {} at position {} exceeds vocab size {}",
                                   id, i, params.embedding.rows));
    }
    auto e = cache.embeddings.row(i);
    const auto src = params.embedding.row(id);
    std::copy(src.begin(), src.end(), e.begin());
    if (embedding_delta) {
      const auto d = embedding_delta->row(i);
      for (std::size_t k = 0; k < dim; ++k) e[k] += d[k];
    }
    const double w = cache.token_weights[i];
    for (std::size_t k = 0; k < dim; ++k) x[k] += w * e[k];
  }

  cache.activations.reserve(params.layers.size() + 1);
  cache.activations.push_back(std::move(x));
  for (const auto& layer : params.layers) {
    const auto& prev = cache.activations.back();
    std::vector<double> h(layer.weight.rows);
    for (std::size_t o = 0; o < layer.weight.rows; ++o) {
      const auto w = layer.weight.row(o);
      double acc = layer.bias[o];
      for (std::size_t k = 0; k < prev.size(); ++k) acc += w[k] * prev[k];
      h[o] = std::tanh(acc);
    }
    cache.activations.push_back(std::move(h));
  }

  cache.pool_weights = softmax(params.pool_logits);
  cache.pooled.assign(params.config.pool_dim(), 0.0);
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& h = cache.activations[l + 1];
    const double a = cache.pool_weights[l];
    for (std::size_t k = 0; k < h.size(); ++k) cache.pooled[k] += a * h[k];
  }

  const auto& ratios = params.config.dropout_ratios;
  if (mode == Mode::kEval || ratios.empty()) {
    cache.sample_probs.push_back(head_pass(params, cache.pooled));
    cache.probs = cache.sample_probs.front();
    return cache;
  }

  std::vector<double> dropped(cache.pooled.size());
  for (double r : ratios) {
    const double keep = 1.0 - r;
    std::vector<double> mask(cache.pooled.size());
    for (double& m : mask) m = rng->uniform() < keep ? 1.0 / keep : 0.0;
    for (std::size_t k = 0; k < dropped.size(); ++k) dropped[k] = mask[k] * cache.pooled[k];
    cache.sample_probs.push_back(head_pass(params, dropped));
    cache.masks.push_back(std::move(mask));
  }
  // Mean written as s_0 + sum_k (s_k - s_0) / K so identical passes average
  // to exactly s_0.
  const auto& first = cache.sample_probs.front();
  const double inv = 1.0 / static_cast<double>(cache.sample_probs.size());
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    double acc = 0.0;
    for (const auto& s : cache.sample_probs) acc += s[c] - first[c];
    cache.probs[c] = first[c] + acc * inv;
  }
  return cache;
}

double cross_entropy(const LabelVector& probs, const LabelVector& target) {
  double loss = 0.0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    if (target[c] != 0.0) loss -= target[c] * std::log(std::max(probs[c], kProbFloor));
  }
  return loss;
}

Matrix backward(const ModelParams& params, const ForwardCache& cache, const LabelVector& target,
                double scale, ModelParams& grads) {
  check_shapes(params, grads, "backward");
  const std::size_t num_layers = params.layers.size();
  const std::size_t dim = params.embedding.cols;
  if (cache.activations.size() != num_layers + 1 ||
      cache.pooled.size() != params.config.pool_dim() || cache.embeddings.cols != dim ||
      cache.activations.front().size() != dim || cache.sample_probs.empty() ||
      (cache.mode == Mode::kTrain && !cache.masks.empty() &&
       cache.masks.size() != cache.sample_probs.size())) {
    throw ShapeError("backward: cache does not match the model parameters");
  }

  // dL/dp, zero where the probability floor is active.
  std::array<double, kNumClasses> dprobs{};
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    if (target[c] != 0.0 && cache.probs[c] > kProbFloor) {
      dprobs[c] = -scale * target[c] / cache.probs[c];
    }
  }

  const std::size_t passes = cache.sample_probs.size();
  const double inv = 1.0 / static_cast<double>(passes);
  std::vector<double> dpooled(cache.pooled.size(), 0.0);
  std::vector<double> input(cache.pooled.size());
  for (std::size_t k = 0; k < passes; ++k) {
    const LabelVector& s = cache.sample_probs[k];
    double dot = 0.0;
    for (std::size_t c = 0; c < kNumClasses; ++c) dot += s[c] * dprobs[c];
    std::array<double, kNumClasses> dlogits;
    for (std::size_t c = 0; c < kNumClasses; ++c) dlogits[c] = inv * s[c] * (dprobs[c] - dot);

    const std::vector<double>* mask = cache.masks.empty() ? nullptr : &cache.masks[k];
    for (std::size_t j = 0; j < input.size(); ++j) {
      input[j] = mask ? (*mask)[j] * cache.pooled[j] : cache.pooled[j];
    }
    for (std::size_t c = 0; c < kNumClasses; ++c) grads.head_bias[c] += dlogits[c];
    for (std::size_t j = 0; j < input.size(); ++j) {
      const auto w = params.head_weight.row(j);
      auto gw = grads.head_weight.row(j);
      double du = 0.0;
      for (std::size_t c = 0; c < kNumClasses; ++c) {
        gw[c] += input[j] * dlogits[c];
        du += w[c] * dlogits[c];
      }
      dpooled[j] += mask ? (*mask)[j] * du : du;
    }
  }

  // Layer pooling.
  std::vector<std::vector<double>> dh(num_layers + 1);
  std::vector<double> dpool_weight(num_layers, 0.0);
  for (std::size_t l = 0; l < num_layers; ++l) {
    const auto& h = cache.activations[l + 1];
    dh[l + 1].assign(h.size(), 0.0);
    double acc = 0.0;
    for (std::size_t k = 0; k < h.size(); ++k) {
      dh[l + 1][k] = cache.pool_weights[l] * dpooled[k];
      acc += dpooled[k] * h[k];
    }
    dpool_weight[l] = acc;
  }
  double mean_dpool = 0.0;
  for (std::size_t l = 0; l < num_layers; ++l) {
    mean_dpool += cache.pool_weights[l] * dpool_weight[l];
  }
  for (std::size_t l = 0; l < num_layers; ++l) {
    grads.pool_logits[l] += cache.pool_weights[l] * (dpool_weight[l] - mean_dpool);
  }

  // Hidden layers, top down.
  dh[0].assign(dim, 0.0);
  for (std::size_t l = num_layers; l-- > 0;) {
    const auto& layer = params.layers[l];
    auto& glayer = grads.layers[l];
    const auto& h = cache.activations[l + 1];
    const auto& prev = cache.activations[l];
    std::vector<double> dpre(h.size());
    for (std::size_t o = 0; o < h.size(); ++o) dpre[o] = dh[l + 1][o] * (1.0 - h[o] * h[o]);
    for (std::size_t o = 0; o < h.size(); ++o) {
      glayer.bias[o] += dpre[o];
      if (dpre[o] == 0.0) continue;
      auto gw = glayer.weight.row(o);
      const auto w = layer.weight.row(o);
      for (std::size_t k = 0; k < prev.size(); ++k) {
        gw[k] += dpre[o] * prev[k];
        dh[l][k] += w[k] * dpre[o];
      }
    }
  }

  // Embedding outputs and the embedding table.
  Matrix dembed(cache.ids.size(), dim);
  for (std::size_t i = 0; i < cache.ids.size(); ++i) {
    auto de = dembed.row(i);
    auto gtable = grads.embedding.row(cache.ids[i]);
    const double w = cache.token_weights[i];
    for (std::size_t k = 0; k < dim; ++k) {
      de[k] = w * dh[0][k];
      gtable[k] += de[k];
    }
  }
  return dembed;
}

Gradients backward(const ModelParams& params, const ForwardCache& cache,
                   const LabelVector& target) {
  Gradients g{ModelParams::zeros_like(params), {}};
  g.embedding_outputs = backward(params, cache, target, 1.0, g.params);
  return g;
}

std::vector<LabelVector> predict_proba(const ModelParams& params,
                                       std::span<const TokenizedInput> batch) {
  std::vector<LabelVector> out;
  out.reserve(batch.size());
  for (const auto& input : batch) {
    out.push_back(forward(params, input, Mode::kEval, nullptr).probs);
  }
  return out;
}

}  // namespace esci
