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

#ifndef ESCI_MODEL_H_
#define ESCI_MODEL_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "esci/labels.h"
#include "esci/rng.h"
#include "esci/tokenizer.h"

namespace esci {

// Small cross-encoder over hashed tokens:
//
//   x      = (e[CLS] + mean of the other token embeddings) / 2
//   h_l    = tanh(W_l h_{l-1} + b_l),   h_0 = x,  l = 1..L
//   pooled = sum_l softmax(pool_logits)_l h_l
//   probs  = softmax(head(pooled))
//
// In training mode the head runs once per dropout ratio with an independent
// inverted-dropout mask on `pooled`, and the resulting probability vectors
// are averaged.
struct ModelConfig {
  std::size_t vocab_size = 1u << 16;
  std::size_t embed_dim = 64;
  std::vector<std::size_t> hidden_dims = {128, 128, 128};
  std::vector<double> dropout_ratios = {0.1, 0.2, 0.3, 0.4, 0.5};
  std::uint64_t seed = 0;

  std::size_t num_layers() const { return hidden_dims.size(); }
  std::size_t pool_dim() const { return hidden_dims.empty() ? 0 : hidden_dims.back(); }

  // Throws ConfigError. Layer pooling needs every hidden layer to have the
  // same width.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Dense row-major matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

struct DenseLayer {
  Matrix weight;  // out x in
  std::vector<double> bias;

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

// Named view of one parameter tensor.
template <typename T>
struct TensorView {
  std::string name;
  std::span<T> values;
  bool is_embedding = false;
};

struct ModelParams {
  ModelConfig config;
  Matrix embedding;  // vocab_size x embed_dim
  std::vector<DenseLayer> layers;
  std::vector<double> pool_logits;  // one per layer
  Matrix head_weight;               // pool_dim x 4
  std::vector<double> head_bias;    // 4

  // Same shapes, all zeros. Used for gradients and optimizer moments.
  static ModelParams zeros_like(const ModelParams& p);

  // Canonical order: embedding, layer weights and biases, pool logits, head
  // weight, head bias.
  std::vector<TensorView<double>> tensors();
  std::vector<TensorView<const double>> tensors() const;

  std::size_t num_values() const;
  void set_zero();
  // this += scale * other. Shapes must match.
  void add_scaled(const ModelParams& other, double scale);

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

// Shapes implied by cfg, all values zero.
ModelParams zero_params(const ModelConfig& cfg);

// Glorot-uniform tensors (a = sqrt(6 / (fan_in + fan_out))), zero biases and
// zero pool logits, reproducible from cfg.seed.
ModelParams init_params(const ModelConfig& cfg);

enum class Mode { kTrain, kEval };

// Everything the backward pass needs.
struct ForwardCache {
  Mode mode = Mode::kEval;
  std::vector<TokenId> ids;             // the attended prefix of the input
  std::vector<double> token_weights;    // pooling weight per attended position
  Matrix embeddings;                    // attended positions x embed_dim
  std::vector<std::vector<double>> activations;  // h_0 .. h_L
  std::vector<double> pool_weights;     // softmax(pool_logits)
  std::vector<double> pooled;
  std::vector<std::vector<double>> masks;        // one per head pass (train only)
  std::vector<LabelVector> sample_probs;         // one per head pass
  LabelVector probs;
};

// Runs the model. `rng` is required in training mode. `embedding_delta`, if
// given, is added to the embedding outputs (attended positions x embed_dim)
// before pooling. Throws ShapeError if an id is outside the vocabulary or
// the delta has the wrong shape.
ForwardCache forward(const ModelParams& params, const TokenizedInput& input, Mode mode,
                     Rng* rng, const Matrix* embedding_delta = nullptr);

// Cross-entropy -sum_c target_c * ln(max(probs_c, 1e-12)).
double cross_entropy(const LabelVector& probs, const LabelVector& target);

// Adds scale * d(cross_entropy)/d(theta) into `grads` and returns
// scale * d(cross_entropy)/d(embedding outputs) for the cached positions.
// Throws ShapeError if the cache does not match the parameters.
Matrix backward(const ModelParams& params, const ForwardCache& cache, const LabelVector& target,
                double scale, ModelParams& grads);

struct Gradients {
  ModelParams params;
  Matrix embedding_outputs;
};

// Unscaled gradients into a fresh container.
Gradients backward(const ModelParams& params, const ForwardCache& cache,
                   const LabelVector& target);

// Evaluation-mode forward over a batch.
std::vector<LabelVector> predict_proba(const ModelParams& params,
                                       std::span<const TokenizedInput> batch);

// Checkpoints bundle the parameters with the tokenizer they were trained
// with. The format is binary, tagged with a version, and bit-exact.
struct Checkpoint {
  ModelParams params;
  TokenizerConfig tokenizer;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint deserialize_checkpoint(std::string_view bytes, std::string_view source_name);
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace esci

#endif  // ESCI_MODEL_H_
