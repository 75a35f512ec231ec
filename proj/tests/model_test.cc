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

#include <cmath>
#include <filesystem>

#include <gtest/gtest.h>

#include "esci/error.h"
#include "oracles.h"

namespace esci {
namespace {

ModelConfig small_config() {
  ModelConfig cfg;
  cfg.vocab_size = 64;
  cfg.embed_dim = 8;
  cfg.hidden_dims = {16};
  cfg.seed = 5;
  return cfg;
}

TEST(InitParamsTest, DeterministicShapesAndBounds) {
  ModelConfig cfg = small_config();
  cfg.hidden_dims = {8, 8};
  const auto a = init_params(cfg);
  EXPECT_EQ(a, init_params(cfg));
  cfg.seed = 6;
  EXPECT_NE(a, init_params(cfg));
  EXPECT_EQ(a.head_weight.rows, 8u);
  EXPECT_EQ(a.head_weight.cols, 4u);
  EXPECT_EQ(a.pool_logits, std::vector<double>(2, 0.0));
  EXPECT_EQ(a.head_bias, std::vector<double>(4, 0.0));
  const double bound = std::sqrt(6.0 / (64 + 8));
  for (double v : a.embedding.data) EXPECT_LE(std::abs(v), bound);
  const double layer_bound = std::sqrt(6.0 / (8 + 8));
  for (double v : a.layers[1].weight.data) EXPECT_LE(std::abs(v), layer_bound);
}

TEST(ModelConfigTest, Validation) {
  ModelConfig cfg = small_config();
  cfg.dropout_ratios = {1.0};
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.embed_dim = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.hidden_dims = {8, 16};
  EXPECT_THROW(cfg.validate(), ConfigError);
}

class ForwardTest : public ::testing::Test {
 protected:
  ForwardTest() : rng_(17) {
    cfg_ = small_config();
    cfg_.hidden_dims = {16, 16, 16};
    params_ = oracle::random_params(cfg_, 0.5, rng_);
    input_ = oracle::random_input(64, 10, 16, rng_);
  }
  ModelConfig cfg_;
  Rng rng_;
  ModelParams params_;
  TokenizedInput input_;
};

TEST_F(ForwardTest, EvalProbabilitiesSumToOne) {
  for (int i = 0; i < 20; ++i) {
    const auto in = oracle::random_input(64, 1 + rng_.below(15), 16, rng_);
    const auto probs = forward(params_, in, Mode::kEval, nullptr).probs;
    EXPECT_NEAR(probs.sum(), 1.0, 1e-9);
  }
}

TEST_F(ForwardTest, ZeroDropoutTrainEqualsEval) {
  params_.config.dropout_ratios = {0.0, 0.0, 0.0};
  Rng rng(3);
  EXPECT_EQ(forward(params_, input_, Mode::kTrain, &rng).probs,
            forward(params_, input_, Mode::kEval, nullptr).probs);
}

TEST_F(ForwardTest, ZeroPoolLogitsAverageLayers) {
  std::fill(params_.pool_logits.begin(), params_.pool_logits.end(), 0.0);
  const auto cache = forward(params_, input_, Mode::kEval, nullptr);
  for (std::size_t k = 0; k < cache.pooled.size(); ++k) {
    const double mean =
        (cache.activations[1][k] + cache.activations[2][k] + cache.activations[3][k]) / 3.0;
    EXPECT_NEAR(cache.pooled[k], mean, 1e-15);
  }
}

TEST_F(ForwardTest, ClsGetsHalfTheWeight) {
  const auto cache = forward(params_, input_, Mode::kEval, nullptr);
  const auto& x = cache.activations[0];
  for (std::size_t k = 0; k < x.size(); ++k) {
    double rest = 0.0;
    for (std::size_t i = 1; i < 10; ++i) rest += params_.embedding(input_.ids[i], k);
    EXPECT_NEAR(x[k], 0.5 * params_.embedding(0, k) + 0.5 * rest / 9.0, 1e-12);
  }
}

TEST_F(ForwardTest, PaddingNeverMatters) {
  TokenizedInput other = input_;
  for (std::size_t i = other.attention_len; i < other.ids.size(); ++i) other.ids[i] = 7;
  EXPECT_EQ(forward(params_, input_, Mode::kEval, nullptr).probs,
            forward(params_, other, Mode::kEval, nullptr).probs);
}

TEST_F(ForwardTest, Errors) {
  TokenizedInput bad = input_;
  bad.ids[1] = 64;
  EXPECT_THROW(forward(params_, bad, Mode::kEval, nullptr), ShapeError);
  EXPECT_THROW(forward(params_, input_, Mode::kTrain, nullptr), ArgumentError);
  Matrix wrong(3, 8);
  EXPECT_THROW(forward(params_, input_, Mode::kEval, nullptr, &wrong), ShapeError);

  const auto cache = forward(params_, input_, Mode::kEval, nullptr);
  ModelConfig bigger = cfg_;
  bigger.hidden_dims = {32, 32, 32};
  const auto other = init_params(bigger);
  EXPECT_THROW(backward(other, cache, LabelVector::uniform()), ShapeError);
}

TEST_F(ForwardTest, MultiSampleDropoutMatchesEvalInExpectation) {
  const auto eval = forward(params_, input_, Mode::kEval, nullptr).probs;
  Rng rng(99);
  LabelVector mean;
  const int draws = 4000;
  for (int i = 0; i < draws; ++i) {
    const auto p = forward(params_, input_, Mode::kTrain, &rng).probs;
    for (std::size_t c = 0; c < kNumClasses; ++c) mean[c] += p[c] / draws;
  }
  for (std::size_t c = 0; c < kNumClasses; ++c) EXPECT_NEAR(mean[c], eval[c], 0.02) << c;
}

TEST(BackwardTest, FiniteDifferencesEvalMode) {
  Rng rng(2024);
  for (int point = 0; point < 20; ++point) {
    const auto params = oracle::random_params(small_config(), 0.5, rng);
    const auto input = oracle::random_input(64, 2 + rng.below(12), 16, rng);
    const auto target = oracle::random_distribution(rng);
    const auto check = oracle::check_gradients(params, input, target, Mode::kEval, 0);
    EXPECT_LT(check.max_param_error, 1e-4) << point;
    EXPECT_LT(check.max_embedding_output_error, 1e-4) << point;
  }
}

TEST(BackwardTest, FiniteDifferencesTrainModeDeepModel) {
  Rng rng(77);
  ModelConfig cfg = small_config();
  cfg.hidden_dims = {12, 12, 12};
  for (int point = 0; point < 5; ++point) {
    const auto params = oracle::random_params(cfg, 0.5, rng);
    const auto input = oracle::random_input(64, 2 + rng.below(12), 16, rng);
    const auto target = oracle::random_distribution(rng);
    const auto check = oracle::check_gradients(params, input, target, Mode::kTrain, 1000 + point);
    EXPECT_LT(check.max_param_error, 1e-4) << point;
    EXPECT_LT(check.max_embedding_output_error, 1e-4) << point;
  }
}

TEST(BackwardTest, RepeatedTokensAccumulate) {
  Rng rng(8);
  const auto params = oracle::random_params(small_config(), 0.5, rng);
  TokenizedInput in = oracle::random_input(64, 6, 8, rng);
  in.ids[2] = in.ids[3] = in.ids[4] = 11;
  const auto check =
      oracle::check_gradients(params, in, oracle::random_distribution(rng), Mode::kEval, 0);
  EXPECT_LT(check.max_param_error, 1e-4);
}

TEST(BackwardTest, TargetEqualToOutputIsStationary) {
  Rng rng(4);
  const auto params = oracle::random_params(small_config(), 0.5, rng);
  const auto input = oracle::random_input(64, 9, 16, rng);
  const auto cache = forward(params, input, Mode::kEval, nullptr);
  const auto g = backward(params, cache, cache.probs);
  // Head bias gradient equals dL/dlogits.
  for (double v : g.params.head_bias) EXPECT_NEAR(v, 0.0, 1e-9);
}

TEST(BackwardTest, ScaleIsLinear) {
  Rng rng(6);
  const auto params = oracle::random_params(small_config(), 0.5, rng);
  const auto input = oracle::random_input(64, 9, 16, rng);
  const auto target = oracle::random_distribution(rng);
  const auto cache = forward(params, input, Mode::kEval, nullptr);
  auto one = ModelParams::zeros_like(params);
  auto two = ModelParams::zeros_like(params);
  const Matrix d1 = backward(params, cache, target, 1.0, one);
  const Matrix d2 = backward(params, cache, target, 2.0, two);
  const auto a = one.tensors();
  const auto b = two.tensors();
  for (std::size_t t = 0; t < a.size(); ++t) {
    for (std::size_t i = 0; i < a[t].values.size(); ++i) {
      EXPECT_DOUBLE_EQ(b[t].values[i], 2.0 * a[t].values[i]);
    }
  }
  for (std::size_t i = 0; i < d1.data.size(); ++i) EXPECT_DOUBLE_EQ(d2.data[i], 2.0 * d1.data[i]);
}

TEST(PredictProbaTest, BatchIdentities) {
  Rng rng(12);
  const auto params = oracle::random_params(small_config(), 0.5, rng);
  std::vector<TokenizedInput> batch;
  for (int i = 0; i < 6; ++i) batch.push_back(oracle::random_input(64, 2 + i, 16, rng));
  const auto out = predict_proba(params, batch);
  EXPECT_EQ(out, predict_proba(params, batch));
  EXPECT_EQ(predict_proba(params, std::span(batch).subspan(2, 1))[0], out[2]);
  std::vector<TokenizedInput> reversed(batch.rbegin(), batch.rend());
  const auto rev = predict_proba(params, reversed);
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(rev[i], out[out.size() - 1 - i]);
}

TEST(CheckpointTest, RoundTripIsBitExact) {
  Rng rng(1);
  ModelConfig cfg = small_config();
  cfg.hidden_dims = {4, 4};
  cfg.dropout_ratios = {0.25};
  Checkpoint c{oracle::random_params(cfg, 1.0, rng), TokenizerConfig{}};
  c.params.embedding.data[3] = -0.0;
  c.params.head_bias[1] = 1e-310;
  c.tokenizer.vocab_size = 64;
  c.tokenizer.ngram_orders = {2, 5};
  const std::string bytes = serialize_checkpoint(c);
  EXPECT_EQ(deserialize_checkpoint(bytes, "mem"), c);
  EXPECT_TRUE(std::signbit(deserialize_checkpoint(bytes, "mem").params.embedding.data[3]));

  const auto path = std::filesystem::temp_directory_path() / "esci_model_test.ckpt";
  save_checkpoint(c, path);
  EXPECT_EQ(load_checkpoint(path), c);
  std::filesystem::remove(path);
}

TEST(CheckpointTest, RejectsDamagedFiles) {
  Rng rng(1);
  Checkpoint c{oracle::random_params(small_config(), 1.0, rng), TokenizerConfig{}};
  c.tokenizer.vocab_size = 64;
  const std::string bytes = serialize_checkpoint(c);
  EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, bytes.size() - 3), "t"), ParseError);
  EXPECT_THROW(deserialize_checkpoint(bytes + "x", "t"), ParseError);
  EXPECT_THROW(deserialize_checkpoint("not a checkpoint", "t"), ParseError);
}

}  // namespace
}  // namespace esci
