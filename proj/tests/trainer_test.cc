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

#include "esci/trainer.h"

#include <cmath>
#include <cstring>
#include <map>
#include <set>

#include <gtest/gtest.h>

#include "esci/error.h"
#include "oracles.h"

namespace esci {
namespace {

ModelConfig tiny_model(std::uint64_t seed = 3) {
  ModelConfig cfg;
  cfg.vocab_size = 2048;
  cfg.embed_dim = 16;
  cfg.hidden_dims = {16, 16};
  cfg.seed = seed;
  return cfg;
}

TokenizerConfig tiny_tokenizer() {
  TokenizerConfig cfg;
  cfg.vocab_size = 2048;
  cfg.ngram_orders = {3};
  cfg.max_len = 48;
  return cfg;
}

std::vector<Example> examples(std::size_t n, std::uint64_t seed) {
  return encode_examples(generate_synthetic(n, seed), tiny_tokenizer(), 0.1);
}

void expect_bitwise_equal(const ModelParams& a, const ModelParams& b) {
  const auto ta = a.tensors();
  const auto tb = b.tensors();
  ASSERT_EQ(ta.size(), tb.size());
  for (std::size_t t = 0; t < ta.size(); ++t) {
    ASSERT_EQ(ta[t].values.size(), tb[t].values.size());
    EXPECT_EQ(std::memcmp(ta[t].values.data(), tb[t].values.data(),
                          ta[t].values.size() * sizeof(double)),
              0)
        << ta[t].name;
  }
}

TEST(SmoothLabelsTest, Examples) {
  EXPECT_EQ(smooth_labels(EsciLabel::kExact, 0.0), LabelVector::one_hot(EsciLabel::kExact));
  const auto s = smooth_labels(EsciLabel::kExact, 0.1);
  EXPECT_NEAR(s[0], 0.925, 1e-15);
  for (std::size_t c = 1; c < 4; ++c) EXPECT_NEAR(s[c], 0.025, 1e-15);
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    EXPECT_NEAR(smooth_labels(oracle::random_distribution(rng), rng.uniform()).sum(), 1.0, 1e-12);
  }
}

TEST(LossTest, Examples) {
  const auto e = LabelVector::one_hot(EsciLabel::kExact);
  EXPECT_NEAR(loss(e, e), 0.0, 1e-9);
  EXPECT_NEAR(loss(LabelVector::uniform(), e), 1.386294, 1e-6);
  EXPECT_TRUE(std::isfinite(loss(LabelVector::one_hot(EsciLabel::kIrrelevant), e)));
  Rng rng(2);
  for (int i = 0; i < 100; ++i) {
    const auto t = oracle::random_distribution(rng);
    const auto p = oracle::random_distribution(rng);
    EXPECT_GE(loss(p, t) + 1e-12, loss(t, t));
  }
}

TEST(TrainingTargetTest, SoftLabelsBypassSmoothing) {
  QueryProductRecord r;
  r.label = EsciLabel::kSubstitute;
  EXPECT_EQ(training_target(r, 0.2), smooth_labels(EsciLabel::kSubstitute, 0.2));
  r.soft_label = LabelVector{{0.1, 0.7, 0.1, 0.1}};
  EXPECT_EQ(training_target(r, 0.2), *r.soft_label);
  EXPECT_THROW(training_target(QueryProductRecord{}, 0.1), ArgumentError);
}

TEST(NormalizedPerturbationTest, Examples) {
  Matrix g(1, 2);
  g.data = {3.0, 4.0};
  const std::vector<Matrix> grads = {g};
  const auto d = normalized_perturbation(grads, 0.1);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_NEAR(d[0].data[0], 0.06, 1e-15);
  EXPECT_NEAR(d[0].data[1], 0.08, 1e-15);
  const std::vector<Matrix> zero = {Matrix(2, 3)};
  EXPECT_TRUE(normalized_perturbation(zero, 0.1).empty());
  // The norm is taken over every matrix together.
  Matrix a(1, 1);
  a.data = {3.0};
  Matrix b(1, 1);
  b.data = {4.0};
  const std::vector<Matrix> split = {a, b};
  const auto ds = normalized_perturbation(split, 0.1);
  EXPECT_NEAR(ds[0].data[0], 0.06, 1e-15);
  EXPECT_NEAR(ds[1].data[0], 0.08, 1e-15);
}

class AdversaryTest : public ::testing::Test {
 protected:
  AdversaryTest() : params_(init_params(tiny_model())), batch_(examples(12, 5)) {}

  // Clean pass over the batch: returns embedding-output gradients and fills
  // `grads` with parameter gradients.
  std::vector<Matrix> clean_pass(ModelParams& grads, double* loss_sum = nullptr) {
    Rng rng(9);
    std::vector<Matrix> eg;
    double total = 0.0;
    for (const auto& ex : batch_) {
      const auto cache = forward(params_, ex.input, Mode::kTrain, &rng);
      total += cross_entropy(cache.probs, ex.target);
      eg.push_back(backward(params_, cache, ex.target, 1.0, grads));
    }
    if (loss_sum) *loss_sum = total;
    return eg;
  }

  double eval_loss() const {
    double total = 0.0;
    for (const auto& ex : batch_) {
      total += cross_entropy(forward(params_, ex.input, Mode::kEval, nullptr).probs, ex.target);
    }
    return total;
  }

  ModelParams params_;
  std::vector<Example> batch_;
};

TEST_F(AdversaryTest, FgmPerturbationHasNormEpsilonAndRestores) {
  ModelParams grads = ModelParams::zeros_like(params_);
  const auto eg = clean_pass(grads);
  const ModelParams before = params_;
  const double loss_before = eval_loss();
  ModelParams adv = ModelParams::zeros_like(params_);
  Rng rng(4);
  const auto step = fgm_step(params_, batch_, eg, 0.1, 1.0, rng, adv);
  EXPECT_TRUE(step.applied);
  EXPECT_NEAR(step.embedding_delta_norm, 0.1, 1e-9);
  EXPECT_GT(step.loss_sum, 0.0);
  expect_bitwise_equal(params_, before);
  EXPECT_EQ(eval_loss(), loss_before);
  EXPECT_NE(adv, ModelParams::zeros_like(params_));
}

TEST_F(AdversaryTest, FgmSkipsZeroGradient) {
  std::vector<Matrix> zero;
  for (const auto& ex : batch_) zero.emplace_back(ex.input.attention_len, 16);
  ModelParams adv = ModelParams::zeros_like(params_);
  Rng rng(4);
  const auto step = fgm_step(params_, batch_, zero, 0.1, 1.0, rng, adv);
  EXPECT_FALSE(step.applied);
  EXPECT_EQ(adv, ModelParams::zeros_like(params_));
}

TEST_F(AdversaryTest, AwpGateBlocksAboveThreshold) {
  ModelParams grads = ModelParams::zeros_like(params_);
  const std::vector<std::vector<Matrix>> eg = {clean_pass(grads)};
  const std::vector<std::span<const Example>> micro = {batch_};
  ModelParams adv = ModelParams::zeros_like(params_);
  Rng rng(4);
  const auto step = awp_step(params_, micro, grads, eg, 0.01, 0.8, 0.6, 1.0, rng, adv);
  EXPECT_FALSE(step.applied);
  EXPECT_EQ(adv, ModelParams::zeros_like(params_));
  // Equal to the gate is not below it.
  EXPECT_FALSE(awp_step(params_, micro, grads, eg, 0.01, 0.6, 0.6, 1.0, rng, adv).applied);
}

TEST_F(AdversaryTest, AwpRelativeNormsAndBitwiseRestore) {
  ModelParams grads = ModelParams::zeros_like(params_);
  const std::vector<std::vector<Matrix>> eg = {clean_pass(grads)};
  const std::vector<std::span<const Example>> micro = {batch_};
  const ModelParams before = params_;
  ModelParams adv = ModelParams::zeros_like(params_);
  Rng rng(4);
  const double gamma = 0.01;
  const auto step = awp_step(params_, micro, grads, eg, gamma, 0.5, 0.6, 1.0, rng, adv);
  ASSERT_TRUE(step.applied);
  expect_bitwise_equal(params_, before);
  // layer0.weight, layer0.bias, layer1.weight, layer1.bias, pool_logits,
  // head.weight, head.bias. Biases and pool logits start at zero.
  ASSERT_EQ(step.weight_relative_norms.size(), 7u);
  const auto tensors = params_.tensors();
  for (std::size_t i = 0; i < step.weight_relative_norms.size(); ++i) {
    double w_sq = 0.0;
    for (double v : tensors[i + 1].values) w_sq += v * v;
    if (w_sq == 0.0) {
      EXPECT_EQ(step.weight_relative_norms[i], 0.0) << tensors[i + 1].name;
    } else {
      EXPECT_NEAR(step.weight_relative_norms[i], gamma, 1e-12) << tensors[i + 1].name;
    }
  }
  double e_sq = 0.0;
  for (const auto& ex : batch_) {
    for (std::size_t i = 0; i < ex.input.attention_len; ++i) {
      for (double v : params_.embedding.row(ex.input.ids[i])) e_sq += v * v;
    }
  }
  EXPECT_NEAR(step.embedding_delta_norm, gamma * std::sqrt(e_sq), 1e-12);
  EXPECT_NE(adv, ModelParams::zeros_like(params_));
}

TEST(RunningMeanTest, Window) {
  RunningMean m(3);
  EXPECT_TRUE(m.empty());
  for (double v : {1.0, 2.0, 3.0, 10.0}) m.add(v);
  EXPECT_DOUBLE_EQ(m.mean(), 5.0);
}

TrainConfig quick_config() {
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 8;
  cfg.grad_accum_steps = 2;
  cfg.seed = 11;
  return cfg;
}

ModelParams run_updates(const TrainConfig& cfg, const std::vector<Example>& data,
                        std::size_t logical, std::size_t updates, std::size_t* adv = nullptr) {
  Trainer trainer(init_params(tiny_model()), cfg);
  for (std::size_t u = 0; u < updates; ++u) {
    std::vector<std::span<const Example>> micro;
    const std::size_t begin = (u * logical) % data.size();
    for (std::size_t b = 0; b < logical; b += cfg.batch_size) {
      micro.emplace_back(data.data() + begin + b, cfg.batch_size);
    }
    trainer.update(micro);
  }
  if (adv) *adv = trainer.adversarial_steps();
  return trainer.release();
}

TEST(TrainerTest, AccumulationIdentity) {
  const auto data = examples(64, 21);
  TrainConfig a = quick_config();
  a.batch_size = 64;
  a.grad_accum_steps = 1;
  TrainConfig b = a;
  b.batch_size = 16;
  b.grad_accum_steps = 4;
  const auto pa = run_updates(a, data, 64, 1);
  const auto pb = run_updates(b, data, 64, 1);
  const auto ta = pa.tensors();
  const auto tb = pb.tensors();
  double worst = 0.0;
  for (std::size_t t = 0; t < ta.size(); ++t) {
    for (std::size_t i = 0; i < ta[t].values.size(); ++i) {
      worst = std::max(worst, std::abs(ta[t].values[i] - tb[t].values[i]));
    }
  }
  EXPECT_LT(worst, 1e-6);
  EXPECT_NE(pa, init_params(tiny_model()));
}

TEST(TrainerTest, ClosedAwpGateMatchesPlainUpdates) {
  const auto data = examples(64, 22);
  TrainConfig plain = quick_config();
  TrainConfig gated = plain;
  gated.adversary = Adversary::kAwp;
  gated.awp_loss_gate = 0.0;
  std::size_t adv = 0;
  const auto p1 = run_updates(plain, data, 16, 4);
  const auto p2 = run_updates(gated, data, 16, 4, &adv);
  EXPECT_EQ(adv, 0u);
  expect_bitwise_equal(p1, p2);
}

TEST(TrainerTest, OpenAwpGateNeedsOneUpdateOfHistory) {
  const auto data = examples(64, 23);
  TrainConfig cfg = quick_config();
  cfg.adversary = Adversary::kAwp;
  cfg.awp_loss_gate = 100.0;
  std::size_t adv = 0;
  run_updates(cfg, data, 16, 1, &adv);
  EXPECT_EQ(adv, 0u);
  run_updates(cfg, data, 16, 4, &adv);
  EXPECT_EQ(adv, 3u);
}

TEST(TrainerTest, FgmCountsEveryUpdate) {
  const auto data = examples(64, 24);
  TrainConfig cfg = quick_config();
  cfg.adversary = Adversary::kFgm;
  std::size_t adv = 0;
  const auto p = run_updates(cfg, data, 16, 3, &adv);
  EXPECT_EQ(adv, 3u);
  EXPECT_NE(p, run_updates(quick_config(), data, 16, 3));
}

TEST(TrainerTest, SparseEmbeddingUpdates) {
  const auto data = examples(16, 25);
  std::set<TokenId> seen;
  for (const auto& ex : data) {
    for (std::size_t i = 0; i < ex.input.attention_len; ++i) seen.insert(ex.input.ids[i]);
  }
  const auto init = init_params(tiny_model());
  const auto p = run_updates(quick_config(), data, 16, 1);
  for (TokenId id = 0; id < init.embedding.rows; ++id) {
    const bool changed = !std::equal(p.embedding.row(id).begin(), p.embedding.row(id).end(),
                                     init.embedding.row(id).begin());
    if (!seen.count(id)) EXPECT_FALSE(changed) << id;
  }
}

struct SmallRun {
  Dataset train;
  Dataset val;
};

SmallRun small_run(std::size_t n = 2000) {
  const auto data = generate_synthetic(n, 7);
  auto [train, val] = split_by_query(data, 0.2, 7);
  return {train, val};
}

TEST(TrainTest, LossDecreasesOverTwoEpochs) {
  const auto run = small_run();
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.seed = 7;
  const auto result = train(run.train, run.val, cfg, tiny_model(), tiny_tokenizer());
  ASSERT_EQ(result.report.epochs.size(), 2u);
  EXPECT_LT(result.report.epochs[1].loss, result.report.epochs[0].loss);
  for (const auto& e : result.report.epochs) {
    EXPECT_TRUE(std::isfinite(e.loss));
    EXPECT_GE(e.loss, 0.0);
    EXPECT_GE(e.val_ndcg, 0.0);
    EXPECT_LE(e.val_ndcg, 1.0);
  }
}

TEST(TrainTest, Deterministic) {
  const auto run = small_run(600);
  for (Adversary a : {Adversary::kNone, Adversary::kFgm, Adversary::kAwp}) {
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.seed = 3;
    cfg.adversary = a;
    cfg.awp_loss_gate = 2.0;
    cfg.grad_accum_steps = 1;
    const auto r1 = train(run.train, run.val, cfg, tiny_model(), tiny_tokenizer());
    const auto r2 = train(run.train, run.val, cfg, tiny_model(), tiny_tokenizer());
    expect_bitwise_equal(r1.params, r2.params);
    EXPECT_EQ(format_metrics(r1.report), format_metrics(r2.report)) << adversary_name(a);
    if (a != Adversary::kNone) EXPECT_GT(r1.report.epochs[1].adv_steps, 0u);
  }
}

TEST(TrainTest, Errors) {
  const auto run = small_run(200);
  TrainConfig cfg;
  EXPECT_THROW(train({}, run.val, cfg, tiny_model(), tiny_tokenizer()), ArgumentError);
  EXPECT_THROW(train(run.train, {}, cfg, tiny_model(), tiny_tokenizer()), ArgumentError);
  EXPECT_THROW(train(run.train, run.val, cfg, tiny_model(), TokenizerConfig{}), ConfigError);
  cfg.learning_rate = 1e200;
  cfg.epochs = 3;
  cfg.grad_accum_steps = 1;
  EXPECT_THROW(train(run.train, run.val, cfg, tiny_model(), tiny_tokenizer()), TrainingError);
}

TEST(TrainConfigTest, Validation) {
  TrainConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.label_smoothing = 1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.folds_trained = 4;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.pseudo_threshold = 0.4;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.fgm_epsilon = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_EQ(parse_adversary("AWP"), Adversary::kAwp);
  EXPECT_EQ(parse_adversary("pgd"), std::nullopt);
}

TEST(AssignFoldsTest, PartitionByQuery) {
  const auto data = generate_synthetic(700, 4);
  const auto folds = assign_folds(data, 7, 1);
  std::map<std::string, std::size_t> fold_of;
  std::vector<std::set<std::string>> queries(7);
  for (std::size_t i = 0; i < data.size(); ++i) {
    ASSERT_LT(folds[i], 7u);
    auto [it, inserted] = fold_of.emplace(data[i].query_id, folds[i]);
    EXPECT_EQ(it->second, folds[i]);
    queries[folds[i]].insert(data[i].query_id);
  }
  for (const auto& q : queries) EXPECT_FALSE(q.empty());
  EXPECT_EQ(folds, assign_folds(data, 7, 1));
  EXPECT_THROW(assign_folds(generate_synthetic(4, 1), 3, 1), ArgumentError);
}

TEST(KfoldBagTest, ThreeOfThreeCoversEverything) {
  const auto data = generate_synthetic(400, 8);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.seed = 5;
  const auto bag = kfold_bag(data, cfg, tiny_model(), tiny_tokenizer());
  ASSERT_EQ(bag.models.size(), 3u);
  const auto inputs = encode_inputs(data, tiny_tokenizer());
  for (std::size_t i = 0; i < data.size(); ++i) {
    ASSERT_TRUE(bag.oof_probs[i].has_value()) << i;
    // Out of fold: the prediction comes from the model that held this
    // record's fold out.
    const auto& model = bag.models[bag.fold_of_record[i]];
    EXPECT_EQ(*bag.oof_probs[i], forward(model, inputs[i], Mode::kEval, nullptr).probs);
  }
  EXPECT_NE(bag.models[0], bag.models[1]);
}

TEST(KfoldBagTest, TwoOfSeven) {
  const auto data = generate_synthetic(300, 9);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.folds = 7;
  cfg.folds_trained = 2;
  const auto bag = kfold_bag(data, cfg, tiny_model(), tiny_tokenizer());
  EXPECT_EQ(bag.models.size(), 2u);
  for (std::size_t i = 0; i < data.size(); ++i) {
    EXPECT_EQ(bag.oof_probs[i].has_value(), bag.fold_of_record[i] < 2);
  }
}

TEST(DistillTest, MergeExample) {
  const auto s = distill_merge(EsciLabel::kExact, LabelVector{{0.6, 0.3, 0.05, 0.05}}, 0.7);
  EXPECT_NEAR(s[0], 0.88, 1e-12);
  EXPECT_NEAR(s[1], 0.09, 1e-12);
  EXPECT_NEAR(s[2], 0.015, 1e-12);
  EXPECT_NEAR(s[3], 0.015, 1e-12);
}

TEST(DistillTest, SelfDistillProducesValidSoftLabels) {
  const auto data = generate_synthetic(300, 10);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.folds_trained = 1;
  const auto out = self_distill(data, cfg, tiny_model(), tiny_tokenizer());
  ASSERT_EQ(out.size(), data.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    ASSERT_TRUE(out[i].soft_label.has_value());
    EXPECT_NEAR(out[i].soft_label->sum(), 1.0, 1e-12);
    EXPECT_GE((*out[i].soft_label)[label_index(*out[i].label)], 0.7);
    EXPECT_EQ(out[i].label, data[i].label);
  }
  cfg.distill_hard_weight = 1.0;
  for (const auto& r : self_distill(data, cfg, tiny_model(), tiny_tokenizer())) {
    EXPECT_EQ(*r.soft_label, LabelVector::one_hot(*r.label));
  }
  Dataset unlabeled = data;
  unlabeled[3].label.reset();
  EXPECT_THROW(self_distill(unlabeled, cfg, tiny_model(), tiny_tokenizer()), ArgumentError);
}

TEST(PseudoLabelTest, ThresholdFilter) {
  Dataset records(3);
  for (std::size_t i = 0; i < 3; ++i) {
    records[i].query_id = "q";
    records[i].product_id = std::to_string(i);
  }
  const std::vector<LabelVector> probs = {LabelVector{{0.8, 0.1, 0.05, 0.05}},
                                          LabelVector{{0.6, 0.2, 0.1, 0.1}},
                                          LabelVector{{0.05, 0.05, 0.2, 0.7}}};
  const auto kept = select_pseudo_labels(records, probs, 0.7);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0].product_id, "0");
  EXPECT_EQ(*kept[0].soft_label, probs[0]);
  EXPECT_FALSE(kept[0].label.has_value());
  EXPECT_EQ(select_pseudo_labels(records, probs, 0.25).size(), 3u);
}

TEST(PseudoLabelTest, MonotoneInThreshold) {
  auto data = generate_synthetic(200, 12);
  for (auto& r : data) r.label.reset();
  Rng rng(3);
  const auto model = oracle::random_params(tiny_model(), 0.3, rng);
  const std::vector<ModelParams> models = {model, init_params(tiny_model())};
  std::size_t previous = data.size() + 1;
  for (double t : {0.3, 0.4, 0.5, 0.6, 0.7, 0.9}) {
    const auto kept = pseudo_label(models, data, t, tiny_tokenizer());
    EXPECT_LE(kept.size(), previous);
    previous = kept.size();
    for (const auto& r : kept) EXPECT_GT(r.soft_label->max(), t);
  }
  EXPECT_THROW(pseudo_label({}, data, 0.7, tiny_tokenizer()), ArgumentError);
  data[0].label = EsciLabel::kExact;
  EXPECT_THROW(pseudo_label(models, data, 0.7, tiny_tokenizer()), ArgumentError);
}

}  // namespace
}  // namespace esci
