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

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include <fmt/format.h>

#include "esci/error.h"
#include "esci/io.h"
#include "esci/text.h"

namespace esci {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

double squared_norm(std::span<const double> values) {
  double s = 0.0;
  for (double v : values) s += v * v;
  return s;
}

// Embedding outputs of one input, i.e. the table rows of its attended ids.
double embedding_output_squared_norm(const ModelParams& params, const TokenizedInput& input) {
  double s = 0.0;
  for (std::size_t i = 0; i < input.attention_len; ++i) {
    const TokenId id = input.ids[i];
    if (id >= params.embedding.rows) {
      throw ShapeError(fmt::format("token id {} exceeds vocab size {}", id, params.embedding.rows));
    }
    s += squared_norm(params.embedding.row(id));
  }
  return s;
}

// Forward and backward at a perturbed embedding point for each example of a
// micro-batch. Returns the summed loss.
double perturbed_pass(const ModelParams& params, std::span<const Example> batch,
                      std::span<const Matrix> deltas, double scale, Rng& rng,
                      ModelParams& grads) {
  double loss_sum = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Matrix* delta = deltas.empty() ? nullptr : &deltas[i];
    const auto cache = forward(params, batch[i].input, Mode::kTrain, &rng, delta);
    loss_sum += cross_entropy(cache.probs, batch[i].target);
    backward(params, cache, batch[i].target, scale, grads);
  }
  return loss_sum;
}

void check_finite(double loss_sum, std::string_view where) {
  if (!std::isfinite(loss_sum)) {
    throw TrainingError(fmt::format("non-finite loss {} {}", loss_sum, where));
  }
}

ModelConfig seeded(ModelConfig cfg, std::uint64_t offset) {
  cfg.seed += offset;
  return cfg;
}

}  // namespace

std::string_view adversary_name(Adversary a) {
  switch (a) {
    case Adversary::kNone:
      return "none";
    case Adversary::kFgm:
      return "fgm";
    case Adversary::kAwp:
      return "awp";
  }
  return "none";
}

std::optional<Adversary> parse_adversary(std::string_view s) {
  const std::string lower = ascii_lower(s);
  if (lower == "none") return Adversary::kNone;
  if (lower == "fgm") return Adversary::kFgm;
  if (lower == "awp") return Adversary::kAwp;
  return std::nullopt;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train: epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("train: batch_size must be at least 1");
  if (grad_accum_steps < 1) throw ConfigError("train: grad_accum_steps must be at least 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("train: learning_rate must be positive");
  }
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) {
    throw ConfigError(fmt::format("train: label_smoothing {} outside [0, 1)", label_smoothing));
  }
  if (!(fgm_epsilon > 0.0)) throw ConfigError("train: fgm_epsilon must be positive");
  if (!(awp_gamma > 0.0)) throw ConfigError("train: awp_gamma must be positive");
  if (!std::isfinite(awp_loss_gate)) throw ConfigError("train: awp_loss_gate must be finite");
  if (!(distill_hard_weight >= 0.0 && distill_hard_weight <= 1.0)) {
    throw ConfigError(
        fmt::format("train: distill_hard_weight {} outside [0, 1]", distill_hard_weight));
  }
  if (!(pseudo_threshold >= 0.5 && pseudo_threshold < 1.0)) {
    throw ConfigError(fmt::format("train: pseudo_threshold {} outside [0.5, 1)", pseudo_threshold));
  }
  if (folds < 2) throw ConfigError("train: folds must be at least 2");
  if (folds_trained < 1 || folds_trained > folds) {
    throw ConfigError(
        fmt::format("train: folds_trained {} outside [1, folds={}]", folds_trained, folds));
  }
}

LabelVector smooth_labels(const LabelVector& target, double eps) {
  LabelVector out;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    out[c] = (1.0 - eps) * target[c] + eps * 0.25;
  }
  return out;
}

LabelVector smooth_labels(EsciLabel target, double eps) {
  return smooth_labels(LabelVector::one_hot(target), eps);
}

double loss(const LabelVector& probs, const LabelVector& target) {
  return cross_entropy(probs, target);
}

LabelVector training_target(const QueryProductRecord& record, double eps) {
  if (record.soft_label) return *record.soft_label;
  if (record.label) return smooth_labels(*record.label, eps);
  throw ArgumentError(fmt::format("record (query_id={}, product_id={}) has no label",
                                  record.query_id, record.product_id));
}

std::vector<TokenizedInput> encode_inputs(const Dataset& data, const TokenizerConfig& cfg) {
  std::vector<TokenizedInput> out;
  out.reserve(data.size());
  for (const auto& r : data) out.push_back(tokenize(build_input(r), cfg));
  return out;
}

std::vector<Example> encode_examples(const Dataset& data, const TokenizerConfig& cfg,
                                     double label_smoothing) {
  std::vector<Example> out;
  out.reserve(data.size());
  for (const auto& r : data) {
    out.push_back({tokenize(build_input(r), cfg), training_target(r, label_smoothing)});
  }
  return out;
}

double frobenius_norm(std::span<const Matrix> matrices) {
  double s = 0.0;
  for (const auto& m : matrices) s += squared_norm(m.data);
  return std::sqrt(s);
}

std::vector<Matrix> normalized_perturbation(std::span<const Matrix> gradients, double eps) {
  const double norm = frobenius_norm(gradients);
  if (!(norm >= kMinGradientNorm)) return {};
  std::vector<Matrix> out(gradients.begin(), gradients.end());
  const double f = eps / norm;
  for (auto& m : out) {
    for (double& v : m.data) v *= f;
  }
  return out;
}

AdversarialStep fgm_step(const ModelParams& params, std::span<const Example> batch,
                         std::span<const Matrix> embedding_grads, double epsilon, double scale,
                         Rng& rng, ModelParams& grads) {
  if (embedding_grads.size() != batch.size()) {
    throw ShapeError(fmt::format("fgm_step: {} embedding gradients for {} examples",
                                 embedding_grads.size(), batch.size()));
  }
  AdversarialStep step;
  const auto deltas = normalized_perturbation(embedding_grads, epsilon);
  if (deltas.empty()) return step;
  step.applied = true;
  step.embedding_delta_norm = frobenius_norm(deltas);
  step.loss_sum = perturbed_pass(params, batch, deltas, scale, rng, grads);
  return step;
}

AdversarialStep awp_step(ModelParams& params,
                         std::span<const std::span<const Example>> micro_batches,
                         const ModelParams& clean_grads,
                         std::span<const std::vector<Matrix>> embedding_grads, double gamma,
                         double running_loss, double loss_gate, double scale, Rng& rng,
                         ModelParams& adv_grads) {
  AdversarialStep step;
  if (!(running_loss < loss_gate)) return step;
  if (embedding_grads.size() != micro_batches.size()) {
    throw ShapeError(fmt::format("awp_step: {} embedding gradient sets for {} micro-batches",
                                 embedding_grads.size(), micro_batches.size()));
  }

  auto weights = params.tensors();
  const auto grads = clean_grads.tensors();
  if (weights.size() != grads.size()) throw ShapeError("awp_step: gradient shape mismatch");
  std::vector<std::vector<double>> backup(weights.size());
  for (std::size_t t = 0; t < weights.size(); ++t) {
    if (weights[t].is_embedding) continue;
    if (weights[t].values.size() != grads[t].values.size()) {
      throw ShapeError(fmt::format("awp_step: gradient for '{}' has the wrong size",
                                   weights[t].name));
    }
    backup[t].assign(weights[t].values.begin(), weights[t].values.end());
    const double w_norm = std::sqrt(squared_norm(weights[t].values));
    const double g_norm = std::sqrt(squared_norm(grads[t].values));
    if (w_norm == 0.0 || g_norm < kMinGradientNorm) {
      step.weight_relative_norms.push_back(0.0);
      continue;
    }
    const double f = gamma * w_norm / g_norm;
    double delta_sq = 0.0;
    for (std::size_t k = 0; k < weights[t].values.size(); ++k) {
      const double d = f * grads[t].values[k];
      weights[t].values[k] += d;
      delta_sq += d * d;
    }
    step.weight_relative_norms.push_back(std::sqrt(delta_sq) / w_norm);
  }

  const auto restore = [&] {
    for (std::size_t t = 0; t < weights.size(); ++t) {
      if (!weights[t].is_embedding) {
        std::copy(backup[t].begin(), backup[t].end(), weights[t].values.begin());
      }
    }
  };

  step.applied = true;
  double delta_sq = 0.0;
  try {
    for (std::size_t b = 0; b < micro_batches.size(); ++b) {
      const auto batch = micro_batches[b];
      double e_sq = 0.0;
      for (const auto& ex : batch) e_sq += embedding_output_squared_norm(params, ex.input);
      const auto deltas =
          normalized_perturbation(embedding_grads[b], gamma * std::sqrt(e_sq));
      for (const auto& d : deltas) delta_sq += squared_norm(d.data);
      step.loss_sum += perturbed_pass(params, batch, deltas, scale, rng, adv_grads);
    }
  } catch (...) {
    restore();
    throw;
  }
  restore();
  step.embedding_delta_norm = std::sqrt(delta_sq);
  return step;
}

void RunningMean::add(double v) {
  values_.push_back(v);
  if (values_.size() > window_) values_.pop_front();
}

double RunningMean::mean() const {
  if (values_.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double v : values_) s += v;
  return s / static_cast<double>(values_.size());
}

Trainer::Trainer(ModelParams params, const TrainConfig& cfg)
    : cfg_(cfg),
      params_(std::move(params)),
      grads_(ModelParams::zeros_like(params_)),
      adv_grads_(ModelParams::zeros_like(params_)),
      m_(ModelParams::zeros_like(params_)),
      v_(ModelParams::zeros_like(params_)),
      rng_(mix_seed(cfg.seed, 1)) {
  cfg_.validate();
}

UpdateStats Trainer::update(std::span<const std::span<const Example>> micro_batches) {
  UpdateStats stats;
  for (const auto& b : micro_batches) stats.examples += b.size();
  if (stats.examples == 0) throw ArgumentError("update: empty logical batch");
  const double scale = 1.0 / static_cast<double>(stats.examples);
  const double unscale = static_cast<double>(stats.examples);

  touched_.clear();
  for (const auto& b : micro_batches) {
    for (const auto& ex : b) {
      const auto n = std::min(ex.input.attention_len, ex.input.ids.size());
      touched_.insert(touched_.end(), ex.input.ids.begin(), ex.input.ids.begin() + n);
    }
  }
  std::sort(touched_.begin(), touched_.end());
  touched_.erase(std::unique(touched_.begin(), touched_.end()), touched_.end());

  const bool keep_embedding_grads = cfg_.adversary != Adversary::kNone;
  std::vector<std::vector<Matrix>> embedding_grads(micro_batches.size());
  for (std::size_t b = 0; b < micro_batches.size(); ++b) {
    const auto batch = micro_batches[b];
    auto& eg = embedding_grads[b];
    for (const auto& ex : batch) {
      const auto cache = forward(params_, ex.input, Mode::kTrain, &rng_);
      stats.loss_sum += cross_entropy(cache.probs, ex.target);
      Matrix g = backward(params_, cache, ex.target, scale, grads_);
      if (keep_embedding_grads) {
        for (double& v : g.data) v *= unscale;
        eg.push_back(std::move(g));
      }
    }
    check_finite(stats.loss_sum, fmt::format("at update {}", step_ + 1));
    if (cfg_.adversary == Adversary::kFgm) {
      const auto adv = fgm_step(params_, batch, eg, cfg_.fgm_epsilon, scale, rng_, grads_);
      if (adv.applied) {
        check_finite(adv.loss_sum, fmt::format("in FGM pass at update {}", step_ + 1));
        stats.adversarial = true;
      } else {
        stats.skipped_zero_gradient = true;
      }
    }
  }

  const ModelParams* apply = &grads_;
  if (cfg_.adversary == Adversary::kAwp && !running_loss_.empty()) {
    const auto adv = awp_step(params_, micro_batches, grads_, embedding_grads, cfg_.awp_gamma,
                              running_loss_.mean(), cfg_.awp_loss_gate, scale, rng_, adv_grads_);
    if (adv.applied) {
      check_finite(adv.loss_sum, fmt::format("in AWP pass at update {}", step_ + 1));
      stats.adversarial = true;
      apply = &adv_grads_;
    }
  }
  running_loss_.add(stats.loss_sum / unscale);

  if (stats.adversarial) ++adversarial_steps_;
  if (stats.skipped_zero_gradient) ++skipped_steps_;
  apply_adam(*apply);
  clear_gradients(grads_);
  clear_gradients(adv_grads_);
  return stats;
}

// Gradients only ever reach the embedding rows of the current batch, so
// clearing those rows restores an all-zero accumulator.
void Trainer::clear_gradients(ModelParams& grads) const {
  for (auto& t : grads.tensors()) {
    if (!t.is_embedding) std::fill(t.values.begin(), t.values.end(), 0.0);
  }
  for (TokenId id : touched_) {
    if (id >= grads.embedding.rows) continue;
    auto row = grads.embedding.row(id);
    std::fill(row.begin(), row.end(), 0.0);
  }
}

void Trainer::apply_adam(const ModelParams& grads) {
  ++step_;
  const double t = static_cast<double>(step_);
  const double c1 = 1.0 - std::pow(kAdamBeta1, t);
  const double c2 = 1.0 - std::pow(kAdamBeta2, t);
  const double lr = cfg_.learning_rate;
  auto p = params_.tensors();
  auto m = m_.tensors();
  auto v = v_.tensors();
  const auto g = grads.tensors();
  const auto step = [&](std::size_t i, std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) {
      const double gk = g[i].values[k];
      double& mk = m[i].values[k];
      double& vk = v[i].values[k];
      mk = kAdamBeta1 * mk + (1.0 - kAdamBeta1) * gk;
      vk = kAdamBeta2 * vk + (1.0 - kAdamBeta2) * gk * gk;
      p[i].values[k] -= lr * (mk / c1) / (std::sqrt(vk / c2) + kAdamEpsilon);
    }
  };
  const std::size_t dim = params_.embedding.cols;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!p[i].is_embedding) {
      step(i, 0, p[i].values.size());
      continue;
    }
    for (TokenId id : touched_) step(i, id * dim, (id + 1) * dim);
  }
}

std::string format_metrics(const TrainReport& report) {
  std::string out = "epoch\tloss\tval_ndcg\tadv_steps\n";
  for (const auto& e : report.epochs) {
    out += fmt::format("{}\t{}\t{}\t{}\n", e.epoch, format_double(e.loss),
                       format_double(e.val_ndcg), e.adv_steps);
  }
  return out;
}

TrainResult train(const Dataset& train_data, const Dataset& val_data, const TrainConfig& cfg,
                  const ModelConfig& model_cfg, const TokenizerConfig& tok_cfg,
                  const GainVector& gains) {
  const auto start = Clock::now();
  cfg.validate();
  model_cfg.validate();
  tok_cfg.validate();
  gains.validate();
  if (tok_cfg.vocab_size != model_cfg.vocab_size) {
    throw ConfigError(fmt::format("tokenizer vocab_size {} differs from model vocab_size {}",
                                  tok_cfg.vocab_size, model_cfg.vocab_size));
  }
  if (train_data.empty()) throw ArgumentError("train: training dataset is empty");
  if (val_data.empty()) throw ArgumentError("train: validation dataset is empty");

  const auto examples = encode_examples(train_data, tok_cfg, cfg.label_smoothing);
  const auto val_inputs = encode_inputs(val_data, tok_cfg);
  const QueryGroups val_groups(val_data);

  Trainer trainer(init_params(model_cfg), cfg);
  TrainReport report;
  const std::size_t logical = cfg.batch_size * cfg.grad_accum_steps;
  std::vector<std::size_t> order(examples.size());
  std::vector<Example> buffer;
  std::vector<std::span<const Example>> micro;
  std::vector<double> scores(val_data.size());

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto epoch_start = Clock::now();
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(mix_seed(cfg.seed, 1000 + epoch));
    shuffle_rng.shuffle(std::span<std::size_t>(order));

    const std::size_t adv_before = trainer.adversarial_steps();
    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += logical) {
      const std::size_t end = std::min(order.size(), begin + logical);
      buffer.clear();
      for (std::size_t i = begin; i < end; ++i) buffer.push_back(examples[order[i]]);
      micro.clear();
      for (std::size_t b = 0; b < buffer.size(); b += cfg.batch_size) {
        const std::size_t len = std::min(cfg.batch_size, buffer.size() - b);
        micro.emplace_back(buffer.data() + b, len);
      }
      const auto stats = trainer.update(micro);
      loss_sum += stats.loss_sum;
      check_finite(loss_sum, fmt::format("in epoch {}", epoch));
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.loss = loss_sum / static_cast<double>(examples.size());
    const auto probs = predict_proba(trainer.params(), val_inputs);
    for (std::size_t i = 0; i < probs.size(); ++i) scores[i] = score(probs[i], gains);
    m.val_ndcg = val_groups.mean_ndcg(scores, gains);
    m.adv_steps = trainer.adversarial_steps() - adv_before;
    m.seconds = seconds_since(epoch_start);
    report.epochs.push_back(m);
  }
  report.wall_seconds = seconds_since(start);
  return {trainer.release(), std::move(report)};
}

std::vector<std::size_t> assign_folds(const Dataset& data, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ArgumentError("assign_folds: need at least 2 folds");
  auto ids = query_ids(data);
  if (ids.size() < k) {
    throw ArgumentError(
        fmt::format("assign_folds: {} distinct query ids for {} folds", ids.size(), k));
  }
  Rng rng(mix_seed(seed, 2));
  rng.shuffle(std::span<std::string>(ids));
  std::map<std::string_view, std::size_t> fold_of;
  for (std::size_t i = 0; i < ids.size(); ++i) fold_of.emplace(ids[i], i % k);
  std::vector<std::size_t> out;
  out.reserve(data.size());
  for (const auto& r : data) out.push_back(fold_of.at(r.query_id));
  return out;
}

BagResult kfold_bag(const Dataset& data, const TrainConfig& cfg, const ModelConfig& model_cfg,
                    const TokenizerConfig& tok_cfg, const GainVector& gains) {
  cfg.validate();
  BagResult result;
  result.fold_of_record = assign_folds(data, cfg.folds, cfg.seed);
  result.oof_probs.assign(data.size(), std::nullopt);
  for (std::size_t fold = 0; fold < cfg.folds_trained; ++fold) {
    Dataset train_part;
    Dataset held_out;
    std::vector<std::size_t> held_index;
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (result.fold_of_record[i] == fold) {
        held_out.push_back(data[i]);
        held_index.push_back(i);
      } else {
        train_part.push_back(data[i]);
      }
    }
    TrainConfig fold_cfg = cfg;
    fold_cfg.seed = cfg.seed + fold;
    auto trained = train(train_part, held_out, fold_cfg, seeded(model_cfg, fold), tok_cfg, gains);
    const auto probs = predict_proba(trained.params, encode_inputs(held_out, tok_cfg));
    for (std::size_t j = 0; j < held_index.size(); ++j) result.oof_probs[held_index[j]] = probs[j];
    result.models.push_back(std::move(trained.params));
    result.reports.push_back(std::move(trained.report));
  }
  return result;
}

LabelVector distill_merge(EsciLabel hard, const LabelVector& predicted, double hard_weight) {
  const LabelVector one_hot = LabelVector::one_hot(hard);
  LabelVector out;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    out[c] = hard_weight * one_hot[c] + (1.0 - hard_weight) * predicted[c];
  }
  return out;
}

Dataset self_distill(const Dataset& data, const TrainConfig& cfg, const ModelConfig& model_cfg,
                     const TokenizerConfig& tok_cfg, const GainVector& gains) {
  Dataset hard = data;
  for (auto& r : hard) {
    if (!r.label) {
      throw ArgumentError(fmt::format(
          "self_distill: record (query_id={}, product_id={}) has no hard label", r.query_id,
          r.product_id));
    }
    r.soft_label.reset();
  }
  TrainConfig bag_cfg = cfg;
  bag_cfg.folds_trained = cfg.folds;
  const auto bag = kfold_bag(hard, bag_cfg, model_cfg, tok_cfg, gains);
  for (std::size_t i = 0; i < hard.size(); ++i) {
    hard[i].soft_label = distill_merge(*hard[i].label, *bag.oof_probs[i], cfg.distill_hard_weight);
  }
  return hard;
}

Dataset select_pseudo_labels(const Dataset& unlabeled, std::span<const LabelVector> averaged,
                             double threshold) {
  if (averaged.size() != unlabeled.size()) {
    throw AlignmentError(fmt::format("{} records but {} probability vectors", unlabeled.size(),
                                     averaged.size()));
  }
  Dataset out;
  for (std::size_t i = 0; i < unlabeled.size(); ++i) {
    if (averaged[i].max() > threshold) {
      QueryProductRecord r = unlabeled[i];
      r.soft_label = averaged[i];
      out.push_back(std::move(r));
    }
  }
  return out;
}

Dataset pseudo_label(std::span<const ModelParams> models, const Dataset& unlabeled,
                     double threshold, const TokenizerConfig& tok_cfg) {
  if (models.empty()) throw ArgumentError("pseudo_label: no models given");
  for (const auto& r : unlabeled) {
    if (r.label) {
      throw ArgumentError(fmt::format(
          "pseudo_label: record (query_id={}, product_id={}) already has a label", r.query_id,
          r.product_id));
    }
  }
  const auto inputs = encode_inputs(unlabeled, tok_cfg);
  std::vector<LabelVector> sum(unlabeled.size(), LabelVector{});
  for (const auto& model : models) {
    const auto probs = predict_proba(model, inputs);
    for (std::size_t i = 0; i < probs.size(); ++i) {
      for (std::size_t c = 0; c < kNumClasses; ++c) sum[i][c] += probs[i][c];
    }
  }
  const double inv = 1.0 / static_cast<double>(models.size());
  for (auto& v : sum) {
    for (std::size_t c = 0; c < kNumClasses; ++c) v[c] *= inv;
  }
  return select_pseudo_labels(unlabeled, sum, threshold);
}

}  // namespace esci
