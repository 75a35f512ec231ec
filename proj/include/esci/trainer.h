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

#ifndef ESCI_TRAINER_H_
#define ESCI_TRAINER_H_

#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "esci/dataset.h"
#include "esci/labels.h"
#include "esci/model.h"
#include "esci/ranking.h"
#include "esci/rng.h"
#include "esci/tokenizer.h"

namespace esci {

enum class Adversary { kNone, kFgm, kAwp };

std::string_view adversary_name(Adversary a);
std::optional<Adversary> parse_adversary(std::string_view s);

struct TrainConfig {
  std::size_t epochs = 4;
  std::size_t batch_size = 64;
  double learning_rate = 3e-3;
  std::size_t grad_accum_steps = 8;
  double label_smoothing = 0.1;
  double fgm_epsilon = 0.1;
  double awp_gamma = 0.01;
  double awp_loss_gate = 0.6;
  Adversary adversary = Adversary::kNone;
  double distill_hard_weight = 0.7;
  double pseudo_threshold = 0.7;
  std::size_t folds = 3;
  std::size_t folds_trained = 3;
  std::uint64_t seed = 0;

  // Throws ConfigError.
  void validate() const;
};

// Adam moments and the AWP loss window.
inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEpsilon = 1e-8;
inline constexpr std::size_t kAwpLossWindow = 100;
// Perturbations are skipped when the gradient norm is below this.
inline constexpr double kMinGradientNorm = 1e-12;

// (1 - eps) * target + eps * uniform.
LabelVector smooth_labels(const LabelVector& target, double eps);
LabelVector smooth_labels(EsciLabel target, double eps);

// Training loss for one example: cross-entropy against the target.
double loss(const LabelVector& probs, const LabelVector& target);

// A tokenized example with the target it is trained against.
struct Example {
  TokenizedInput input;
  LabelVector target;
};

// Soft labels are used as they are; hard labels are smoothed with eps.
// Throws ArgumentError for a record with neither.
LabelVector training_target(const QueryProductRecord& record, double eps);

std::vector<TokenizedInput> encode_inputs(const Dataset& data, const TokenizerConfig& cfg);
std::vector<Example> encode_examples(const Dataset& data, const TokenizerConfig& cfg,
                                     double label_smoothing);

// eps * g / ||g|| with the norm taken over every matrix together. Returns an
// empty vector when ||g|| < kMinGradientNorm.
std::vector<Matrix> normalized_perturbation(std::span<const Matrix> gradients, double eps);

double frobenius_norm(std::span<const Matrix> matrices);

struct AdversarialStep {
  bool applied = false;
  double loss_sum = 0.0;  // perturbed loss summed over examples
  double embedding_delta_norm = 0.0;
  // ||delta_w|| / ||w|| per perturbed weight tensor (AWP only; 0 for w = 0).
  std::vector<double> weight_relative_norms;
};

// Fast gradient method on the embedding outputs of one micro-batch:
// perturbs them by eps * g_e / ||g_e|| (norm over the whole batch), runs
// forward/backward at the perturbed point and adds scale * gradients into
// `grads`. Parameters are not modified.
AdversarialStep fgm_step(const ModelParams& params, std::span<const Example> batch,
                         std::span<const Matrix> embedding_grads, double epsilon, double scale,
                         Rng& rng, ModelParams& grads);

// Adversarial weight perturbation for one update. No-op unless
// running_loss < loss_gate. Otherwise every non-embedding tensor w moves by
// gamma * ||w|| * g_w / ||g_w||, each micro-batch's embedding outputs move
// as in fgm_step with eps = gamma * ||E_batch||, and the gradients at that
// point (times scale) are written into `adv_grads`. `params` is restored bit
// for bit before returning.
AdversarialStep awp_step(ModelParams& params,
                         std::span<const std::span<const Example>> micro_batches,
                         const ModelParams& clean_grads,
                         std::span<const std::vector<Matrix>> embedding_grads, double gamma,
                         double running_loss, double loss_gate, double scale, Rng& rng,
                         ModelParams& adv_grads);

// Mean of the most recent `window` values.
class RunningMean {
 public:
  explicit RunningMean(std::size_t window) : window_(window) {}
  void add(double v);
  bool empty() const { return values_.empty(); }
  double mean() const;

 private:
  std::size_t window_;
  std::deque<double> values_;
};

struct UpdateStats {
  double loss_sum = 0.0;  // clean loss summed over the logical batch
  std::size_t examples = 0;
  bool adversarial = false;
  bool skipped_zero_gradient = false;
};

// Owns a parameter set plus optimizer state and performs one update per
// logical batch (gradient accumulation over micro-batches). Embedding rows
// are updated only when one of their ids occurs in the logical batch; their
// moments are left alone otherwise (sparse Adam). All other tensors get a
// dense Adam step.
class Trainer {
 public:
  Trainer(ModelParams params, const TrainConfig& cfg);

  UpdateStats update(std::span<const std::span<const Example>> micro_batches);

  const ModelParams& params() const { return params_; }
  ModelParams release() { return std::move(params_); }
  std::size_t updates() const { return step_; }
  std::size_t adversarial_steps() const { return adversarial_steps_; }
  std::size_t skipped_steps() const { return skipped_steps_; }
  const RunningMean& running_loss() const { return running_loss_; }

 private:
  void apply_adam(const ModelParams& grads);
  void clear_gradients(ModelParams& grads) const;

  TrainConfig cfg_;
  ModelParams params_;
  ModelParams grads_;
  ModelParams adv_grads_;
  ModelParams m_;
  ModelParams v_;
  Rng rng_;
  RunningMean running_loss_{kAwpLossWindow};
  std::size_t step_ = 0;
  std::size_t adversarial_steps_ = 0;
  std::size_t skipped_steps_ = 0;
  std::vector<TokenId> touched_;  // embedding rows of the current update
};

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;      // mean clean training loss
  double val_ndcg = 0.0;
  std::size_t adv_steps = 0;
  double seconds = 0.0;
};

struct TrainReport {
  std::vector<EpochMetrics> epochs;
  double wall_seconds = 0.0;
};

// Metrics file rows: epoch, loss, val_ndcg, adv_steps. Timing is left out so
// the file is reproducible.
std::string format_metrics(const TrainReport& report);

struct TrainResult {
  ModelParams params;
  TrainReport report;
};

// Mini-batch Adam with gradient accumulation. Loss is averaged over each
// logical batch (batch_size * grad_accum_steps examples). Deterministic given
// cfg.seed and model_cfg.seed.
TrainResult train(const Dataset& train_data, const Dataset& val_data, const TrainConfig& cfg,
                  const ModelConfig& model_cfg, const TokenizerConfig& tok_cfg,
                  const GainVector& gains = {});

// Fold index per record. Sorted query ids are shuffled with `seed` and
// dealt round-robin, so every product of a query shares a fold.
std::vector<std::size_t> assign_folds(const Dataset& data, std::size_t k, std::uint64_t seed);

struct BagResult {
  std::vector<ModelParams> models;         // one per trained fold
  std::vector<TrainReport> reports;
  std::vector<std::size_t> fold_of_record;
  // Out-of-fold probabilities, filled for records whose fold was trained.
  std::vector<std::optional<LabelVector>> oof_probs;
};

// Trains cfg.folds_trained models, model i on every fold except i and
// validated on fold i. Model i uses seeds cfg.seed + i and model_cfg.seed + i.
BagResult kfold_bag(const Dataset& data, const TrainConfig& cfg, const ModelConfig& model_cfg,
                    const TokenizerConfig& tok_cfg, const GainVector& gains = {});

// hard_weight * onehot(hard) + (1 - hard_weight) * predicted.
LabelVector distill_merge(EsciLabel hard, const LabelVector& predicted, double hard_weight);

// Fills soft_label for every record from out-of-fold predictions of a
// cfg.folds-fold bag. Throws ArgumentError for unlabeled records or fewer
// distinct queries than folds.
Dataset self_distill(const Dataset& data, const TrainConfig& cfg, const ModelConfig& model_cfg,
                     const TokenizerConfig& tok_cfg, const GainVector& gains = {});

// Averages model predictions and keeps records whose top probability
// exceeds `threshold`, with the averaged vector as soft label.
Dataset select_pseudo_labels(const Dataset& unlabeled, std::span<const LabelVector> averaged,
                             double threshold);
Dataset pseudo_label(std::span<const ModelParams> models, const Dataset& unlabeled,
                     double threshold, const TokenizerConfig& tok_cfg);

}  // namespace esci

#endif  // ESCI_TRAINER_H_
