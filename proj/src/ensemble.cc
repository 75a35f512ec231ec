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

#include "esci/ensemble.h"

#include <algorithm>
#include <cmath>
#include <map>

#include <fmt/format.h>

#include "esci/error.h"
#include "esci/io.h"

namespace esci {
namespace {

using Key = std::pair<std::string_view, std::string_view>;

std::map<Key, std::size_t> index_of(const PredictionSet& set) {
  std::map<Key, std::size_t> out;
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (!out.emplace(Key{set[i].query_id, set[i].product_id}, i).second) {
      throw AlignmentError(fmt::format("duplicate prediction (query_id={}, product_id={})",
                                       set[i].query_id, set[i].product_id));
    }
  }
  return out;
}

// For every set, the row index of each key in `reference` order.
std::vector<std::vector<std::size_t>> align(std::span<const PredictionSet> sets,
                                            std::span<const Key> reference) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t m = 0; m < sets.size(); ++m) {
    const auto idx = index_of(sets[m]);
    if (idx.size() != reference.size()) {
      throw AlignmentError(fmt::format("model {} has {} pairs, expected {}", m, idx.size(),
                                       reference.size()));
    }
    std::vector<std::size_t> rows;
    rows.reserve(reference.size());
    for (const auto& key : reference) {
      const auto it = idx.find(key);
      if (it == idx.end()) {
        throw AlignmentError(fmt::format("model {} lacks pair (query_id={}, product_id={})", m,
                                         key.first, key.second));
      }
      rows.push_back(it->second);
    }
    out.push_back(std::move(rows));
  }
  return out;
}

std::vector<Key> keys_of(const PredictionSet& set) {
  std::vector<Key> keys;
  keys.reserve(set.size());
  for (const auto& p : set) keys.emplace_back(p.query_id, p.product_id);
  return keys;
}

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

void normalize(EnsembleWeights& w) {
  double total = 0.0;
  for (double v : w) total += v;
  for (double& v : w) v /= total;
}

LabelVector mix(std::span<const LabelVector> probs, const EnsembleWeights& w) {
  LabelVector out{};
  for (std::size_t m = 0; m < probs.size(); ++m) {
    if (w[m] == 0.0) continue;
    for (std::size_t c = 0; c < kNumClasses; ++c) out[c] += w[m] * probs[m][c];
  }
  return out;
}

// Probabilities of every model aligned to the truth record order, stored
// pair-major so one pair's model vectors are contiguous.
class BlendEvaluator {
 public:
  BlendEvaluator(std::span<const PredictionSet> sets, const Dataset& truth, const GainVector& g)
      : groups_(truth), gains_(g), models_(sets.size()) {
    std::vector<Key> reference;
    reference.reserve(truth.size());
    for (const auto& r : truth) reference.emplace_back(r.query_id, r.product_id);
    const auto rows = align(sets, reference);
    probs_.resize(truth.size() * models_);
    for (std::size_t i = 0; i < truth.size(); ++i) {
      for (std::size_t m = 0; m < models_; ++m) probs_[i * models_ + m] = sets[m][rows[m][i]].probs;
    }
    scores_.resize(truth.size());
  }

  double ndcg(const EnsembleWeights& w) {
    for (std::size_t i = 0; i < scores_.size(); ++i) {
      scores_[i] = score(mix({probs_.data() + i * models_, models_}, w), gains_);
    }
    return groups_.mean_ndcg(scores_, gains_);
  }

 private:
  QueryGroups groups_;
  GainVector gains_;
  std::size_t models_;
  std::vector<LabelVector> probs_;
  std::vector<double> scores_;
};

struct Candidate {
  EnsembleWeights weights;
  double ndcg;
};

Candidate coordinate_ascent(BlendEvaluator& eval, EnsembleWeights start) {
  Candidate best{std::move(start), 0.0};
  best.ndcg = eval.ndcg(best.weights);
  for (double step : kSearchSteps) {
    for (std::size_t sweep = 0; sweep < kMaxSweeps; ++sweep) {
      bool improved = false;
      for (std::size_t m = 0; m < best.weights.size(); ++m) {
        for (double sign : {1.0, -1.0}) {
          EnsembleWeights trial = best.weights;
          trial[m] = std::max(0.0, trial[m] + sign * step);
          double total = 0.0;
          for (double v : trial) total += v;
          if (total <= 0.0) continue;
          normalize(trial);
          if (trial == best.weights) continue;
          const double value = eval.ndcg(trial);
          if (value > best.ndcg) {
            best = {std::move(trial), value};
            improved = true;
            break;
          }
        }
      }
      if (!improved) break;
    }
  }
  return best;
}

}  // namespace

void validate_weights(const EnsembleWeights& weights, std::size_t num_models) {
  if (weights.size() != num_models) {
    throw ArgumentError(
        fmt::format("{} weights given for {} models", weights.size(), num_models));
  }
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw ArgumentError(fmt::format("ensemble weight {} is not a non-negative number", w));
    }
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw ArgumentError(fmt::format("ensemble weights sum to {}, expected 1", total));
  }
}

double CorrelationReport::mean_off_diagonal(std::size_t m) const {
  if (matrix.size() < 2) return 0.0;
  double total = 0.0;
  for (std::size_t j = 0; j < matrix.size(); ++j) {
    if (j != m) total += matrix[m][j].value_or(0.0);
  }
  return total / static_cast<double>(matrix.size() - 1);
}

CorrelationReport correlations(std::span<const PredictionSet> sets) {
  if (sets.size() < 2) throw ArgumentError("correlations: need at least 2 models");
  const auto reference = keys_of(sets[0]);
  if (reference.size() < 2) throw ArgumentError("correlations: need at least 2 pairs");
  const auto rows = align(sets, reference);
  std::vector<std::vector<double>> scores(sets.size());
  for (std::size_t m = 0; m < sets.size(); ++m) {
    for (std::size_t i : rows[m]) scores[m].push_back(sets[m][i].score);
  }
  CorrelationReport report;
  report.matrix.assign(sets.size(), std::vector<std::optional<double>>(sets.size()));
  for (std::size_t a = 0; a < sets.size(); ++a) {
    for (std::size_t b = a; b < sets.size(); ++b) {
      auto r = pearson(scores[a], scores[b]);
      if (a == b && r) r = 1.0;
      report.matrix[a][b] = r;
      report.matrix[b][a] = r;
    }
  }
  return report;
}

PredictionSet blend(std::span<const PredictionSet> sets, const EnsembleWeights& weights,
                    const GainVector& g) {
  if (sets.empty()) throw ArgumentError("blend: no models given");
  validate_weights(weights, sets.size());
  const auto reference = keys_of(sets[0]);
  const auto rows = align(sets, reference);
  PredictionSet out;
  out.reserve(reference.size());
  std::vector<LabelVector> probs(sets.size());
  for (std::size_t i = 0; i < reference.size(); ++i) {
    for (std::size_t m = 0; m < sets.size(); ++m) probs[m] = sets[m][rows[m][i]].probs;
    Prediction p{sets[0][i].query_id, sets[0][i].product_id, mix(probs, weights), 0.0};
    p.score = score(p.probs, g);
    out.push_back(std::move(p));
  }
  return out;
}

EnsembleWeights initial_weights(std::span<const double> solo_ndcg,
                                const CorrelationReport& corr, double lambda) {
  if (solo_ndcg.empty()) throw ArgumentError("initial_weights: no models given");
  if (!(lambda >= 0.0)) throw ArgumentError("initial_weights: lambda must be non-negative");
  const double floor = *std::min_element(solo_ndcg.begin(), solo_ndcg.end());
  EnsembleWeights w(solo_ndcg.size());
  for (std::size_t m = 0; m < w.size(); ++m) {
    // Negative correlation counts as none.
    const double c = corr.size() == w.size() ? std::max(corr.mean_off_diagonal(m), 0.0) : 0.0;
    w[m] = std::max(solo_ndcg[m] - floor, kWeightFloor) / (1.0 + lambda * c);
  }
  normalize(w);
  return w;
}

WeightSearchResult optimize_weights(std::span<const PredictionSet> sets, const Dataset& truth,
                                    const GainVector& g, double lambda) {
  if (sets.empty()) throw ArgumentError("optimize_weights: no models given");
  g.validate();
  BlendEvaluator eval(sets, truth, g);
  const std::size_t n = sets.size();

  WeightSearchResult result;
  for (std::size_t m = 0; m < n; ++m) {
    EnsembleWeights one_hot(n, 0.0);
    one_hot[m] = 1.0;
    result.solo_ndcg.push_back(eval.ndcg(one_hot));
  }
  if (n == 1) {
    result.weights = {1.0};
    result.initial = {1.0};
    result.ndcg = result.solo_ndcg[0];
    return result;
  }

  std::vector<PredictionSet> rescored(sets.begin(), sets.end());
  for (auto& s : rescored) rescore(s, g);
  result.correlation = correlations(rescored);
  result.initial = initial_weights(result.solo_ndcg, result.correlation, lambda);

  Candidate best = coordinate_ascent(eval, result.initial);
  for (std::size_t m = 0; m < n; ++m) {
    EnsembleWeights one_hot(n, 0.0);
    one_hot[m] = 1.0;
    Candidate c = coordinate_ascent(eval, std::move(one_hot));
    if (c.ndcg > best.ndcg) best = std::move(c);
  }
  result.weights = std::move(best.weights);
  result.ndcg = best.ndcg;
  return result;
}

std::string format_weights(std::span<const std::string> names, const EnsembleWeights& weights) {
  if (names.size() != weights.size()) {
    throw ArgumentError(fmt::format("{} names for {} weights", names.size(), weights.size()));
  }
  std::string out = "model\tweight\n";
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i].find_first_of("\t\n") != std::string::npos) {
      throw ArgumentError(fmt::format("model name '{}' contains a tab or newline", names[i]));
    }
    out += fmt::format("{}\t{}\n", names[i], format_double(weights[i]));
  }
  return out;
}

std::pair<std::vector<std::string>, EnsembleWeights> parse_weights(std::string_view contents,
                                                                   std::string_view source_name) {
  const auto lines = split_lines(contents);
  if (lines.empty() || lines[0] != "model\tweight") {
    throw ParseError(fmt::format("{}:1: expected weights header", source_name));
  }
  std::vector<std::string> names;
  EnsembleWeights weights;
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    if (lines[ln].empty()) continue;
    const auto fields = split(lines[ln], '\t');
    const std::string where = fmt::format("{}:{}", source_name, ln + 1);
    if (fields.size() != 2) {
      throw ParseError(fmt::format("{}: expected 2 fields, got {}", where, fields.size()));
    }
    names.emplace_back(fields[0]);
    weights.push_back(parse_double(fields[1], where));
  }
  try {
    validate_weights(weights, weights.size());
  } catch (const ArgumentError& e) {
    throw ParseError(fmt::format("{}: {}", source_name, e.what()));
  }
  return {std::move(names), std::move(weights)};
}

}  // namespace esci
