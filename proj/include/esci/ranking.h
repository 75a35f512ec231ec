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

#ifndef ESCI_RANKING_H_
#define ESCI_RANKING_H_

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "esci/dataset.h"
#include "esci/labels.h"

namespace esci {

// Per-class relevance gain, ordered (E, S, C, I). Used both as the NDCG gain
// and as the weights that turn class probabilities into a ranking score.
struct GainVector {
  std::array<double, kNumClasses> gains = {1.0, 0.1, 0.01, 0.0};

  double operator[](std::size_t i) const { return gains[i]; }
  double of(EsciLabel l) const { return gains[label_index(l)]; }

  // Throws ConfigError unless finite and non-increasing E >= S >= C >= I.
  void validate() const;

  friend bool operator==(const GainVector&, const GainVector&) = default;
};

struct Prediction {
  std::string query_id;
  std::string product_id;
  LabelVector probs;
  double score = 0.0;

  friend bool operator==(const Prediction&, const Prediction&) = default;
};

using PredictionSet = std::vector<Prediction>;

// Expected gain: sum_c p_c * g_c.
double score(const LabelVector& p, const GainVector& g);

// Pairs each record with its probability vector and scores it.
PredictionSet make_predictions(const Dataset& records, std::span<const LabelVector> probs,
                               const GainVector& g);

void rescore(PredictionSet& predictions, const GainVector& g);

// Throws AlignmentError on an empty id or a repeated (query_id, product_id).
void validate_predictions(const PredictionSet& predictions);

// Product ids by descending score; equal scores fall back to ascending
// product id.
std::vector<std::string> rank_query(std::span<const Prediction> entries);

// DCG of the given order over DCG of the ideal order, with discount
// 1 / log2(position + 1). Returns 1 when the ideal DCG is zero.
double ndcg_query(std::span<const EsciLabel> ranked, const GainVector& g);

struct QueryNdcg {
  std::string query_id;
  std::size_t num_products = 0;
  double ndcg = 0.0;
};

struct EvaluationReport {
  double mean_ndcg = 0.0;
  std::vector<QueryNdcg> per_query;  // ascending query id
};

// Ranks every query by prediction score and averages NDCG over queries.
// Every prediction needs a labeled truth record and vice versa; otherwise
// AlignmentError lists the offending pairs.
EvaluationReport evaluate(const PredictionSet& predictions, const Dataset& truth,
                          const GainVector& g);

// Fixed layout of labeled pairs for repeated NDCG evaluation: the i-th
// score passed to mean_ndcg belongs to the i-th truth record. Ranking and
// tie-breaking match rank_query.
class QueryGroups {
 public:
  explicit QueryGroups(const Dataset& truth);

  double mean_ndcg(std::span<const double> scores, const GainVector& g) const;
  std::size_t num_queries() const { return groups_.size(); }
  std::size_t num_pairs() const { return labels_.size(); }

 private:
  std::vector<std::vector<std::size_t>> groups_;  // per query, by ascending product id
  std::vector<EsciLabel> labels_;
};

// Predictions file: query_id, product_id, p_e, p_s, p_c, p_i, score.
std::string format_predictions(const PredictionSet& predictions);
PredictionSet parse_predictions(std::string_view contents, std::string_view source_name);
void save_predictions(const PredictionSet& predictions, const std::filesystem::path& path);
PredictionSet load_predictions(const std::filesystem::path& path);

// Submission file: query_id, product_id; queries ascending, products in
// rank order.
std::string format_submission(const PredictionSet& predictions);

// Per-query NDCG rows followed by a "mean_ndcg" summary line.
std::string format_evaluation(const EvaluationReport& report);

}  // namespace esci

#endif  // ESCI_RANKING_H_
