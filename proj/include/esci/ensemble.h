#ifndef ESCI_ENSEMBLE_H_
#define ESCI_ENSEMBLE_H_

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "esci/dataset.h"
#include "esci/ranking.h"

namespace esci {

// Non-negative, summing to 1 within 1e-9.
using EnsembleWeights = std::vector<double>;

// Throws ArgumentError.
void validate_weights(const EnsembleWeights& weights, std::size_t num_models);

// Pearson correlation between models' score vectors. An entry is empty when
// either score vector has zero variance.
struct CorrelationReport {
  std::vector<std::vector<std::optional<double>>> matrix;

  std::size_t size() const { return matrix.size(); }
  // Mean of the defined off-diagonal entries in row m; undefined entries
  // count as 0.
  double mean_off_diagonal(std::size_t m) const;
};

// Needs at least 2 models sharing one (query_id, product_id) key set with at
// least 2 pairs. Throws ArgumentError or AlignmentError.
CorrelationReport correlations(std::span<const PredictionSet> sets);

// Weighted average of the probability vectors, rescored with `g`. Output
// rows follow the first set's order.
PredictionSet blend(std::span<const PredictionSet> sets, const EnsembleWeights& weights,
                    const GainVector& g = {});

inline constexpr double kDefaultCorrelationPenalty = 1.0;
inline constexpr double kWeightFloor = 1e-6;
inline constexpr double kSearchSteps[] = {0.05, 0.01};
inline constexpr std::size_t kMaxSweeps = 1000;

// w_m proportional to max(ndcg_m - min ndcg, kWeightFloor) / (1 + lambda * c_m)
// where c_m is the mean off-diagonal correlation of model m, clamped at 0.
EnsembleWeights initial_weights(std::span<const double> solo_ndcg,
                                const CorrelationReport& corr, double lambda);

struct WeightSearchResult {
  EnsembleWeights weights;
  double ndcg = 0.0;
  std::vector<double> solo_ndcg;
  EnsembleWeights initial;
  CorrelationReport correlation;
};

// Coordinate ascent on validation NDCG, started from initial_weights and
// from every one-hot vector; the best result wins (earliest on ties).
WeightSearchResult optimize_weights(std::span<const PredictionSet> sets, const Dataset& truth,
                                    const GainVector& g = {},
                                    double lambda = kDefaultCorrelationPenalty);

// Tab-separated "model\tweight" rows after a header.
std::string format_weights(std::span<const std::string> names, const EnsembleWeights& weights);
std::pair<std::vector<std::string>, EnsembleWeights> parse_weights(
    std::string_view contents, std::string_view source_name = "<memory>");

}  // namespace esci

#endif  // ESCI_ENSEMBLE_H_
