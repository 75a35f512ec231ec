// Independent reference computations shared by the unit tests and the
// acceptance runner.

#ifndef ESCI_TESTS_ORACLES_H_
#define ESCI_TESTS_ORACLES_H_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "esci/labels.h"
#include "esci/model.h"
#include "esci/ranking.h"
#include "esci/rng.h"
#include "esci/tokenizer.h"

namespace esci::oracle {

inline double cross_entropy(const LabelVector& p, const LabelVector& t) {
  double s = 0.0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    if (t[c] != 0.0) s -= t[c] * std::log(p[c]);
  }
  return s;
}

// DCG with gains looked up per label and discount 1/log2(i + 2) for the
// zero-based position i.
inline double dcg(const std::vector<EsciLabel>& order, const GainVector& g) {
  double s = 0.0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    s += g.of(order[i]) / std::log2(static_cast<double>(i) + 2.0);
  }
  return s;
}

// Largest DCG over every permutation.
inline double best_dcg_by_enumeration(std::vector<EsciLabel> labels, const GainVector& g) {
  std::sort(labels.begin(), labels.end(),
            [](EsciLabel a, EsciLabel b) { return label_index(a) < label_index(b); });
  double best = 0.0;
  do {
    best = std::max(best, dcg(labels, g));
  } while (std::next_permutation(labels.begin(), labels.end(), [](EsciLabel a, EsciLabel b) {
    return label_index(a) < label_index(b);
  }));
  return best;
}

struct GradientCheck {
  double max_param_error = 0.0;
  double max_embedding_output_error = 0.0;
  std::size_t checked = 0;
};

inline double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

// Compares backward() against central differences over every parameter and
// every embedding output. Train mode replays the same dropout masks by
// reseeding the rng for each evaluation.
inline GradientCheck check_gradients(const ModelParams& params, const TokenizedInput& input,
                                     const LabelVector& target, Mode mode,
                                     std::uint64_t dropout_seed, double step = 1e-4) {
  const auto loss_at = [&](const ModelParams& p, const Matrix* delta) {
    Rng rng(dropout_seed);
    return oracle::cross_entropy(forward(p, input, mode, &rng, delta).probs, target);
  };
  Rng rng(dropout_seed);
  const ForwardCache cache = forward(params, input, mode, &rng);
  const Gradients grads = backward(params, cache, target);

  GradientCheck out;
  ModelParams probe = params;
  auto probe_tensors = probe.tensors();
  const auto grad_tensors = grads.params.tensors();
  for (std::size_t t = 0; t < probe_tensors.size(); ++t) {
    auto values = probe_tensors[t].values;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + step;
      const double up = loss_at(probe, nullptr);
      values[i] = saved - step;
      const double down = loss_at(probe, nullptr);
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      out.max_param_error =
          std::max(out.max_param_error, relative_error(grad_tensors[t].values[i], numeric));
      ++out.checked;
    }
  }

  Matrix delta(cache.embeddings.rows, cache.embeddings.cols);
  for (std::size_t i = 0; i < delta.data.size(); ++i) {
    delta.data[i] = step;
    const double up = loss_at(params, &delta);
    delta.data[i] = -step;
    const double down = loss_at(params, &delta);
    delta.data[i] = 0.0;
    const double numeric = (up - down) / (2.0 * step);
    out.max_embedding_output_error =
        std::max(out.max_embedding_output_error,
                 relative_error(grads.embedding_outputs.data[i], numeric));
    ++out.checked;
  }
  return out;
}

// A random input over `vocab` ids with `len` attended positions.
inline TokenizedInput random_input(std::size_t vocab, std::size_t len, std::size_t max_len,
                                   Rng& rng) {
  TokenizedInput in;
  in.ids.assign(max_len, 2);
  in.ids[0] = 0;
  for (std::size_t i = 1; i < len; ++i) in.ids[i] = static_cast<TokenId>(rng.below(vocab));
  in.attention_len = len;
  return in;
}

inline LabelVector random_distribution(Rng& rng) {
  LabelVector v;
  double total = 0.0;
  for (double& p : v.p) {
    p = rng.uniform(0.05, 1.0);
    total += p;
  }
  for (double& p : v.p) p /= total;
  return v;
}

// Random parameters at a point away from the initialization: every tensor,
// pool logits included, drawn from uniform(-scale, scale).
inline ModelParams random_params(const ModelConfig& cfg, double scale, Rng& rng) {
  ModelParams p = init_params(cfg);
  for (auto& t : p.tensors()) {
    for (double& v : t.values) v = rng.uniform(-scale, scale);
  }
  return p;
}

}  // namespace esci::oracle

#endif  // ESCI_TESTS_ORACLES_H_
