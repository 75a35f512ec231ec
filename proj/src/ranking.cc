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

#include "esci/ranking.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include <fmt/format.h>

#include "esci/error.h"
#include "esci/io.h"

namespace esci {
namespace {

using Key = std::pair<std::string, std::string>;

std::map<std::string, std::vector<const Prediction*>> group_by_query(
    const PredictionSet& predictions) {
  std::map<std::string, std::vector<const Prediction*>> groups;
  for (const auto& p : predictions) groups[p.query_id].push_back(&p);
  return groups;
}

std::string describe_keys(const std::vector<Key>& keys) {
  std::string out;
  const std::size_t shown = std::min<std::size_t>(keys.size(), 5);
  for (std::size_t i = 0; i < shown; ++i) {
    if (i > 0) out += ", ";
    out += fmt::format("({}, {})", keys[i].first, keys[i].second);
  }
  if (keys.size() > shown) out += fmt::format(" and {} more", keys.size() - shown);
  return out;
}

}  // namespace

void GainVector::validate() const {
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    if (!std::isfinite(gains[c])) throw ConfigError("gain vector must be finite");
    if (c > 0 && gains[c] > gains[c - 1]) {
      throw ConfigError(fmt::format("gain vector must be non-increasing in E, S, C, I order; got "
                                    "({}, {}, {}, {})",
                                    gains[0], gains[1], gains[2], gains[3]));
    }
  }
}

double score(const LabelVector& p, const GainVector& g) {
  double s = 0.0;
  for (std::size_t c = 0; c < kNumClasses; ++c) s += p[c] * g[c];
  return s;
}

PredictionSet make_predictions(const Dataset& records, std::span<const LabelVector> probs,
                               const GainVector& g) {
  if (records.size() != probs.size()) {
    throw AlignmentError(fmt::format("{} records but {} probability vectors", records.size(),
                                     probs.size()));
  }
  PredictionSet out;
  out.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    out.push_back({records[i].query_id, records[i].product_id, probs[i], score(probs[i], g)});
  }
  return out;
}

void rescore(PredictionSet& predictions, const GainVector& g) {
  for (auto& p : predictions) p.score = score(p.probs, g);
}

void validate_predictions(const PredictionSet& predictions) {
  std::set<std::pair<std::string_view, std::string_view>> seen;
  for (const auto& p : predictions) {
    if (p.query_id.empty() || p.product_id.empty()) {
      throw AlignmentError("prediction with an empty query_id or product_id");
    }
    if (!seen.emplace(p.query_id, p.product_id).second) {
      throw AlignmentError(fmt::format("duplicate prediction (query_id={}, product_id={})",
                                       p.query_id, p.product_id));
    }
  }
}

std::vector<std::string> rank_query(std::span<const Prediction> entries) {
  std::vector<const Prediction*> order;
  order.reserve(entries.size());
  for (const auto& e : entries) order.push_back(&e);
  std::sort(order.begin(), order.end(), [](const Prediction* a, const Prediction* b) {
    if (a->score != b->score) return a->score > b->score;
    return a->product_id < b->product_id;
  });
  std::vector<std::string> ids;
  ids.reserve(order.size());
  for (const auto* p : order) ids.push_back(p->product_id);
  return ids;
}

double ndcg_query(std::span<const EsciLabel> ranked, const GainVector& g) {
  std::vector<double> gains;
  gains.reserve(ranked.size());
  for (EsciLabel l : ranked) gains.push_back(g.of(l));
  const auto dcg = [](const std::vector<double>& values) {
    double total = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      total += values[i] / std::log2(static_cast<double>(i) + 2.0);
    }
    return total;
  };
  const double actual = dcg(gains);
  std::sort(gains.begin(), gains.end(), std::greater<>());
  const double ideal = dcg(gains);
  if (ideal <= 0.0) return 1.0;
  return actual / ideal;
}

EvaluationReport evaluate(const PredictionSet& predictions, const Dataset& truth,
                          const GainVector& g) {
  validate_predictions(predictions);
  std::map<Key, EsciLabel> labels;
  for (const auto& r : truth) {
    if (!r.label) {
      throw AlignmentError(fmt::format("truth record (query_id={}, product_id={}) has no label",
                                       r.query_id, r.product_id));
    }
    labels.emplace(Key{r.query_id, r.product_id}, *r.label);
  }
  std::vector<Key> extra;
  std::set<Key> predicted;
  for (const auto& p : predictions) {
    Key key{p.query_id, p.product_id};
    if (!labels.count(key)) extra.push_back(key);
    predicted.insert(std::move(key));
  }
  std::vector<Key> missing;
  for (const auto& [key, label] : labels) {
    if (!predicted.count(key)) missing.push_back(key);
  }
  if (!extra.empty() || !missing.empty()) {
    std::string msg;
    if (!extra.empty()) msg += fmt::format("predictions without truth: {}", describe_keys(extra));
    if (!missing.empty()) {
      if (!msg.empty()) msg += "; ";
      msg += fmt::format("truth pairs without predictions: {}", describe_keys(missing));
    }
    throw AlignmentError(msg);
  }

  EvaluationReport report;
  double total = 0.0;
  for (const auto& [query_id, group] : group_by_query(predictions)) {
    std::vector<Prediction> entries;
    entries.reserve(group.size());
    for (const auto* p : group) entries.push_back(*p);
    std::vector<EsciLabel> ranked_labels;
    for (const auto& pid : rank_query(entries)) ranked_labels.push_back(labels.at({query_id, pid}));
    const double ndcg = ndcg_query(ranked_labels, g);
    report.per_query.push_back({query_id, group.size(), ndcg});
    total += ndcg;
  }
  report.mean_ndcg =
      report.per_query.empty() ? 0.0 : total / static_cast<double>(report.per_query.size());
  return report;
}

QueryGroups::QueryGroups(const Dataset& truth) {
  std::map<std::string_view, std::vector<std::size_t>> by_query;
  labels_.reserve(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (!truth[i].label) {
      throw AlignmentError(fmt::format("truth record (query_id={}, product_id={}) has no label",
                                       truth[i].query_id, truth[i].product_id));
    }
    labels_.push_back(*truth[i].label);
    by_query[truth[i].query_id].push_back(i);
  }
  for (auto& [query_id, members] : by_query) {
    std::sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
      return truth[a].product_id < truth[b].product_id;
    });
    groups_.push_back(std::move(members));
  }
}

double QueryGroups::mean_ndcg(std::span<const double> scores, const GainVector& g) const {
  if (scores.size() != labels_.size()) {
    throw AlignmentError(
        fmt::format("{} scores for {} labeled pairs", scores.size(), labels_.size()));
  }
  if (groups_.empty()) return 0.0;
  double total = 0.0;
  std::vector<std::size_t> order;
  std::vector<EsciLabel> ranked;
  for (const auto& members : groups_) {
    order = members;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    ranked.clear();
    for (std::size_t i : order) ranked.push_back(labels_[i]);
    total += ndcg_query(ranked, g);
  }
  return total / static_cast<double>(groups_.size());
}

std::string format_predictions(const PredictionSet& predictions) {
  std::string out = "query_id\tproduct_id\tp_e\tp_s\tp_c\tp_i\tscore\n";
  for (const auto& p : predictions) {
    out += fmt::format("{}\t{}\t{}\t{}\t{}\t{}\t{}\n", p.query_id, p.product_id,
                       format_double(p.probs[0]), format_double(p.probs[1]),
                       format_double(p.probs[2]), format_double(p.probs[3]),
                       format_double(p.score));
  }
  return out;
}

PredictionSet parse_predictions(std::string_view contents, std::string_view source_name) {
  const auto lines = split_lines(contents);
  if (lines.empty() || lines[0] != "query_id\tproduct_id\tp_e\tp_s\tp_c\tp_i\tscore") {
    throw ParseError(fmt::format("{}:1: expected predictions header", source_name));
  }
  PredictionSet out;
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    if (lines[ln].empty()) continue;
    const auto fields = split(lines[ln], '\t');
    if (fields.size() != 7) {
      throw ParseError(fmt::format("{}:{}: expected 7 fields, got {}", source_name, ln + 1,
                                   fields.size()));
    }
    Prediction p;
    p.query_id = fields[0];
    p.product_id = fields[1];
    const std::string where = fmt::format("{}:{}", source_name, ln + 1);
    for (std::size_t c = 0; c < kNumClasses; ++c) p.probs[c] = parse_double(fields[2 + c], where);
    p.score = parse_double(fields[6], where);
    if (!p.probs.is_valid(1e-6)) {
      throw ParseError(fmt::format("{}: probabilities do not form a distribution", where));
    }
    out.push_back(std::move(p));
  }
  validate_predictions(out);
  return out;
}

void save_predictions(const PredictionSet& predictions, const std::filesystem::path& path) {
  write_file(path, format_predictions(predictions));
}

PredictionSet load_predictions(const std::filesystem::path& path) {
  return parse_predictions(read_file(path), path.string());
}

std::string format_submission(const PredictionSet& predictions) {
  std::string out = "query_id\tproduct_id\n";
  for (const auto& [query_id, group] : group_by_query(predictions)) {
    std::vector<Prediction> entries;
    for (const auto* p : group) entries.push_back(*p);
    for (const auto& pid : rank_query(entries)) out += fmt::format("{}\t{}\n", query_id, pid);
  }
  return out;
}

std::string format_evaluation(const EvaluationReport& report) {
  std::string out = "query_id\tnum_products\tndcg\n";
  for (const auto& q : report.per_query) {
    out += fmt::format("{}\t{}\t{}\n", q.query_id, q.num_products, format_double(q.ndcg));
  }
  out += fmt::format("mean_ndcg\t{}\t{}\n", report.per_query.size(),
                     format_double(report.mean_ndcg));
  return out;
}

}  // namespace esci
