#ifndef ESCI_DATASET_H_
#define ESCI_DATASET_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "esci/labels.h"

namespace esci {

enum class Locale { kEn, kEs, kJp };

std::string_view locale_code(Locale l);
std::optional<Locale> parse_locale(std::string_view s);

// One query-product pair with every product field. `label` is absent for
// unlabeled data; `soft_label` is filled by distillation or pseudo-labeling.
struct QueryProductRecord {
  std::string query_id;
  std::string product_id;
  std::string query;
  std::string title;
  std::string description;
  std::string bullet_points;
  std::string brand;
  std::string color;
  Locale locale = Locale::kEn;
  std::optional<EsciLabel> label;
  std::optional<LabelVector> soft_label;

  friend bool operator==(const QueryProductRecord&, const QueryProductRecord&) = default;
};

using Dataset = std::vector<QueryProductRecord>;

// Throws ArgumentError on empty ids, duplicate (query_id, product_id) pairs
// or an invalid soft label.
void validate_dataset(const Dataset& data);

// Distinct query ids in ascending order.
std::vector<std::string> query_ids(const Dataset& data);

// Applies clean_text to every text field.
QueryProductRecord clean_record(QueryProductRecord record);

// Marks brand and color mentions inside each query using a lexicon built
// from the dataset's own brand and color columns.
Dataset mark_query_entities(Dataset data);

// "[CLS]query[SEP]color:<color> brand:<brand> description:<title> <bullets>
// <description>[SEP]"
std::string build_input(const QueryProductRecord& record);

// Translation backend. Returns nullopt when a text cannot be translated.
class Translator {
 public:
  virtual ~Translator() = default;
  virtual std::optional<std::string> translate(std::string_view text, Locale source,
                                               Locale target) const = 0;
};

class IdentityTranslator : public Translator {
 public:
  std::optional<std::string> translate(std::string_view text, Locale, Locale) const override {
    return std::string(text);
  }
};

// Word-by-word substitution from a per-locale-pair dictionary. Words not in
// the dictionary are kept as-is. Matching is case-insensitive on ASCII.
class DictionaryTranslator : public Translator {
 public:
  void add(Locale source, Locale target, std::string_view word, std::string_view translation);

  // Tab-separated rows: source_locale, target_locale, word, translation.
  static DictionaryTranslator load(const std::filesystem::path& path);

  std::optional<std::string> translate(std::string_view text, Locale source,
                                       Locale target) const override;

 private:
  std::map<std::tuple<Locale, Locale, std::string>, std::string> table_;
};

struct SkippedRecord {
  std::string query_id;
  std::string product_id;
  Locale target;
};

struct AugmentResult {
  Dataset records;
  std::vector<SkippedRecord> skipped;
};

// Appends one translated copy per (record, target locale != record locale).
// Copies get product_id "<id>#<locale>".
AugmentResult augment_translate(const Dataset& data, const Translator& translator,
                                const std::set<Locale>& target_locales);

// Label frequencies of the ESCI shopping queries training data.
inline constexpr LabelVector kDefaultLabelPriors{{0.6278, 0.2328, 0.0316, 0.1078}};

// Deterministic synthetic shopping data: queries with 2..16 products each,
// labels drawn from `label_priors`, and product text whose overlap with the
// query reflects the label.
Dataset generate_synthetic(std::size_t n, std::uint64_t seed,
                           const LabelVector& label_priors = kDefaultLabelPriors);

// Tab-separated files with a header row. See README for the column list.
Dataset load_dataset(const std::filesystem::path& path);
Dataset parse_dataset(std::string_view contents, std::string_view source_name = "<memory>");
void save_dataset(const Dataset& data, const std::filesystem::path& path);
std::string format_dataset(const Dataset& data);

// Splits records by query: queries whose position in a seeded shuffle of
// the sorted query ids falls in the last `holdout_fraction` go to `second`.
std::pair<Dataset, Dataset> split_by_query(const Dataset& data, double holdout_fraction,
                                           std::uint64_t seed);

}  // namespace esci

#endif  // ESCI_DATASET_H_
