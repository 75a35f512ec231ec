#include "esci/dataset.h"

#include <algorithm>
#include <array>
#include <cmath>

#include <fmt/format.h>

#include "esci/error.h"
#include "esci/io.h"
#include "esci/rng.h"
#include "esci/text.h"

namespace esci {
namespace {

constexpr std::array<std::string_view, 14> kColumns = {
    "query_id",           "product_id",         "query",          "product_title",
    "product_description", "product_bullet_point", "product_brand", "product_color_name",
    "product_locale",     "esci_label",         "soft_e",         "soft_s",
    "soft_c",             "soft_i"};
constexpr std::size_t kRequiredColumns = 10;

}  // namespace

std::string_view locale_code(Locale l) {
  switch (l) {
    case Locale::kEn:
      return "en";
    case Locale::kEs:
      return "es";
    case Locale::kJp:
      return "jp";
  }
  return "?";
}

std::optional<Locale> parse_locale(std::string_view s) {
  if (s == "en" || s == "us") return Locale::kEn;
  if (s == "es") return Locale::kEs;
  if (s == "jp" || s == "ja") return Locale::kJp;
  return std::nullopt;
}

void validate_dataset(const Dataset& data) {
  std::set<std::pair<std::string_view, std::string_view>> seen;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& r = data[i];
    if (r.query_id.empty() || r.product_id.empty()) {
      throw ArgumentError(fmt::format("record {} has an empty query_id or product_id", i));
    }
    if (!seen.emplace(r.query_id, r.product_id).second) {
      throw ArgumentError(fmt::format("duplicate pair (query_id={}, product_id={})", r.query_id,
                                      r.product_id));
    }
    if (r.soft_label && !r.soft_label->is_valid()) {
      throw ArgumentError(fmt::format("invalid soft label for (query_id={}, product_id={})",
                                      r.query_id, r.product_id));
    }
  }
}

std::vector<std::string> query_ids(const Dataset& data) {
  std::set<std::string> ids;
  for (const auto& r : data) ids.insert(r.query_id);
  return {ids.begin(), ids.end()};
}

QueryProductRecord clean_record(QueryProductRecord record) {
  for (std::string* field : {&record.query, &record.title, &record.description,
                             &record.bullet_points, &record.brand, &record.color}) {
    *field = clean_text(*field);
  }
  return record;
}

Dataset mark_query_entities(Dataset data) {
  EntityLexicon lexicon;
  for (const auto& r : data) {
    lexicon.add(r.brand, "Brand");
    lexicon.add(r.color, "Color");
  }
  for (auto& r : data) {
    r.query = mark_entities(r.query, lexicon.find(r.query));
  }
  return data;
}

std::string build_input(const QueryProductRecord& r) {
  std::string out;
  out.reserve(48 + r.query.size() + r.color.size() + r.brand.size() + r.title.size() +
              r.bullet_points.size() + r.description.size());
  out += "[CLS]";
  out += r.query;
  out += "[SEP]color:";
  out += r.color;
  out += " brand:";
  out += r.brand;
  out += " description:";
  out += r.title;
  out += ' ';
  out += r.bullet_points;
  out += ' ';
  out += r.description;
  out += "[SEP]";
  return out;
}

void DictionaryTranslator::add(Locale source, Locale target, std::string_view word,
                               std::string_view translation) {
  table_[{source, target, ascii_lower(word)}] = std::string(translation);
}

DictionaryTranslator DictionaryTranslator::load(const std::filesystem::path& path) {
  DictionaryTranslator dict;
  const std::string contents = read_file(path);
  const auto lines = split_lines(contents);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty() || lines[i].front() == '#') continue;
    const auto fields = split(lines[i], '\t');
    const auto src = fields.size() == 4 ? parse_locale(fields[0]) : std::nullopt;
    const auto dst = fields.size() == 4 ? parse_locale(fields[1]) : std::nullopt;
    if (!src || !dst) {
      throw ParseError(fmt::format("{}:{}: expected source_locale, target_locale, word, "
                                   "translation",
                                   path.string(), i + 1));
    }
    dict.add(*src, *dst, fields[2], fields[3]);
  }
  return dict;
}

std::optional<std::string> DictionaryTranslator::translate(std::string_view text, Locale source,
                                                           Locale target) const {
  std::string out;
  for (std::string_view word : split(text, ' ')) {
    if (word.empty()) continue;
    if (!out.empty()) out.push_back(' ');
    const auto it = table_.find({source, target, ascii_lower(word)});
    out += it == table_.end() ? std::string(word) : it->second;
  }
  return out;
}

AugmentResult augment_translate(const Dataset& data, const Translator& translator,
                                const std::set<Locale>& target_locales) {
  AugmentResult result;
  result.records = data;
  for (const auto& r : data) {
    for (Locale target : target_locales) {
      if (target == r.locale) continue;
      QueryProductRecord copy = r;
      bool ok = true;
      for (std::string* field :
           {&copy.query, &copy.title, &copy.description, &copy.bullet_points}) {
        auto translated = translator.translate(*field, r.locale, target);
        if (!translated) {
          ok = false;
          break;
        }
        *field = std::move(*translated);
      }
      if (!ok) {
        result.skipped.push_back({r.query_id, r.product_id, target});
        continue;
      }
      copy.locale = target;
      copy.product_id = fmt::format("{}#{}", r.product_id, locale_code(target));
      result.records.push_back(std::move(copy));
    }
  }
  return result;
}

std::string format_dataset(const Dataset& data) {
  std::string out;
  for (std::size_t c = 0; c < kColumns.size(); ++c) {
    if (c > 0) out.push_back('\t');
    out += kColumns[c];
  }
  out.push_back('\n');
  for (const auto& r : data) {
    const std::array<const std::string*, 8> text_fields = {
        &r.query_id, &r.product_id, &r.query, &r.title, &r.description, &r.bullet_points,
        &r.brand,    &r.color};
    for (const std::string* f : text_fields) {
      if (f->find_first_of("\t\n\r") != std::string::npos) {
        throw ArgumentError(fmt::format(
            "record (query_id={}, product_id={}) contains a tab or newline; clean it first",
            r.query_id, r.product_id));
      }
      out += *f;
      out.push_back('\t');
    }
    out += locale_code(r.locale);
    out.push_back('\t');
    if (r.label) out += label_code(*r.label);
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      out.push_back('\t');
      if (r.soft_label) out += format_double((*r.soft_label)[c]);
    }
    out.push_back('\n');
  }
  return out;
}

void save_dataset(const Dataset& data, const std::filesystem::path& path) {
  write_file(path, format_dataset(data));
}

Dataset parse_dataset(std::string_view contents, std::string_view source_name) {
  const auto lines = split_lines(contents);
  if (lines.empty()) {
    throw ParseError(fmt::format("{}: missing header row", source_name));
  }
  const auto header = split(lines[0], '\t');
  std::array<std::optional<std::size_t>, kColumns.size()> index;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const auto it = std::find(kColumns.begin(), kColumns.end(), header[i]);
    if (it == kColumns.end()) continue;
    index[static_cast<std::size_t>(it - kColumns.begin())] = i;
  }
  for (std::size_t c = 0; c < kRequiredColumns; ++c) {
    if (!index[c]) {
      throw ParseError(
          fmt::format("{}:1: missing required column '{}'", source_name, kColumns[c]));
    }
  }
  const bool has_soft = std::all_of(index.begin() + kRequiredColumns, index.end(),
                                    [](const auto& i) { return i.has_value(); });

  Dataset data;
  std::set<std::pair<std::string, std::string>> seen;
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    if (lines[ln].empty()) continue;
    const auto fields = split(lines[ln], '\t');
    if (fields.size() != header.size()) {
      throw ParseError(fmt::format("{}:{}: row has {} fields, expected {}", source_name, ln + 1,
                                   fields.size(), header.size()));
    }
    const auto at = [&](std::size_t c) { return fields[*index[c]]; };
    QueryProductRecord r;
    r.query_id = at(0);
    r.product_id = at(1);
    r.query = at(2);
    r.title = at(3);
    r.description = at(4);
    r.bullet_points = at(5);
    r.brand = at(6);
    r.color = at(7);
    if (r.query_id.empty() || r.product_id.empty()) {
      throw ParseError(fmt::format("{}:{}: empty query_id or product_id", source_name, ln + 1));
    }
    const auto locale = parse_locale(at(8));
    if (!locale) {
      throw ParseError(fmt::format("{}:{}: unknown locale '{}'", source_name, ln + 1, at(8)));
    }
    r.locale = *locale;
    if (!at(9).empty()) {
      r.label = parse_label(at(9));
      if (!r.label) {
        throw ParseError(
            fmt::format("{}:{}: unknown esci_label '{}'", source_name, ln + 1, at(9)));
      }
    }
    if (has_soft) {
      std::size_t filled = 0;
      LabelVector soft;
      for (std::size_t c = 0; c < kNumClasses; ++c) {
        const auto text = at(kRequiredColumns + c);
        if (text.empty()) continue;
        ++filled;
        soft[c] = parse_double(text, fmt::format("{}:{}: {}", source_name, ln + 1,
                                                 kColumns[kRequiredColumns + c]));
      }
      if (filled == kNumClasses) {
        if (!soft.is_valid()) {
          throw ParseError(fmt::format("{}:{}: soft label is not a probability vector",
                                       source_name, ln + 1));
        }
        r.soft_label = soft;
      } else if (filled != 0) {
        throw ParseError(
            fmt::format("{}:{}: soft label must have all four components", source_name, ln + 1));
      }
    }
    if (!seen.emplace(r.query_id, r.product_id).second) {
      throw ParseError(fmt::format("{}:{}: duplicate pair (query_id={}, product_id={})",
                                   source_name, ln + 1, r.query_id, r.product_id));
    }
    data.push_back(std::move(r));
  }
  return data;
}

Dataset load_dataset(const std::filesystem::path& path) {
  return parse_dataset(read_file(path), path.string());
}

std::pair<Dataset, Dataset> split_by_query(const Dataset& data, double holdout_fraction,
                                           std::uint64_t seed) {
  if (!(holdout_fraction >= 0.0 && holdout_fraction <= 1.0)) {
    throw ArgumentError("holdout fraction must lie in [0, 1]");
  }
  auto ids = query_ids(data);
  Rng rng(seed);
  rng.shuffle(std::span(ids));
  const auto cut = static_cast<std::size_t>(
      std::llround(static_cast<double>(ids.size()) * (1.0 - holdout_fraction)));
  const std::set<std::string> held(ids.begin() + static_cast<std::ptrdiff_t>(cut), ids.end());
  std::pair<Dataset, Dataset> out;
  for (const auto& r : data) {
    (held.count(r.query_id) ? out.second : out.first).push_back(r);
  }
  return out;
}

}  // namespace esci
