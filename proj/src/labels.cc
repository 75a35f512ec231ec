#include "esci/labels.h"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace esci {

std::string_view label_code(EsciLabel l) {
  switch (l) {
    case EsciLabel::kExact:
      return "E";
    case EsciLabel::kSubstitute:
      return "S";
    case EsciLabel::kComplement:
      return "C";
    case EsciLabel::kIrrelevant:
      return "I";
  }
  return "?";
}

std::optional<EsciLabel> parse_label(std::string_view s) {
  std::string lower(s);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "e" || lower == "exact") return EsciLabel::kExact;
  if (lower == "s" || lower == "substitute") return EsciLabel::kSubstitute;
  if (lower == "c" || lower == "complement") return EsciLabel::kComplement;
  if (lower == "i" || lower == "irrelevant") return EsciLabel::kIrrelevant;
  return std::nullopt;
}

LabelVector LabelVector::one_hot(EsciLabel l) {
  LabelVector v;
  v.p[label_index(l)] = 1.0;
  return v;
}

LabelVector LabelVector::uniform() {
  LabelVector v;
  v.p.fill(1.0 / kNumClasses);
  return v;
}

double LabelVector::sum() const {
  double s = 0.0;
  for (double x : p) s += x;
  return s;
}

std::size_t LabelVector::argmax() const {
  return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
}

bool LabelVector::is_valid(double tol) const {
  for (double x : p) {
    if (!std::isfinite(x) || x < 0.0 || x > 1.0) return false;
  }
  return std::abs(sum() - 1.0) <= tol;
}

}  // namespace esci
