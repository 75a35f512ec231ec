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

#ifndef ESCI_LABELS_H_
#define ESCI_LABELS_H_

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace esci {

inline constexpr std::size_t kNumClasses = 4;

// Relevance classes in canonical (E, S, C, I) order. The enumerator value is
// the class index in every LabelVector.
enum class EsciLabel : int { kExact = 0, kSubstitute = 1, kComplement = 2, kIrrelevant = 3 };

inline constexpr std::array<EsciLabel, kNumClasses> kAllLabels = {
    EsciLabel::kExact, EsciLabel::kSubstitute, EsciLabel::kComplement,
    EsciLabel::kIrrelevant};

constexpr std::size_t label_index(EsciLabel l) { return static_cast<std::size_t>(l); }

// Single-letter code used in files: "E", "S", "C", "I". Full names
// ("exact", "Substitute", ...) are also accepted on parse.
std::string_view label_code(EsciLabel l);
std::optional<EsciLabel> parse_label(std::string_view s);

// A distribution over the four classes, ordered (E, S, C, I).
struct LabelVector {
  std::array<double, kNumClasses> p{};

  double& operator[](std::size_t i) { return p[i]; }
  double operator[](std::size_t i) const { return p[i]; }

  static LabelVector one_hot(EsciLabel l);
  static LabelVector uniform();

  double sum() const;
  std::size_t argmax() const;
  double max() const { return p[argmax()]; }

  // Components in [0, 1] and summing to one within tol.
  bool is_valid(double tol = 1e-9) const;

  friend bool operator==(const LabelVector&, const LabelVector&) = default;
};

}  // namespace esci

#endif  // ESCI_LABELS_H_
