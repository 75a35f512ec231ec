#include "esci/text.h"

#include <algorithm>
#include <cctype>

#include <fmt/format.h>

#include "esci/error.h"
#include "utf8.h"

namespace esci {
namespace {

bool is_noise_code_point(char32_t cp) {
  return (cp >= 0x1F600 && cp <= 0x1F64F) ||  // Emoticons
         (cp >= 0x1F300 && cp <= 0x1F5FF) ||  // Misc Symbols and Pictographs
         (cp >= 0x1F680 && cp <= 0x1F6FF) ||  // Transport and Map
         (cp >= 0x2700 && cp <= 0x27BF) ||    // Dingbats
         cp < 0x20 || cp == 0x7F ||           // C0 + DEL
         (cp >= 0x80 && cp <= 0x9F);          // C1
}

bool is_space_control(char32_t cp) {
  return cp == '\t' || cp == '\n' || cp == '\r' || cp == '\v' || cp == '\f';
}

// One pass of tag removal. A tag is '<' followed by characters other than
// '<' and '>' and closed by '>'.
std::string strip_tags_once(std::string_view text, bool* changed) {
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] == '<') {
      std::size_t j = i + 1;
      while (j < text.size() && text[j] != '<' && text[j] != '>') ++j;
      if (j < text.size() && text[j] == '>') {
        out.push_back(' ');
        i = j + 1;
        *changed = true;
        continue;
      }
    }
    out.push_back(text[i]);
    ++i;
  }
  return out;
}

bool is_word_byte(char c) {
  const auto u = static_cast<unsigned char>(c);
  return u >= 0x80 || std::isalnum(u);
}

}  // namespace

std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

std::string normalize_spaces(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char c : text) {
    if (c == ' ') {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

std::string clean_text(std::string_view raw) {
  std::string text(raw);
  for (bool changed = true; changed;) {
    changed = false;
    text = strip_tags_once(text, &changed);
  }

  std::string filtered;
  filtered.reserve(text.size());
  for (std::size_t i = 0; i < text.size();) {
    char32_t cp = 0;
    const std::size_t len = internal::decode_utf8(text, i, &cp);
    if (len == 0) {
      ++i;
      continue;
    }
    if (is_space_control(cp)) {
      filtered.push_back(' ');
    } else if (!is_noise_code_point(cp)) {
      filtered.append(text, i, len);
    }
    i += len;
  }
  return normalize_spaces(filtered);
}

std::string mark_entities(std::string_view text, std::vector<EntitySpan> spans) {
  std::sort(spans.begin(), spans.end(),
            [](const EntitySpan& a, const EntitySpan& b) { return a.start < b.start; });
  for (std::size_t i = 0; i < spans.size(); ++i) {
    const EntitySpan& s = spans[i];
    if (s.start >= s.end || s.end > text.size()) {
      throw SpanError(fmt::format("span [{}, {}) of type '{}' is out of range for text of length {}",
                                  s.start, s.end, s.entity_type, text.size()));
    }
    if (s.entity_type.empty()) {
      throw SpanError(fmt::format("span [{}, {}) has an empty entity type", s.start, s.end));
    }
    if (i > 0 && spans[i - 1].end > s.start) {
      throw SpanError(fmt::format("span [{}, {}) of type '{}' overlaps span [{}, {})", s.start,
                                  s.end, s.entity_type, spans[i - 1].start, spans[i - 1].end));
    }
  }

  std::string out(text);
  for (auto it = spans.rbegin(); it != spans.rend(); ++it) {
    out.insert(it->end, fmt::format(" [/{}] ", it->entity_type));
    out.insert(it->start, fmt::format(" [{}] ", it->entity_type));
  }
  return normalize_spaces(out);
}

void EntityLexicon::add(std::string_view phrase, std::string_view entity_type) {
  std::string lowered = normalize_spaces(ascii_lower(phrase));
  if (lowered.size() < 2) return;
  const std::string first = lowered.substr(0, lowered.find(' '));
  auto& bucket = by_first_word_[first];
  for (const Entry& e : bucket) {
    if (e.lowered == lowered) return;
  }
  bucket.push_back({std::move(lowered), std::string(entity_type)});
  std::stable_sort(bucket.begin(), bucket.end(), [](const Entry& a, const Entry& b) {
    return a.lowered.size() > b.lowered.size();
  });
  ++size_;
}

std::vector<EntitySpan> EntityLexicon::find(std::string_view text) const {
  std::vector<EntitySpan> spans;
  const std::string lowered = ascii_lower(text);
  std::size_t i = 0;
  while (i < lowered.size()) {
    if (!is_word_byte(lowered[i]) || (i > 0 && is_word_byte(lowered[i - 1]))) {
      ++i;
      continue;
    }
    std::size_t word_end = i;
    while (word_end < lowered.size() && lowered[word_end] != ' ') ++word_end;
    // Punctuation may trail the first word ("apple," should still find "apple").
    std::size_t key_end = word_end;
    while (key_end > i && !is_word_byte(lowered[key_end - 1])) --key_end;

    bool matched = false;
    for (std::size_t end = word_end; end >= key_end && end > i && !matched; --end) {
      auto bucket = by_first_word_.find(std::string_view(lowered).substr(i, end - i));
      if (bucket == by_first_word_.end()) continue;
      for (const Entry& e : bucket->second) {
        const std::size_t stop = i + e.lowered.size();
        if (stop > lowered.size() || lowered.compare(i, e.lowered.size(), e.lowered) != 0) {
          continue;
        }
        if (stop < lowered.size() && is_word_byte(lowered[stop]) &&
            is_word_byte(lowered[stop - 1])) {
          continue;
        }
        spans.push_back({i, stop, e.entity_type});
        i = stop;
        matched = true;
        break;
      }
    }
    if (!matched) i = word_end;
  }
  return spans;
}

}  // namespace esci
