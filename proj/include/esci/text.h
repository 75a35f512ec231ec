#ifndef ESCI_TEXT_H_
#define ESCI_TEXT_H_

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace esci {

// Strips markup and noise from raw product or query text:
//  - removes <...> tags (replaced by a space, repeated until none remain),
//  - removes code points in the Emoticons, Miscellaneous Symbols and
//    Pictographs, Transport and Map, and Dingbats blocks,
//  - removes C0/C1 control characters; tab, newline, CR, VT and FF become
//    a space,
//  - collapses runs of spaces and trims both ends.
// Idempotent and never longer than its input. Malformed UTF-8 bytes are
// dropped.
std::string clean_text(std::string_view raw);

// Collapses runs of ASCII spaces to one and trims.
std::string normalize_spaces(std::string_view text);

// Half-open byte range [start, end) of a recognized entity.
struct EntitySpan {
  std::size_t start = 0;
  std::size_t end = 0;
  std::string entity_type;

  friend bool operator==(const EntitySpan&, const EntitySpan&) = default;
};

// Wraps every span with "[T]" and "[/T]" markers separated by single
// spaces. Throws SpanError for out-of-range, empty or overlapping spans.
std::string mark_entities(std::string_view text, std::vector<EntitySpan> spans);

// Dictionary-driven tagger: finds case-insensitive, word-bounded matches of
// lexicon phrases. Longer phrases win; matches never overlap.
class EntityLexicon {
 public:
  void add(std::string_view phrase, std::string_view entity_type);
  std::size_t size() const { return size_; }

  std::vector<EntitySpan> find(std::string_view text) const;

 private:
  struct Entry {
    std::string lowered;
    std::string entity_type;
  };
  // Keyed by the lowered first word; each bucket sorted longest first.
  std::map<std::string, std::vector<Entry>, std::less<>> by_first_word_;
  std::size_t size_ = 0;
};

// ASCII-only lowercasing; other bytes pass through untouched.
std::string ascii_lower(std::string_view s);

}  // namespace esci

#endif  // ESCI_TEXT_H_
