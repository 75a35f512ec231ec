#include "esci/text.h"

#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "esci/error.h"
#include "esci/labels.h"

namespace esci {
namespace {

TEST(LabelsTest, CodesRoundTrip) {
  for (EsciLabel l : kAllLabels) {
    EXPECT_EQ(parse_label(label_code(l)), l);
  }
  EXPECT_EQ(parse_label("exact"), EsciLabel::kExact);
  EXPECT_EQ(parse_label("Irrelevant"), EsciLabel::kIrrelevant);
  EXPECT_EQ(parse_label("X"), std::nullopt);
  EXPECT_EQ(parse_label(""), std::nullopt);
}

TEST(LabelsTest, LabelVectorBasics) {
  const auto v = LabelVector::one_hot(EsciLabel::kComplement);
  EXPECT_EQ(v.argmax(), 2u);
  EXPECT_DOUBLE_EQ(v.sum(), 1.0);
  EXPECT_TRUE(v.is_valid());
  EXPECT_TRUE(LabelVector::uniform().is_valid());
  EXPECT_FALSE((LabelVector{{0.5, 0.5, 0.5, 0.0}}).is_valid());
  EXPECT_FALSE((LabelVector{{1.2, -0.2, 0.0, 0.0}}).is_valid());
}

TEST(CleanTextTest, StripsTagsAndCollapsesSpaces) {
  EXPECT_EQ(clean_text("<b>running  shoes</b>"), "running shoes");
  EXPECT_EQ(clean_text(""), "");
  EXPECT_EQ(clean_text("靴 👟 <br/>黒"), "靴 黒");
}

TEST(CleanTextTest, ControlsAndWhitespace) {
  EXPECT_EQ(clean_text("a\tb\nc\r\nd"), "a b c d");
  EXPECT_EQ(clean_text("  x\x01y\x7f "), "xy");
  EXPECT_EQ(clean_text("a\xc2\x85z"), "az");  // U+0085 (C1)
  EXPECT_EQ(clean_text("pen ✏ case"), "pen case");
  EXPECT_EQ(clean_text("go 🚀 now 😀"), "go now");
}

TEST(CleanTextTest, NestedTagsReachFixpoint) {
  const std::string raw = "a<<b>>c <i>d</i>";
  const std::string once = clean_text(raw);
  EXPECT_EQ(clean_text(once), once);
  EXPECT_EQ(once.find('<'), std::string::npos);
}

TEST(CleanTextTest, IdempotentAndNeverLonger) {
  const std::vector<std::string> inputs = {
      "<p>Hello <b>World</b></p>", "  multiple   spaces  ", "emoji 🎉🎉 party",
      "tab\tand\nnewline",         "<<>>",                   "a < b > c",
      "broken \xff\xfe bytes",      "日本語 <span>テキスト</span> 🍣",
      "unterminated <tag",         "x>y<z"};
  for (const auto& s : inputs) {
    const std::string once = clean_text(s);
    EXPECT_EQ(clean_text(once), once) << s;
    EXPECT_LE(once.size(), s.size()) << s;
  }
}

TEST(MarkEntitiesTest, LiteralProductExample) {
  const std::string text = "I want to buy an iPhone 8 Plus";
  const std::size_t start = text.find("iPhone");
  EXPECT_EQ(mark_entities(text, {{start, text.size(), "Product"}}),
            "I want to buy an [Product] iPhone 8 Plus [/Product]");
}

TEST(MarkEntitiesTest, NoSpansAndAdjacentSpans) {
  EXPECT_EQ(mark_entities("abc", {}), "abc");
  EXPECT_EQ(mark_entities("x y", {{0, 1, "Brand"}, {2, 3, "Color"}}),
            "[Brand] x [/Brand] [Color] y [/Color]");
  // Input order does not matter.
  EXPECT_EQ(mark_entities("x y", {{2, 3, "Color"}, {0, 1, "Brand"}}),
            "[Brand] x [/Brand] [Color] y [/Color]");
}

TEST(MarkEntitiesTest, RejectsBadSpans) {
  EXPECT_THROW(mark_entities("abc", {{0, 4, "Brand"}}), SpanError);
  EXPECT_THROW(mark_entities("abc", {{2, 2, "Brand"}}), SpanError);
  EXPECT_THROW(mark_entities("abcdef", {{0, 3, "Brand"}, {2, 5, "Color"}}), SpanError);
  try {
    mark_entities("abcdef", {{0, 3, "Brand"}, {2, 5, "Color"}});
  } catch (const SpanError& e) {
    EXPECT_NE(std::string(e.what()).find("[2, 5)"), std::string::npos) << e.what();
  }
}

TEST(MarkEntitiesTest, RemovingMarkersRestoresText) {
  const std::string text = "red nike running shoes size 9";
  const std::string marked =
      mark_entities(text, {{0, 3, "Color"}, {4, 8, "Brand"}, {9, 22, "Product"}});
  std::string stripped = marked;
  for (const std::string m : {"[Color]", "[/Color]", "[Brand]", "[/Brand]", "[Product]",
                              "[/Product]"}) {
    for (auto pos = stripped.find(m); pos != std::string::npos; pos = stripped.find(m)) {
      stripped.erase(pos, m.size());
    }
  }
  EXPECT_EQ(normalize_spaces(stripped), text);
}

TEST(EntityLexiconTest, LongestWordBoundedMatch) {
  EntityLexicon lex;
  lex.add("Apple", "Brand");
  lex.add("space gray", "Color");
  lex.add("gray", "Color");
  const std::string q = "apple ipad space gray pineapple";
  const auto spans = lex.find(q);
  ASSERT_EQ(spans.size(), 2u);
  EXPECT_EQ(q.substr(spans[0].start, spans[0].end - spans[0].start), "apple");
  EXPECT_EQ(spans[0].entity_type, "Brand");
  EXPECT_EQ(q.substr(spans[1].start, spans[1].end - spans[1].start), "space gray");
  EXPECT_EQ(mark_entities(q, spans),
            "[Brand] apple [/Brand] ipad [Color] space gray [/Color] pineapple");
}

TEST(TextTest, AsciiLowerLeavesOtherBytes) {
  EXPECT_EQ(ascii_lower("ÁbC 黒"), "Ábc 黒");
  EXPECT_EQ(normalize_spaces("  a   b "), "a b");
}

}  // namespace
}  // namespace esci
