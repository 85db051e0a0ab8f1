#include <gtest/gtest.h>

#include "finrex/augment.hpp"
#include "finrex/backbone.hpp"
#include "finrex/tokenizer.hpp"

using namespace finrex;

namespace {

AugmentedExample example(std::vector<std::vector<std::string>> segments, StrategyId s = StrategyId::TrNP) {
  return {"ex", s, std::move(segments), 0};
}

std::vector<std::string> words(std::size_t n, const std::string& stem) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(stem + std::to_string(i % 7));
  return out;
}

}  // namespace

TEST(Backbone, RegistryAndSpecValidation) {
  EXPECT_EQ(find_backbone("tiny_scratch").kind, BackboneKind::tiny_scratch);
  EXPECT_EQ(find_backbone("tiny_scratch").layers, 2);
  EXPECT_EQ(find_backbone("tiny_scratch").heads, 4);
  EXPECT_EQ(find_backbone("tiny_scratch").dim, 64);
  EXPECT_EQ(find_backbone(kPrimaryBackbone).kind, BackboneKind::external);
  for (const char* id : {"spanbert", "finbert", "bert", "xlm-roberta", "distilbert", "albert"})
    EXPECT_EQ(find_backbone(id).kind, BackboneKind::external) << id;
  EXPECT_THROW(find_backbone("gpt-17"), Error);
  EncoderSpec spec;
  spec.max_length = 15;
  EXPECT_THROW(spec.validate(), Error);
  spec.max_length = 16;
  EXPECT_NO_THROW(spec.validate());
  spec.backbone_id = "nope";
  EXPECT_THROW(spec.validate(), Error);
}

TEST(WordTokenizer, VocabularyOrder) {
  auto tok = WordTokenizer::build({example({{"b", "a", "b", "[ORG]"}, {"[NOUN]"}})}, true);
  const auto& v = tok.vocabulary();
  EXPECT_EQ(v[0], "[PAD]");
  EXPECT_EQ(v[1], "[UNK]");
  EXPECT_EQ(v[2], "[CLS]");
  EXPECT_EQ(v[3], "[SEP]");
  EXPECT_EQ(v[v.size() - 2], "b");  // most frequent word first
  EXPECT_EQ(v.back(), "a");
  EXPECT_TRUE(tok.is_tag_token("[ORG]"));
  EXPECT_TRUE(tok.is_tag_token("[PROPN]"));
  EXPECT_EQ(tok.id("never-seen"), tok.unk_id());
}

TEST(WordTokenizer, TagTokenIsOneId) {
  auto tok = WordTokenizer::build({example({{"x"}})}, true);
  EXPECT_EQ(tok.encode_word("[ORG]").size(), 1u);
  EXPECT_NE(tok.encode_word("[ORG]")[0], tok.unk_id());
}

TEST(WordTokenizer, UnregisteredTagSplitsWithWarning) {
  auto tok = WordTokenizer::build({example({{"x", "[ORG]"}})}, false);
  EXPECT_EQ(tok.encode_word("[ORG]").size(), 3u);
  EncoderSpec spec;
  auto enc = encode_example(example({{"x", "[ORG]"}}, StrategyId::TrN), spec, tok);
  ASSERT_EQ(enc.warnings.size(), 1u);
  EXPECT_NE(enc.warnings[0].find("[ORG]"), std::string::npos);
  EXPECT_EQ(enc.length(), 1u + 1u + 3u + 1u);
}

TEST(WordTokenizer, JsonRoundTrip) {
  auto tok = WordTokenizer::build({example({{"b", "a", "[ORG]"}, {"[NOUN]"}})}, true);
  auto back = WordTokenizer::from_json(tok.to_json());
  EXPECT_EQ(back.vocabulary(), tok.vocabulary());
  EXPECT_EQ(back.tag_tokens(), tok.tag_tokens());
}

TEST(EncodeExample, SingleSegmentLayout) {
  auto ex = example({{"a", "b", "c"}}, StrategyId::T);
  auto tok = WordTokenizer::build({ex}, true);
  auto enc = encode_example(ex, EncoderSpec{}, tok);
  ASSERT_EQ(enc.length(), 5u);
  EXPECT_EQ(enc.ids.front(), tok.cls_id());
  EXPECT_EQ(enc.ids.back(), tok.sep_id());
  EXPECT_EQ(std::count(enc.ids.begin(), enc.ids.end(), tok.sep_id()), 1);
  EXPECT_EQ(enc.segment_ids, std::vector<int>(5, 0));
  EXPECT_EQ(enc.attention_mask, std::vector<int>(5, 1));
}

TEST(EncodeExample, ThreeSegmentLayout) {
  auto ex = example({{"a", "b"}, {"[ORG]", "[O]"}, {"[PROPN]", "[VERB]"}}, StrategyId::TNP);
  auto tok = WordTokenizer::build({ex}, true);
  auto enc = encode_example(ex, EncoderSpec{}, tok);
  EXPECT_EQ(enc.segment_ids, (std::vector<int>{0, 0, 0, 0, 1, 1, 1, 2, 2, 2}));
  EXPECT_EQ(std::count(enc.ids.begin(), enc.ids.end(), tok.sep_id()), 3);
  EXPECT_EQ(enc.segment_lengths, (std::vector<std::size_t>{2, 2, 2}));
}

TEST(EncodeExample, LongestFirstTruncation) {
  auto ex = example({words(300, "w"), std::vector<std::string>(300, "[NOUN]")});
  auto tok = WordTokenizer::build({ex}, true);
  EncoderSpec spec;
  spec.max_length = 256;
  auto enc = encode_example(ex, spec, tok);
  EXPECT_EQ(enc.length(), 256u);
  ASSERT_EQ(enc.segment_lengths.size(), 2u);
  EXPECT_EQ(enc.segment_lengths[0] + enc.segment_lengths[1], 253u);
  // Equal segments shrink together; the first loses the extra piece on a tie.
  EXPECT_EQ(enc.segment_lengths[0], 126u);
  EXPECT_EQ(enc.segment_lengths[1], 127u);
  // The kept pieces are prefixes of the original segments.
  EXPECT_EQ(enc.ids[1], tok.id("w0"));
  EXPECT_EQ(enc.ids[1 + 126], tok.sep_id());
  EXPECT_EQ(enc.ids[1 + 126 + 1], tok.id("[NOUN]"));
}

TEST(EncodeExample, UnequalSegmentsTrimLongestFirst) {
  auto ex = example({words(500, "w"), std::vector<std::string>(100, "[NOUN]")});
  auto tok = WordTokenizer::build({ex}, true);
  EncoderSpec spec;
  spec.max_length = 256;
  auto enc = encode_example(ex, spec, tok);
  EXPECT_EQ(enc.length(), 256u);
  EXPECT_EQ(enc.segment_lengths[1], 100u);  // POS segment untouched
  EXPECT_EQ(enc.segment_lengths[0], 153u);
}

TEST(EncodeExample, ShortInputUntouched) {
  auto ex = example({words(10, "w"), std::vector<std::string>(10, "[NOUN]")});
  auto tok = WordTokenizer::build({ex}, true);
  auto enc = encode_example(ex, EncoderSpec{}, tok);
  EXPECT_EQ(enc.length(), 23u);
}

TEST(EncodeExample, EmptySegmentFails) {
  auto ex = example({{"a"}, {}});
  auto tok = WordTokenizer::build({example({{"a"}})}, true);
  EXPECT_THROW(encode_example(ex, EncoderSpec{}, tok), Error);
  EXPECT_THROW(encode_example(example({}), EncoderSpec{}, tok), Error);
}
