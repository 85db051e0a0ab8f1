#include <gtest/gtest.h>

#include "finrex/random.hpp"
#include "finrex/synthetic.hpp"
#include "finrex/tagging.hpp"
#include "test_util.hpp"

using namespace finrex;
using finrex::testing::TempDir;

namespace {

using Tags = std::vector<std::string>;

RuleLexicon google_fitbit_lexicon() { return RuleLexicon::from_tsv("ner\tORG\tGoogle\nner\tORG\tFitbit\n"); }

TaggerSpec rule_spec() { return {}; }

}  // namespace

TEST(RuleTagger, GoogleAcquiredFitbit) {
  RuleTagger tagger(google_fitbit_lexicon());
  auto ann = tagger.tag(finrex::testing::google_fitbit());
  EXPECT_EQ(ann.ner_tags, (Tags{"ORG", "O", "ORG", "O"}));
  EXPECT_EQ(ann.pos_tags, (Tags{"PROPN", "VERB", "PROPN", "PUNCT"}));
  EXPECT_EQ(ann.instance_id, "gf-1");
  EXPECT_EQ(tagger.invocations(), 1u);
}

TEST(RuleTagger, ReferenceLexiconAgrees) {
  RuleTagger tagger;
  auto ann = tagger.tag(finrex::testing::google_fitbit());
  EXPECT_EQ(ann.ner_tags, (Tags{"ORG", "O", "ORG", "O"}));
  EXPECT_EQ(ann.pos_tags, (Tags{"PROPN", "VERB", "PROPN", "PUNCT"}));
}

TEST(RuleTagger, EmptyLexiconNoEntities) {
  RuleTagger tagger(RuleLexicon::empty());
  auto inst = finrex::testing::make_instance("h", {"hello"}, {0, 1, "ORG"}, {0, 1, "ORG"}, "no_relation");
  auto ann = tagger.tag(inst);
  EXPECT_EQ(ann.ner_tags, Tags{"O"});
  EXPECT_EQ(ann.pos_tags, Tags{"NOUN"});
}

TEST(RuleTagger, NumericAndSuffixRules) {
  RuleTagger tagger;
  Tags toks = {"Acme", "Inc", "paid", "$", "5", "million", "in", "March", "2021", ",", "up", "12", "%", "."};
  auto ner = tagger.ner(toks);
  EXPECT_EQ(ner, (Tags{"O", "O", "O", "MONEY", "MONEY", "MONEY", "O", "DATE", "DATE", "O", "O",
                       "PERCENT", "PERCENT", "O"}));
  auto pos = tagger.pos(toks, ner);
  EXPECT_EQ(pos[3], "SYM");
  EXPECT_EQ(pos[4], "NUM");
  EXPECT_EQ(pos[6], "ADP");
  EXPECT_EQ(pos[13], "PUNCT");
}

TEST(RuleTagger, GazetteerWithOrgSuffix) {
  RuleTagger tagger(RuleLexicon::from_tsv("ner\tPERSON\tJane Doe\nner\tORG\tAcme\n"));
  auto ner = tagger.ner({"Jane", "Doe", "joined", "Acme", "Inc", "."});
  EXPECT_EQ(ner, (Tags{"PERSON", "PERSON", "O", "ORG", "ORG", "O"}));
}

TEST(RuleTagger, OutputLengthMatchesTokens) {
  Rng rng(3);
  RuleTagger tagger;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::string> toks;
    const auto n = 1 + rng.below(60);
    const auto& pool = lexicon::adverbs();
    while (toks.size() < n) {
      switch (rng.below(4)) {
        case 0: toks.push_back(std::to_string(rng.below(3000))); break;
        case 1: toks.push_back(rng.pick(lexicon::organizations())); break;
        case 2: toks.push_back(rng.pick(lexicon::months())); break;
        default: toks.push_back(rng.pick(pool));
      }
    }
    auto inst = finrex::testing::make_instance("p", toks, {0, 1, "ORG"}, {0, 1, "ORG"}, "no_relation");
    auto ann = tagger.tag(inst);
    EXPECT_EQ(ann.ner_tags.size(), toks.size());
    EXPECT_EQ(ann.pos_tags.size(), toks.size());
    EXPECT_TRUE(validate_annotation(ann, inst, TagInventory::standard()).empty());
  }
}

TEST(RuleTagger, FiftyTokenSentence) {
  std::vector<std::string> toks;
  for (int i = 0; i < 50; ++i) toks.push_back(i % 7 == 0 ? "Acme" : "word");
  auto ann = tag_instance(finrex::testing::make_instance("f", toks, {0, 1, "ORG"}, {7, 8, "ORG"}, "x"), rule_spec());
  EXPECT_EQ(ann.ner_tags.size(), 50u);
  EXPECT_EQ(ann.pos_tags.size(), 50u);
}

TEST(RuleTagger, PureFunctionOfInput) {
  auto corpus = make_synthetic_corpus(60, 4, 9);
  RuleTagger a, b;
  for (const auto& inst : corpus.instances) {
    auto x = a.tag(inst), y = b.tag(inst), z = a.tag(inst);
    EXPECT_EQ(x.to_json().dump(), y.to_json().dump());
    EXPECT_EQ(x.to_json().dump(), z.to_json().dump());
  }
}

TEST(RuleLexicon, TsvRoundTripAndErrors) {
  auto lex = RuleLexicon::from_tsv("# comment\nner\tGPE\tNew York\npos\tADP\tof\n");
  EXPECT_EQ(RuleLexicon::from_tsv(lex.to_tsv()).to_tsv(), lex.to_tsv());
  EXPECT_THROW(RuleLexicon::from_tsv("ner\tORG\n"), Error);
  EXPECT_THROW(RuleLexicon::from_tsv("foo\tORG\tx\n"), Error);
}

TEST(GoldOverlay, ForcesSpanTypes) {
  TaggerSpec spec;
  spec.config["gold_overlay"] = true;
  auto inst = finrex::testing::make_instance("g", {"widgets", "sold", "by", "zzz"}, {0, 1, "PRODUCT"},
                                             {3, 4, "ORG"}, "x");
  auto ann = tag_instance(inst, spec);
  EXPECT_EQ(ann.ner_tags, (Tags{"PRODUCT", "O", "O", "ORG"}));
}

TEST(AlignTags, IdenticalTokenizationCopiesTags) {
  auto [text, src] = with_offsets({"Google", "acquired", "Fitbit"});
  std::vector<TaggedSpan> spans = {{0, 6, "ORG", "PROPN"}, {7, 15, "O", "VERB"}, {16, 22, "ORG", "PROPN"}};
  auto out = align_tags(text, src, text, spans);
  EXPECT_EQ(out.ner, (Tags{"ORG", "O", "ORG"}));
  EXPECT_EQ(out.pos, (Tags{"PROPN", "VERB", "PROPN"}));
}

TEST(AlignTags, MergedSpanCoversBothTokens) {
  auto [text, src] = with_offsets({"New", "York", "rose"});
  std::vector<TaggedSpan> spans = {{0, 8, "ORG", "PROPN"}, {9, 13, "O", "VERB"}};
  auto out = align_tags(text, src, text, spans);
  EXPECT_EQ(out.ner, (Tags{"ORG", "ORG", "O"}));
  EXPECT_EQ(out.pos, (Tags{"PROPN", "PROPN", "VERB"}));
}

TEST(AlignTags, SplitTokenTakesFirstPieceTag) {
  auto [text, src] = with_offsets({"U.S.", "sales"});
  std::vector<TaggedSpan> spans = {
      {0, 2, "GPE", "PROPN"}, {2, 3, "O", "PUNCT"}, {3, 4, "O", "PUNCT"}, {5, 10, "O", "NOUN"}};
  auto out = align_tags(text, src, text, spans);
  EXPECT_EQ(out.ner, (Tags{"GPE", "O"}));
  EXPECT_EQ(out.pos, (Tags{"PROPN", "NOUN"}));
}

TEST(AlignTags, LongestEntitySpanWins) {
  auto [text, src] = with_offsets({"Bank-of-America", "fell"});
  std::vector<TaggedSpan> spans = {{0, 4, "PERSON", "PROPN"}, {0, 15, "ORG", "PROPN"}, {16, 20, "O", "VERB"}};
  auto out = align_tags(text, src, text, spans);
  EXPECT_EQ(out.ner[0], "ORG");
  EXPECT_EQ(out.pos[0], "PROPN");
}

TEST(AlignTags, UncoveredTokensGetDefaults) {
  auto [text, src] = with_offsets({"alpha", "beta"});
  std::vector<TaggedSpan> spans = {{0, 5, "O", "NOUN"}};
  auto out = align_tags(text, src, text, spans);
  EXPECT_EQ(out.ner, (Tags{"O", "O"}));
  EXPECT_EQ(out.pos, (Tags{"NOUN", "X"}));
}

TEST(AlignTags, TextMismatchFails) {
  auto [text, src] = with_offsets({"alpha", "beta"});
  EXPECT_THROW(align_tags(text, src, "alpha  beta", {}), Error);
}

TEST(AlignTags, TotalOverRandomSegmentations) {
  Rng rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<std::string> toks;
    const auto n = 1 + rng.below(12);
    for (std::size_t i = 0; i < n; ++i) toks.push_back(std::string(1 + rng.below(6), static_cast<char>('a' + rng.below(26))));
    auto [text, src] = with_offsets(toks);
    std::vector<TaggedSpan> spans;
    for (std::size_t b = 0; b < text.size();) {
      std::size_t e = std::min(text.size(), b + 1 + rng.below(5));
      spans.push_back({b, e, rng.bernoulli(0.3) ? "ORG" : "O", "NOUN"});
      b = e;
    }
    auto out = align_tags(text, src, text, spans);
    EXPECT_EQ(out.ner.size(), toks.size());
    EXPECT_EQ(out.pos.size(), toks.size());
  }
}

TEST(ExternalTagger, ReadsSpansFile) {
  TempDir dir;
  json line = {{"instance_id", "gf-1"},
               {"text", "Google acquired Fitbit ."},
               {"spans",
                {{{"start", 0}, {"end", 6}, {"ner", "ORG"}, {"pos", "PROPN"}},
                 {{"start", 7}, {"end", 15}, {"pos", "VERB"}},
                 {{"start", 16}, {"end", 22}, {"ner", "ORG"}, {"pos", "PROPN"}},
                 {{"start", 23}, {"end", 24}, {"pos", "PUNCT"}}}}};
  write_file(dir / "spans.jsonl", line.dump() + "\n");
  TaggerSpec spec{TaggerKind::external_adapter, {{"spans_file", (dir / "spans.jsonl").string()}}};
  auto ann = tag_instance(finrex::testing::google_fitbit(), spec);
  EXPECT_EQ(ann.ner_tags, (Tags{"ORG", "O", "ORG", "O"}));
  EXPECT_EQ(ann.pos_tags, (Tags{"PROPN", "VERB", "PROPN", "PUNCT"}));

  auto other = finrex::testing::google_fitbit();
  other.id = "missing";
  try {
    tag_instance(other, spec);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("missing"), std::string::npos);
  }
}

TEST(ExternalTagger, AlignmentFailureNamesInstance) {
  TempDir dir;
  json line = {{"instance_id", "gf-1"}, {"text", "Google bought Fitbit ."}, {"spans", json::array()}};
  write_file(dir / "spans.jsonl", line.dump() + "\n");
  TaggerSpec spec{TaggerKind::external_adapter, {{"spans_file", (dir / "spans.jsonl").string()}}};
  try {
    tag_instance(finrex::testing::google_fitbit(), spec);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("gf-1"), std::string::npos);
  }
}

TEST(ExternalTagger, UnavailableAdapterNamed) {
  TaggerSpec spec{TaggerKind::external_adapter, {{"spans_file", "/nonexistent/spans.jsonl"}}};
  try {
    tag_instance(finrex::testing::google_fitbit(), spec);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("external_adapter"), std::string::npos);
  }
  EXPECT_THROW(tag_instance(finrex::testing::google_fitbit(), TaggerSpec{TaggerKind::external_adapter, {}}), Error);
}

TEST(TagCorpus, OneAnnotationPerInstance) {
  auto corpus = make_synthetic_corpus(200, 4, 42);
  auto r = tag_corpus(corpus, rule_spec());
  EXPECT_EQ(r.annotations.size(), 200u);
  EXPECT_EQ(r.tagger_invocations, 200u);
  EXPECT_FALSE(r.cache_hit);
}

TEST(TagCorpus, WarmCacheSkipsTagger) {
  TempDir dir;
  auto corpus = make_synthetic_corpus(200, 4, 42);
  TagCorpusOptions opts;
  opts.cache_path = dir / "tags.jsonl";
  auto cold = tag_corpus(corpus, rule_spec(), opts);
  const auto bytes = read_file(*opts.cache_path);
  auto warm = tag_corpus(corpus, rule_spec(), opts);
  EXPECT_TRUE(warm.cache_hit);
  EXPECT_EQ(warm.tagger_invocations, 0u);
  EXPECT_EQ(serialize_tag_cache(warm.annotations, rule_spec()), bytes);
  EXPECT_EQ(read_file(*opts.cache_path), bytes);
  EXPECT_EQ(serialize_tag_cache(cold.annotations, rule_spec()), bytes);
}

TEST(TagCorpus, CorruptCacheIgnored) {
  TempDir dir;
  auto corpus = make_synthetic_corpus(50, 4, 42);
  TagCorpusOptions opts;
  opts.cache_path = dir / "tags.jsonl";
  tag_corpus(corpus, rule_spec(), opts);
  const auto bytes = read_file(*opts.cache_path);
  write_file(*opts.cache_path, bytes.substr(0, bytes.size() / 2 + 3));
  auto r = tag_corpus(corpus, rule_spec(), opts);
  EXPECT_FALSE(r.cache_hit);
  EXPECT_EQ(r.tagger_invocations, 50u);
  ASSERT_FALSE(r.warnings.empty());
  EXPECT_EQ(read_file(*opts.cache_path), bytes);
}

TEST(TagCorpus, StaleCacheIgnored) {
  TempDir dir;
  auto corpus = make_synthetic_corpus(50, 4, 42);
  TagCorpusOptions opts;
  opts.cache_path = dir / "tags.jsonl";
  tag_corpus(corpus, rule_spec(), opts);
  TaggerSpec overlay;
  overlay.config["gold_overlay"] = true;
  auto r = tag_corpus(corpus, overlay, opts);
  EXPECT_FALSE(r.cache_hit);
  EXPECT_EQ(r.tagger_invocations, 50u);
  ASSERT_FALSE(r.warnings.empty());
  EXPECT_NE(r.warnings[0].find("stale"), std::string::npos);
}

TEST(TagCorpus, LexiconChangeInvalidatesCache) {
  TempDir dir;
  auto corpus = make_synthetic_corpus(30, 4, 42);
  write_file(dir / "lex.tsv", "ner\tORG\tAcme\n");
  TaggerSpec spec;
  spec.config["lexicon"] = (dir / "lex.tsv").string();
  const auto h1 = spec.config_hash();
  write_file(dir / "lex.tsv", "ner\tORG\tAcme\nner\tORG\tGlobex\n");
  EXPECT_NE(spec.config_hash(), h1);
}

TEST(TagCorpus, ParallelMatchesSerial) {
  auto corpus = make_synthetic_corpus(120, 6, 5);
  TagCorpusOptions par;
  par.workers = 4;
  auto a = tag_corpus(corpus, rule_spec());
  auto b = tag_corpus(corpus, rule_spec(), par);
  EXPECT_EQ(serialize_tag_cache(a.annotations, rule_spec()), serialize_tag_cache(b.annotations, rule_spec()));
  EXPECT_EQ(b.tagger_invocations, 120u);
}

TEST(TagCorpus, ParseTagFileSkipsHeader) {
  auto corpus = make_synthetic_corpus(20, 4, 42);
  auto r = tag_corpus(corpus, rule_spec());
  auto parsed = parse_tag_file(serialize_tag_cache(r.annotations, rule_spec()));
  EXPECT_EQ(parsed.size(), 20u);
}
