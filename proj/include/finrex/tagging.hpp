#pragma once

// Per-token NER and POS tagging behind a pluggable tagger contract.

#include <algorithm>
#include <atomic>
#include <cctype>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "finrex/common.hpp"
#include "finrex/corpus.hpp"
#include "finrex/lexicon.hpp"

namespace finrex {

inline constexpr const char* kNullNerTag = "O";
inline constexpr const char* kUncoveredPosTag = "X";

struct TagInventory {
  std::set<std::string> ner_tags;
  std::set<std::string> pos_tags;

  // 18-label OntoNotes entity inventory and the 17 universal POS tags. "O" is
  // the absence marker and is deliberately not a member of ner_tags.
  static TagInventory standard() {
    return {{"PERSON", "NORP", "FAC", "ORG", "GPE", "LOC", "PRODUCT", "EVENT", "WORK_OF_ART",
             "LAW", "LANGUAGE", "DATE", "TIME", "PERCENT", "MONEY", "QUANTITY", "ORDINAL",
             "CARDINAL"},
            {"ADJ", "ADP", "ADV", "AUX", "CCONJ", "DET", "INTJ", "NOUN", "NUM", "PART", "PRON",
             "PROPN", "PUNCT", "SCONJ", "SYM", "VERB", "X"}};
  }
};

struct TagAnnotation {
  std::string instance_id;
  std::vector<std::string> ner_tags;
  std::vector<std::string> pos_tags;

  bool operator==(const TagAnnotation&) const = default;

  ordered_json to_json() const {
    return {{"instance_id", instance_id}, {"ner_tags", ner_tags}, {"pos_tags", pos_tags}};
  }
  static TagAnnotation from_json(const json& j) {
    return {j.at("instance_id").get<std::string>(),
            j.at("ner_tags").get<std::vector<std::string>>(),
            j.at("pos_tags").get<std::vector<std::string>>()};
  }
};

inline std::vector<std::string> validate_annotation(const TagAnnotation& ann,
                                                    const RelationInstance& inst,
                                                    const TagInventory& inventory) {
  std::vector<std::string> v;
  const auto n = inst.tokens.size();
  if (ann.instance_id != inst.id)
    v.push_back("annotation id '" + ann.instance_id + "' does not match instance '" + inst.id +
                "'");
  if (ann.ner_tags.size() != n)
    v.push_back("ner_tags length " + std::to_string(ann.ner_tags.size()) + " != " +
                std::to_string(n));
  if (ann.pos_tags.size() != n)
    v.push_back("pos_tags length " + std::to_string(ann.pos_tags.size()) + " != " +
                std::to_string(n));
  for (const auto& t : ann.ner_tags)
    if (t != kNullNerTag && !inventory.ner_tags.count(t)) v.push_back("unknown NER tag '" + t + "'");
  for (const auto& t : ann.pos_tags)
    if (!inventory.pos_tags.count(t)) v.push_back("unknown POS tag '" + t + "'");
  return v;
}

enum class TaggerKind { rule_reference, external_adapter };

inline std::string to_string(TaggerKind k) {
  return k == TaggerKind::rule_reference ? "rule_reference" : "external_adapter";
}

inline TaggerKind parse_tagger_kind(std::string_view s) {
  if (s == "rule" || s == "rule_reference") return TaggerKind::rule_reference;
  if (s == "external" || s == "external_adapter") return TaggerKind::external_adapter;
  throw Error("unknown tagger kind: " + std::string(s));
}

// Rule tagger config keys:
//   lexicon       path to a TSV lexicon replacing the built-in one
//   gold_overlay  force e1/e2 span tokens to their gold entity types
// External adapter config keys:
//   spans_file    JSONL of {instance_id, text, spans:[{start, end, ner, pos}]}
//   gold_overlay  as above
struct TaggerSpec {
  TaggerKind kind = TaggerKind::rule_reference;
  json config = json::object();

  bool gold_overlay() const { return config.value("gold_overlay", false); }

  // Identity of the tag stream this spec produces; changes whenever the kind,
  // the settings, or any referenced data file changes.
  std::string config_hash() const {
    std::uint64_t h = fnv1a(to_string(kind));
    h = fnv1a(config.dump(), h);
    for (const char* key : {"lexicon", "spans_file"}) {
      if (config.contains(key)) {
        std::filesystem::path p = config.at(key).get<std::string>();
        h = fnv1a(std::filesystem::exists(p) ? read_file(p) : std::string("<missing>"), h);
      }
    }
    return hex64(h);
  }

  json to_json() const { return {{"kind", to_string(kind)}, {"config", config}}; }
  static TaggerSpec from_json(const json& j) {
    TaggerSpec s;
    s.kind = parse_tagger_kind(j.at("kind").get<std::string>());
    if (j.contains("config")) s.config = j.at("config");
    return s;
  }
};

// Taggers need not be reentrant; give each worker its own instance.
class Tagger {
 public:
  virtual ~Tagger() = default;

  TagAnnotation tag(const RelationInstance& inst) {
    ++invocations_;
    auto ann = tag_impl(inst);
    if (ann.ner_tags.size() != inst.tokens.size() || ann.pos_tags.size() != inst.tokens.size())
      throw Error("tag alignment failure for instance " + inst.id);
    return ann;
  }

  std::size_t invocations() const { return invocations_; }
  virtual std::string name() const = 0;

 protected:
  virtual TagAnnotation tag_impl(const RelationInstance& inst) = 0;

 private:
  std::size_t invocations_ = 0;
};

// Gazetteer plus closed-class POS entries. The TSV form has one entry per
// line: "ner<TAB>TYPE<TAB>tok tok ..." or "pos<TAB>TAG<TAB>word"; lines
// starting with '#' are comments.
struct RuleLexicon {
  std::map<std::vector<std::string>, std::string> entities;
  std::unordered_map<std::string, std::string> pos;  // keyed by lower-cased word
  std::size_t longest_entity = 1;

  void add_entity(std::vector<std::string> tokens, std::string type) {
    longest_entity = std::max(longest_entity, tokens.size());
    entities[std::move(tokens)] = std::move(type);
  }

  static RuleLexicon empty() { return {}; }

  static RuleLexicon from_tsv(std::string_view text) {
    RuleLexicon lex;
    for (const auto& line : split_lines(text)) {
      if (line.text[0] == '#') continue;
      auto t1 = line.text.find('\t');
      auto t2 = t1 == std::string::npos ? t1 : line.text.find('\t', t1 + 1);
      if (t2 == std::string::npos)
        throw Error("lexicon line " + std::to_string(line.number) + " needs three fields");
      std::string kind = line.text.substr(0, t1);
      std::string tag = line.text.substr(t1 + 1, t2 - t1 - 1);
      std::string rest = line.text.substr(t2 + 1);
      if (kind == "ner") {
        std::vector<std::string> toks;
        std::istringstream ss(rest);
        for (std::string w; ss >> w;) toks.push_back(w);
        if (toks.empty()) throw Error("lexicon line " + std::to_string(line.number) + " has no tokens");
        lex.add_entity(std::move(toks), tag);
      } else if (kind == "pos") {
        lex.pos[to_lower(rest)] = tag;
      } else {
        throw Error("lexicon line " + std::to_string(line.number) + ": unknown kind '" + kind + "'");
      }
    }
    return lex;
  }

  std::string to_tsv() const {
    std::string out;
    for (const auto& [toks, type] : entities) out += "ner\t" + type + "\t" + join(toks, " ") + "\n";
    std::map<std::string, std::string> sorted(pos.begin(), pos.end());
    for (const auto& [word, tag] : sorted) out += "pos\t" + tag + "\t" + word + "\n";
    return out;
  }

  // Built-in reference lexicon: the shared name pools plus English
  // closed-class words.
  static const RuleLexicon& reference() {
    static const RuleLexicon lex = [] {
      RuleLexicon l;
      for (const auto& n : lexicon::organizations()) l.add_entity({n}, "ORG");
      for (const auto& n : lexicon::agencies()) l.add_entity({n}, "ORG");
      for (const auto& n : lexicon::persons()) l.add_entity({n}, "PERSON");
      for (const auto& n : lexicon::places()) l.add_entity({n}, "GPE");
      l.add_entity({"New", "York"}, "GPE");
      l.add_entity({"United", "States"}, "GPE");
      l.add_entity({"U.S."}, "GPE");
      const std::pair<const char*, std::vector<const char*>> closed[] = {
          {"DET", {"the", "a", "an", "this", "these", "those", "each", "every", "all", "some", "any", "no"}},
          {"ADP", {"in", "on", "at", "of", "for", "with", "by", "from", "under", "during", "after",
                   "before", "into", "over", "about", "through", "between", "against", "per", "via",
                   "to", "within", "without", "across"}},
          {"PRON", {"it", "its", "he", "she", "they", "them", "their", "his", "her", "we", "our",
                    "us", "which", "who", "whom", "i", "you"}},
          {"CCONJ", {"and", "or", "but", "nor"}},
          {"SCONJ", {"as", "because", "while", "if", "although", "whether", "that"}},
          {"AUX", {"is", "was", "were", "are", "be", "been", "being", "has", "have", "had",
                   "will", "would", "can", "could", "may", "might", "shall", "should", "must"}},
          {"PART", {"not", "'s"}},
          {"VERB", {"said", "says", "according", "made", "sold", "bought", "held", "owns"}},
          {"NUM", {"million", "billion", "thousand", "hundred", "one", "two", "three"}},
          {"ADV", {"also", "previously", "recently", "very", "then"}},
          {"ADJ", {"annual", "fiscal", "brief", "lengthy", "familiar", "regulatory"}},
          {"NOUN", {"people", "company", "period", "quarter", "agreement", "filing", "report",
                    "statement", "matter", "announcement", "negotiations"}},
      };
      for (const auto& [tag, words] : closed)
        for (const char* w : words) l.pos.emplace(w, tag);
      return l;
    }();
    return lex;
  }
};

namespace detail {

inline bool is_punct_token(const std::string& t) {
  return !t.empty() && std::all_of(t.begin(), t.end(), [](unsigned char c) {
    return std::ispunct(c) && c != '$' && c != '%' && c != '#' && c != '&' && c != '@';
  });
}

inline bool is_number_token(const std::string& t) {
  bool digit = false;
  for (unsigned char c : t) {
    if (std::isdigit(c))
      digit = true;
    else if (c != ',' && c != '.')
      return false;
  }
  return digit;
}

inline bool is_year(const std::string& t) {
  if (t.size() != 4 || !is_number_token(t)) return false;
  int y = std::stoi(t);
  return y >= 1900 && y <= 2099;
}

inline bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() > suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

inline bool is_capitalized(const std::string& t) {
  return !t.empty() && std::isupper(static_cast<unsigned char>(t[0]));
}

}  // namespace detail

// Deterministic reference tagger: gazetteer longest-match and numeric-shape
// rules for NER; closed-class, shape and suffix rules for POS.
class RuleTagger final : public Tagger {
 public:
  explicit RuleTagger(RuleLexicon lexicon = RuleLexicon::reference())
      : lexicon_(std::move(lexicon)) {}

  std::string name() const override { return "rule_reference"; }

  std::vector<std::string> ner(const std::vector<std::string>& toks) const {
    const std::size_t n = toks.size();
    std::vector<std::string> out(n, kNullNerTag);
    static const std::set<std::string> months(lexicon::months().begin(), lexicon::months().end());
    static const std::set<std::string> org_suffix(lexicon::organization_suffixes().begin(),
                                                  lexicon::organization_suffixes().end());
    std::size_t i = 0;
    while (i < n) {
      // Longest gazetteer match starting at i.
      std::size_t matched = 0;
      std::string type;
      for (std::size_t len = std::min(lexicon_.longest_entity, n - i); len >= 1; --len) {
        std::vector<std::string> key(toks.begin() + static_cast<long>(i),
                                     toks.begin() + static_cast<long>(i + len));
        if (auto it = lexicon_.entities.find(key); it != lexicon_.entities.end()) {
          matched = len;
          type = it->second;
          break;
        }
      }
      if (matched) {
        // "Name Inc" / "Name University": the suffix extends the entity as ORG.
        if (i + matched < n && org_suffix.count(toks[i + matched])) {
          type = "ORG";
          ++matched;
        }
        for (std::size_t k = 0; k < matched; ++k) out[i + k] = type;
        i += matched;
        continue;
      }
      const auto& t = toks[i];
      if (t == "$" && i + 1 < n && detail::is_number_token(toks[i + 1])) {
        std::size_t len = 2;
        if (i + 2 < n && (toks[i + 2] == "million" || toks[i + 2] == "billion")) len = 3;
        for (std::size_t k = 0; k < len; ++k) out[i + k] = "MONEY";
        i += len;
        continue;
      }
      if (months.count(t)) {
        std::size_t len = 1;
        while (i + len < n && len < 3 && detail::is_number_token(toks[i + len])) ++len;
        for (std::size_t k = 0; k < len; ++k) out[i + k] = "DATE";
        i += len;
        continue;
      }
      if (detail::is_year(t)) {
        out[i++] = "DATE";
        continue;
      }
      if (detail::is_number_token(t)) {
        if (i + 1 < n && (toks[i + 1] == "%" || toks[i + 1] == "percent")) {
          out[i] = out[i + 1] = "PERCENT";
          i += 2;
        } else {
          out[i++] = "CARDINAL";
        }
        continue;
      }
      ++i;
    }
    return out;
  }

  std::vector<std::string> pos(const std::vector<std::string>& toks,
                               const std::vector<std::string>& ner_tags) const {
    static const std::set<std::string> named = {"PERSON", "NORP", "FAC", "ORG", "GPE", "LOC",
                                                "PRODUCT", "EVENT", "WORK_OF_ART", "LAW",
                                                "LANGUAGE"};
    std::vector<std::string> out;
    out.reserve(toks.size());
    for (std::size_t i = 0; i < toks.size(); ++i) {
      const auto& t = toks[i];
      const auto lower = to_lower(t);
      if (detail::is_punct_token(t)) {
        out.push_back("PUNCT");
      } else if (t == "$" || t == "%" || t == "#" || t == "&" || t == "@") {
        out.push_back("SYM");
      } else if (detail::is_number_token(t)) {
        out.push_back("NUM");
      } else if (named.count(ner_tags[i])) {
        out.push_back("PROPN");
      } else if (auto it = lexicon_.pos.find(lower); it != lexicon_.pos.end()) {
        out.push_back(it->second);
      } else if (detail::is_capitalized(t) && (i > 0 || ner_tags[i] != kNullNerTag)) {
        out.push_back("PROPN");
      } else if (detail::ends_with(lower, "ly")) {
        out.push_back("ADV");
      } else if (detail::ends_with(lower, "ed") || detail::ends_with(lower, "ing")) {
        out.push_back("VERB");
      } else if (detail::ends_with(lower, "ous") || detail::ends_with(lower, "ful") ||
                 detail::ends_with(lower, "able") || detail::ends_with(lower, "ible") ||
                 detail::ends_with(lower, "ive") || detail::ends_with(lower, "al") ||
                 detail::ends_with(lower, "ic") || detail::ends_with(lower, "less")) {
        out.push_back("ADJ");
      } else {
        out.push_back("NOUN");
      }
    }
    return out;
  }

 protected:
  TagAnnotation tag_impl(const RelationInstance& inst) override {
    auto ner_tags = ner(inst.tokens);
    auto pos_tags = pos(inst.tokens, ner_tags);
    return {inst.id, std::move(ner_tags), std::move(pos_tags)};
  }

 private:
  RuleLexicon lexicon_;
};

// A source token with its character range in the space-joined sentence.
struct SourceToken {
  std::string text;
  std::size_t begin = 0;
  std::size_t end = 0;
};

// A tagger-side token or entity span, half-open character range.
struct TaggedSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::string ner = kNullNerTag;
  std::string pos = kUncoveredPosTag;
};

// Joins tokens with single spaces and records each token's character range.
inline std::pair<std::string, std::vector<SourceToken>> with_offsets(
    const std::vector<std::string>& tokens) {
  std::string text;
  std::vector<SourceToken> out;
  for (const auto& t : tokens) {
    if (!text.empty()) text += ' ';
    out.push_back({t, text.size(), text.size() + t.size()});
    text += t;
  }
  return {std::move(text), std::move(out)};
}

struct AlignedTags {
  std::vector<std::string> ner;
  std::vector<std::string> pos;
};

// Projects tagger spans onto source tokens. A token takes the tags of the span
// covering its first character; when several entity spans overlap the token
// the longest one supplies the NER tag. Uncovered tokens get "O" / "X".
inline AlignedTags align_tags(std::string_view source_text, const std::vector<SourceToken>& source,
                              std::string_view tagger_text, const std::vector<TaggedSpan>& spans) {
  if (source_text != tagger_text)
    throw Error("tagger text does not match source text: '" + std::string(tagger_text) +
                "' vs '" + std::string(source_text) + "'");
  AlignedTags out;
  out.ner.reserve(source.size());
  out.pos.reserve(source.size());
  for (const auto& tok : source) {
    const TaggedSpan* first = nullptr;
    const TaggedSpan* longest_entity = nullptr;
    std::size_t entity_touches = 0;
    for (const auto& s : spans) {
      if (s.begin <= tok.begin && tok.begin < s.end && !first) first = &s;
      bool overlaps = s.begin < tok.end && tok.begin < s.end;
      if (overlaps && s.ner != kNullNerTag) {
        ++entity_touches;
        if (!longest_entity || s.end - s.begin > longest_entity->end - longest_entity->begin)
          longest_entity = &s;
      }
    }
    if (entity_touches > 1)
      out.ner.push_back(longest_entity->ner);
    else
      out.ner.push_back(first ? first->ner : std::string(kNullNerTag));
    out.pos.push_back(first ? first->pos : std::string(kUncoveredPosTag));
  }
  return out;
}

// Adapter over an external tagger's output, precomputed into a spans file.
class ExternalTagger final : public Tagger {
 public:
  explicit ExternalTagger(const std::filesystem::path& spans_file) : path_(spans_file) {
    if (!std::filesystem::exists(spans_file))
      throw Error("external tagger adapter 'external_adapter' unavailable: spans file " +
                  spans_file.string() + " not found");
    for (const auto& line : split_lines(read_file(spans_file))) {
      json j;
      try {
        j = json::parse(line.text);
      } catch (const json::exception& e) {
        throw Error("external tagger adapter: malformed line " + std::to_string(line.number) +
                    " in " + spans_file.string());
      }
      Entry e;
      e.text = j.at("text").get<std::string>();
      for (const auto& s : j.at("spans"))
        e.spans.push_back({s.at("start").get<std::size_t>(), s.at("end").get<std::size_t>(),
                           s.value("ner", std::string(kNullNerTag)),
                           s.value("pos", std::string(kUncoveredPosTag))});
      entries_[j.at("instance_id").get<std::string>()] = std::move(e);
    }
  }

  std::string name() const override { return "external_adapter(" + path_.string() + ")"; }

 protected:
  TagAnnotation tag_impl(const RelationInstance& inst) override {
    auto it = entries_.find(inst.id);
    if (it == entries_.end())
      throw Error("external tagger adapter '" + name() + "' has no output for instance " + inst.id);
    auto [text, source] = with_offsets(inst.tokens);
    try {
      auto aligned = align_tags(text, source, it->second.text, it->second.spans);
      return {inst.id, std::move(aligned.ner), std::move(aligned.pos)};
    } catch (const Error& e) {
      throw Error("tag alignment failure for instance " + inst.id + ": " + e.what());
    }
  }

 private:
  struct Entry {
    std::string text;
    std::vector<TaggedSpan> spans;
  };
  std::filesystem::path path_;
  std::unordered_map<std::string, Entry> entries_;
};

inline std::unique_ptr<Tagger> make_tagger(const TaggerSpec& spec) {
  switch (spec.kind) {
    case TaggerKind::rule_reference:
      if (spec.config.contains("lexicon"))
        return std::make_unique<RuleTagger>(
            RuleLexicon::from_tsv(read_file(spec.config.at("lexicon").get<std::string>())));
      return std::make_unique<RuleTagger>();
    case TaggerKind::external_adapter:
      if (!spec.config.contains("spans_file"))
        throw Error("external tagger adapter 'external_adapter' unavailable: no spans_file configured");
      return std::make_unique<ExternalTagger>(spec.config.at("spans_file").get<std::string>());
  }
  throw Error("unregistered tagger kind");
}

// Forces the gold e1/e2 entity types onto their span tokens.
inline void apply_gold_overlay(const RelationInstance& inst, TagAnnotation& ann) {
  for (const auto* span : {&inst.e1, &inst.e2})
    for (int i = span->start; i < span->end; ++i)
      ann.ner_tags[static_cast<std::size_t>(i)] = span->entity_type;
}

inline TagAnnotation tag_with(Tagger& tagger, const RelationInstance& inst, const TaggerSpec& spec) {
  auto ann = tagger.tag(inst);
  if (spec.gold_overlay()) apply_gold_overlay(inst, ann);
  return ann;
}

inline TagAnnotation tag_instance(const RelationInstance& inst, const TaggerSpec& spec) {
  auto tagger = make_tagger(spec);
  return tag_with(*tagger, inst, spec);
}

using AnnotationMap = std::map<std::string, TagAnnotation>;

struct TagCorpusOptions {
  std::optional<std::filesystem::path> cache_path;
  unsigned workers = 1;
};

struct TagCorpusResult {
  AnnotationMap annotations;
  std::size_t tagger_invocations = 0;
  bool cache_hit = false;
  std::vector<std::string> warnings;
};

namespace detail {

inline json cache_header(const TaggerSpec& spec) {
  return {{"format", "finrex-tag-cache"},
          {"version", 1},
          {"tagger_kind", to_string(spec.kind)},
          {"config_hash", spec.config_hash()}};
}

// Returns the cached annotations when the cache matches `spec` and covers
// every instance of `corpus`; otherwise nullopt plus a warning.
inline std::optional<AnnotationMap> read_cache(const std::filesystem::path& path,
                                               const Corpus& corpus, const TaggerSpec& spec,
                                               std::vector<std::string>& warnings) {
  if (!std::filesystem::exists(path)) return std::nullopt;
  AnnotationMap cached;
  try {
    auto lines = split_lines(read_file(path));
    if (lines.empty()) throw Error("empty cache");
    auto header = json::parse(lines[0].text);
    if (header != cache_header(spec)) {
      warnings.push_back("tag cache " + path.string() + " is stale (tagger or config changed); retagging");
      return std::nullopt;
    }
    for (std::size_t i = 1; i < lines.size(); ++i) {
      auto ann = TagAnnotation::from_json(json::parse(lines[i].text));
      cached.emplace(ann.instance_id, std::move(ann));
    }
  } catch (const std::exception& e) {
    warnings.push_back("tag cache " + path.string() + " is corrupted (" + e.what() + "); retagging");
    return std::nullopt;
  }
  AnnotationMap out;
  for (const auto& inst : corpus.instances) {
    auto it = cached.find(inst.id);
    if (it == cached.end() || it->second.ner_tags.size() != inst.tokens.size() ||
        it->second.pos_tags.size() != inst.tokens.size()) {
      warnings.push_back("tag cache " + path.string() + " does not cover instance " + inst.id +
                         "; retagging");
      return std::nullopt;
    }
    out.emplace(inst.id, it->second);
  }
  return out;
}

}  // namespace detail

inline std::string serialize_tag_cache(const AnnotationMap& annotations, const TaggerSpec& spec) {
  std::string out = detail::cache_header(spec).dump() + "\n";
  for (const auto& [id, ann] : annotations) out += ann.to_json().dump() + "\n";
  return out;
}

inline AnnotationMap parse_tag_file(std::string_view text) {
  AnnotationMap out;
  for (const auto& line : split_lines(text)) {
    auto j = json::parse(line.text);
    if (j.contains("format")) continue;  // cache header
    auto ann = TagAnnotation::from_json(j);
    out.emplace(ann.instance_id, std::move(ann));
  }
  return out;
}

// Tags every instance once. With `workers > 1` instances are partitioned
// across workers, each owning its own tagger; the result map is keyed by
// instance id, so output does not depend on scheduling.
inline TagCorpusResult tag_corpus(const Corpus& corpus, const TaggerSpec& spec,
                                  const TagCorpusOptions& opts = {}) {
  TagCorpusResult result;
  if (opts.cache_path) {
    if (auto cached = detail::read_cache(*opts.cache_path, corpus, spec, result.warnings)) {
      result.annotations = std::move(*cached);
      result.cache_hit = true;
      return result;
    }
  }

  const auto& insts = corpus.instances;
  const unsigned workers =
      std::max(1U, std::min<unsigned>(opts.workers, static_cast<unsigned>(insts.size())));
  std::vector<std::vector<TagAnnotation>> partial(workers);
  std::vector<std::size_t> counts(workers, 0);
  std::vector<std::exception_ptr> errors(workers);
  auto work = [&](unsigned w) {
    try {
      auto tagger = make_tagger(spec);
      for (std::size_t i = w; i < insts.size(); i += workers) {
        try {
          partial[w].push_back(tag_with(*tagger, insts[i], spec));
        } catch (const Error& e) {
          std::string msg = e.what();
          if (msg.find(insts[i].id) == std::string::npos) msg += " (instance " + insts[i].id + ")";
          throw Error(msg);
        }
      }
      counts[w] = tagger->invocations();
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> threads;
    for (unsigned w = 0; w < workers; ++w) threads.emplace_back(work, w);
    for (auto& t : threads) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  for (unsigned w = 0; w < workers; ++w) {
    result.tagger_invocations += counts[w];
    for (auto& ann : partial[w]) result.annotations.emplace(ann.instance_id, std::move(ann));
  }

  if (opts.cache_path) {
    auto tmp = *opts.cache_path;
    tmp += ".tmp";
    write_file(tmp, serialize_tag_cache(result.annotations, spec));
    std::filesystem::rename(tmp, *opts.cache_path);
  }
  return result;
}

}  // namespace finrex
