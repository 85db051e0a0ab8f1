#pragma once

// The six input-construction strategies: raw text, text plus NER and/or POS
// segments, and text with entity tokens replaced by their NER tag.

#include <array>
#include <map>
#include <string>
#include <vector>

#include "finrex/common.hpp"
#include "finrex/corpus.hpp"
#include "finrex/tagging.hpp"

namespace finrex {

enum class StrategyId { T, TN, TP, TNP, TrN, TrNP };

inline constexpr std::array<StrategyId, 6> kAllStrategies = {
    StrategyId::T, StrategyId::TN, StrategyId::TP, StrategyId::TNP, StrategyId::TrN,
    StrategyId::TrNP};

inline std::string to_string(StrategyId s) {
  switch (s) {
    case StrategyId::T: return "T";
    case StrategyId::TN: return "TN";
    case StrategyId::TP: return "TP";
    case StrategyId::TNP: return "TNP";
    case StrategyId::TrN: return "TrN";
    case StrategyId::TrNP: return "TrNP";
  }
  return "T";
}

// Accepts either the display form ("TrNP") or the lower-case CLI form ("trnp").
inline StrategyId parse_strategy(std::string_view s) {
  const auto lower = to_lower(std::string(s));
  for (auto id : kAllStrategies)
    if (to_lower(to_string(id)) == lower) return id;
  throw Error("unknown strategy '" + std::string(s) + "' (expected t|tn|tp|tnp|trn|trnp)");
}

inline std::size_t segment_count(StrategyId s) {
  switch (s) {
    case StrategyId::T:
    case StrategyId::TrN: return 1;
    case StrategyId::TN:
    case StrategyId::TP:
    case StrategyId::TrNP: return 2;
    case StrategyId::TNP: return 3;
  }
  return 1;
}

inline std::string bracketed(std::string_view tag) { return "[" + std::string(tag) + "]"; }

inline bool is_bracketed(std::string_view tok) {
  return tok.size() > 2 && tok.front() == '[' && tok.back() == ']';
}

inline std::vector<std::string> bracket_all(const std::vector<std::string>& tags) {
  std::vector<std::string> out;
  out.reserve(tags.size());
  for (const auto& t : tags) out.push_back(bracketed(t));
  return out;
}

// Replaces every token whose NER tag is not "O" with the bracketed tag.
// Consecutive entity tokens each keep their own replacement, so the output is
// exactly as long as the input.
inline std::vector<std::string> build_trn(const std::vector<std::string>& tokens,
                                          const std::vector<std::string>& ner_tags) {
  if (tokens.size() != ner_tags.size())
    throw Error("build_trn: " + std::to_string(tokens.size()) + " tokens but " +
                std::to_string(ner_tags.size()) + " NER tags");
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i)
    out.push_back(ner_tags[i] == kNullNerTag ? tokens[i] : bracketed(ner_tags[i]));
  return out;
}

struct AugmentedExample {
  std::string instance_id;
  StrategyId strategy = StrategyId::T;
  std::vector<std::vector<std::string>> segments;
  int label_index = 0;

  bool operator==(const AugmentedExample&) const = default;

  ordered_json to_json() const {
    return {{"instance_id", instance_id},
            {"strategy", to_string(strategy)},
            {"segments", segments},
            {"label_index", label_index}};
  }
  static AugmentedExample from_json(const json& j) {
    return {j.at("instance_id").get<std::string>(),
            parse_strategy(j.at("strategy").get<std::string>()),
            j.at("segments").get<std::vector<std::vector<std::string>>>(),
            j.at("label_index").get<int>()};
  }
};

inline AugmentedExample build_sequence(const RelationInstance& inst, const TagAnnotation& ann,
                                       StrategyId strategy, const LabelVocabulary& vocab) {
  const auto n = inst.tokens.size();
  if (ann.ner_tags.size() != n || ann.pos_tags.size() != n)
    throw Error("annotation for " + inst.id + " is not aligned to its tokens");
  auto label = vocab.index_of(inst.relation);
  if (!label) throw Error("relation '" + inst.relation + "' of " + inst.id + " not in vocabulary");

  AugmentedExample ex{inst.id, strategy, {}, *label};
  auto& seg = ex.segments;
  switch (strategy) {
    case StrategyId::T:
      seg = {inst.tokens};
      break;
    case StrategyId::TN:
      seg = {inst.tokens, bracket_all(ann.ner_tags)};
      break;
    case StrategyId::TP:
      seg = {inst.tokens, bracket_all(ann.pos_tags)};
      break;
    case StrategyId::TNP:
      seg = {inst.tokens, bracket_all(ann.ner_tags), bracket_all(ann.pos_tags)};
      break;
    case StrategyId::TrN:
      seg = {build_trn(inst.tokens, ann.ner_tags)};
      break;
    case StrategyId::TrNP:
      seg = {build_trn(inst.tokens, ann.ner_tags), bracket_all(ann.pos_tags)};
      break;
  }
  return ex;
}

// One example per instance in corpus order.
inline std::vector<AugmentedExample> augment_corpus(const Corpus& corpus,
                                                    const AnnotationMap& annotations,
                                                    StrategyId strategy) {
  std::vector<std::string> missing;
  for (const auto& inst : corpus.instances)
    if (!annotations.count(inst.id)) missing.push_back(inst.id);
  if (!missing.empty())
    throw Error("missing tag annotations for " + std::to_string(missing.size()) +
                " instance(s): " + join(missing, ", "));
  std::vector<AugmentedExample> out;
  out.reserve(corpus.instances.size());
  for (const auto& inst : corpus.instances)
    out.push_back(build_sequence(inst, annotations.at(inst.id), strategy, corpus.vocabulary));
  return out;
}

inline std::string serialize_examples(const std::vector<AugmentedExample>& examples) {
  std::string out;
  for (const auto& ex : examples) out += ex.to_json().dump() + "\n";
  return out;
}

inline std::vector<AugmentedExample> parse_examples(std::string_view text) {
  std::vector<AugmentedExample> out;
  for (const auto& line : split_lines(text)) {
    try {
      out.push_back(AugmentedExample::from_json(json::parse(line.text)));
    } catch (const json::exception& e) {
      throw Error("augmented data line " + std::to_string(line.number) + ": " + e.what());
    }
  }
  return out;
}

// Reserved argument markers for the optional entity-marking mode.
inline constexpr std::array<const char*, 4> kEntityMarkers = {"[E1]", "[/E1]", "[E2]", "[/E2]"};

// Wraps the e1 and e2 spans in marker tokens before strategy construction.
// Marker positions carry NER "O" and POS "X"; spans are shifted to cover the
// same inner tokens. Overlapping spans are marked in start order.
inline std::pair<RelationInstance, TagAnnotation> mark_entities(const RelationInstance& inst,
                                                                const TagAnnotation& ann) {
  struct Insert {
    int position;  // insert before this source index
    int order;     // tie-break: closing markers before opening ones
    const char* marker;
  };
  std::vector<Insert> inserts = {{inst.e1.start, 1, kEntityMarkers[0]},
                                 {inst.e1.end, 0, kEntityMarkers[1]},
                                 {inst.e2.start, 1, kEntityMarkers[2]},
                                 {inst.e2.end, 0, kEntityMarkers[3]}};
  std::stable_sort(inserts.begin(), inserts.end(), [](const Insert& a, const Insert& b) {
    return a.position != b.position ? a.position < b.position : a.order < b.order;
  });

  RelationInstance out = inst;
  TagAnnotation tags{ann.instance_id, {}, {}};
  out.tokens.clear();
  std::size_t next = 0;
  std::map<std::string, int> marker_at;
  auto emit_markers_before = [&](int pos) {
    while (next < inserts.size() && inserts[next].position == pos) {
      marker_at[inserts[next].marker] = static_cast<int>(out.tokens.size());
      out.tokens.emplace_back(inserts[next].marker);
      tags.ner_tags.emplace_back(kNullNerTag);
      tags.pos_tags.emplace_back(kUncoveredPosTag);
      ++next;
    }
  };
  for (std::size_t i = 0; i < inst.tokens.size(); ++i) {
    emit_markers_before(static_cast<int>(i));
    out.tokens.push_back(inst.tokens[i]);
    tags.ner_tags.push_back(ann.ner_tags[i]);
    tags.pos_tags.push_back(ann.pos_tags[i]);
  }
  emit_markers_before(static_cast<int>(inst.tokens.size()));
  out.e1.start = marker_at["[E1]"] + 1;
  out.e1.end = marker_at["[/E1]"];
  out.e2.start = marker_at["[E2]"] + 1;
  out.e2.end = marker_at["[/E2]"];
  return {std::move(out), std::move(tags)};
}

}  // namespace finrex
