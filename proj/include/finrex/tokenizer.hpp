#pragma once

// Word-level tokenizer for the scratch backbone, with bracketed tag tokens
// optionally registered as atomic special tokens.

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "finrex/augment.hpp"
#include "finrex/backbone.hpp"
#include "finrex/common.hpp"
#include "finrex/tagging.hpp"

namespace finrex {

inline constexpr const char* kPadToken = "[PAD]";
inline constexpr const char* kUnkToken = "[UNK]";
inline constexpr const char* kClsToken = "[CLS]";
inline constexpr const char* kSepToken = "[SEP]";

// Every bracketed form the standard inventories and entity markers can emit.
inline std::set<std::string> standard_tag_tokens() {
  std::set<std::string> out;
  auto inv = TagInventory::standard();
  for (const auto& t : inv.ner_tags) out.insert(bracketed(t));
  for (const auto& t : inv.pos_tags) out.insert(bracketed(t));
  out.insert(bracketed(kNullNerTag));
  for (const char* m : kEntityMarkers) out.insert(m);
  return out;
}

class WordTokenizer {
 public:
  WordTokenizer() = default;

  // Vocabulary: specials, registered tag tokens (sorted), then training words
  // by descending frequency with ties in lexicographic order.
  static WordTokenizer build(const std::vector<AugmentedExample>& train, bool add_tag_tokens,
                             std::size_t min_freq = 1) {
    WordTokenizer tok;
    tok.add_tag_tokens_ = add_tag_tokens;
    for (const char* s : {kPadToken, kUnkToken, kClsToken, kSepToken}) tok.add(s);
    if (add_tag_tokens) {
      std::set<std::string> tags = standard_tag_tokens();
      for (const auto& ex : train)
        for (const auto& seg : ex.segments)
          for (const auto& w : seg)
            if (is_bracketed(w)) tags.insert(w);
      for (const auto& t : tags) {
        tok.add(t);
        tok.tag_tokens_.insert(t);
      }
    }
    std::map<std::string, std::size_t> freq;
    for (const auto& ex : train)
      for (const auto& seg : ex.segments)
        for (const auto& w : seg)
          for (const auto& piece : tok.pieces(w))
            if (!tok.index_.count(piece)) ++freq[piece];
    std::vector<std::pair<std::string, std::size_t>> words(freq.begin(), freq.end());
    std::stable_sort(words.begin(), words.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    for (const auto& [w, f] : words)
      if (f >= min_freq) tok.add(w);
    return tok;
  }

  // A word's pieces: itself, or for an unregistered bracketed tag the
  // bracket/inner/bracket split a plain word tokenizer would produce.
  std::vector<std::string> pieces(const std::string& word) const {
    if (!is_bracketed(word) || tag_tokens_.count(word)) return {word};
    return {"[", word.substr(1, word.size() - 2), "]"};
  }

  int id(const std::string& piece) const {
    auto it = index_.find(piece);
    return it == index_.end() ? unk_id() : it->second;
  }

  std::vector<int> encode_word(const std::string& word) const {
    std::vector<int> ids;
    for (const auto& p : pieces(word)) ids.push_back(id(p));
    return ids;
  }

  bool is_tag_token(const std::string& t) const { return tag_tokens_.count(t) > 0; }
  bool add_tag_tokens() const { return add_tag_tokens_; }
  const std::set<std::string>& tag_tokens() const { return tag_tokens_; }
  const std::vector<std::string>& vocabulary() const { return vocab_; }
  std::size_t size() const { return vocab_.size(); }
  int pad_id() const { return 0; }
  int unk_id() const { return 1; }
  int cls_id() const { return 2; }
  int sep_id() const { return 3; }

  json to_json() const {
    return {{"vocabulary", vocab_},
            {"tag_tokens", std::vector<std::string>(tag_tokens_.begin(), tag_tokens_.end())},
            {"add_tag_tokens", add_tag_tokens_}};
  }
  static WordTokenizer from_json(const json& j) {
    WordTokenizer tok;
    tok.add_tag_tokens_ = j.at("add_tag_tokens").get<bool>();
    for (const auto& w : j.at("vocabulary")) tok.add(w.get<std::string>());
    for (const auto& t : j.at("tag_tokens")) tok.tag_tokens_.insert(t.get<std::string>());
    return tok;
  }

 private:
  void add(const std::string& w) {
    if (index_.emplace(w, static_cast<int>(vocab_.size())).second) vocab_.push_back(w);
  }

  bool add_tag_tokens_ = true;
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, int> index_;
  std::set<std::string> tag_tokens_;
};

struct EncodedInput {
  std::vector<int> ids;
  std::vector<int> segment_ids;
  std::vector<int> attention_mask;
  std::vector<std::size_t> segment_lengths;  // content pieces kept per segment
  std::vector<std::string> warnings;

  std::size_t length() const { return ids.size(); }
};

// Joins segments as [CLS] s1 [SEP] s2 [SEP] ... with segment ids 0, 1, 2. When
// the result exceeds max_length, the currently longest segment (first on ties)
// loses its last piece until it fits.
inline EncodedInput encode_example(const AugmentedExample& ex, const EncoderSpec& spec,
                                   const WordTokenizer& tok) {
  if (ex.segments.empty()) throw Error("example " + ex.instance_id + " has no segments");
  std::vector<std::vector<int>> segs;
  EncodedInput out;
  std::set<std::string> warned;
  for (std::size_t s = 0; s < ex.segments.size(); ++s) {
    if (ex.segments[s].empty())
      throw Error("example " + ex.instance_id + " has an empty segment " + std::to_string(s));
    std::vector<int> ids;
    for (const auto& w : ex.segments[s]) {
      auto p = tok.encode_word(w);
      if (p.size() > 1 && is_bracketed(w) && warned.insert(w).second)
        out.warnings.push_back("tag token '" + w + "' is not registered; split into " +
                               std::to_string(p.size()) + " pieces");
      ids.insert(ids.end(), p.begin(), p.end());
    }
    segs.push_back(std::move(ids));
  }

  const std::size_t specials = 1 + segs.size();
  if (static_cast<std::size_t>(spec.max_length) <= specials)
    throw Error("max_length too small for the segment structure");
  const std::size_t budget = static_cast<std::size_t>(spec.max_length) - specials;
  auto total = [&] {
    std::size_t t = 0;
    for (const auto& s : segs) t += s.size();
    return t;
  };
  while (total() > budget) {
    auto longest = std::max_element(segs.begin(), segs.end(),
                                    [](const auto& a, const auto& b) { return a.size() < b.size(); });
    longest->pop_back();
  }

  out.ids.push_back(tok.cls_id());
  out.segment_ids.push_back(0);
  for (std::size_t s = 0; s < segs.size(); ++s) {
    out.ids.insert(out.ids.end(), segs[s].begin(), segs[s].end());
    out.ids.push_back(tok.sep_id());
    out.segment_ids.insert(out.segment_ids.end(), segs[s].size() + 1, static_cast<int>(s));
    out.segment_lengths.push_back(segs[s].size());
  }
  out.attention_mask.assign(out.ids.size(), 1);
  return out;
}

}  // namespace finrex
