#pragma once

// Relation-extraction data model, canonical JSONL I/O, and REFinD-style import.

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "finrex/common.hpp"

namespace finrex {

enum class Split { train, dev, test };

inline std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::dev: return "dev";
    case Split::test: return "test";
  }
  return "train";
}

inline std::optional<Split> parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "dev" || s == "validation" || s == "valid") return Split::dev;
  if (s == "test") return Split::test;
  return std::nullopt;
}

// Half-open token range [start, end) plus the annotated entity type.
struct EntitySpan {
  int start = 0;
  int end = 0;
  std::string entity_type;

  bool operator==(const EntitySpan&) const = default;
};

struct RelationInstance {
  std::string id;
  std::vector<std::string> tokens;
  EntitySpan e1;
  EntitySpan e2;
  std::string relation;
  Split split = Split::train;

  bool operator==(const RelationInstance&) const = default;
};

// Ordered relation labels with a bijective label <-> index mapping. The null
// class must be one of the labels.
class LabelVocabulary {
 public:
  LabelVocabulary() = default;

  LabelVocabulary(std::vector<std::string> labels, std::string no_relation_label)
      : labels_(std::move(labels)), no_relation_(std::move(no_relation_label)) {
    for (std::size_t i = 0; i < labels_.size(); ++i) {
      if (!index_.emplace(labels_[i], static_cast<int>(i)).second)
        throw Error("duplicate relation label: " + labels_[i]);
    }
    if (!index_.count(no_relation_))
      throw Error("no-relation label '" + no_relation_ + "' missing from label vocabulary");
  }

  // Null class first, remaining observed labels in lexicographic order.
  static LabelVocabulary from_observed(const std::set<std::string>& observed,
                                       const std::string& no_relation_label) {
    std::vector<std::string> labels{no_relation_label};
    for (const auto& l : observed)
      if (l != no_relation_label) labels.push_back(l);
    return LabelVocabulary(std::move(labels), no_relation_label);
  }

  std::optional<int> index_of(const std::string& label) const {
    auto it = index_.find(label);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  bool contains(const std::string& label) const { return index_.count(label) > 0; }
  const std::string& label(int index) const { return labels_.at(static_cast<std::size_t>(index)); }
  const std::vector<std::string>& labels() const { return labels_; }
  const std::string& no_relation_label() const { return no_relation_; }
  int no_relation_index() const { return index_.at(no_relation_); }
  std::size_t size() const { return labels_.size(); }
  bool empty() const { return labels_.empty(); }

  json to_json() const { return {{"labels", labels_}, {"no_relation_label", no_relation_}}; }
  static LabelVocabulary from_json(const json& j) {
    return LabelVocabulary(j.at("labels").get<std::vector<std::string>>(),
                           j.at("no_relation_label").get<std::string>());
  }

  bool operator==(const LabelVocabulary& o) const {
    return labels_ == o.labels_ && no_relation_ == o.no_relation_;
  }

 private:
  std::vector<std::string> labels_;
  std::string no_relation_;
  std::unordered_map<std::string, int> index_;
};

// The eight REFinD entity types.
inline std::set<std::string> refind_entity_types() {
  return {"ORG", "PERSON", "GPE", "UNIV", "GOV_AGY", "DATE", "MONEY", "TITLE"};
}

// The 22 REFinD relation labels, null class first.
inline const std::vector<std::string>& refind_relation_labels() {
  static const std::vector<std::string> labels = {
      "no_relation",           "org:date:formed_on",      "org:gpe:operations_in",
      "pers:org:member_of",    "pers:org:employee_of",    "pers:gov_agy:member_of",
      "org:org:acquired_by",   "org:money:loss_of",       "org:money:profit_of",
      "pers:univ:employee_of", "org:date:acquired_on",    "pers:title:title",
      "pers:org:founder_of",   "org:money:revenue_of",    "pers:univ:attended_by",
      "org:gpe:headquartered_in", "org:money:cost_of",    "pers:univ:member_of",
      "org:org:subsidiary_of", "org:org:shares_of",       "org:gpe:formed_in",
      "org:org:agreement_with"};
  return labels;
}

struct Corpus {
  std::vector<RelationInstance> instances;
  LabelVocabulary vocabulary;
  std::set<std::string> entity_types;

  bool operator==(const Corpus& o) const {
    return instances == o.instances && vocabulary == o.vocabulary &&
           entity_types == o.entity_types;
  }

  // Instances tagged with `name`, in corpus order.
  std::vector<RelationInstance> split(Split name) const {
    std::vector<RelationInstance> out;
    for (const auto& inst : instances)
      if (inst.split == name) out.push_back(inst);
    return out;
  }

  std::size_t count(Split name) const {
    return static_cast<std::size_t>(std::count_if(
        instances.begin(), instances.end(), [&](const auto& i) { return i.split == name; }));
  }
};

inline std::vector<RelationInstance> split(const Corpus& corpus, Split name) {
  return corpus.split(name);
}

// Every violated invariant of `inst`; empty iff well-formed. Entity types are
// checked only when a registered set is supplied.
inline std::vector<std::string> validate_instance(
    const RelationInstance& inst, const LabelVocabulary& vocab,
    const std::set<std::string>* entity_types = nullptr) {
  std::vector<std::string> v;
  const int n = static_cast<int>(inst.tokens.size());
  if (inst.id.empty()) v.push_back("empty instance id");
  if (n == 0) v.push_back("empty token list");
  for (int i = 0; i < n; ++i)
    if (inst.tokens[static_cast<std::size_t>(i)].empty())
      v.push_back("empty token at index " + std::to_string(i));

  auto check_span = [&](const EntitySpan& s, const char* name) {
    if (s.start < 0 || s.start >= s.end || s.end > n)
      v.push_back(std::string(name) + " span [" + std::to_string(s.start) + ", " +
                  std::to_string(s.end) + ") out of bounds for " + std::to_string(n) +
                  " tokens");
    if (s.entity_type.empty())
      v.push_back(std::string(name) + " has empty entity type");
    else if (entity_types && !entity_types->count(s.entity_type))
      v.push_back(std::string(name) + " entity type '" + s.entity_type + "' not registered");
  };
  check_span(inst.e1, "e1");
  check_span(inst.e2, "e2");
  if (inst.e1.start == inst.e2.start && inst.e1.end == inst.e2.end)
    v.push_back("identical entity spans");
  if (!vocab.contains(inst.relation))
    v.push_back("relation '" + inst.relation + "' not in label vocabulary");
  return v;
}

// Source field names for each canonical field. Defaults name the canonical
// format itself.
struct FieldMap {
  std::string id = "id";
  std::string tokens = "tokens";
  std::string e1_start = "e1_start";
  std::string e1_end = "e1_end";
  std::string e1_type = "e1_type";
  std::string e2_start = "e2_start";
  std::string e2_end = "e2_end";
  std::string e2_type = "e2_type";
  std::string relation = "relation";
  std::string split = "split";
  // Source end offsets point at the last entity token rather than one past it.
  bool end_inclusive = false;

  static FieldMap canonical() { return {}; }

  // TACRED-style layout used by the REFinD release: "token" array, inclusive
  // span ends, split carried by the file rather than the record.
  static FieldMap refind() {
    FieldMap m;
    m.tokens = "token";
    m.end_inclusive = true;
    return m;
  }

  // Overlays the keys present in `j` on top of `base`.
  static FieldMap from_json(const json& j, FieldMap base) {
    auto take = [&](const char* key, std::string& field) {
      if (j.contains(key)) field = j.at(key).get<std::string>();
    };
    take("id", base.id);
    take("tokens", base.tokens);
    take("e1_start", base.e1_start);
    take("e1_end", base.e1_end);
    take("e1_type", base.e1_type);
    take("e2_start", base.e2_start);
    take("e2_end", base.e2_end);
    take("e2_type", base.e2_type);
    take("relation", base.relation);
    take("split", base.split);
    if (j.contains("end_inclusive")) base.end_inclusive = j.at("end_inclusive").get<bool>();
    return base;
  }
};

struct ImportOptions {
  FieldMap field_map;
  // When set, labels outside it are a hard failure; otherwise the vocabulary is
  // built from observed labels.
  std::optional<LabelVocabulary> fixed_vocabulary;
  // When set, entity types outside it are per-record violations; otherwise the
  // registered set is whatever the valid records use.
  std::optional<std::set<std::string>> entity_types;
  // Used for records with no split field (REFinD ships one file per split).
  std::optional<Split> default_split;
  std::string no_relation_label = "no_relation";
};

struct RecordError {
  std::size_t record;  // 1-based record number (line number for JSONL)
  std::string id;
  std::vector<std::string> violations;

  json to_json() const { return {{"record", record}, {"id", id}, {"violations", violations}}; }
};

struct ImportReport {
  std::size_t records_seen = 0;
  std::size_t records_accepted = 0;
  std::vector<RecordError> errors;

  std::string errors_jsonl() const {
    std::string out;
    for (const auto& e : errors) out += e.to_json().dump() + "\n";
    return out;
  }
};

struct ImportResult {
  Corpus corpus;
  ImportReport report;
};

namespace detail {

struct RawRecord {
  std::size_t number;
  json value;
  std::string parse_error;
};

inline std::vector<RawRecord> parse_records(std::string_view text) {
  std::vector<RawRecord> records;
  auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return records;
  if (text[first] == '[') {
    json arr;
    try {
      arr = json::parse(text);
    } catch (const json::exception& e) {
      throw Error(std::string("malformed JSON array: ") + e.what());
    }
    std::size_t n = 1;
    for (auto& rec : arr) records.push_back({n++, std::move(rec), {}});
    return records;
  }
  for (const auto& line : split_lines(text)) {
    RawRecord rec{line.number, {}, {}};
    try {
      rec.value = json::parse(line.text);
    } catch (const json::exception& e) {
      rec.parse_error = std::string("malformed JSON: ") + e.what();
    }
    records.push_back(std::move(rec));
  }
  return records;
}

inline std::optional<RelationInstance> decode_record(const json& rec, const FieldMap& m,
                                                     const ImportOptions& opts,
                                                     std::vector<std::string>& violations) {
  if (!rec.is_object()) {
    violations.push_back("record is not an object");
    return std::nullopt;
  }
  RelationInstance inst;
  auto missing = [&](const std::string& key) {
    violations.push_back("missing field '" + key + "'");
  };
  auto get_string = [&](const std::string& key, std::string& out) {
    if (!rec.contains(key)) return missing(key);
    const auto& v = rec.at(key);
    if (v.is_string())
      out = v.get<std::string>();
    else if (v.is_number_integer())
      out = std::to_string(v.get<long long>());
    else
      violations.push_back("field '" + key + "' is not a string");
  };
  auto get_int = [&](const std::string& key, int& out) {
    if (!rec.contains(key)) return missing(key);
    const auto& v = rec.at(key);
    if (!v.is_number_integer())
      violations.push_back("field '" + key + "' is not an integer");
    else
      out = v.get<int>();
  };

  get_string(m.id, inst.id);
  if (!rec.contains(m.tokens)) {
    missing(m.tokens);
  } else {
    const auto& t = rec.at(m.tokens);
    if (t.is_array()) {
      for (const auto& tok : t) {
        if (!tok.is_string()) {
          violations.push_back("field '" + m.tokens + "' holds a non-string token");
          break;
        }
        inst.tokens.push_back(tok.get<std::string>());
      }
    } else {
      violations.push_back("field '" + m.tokens + "' is not an array");
    }
  }
  get_int(m.e1_start, inst.e1.start);
  get_int(m.e1_end, inst.e1.end);
  get_string(m.e1_type, inst.e1.entity_type);
  get_int(m.e2_start, inst.e2.start);
  get_int(m.e2_end, inst.e2.end);
  get_string(m.e2_type, inst.e2.entity_type);
  get_string(m.relation, inst.relation);

  if (rec.contains(m.split)) {
    auto s = rec.at(m.split).is_string() ? parse_split(rec.at(m.split).get<std::string>())
                                         : std::nullopt;
    if (!s)
      violations.push_back("field '" + m.split + "' is not one of train|dev|test");
    else
      inst.split = *s;
  } else if (opts.default_split) {
    inst.split = *opts.default_split;
  } else {
    missing(m.split);
  }
  if (m.end_inclusive) {
    inst.e1.end += 1;
    inst.e2.end += 1;
  }
  if (!violations.empty()) return std::nullopt;
  return inst;
}

}  // namespace detail

// Imports a record-per-instance file (JSONL, or a single JSON array). Records
// that fail validation are reported, not fatal; zero surviving records, or a
// label outside a supplied fixed vocabulary, is.
inline ImportResult import_records(std::string_view text, const ImportOptions& opts) {
  ImportResult result;
  auto raw = detail::parse_records(text);
  result.report.records_seen = raw.size();

  std::vector<std::pair<std::size_t, RelationInstance>> decoded;
  for (const auto& rec : raw) {
    std::vector<std::string> violations;
    std::string id;
    if (!rec.parse_error.empty()) {
      violations.push_back(rec.parse_error);
    } else {
      if (rec.value.is_object() && rec.value.contains(opts.field_map.id) &&
          rec.value.at(opts.field_map.id).is_string())
        id = rec.value.at(opts.field_map.id).get<std::string>();
      if (auto inst = detail::decode_record(rec.value, opts.field_map, opts, violations)) {
        decoded.emplace_back(rec.number, std::move(*inst));
        continue;
      }
    }
    result.report.errors.push_back({rec.number, id, std::move(violations)});
  }

  LabelVocabulary vocab;
  if (opts.fixed_vocabulary) {
    vocab = *opts.fixed_vocabulary;
    for (const auto& [n, inst] : decoded)
      if (!vocab.contains(inst.relation))
        throw Error("unknown relation label '" + inst.relation + "' (record " +
                    std::to_string(n) + ", id " + inst.id + ") not in fixed vocabulary");
  } else {
    std::set<std::string> observed;
    for (const auto& [n, inst] : decoded) observed.insert(inst.relation);
    vocab = LabelVocabulary::from_observed(observed, opts.no_relation_label);
  }

  const std::set<std::string>* types = opts.entity_types ? &*opts.entity_types : nullptr;
  std::set<std::string> seen_ids;
  std::set<std::string> observed_types;
  for (auto& [n, inst] : decoded) {
    auto violations = validate_instance(inst, vocab, types);
    if (!seen_ids.insert(inst.id).second) violations.push_back("duplicate instance id");
    if (!violations.empty()) {
      result.report.errors.push_back({n, inst.id, std::move(violations)});
      continue;
    }
    observed_types.insert(inst.e1.entity_type);
    observed_types.insert(inst.e2.entity_type);
    result.corpus.instances.push_back(std::move(inst));
  }
  std::sort(result.report.errors.begin(), result.report.errors.end(),
            [](const auto& a, const auto& b) { return a.record < b.record; });

  if (result.corpus.instances.empty()) throw Error("zero valid records");
  result.report.records_accepted = result.corpus.instances.size();
  result.corpus.vocabulary = std::move(vocab);
  result.corpus.entity_types = types ? *types : observed_types;
  return result;
}

inline ImportResult import_file(const std::filesystem::path& path, const ImportOptions& opts) {
  if (!std::filesystem::exists(path)) throw Error("corpus file not found: " + path.string());
  return import_records(read_file(path), opts);
}

inline ImportResult import_refind(const std::filesystem::path& path,
                                  std::optional<FieldMap> field_map = std::nullopt,
                                  ImportOptions opts = {}) {
  opts.field_map = field_map ? *field_map : FieldMap::refind();
  return import_file(path, opts);
}

inline ImportResult import_canonical(const std::filesystem::path& path, ImportOptions opts = {}) {
  opts.field_map = FieldMap::canonical();
  return import_file(path, opts);
}

inline ordered_json to_canonical_json(const RelationInstance& inst) {
  return {{"id", inst.id},
          {"tokens", inst.tokens},
          {"e1_start", inst.e1.start},
          {"e1_end", inst.e1.end},
          {"e1_type", inst.e1.entity_type},
          {"e2_start", inst.e2.start},
          {"e2_end", inst.e2.end},
          {"e2_type", inst.e2.entity_type},
          {"relation", inst.relation},
          {"split", to_string(inst.split)}};
}

inline std::string export_canonical(const Corpus& corpus) {
  std::string out;
  for (const auto& inst : corpus.instances) out += to_canonical_json(inst).dump() + "\n";
  return out;
}

inline void write_canonical(const Corpus& corpus, const std::filesystem::path& path) {
  write_file(path, export_canonical(corpus));
}

}  // namespace finrex
