#pragma once

// Experiment configuration: YAML on disk, JSON in run records.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "finrex/augment.hpp"
#include "finrex/backbone.hpp"
#include "finrex/corpus.hpp"
#include "finrex/synthetic.hpp"
#include "finrex/tagging.hpp"
#include "finrex/trainer.hpp"

namespace finrex {

// Plain-data view of a YAML document. Untagged scalars become booleans or
// numbers when they parse as such, strings otherwise.
inline json yaml_to_json(const YAML::Node& node) {
  switch (node.Type()) {
    case YAML::NodeType::Null:
    case YAML::NodeType::Undefined:
      return nullptr;
    case YAML::NodeType::Sequence: {
      json arr = json::array();
      for (const auto& item : node) arr.push_back(yaml_to_json(item));
      return arr;
    }
    case YAML::NodeType::Map: {
      json obj = json::object();
      for (const auto& kv : node) obj[kv.first.as<std::string>()] = yaml_to_json(kv.second);
      return obj;
    }
    case YAML::NodeType::Scalar: {
      const auto s = node.Scalar();
      if (node.Tag() == "!") return s;  // quoted
      if (s == "true" || s == "True") return true;
      if (s == "false" || s == "False") return false;
      if (s == "null" || s == "~") return nullptr;
      char* end = nullptr;
      long long i = std::strtoll(s.c_str(), &end, 10);
      if (!s.empty() && end && *end == '\0') return i;
      double d = std::strtod(s.c_str(), &end);
      if (!s.empty() && end && *end == '\0') return d;
      return s;
    }
  }
  return nullptr;
}

struct SyntheticSource {
  std::size_t num_instances = 200;
  std::size_t num_relations = 4;
  std::uint64_t seed = 42;

  bool operator==(const SyntheticSource&) const = default;
};

struct CorpusSource {
  std::optional<std::filesystem::path> path;                  // one file, split per record
  std::map<Split, std::filesystem::path> files;               // one file per split
  std::optional<SyntheticSource> synthetic;
  std::string format = "canonical";                           // canonical | refind
  std::optional<std::filesystem::path> field_map;
  bool refind_labels = false;  // fix the vocabulary to the 22 REFinD labels

  json to_json() const {
    json j = {{"format", format}, {"refind_labels", refind_labels}};
    if (path) j["path"] = path->string();
    if (!files.empty()) {
      json f = json::object();
      for (const auto& [s, p] : files) f[to_string(s)] = p.string();
      j["files"] = f;
    }
    if (synthetic)
      j["synthetic"] = {{"num_instances", synthetic->num_instances},
                        {"num_relations", synthetic->num_relations},
                        {"seed", synthetic->seed}};
    if (field_map) j["field_map"] = field_map->string();
    return j;
  }

  static CorpusSource from_json(const json& j) {
    CorpusSource c;
    if (j.is_string()) {
      c.path = j.get<std::string>();
      return c;
    }
    c.format = j.value("format", c.format);
    c.refind_labels = j.value("refind_labels", false);
    if (j.contains("path")) c.path = j.at("path").get<std::string>();
    if (j.contains("field_map")) c.field_map = j.at("field_map").get<std::string>();
    if (j.contains("files"))
      for (const auto& [k, v] : j.at("files").items()) {
        auto s = parse_split(k);
        if (!s) throw Error("unknown split '" + k + "' in corpus.files");
        c.files[*s] = v.get<std::string>();
      }
    if (j.contains("synthetic")) {
      const auto& s = j.at("synthetic");
      SyntheticSource syn;
      syn.num_instances = s.value("num_instances", syn.num_instances);
      syn.num_relations = s.value("num_relations", syn.num_relations);
      syn.seed = s.value("seed", syn.seed);
      c.synthetic = syn;
    }
    return c;
  }
};

struct LoadedCorpus {
  Corpus corpus;
  ImportReport report;
};

// Imports several per-split files into one corpus.
inline LoadedCorpus import_split_files(const std::map<Split, std::filesystem::path>& files,
                                       ImportOptions opts) {
  LoadedCorpus out;
  std::set<std::string> labels, types;
  for (const auto& [split, path] : files) {
    opts.default_split = split;
    auto part = import_file(path, opts);
    for (auto& inst : part.corpus.instances) {
      labels.insert(inst.relation);
      out.corpus.instances.push_back(std::move(inst));
    }
    types.insert(part.corpus.entity_types.begin(), part.corpus.entity_types.end());
    out.report.records_seen += part.report.records_seen;
    out.report.records_accepted += part.report.records_accepted;
    for (auto& e : part.report.errors) {
      e.id = e.id.empty() ? path.filename().string() + "#" + std::to_string(e.record) : e.id;
      out.report.errors.push_back(std::move(e));
    }
  }
  out.corpus.vocabulary = opts.fixed_vocabulary
                              ? *opts.fixed_vocabulary
                              : LabelVocabulary::from_observed(labels, opts.no_relation_label);
  out.corpus.entity_types = opts.entity_types ? *opts.entity_types : types;
  return out;
}

inline LoadedCorpus load_corpus(const CorpusSource& src) {
  if (src.synthetic)
    return {make_synthetic_corpus(src.synthetic->num_instances, src.synthetic->num_relations,
                                  src.synthetic->seed),
            {}};
  ImportOptions opts;
  if (src.format == "refind")
    opts.field_map = FieldMap::refind();
  else if (src.format != "canonical")
    throw Error("unknown corpus format '" + src.format + "' (expected canonical|refind)");
  if (src.field_map)
    opts.field_map = FieldMap::from_json(json::parse(read_file(*src.field_map)), opts.field_map);
  if (src.refind_labels) opts.fixed_vocabulary = LabelVocabulary(refind_relation_labels(), "no_relation");
  if (!src.files.empty()) return import_split_files(src.files, opts);
  if (!src.path) throw Error("corpus source names no path, files, or synthetic settings");
  auto r = import_file(*src.path, opts);
  return {std::move(r.corpus), std::move(r.report)};
}

struct ExperimentConfig {
  std::string name = "experiment";
  CorpusSource corpus;
  TaggerSpec tagger;
  std::vector<StrategyId> strategies = {StrategyId::TrNP};
  std::vector<EncoderSpec> backbones = {EncoderSpec{}};
  TrainConfig train = TrainConfig::paper();
  std::vector<std::uint64_t> seeds = {42};
  std::filesystem::path output_dir = "runs";
  bool exclude_no_relation = false;
  bool parallel = false;
  std::optional<std::string> external_trainer;

  void validate() const {
    if (strategies.empty()) throw Error("experiment lists no strategies");
    if (backbones.empty()) throw Error("experiment lists no backbones");
    if (seeds.empty()) throw Error("experiment lists no seeds");
    for (const auto& b : backbones) b.validate();
    train.validate();
  }

  json to_json() const {
    json strategies_j = json::array();
    for (auto s : strategies) strategies_j.push_back(to_string(s));
    json backbones_j = json::array();
    for (const auto& b : backbones) backbones_j.push_back(b.to_json());
    json j = {{"name", name},
              {"corpus", corpus.to_json()},
              {"tagger", tagger.to_json()},
              {"strategies", strategies_j},
              {"backbones", backbones_j},
              {"train", train.to_json()},
              {"seeds", seeds},
              {"output_dir", output_dir.string()},
              {"exclude_no_relation", exclude_no_relation},
              {"parallel", parallel}};
    if (external_trainer) j["external_trainer"] = *external_trainer;
    return j;
  }

  // `train.preset` (paper | desk_scale) picks the base recipe; explicit keys
  // override it. Relative paths resolve against `base_dir`.
  static ExperimentConfig from_json(const json& j, const std::filesystem::path& base_dir = {}) {
    ExperimentConfig c;
    c.name = j.value("name", c.name);
    if (!j.contains("corpus")) throw Error("experiment config needs a corpus section");
    c.corpus = CorpusSource::from_json(j.at("corpus"));
    auto resolve = [&](std::filesystem::path p) {
      return p.is_relative() && !base_dir.empty() ? base_dir / p : p;
    };
    if (c.corpus.path) c.corpus.path = resolve(*c.corpus.path);
    if (c.corpus.field_map) c.corpus.field_map = resolve(*c.corpus.field_map);
    for (auto& [s, p] : c.corpus.files) p = resolve(p);
    if (j.contains("tagger")) {
      c.tagger = TaggerSpec::from_json(j.at("tagger"));
      for (const char* key : {"lexicon", "spans_file"})
        if (c.tagger.config.contains(key))
          c.tagger.config[key] = resolve(c.tagger.config.at(key).get<std::string>()).string();
    }
    if (j.contains("strategies")) {
      c.strategies.clear();
      for (const auto& s : j.at("strategies")) c.strategies.push_back(parse_strategy(s.get<std::string>()));
    }
    if (j.contains("backbones")) {
      c.backbones.clear();
      for (const auto& b : j.at("backbones")) {
        if (b.is_string()) {
          EncoderSpec spec;
          spec.backbone_id = b.get<std::string>();
          c.backbones.push_back(spec);
        } else {
          c.backbones.push_back(EncoderSpec::from_json(b));
        }
      }
    }
    if (j.contains("train")) {
      const auto& t = j.at("train");
      TrainConfig base = TrainConfig::paper();
      const auto preset = t.value("preset", std::string("paper"));
      if (preset == "desk_scale")
        base = TrainConfig::desk_scale();
      else if (preset != "paper")
        throw Error("unknown train preset '" + preset + "' (expected paper|desk_scale)");
      c.train = TrainConfig::from_json(t, base);
    }
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("output_dir")) c.output_dir = resolve(j.at("output_dir").get<std::string>());
    c.exclude_no_relation = j.value("exclude_no_relation", false);
    c.parallel = j.value("parallel", false);
    if (j.contains("external_trainer")) c.external_trainer = j.at("external_trainer").get<std::string>();
    return c;
  }

  static ExperimentConfig from_yaml_file(const std::filesystem::path& path) {
    YAML::Node node;
    try {
      node = YAML::LoadFile(path.string());
    } catch (const YAML::Exception& e) {
      throw Error("cannot parse " + path.string() + ": " + e.what());
    }
    return from_json(yaml_to_json(node), path.parent_path());
  }
};

}  // namespace finrex
