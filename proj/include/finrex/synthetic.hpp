#pragma once

// Desk-scale stand-in for REFinD. Each relation is cued by a trigger verb
// group shared with one partner relation; within a group only the entity
// types of the two arguments tell the relations apart. Entity names come from
// large pools, so a text-only learner sees mostly unseen names while a tagger
// with the shared gazetteer recovers their types.

#include <array>
#include <string>
#include <vector>

#include "finrex/corpus.hpp"
#include "finrex/lexicon.hpp"
#include "finrex/random.hpp"

namespace finrex {

namespace detail {

inline std::string entity_type_from_code(std::string_view code) {
  if (code == "org") return "ORG";
  if (code == "pers") return "PERSON";
  if (code == "gpe") return "GPE";
  if (code == "univ") return "UNIV";
  if (code == "gov_agy") return "GOV_AGY";
  if (code == "date") return "DATE";
  if (code == "money") return "MONEY";
  if (code == "title") return "TITLE";
  throw Error("unknown entity type code: " + std::string(code));
}

// "org:gpe:operations_in" -> (ORG, GPE)
inline std::pair<std::string, std::string> label_entity_types(const std::string& label) {
  auto a = label.find(':');
  auto b = label.find(':', a + 1);
  if (a == std::string::npos || b == std::string::npos)
    throw Error("label has no entity-type prefix: " + label);
  return {entity_type_from_code(label.substr(0, a)),
          entity_type_from_code(label.substr(a + 1, b - a - 1))};
}

inline std::vector<std::string> entity_surface(const std::string& type, Rng& rng) {
  if (type == "ORG") return {rng.pick(lexicon::organizations())};
  if (type == "PERSON") return {rng.pick(lexicon::persons())};
  if (type == "GPE") return {rng.pick(lexicon::places())};
  if (type == "GOV_AGY") return {rng.pick(lexicon::agencies())};
  if (type == "UNIV") return {rng.pick(lexicon::organizations()), "University"};
  if (type == "TITLE") return {rng.pick(lexicon::titles())};
  if (type == "DATE")
    return {rng.pick(lexicon::months()), std::to_string(1990 + rng.below(35))};
  if (type == "MONEY") return {"$", std::to_string(1 + rng.below(950)), "million"};
  throw Error("no surface generator for entity type " + type);
}

struct RelationCue {
  std::string e1_type;
  std::string e2_type;
  std::vector<std::string> triggers;
};

inline std::vector<RelationCue> relation_cues(const std::vector<std::string>& labels) {
  const auto& verbs = lexicon::trigger_verbs();
  std::vector<RelationCue> cues(labels.size());
  for (std::size_t r = 1; r < labels.size(); ++r) {
    auto [a, b] = label_entity_types(labels[r]);
    cues[r].e1_type = a;
    cues[r].e2_type = b;
  }
  // The null class mirrors its partner's argument types with e1 swapped
  // between ORG and PERSON.
  cues[0].e1_type = cues[1].e1_type == "ORG" ? "PERSON" : "ORG";
  cues[0].e2_type = cues[1].e2_type;

  std::size_t next_private = (labels.size() + 1) / 2 * 3;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    std::size_t group = r / 2;
    std::size_t partner = r ^ 1U;
    bool shares = partner < labels.size() && (cues[partner].e1_type != cues[r].e1_type ||
                                              cues[partner].e2_type != cues[r].e2_type);
    if (shares || r % 2 == 0) {
      for (std::size_t k = 0; k < 3; ++k) cues[r].triggers.push_back(verbs[group * 3 + k]);
    } else {
      // Partner has identical argument types: give this relation its own verbs.
      for (std::size_t k = 0; k < 3; ++k)
        cues[r].triggers.push_back(verbs[(next_private++) % verbs.size()]);
    }
  }
  return cues;
}

}  // namespace detail

// Deterministic for a fixed seed. Splits are 70/15/15 (floor for train and
// dev, remainder to test), instances are ordered train, dev, test. The null
// class gets twice the share of any other label.
inline Corpus make_synthetic_corpus(std::size_t num_instances, std::size_t num_relations,
                                    std::uint64_t seed) {
  const auto& all_labels = refind_relation_labels();
  if (num_relations < 2 || num_relations > all_labels.size())
    throw Error("num_relations must be in [2, " + std::to_string(all_labels.size()) + "]");
  if (num_instances < num_relations)
    throw Error("num_instances must be >= num_relations");

  std::vector<std::string> labels(all_labels.begin(),
                                  all_labels.begin() + static_cast<long>(num_relations));
  const auto cues = detail::relation_cues(labels);
  Rng rng(seed);

  // Label quota: weight 2 for the null class, 1 for the rest, at least one each.
  const std::size_t parts = num_relations + 1;
  std::vector<std::size_t> assignment;
  for (std::size_t r = 0; r < num_relations; ++r) {
    std::size_t quota = num_instances * (r == 0 ? 2 : 1) / parts;
    assignment.insert(assignment.end(), std::max<std::size_t>(quota, 1), r);
  }
  while (assignment.size() < num_instances) assignment.push_back(0);
  assignment.resize(num_instances);
  rng.shuffle(assignment);

  const std::size_t n_train = num_instances * 70 / 100;
  const std::size_t n_dev = num_instances * 15 / 100;

  Corpus corpus;
  char idbuf[32];
  for (std::size_t i = 0; i < num_instances; ++i) {
    const auto& cue = cues[assignment[i]];
    RelationInstance inst;
    std::snprintf(idbuf, sizeof idbuf, "syn-%06zu", i + 1);
    inst.id = idbuf;
    inst.relation = labels[assignment[i]];
    inst.split = i < n_train ? Split::train : i < n_train + n_dev ? Split::dev : Split::test;

    auto e1 = detail::entity_surface(cue.e1_type, rng);
    auto e2 = detail::entity_surface(cue.e2_type, rng);
    if (e1 == e2) e2 = detail::entity_surface(cue.e2_type, rng);
    const auto& trigger = rng.pick(cue.triggers);
    const std::size_t layout = rng.below(3);

    auto& t = inst.tokens;
    if (layout == 1) {
      const auto& f = rng.pick(lexicon::filler_phrases());
      t.insert(t.end(), f.begin(), f.end());
      t.push_back(",");
    }
    inst.e1 = {static_cast<int>(t.size()), static_cast<int>(t.size() + e1.size()), cue.e1_type};
    t.insert(t.end(), e1.begin(), e1.end());
    if (rng.bernoulli(0.3)) t.push_back(rng.pick(lexicon::adverbs()));
    t.push_back(trigger);
    inst.e2 = {static_cast<int>(t.size()), static_cast<int>(t.size() + e2.size()), cue.e2_type};
    t.insert(t.end(), e2.begin(), e2.end());
    if (layout == 2) {
      const auto& f = rng.pick(lexicon::filler_phrases());
      t.insert(t.end(), f.begin(), f.end());
    }
    t.push_back(".");
    corpus.instances.push_back(std::move(inst));
  }

  std::set<std::string> observed_labels, observed_types;
  for (const auto& inst : corpus.instances) {
    observed_labels.insert(inst.relation);
    observed_types.insert(inst.e1.entity_type);
    observed_types.insert(inst.e2.entity_type);
  }
  corpus.vocabulary = LabelVocabulary::from_observed(observed_labels, labels[0]);
  corpus.entity_types = std::move(observed_types);
  return corpus;
}

}  // namespace finrex
