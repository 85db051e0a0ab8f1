#pragma once

// Backbone registry and the encoder-side settings of a run.

#include <optional>
#include <string>
#include <vector>

#include "finrex/common.hpp"

namespace finrex {

enum class BackboneKind {
  tiny_scratch,  // in-process word-level transformer trained from scratch
  external,      // pre-trained checkpoint fine-tuned by an external trainer
};

struct BackboneInfo {
  std::string id;
  std::string display_name;
  BackboneKind kind = BackboneKind::external;
  std::string pretrained_name;  // hub identifier for external backbones
  int layers = 0;
  int heads = 0;
  int dim = 0;
  int ffn_dim = 0;
};

inline const std::vector<BackboneInfo>& backbone_registry() {
  static const std::vector<BackboneInfo> registry = {
      {"tiny_scratch", "TinyScratch", BackboneKind::tiny_scratch, "", 2, 4, 64, 256},
      {"tiny_scratch_small", "TinyScratchSmall", BackboneKind::tiny_scratch, "", 1, 2, 32, 64},
      {"roberta", "RoBERTa", BackboneKind::external, "roberta-base"},
      {"spanbert", "SpanBERT", BackboneKind::external, "SpanBERT/spanbert-base-cased"},
      {"finbert", "FinBERT", BackboneKind::external, "yiyanghkust/finbert-pretrain"},
      {"bert", "BERT", BackboneKind::external, "bert-base-uncased"},
      {"xlm-roberta", "XLM-RoBERTa", BackboneKind::external, "xlm-roberta-base"},
      {"distilbert", "DistilBERT", BackboneKind::external, "distilbert-base-uncased"},
      {"albert", "ALBERT", BackboneKind::external, "albert-base-v2"},
  };
  return registry;
}

// The backbone underneath the proposed model.
inline constexpr const char* kPrimaryBackbone = "roberta";

inline const BackboneInfo& find_backbone(const std::string& id) {
  for (const auto& b : backbone_registry())
    if (b.id == id) return b;
  throw Error("unregistered backbone '" + id + "'");
}

struct EncoderSpec {
  std::string backbone_id = "tiny_scratch";
  int max_length = 128;
  bool add_tag_tokens = true;
  bool mark_entities = false;

  void validate() const {
    find_backbone(backbone_id);
    if (max_length < 16) throw Error("max_length must be >= 16");
  }

  bool operator==(const EncoderSpec&) const = default;

  json to_json() const {
    return {{"backbone_id", backbone_id},
            {"max_length", max_length},
            {"add_tag_tokens", add_tag_tokens},
            {"mark_entities", mark_entities}};
  }
  static EncoderSpec from_json(const json& j) {
    EncoderSpec s;
    s.backbone_id = j.value("backbone_id", s.backbone_id);
    s.max_length = j.value("max_length", s.max_length);
    s.add_tag_tokens = j.value("add_tag_tokens", s.add_tag_tokens);
    s.mark_entities = j.value("mark_entities", s.mark_entities);
    return s;
  }
};

}  // namespace finrex
