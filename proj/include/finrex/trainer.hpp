#pragma once

// Fine-tuning loop with per-epoch dev evaluation, early stopping and
// best-on-dev model selection, plus inference and checkpoint persistence.

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "finrex/augment.hpp"
#include "finrex/backbone.hpp"
#include "finrex/corpus.hpp"
#include "finrex/encoder.hpp"
#include "finrex/metrics.hpp"
#include "finrex/tokenizer.hpp"

namespace finrex {

enum class SelectionMetric { micro_f1, macro_f1 };

inline std::string to_string(SelectionMetric m) {
  return m == SelectionMetric::micro_f1 ? "micro_f1" : "macro_f1";
}

inline SelectionMetric parse_selection_metric(std::string_view s) {
  if (s == "micro_f1" || s == "micro") return SelectionMetric::micro_f1;
  if (s == "macro_f1" || s == "macro") return SelectionMetric::macro_f1;
  throw Error("unknown selection metric '" + std::string(s) + "'");
}

inline double selection_value(const MetricsReport& r, SelectionMetric m) {
  return m == SelectionMetric::micro_f1 ? r.micro_f1 : r.macro_f1;
}

struct TrainConfig {
  double learning_rate = 2e-5;
  double weight_decay = 0.1;
  double dropout = 0.1;
  int batch_size = 32;
  int max_epochs = 5;
  int early_stop_patience = 2;
  SelectionMetric selection_metric = SelectionMetric::micro_f1;
  std::uint64_t seed = 42;

  // The fine-tuning recipe used for the full-size backbones.
  static TrainConfig paper() { return {}; }

  // The same recipe resized for the scratch backbone on a ~140-example
  // training split: a from-scratch model needs a larger step size and more
  // passes than a pre-trained one, and a smaller batch yields enough updates.
  static TrainConfig desk_scale() {
    TrainConfig c;
    c.learning_rate = 1e-3;
    c.batch_size = 8;
    c.max_epochs = 30;
    c.early_stop_patience = 6;
    return c;
  }

  void validate() const {
    auto positive = [](double v, const char* name) {
      if (!(v > 0.0)) throw Error(std::string(name) + " must be positive");
    };
    positive(learning_rate, "learning_rate");
    positive(weight_decay, "weight_decay");
    positive(batch_size, "batch_size");
    positive(max_epochs, "max_epochs");
    positive(early_stop_patience, "early_stop_patience");
    if (!(dropout > 0.0 && dropout < 1.0)) throw Error("dropout must be in (0, 1)");
  }

  bool operator==(const TrainConfig&) const = default;

  json to_json() const {
    return {{"learning_rate", learning_rate},     {"weight_decay", weight_decay},
            {"dropout", dropout},                 {"batch_size", batch_size},
            {"max_epochs", max_epochs},           {"early_stop_patience", early_stop_patience},
            {"selection_metric", to_string(selection_metric)}, {"seed", seed}};
  }

  // Keys absent from `j` keep the values of `base`.
  static TrainConfig from_json(const json& j) { return from_json(j, TrainConfig{}); }
  static TrainConfig from_json(const json& j, TrainConfig base) {
    base.learning_rate = j.value("learning_rate", base.learning_rate);
    base.weight_decay = j.value("weight_decay", base.weight_decay);
    base.dropout = j.value("dropout", base.dropout);
    base.batch_size = j.value("batch_size", base.batch_size);
    base.max_epochs = j.value("max_epochs", base.max_epochs);
    base.early_stop_patience = j.value("early_stop_patience", base.early_stop_patience);
    if (j.contains("selection_metric"))
      base.selection_metric = parse_selection_metric(j.at("selection_metric").get<std::string>());
    base.seed = j.value("seed", base.seed);
    return base;
  }
};

// Tracks the best selection value seen and counts consecutive evaluations
// that fail to improve on it strictly.
class EarlyStopper {
 public:
  explicit EarlyStopper(int patience) : patience_(patience) {}

  // Returns true when `value` is a new best.
  bool observe(int epoch, double value) {
    if (!best_ || value > *best_) {
      best_ = value;
      best_epoch_ = epoch;
      stale_ = 0;
      return true;
    }
    ++stale_;
    return false;
  }

  bool should_stop() const { return stale_ >= patience_; }
  std::optional<double> best() const { return best_; }
  int best_epoch() const { return best_epoch_; }

 private:
  int patience_;
  std::optional<double> best_;
  int best_epoch_ = 0;
  int stale_ = 0;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double selection_value = 0.0;
  MetricsReport dev;

  json to_json() const {
    return {{"epoch", epoch}, {"train_loss", train_loss}, {"selection_value", selection_value},
            {"dev", dev.to_json()}};
  }
  static EpochRecord from_json(const json& j) {
    return {j.at("epoch").get<int>(), j.at("train_loss").get<double>(),
            j.at("selection_value").get<double>(), MetricsReport::from_json(j.at("dev"))};
  }
};

struct Checkpoint {
  std::string backbone_id;
  StrategyId strategy = StrategyId::T;
  EncoderSpec spec;
  TrainConfig config;
  LabelVocabulary labels;
  WordTokenizer tokenizer;
  std::shared_ptr<TinyEncoder> model;
  MetricsReport dev_metrics;
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  std::vector<std::string> warnings;
};

struct TrainHooks {
  // Replaces the measured dev report for an epoch (scripted schedules).
  std::function<MetricsReport(int epoch, const MetricsReport& measured)> dev_override;
  std::function<void(int epoch, const TinyEncoder& model)> on_epoch_end;
};

using EncodedPair = std::pair<std::vector<int>, std::vector<int>>;

namespace detail {

inline std::vector<EncodedPair> encode_all(const std::vector<AugmentedExample>& examples,
                                           const EncoderSpec& spec, const WordTokenizer& tok,
                                           std::vector<std::string>* warnings) {
  std::vector<EncodedPair> out;
  out.reserve(examples.size());
  std::set<std::string> seen;
  for (const auto& ex : examples) {
    auto enc = encode_example(ex, spec, tok);
    if (warnings)
      for (auto& w : enc.warnings)
        if (seen.insert(w).second) warnings->push_back(w);
    out.emplace_back(std::move(enc.ids), std::move(enc.segment_ids));
  }
  return out;
}

inline void check_examples(const std::vector<AugmentedExample>& examples, std::size_t num_labels,
                           StrategyId strategy, const char* what) {
  for (const auto& ex : examples) {
    if (ex.label_index < 0 || static_cast<std::size_t>(ex.label_index) >= num_labels)
      throw Error(std::string(what) + " example " + ex.instance_id + " has label index " +
                  std::to_string(ex.label_index) + " outside the label space of size " +
                  std::to_string(num_labels));
    if (ex.strategy != strategy)
      throw Error(std::string(what) + " example " + ex.instance_id + " uses strategy " +
                  to_string(ex.strategy) + " but expected " + to_string(strategy));
  }
}

}  // namespace detail

// Index of the largest score; ties go to the lowest index.
inline int argmax_lowest(const std::vector<double>& scores) {
  if (scores.empty()) throw Error("argmax of empty score vector");
  int best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  return best;
}

struct Prediction {
  std::string instance_id;
  int label_index = 0;
  std::vector<double> scores;  // class probabilities
};

inline std::vector<double> class_probabilities(const TinyEncoder& model, const EncodedPair& input) {
  TinyEncoder::ForwardCache cache;
  const RowVector p = softmax(model.forward(input.first, input.second, cache, nullptr));
  return {p.data(), p.data() + p.size()};
}

inline MetricsReport evaluate_encoded(const TinyEncoder& model, const std::vector<EncodedPair>& inputs,
                                      const std::vector<AugmentedExample>& examples,
                                      const LabelVocabulary& labels) {
  std::vector<int> gold, pred;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    gold.push_back(examples[i].label_index);
    pred.push_back(argmax_lowest(class_probabilities(model, inputs[i])));
  }
  return compute_metrics(gold, pred, labels.labels());
}

inline Checkpoint train(const std::vector<AugmentedExample>& train_examples,
                        const std::vector<AugmentedExample>& dev_examples, const EncoderSpec& spec,
                        const TrainConfig& cfg, const LabelVocabulary& labels,
                        const TrainHooks& hooks = {}) {
  spec.validate();
  cfg.validate();
  const auto& backbone = find_backbone(spec.backbone_id);
  if (backbone.kind != BackboneKind::tiny_scratch)
    throw Error("backbone '" + spec.backbone_id +
                "' is fine-tuned by the external trainer; it cannot be trained in-process");
  if (train_examples.empty()) throw Error("training split is empty");
  if (dev_examples.empty()) throw Error("dev split is empty");
  const StrategyId strategy = train_examples.front().strategy;
  detail::check_examples(train_examples, labels.size(), strategy, "train");
  detail::check_examples(dev_examples, labels.size(), strategy, "dev");

  Checkpoint ck;
  ck.backbone_id = spec.backbone_id;
  ck.strategy = strategy;
  ck.spec = spec;
  ck.config = cfg;
  ck.labels = labels;
  ck.tokenizer = WordTokenizer::build(train_examples, spec.add_tag_tokens);

  EncoderShape shape;
  shape.vocab_size = static_cast<int>(ck.tokenizer.size());
  shape.max_positions = spec.max_length;
  shape.layers = backbone.layers;
  shape.heads = backbone.heads;
  shape.dim = backbone.dim;
  shape.ffn_dim = backbone.ffn_dim;
  shape.num_labels = static_cast<int>(labels.size());
  shape.dropout = cfg.dropout;
  std::vector<int> tag_rows;
  for (const auto& t : ck.tokenizer.tag_tokens()) tag_rows.push_back(ck.tokenizer.id(t));
  ck.model = std::make_shared<TinyEncoder>(shape, cfg.seed, tag_rows);
  TinyEncoder& model = *ck.model;

  const auto train_inputs = detail::encode_all(train_examples, spec, ck.tokenizer, &ck.warnings);
  const auto dev_inputs = detail::encode_all(dev_examples, spec, ck.tokenizer, &ck.warnings);

  Rng rng(cfg.seed * 0x9E3779B97F4A7C15ULL + 1);
  AdamW opt({cfg.learning_rate, cfg.weight_decay});
  EarlyStopper stopper(cfg.early_stop_patience);
  std::vector<Matrix> best_values;

  std::vector<std::size_t> order(train_inputs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const auto batch = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      std::vector<EncodedPair> inputs;
      std::vector<int> gold;
      for (std::size_t i = start; i < end; ++i) {
        inputs.push_back(train_inputs[order[i]]);
        gold.push_back(train_examples[order[i]].label_index);
      }
      model.zero_grad();
      const double loss = cross_entropy_step(model, inputs, gold, &rng);
      if (!std::isfinite(loss))
        throw Error("training diverged: loss is " + std::to_string(loss) + " at epoch " +
                    std::to_string(epoch) + ", batch " + std::to_string(batches + 1) +
                    " (learning_rate=" + std::to_string(cfg.learning_rate) + ")");
      opt.step(model.params());
      loss_sum += loss;
      ++batches;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(batches);
    rec.dev = evaluate_encoded(model, dev_inputs, dev_examples, labels);
    if (hooks.dev_override) rec.dev = hooks.dev_override(epoch, rec.dev);
    rec.selection_value = selection_value(rec.dev, cfg.selection_metric);
    ck.history.push_back(rec);
    if (hooks.on_epoch_end) hooks.on_epoch_end(epoch, model);

    if (stopper.observe(epoch, rec.selection_value)) {
      best_values.clear();
      for (const auto& p : model.params()) best_values.push_back(p.value);
      ck.dev_metrics = rec.dev;
      ck.best_epoch = epoch;
    }
    if (stopper.should_stop()) break;
  }

  for (std::size_t i = 0; i < best_values.size(); ++i) model.params()[i].value = best_values[i];
  for (auto& p : model.params()) {
    p.grad.setZero();
    p.m.setZero();
    p.v.setZero();
  }
  return ck;
}

inline std::vector<Prediction> predict(const Checkpoint& ck,
                                       const std::vector<AugmentedExample>& examples) {
  if (!ck.model) throw Error("checkpoint has no in-process model");
  for (const auto& ex : examples)
    if (ex.strategy != ck.strategy)
      throw Error("strategy mismatch: checkpoint trained on " + to_string(ck.strategy) +
                  " but example " + ex.instance_id + " was built with " + to_string(ex.strategy));
  std::vector<Prediction> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) {
    auto enc = encode_example(ex, ck.spec, ck.tokenizer);
    auto scores = class_probabilities(*ck.model, {enc.ids, enc.segment_ids});
    out.push_back({ex.instance_id, argmax_lowest(scores), std::move(scores)});
  }
  return out;
}

// Layout: config.json, metrics.json, weights.bin, vocab.json, tag_tokens.json.
inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json config = {{"backbone_id", ck.backbone_id},
                 {"strategy", to_string(ck.strategy)},
                 {"encoder_spec", ck.spec.to_json()},
                 {"train_config", ck.config.to_json()},
                 {"labels", ck.labels.to_json()},
                 {"shape", ck.model ? ck.model->shape().to_json() : json(nullptr)}};
  write_file(dir / "config.json", config.dump(2) + "\n");
  json history = json::array();
  for (const auto& h : ck.history) history.push_back(h.to_json());
  json metrics = {{"best_epoch", ck.best_epoch},
                  {"dev_metrics", ck.dev_metrics.to_json()},
                  {"per_epoch", history},
                  {"warnings", ck.warnings}};
  write_file(dir / "metrics.json", metrics.dump(2) + "\n");
  json vocab = ck.tokenizer.to_json();
  write_file(dir / "vocab.json", vocab.dump() + "\n");
  write_file(dir / "tag_tokens.json",
             json({{"add_tag_tokens", ck.tokenizer.add_tag_tokens()},
                   {"tag_tokens", vocab.at("tag_tokens")}})
                     .dump(2) +
                 "\n");
  if (ck.model) ck.model->save(dir / "weights.bin");
}

inline Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "config.json"))
    throw Error("not a checkpoint directory: " + dir.string());
  const json config = json::parse(read_file(dir / "config.json"));
  const json metrics = json::parse(read_file(dir / "metrics.json"));
  Checkpoint ck;
  ck.backbone_id = config.at("backbone_id").get<std::string>();
  ck.strategy = parse_strategy(config.at("strategy").get<std::string>());
  ck.spec = EncoderSpec::from_json(config.at("encoder_spec"));
  ck.config = TrainConfig::from_json(config.at("train_config"));
  ck.labels = LabelVocabulary::from_json(config.at("labels"));
  ck.tokenizer = WordTokenizer::from_json(json::parse(read_file(dir / "vocab.json")));
  ck.best_epoch = metrics.at("best_epoch").get<int>();
  ck.dev_metrics = MetricsReport::from_json(metrics.at("dev_metrics"));
  for (const auto& h : metrics.at("per_epoch")) ck.history.push_back(EpochRecord::from_json(h));
  ck.warnings = metrics.value("warnings", std::vector<std::string>{});
  if (!config.at("shape").is_null()) {
    ck.model = std::make_shared<TinyEncoder>(EncoderShape::from_json(config.at("shape")), 0);
    ck.model->load(dir / "weights.bin");
  }
  return ck;
}

}  // namespace finrex
