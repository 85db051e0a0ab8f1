// finrex: command-line front end for the relation-extraction toolkit.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "finrex/augment.hpp"
#include "finrex/corpus.hpp"
#include "finrex/experiment.hpp"
#include "finrex/metrics.hpp"
#include "finrex/runner.hpp"
#include "finrex/synthetic.hpp"
#include "finrex/tagging.hpp"
#include "finrex/trainer.hpp"

namespace fs = std::filesystem;
using namespace finrex;

namespace {

void warn(const std::string& msg) { std::cerr << "warning: " << msg << "\n"; }

// Label vocabulary written next to an augmented dataset: train.jsonl -> train.labels.json.
fs::path labels_sidecar(fs::path data) { return data.replace_extension(".labels.json"); }

LabelVocabulary read_labels(const fs::path& data, const std::optional<fs::path>& explicit_path) {
  const auto path = explicit_path ? *explicit_path : labels_sidecar(data);
  if (!fs::exists(path))
    throw Error("label vocabulary not found at " + path.string() + " (pass --labels)");
  return LabelVocabulary::from_json(json::parse(read_file(path)));
}

Corpus read_corpus(const fs::path& path) {
  auto r = import_canonical(path);
  for (const auto& e : r.report.errors) warn("record " + e.id + ": " + join(e.violations, "; "));
  return std::move(r.corpus);
}

std::vector<AugmentedExample> read_examples(const fs::path& path) {
  if (!fs::exists(path)) throw Error("dataset not found: " + path.string());
  return parse_examples(read_file(path));
}

ExperimentConfig read_experiment(const fs::path& path, const std::optional<fs::path>& out_dir) {
  if (!fs::exists(path)) throw Error("config not found: " + path.string());
  auto cfg = ExperimentConfig::from_yaml_file(path);
  if (out_dir) cfg.output_dir = *out_dir;
  return cfg;
}

void print_study(const StudyResult& r, const std::string& header) {
  std::cout << r.table(TableFormat::txt, header);
  for (const auto& rec : r.records)
    if (rec.status == RunStatus::failed)
      std::cerr << "run " << rec.run_id << " failed at " << rec.failed_stage << ": " << rec.error
                << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Financial relation extraction with NER/POS tag augmentation"};
  app.require_subcommand(1);

  // ingest
  fs::path ingest_input, ingest_out;
  std::optional<fs::path> ingest_field_map, ingest_errors;
  std::string ingest_format = "canonical";
  std::optional<std::string> ingest_split;
  bool ingest_refind_labels = false;
  auto* ingest = app.add_subcommand("ingest", "Validate and convert a corpus to canonical JSONL");
  ingest->add_option("--input", ingest_input, "JSON array or JSONL corpus")->required();
  ingest->add_option("--format", ingest_format, "refind|canonical")
      ->check(CLI::IsMember({"refind", "canonical"}));
  ingest->add_option("--field-map", ingest_field_map, "JSON object renaming input fields");
  ingest->add_option("--out", ingest_out, "canonical JSONL output")->required();
  ingest->add_option("--errors", ingest_errors, "JSONL report of rejected records");
  ingest->add_option("--split", ingest_split, "split for records that carry none");
  ingest->add_flag("--refind-labels", ingest_refind_labels, "fix the label set to the 22 REFinD labels");

  // synth
  fs::path synth_out;
  std::size_t synth_n = 200, synth_r = 4;
  std::uint64_t synth_seed = 42;
  auto* synth = app.add_subcommand("synth", "Generate the synthetic corpus");
  synth->add_option("--instances", synth_n, "number of instances");
  synth->add_option("--relations", synth_r, "number of relation labels (2-22)");
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->add_option("--out", synth_out, "canonical JSONL output")->required();

  // tag
  fs::path tag_corpus_path, tag_cache;
  std::string tag_kind = "rule";
  std::optional<fs::path> tag_lexicon, tag_spans;
  bool tag_overlay = false;
  unsigned tag_workers = 1;
  auto* tag = app.add_subcommand("tag", "Tag a canonical corpus with NER and POS");
  tag->add_option("--corpus", tag_corpus_path, "canonical JSONL corpus")->required();
  tag->add_option("--tagger", tag_kind, "rule|external")->check(CLI::IsMember({"rule", "external"}));
  tag->add_option("--cache", tag_cache, "tag file, reused when current")->required();
  tag->add_option("--lexicon", tag_lexicon, "TSV lexicon for the rule tagger");
  tag->add_option("--spans-file", tag_spans, "span JSONL for the external adapter");
  tag->add_flag("--gold-overlay", tag_overlay, "force entity spans to their gold types");
  tag->add_option("--workers", tag_workers, "parallel tagger instances");

  // augment
  fs::path aug_corpus, aug_tags, aug_out;
  std::string aug_strategy;
  std::optional<std::string> aug_split;
  bool aug_mark = false;
  auto* augment = app.add_subcommand("augment", "Build strategy inputs from a corpus and its tags");
  augment->add_option("--corpus", aug_corpus, "canonical JSONL corpus")->required();
  augment->add_option("--tags", aug_tags, "tag file from `tag`")->required();
  augment->add_option("--strategy", aug_strategy, "t|tn|tp|tnp|trn|trnp")->required();
  augment->add_option("--out", aug_out, "augmented JSONL output")->required();
  augment->add_option("--split", aug_split, "keep only this split");
  augment->add_flag("--mark-entities", aug_mark, "wrap e1/e2 in marker tokens first");

  // train
  fs::path train_data, train_dev, train_out;
  std::string train_backbone = "tiny_scratch";
  std::optional<fs::path> train_config, train_labels;
  int train_max_length = 128;
  auto* train_cmd = app.add_subcommand("train", "Fine-tune a classifier on augmented data");
  train_cmd->add_option("--data", train_data, "augmented train JSONL")->required();
  train_cmd->add_option("--dev", train_dev, "augmented dev JSONL")->required();
  train_cmd->add_option("--backbone", train_backbone, "backbone id");
  train_cmd->add_option("--config", train_config, "YAML training config");
  train_cmd->add_option("--labels", train_labels, "label vocabulary JSON (default: sidecar of --data)");
  train_cmd->add_option("--max-length", train_max_length, "input length cap");
  train_cmd->add_option("--out", train_out, "checkpoint directory")->required();

  // predict
  fs::path pred_ck, pred_data, pred_out;
  auto* predict_cmd = app.add_subcommand("predict", "Score augmented data with a checkpoint");
  predict_cmd->add_option("--checkpoint", pred_ck, "checkpoint directory")->required();
  predict_cmd->add_option("--data", pred_data, "augmented JSONL")->required();
  predict_cmd->add_option("--out", pred_out, "predictions JSONL")->required();

  // eval
  fs::path eval_preds;
  std::string eval_format = "txt";
  std::optional<fs::path> eval_labels;
  bool eval_exclude = false, eval_per_class = false;
  auto* eval = app.add_subcommand("eval", "Score a predictions file");
  eval->add_option("--predictions", eval_preds, "predictions JSONL")->required();
  eval->add_option("--format", eval_format, "csv|md|txt")->check(CLI::IsMember({"csv", "md", "txt"}));
  eval->add_option("--labels", eval_labels, "label vocabulary JSON (default: labels observed)");
  eval->add_flag("--exclude-no-relation", eval_exclude, "drop no_relation from the averages");
  eval->add_flag("--per-class", eval_per_class, "print per-class scores");

  // ablate / sweep / run
  fs::path study_config;
  std::optional<fs::path> study_out;
  auto* ablate = app.add_subcommand("ablate", "Six-strategy ablation on one backbone");
  ablate->add_option("--config", study_config, "experiment YAML")->required();
  ablate->add_option("--output-dir", study_out, "override output_dir");
  auto* sweep = app.add_subcommand("sweep", "Backbone sweep under one strategy");
  sweep->add_option("--config", study_config, "experiment YAML")->required();
  sweep->add_option("--output-dir", study_out, "override output_dir");
  auto* run = app.add_subcommand("run", "Every strategy x backbone x seed cell of a config");
  run->add_option("--config", study_config, "experiment YAML")->required();
  run->add_option("--output-dir", study_out, "override output_dir");

  // collect
  fs::path collect_dir;
  std::optional<fs::path> collect_out;
  auto* collect = app.add_subcommand("collect", "Consolidate run records into CSV");
  collect->add_option("--dir", collect_dir, "output directory of a study")->required();
  collect->add_option("--out", collect_out, "CSV path (default: stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest) {
      ImportOptions opts;
      if (ingest_format == "refind") opts.field_map = FieldMap::refind();
      if (ingest_field_map)
        opts.field_map = FieldMap::from_json(json::parse(read_file(*ingest_field_map)), opts.field_map);
      if (ingest_split) {
        auto s = parse_split(*ingest_split);
        if (!s) throw Error("unknown split '" + *ingest_split + "'");
        opts.default_split = *s;
      }
      if (ingest_refind_labels) opts.fixed_vocabulary = LabelVocabulary(refind_relation_labels(), "no_relation");
      std::optional<ImportResult> result = import_file(ingest_input, opts);
      write_canonical(result->corpus, ingest_out);
      if (ingest_errors) write_file(*ingest_errors, result->report.errors_jsonl());
      std::cerr << "accepted " << result->report.records_accepted << " of "
                << result->report.records_seen << " records";
      for (auto s : {Split::train, Split::dev, Split::test})
        std::cerr << ", " << to_string(s) << "=" << result->corpus.count(s);
      std::cerr << "\n";
      for (const auto& e : result->report.errors)
        warn("record " + std::to_string(e.record) + (e.id.empty() ? "" : " (" + e.id + ")") + ": " +
             join(e.violations, "; "));
      return 0;
    }

    if (*synth) {
      write_canonical(make_synthetic_corpus(synth_n, synth_r, synth_seed), synth_out);
      return 0;
    }

    if (*tag) {
      TaggerSpec spec;
      spec.kind = parse_tagger_kind(tag_kind);
      if (tag_lexicon) spec.config["lexicon"] = tag_lexicon->string();
      if (tag_spans) spec.config["spans_file"] = tag_spans->string();
      if (tag_overlay) spec.config["gold_overlay"] = true;
      TagCorpusOptions opts;
      opts.cache_path = tag_cache;
      opts.workers = tag_workers;
      auto r = tag_corpus(read_corpus(tag_corpus_path), spec, opts);
      for (const auto& w : r.warnings) warn(w);
      std::cerr << (r.cache_hit ? "cache hit: " : "tagged: ") << r.annotations.size()
                << " instances, " << r.tagger_invocations << " tagger calls\n";
      return 0;
    }

    if (*augment) {
      const auto strategy = parse_strategy(aug_strategy);
      auto corpus = read_corpus(aug_corpus);
      if (!fs::exists(aug_tags)) throw Error("tag file not found: " + aug_tags.string());
      const auto annotations = parse_tag_file(read_file(aug_tags));
      std::optional<Split> only;
      if (aug_split) {
        only = parse_split(*aug_split);
        if (!only) throw Error("unknown split '" + *aug_split + "'");
      }
      std::vector<AugmentedExample> out;
      for (const auto& inst : corpus.instances) {
        if (only && inst.split != *only) continue;
        auto it = annotations.find(inst.id);
        if (it == annotations.end()) throw Error("no tags for instance " + inst.id);
        if (aug_mark) {
          auto [mi, ma] = mark_entities(inst, it->second);
          out.push_back(build_sequence(mi, ma, strategy, corpus.vocabulary));
        } else {
          out.push_back(build_sequence(inst, it->second, strategy, corpus.vocabulary));
        }
      }
      write_file(aug_out, serialize_examples(out));
      write_file(labels_sidecar(aug_out), corpus.vocabulary.to_json().dump(2) + "\n");
      std::cerr << "wrote " << out.size() << " " << to_string(strategy) << " examples\n";
      return 0;
    }

    if (*train_cmd) {
      TrainConfig cfg = TrainConfig::paper();
      if (train_config) {
        auto j = yaml_to_json(YAML::LoadFile(train_config->string()));
        if (j.contains("train")) j = j.at("train");
        if (j.is_null()) j = json::object();
        const auto preset = j.value("preset", std::string("paper"));
        if (preset == "desk_scale")
          cfg = TrainConfig::desk_scale();
        else if (preset != "paper")
          throw Error("unknown train preset '" + preset + "'");
        cfg = TrainConfig::from_json(j, cfg);
      }
      EncoderSpec spec;
      spec.backbone_id = train_backbone;
      spec.max_length = train_max_length;
      spec.validate();
      if (find_backbone(train_backbone).kind != BackboneKind::tiny_scratch)
        throw Error("backbone '" + train_backbone +
                    "' is trained out of process; see tools/hf_finetune.py");
      const auto labels = read_labels(train_data, train_labels);
      auto ck = train(read_examples(train_data), read_examples(train_dev), spec, cfg, labels);
      save_checkpoint(ck, train_out);
      for (const auto& w : ck.warnings) warn(w);
      std::cerr << "best epoch " << ck.best_epoch << ", dev micro-F1 " << format4(ck.dev_metrics.micro_f1)
                << ", macro-F1 " << format4(ck.dev_metrics.macro_f1) << "\n";
      return 0;
    }

    if (*predict_cmd) {
      const auto ck = load_checkpoint(pred_ck);
      const auto examples = read_examples(pred_data);
      const auto preds = predict(ck, examples);
      std::vector<PredictionRecord> out;
      for (std::size_t i = 0; i < preds.size(); ++i)
        out.push_back({preds[i].instance_id, ck.labels.label(examples[i].label_index),
                       ck.labels.label(preds[i].label_index), preds[i].scores});
      write_file(pred_out, serialize_predictions(out));
      return 0;
    }

    if (*eval) {
      if (!fs::exists(eval_preds)) throw Error("predictions not found: " + eval_preds.string());
      const auto records = parse_predictions(read_file(eval_preds));
      std::vector<std::string> gold, pred;
      std::set<std::string> seen;
      for (const auto& r : records) {
        gold.push_back(r.gold_label);
        pred.push_back(r.pred_label);
        seen.insert(r.gold_label);
        seen.insert(r.pred_label);
      }
      const auto vocab = eval_labels ? LabelVocabulary::from_json(json::parse(read_file(*eval_labels)))
                                     : LabelVocabulary::from_observed(seen, "no_relation");
      const auto filter = eval_exclude ? LabelFilter::excluding(vocab.size(), vocab.no_relation_index(),
                                                                vocab.no_relation_label())
                                       : LabelFilter::all(vocab.size());
      const auto rep = compute_metrics(gold, pred, vocab.labels(), filter);
      const auto format = parse_table_format(eval_format);
      if (eval_per_class)
        std::cout << per_class_table(rep, format);
      else
        std::cout << report_table({{eval_preds.stem().string(), rep}}, format);
      return 0;
    }

    if (*ablate) {
      auto r = run_ablation(read_experiment(study_config, study_out));
      print_study(r, "Component");
      return r.any_failed() ? 1 : 0;
    }

    if (*sweep) {
      auto r = run_backbone_sweep(read_experiment(study_config, study_out));
      print_study(r, "Model");
      return r.any_failed() ? 1 : 0;
    }

    if (*run) {
      auto cfg = read_experiment(study_config, study_out);
      Runner runner(cfg);
      StudyResult r;
      r.records = runner.run_all();
      r.rows = summarize(r.records, [](const RunRecord& rec) { return rec.strategy + " / " + rec.backbone; });
      for (const auto& w : runner.warnings()) warn(w);
      print_study(r, "Run");
      return r.any_failed() ? 1 : 0;
    }

    if (*collect) {
      auto r = collect_records(collect_dir);
      for (const auto& w : r.warnings) warn(w);
      if (collect_out)
        write_file(*collect_out, r.csv);
      else
        std::cout << r.csv;
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
