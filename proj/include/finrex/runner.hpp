#pragma once

// Orchestration: tag -> augment -> train -> predict -> eval per
// (strategy, backbone, seed) cell, ablation and backbone sweeps on top, and
// one persisted record per launched run.

#include <sys/utsname.h>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <future>
#include <map>
#include <mutex>
#include <optional>
#include <thread>
#include <string>
#include <vector>

#include "finrex/augment.hpp"
#include "finrex/experiment.hpp"
#include "finrex/metrics.hpp"
#include "finrex/tagging.hpp"
#include "finrex/trainer.hpp"

namespace finrex {

enum class RunStatus { completed, failed };

inline std::string to_string(RunStatus s) { return s == RunStatus::completed ? "completed" : "failed"; }

struct RunRecord {
  std::string run_id;
  json config;  // single-cell ExperimentConfig snapshot
  std::string strategy;
  std::string backbone;
  std::uint64_t seed = 0;
  std::map<std::string, MetricsReport> metrics;  // keyed by split name
  double wall_clock_seconds = 0.0;
  json environment;
  RunStatus status = RunStatus::failed;
  std::string failed_stage;
  std::string error;

  const MetricsReport* test() const {
    auto it = metrics.find("test");
    return it == metrics.end() ? nullptr : &it->second;
  }

  json to_json() const {
    json m = json::object();
    for (const auto& [split, rep] : metrics) m[split] = rep.to_json();
    json j = {{"run_id", run_id},
              {"strategy", strategy},
              {"backbone", backbone},
              {"seed", seed},
              {"status", to_string(status)},
              {"metrics", m},
              {"wall_clock_seconds", wall_clock_seconds},
              {"environment", environment},
              {"config", config}};
    if (status == RunStatus::failed) {
      j["failed_stage"] = failed_stage;
      j["error"] = error;
    }
    return j;
  }

  static RunRecord from_json(const json& j) {
    RunRecord r;
    r.run_id = j.at("run_id").get<std::string>();
    r.strategy = j.at("strategy").get<std::string>();
    r.backbone = j.at("backbone").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    const auto status = j.at("status").get<std::string>();
    if (status != "completed" && status != "failed") throw Error("unknown run status '" + status + "'");
    r.status = status == "completed" ? RunStatus::completed : RunStatus::failed;
    for (const auto& [split, rep] : j.at("metrics").items()) r.metrics[split] = MetricsReport::from_json(rep);
    r.wall_clock_seconds = j.value("wall_clock_seconds", 0.0);
    r.environment = j.value("environment", json::object());
    r.config = j.value("config", json::object());
    r.failed_stage = j.value("failed_stage", std::string());
    r.error = j.value("error", std::string());
    if (r.status == RunStatus::completed && !r.test())
      throw Error("completed record " + r.run_id + " has no test metrics");
    return r;
  }
};

inline json environment_fingerprint() {
  json env;
#if defined(__clang__)
  env["compiler"] = std::string("clang ") + __clang_version__;
#elif defined(__GNUC__)
  env["compiler"] = std::string("gcc ") + __VERSION__;
#endif
  env["cplusplus"] = static_cast<long>(__cplusplus);
  env["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                 "." + std::to_string(EIGEN_MINOR_VERSION);
  env["nlohmann_json"] = std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                         std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                         std::to_string(NLOHMANN_JSON_VERSION_PATCH);
  utsname u{};
  if (uname(&u) == 0) env["os"] = std::string(u.sysname) + " " + u.release + " " + u.machine;
  std::string cpu = "unknown";
  if (std::ifstream in("/proc/cpuinfo"); in) {
    for (std::string line; std::getline(in, line);)
      if (line.rfind("model name", 0) == 0) {
        cpu = line.substr(line.find(':') + 2);
        break;
      }
  }
  env["cpu"] = cpu;
  env["hardware_threads"] = std::thread::hardware_concurrency();
  return env;
}

// Test seam: called before each stage of each run; throwing fails that run.
struct RunnerHooks {
  std::function<void(const std::string& stage, StrategyId strategy, const std::string& backbone)>
      before_stage;
};

// Corpus and tags shared by every cell of one experiment.
struct PreparedData {
  Corpus corpus;
  AnnotationMap annotations;
  std::size_t tagger_invocations = 0;
  std::vector<std::string> warnings;
};

class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what) : Error(what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

// Ingests the corpus and tags it once, caching tags under <out>/data/.
inline PreparedData prepare_data(const ExperimentConfig& cfg) {
  PreparedData data;
  try {
    auto loaded = load_corpus(cfg.corpus);
    data.corpus = std::move(loaded.corpus);
    if (!loaded.report.errors.empty())
      data.warnings.push_back(std::to_string(loaded.report.errors.size()) +
                              " corpus record(s) rejected during import");
  } catch (const std::exception& e) {
    throw StageError("ingest", e.what());
  }
  try {
    TagCorpusOptions opts;
    opts.cache_path = cfg.output_dir / "data" / "tags.jsonl";
    auto tagged = tag_corpus(data.corpus, cfg.tagger, opts);
    data.annotations = std::move(tagged.annotations);
    data.tagger_invocations = tagged.tagger_invocations;
    data.warnings.insert(data.warnings.end(), tagged.warnings.begin(), tagged.warnings.end());
  } catch (const std::exception& e) {
    throw StageError("tag", e.what());
  }
  return data;
}

namespace detail {

inline std::string sanitize(std::string s) {
  for (auto& c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
  return s;
}

// Never reuses an existing run directory: records are append-only.
inline std::string allocate_run_id(const std::filesystem::path& out, StrategyId s,
                                   const std::string& backbone, std::uint64_t seed,
                                   std::mutex& mu) {
  std::lock_guard lock(mu);
  const std::string base =
      sanitize(to_lower(to_string(s)) + "-" + backbone + "-s" + std::to_string(seed));
  std::string id = base;
  for (int n = 2; std::filesystem::exists(out / id); ++n) id = base + "-r" + std::to_string(n);
  std::filesystem::create_directories(out / id);
  return id;
}

inline ExperimentConfig cell_config(const ExperimentConfig& cfg, StrategyId s, const EncoderSpec& b,
                                    std::uint64_t seed) {
  ExperimentConfig c = cfg;
  c.strategies = {s};
  c.backbones = {b};
  c.seeds = {seed};
  c.train.seed = seed;
  c.parallel = false;
  return c;
}

inline LabelFilter label_filter(const ExperimentConfig& cfg, const LabelVocabulary& vocab) {
  return cfg.exclude_no_relation ? LabelFilter::excluding(vocab.size(), vocab.no_relation_index(),
                                                          vocab.no_relation_label())
                                 : LabelFilter::all(vocab.size());
}

struct SplitExamples {
  std::vector<AugmentedExample> train, dev, test;
};

inline SplitExamples build_examples(const PreparedData& data, StrategyId strategy, bool mark) {
  SplitExamples out;
  for (const auto& inst : data.corpus.instances) {
    const auto& ann = data.annotations.at(inst.id);
    AugmentedExample ex;
    if (mark) {
      auto [minst, mann] = mark_entities(inst, ann);
      ex = build_sequence(minst, mann, strategy, data.corpus.vocabulary);
    } else {
      ex = build_sequence(inst, ann, strategy, data.corpus.vocabulary);
    }
    (inst.split == Split::train ? out.train : inst.split == Split::dev ? out.dev : out.test)
        .push_back(std::move(ex));
  }
  return out;
}

inline std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) out += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return out + "'";
}

inline std::vector<int> read_external_predictions(const std::filesystem::path& path,
                                                  const std::vector<AugmentedExample>& examples,
                                                  const LabelVocabulary& labels) {
  if (!std::filesystem::exists(path)) throw Error("external trainer wrote no " + path.string());
  std::map<std::string, int> by_id;
  for (const auto& line : split_lines(read_file(path))) {
    auto j = json::parse(line.text);
    const auto& p = j.at("pred_label");
    int idx = 0;
    if (p.is_number_integer()) {
      idx = p.get<int>();
    } else {
      auto found = labels.index_of(p.get<std::string>());
      if (!found) throw Error("external prediction label '" + p.get<std::string>() + "' unknown");
      idx = *found;
    }
    by_id[j.at("instance_id").get<std::string>()] = idx;
  }
  std::vector<int> pred;
  for (const auto& ex : examples) {
    auto it = by_id.find(ex.instance_id);
    if (it == by_id.end()) throw Error("external trainer gave no prediction for " + ex.instance_id);
    pred.push_back(it->second);
  }
  return pred;
}

inline std::vector<int> gold_of(const std::vector<AugmentedExample>& examples) {
  std::vector<int> g;
  for (const auto& ex : examples) g.push_back(ex.label_index);
  return g;
}

}  // namespace detail

class Runner {
 public:
  explicit Runner(ExperimentConfig cfg, RunnerHooks hooks = {})
      : cfg_(std::move(cfg)), hooks_(std::move(hooks)) {
    cfg_.validate();
  }

  const ExperimentConfig& config() const { return cfg_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  std::size_t tagger_invocations() const { return tagger_invocations_; }

  // Runs every (strategy, backbone, seed) cell. Data is ingested and tagged
  // once; a failure there fails every cell at that stage.
  std::vector<RunRecord> run_all() { return run_cells(cells()); }

  // Runs one cell: the first strategy, backbone and seed of the config.
  RunRecord run_single() {
    return run_cells({{cfg_.strategies.front(), cfg_.backbones.front(), cfg_.seeds.front()}})
        .front();
  }

 protected:
  struct Cell {
    StrategyId strategy;
    EncoderSpec backbone;
    std::uint64_t seed;
  };

  std::vector<Cell> cells() const {
    std::vector<Cell> out;
    for (const auto& b : cfg_.backbones)
      for (auto s : cfg_.strategies)
        for (auto seed : cfg_.seeds) out.push_back({s, b, seed});
    return out;
  }

  std::vector<RunRecord> run_cells(const std::vector<Cell>& cells) {
    std::filesystem::create_directories(cfg_.output_dir);
    std::optional<PreparedData> data;
    std::optional<StageError> prep_error;
    try {
      data = prepare_data(cfg_);
      tagger_invocations_ = data->tagger_invocations;
      warnings_ = data->warnings;
    } catch (const StageError& e) {
      prep_error = e;
    }

    if (data) {
      // Augmented datasets depend only on (strategy, marking), so build them
      // once and share across backbones and seeds.
      for (const auto& c : cells) {
        auto key = std::make_pair(c.strategy, c.backbone.mark_entities);
        if (augmented_.count(key)) continue;
        try {
          if (hooks_.before_stage) hooks_.before_stage("augment", c.strategy, c.backbone.backbone_id);
          auto ex = detail::build_examples(*data, c.strategy, c.backbone.mark_entities);
          std::vector<AugmentedExample> all = ex.train;
          all.insert(all.end(), ex.dev.begin(), ex.dev.end());
          all.insert(all.end(), ex.test.begin(), ex.test.end());
          write_file(cfg_.output_dir / "data" /
                         ("augmented_" + to_lower(to_string(c.strategy)) +
                          (c.backbone.mark_entities ? "_marked" : "") + ".jsonl"),
                     serialize_examples(all));
          augmented_.emplace(key, std::move(ex));
        } catch (const std::exception& e) {
          augment_errors_[key] = e.what();
        }
      }
    }

    std::vector<RunRecord> records(cells.size());
    auto run_one = [&](std::size_t i) {
      records[i] = run_cell(cells[i], data ? &*data : nullptr, prep_error ? &*prep_error : nullptr);
    };
    if (cfg_.parallel && cells.size() > 1) {
      std::vector<std::future<void>> futures;
      for (std::size_t i = 0; i < cells.size(); ++i)
        futures.push_back(std::async(std::launch::async, run_one, i));
      for (auto& f : futures) f.get();
    } else {
      for (std::size_t i = 0; i < cells.size(); ++i) run_one(i);
    }
    return records;
  }

  RunRecord run_cell(const Cell& cell, const PreparedData* data, const StageError* prep_error) {
    const auto t0 = std::chrono::steady_clock::now();
    RunRecord rec;
    rec.strategy = to_string(cell.strategy);
    rec.backbone = cell.backbone.backbone_id;
    rec.seed = cell.seed;
    rec.config = detail::cell_config(cfg_, cell.strategy, cell.backbone, cell.seed).to_json();
    rec.environment = environment_fingerprint();
    rec.run_id = detail::allocate_run_id(cfg_.output_dir, cell.strategy, cell.backbone.backbone_id,
                                         cell.seed, mu_);
    const auto run_dir = cfg_.output_dir / rec.run_id;

    std::string stage = "ingest";
    try {
      if (prep_error) throw StageError(prep_error->stage(), prep_error->what());
      auto stage_begin = [&](const char* name) {
        stage = name;
        if (hooks_.before_stage) hooks_.before_stage(name, cell.strategy, cell.backbone.backbone_id);
      };

      stage = "augment";
      auto key = std::make_pair(cell.strategy, cell.backbone.mark_entities);
      if (auto it = augment_errors_.find(key); it != augment_errors_.end()) throw Error(it->second);
      const auto& ex = augmented_.at(key);
      const auto& vocab = data->corpus.vocabulary;
      const auto filter = detail::label_filter(cfg_, vocab);

      TrainConfig tc = cfg_.train;
      tc.seed = cell.seed;
      const auto& info = find_backbone(cell.backbone.backbone_id);
      std::vector<int> dev_pred, test_pred;
      std::vector<PredictionRecord> test_records;

      if (info.kind == BackboneKind::tiny_scratch) {
        stage_begin("train");
        auto ck = train(ex.train, ex.dev, cell.backbone, tc, vocab);
        save_checkpoint(ck, run_dir / "checkpoint");
        stage_begin("predict");
        for (const auto& p : predict(ck, ex.dev)) dev_pred.push_back(p.label_index);
        auto preds = predict(ck, ex.test);
        for (std::size_t i = 0; i < preds.size(); ++i) {
          test_pred.push_back(preds[i].label_index);
          test_records.push_back({preds[i].instance_id, vocab.label(ex.test[i].label_index),
                                  vocab.label(preds[i].label_index), preds[i].scores});
        }
      } else {
        stage_begin("train");
        run_external(cell, info, tc, ex, vocab, run_dir);
        stage_begin("predict");
        dev_pred = detail::read_external_predictions(run_dir / "external" / "dev_predictions.jsonl",
                                                     ex.dev, vocab);
        test_pred = detail::read_external_predictions(run_dir / "external" / "predictions.jsonl",
                                                      ex.test, vocab);
        for (std::size_t i = 0; i < ex.test.size(); ++i)
          test_records.push_back({ex.test[i].instance_id, vocab.label(ex.test[i].label_index),
                                  vocab.label(test_pred[i]), {}});
      }

      stage_begin("eval");
      if (!ex.dev.empty())
        rec.metrics["dev"] = compute_metrics(detail::gold_of(ex.dev), dev_pred, vocab.labels(), filter);
      if (ex.test.empty()) throw Error("test split is empty");
      rec.metrics["test"] = compute_metrics(detail::gold_of(ex.test), test_pred, vocab.labels(), filter);

      stage_begin("persist");
      write_file(run_dir / "predictions.jsonl", serialize_predictions(test_records));
      rec.status = RunStatus::completed;
    } catch (const StageError& e) {
      rec.status = RunStatus::failed;
      rec.failed_stage = e.stage();
      rec.error = e.what();
    } catch (const std::exception& e) {
      rec.status = RunStatus::failed;
      rec.failed_stage = stage;
      rec.error = e.what();
    }
    rec.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_file(run_dir / "record.json", rec.to_json().dump(2) + "\n");
    return rec;
  }

  // Hands one cell to the configured external trainer. Contract: the command
  // receives the augmented splits and writes dev_predictions.jsonl and
  // predictions.jsonl ({instance_id, pred_label}) into --out.
  void run_external(const Cell& cell, const BackboneInfo& info, const TrainConfig& tc,
                    const detail::SplitExamples& ex, const LabelVocabulary& vocab,
                    const std::filesystem::path& run_dir) const {
    if (!cfg_.external_trainer)
      throw Error("backbone '" + info.id +
                  "' needs an external trainer; set external_trainer in the experiment config");
    const auto dir = run_dir / "external";
    write_file(dir / "train.jsonl", serialize_examples(ex.train));
    write_file(dir / "dev.jsonl", serialize_examples(ex.dev));
    write_file(dir / "test.jsonl", serialize_examples(ex.test));
    write_file(dir / "labels.json", vocab.to_json().dump(2) + "\n");
    write_file(dir / "train_config.json", tc.to_json().dump(2) + "\n");
    write_file(dir / "encoder_spec.json", cell.backbone.to_json().dump(2) + "\n");
    const std::string cmd = *cfg_.external_trainer + " --model " + detail::shell_quote(info.pretrained_name) +
                            " --data-dir " + detail::shell_quote(dir.string()) + " --out " +
                            detail::shell_quote(dir.string());
    const int rc = std::system(cmd.c_str());
    if (rc != 0) throw Error("external trainer exited with status " + std::to_string(rc) + ": " + cmd);
  }

  ExperimentConfig cfg_;
  RunnerHooks hooks_;
  std::mutex mu_;
  std::map<std::pair<StrategyId, bool>, detail::SplitExamples> augmented_;
  std::map<std::pair<StrategyId, bool>, std::string> augment_errors_;
  std::vector<std::string> warnings_;
  std::size_t tagger_invocations_ = 0;
};

inline double median(std::vector<double> xs) {
  if (xs.empty()) throw Error("median of empty list");
  std::sort(xs.begin(), xs.end());
  const auto n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

// Groups records by `key` (in first-seen order) into table rows holding the
// median over completed seeds. Rows with no completed run have no scores.
inline std::vector<TableRow> summarize(const std::vector<RunRecord>& records,
                                       const std::function<std::string(const RunRecord&)>& key) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<const RunRecord*>> groups;
  for (const auto& r : records) {
    auto k = key(r);
    if (!groups.count(k)) order.push_back(k);
    groups[k].push_back(&r);
  }
  std::vector<TableRow> rows;
  for (const auto& k : order) {
    std::vector<double> micro, macro;
    std::vector<std::string> failed_stages;
    for (const auto* r : groups[k]) {
      if (r->status == RunStatus::completed) {
        micro.push_back(r->test()->micro_f1);
        macro.push_back(r->test()->macro_f1);
      } else {
        failed_stages.push_back(r->failed_stage);
      }
    }
    TableRow row{k, std::nullopt, std::nullopt, ""};
    if (!micro.empty()) {
      row.micro_f1 = median(micro);
      row.macro_f1 = median(macro);
    }
    if (!failed_stages.empty())
      row.note = "failed " + std::to_string(failed_stages.size()) + "/" +
                 std::to_string(groups[k].size()) + " (" + join(failed_stages, ";") + ")";
    else if (groups[k].size() > 1)
      row.note = "median of " + std::to_string(groups[k].size()) + " seeds";
    rows.push_back(std::move(row));
  }
  return rows;
}

struct StudyResult {
  std::vector<RunRecord> records;
  std::vector<TableRow> rows;
  std::size_t tagger_invocations = 0;

  bool any_failed() const {
    return std::any_of(records.begin(), records.end(),
                       [](const auto& r) { return r.status == RunStatus::failed; });
  }
  std::string table(TableFormat f, const std::string& header) const { return report_table(rows, f, header); }
};

inline void write_tables(const StudyResult& r, const std::filesystem::path& out, const std::string& stem,
                         const std::string& header) {
  write_file(out / (stem + ".txt"), r.table(TableFormat::txt, header));
  write_file(out / (stem + ".md"), r.table(TableFormat::md, header));
  write_file(out / (stem + ".csv"), r.table(TableFormat::csv, header));
}

// All six strategies on the first backbone; tags are produced once and
// shared by every strategy. A failing strategy does not stop the others.
inline StudyResult run_ablation(ExperimentConfig cfg, RunnerHooks hooks = {}) {
  cfg.strategies.assign(kAllStrategies.begin(), kAllStrategies.end());
  cfg.backbones.resize(1);
  Runner runner(cfg, std::move(hooks));
  StudyResult out;
  out.records = runner.run_all();
  out.tagger_invocations = runner.tagger_invocations();
  out.rows = summarize(out.records, [](const RunRecord& r) { return r.strategy; });
  write_tables(out, cfg.output_dir, "ablation_table", "Component");
  return out;
}

// Every backbone under the first strategy. The primary backbone is reported
// as the proposed model and always consumes TrNP, whatever the sweep's
// nominal strategy.
inline StudyResult run_backbone_sweep(ExperimentConfig cfg, RunnerHooks hooks = {}) {
  const StrategyId strategy = cfg.strategies.front();
  StudyResult out;
  std::vector<EncoderSpec> baselines, proposed;
  for (const auto& b : cfg.backbones)
    (b.backbone_id == kPrimaryBackbone ? proposed : baselines).push_back(b);

  auto run_group = [&](std::vector<EncoderSpec> backbones, StrategyId s) {
    if (backbones.empty()) return;
    ExperimentConfig c = cfg;
    c.backbones = std::move(backbones);
    c.strategies = {s};
    Runner runner(c, hooks);
    auto recs = runner.run_all();
    out.tagger_invocations += runner.tagger_invocations();
    out.records.insert(out.records.end(), recs.begin(), recs.end());
  };
  run_group(baselines, strategy);
  run_group(proposed, StrategyId::TrNP);

  out.rows = summarize(out.records, [](const RunRecord& r) {
    return r.backbone == kPrimaryBackbone ? std::string("Proposed Model")
                                          : find_backbone(r.backbone).display_name;
  });
  write_tables(out, cfg.output_dir, "sweep_" + to_lower(to_string(strategy)) + "_table", "Model");
  return out;
}

struct CollectResult {
  std::string csv;
  std::size_t rows = 0;
  std::vector<std::string> warnings;
};

// One CSV row per record.json under `dir`, in run-id order. Failed runs keep
// their status and leave the metric cells empty.
inline CollectResult collect_records(const std::filesystem::path& dir) {
  CollectResult out;
  out.csv = "strategy,backbone,seed,micro_f1,macro_f1,status\n";
  if (!std::filesystem::is_directory(dir)) {
    out.warnings.push_back("not a directory: " + dir.string());
    return out;
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_directory() && std::filesystem::exists(entry.path() / "record.json"))
      files.push_back(entry.path() / "record.json");
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    try {
      const auto r = RunRecord::from_json(json::parse(read_file(f)));
      std::string micro, macro;
      if (r.status == RunStatus::completed) {
        micro = format4(r.test()->micro_f1);
        macro = format4(r.test()->macro_f1);
      }
      out.csv += r.strategy + "," + r.backbone + "," + std::to_string(r.seed) + "," + micro + "," +
                 macro + "," + to_string(r.status) + "\n";
      ++out.rows;
    } catch (const std::exception& e) {
      out.warnings.push_back("skipping unreadable record " + f.string() + ": " + e.what());
    }
  }
  return out;
}

}  // namespace finrex
