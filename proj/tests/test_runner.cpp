#include <gtest/gtest.h>

#include <fstream>

#include "desk_fixture.hpp"
#include "finrex/runner.hpp"
#include "test_util.hpp"

using namespace finrex;
using finrex::testing::TempDir;

namespace {

ExperimentConfig desk_config(const std::filesystem::path& out, int epochs = 4) {
  ExperimentConfig cfg;
  cfg.name = "desk";
  cfg.corpus.synthetic = SyntheticSource{};
  cfg.backbones = {EncoderSpec{"tiny_scratch_small"}};
  cfg.train = TrainConfig::desk_scale();
  cfg.train.max_epochs = epochs;
  cfg.output_dir = out;
  return cfg;
}

std::size_t count_records(const std::filesystem::path& dir) {
  std::size_t n = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    n += std::filesystem::exists(e.path() / "record.json");
  return n;
}

// Stands in for the transformer fine-tuning script: echoes the gold label of
// every example and logs its arguments.
std::filesystem::path write_stub_trainer(const std::filesystem::path& dir) {
  const auto path = dir / "stub_trainer.py";
  write_file(path, R"(import json, sys
args = dict(zip(sys.argv[1::2], sys.argv[2::2]))
d = args["--data-dir"]
with open(args["--out"] + "/args.json", "w") as f:
    json.dump(args, f)
for src, dst in [("dev.jsonl", "dev_predictions.jsonl"), ("test.jsonl", "predictions.jsonl")]:
    with open(d + "/" + src) as f, open(args["--out"] + "/" + dst, "w") as g:
        for line in f:
            ex = json.loads(line)
            g.write(json.dumps({"instance_id": ex["instance_id"], "pred_label": ex["label_index"]}) + "\n")
)");
  return path;
}

}  // namespace

TEST(Runner, SingleRunBeatsMajorityBaseline) {
  TempDir tmp;
  auto cfg = desk_config(tmp.path(), 30);
  cfg.backbones = {EncoderSpec{}};
  Runner runner(cfg);
  const auto rec = runner.run_single();
  ASSERT_EQ(rec.status, RunStatus::completed) << rec.failed_stage << ": " << rec.error;
  const auto d = finrex::testing::desk_data(StrategyId::TrNP);
  EXPECT_GT(rec.test()->micro_f1, finrex::testing::majority_baseline(d.train, d.test));
  EXPECT_EQ(rec.run_id, "trnp-tiny_scratch-s42");
  for (const char* f : {"record.json", "predictions.jsonl", "checkpoint"})
    EXPECT_TRUE(std::filesystem::exists(tmp.path() / rec.run_id / f)) << f;
  EXPECT_TRUE(std::filesystem::exists(tmp.path() / "data" / "tags.jsonl"));
  EXPECT_TRUE(std::filesystem::exists(tmp.path() / "data" / "augmented_trnp.jsonl"));
  EXPECT_TRUE(rec.metrics.count("dev"));
  EXPECT_FALSE(rec.environment.value("compiler", "").empty());
}

TEST(Runner, UnresolvablePathFailsAtIngest) {
  TempDir tmp;
  auto cfg = desk_config(tmp.path());
  cfg.corpus = CorpusSource{};
  cfg.corpus.path = tmp.path() / "missing.jsonl";
  Runner runner(cfg);
  const auto rec = runner.run_single();
  EXPECT_EQ(rec.status, RunStatus::failed);
  EXPECT_EQ(rec.failed_stage, "ingest");
  EXPECT_FALSE(rec.error.empty());
  const auto back = RunRecord::from_json(json::parse(read_file(tmp.path() / rec.run_id / "record.json")));
  EXPECT_EQ(back.failed_stage, "ingest");
  EXPECT_EQ(back.status, RunStatus::failed);
}

TEST(Runner, RerunIsDeterministicAndAppendOnly) {
  TempDir tmp;
  const auto cfg = desk_config(tmp.path());
  const auto a = Runner(cfg).run_single();
  const auto tags_first = read_file(tmp.path() / "data" / "tags.jsonl");
  const auto aug_first = read_file(tmp.path() / "data" / "augmented_trnp.jsonl");
  const auto b = Runner(cfg).run_single();
  ASSERT_EQ(a.status, RunStatus::completed);
  ASSERT_EQ(b.status, RunStatus::completed);
  EXPECT_EQ(b.run_id, a.run_id + "-r2");
  EXPECT_EQ(a.metrics, b.metrics);
  EXPECT_EQ(read_file(tmp.path() / a.run_id / "predictions.jsonl"),
            read_file(tmp.path() / b.run_id / "predictions.jsonl"));
  EXPECT_EQ(tags_first, read_file(tmp.path() / "data" / "tags.jsonl"));
  EXPECT_EQ(aug_first, read_file(tmp.path() / "data" / "augmented_trnp.jsonl"));
  EXPECT_TRUE(std::filesystem::exists(tmp.path() / a.run_id / "record.json"));
}

TEST(Runner, DifferentSeedsDifferentRuns) {
  TempDir tmp;
  auto cfg = desk_config(tmp.path(), 2);
  cfg.seeds = {1, 2};
  const auto recs = Runner(cfg).run_all();
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[0].run_id, "trnp-tiny_scratch_small-s1");
  EXPECT_EQ(recs[1].run_id, "trnp-tiny_scratch_small-s2");
  EXPECT_EQ(recs[0].config.at("seeds"), json::array({1}));
}

TEST(Runner, FailureIsIsolatedToOneCell) {
  TempDir tmp;
  RunnerHooks hooks;
  hooks.before_stage = [](const std::string& stage, StrategyId s, const std::string&) {
    if (stage == "train" && s == StrategyId::TNP) throw Error("injected failure");
  };
  const auto study = run_ablation(desk_config(tmp.path(), 2), hooks);
  ASSERT_EQ(study.records.size(), 6u);
  std::size_t completed = 0;
  for (const auto& r : study.records) {
    if (r.strategy == "TNP") {
      EXPECT_EQ(r.status, RunStatus::failed);
      EXPECT_EQ(r.failed_stage, "train");
      EXPECT_NE(r.error.find("injected"), std::string::npos);
    } else {
      completed += r.status == RunStatus::completed;
    }
  }
  EXPECT_EQ(completed, 5u);
  EXPECT_TRUE(study.any_failed());
  ASSERT_EQ(study.rows.size(), 6u);
  for (const auto& row : study.rows) {
    if (row.name == "TNP") {
      EXPECT_FALSE(row.micro_f1.has_value());
      EXPECT_NE(row.note.find("failed 1/1"), std::string::npos);
    } else {
      EXPECT_TRUE(row.micro_f1.has_value()) << row.name;
    }
  }
  EXPECT_NE(study.table(TableFormat::txt, "Component").find("n/a"), std::string::npos);
  for (const char* ext : {".txt", ".md", ".csv"})
    EXPECT_TRUE(std::filesystem::exists(tmp.path() / (std::string("ablation_table") + ext)));
  EXPECT_EQ(count_records(tmp.path()), 6u);
}

TEST(Runner, AugmentFailureRecordedAtAugmentStage) {
  TempDir tmp;
  RunnerHooks hooks;
  hooks.before_stage = [](const std::string& stage, StrategyId, const std::string&) {
    if (stage == "augment") throw Error("boom");
  };
  const auto rec = Runner(desk_config(tmp.path()), hooks).run_single();
  EXPECT_EQ(rec.status, RunStatus::failed);
  EXPECT_EQ(rec.failed_stage, "augment");
}

TEST(Runner, TagsOncePerStudy) {
  TempDir tmp;
  auto cfg = desk_config(tmp.path(), 1);
  cfg.strategies = {StrategyId::T, StrategyId::TrNP};
  cfg.seeds = {1, 2};
  Runner runner(cfg);
  const auto recs = runner.run_all();
  EXPECT_EQ(recs.size(), 4u);
  EXPECT_EQ(runner.tagger_invocations(), 200u);

  Runner again(cfg);
  again.run_single();
  EXPECT_EQ(again.tagger_invocations(), 0u);  // served from the cache
}

TEST(Runner, ParallelMatchesSequential) {
  TempDir seq_dir, par_dir;
  auto cfg = desk_config(seq_dir.path(), 2);
  cfg.strategies = {StrategyId::T, StrategyId::TrNP};
  const auto seq = Runner(cfg).run_all();
  cfg.output_dir = par_dir.path();
  cfg.parallel = true;
  const auto par = Runner(cfg).run_all();
  ASSERT_EQ(seq.size(), par.size());
  for (std::size_t i = 0; i < seq.size(); ++i) {
    EXPECT_EQ(seq[i].run_id, par[i].run_id);
    EXPECT_EQ(seq[i].metrics, par[i].metrics);
  }
}

TEST(Sweep, TwoScratchBackbonesGiveTwoRows) {
  TempDir tmp;
  auto cfg = desk_config(tmp.path(), 2);
  cfg.backbones = {EncoderSpec{"tiny_scratch"}, EncoderSpec{"tiny_scratch_small"}};
  cfg.strategies = {StrategyId::T};
  const auto study = run_backbone_sweep(cfg);
  ASSERT_EQ(study.rows.size(), 2u);
  EXPECT_EQ(study.rows[0].name, "TinyScratch");
  EXPECT_EQ(study.rows[1].name, "TinyScratchSmall");
  for (const auto& r : study.records) EXPECT_EQ(r.strategy, "T");
  EXPECT_TRUE(std::filesystem::exists(tmp.path() / "sweep_t_table.csv"));
}

TEST(Sweep, PrimaryBackboneIsProposedModelOnTrNP) {
  TempDir tmp;
  const auto stub = write_stub_trainer(tmp.path());
  auto cfg = desk_config(tmp.path() / "runs", 2);
  cfg.backbones = {EncoderSpec{"tiny_scratch_small"}, EncoderSpec{"roberta"}};
  cfg.strategies = {StrategyId::T};
  cfg.external_trainer = "python3 " + stub.string();
  const auto study = run_backbone_sweep(cfg);
  ASSERT_EQ(study.records.size(), 2u);
  const RunRecord* proposed = nullptr;
  for (const auto& r : study.records)
    if (r.backbone == "roberta") proposed = &r;
  ASSERT_NE(proposed, nullptr);
  ASSERT_EQ(proposed->status, RunStatus::completed) << proposed->error;
  EXPECT_EQ(proposed->strategy, "TrNP");
  EXPECT_DOUBLE_EQ(proposed->test()->micro_f1, 1.0);
  const auto ext = tmp.path() / "runs" / proposed->run_id / "external";
  for (const char* f : {"train.jsonl", "dev.jsonl", "test.jsonl", "labels.json", "train_config.json",
                        "encoder_spec.json"})
    EXPECT_TRUE(std::filesystem::exists(ext / f)) << f;
  EXPECT_EQ(json::parse(read_file(ext / "args.json")).at("--model"), "roberta-base");
  ASSERT_EQ(study.rows.size(), 2u);
  EXPECT_EQ(study.rows[1].name, "Proposed Model");
}

TEST(Sweep, ExternalBackboneWithoutTrainerFailsAtTrain) {
  TempDir tmp;
  auto cfg = desk_config(tmp.path());
  cfg.backbones = {EncoderSpec{"bert"}};
  const auto rec = Runner(cfg).run_single();
  EXPECT_EQ(rec.status, RunStatus::failed);
  EXPECT_EQ(rec.failed_stage, "train");
  EXPECT_NE(rec.error.find("external_trainer"), std::string::npos);
}

TEST(Collect, EmptyDirectoryGivesHeaderOnly) {
  TempDir tmp;
  const auto r = collect_records(tmp.path());
  EXPECT_EQ(r.csv, "strategy,backbone,seed,micro_f1,macro_f1,status\n");
  EXPECT_EQ(r.rows, 0u);
  EXPECT_TRUE(r.warnings.empty());
}

TEST(Collect, MixedStatusesAndUnreadableRecord) {
  TempDir tmp;
  auto cfg = desk_config(tmp.path(), 1);
  const auto ok = Runner(cfg).run_single();
  auto bad_cfg = cfg;
  bad_cfg.corpus = CorpusSource{};
  bad_cfg.corpus.path = tmp.path() / "nope.jsonl";
  bad_cfg.strategies = {StrategyId::T};
  const auto failed = Runner(bad_cfg).run_single();
  std::filesystem::create_directories(tmp.path() / "zz-broken");
  write_file(tmp.path() / "zz-broken" / "record.json", "{not json");

  const auto r = collect_records(tmp.path());
  EXPECT_EQ(r.rows, 2u);
  ASSERT_EQ(r.warnings.size(), 1u);
  EXPECT_NE(r.warnings[0].find("zz-broken"), std::string::npos);
  EXPECT_NE(r.csv.find("T,tiny_scratch_small,42,,,failed\n"), std::string::npos);
  EXPECT_NE(r.csv.find("TrNP,tiny_scratch_small,42," + format4(ok.test()->micro_f1) + "," +
                       format4(ok.test()->macro_f1) + ",completed\n"),
            std::string::npos);
  // rows follow run-id order
  EXPECT_LT(r.csv.find("T,tiny"), r.csv.find("TrNP,tiny"));
  (void)failed;
}

TEST(Records, JsonRoundTrip) {
  RunRecord r;
  r.run_id = "t-x-s1";
  r.strategy = "T";
  r.backbone = "tiny_scratch";
  r.seed = 1;
  r.status = RunStatus::completed;
  r.metrics["test"] = compute_metrics(std::vector<int>{0, 1}, std::vector<int>{0, 1}, {"a", "b"});
  r.config = desk_config("x").to_json();
  const auto back = RunRecord::from_json(json::parse(r.to_json().dump()));
  EXPECT_EQ(back.run_id, r.run_id);
  EXPECT_EQ(back.metrics, r.metrics);
  EXPECT_EQ(back.config, r.config);

  auto broken = r.to_json();
  broken["metrics"] = json::object();
  EXPECT_THROW(RunRecord::from_json(broken), std::exception);
}

TEST(Config, SnapshotRoundTrip) {
  auto cfg = desk_config("/tmp/out");
  cfg.seeds = {41, 42, 43};
  cfg.external_trainer = "python3 trainer.py";
  cfg.exclude_no_relation = true;
  const auto back = ExperimentConfig::from_json(cfg.to_json());
  EXPECT_EQ(back.to_json(), cfg.to_json());
}

TEST(Config, YamlWithPresetAndRelativePaths) {
  TempDir tmp;
  write_file(tmp.path() / "exp.yaml", R"(name: y
corpus:
  path: data/corpus.jsonl
strategies: [T, TrNP]
backbones:
  - tiny_scratch
  - {backbone_id: roberta, max_length: 256}
train:
  preset: desk_scale
  max_epochs: 7
seeds: [41, 42]
output_dir: out
)");
  const auto cfg = ExperimentConfig::from_yaml_file(tmp.path() / "exp.yaml");
  EXPECT_EQ(cfg.corpus.path, tmp.path() / "data/corpus.jsonl");
  EXPECT_EQ(cfg.output_dir, tmp.path() / "out");
  EXPECT_EQ(cfg.strategies, (std::vector<StrategyId>{StrategyId::T, StrategyId::TrNP}));
  ASSERT_EQ(cfg.backbones.size(), 2u);
  EXPECT_EQ(cfg.backbones[1].max_length, 256);
  EXPECT_DOUBLE_EQ(cfg.train.learning_rate, 1e-3);
  EXPECT_EQ(cfg.train.max_epochs, 7);
  EXPECT_EQ(cfg.seeds, (std::vector<std::uint64_t>{41, 42}));

  write_file(tmp.path() / "bad.yaml", "train: {preset: huge}\ncorpus: x.jsonl\n");
  EXPECT_THROW(ExperimentConfig::from_yaml_file(tmp.path() / "bad.yaml"), Error);
  write_file(tmp.path() / "broken.yaml", "corpus: [unclosed\n");
  EXPECT_THROW(ExperimentConfig::from_yaml_file(tmp.path() / "broken.yaml"), Error);
}

TEST(Config, ShippedConfigsParse) {
  const std::filesystem::path dir = FINREX_SOURCE_DIR "/configs";
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    SCOPED_TRACE(e.path().string());
    const auto cfg = ExperimentConfig::from_yaml_file(e.path());
    EXPECT_NO_THROW(cfg.validate());
  }
}

TEST(Summary, MedianOverSeeds) {
  EXPECT_DOUBLE_EQ(median({3, 1, 2}), 2.0);
  EXPECT_DOUBLE_EQ(median({4, 1, 2, 3}), 2.5);
  EXPECT_THROW(median({}), Error);
}
