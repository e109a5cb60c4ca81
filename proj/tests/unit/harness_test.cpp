#include <fstream>
#include <map>

#include <gtest/gtest.h>

#include "advlm/harness.hpp"
#include "advlm/store.hpp"
#include "test_models.hpp"

namespace advlm {
namespace {

const char* kBaseConfig = R"(
seed = 3
sample_size = 20
timestamp = "2024-01-01T00:00:00Z"
strategies = ["Original", "AC"]

[[models]]
kind = "toy-linear"
name = "lin"
seed = 5
shape = [3, 4, 4]
classes = 6

[[datasets]]
path = "desk/dataset.jsonl"
name = "desk"

[[attacks]]
method = "FGSM"
epsilons = ["8/255"]

[[attacks]]
method = "PGD"
epsilons = ["8/255"]
iterations = 20
)";

class HarnessTest : public ::testing::Test {
 protected:
  void SetUp() override {
    DeskDatasetOptions o;
    o.dir = dir_ / "desk";
    o.model = parse_run_config(kBaseConfig, dir_.path()).models[0];
    o.count = 30;
    o.seed = 11;
    write_desk_dataset(o);
  }
  RunConfig config(const std::string& extra = "") const {
    return parse_run_config(extra + kBaseConfig, dir_.path());
  }
  static double value(const GridOutcome& g, const std::string& attack, const std::string& strategy = "Original") {
    for (const auto& r : g.rows) {
      if (r.attack == attack && r.strategy == strategy) return r.value;
    }
    ADD_FAILURE() << "no row " << attack << "/" << strategy;
    return -1;
  }
  testing::TempDir dir_;
};

TEST(ConfigTest, ParsesAllSections) {
  const RunConfig c = parse_run_config(R"(
seed = 9
sample_size = 50
workers = 2
failure_threshold = 0.1
out = "res"
vqa_strategies = ["Original", "Rephrase"]
rewriter = "fixture:rw.jsonl"
[[models]]
kind = "toy-two-branch"
shape = [1, 2, 2]
[[models]]
kind = "remote"
endpoint = "tcp:localhost:9000"
timeout = 5.5
[[datasets]]
path = "data/vqa.jsonl"
[[attacks]]
method = "apgd"
epsilons = ["4/255", 0.0625]
iterations = 10
mask = [0]
)",
                                       "/base");
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.sample_size, 50u);
  EXPECT_EQ(c.workers, 2u);
  EXPECT_EQ(c.out, "/base/res");
  EXPECT_EQ(c.datasets[0].path, "/base/data/vqa.jsonl");
  EXPECT_EQ(c.datasets[0].name, "vqa");
  EXPECT_EQ(c.rewriter, "fixture:/base/rw.jsonl");
  EXPECT_EQ(c.models[0].shape, (Shape{1, 2, 2}));
  EXPECT_DOUBLE_EQ(c.models[1].timeout_seconds, 5.5);
  EXPECT_EQ(c.attacks[0].method, AttackMethod::kApgd);
  EXPECT_EQ(c.attacks[0].epsilons, (std::vector<double>{4.0 / 255.0, 0.0625}));
  EXPECT_EQ(c.attacks[0].mask, (std::set<std::size_t>{0}));
  EXPECT_EQ(c.strategies_for(TaskType::kVqa), (std::vector<std::string>{"Original", "Rephrase"}));
  EXPECT_EQ(c.strategies_for(TaskType::kCaptioning), (std::vector<std::string>{"Original"}));
}

TEST(ConfigTest, RejectsBadConfigs) {
  const std::string models = "[[models]]\nkind = \"toy-linear\"\n[[datasets]]\npath = \"d.jsonl\"\n";
  for (const std::string bad : {
           std::string("sampel_size = 3\n") + models,
           std::string("sample_size = 0\n") + models,
           std::string("failure_threshold = 2.0\n") + models,
           models + "[[attacks]]\nmethod = \"PGD\"\nepsilons = [\"9/0\"]\n",
           models + "[[attacks]]\nmethod = \"PGD\"\nepsilons = [1.5]\n",
           models + "[[attacks]]\nmethod = \"CW\"\nepsilons = [0.1]\n",
           models + "[[attacks]]\nmethod = \"PGD\"\nepsilons = []\n",
           std::string("strategies = [\"AC\", \"AC\"]\n") + models,
           std::string("[[models]]\nkind = \"resnet\"\n[[datasets]]\npath = \"d.jsonl\"\n"),
           std::string("[[models]]\nkind = \"remote\"\n[[datasets]]\npath = \"d.jsonl\"\n"),
           std::string("[[datasets]]\npath = \"d.jsonl\"\n"),
           std::string("this is = not toml ["),
       }) {
    EXPECT_THROW(parse_run_config(bad).validate(), ConfigError) << bad;
  }
}

TEST(ConfigTest, EpsilonParsing) {
  EXPECT_DOUBLE_EQ(parse_epsilon("8/255"), 8.0 / 255.0);
  EXPECT_DOUBLE_EQ(parse_epsilon("0.0313"), 0.0313);
  EXPECT_THROW(parse_epsilon("0"), ConfigError);
  EXPECT_THROW(parse_epsilon("abc"), ConfigError);
  EXPECT_THROW(parse_epsilon("1/0"), ConfigError);
}

TEST(ConfigTest, OverridesReplaceAttacksAndEpsilons) {
  RunConfig c = parse_run_config(
      "[[models]]\nkind = \"toy-linear\"\n[[datasets]]\npath = \"d.jsonl\"\n"
      "[[attacks]]\nmethod = \"PGD\"\nepsilons = [0.1]\niterations = 7\nmask = [0]\n");
  CliOverrides o;
  o.attacks = {"APGD", "FGSM"};
  o.epsilons = {"2/255", "4/255"};
  o.iterations = 12;
  o.strategies = {"AP"};
  o.sample_size = 5;
  o.seed = 4;
  o.workers = 3;
  apply_overrides(c, o);
  ASSERT_EQ(c.attacks.size(), 2u);
  EXPECT_EQ(c.attacks[0].method, AttackMethod::kApgd);
  EXPECT_EQ(c.attacks[0].iterations, 12);
  EXPECT_EQ(c.attacks[0].mask, (std::set<std::size_t>{0}));
  EXPECT_EQ(c.attacks[1].iterations, 1);
  EXPECT_EQ(c.attacks[1].epsilons, (std::vector<double>{2.0 / 255.0, 4.0 / 255.0}));
  EXPECT_EQ(c.strategies, (std::vector<std::string>{"AP"}));
  EXPECT_EQ(c.sample_size, 5u);
  EXPECT_EQ(c.seed, 4u);
  EXPECT_EQ(c.workers, 3u);
}

TEST(ConfigTest, HashIgnoresOutputAndWorkers) {
  const std::string base = "[[models]]\nkind = \"toy-linear\"\n[[datasets]]\npath = \"d.jsonl\"\n";
  const auto a = parse_run_config("out = \"a\"\nworkers = 1\n" + base);
  const auto b = parse_run_config("out = \"b\"\nworkers = 8\n" + base);
  const auto c = parse_run_config("seed = 1\n" + base);
  EXPECT_EQ(a.config_hash(), b.config_hash());
  EXPECT_NE(a.config_hash(), c.config_hash());
  EXPECT_EQ(a.config_hash().size(), 64u);
}

TEST_F(HarnessTest, CleanRowsAreFullScoreOnSelfLabelledData) {
  const GridOutcome g = run_grid(config());
  EXPECT_DOUBLE_EQ(value(g, "None"), 100.0);
  EXPECT_EQ(g.aborted_cells, 0u);
  for (const auto& r : g.rows) {
    EXPECT_EQ(r.samples, 20u);
    EXPECT_EQ(r.metric, "vqa_accuracy");
    EXPECT_EQ(r.timestamp, "2024-01-01T00:00:00Z");
    EXPECT_EQ(r.status, "ok");
  }
}

TEST_F(HarnessTest, GridIsComplete) {
  const GridOutcome g = run_grid(config());
  // (FGSM, PGD) x one epsilon plus None, for two strategies.
  EXPECT_EQ(g.rows.size(), 6u);
  std::set<std::pair<std::string, std::string>> cells;
  for (const auto& r : g.rows) cells.insert({r.attack, r.strategy});
  EXPECT_EQ(cells.size(), 6u);
}

TEST_F(HarnessTest, AttackOrderingAndCleanUpperBound) {
  const GridOutcome g = run_grid(config());
  EXPECT_LE(value(g, "PGD"), value(g, "FGSM"));
  EXPECT_LE(value(g, "FGSM"), value(g, "None"));
  EXPECT_LT(value(g, "PGD"), 100.0);
}

TEST_F(HarnessTest, CleanRowIndependentOfAttacks) {
  RunConfig only_fgsm = config();
  only_fgsm.attacks.resize(1);
  RunConfig none = config();
  none.attacks.clear();
  EXPECT_EQ(value(run_grid(only_fgsm), "None"), value(run_grid(config()), "None"));
  EXPECT_EQ(value(run_grid(none), "None"), value(run_grid(config()), "None"));
  EXPECT_EQ(run_grid(none).rows.size(), 2u);
}

TEST_F(HarnessTest, DeterministicAcrossWorkerCounts) {
  RunConfig one = config();
  RunConfig four = config();
  four.workers = 4;
  EXPECT_EQ(run_grid(one).rows, run_grid(four).rows);
}

TEST_F(HarnessTest, SeedChangesSubset) {
  RunConfig a = config();
  a.attacks.resize(1);
  RunConfig b = a;
  b.seed = 4;
  EXPECT_NE(a.config_hash(), b.config_hash());
  const auto ga = run_grid(a);
  const auto gb = run_grid(b);
  EXPECT_EQ(ga.rows.size(), gb.rows.size());
}

TEST_F(HarnessTest, MaskedAttackIsWeaker) {
  const char* two_branch = R"(
seed = 1
sample_size = 30
timestamp = "t"
[[models]]
kind = "toy-two-branch"
seed = 2
shape = [3, 4, 4]
classes = 5
[[datasets]]
path = "two/dataset.jsonl"
[[attacks]]
method = "PGD"
epsilons = ["16/255"]
iterations = 20
)";
  RunConfig full = parse_run_config(two_branch, dir_.path());
  DeskDatasetOptions o;
  o.dir = dir_ / "two";
  o.model = full.models[0];
  o.count = 30;
  write_desk_dataset(o);
  RunConfig masked = full;
  masked.attacks[0].mask = std::set<std::size_t>{0};
  const double full_acc = value(run_grid(full), "PGD");
  const double masked_acc = value(run_grid(masked), "PGD");
  EXPECT_GE(masked_acc, full_acc);
  masked.attacks[0].mask = std::set<std::size_t>{2};
  EXPECT_THROW(run_grid(masked), ConfigError);
}

TEST_F(HarnessTest, CaptioningGrid) {
  const char* caption = R"(
sample_size = 15
timestamp = "t"
caption_strategies = ["Original", "RandomString"]
[[models]]
kind = "toy-caption"
seed = 3
shape = [3, 4, 4]
length = 4
vocab = 12
[[datasets]]
path = "cap/dataset.jsonl"
name = "caps"
[[attacks]]
method = "APGD"
epsilons = ["8/255"]
iterations = 10
)";
  RunConfig c = parse_run_config(caption, dir_.path());
  DeskDatasetOptions o;
  o.dir = dir_ / "cap";
  o.model = c.models[0];
  o.count = 15;
  write_desk_dataset(o);
  const GridOutcome g = run_grid(c);
  ASSERT_EQ(g.rows.size(), 4u);
  for (const auto& r : g.rows) EXPECT_EQ(r.metric, "cider");
  EXPECT_GT(value(g, "None"), 0.0);
  EXPECT_LE(value(g, "APGD"), value(g, "None"));
  // The toy ignores the prompt, so both strategies score the same.
  EXPECT_EQ(value(g, "None", "Original"), value(g, "None", "RandomString"));
}

TEST_F(HarnessTest, TaskMismatchAndBadStrategyAreConfigErrors) {
  RunConfig c = config();
  c.models[0].kind = "toy-caption";
  EXPECT_THROW(run_grid(c), ConfigError);
  RunConfig s = config();
  s.strategies = {"RandomString"};
  EXPECT_THROW(run_grid(s), ConfigError);
  RunConfig missing = config();
  missing.datasets[0].path = dir_ / "nope.jsonl";
  EXPECT_THROW(run_grid(missing), ConfigError);
}

TEST_F(HarnessTest, FailureThresholdAbortsCell) {
  // Break one image of the dataset; with sample_size 30 every record is drawn.
  std::ofstream(dir_ / "desk" / "images" / "00003.ppm", std::ios::trunc) << "P6\n4 4\n255\n";
  RunConfig strict = config();
  strict.sample_size = 30;
  strict.out = dir_ / "strict";
  std::vector<std::string> logs;
  EXPECT_EQ(run_and_report(strict, [&](const std::string& m) { logs.push_back(m); }), kExitPartialFailure);
  const auto rows = load_rows(strict.out / "results.jsonl").rows;
  ASSERT_FALSE(rows.empty());
  for (const auto& r : rows) {
    EXPECT_EQ(r.status, "aborted");
    EXPECT_EQ(r.failed, 1u);
  }
  bool named = false;
  for (const auto& l : logs) named = named || l.find("desk-00003") != std::string::npos;
  EXPECT_TRUE(named);

  RunConfig tolerant = strict;
  tolerant.failure_threshold = 0.05;
  tolerant.out = dir_ / "tolerant";
  EXPECT_EQ(run_and_report(tolerant), kExitOk);
  for (const auto& r : load_rows(tolerant.out / "results.jsonl").rows) {
    EXPECT_EQ(r.status, "ok");
    EXPECT_EQ(r.samples, 30u);
    EXPECT_EQ(r.failed, 1u);
  }
}

TEST_F(HarnessTest, RunAndReportWritesArtifacts) {
  RunConfig c = config();
  c.out = dir_ / "out";
  ASSERT_EQ(run_and_report(c), kExitOk);
  EXPECT_EQ(load_rows(c.out / "results.jsonl").rows.size(), 6u);
  EXPECT_TRUE(std::filesystem::is_regular_file(c.out / "report.md"));
  EXPECT_TRUE(std::filesystem::is_regular_file(c.out / "report.csv"));
  // The store is append-only.
  ASSERT_EQ(run_and_report(c), kExitOk);
  EXPECT_EQ(load_rows(c.out / "results.jsonl").rows.size(), 12u);
}

TEST_F(HarnessTest, RemoteModelMatchesInProcess) {
  RunConfig local = config();
  RunConfig remote = config();
  remote.models[0].kind = "remote";
  remote.models[0].endpoint = std::string("cmd:") + FAKE_ORACLE_PATH + " --seed 5 --shape 3,4,4 --classes 6";
  remote.workers = 2;
  remote.attacks.resize(1);
  local.attacks.resize(1);
  const auto gl = run_grid(local);
  const auto gr = run_grid(remote);
  ASSERT_EQ(gl.rows.size(), gr.rows.size());
  for (std::size_t i = 0; i < gl.rows.size(); ++i) EXPECT_EQ(gl.rows[i].value, gr.rows[i].value) << i;
}

TEST_F(HarnessTest, UnreachableEndpointIsEndpointError) {
  RunConfig c = config();
  c.models[0].kind = "remote";
  c.models[0].endpoint = "cmd:exit 3";
  EXPECT_THROW(run_grid(c), EndpointError);
  c.models[0].endpoint = "tcp:127.0.0.1:1";
  EXPECT_THROW(run_grid(c), EndpointError);
}

TEST_F(HarnessTest, MidRunPeerFailureNamesTheSample) {
  RunConfig c = config();
  c.attacks.clear();
  c.failure_threshold = 1.0;
  c.models[0].kind = "remote";
  c.models[0].timeout_seconds = 0.2;
  c.strategies = {"Original"};
  c.models[0].endpoint = std::string("cmd:") + FAKE_ORACLE_PATH + " --seed 5 --shape 3,4,4 --classes 6 --hang-after 3";
  const GridOutcome g = run_grid(c);
  bool timeout_named = false;
  for (const auto& w : g.warnings) {
    timeout_named = timeout_named || (w.find("sample desk-") != std::string::npos && w.find("timeout") != std::string::npos);
  }
  EXPECT_TRUE(timeout_named);
}

}  // namespace
}  // namespace advlm
