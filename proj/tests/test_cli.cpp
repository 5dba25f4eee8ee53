#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "ctxeng/cli/config.hpp"

namespace fs = std::filesystem;
using namespace ctxeng;

namespace {

struct Result {
  int rc = -1;
  std::string out;
};

Result run(const std::string& args) {
  const std::string cmd = std::string(CTXENG_CLI_PATH) + " " + args + " 2>&1";
  Result r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  while (std::fgets(buf, sizeof buf, p)) r.out += buf;
  const int st = pclose(p);
  r.rc = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t occurrences(const std::string& s, const std::string& what) {
  std::size_t n = 0;
  for (auto pos = s.find(what); pos != std::string::npos; pos = s.find(what, pos + 1)) ++n;
  return n;
}

const char* kSmall =
    "synthgen.users = 150\n"
    "synthgen.days = 8\n"
    "synthgen.zips = 15\n"
    "bench.repetitions = 2\n"
    "tuner.trials = 2\n"
    "tuner.init = 2\n"
    "tuner.train_focal = 200\n"
    "tuner.max_epochs = 2\n"
    "training.max_epochs = 3\n"
    "training.batch_size = 64\n"
    "bench.seq_len = 4\n"
    "bench.focal_train = 400\n"
    "bench.focal_validation = 150\n"
    "bench.focal_test = 200\n"
    "explain.samples = 10\n"
    "explain.permutations = 4\n"
    "explain.background = 20\n";

class Cli : public ::testing::Test {
 protected:
  static fs::path root;
  static std::string cfg;

  static void SetUpTestSuite() {
    root = fs::temp_directory_path() / "ctxeng_cli_tests";
    fs::remove_all(root);
    fs::create_directories(root);
    cfg = (root / "small.cfg").string();
    std::ofstream(cfg) << kSmall;
    ASSERT_EQ(run("datagen -q -c " + cfg + " --run-dir " + (root / "data").string()).rc, 0);
    ASSERT_EQ(run("prepare -q -c " + cfg + " --data " + (root / "data").string() + " --run-dir " +
                  (root / "prep").string())
                  .rc,
              0);
  }

  static std::string dir(const std::string& name) { return (root / name).string(); }
  static std::string bundle() { return (root / "prep" / "bundle.bin").string(); }
};

fs::path Cli::root;
std::string Cli::cfg;

}  // namespace

TEST_F(Cli, DatagenWritesThreeFilesAndIsReproducible) {
  for (const char* f : {"events.tsv", "weather.csv", "census.csv", "manifest.json", "config.resolved"})
    EXPECT_TRUE(fs::exists(root / "data" / f)) << f;
  const auto r = run("datagen -q --deterministic -c " + cfg + " --run-dir " + dir("data2"));
  ASSERT_EQ(r.rc, 0) << r.out;
  EXPECT_NE(r.out.find("events "), std::string::npos);
  for (const char* f : {"events.tsv", "weather.csv", "census.csv"})
    EXPECT_EQ(slurp(root / "data" / f), slurp(root / "data2" / f)) << f;
}

TEST_F(Cli, InvalidConfigExitsWithCodeTwo) {
  auto r = run("datagen -q -c " + cfg + " --set synthgen.users=0 --run-dir " + dir("bad_users"));
  EXPECT_EQ(r.rc, 2);
  EXPECT_NE(r.out.find("synthgen.users"), std::string::npos) << r.out;
  r = run("datagen -q --set synthgen.colour=1 --run-dir " + dir("bad_key"));
  EXPECT_EQ(r.rc, 2);
  EXPECT_NE(r.out.find("unknown key 'synthgen.colour'"), std::string::npos) << r.out;
  r = run("datagen -q --set synthgen.users=many --run-dir " + dir("bad_value"));
  EXPECT_EQ(r.rc, 2);
  r = run("frobnicate");
  EXPECT_EQ(r.rc, 2);
}

TEST_F(Cli, ResolvedConfigRoundTrips) {
  const auto a = run("config -c " + cfg + " --set bench.models=8,9");
  ASSERT_EQ(a.rc, 0);
  const auto resolved = root / "resolved.cfg";
  std::ofstream(resolved) << a.out;
  const auto b = run("config -c " + resolved.string());
  EXPECT_EQ(a.out, b.out);
  EXPECT_NE(a.out.find("bench.models = 8,9"), std::string::npos);
  EXPECT_EQ(slurp(root / "data" / "config.resolved"), run("config -c " + cfg).out);
}

TEST_F(Cli, PaperScalePresetIsWrittenIntoTheResolvedConfig) {
  const auto r = run("config --paper-scale");
  ASSERT_EQ(r.rc, 0);
  for (const char* line : {"bench.paper_scale = true", "bench.repetitions = 10", "tuner.trials = 100",
                           "bench.seq_len = 100", "training.batch_size = 2048", "tuner.space = full",
                           "bench.focal_train = 0", "explain.samples = 20000"})
    EXPECT_NE(r.out.find(line), std::string::npos) << line;
  std::ofstream(root / "paper.cfg") << r.out;
  EXPECT_EQ(run("config -c " + (root / "paper.cfg").string()).out, r.out);
  // Explicit keys still win over the preset.
  EXPECT_NE(run("config --paper-scale --set bench.repetitions=3").out.find("bench.repetitions = 3"),
            std::string::npos);
}

TEST_F(Cli, PrepareReportsManifestAndIsReproducible) {
  const auto r = run("prepare -c " + cfg + " --data " + dir("data") + " --run-dir " + dir("prep2"));
  ASSERT_EQ(r.rc, 0) << r.out;
  EXPECT_NE(r.out.find("columns behavioral 127"), std::string::npos);
  EXPECT_NE(r.out.find("columns weather 19"), std::string::npos);
  EXPECT_NE(r.out.find("columns total 182"), std::string::npos);
  EXPECT_NE(r.out.find("183"), std::string::npos);
  EXPECT_EQ(slurp(root / "prep" / "bundle.bin"), slurp(root / "prep2" / "bundle.bin"));
}

TEST_F(Cli, MissingContextTableIsNamedAndPartialOutputKept) {
  fs::create_directories(root / "broken");
  fs::copy_file(root / "data" / "events.tsv", root / "broken" / "events.tsv", fs::copy_options::overwrite_existing);
  fs::copy_file(root / "data" / "weather.csv", root / "broken" / "weather.csv", fs::copy_options::overwrite_existing);
  const auto r = run("prepare -q -c " + cfg + " --data " + dir("broken") + " --run-dir " + dir("prep_broken"));
  EXPECT_EQ(r.rc, 4);
  EXPECT_NE(r.out.find("census.csv"), std::string::npos) << r.out;
  EXPECT_TRUE(fs::exists(root / "prep_broken.partial"));
  EXPECT_FALSE(fs::exists(root / "prep_broken"));
}

TEST_F(Cli, AblateWritesSevenModelRowsWithManifest) {
  const auto r = run("ablate -q --deterministic -c " + cfg + " --set tuner.trials=0 --bundle " + bundle() +
                     " --run-dir " + dir("ablate"));
  ASSERT_EQ(r.rc, 0) << r.out;
  const std::string csv = slurp(root / "ablate" / "report.csv");
  EXPECT_EQ(occurrences(csv, "\n"), 8u);
  EXPECT_EQ(csv.rfind("model,architecture,specification,", 0), 0u);
  const auto manifest = nlohmann::json::parse(slurp(root / "ablate" / "manifest.json"));
  EXPECT_EQ(manifest["command"], "ablate");
  EXPECT_EQ(manifest["inputs"][0]["name"], "bundle.bin");
  EXPECT_FALSE(manifest.contains("wall_times"));
  EXPECT_TRUE(fs::exists(root / "ablate" / "config.resolved"));
}

TEST_F(Cli, DeterministicAcrossWorkerCounts) {
  const std::string base = "ablate -q --deterministic -c " + cfg + " --set bench.models=1,6 --bundle " + bundle();
  ASSERT_EQ(run(base + " --jobs 1 --run-dir " + dir("j1")).rc, 0);
  ASSERT_EQ(run(base + " --jobs 3 --run-dir " + dir("j3")).rc, 0);
  for (const char* f : {"report.csv", "report.json", "runs.csv", "hpo_model1.jsonl", "manifest.json"})
    EXPECT_EQ(slurp(root / "j1" / f), slurp(root / "j3" / f)) << f;
}

TEST_F(Cli, SweepGivesOneRowPerLength) {
  const auto r = run("sweep -q -c " + cfg + " --set bench.sweep_lengths=1,5,25 --set bench.sweep_channels=behavioral" +
                     " --bundle " + bundle() + " --run-dir " + dir("sweep"));
  ASSERT_EQ(r.rc, 0) << r.out;
  const std::string csv = slurp(root / "sweep" / "sweep.csv");
  EXPECT_EQ(occurrences(csv, "\nbehavioral,"), 3u);
  EXPECT_NE(csv.find("behavioral,25,"), std::string::npos);
}

TEST_F(Cli, ExactExplainOnFullManifestIsASizeError) {
  const auto r = run("explain -q -c " + cfg + " --set explain.mode=exact --bundle " + bundle() + " --run-dir " +
                     dir("explain_exact"));
  EXPECT_EQ(r.rc, 2);
  EXPECT_NE(r.out.find("explain.mode=sampled"), std::string::npos) << r.out;
}

TEST_F(Cli, TrainThenExplainFromCheckpoint) {
  auto r = run("train -q -c " + cfg + " --set training.model=9 --bundle " + bundle() + " --run-dir " + dir("train9"));
  ASSERT_EQ(r.rc, 0) << r.out;
  EXPECT_TRUE(fs::exists(root / "train9" / "model.ckpt"));
  EXPECT_NE(slurp(root / "train9" / "metrics.json").find("\"best_epoch\""), std::string::npos);
  r = run("explain -q -c " + cfg + " --bundle " + bundle() + " --checkpoint " + dir("train9") +
          "/model.ckpt --run-dir " + dir("explain"));
  ASSERT_EQ(r.rc, 0) << r.out;
  for (const char* f : {"shap_values.csv", "importance.csv", "correlations.csv", "importance.svg"})
    EXPECT_TRUE(fs::exists(root / "explain" / f)) << f;
  EXPECT_EQ(slurp(root / "explain" / "correlations.csv").rfind("feature,r_value_shap,r_value_target,kind\n", 0), 0u);
  // A recurrent checkpoint does not fit the dense explainer.
  ASSERT_EQ(run("train -q -c " + cfg + " --bundle " + bundle() + " --run-dir " + dir("train1")).rc, 0);
  r = run("explain -q -c " + cfg + " --bundle " + bundle() + " --checkpoint " + dir("train1") +
          "/model.ckpt --run-dir " + dir("explain_bad"));
  EXPECT_EQ(r.rc, 2);
}

TEST_F(Cli, PlotBarsSweepAndErrors) {
  std::ofstream(root / "report7.csv")
      << "model,architecture,specification,behavior,census,weather,time,location,connectivity,r2_mean,r2_std,paper_anchor\n"
      << "1,LSTM,Baseline (no context),X,,,,,,0.20,0.01,\"0.345 (0.0006)\"\n"
      << "2,LSTM,Baseline + Census,X,X,,,,,0.21,0.01,\n"
      << "3,LSTM,Baseline + Weather,X,,X,,,,0.22,0.01,\n"
      << "4,LSTM,Baseline + Time,X,,,X,,,0.23,,\n"
      << "5,LSTM,Baseline + Locations,X,,,,X,,0.24,0.01,\n"
      << "6,LSTM,Baseline + Connectivity,X,,,,,X,0.40,0.01,\n"
      << "7,LSTM,All features,X,X,X,X,X,X,0.45,0.02,\n";
  auto r = run("plot -q --report " + dir("report7.csv") + " --run-dir " + dir("plot1"));
  ASSERT_EQ(r.rc, 0) << r.out;
  const std::string svg = slurp(root / "plot1" / "r2.svg");
  EXPECT_EQ(occurrences(svg, "fill=\"#4878a8\""), 7u);
  ASSERT_EQ(run("plot -q --report " + dir("report7.csv") + " --run-dir " + dir("plot2")).rc, 0);
  EXPECT_EQ(svg, slurp(root / "plot2" / "r2.svg"));

  std::ofstream(root / "empty_sweep.csv") << "channel,length,mean_r2,std,fraction_of_max,repetitions\n";
  r = run("plot -q --sweep " + dir("empty_sweep.csv") + " --run-dir " + dir("plot_empty"));
  EXPECT_NE(r.rc, 0);
  EXPECT_FALSE(fs::exists(root / "plot_empty.partial" / "sweep.svg"));

  std::ofstream(root / "bad.csv") << "model,architecture,specification,behavior,census,weather,time,location,"
                                     "connectivity,r2_mean,r2_std,paper_anchor\n"
                                  << "1,LSTM,x,X,,,,,,0.2,0.01,\n"
                                  << "2,LSTM,y,X,,,,,,zero,0.01,\n";
  r = run("plot -q --report " + dir("bad.csv") + " --run-dir " + dir("plot_bad"));
  EXPECT_EQ(r.rc, 2);
  EXPECT_NE(r.out.find("bad.csv:3"), std::string::npos) << r.out;
}

TEST(Config, UnknownKeysAndFileSyntax) {
  EXPECT_THROW(cli::parse_text("synthgen.users 5\n"), InvalidArgument);
  const auto a = cli::parse_text("# comment\n synthgen.users = 5 # trailing\n\n");
  ASSERT_EQ(a.size(), 1u);
  EXPECT_EQ(a[0].second, "5");
  EXPECT_THROW(cli::resolve({{"nope.key", "1"}}, {}, false), InvalidArgument);
  const auto c = cli::resolve(a, {{"bench.sweep_channels", "context"}}, false);
  EXPECT_EQ(c.synth.n_users, 5);
  EXPECT_EQ(c.bench.sweep_channels, std::vector<std::string>{"context"});
  EXPECT_THROW(cli::resolve({{"pipeline.split_train", "0.5"}}, {}, false), InvalidArgument);
  EXPECT_EQ(cli::config_hash(c), cli::config_hash(cli::resolve(a, {{"bench.sweep_channels", "context"}}, false)));
}
