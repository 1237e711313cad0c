#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <map>
#include <string>

#include "reprocs/io.hpp"
#include "reprocs/store.hpp"

using namespace reprocs;
namespace fs = std::filesystem;

namespace {

const std::string kCli = REPROCS_CLI_PATH;
const fs::path kSrc = REPROCS_SOURCE_DIR;
const std::string kGoldenConfig = (kSrc / "tests" / "golden" / "config.json").string();

int run(const std::string& args) {
  const std::string cmd = "\"" + kCli + "\" " + args + " >/dev/null 2>&1";
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("reprocs_cli_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

std::map<std::string, std::string> read_all(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = io::read_file(e.path());
  return out;
}

std::map<std::string, double> summary(const fs::path& p) {
  std::map<std::string, double> m;
  for (const auto& row : store::read_csv(p)) m[row.at(0)] = std::stod(row.at(1));
  return m;
}

// One dataset and one run shared by the suite.
class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = scratch("suite");
    ASSERT_EQ(run("generate --config " + q(kGoldenConfig) + " --seed 9 --out " + q(root_ / "data")), 0);
    ASSERT_EQ(run("track --input " + q(root_ / "data") + " --config " + q(kGoldenConfig) + " --out " +
                  q(root_ / "run") + " --no-timing"),
              0);
  }
  static void TearDownTestSuite() { fs::remove_all(root_); }
  static fs::path root_;
};
fs::path Cli::root_;

}  // namespace

TEST_F(Cli, GenerateWritesReconstructableDataset) {
  for (const char* f : {"Y.rstm", "L.rstm", "X.rstm", "V.rstm", "supports.rsts", "segments.csv", "manifest.json",
                        "bases/P_0.rstm", "bases/P_1.rstm"})
    EXPECT_TRUE(fs::exists(root_ / "data" / f)) << f;
  const Dataset ds = store::read_dataset(root_ / "data");
  EXPECT_EQ(ds.Y, ds.truth.L + ds.truth.X + ds.truth.V);
  EXPECT_EQ(ds.Y.rows(), 24);
  EXPECT_EQ(ds.Y.cols(), 260);
  const auto man = store::read_manifest(root_ / "data");
  EXPECT_EQ(man["seed"], 9);
  EXPECT_EQ(man["config_hash"].get<std::string>().size(), 16u);
}

TEST_F(Cli, GenerateIsDeterministic) {
  const fs::path d = scratch("gen_twice");
  ASSERT_EQ(run("generate --config " + q(kGoldenConfig) + " --seed 9 --out " + q(d / "a")), 0);
  ASSERT_EQ(run("generate --config " + q(kGoldenConfig) + " --seed 9 --out " + q(d / "b")), 0);
  ASSERT_EQ(run("generate --config " + q(kGoldenConfig) + " --seed 10 --out " + q(d / "c")), 0);
  EXPECT_EQ(read_all(d / "a"), read_all(d / "b"));
  EXPECT_NE(io::read_file(d / "a" / "Y.rstm"), io::read_file(d / "c" / "Y.rstm"));
  fs::remove_all(d);
}

TEST_F(Cli, TrackOutputsAndDeterminism) {
  for (const char* f : {"lhat.rstm", "xhat.rsts", "xhat_values.rstv", "frames.csv", "changes.csv", "bases.csv",
                        "manifest.json", "offline/lhat.rstm", "metrics.csv", "metrics_offline.csv"})
    EXPECT_TRUE(fs::exists(root_ / "run" / f)) << f;
  EXPECT_FALSE(fs::exists(root_ / "run" / "timing.csv"));
  const store::RunFiles rf = store::read_run(root_ / "run");
  EXPECT_EQ(rf.online.size(), 220u);
  EXPECT_EQ(rf.online.front().t, 40);
  const auto man = store::read_manifest(root_ / "run");
  EXPECT_EQ(man["alpha"], 30);
  EXPECT_EQ(man["K"], 3);

  const fs::path d = scratch("track_twice");
  ASSERT_EQ(run("track --input " + q(root_ / "data") + " --config " + q(kGoldenConfig) + " --out " + q(d) +
                " --no-timing"),
            0);
  EXPECT_EQ(read_all(d), read_all(root_ / "run"));
  fs::remove_all(d);
}

TEST_F(Cli, TrackOfflineFlagOverridesConfig) {
  const fs::path d = scratch("no_offline");
  ASSERT_EQ(run("track --input " + q(root_ / "data") + " --config " + q(kGoldenConfig) + " --out " + q(d) +
                " --offline false"),
            0);
  EXPECT_FALSE(fs::exists(d / "offline"));
  EXPECT_TRUE(fs::exists(d / "timing.csv"));
  fs::remove_all(d);
}

TEST_F(Cli, CleanInputGivesEmptySupports) {
  const fs::path d = scratch("clean");
  const std::string cfg = (d / "clean.json").string();
  io::write_atomic(cfg, R"({"datagen": {"n": 20, "t_max": 150, "t_train": 30, "r": 2, "f": 4},
    "tracker": {"alpha": 20, "K": 2, "xi": 0.5, "omega_supp": 5, "lambda_thresh": 0.01}})");
  ASSERT_EQ(run("generate --config " + q(cfg) + " --seed 1 --out " + q(d / "data")), 0);
  ASSERT_EQ(run("track --input " + q(d / "data") + " --config " + q(cfg) + " --out " + q(d / "run")), 0);
  const store::RunFiles rf = store::read_run(d / "run");
  const Dataset ds = store::read_dataset(d / "data");
  for (const FrameEstimate& e : rf.online) {
    EXPECT_TRUE(e.support.empty());
    EXPECT_FALSE(e.detect_flag);
    EXPECT_LE((e.l_hat - ds.Y.col(e.t)).norm(), 1e-12);
  }
  fs::remove_all(d);
}

TEST_F(Cli, TrackBareMatrixInput) {
  const fs::path d = scratch("bare");
  const Dataset ds = store::read_dataset(root_ / "data");
  io::write_rstm(d / "in" / "Y.rstm", ds.Y);
  const std::string cfg = (d / "t.json").string();
  io::write_atomic(cfg, R"({"tracker": {"r": 2, "alpha": 30, "K": 3, "xi": 0.6666666666666666,
    "omega_supp": 5, "lambda_thresh": 0.0033, "t_train": 40}})");
  ASSERT_EQ(run("track --input " + q(d / "in") + " --config " + q(cfg) + " --out " + q(d / "run")), 0);
  EXPECT_EQ(store::read_run(d / "run").online.size(), 220u);
  EXPECT_FALSE(fs::exists(d / "run" / "metrics.csv"));
  fs::remove_all(d);
}

TEST_F(Cli, EvalTruthAgainstItself) {
  const fs::path d = scratch("eval_self");
  ASSERT_EQ(run("eval --est " + q(root_ / "data") + " --truth " + q(root_ / "data") + " --out " + q(d / "m.csv")), 0);
  const auto rows = store::read_csv(d / "m.csv");
  ASSERT_EQ(rows.size(), 220u);
  for (const auto& r : rows) {
    EXPECT_EQ(std::stod(r.at(1)), 0.0);
    EXPECT_EQ(std::stod(r.at(2)), 0.0);
    EXPECT_EQ(std::stod(r.at(3)), 0.0);
    EXPECT_EQ(std::stod(r.at(4)), 1.0);
    EXPECT_EQ(std::stod(r.at(5)), 1.0);
  }
  const auto s = summary(d / "m_summary.csv");
  EXPECT_EQ(s.at("mean_se"), 0.0);
  EXPECT_EQ(s.at("exact_support_frac"), 1.0);
  fs::remove_all(d);
}

TEST_F(Cli, EvalMatchesGolden) {
  const fs::path d = scratch("golden");
  ASSERT_EQ(run("eval --est " + q(root_ / "run") + " --truth " + q(root_ / "data") + " --out " + q(d / "eval.csv") +
                " --alpha 30 --K 3 --no-timing"),
            0);
  for (const char* f : {"eval.csv", "eval_offline.csv", "eval_changes.csv", "eval_summary.csv", "eval_series.csv"})
    EXPECT_EQ(io::read_file(d / f), io::read_file(kSrc / "tests" / "golden" / f)) << f;
  fs::remove_all(d);
}

TEST_F(Cli, ErrorExitCodes) {
  const fs::path d = scratch("errors");
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("frobnicate"), 2);
  EXPECT_EQ(run("generate --seed 1 --out " + q(d / "x")), 2);
  const std::string bad = (d / "bad.json").string();
  io::write_atomic(bad, R"({"datagen": {"n": 10, "t_max": 10, "t_train": 0, "r": 2, "bogus": 1}})");
  EXPECT_EQ(run("generate --config " + q(bad) + " --seed 1 --out " + q(d / "x")), 2);
  EXPECT_EQ(run("generate --config " + q((d / "missing.json").string()) + " --seed 1 --out " + q(d / "x")), 2);
  EXPECT_EQ(run("track --input " + q(d / "nowhere") + " --config " + q(kGoldenConfig) + " --out " + q(d / "r")), 3);

  // A truth set of a different n is a misalignment.
  const std::string other = (d / "other.json").string();
  io::write_atomic(other, R"({"datagen": {"n": 30, "t_max": 260, "t_train": 40, "r": 2}})");
  ASSERT_EQ(run("generate --config " + q(other) + " --seed 1 --out " + q(d / "other")), 0);
  EXPECT_EQ(run("eval --est " + q(root_ / "run") + " --truth " + q(d / "other") + " --out " + q(d / "m.csv")), 3);
  EXPECT_EQ(run("track --input " + q(root_ / "data") + " --config " + q(other) + " --out " + q(d / "r2")), 3);

  // Truncated matrix file.
  fs::create_directories(d / "trunc");
  fs::copy(root_ / "data", d / "trunc", fs::copy_options::recursive);
  const std::string y = io::read_file(d / "trunc" / "Y.rstm");
  io::write_atomic(d / "trunc" / "Y.rstm", y.substr(0, y.size() - 8));
  EXPECT_EQ(run("track --input " + q(d / "trunc") + " --config " + q(kGoldenConfig) + " --out " + q(d / "r3")), 3);
  fs::remove_all(d);
}

TEST_F(Cli, BenchSingleTrialAndAggregate) {
  const fs::path d = scratch("bench");
  ASSERT_EQ(run("bench --config " + q(kGoldenConfig) + " --trials 1 --seed 9 --out " + q(d / "one")), 0);
  for (const char* f : {"trials.csv", "aggregate.csv", "series.csv", "timing.csv", "manifest.json"})
    EXPECT_TRUE(fs::exists(d / "one" / f)) << f;
  EXPECT_FALSE(fs::exists(d / "one" / "failures.csv"));
  const auto agg = summary(d / "one" / "aggregate.csv");
  EXPECT_EQ(agg.at("trials"), 1.0);
  EXPECT_EQ(agg.at("failed_trials"), 0.0);
  // A single bench trial with seed 9 is the same pipeline as generate + track + eval.
  const auto golden = summary(kSrc / "tests" / "golden" / "eval_summary.csv");
  EXPECT_DOUBLE_EQ(agg.at("mean_se"), golden.at("mean_se"));
  EXPECT_DOUBLE_EQ(agg.at("mean_se_offline"), golden.at("mean_se_offline"));

  ASSERT_EQ(run("bench --config " + q(kGoldenConfig) + " --trials 3 --seed 9 --jobs 2 --out " + q(d / "three")), 0);
  const auto rows = store::read_csv(d / "three" / "trials.csv");
  ASSERT_EQ(rows.size(), 3u);
  const auto a3 = summary(d / "three" / "aggregate.csv");
  // Recompute the mean from the per-trial table; column 3 is mean_se.
  double m = 0.0;
  for (const auto& r : rows) m += std::stod(r.at(3)) / 3.0;
  EXPECT_NEAR(a3.at("mean_se"), m, 1e-12);
  EXPECT_EQ(std::stod(rows[0].at(3)), agg.at("mean_se"));
  fs::remove_all(d);
}
