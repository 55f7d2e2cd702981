#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "contrastlab/cli.hpp"
#include "contrastlab/config.hpp"
#include "contrastlab/telemetry.hpp"

using namespace contrastlab;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result clab(std::vector<std::string> args) {
  args.insert(args.begin(), "clab");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "clab_cli_test" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string first_line(const std::string& s) { return s.substr(0, s.find('\n')); }

// Validation rows whose terms are V-curves with minima at the given epochs.
fs::path v_fixture(const fs::path& dir, int pos_min, int total_min, int epochs = 120) {
  const fs::path path = dir / "metrics.csv";
  MetricsWriter w(path.string());
  for (int e = 1; e <= epochs; ++e) {
    EpochMetrics m;
    m.epoch = e;
    m.split = Split::Val;
    m.positive_term = std::abs(e - pos_min) * 0.01;
    m.total_loss = std::abs(e - total_min) * 0.01;
    m.negative_term = m.total_loss - m.positive_term;
    w.append(m);
  }
  return path;
}

const std::vector<std::string> kVFlags{"--window", "1", "--min-delta", "0.02", "--patience", "5", "--warmup", "0"};

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST(Cli, UsageErrors) {
  EXPECT_EQ(clab({}).code, kExitUsage);
  EXPECT_EQ(clab({"bogus"}).code, kExitUsage);
  EXPECT_EQ(clab({"train"}).code, kExitUsage);
  EXPECT_EQ(clab({"detect", "x.csv", "--split", "test"}).code, kExitUsage);
  EXPECT_EQ(clab({"--help"}).code, kExitOk);
}

TEST(Cli, MakeTinyFixtureIsIdempotentAndValid) {
  const fs::path dir = scratch("fixture");
  const Result r = clab({"make-tiny-fixture", dir.string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  ASSERT_TRUE(fs::exists(dir / "tiny.json"));
  ASSERT_TRUE(fs::exists(dir / kTinyDatasetFile));
  const std::string config = slurp(dir / "tiny.json");
  const std::string blob = slurp(dir / kTinyDatasetFile);
  EXPECT_EQ(blob.size(), 96u * (1 + 3 * 8 * 8));

  EXPECT_EQ(clab({"make-tiny-fixture", dir.string()}).code, kExitOk);
  EXPECT_EQ(slurp(dir / "tiny.json"), config);
  EXPECT_EQ(slurp(dir / kTinyDatasetFile), blob);

  const ExperimentConfig cfg = load_config((dir / "tiny.json").string());
  EXPECT_TRUE(validation_errors(cfg).empty());
  EXPECT_EQ(cfg.dataset.root, dir.string());
}

TEST(Cli, TrainFiveEpochs) {
  const fs::path dir = scratch("train5");
  ASSERT_EQ(clab({"make-tiny-fixture", dir.string()}).code, kExitOk);
  const std::string run_dir = (dir / "out").string();
  const Result r = clab({"train", "--config", (dir / "tiny.json").string(), "--set", "max_epochs=5", "--output-dir",
                         run_dir, "--log-every", "0"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(first_line(r.out), (fs::path(run_dir) / "manifest.json").string());
  EXPECT_EQ(read_metrics((fs::path(run_dir) / "metrics.csv").string()).size(), 10u);
  const Json manifest = Json::parse(slurp(fs::path(run_dir) / "manifest.json"));
  EXPECT_EQ(manifest["config"]["max_epochs"], 5);  // the override is echoed
  EXPECT_EQ(manifest["config"]["output_dir"], run_dir);
}

TEST(Cli, TrainRejectsInvalidConfigByField) {
  const fs::path dir = scratch("invalid");
  ASSERT_EQ(clab({"make-tiny-fixture", dir.string()}).code, kExitOk);
  const std::string config = (dir / "tiny.json").string();
  Result r = clab({"train", "--config", config, "--set", "loss.temperature=-1"});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("loss.temperature"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(dir / "run"));

  r = clab({"train", "--config", config, "--set", "loss.tau=1"});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("loss.tau"), std::string::npos);
  EXPECT_EQ(clab({"train", "--config", (dir / "missing.json").string()}).code, kExitUsage);

  std::ofstream(dir / "extra.json") << R"({"loss": {"temperature": 0.5, "extra": 1}})";
  EXPECT_EQ(clab({"train", "--config", (dir / "extra.json").string()}).code, kExitUsage);
}

TEST(Cli, DeterministicTrainingIsByteIdentical) {
  const fs::path dir = scratch("determinism");
  ASSERT_EQ(clab({"make-tiny-fixture", dir.string()}).code, kExitOk);
  std::vector<std::string> outputs;
  for (const char* name : {"a", "b"}) {
    const std::string run_dir = (dir / name).string();
    ASSERT_EQ(clab({"train", "--config", (dir / "tiny.json").string(), "--set", "max_epochs=8", "--output-dir",
                    run_dir, "--log-every", "0"})
                  .code,
              kExitOk);
    outputs.push_back(slurp(fs::path(run_dir) / "metrics.csv"));
  }
  EXPECT_EQ(outputs[0], outputs[1]);
}

TEST(Cli, AbortedTrainingExitsOne) {
  const fs::path dir = scratch("abort");
  ASSERT_EQ(clab({"make-tiny-fixture", dir.string()}).code, kExitOk);
  const Result r = clab({"train", "--config", (dir / "tiny.json").string(), "--set", "learning_rate=1e300",
                         "--output-dir", (dir / "out").string(), "--log-every", "0"});
  EXPECT_EQ(r.code, kExitRuntime);
  EXPECT_TRUE(fs::exists(dir / "out" / "abort_snapshot.json"));
}

TEST(Cli, EvaluateCheckpoint) {
  const fs::path dir = scratch("evaluate");
  ASSERT_EQ(clab({"make-tiny-fixture", dir.string()}).code, kExitOk);
  const std::string config = (dir / "tiny.json").string();
  ASSERT_EQ(clab({"train", "--config", config, "--set", "max_epochs=3", "--log-every", "0"}).code, kExitOk);
  const std::string ckpt = (dir / "run" / "final.json").string();
  const Result a = clab({"evaluate", "--config", config, "--checkpoint", ckpt});
  ASSERT_EQ(a.code, kExitOk) << a.err;
  const Json j = Json::parse(a.out);
  EXPECT_EQ(j["epoch"], 3);
  // Evaluating the final checkpoint reproduces the last validation row.
  const auto rows = read_metrics((dir / "run" / "metrics.csv").string());
  EXPECT_EQ(j["total_loss"].get<double>(), rows.back().total_loss);
  EXPECT_EQ(clab({"evaluate", "--config", config, "--checkpoint", ckpt}).out, a.out);

  EXPECT_EQ(clab({"evaluate", "--config", config, "--checkpoint", (dir / "nope.json").string()}).code, kExitRuntime);
  EXPECT_EQ(clab({"evaluate", "--config", config, "--set", "model.projection_output_dim=8", "--checkpoint", ckpt}).code,
            kExitUsage);
}

TEST(Cli, DetectVerdictEarlier) {
  const fs::path dir = scratch("detect_v");
  const fs::path csv = v_fixture(dir, 30, 60);
  const Result r = clab(concat({"detect", csv.string()}, kVFlags));
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const Json j = Json::parse(r.out);
  EXPECT_EQ(j["positive_term"]["onset_epoch"], 30);
  EXPECT_EQ(j["positive_term"]["fired_epoch"], 37);
  EXPECT_EQ(j["total_loss"]["onset_epoch"], 60);
  EXPECT_EQ(j["verdict"], "earlier");
}

TEST(Cli, DetectMonotoneIsIncomparable) {
  const fs::path dir = scratch("detect_mono");
  const fs::path csv = dir / "metrics.csv";
  {
    MetricsWriter w(csv.string());
    for (int e = 1; e <= 80; ++e) w.append({e, Split::Val, 5.0 - 0.01 * e, -1.0 - 0.01 * e, 6.0, 0.0});
  }
  const Result r = clab({"detect", csv.string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const Json j = Json::parse(r.out);
  EXPECT_TRUE(j["positive_term"]["onset_epoch"].is_null());
  EXPECT_TRUE(j["total_loss"]["onset_epoch"].is_null());
  EXPECT_EQ(j["verdict"], "incomparable");
}

TEST(Cli, DetectErrors) {
  const fs::path dir = scratch("detect_errors");
  EXPECT_EQ(clab({"detect", (dir / "missing.csv").string()}).code, kExitRuntime);
  std::ofstream(dir / "empty.csv").flush();
  EXPECT_EQ(clab({"detect", (dir / "empty.csv").string()}).code, kExitRuntime);
  std::ofstream(dir / "header.csv") << kMetricsHeader << '\n';
  EXPECT_EQ(clab({"detect", (dir / "header.csv").string()}).code, kExitRuntime);
  std::ofstream(dir / "bad.csv") << kMetricsHeader << "\n1,val,0.5,0.1,0.4,0\n2,val,oops,0.1,0.4,0\n";
  const Result r = clab({"detect", (dir / "bad.csv").string()});
  EXPECT_EQ(r.code, kExitRuntime);
  EXPECT_NE(r.err.find("line 3"), std::string::npos) << r.err;
}

TEST(Cli, PlotTinyRun) {
  const fs::path dir = scratch("plot_run");
  ASSERT_EQ(clab({"make-tiny-fixture", dir.string()}).code, kExitOk);
  ASSERT_EQ(clab({"train", "--config", (dir / "tiny.json").string(), "--set", "max_epochs=5", "--log-every", "0"}).code,
            kExitOk);
  const std::string base = (dir / "figs" / "tiny").string();
  const Result r = clab({"plot", (dir / "run" / "metrics.csv").string(), "--output", base});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  for (const char* suffix : {"_loss.svg", "_terms.svg", "_plots.json"}) {
    EXPECT_GT(fs::file_size(base + suffix), 0u) << suffix;
  }
  const Json sidecar = Json::parse(slurp(base + "_plots.json"));
  const Json& loss = sidecar["figures"][0]["panels"][0];
  EXPECT_EQ(loss["series"].size(), 2u);
  ASSERT_EQ(loss["reference_lines"].size(), 1u);
  const auto rows = read_metrics((dir / "run" / "metrics.csv").string());
  double lowest = 1e300;
  for (const auto& m : rows) {
    if (m.split == Split::Val) lowest = std::min(lowest, m.total_loss);
  }
  EXPECT_EQ(loss["reference_lines"][0]["value"].get<double>(), lowest);
  EXPECT_EQ(sidecar["figures"][1]["panels"].size(), 2u);
}

TEST(Cli, PlotMarkersAndSingleSplitWarning) {
  const fs::path dir = scratch("plot_fixture");
  const fs::path csv = v_fixture(dir, 30, 60);
  const std::string base = (dir / "v").string();
  const Result r = clab(concat({"plot", csv.string(), "--output", base}, kVFlags));
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.err.find("warning"), std::string::npos);
  const Json sidecar = Json::parse(slurp(base + "_plots.json"));
  const Json& loss = sidecar["figures"][0]["panels"][0];
  ASSERT_EQ(loss["series"].size(), 1u);
  EXPECT_EQ(loss["series"][0]["name"], "val.total_loss");
  ASSERT_EQ(loss["markers"].size(), 1u);
  EXPECT_EQ(loss["markers"][0]["epoch"], 60);
  const Json& pos = sidecar["figures"][1]["panels"][0];
  ASSERT_EQ(pos["markers"].size(), 1u);
  EXPECT_EQ(pos["markers"][0]["epoch"], 30);
  EXPECT_FALSE(sidecar["warnings"].empty());

  const fs::path blocker = dir / "file";
  std::ofstream(blocker) << "x";
  EXPECT_EQ(clab({"plot", csv.string(), "--output", (blocker / "sub" / "v").string()}).code, kExitRuntime);
}
