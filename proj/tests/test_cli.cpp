// Drives the command-line tool end to end through a shell.
#include <gtest/gtest.h>

#include <cstdio>
#include <sstream>

#include <sys/wait.h>

#include "accpred/metrics.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int exit_code = -1;
  std::string out;
};

Result run(const std::string& args) {
  const std::string cmd = std::string(ACCPRED_CLI_PATH) + " " + args + " 2>/dev/null";
  Result r;
  FILE* p = ::popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int status = ::pclose(p);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string value_of(const std::string& out, const std::string& key) {
  std::istringstream in(out);
  std::string line;
  while (std::getline(in, line))
    if (line.rfind(key + "\t", 0) == 0) return line.substr(key.size() + 1);
  return {};
}

constexpr const char* kClock = "--fixed-clock 2026-01-01T00:00:00Z";

// Shared corpus and model, built once through the tool itself.
class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new oracle::TempDir;
    oracle::spit(path("registry.json"), accpred::DatasetRegistry(oracle::five_datasets()).to_json().dump());
    ASSERT_EQ(run("generate-corpus --registry " + path("registry.json") + " --out " + path("store.jsonl") +
                  " --nets-per-dataset 20 --seed 3 " + kClock)
                  .exit_code,
              0);
    ASSERT_EQ(run("train --store " + path("store.jsonl") + " --registry " + path("registry.json") +
                  " --dcn 0.5 --tau 0.5 --epochs 2 --batch-size 64 --seed 1 --out " + path("model.json") +
                  " " + kClock)
                  .exit_code,
              0);
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static std::string path(const std::string& name) { return (*dir_ / name).string(); }

  static oracle::TempDir* dir_;
};
oracle::TempDir* Cli::dir_ = nullptr;

}  // namespace

TEST_F(Cli, GenerateCorpusIsByteReproducible) {
  const std::string args = "generate-corpus --registry " + path("registry.json") + " --nets-per-dataset 7 --seed 5 " +
                           kClock + " --out ";
  const Result a = run(args + path("a.jsonl"));
  ASSERT_EQ(a.exit_code, 0);
  EXPECT_EQ(value_of(a.out, "records"), "35");
  ASSERT_EQ(run(args + path("b.jsonl")).exit_code, 0);
  EXPECT_EQ(oracle::slurp(path("a.jsonl")), oracle::slurp(path("b.jsonl")));
  // Rerunning onto an existing store replaces it rather than appending.
  ASSERT_EQ(run(args + path("a.jsonl")).exit_code, 0);
  EXPECT_EQ(oracle::slurp(path("a.jsonl")), oracle::slurp(path("b.jsonl")));
  EXPECT_TRUE(fs::exists(path("a.jsonl.manifest.json")));
}

TEST_F(Cli, InputErrorsExitTwo) {
  EXPECT_EQ(run("generate-corpus --registry " + path("nope.json") + " --out " + path("x.jsonl")).exit_code, 2);
  oracle::spit(path("bad_registry.json"), "{\"datasets\": [");
  EXPECT_EQ(run("generate-corpus --registry " + path("bad_registry.json") + " --out " + path("x.jsonl")).exit_code,
            2);
  EXPECT_EQ(run("predict --model " + path("nope.json") + " --dcn 0.5 --num-classes 10 x.json").exit_code, 2);
  EXPECT_EQ(run("no-such-command").exit_code, 2);
}

TEST_F(Cli, EmptySelectionExitsThree) {
  // Difficulties are 0.1 .. 0.9, so nothing lies within 0 of 0.2.
  EXPECT_EQ(run("train --store " + path("store.jsonl") + " --registry " + path("registry.json") +
                " --dcn 0.2 --tau 0 --epochs 1 --out " + path("m0.json"))
                .exit_code,
            3);
  EXPECT_FALSE(fs::exists(path("m0.json")));
  EXPECT_EQ(run("evaluate --model " + path("model.json") + " --store " + path("store.jsonl") + " --registry " +
                path("registry.json") + " --dcn 0.2 --tau 0")
                .exit_code,
            3);
}

TEST_F(Cli, TrainIsByteReproducible) {
  const std::string args = "train --store " + path("store.jsonl") + " --registry " + path("registry.json") +
                           " --dcn 0.3 --tau 0.05 --epochs 2 --batch-size 16 --seed 8 " + kClock + " --out ";
  const Result a = run(args + path("t1.json"));
  ASSERT_EQ(a.exit_code, 0);
  EXPECT_EQ(value_of(a.out, "records"), "20");
  const std::string model = oracle::slurp(path("t1.json"));
  const std::string manifest = oracle::slurp(path("t1.json.manifest.json"));
  ASSERT_EQ(run(args + path("t2.json")).exit_code, 0);
  EXPECT_EQ(oracle::slurp(path("t2.json")), model);
  ASSERT_EQ(run(args + path("t1.json")).exit_code, 0);
  EXPECT_EQ(oracle::slurp(path("t1.json")), model);
  EXPECT_EQ(oracle::slurp(path("t1.json.manifest.json")), manifest);
}

TEST_F(Cli, SampleThenPredict) {
  const Result s = run("sample --out-dir " + path("archs") + " --count 5 --seed 2 " + kClock);
  ASSERT_EQ(s.exit_code, 0);
  std::string files;
  for (int k = 0; k < 5; ++k) {
    char name[32];
    std::snprintf(name, sizeof name, "arch_%05d.json", k);
    ASSERT_TRUE(fs::exists(*dir_ / "archs" / name));
    files += " " + (*dir_ / "archs" / name).string();
  }
  const std::string args = "predict --model " + path("model.json") + " --dcn 0.5 --num-classes 10" + files;
  const Result a = run(args);
  ASSERT_EQ(a.exit_code, 0);
  const Result b = run(args + " --threads 3");
  ASSERT_EQ(b.exit_code, 0);
  // Prediction rows match exactly; only the throughput line may differ.
  auto rows = [](const std::string& out) { return out.substr(0, out.find("throughput\t")); };
  EXPECT_EQ(rows(a.out), rows(b.out));
  EXPECT_EQ(std::count(a.out.begin(), a.out.end(), '\n'), 6);
  EXPECT_NE(a.out.find("networks/s"), std::string::npos);

  // A bad file among good ones: its row is missing and the exit code is 2.
  oracle::spit(path("broken.json"), "{\"layers\": 3}");
  const Result c = run(args + " " + path("broken.json"));
  EXPECT_EQ(c.exit_code, 2);
  EXPECT_EQ(rows(c.out), rows(a.out));
}

TEST_F(Cli, EvolveWritesItsOutputs) {
  const std::string out = path("evo");
  const Result r = run("evolve --model " + path("model.json") + " --dcn 0.5 --num-classes 10 --steps 200 --population 20 "
                    "--seed 4 " + kClock + " --out-dir " + out);
  ASSERT_EQ(r.exit_code, 0);
  EXPECT_EQ(value_of(r.out, "steps"), "200");
  for (const char* f : {"history.tsv", "top1.json", "top2.json", "top3.json", "top.tsv", "manifest.json"})
    EXPECT_TRUE(fs::exists(fs::path(out) / f)) << f;
  const std::string history = oracle::slurp(fs::path(out) / "history.tsv");
  EXPECT_EQ(history.rfind("step\tbest_predicted_accuracy\n", 0), 0u);
  EXPECT_EQ(std::count(history.begin(), history.end(), '\n'), 201);

  const std::string out2 = path("evo2");
  ASSERT_EQ(run("evolve --model " + path("model.json") + " --dcn 0.5 --num-classes 10 --steps 200 --population 20 "
                "--seed 4 " + kClock + " --out-dir " + out2)
                .exit_code,
            0);
  for (const char* f : {"history.tsv", "top1.json", "top2.json", "top3.json", "top.tsv"})
    EXPECT_EQ(oracle::slurp(fs::path(out) / f), oracle::slurp(fs::path(out2) / f)) << f;
  // The manifest names its own directory; a rerun into the same one matches byte for byte.
  const std::string manifest = oracle::slurp(fs::path(out) / "manifest.json");
  ASSERT_EQ(run("evolve --model " + path("model.json") + " --dcn 0.5 --num-classes 10 --steps 200 --population 20 "
                "--seed 4 " + kClock + " --out-dir " + out)
                .exit_code,
            0);
  EXPECT_EQ(oracle::slurp(fs::path(out) / "manifest.json"), manifest);
}

TEST_F(Cli, EvaluateMatchesItsOwnDump) {
  const Result r = run("evaluate --model " + path("model.json") + " --store " + path("store.jsonl") + " --registry " +
                    path("registry.json") + " --dcn 0.5 --tau 0.5 --dump-csv " + path("eval.csv"));
  ASSERT_EQ(r.exit_code, 0);
  EXPECT_EQ(value_of(r.out, "records"), "100");
  std::istringstream csv(oracle::slurp(path("eval.csv")));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "dataset_id,predicted,recorded");
  std::vector<double> p, t;
  while (std::getline(csv, line)) {
    const auto a = line.find(','), b = line.rfind(',');
    p.push_back(std::stod(line.substr(a + 1, b - a - 1)));
    t.push_back(std::stod(line.substr(b + 1)));
  }
  ASSERT_EQ(p.size(), 100u);
  const accpred::metrics::PairedSeries s{p, t};
  auto close = [](const std::string& printed, double v) {
    return oracle::rel_diff(std::stod(printed), v) < 1e-5;
  };
  EXPECT_TRUE(close(value_of(r.out, "mse"), accpred::metrics::mse(s)));
  EXPECT_TRUE(close(value_of(r.out, "kendall_tau"), accpred::metrics::kendall_tau(s)));
  EXPECT_TRUE(close(value_of(r.out, "r_squared"), accpred::metrics::r_squared(s)));
}
