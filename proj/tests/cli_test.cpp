#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "cli.hpp"
#include "json.hpp"

namespace {

namespace fs = std::filesystem;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = ssnas::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() / ("ssnas_cli_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                         "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  void TearDown() override { fs::remove_all(root_); }

  std::string path(const std::string& name) const { return (root_ / name).string(); }

  std::string write(const std::string& name, const std::string& contents) const {
    std::ofstream(path(name)) << contents;
    return path(name);
  }

  static std::string read(const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
  }

  std::set<std::string> files() const {
    std::set<std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root_))
      if (e.is_regular_file()) out.insert(fs::relative(e.path(), root_).generic_string());
    return out;
  }

  // Runs the command and checks that every new file is inside `out`.
  Result run_confined(std::vector<std::string> args, const std::string& out) {
    const auto before = files();
    Result r = run(std::move(args));
    for (const std::string& f : files()) {
      if (before.contains(f)) continue;
      EXPECT_TRUE(f.starts_with(out + "/")) << f << " written outside " << out;
    }
    return r;
  }

  std::string synth(const std::string& out, std::size_t size = 300) {
    EXPECT_EQ(run_confined({"bench-synth", "--size", std::to_string(size), "--seed", "3", "--out", path(out)}, out).code,
              0);
    return path(out + "/benchmark.jsonl");
  }

  fs::path root_;
};

const char* kChain = R"({"matrix": [[0,1,0],[0,0,1],[0,0,0]], "ops": ["input","conv3x3","output"]})";

TEST_F(CliTest, GedOfIdenticalFilesIsZeroAndOne) {
  const std::string a = write("a.json", kChain);
  const std::string b = write("b.json", kChain);
  const Result r = run({"ged", a, b});
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out, "0\n1.0\n");
}

TEST_F(CliTest, EncodePrintsThreeEncodings) {
  const Result r = run({"encode", write("a.json", kChain)});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j.at("papbe").size(), 15u);
  EXPECT_EQ(j.at("adjacency").size(), 63u);
  EXPECT_EQ(j.at("path_based").size(), 364u);
  int ones = 0;
  for (int v : j.at("papbe")) ones += v;
  EXPECT_EQ(ones, 1);
}

TEST_F(CliTest, SearchWritesBudgetRowsAndReruns) {
  const std::string bench = synth("synth");
  ASSERT_EQ(run_confined({"pretrain", "--method", "contrastive", "--benchmark", bench, "--epochs", "1", "--batch", "64",
                          "--draws", "16", "--seed", "2", "--out", path("ccl")},
                         "ccl")
                .code,
            0);
  const Result r = run_confined({"search", "--strategy", "npenas-ssccl", "--budget", "150", "--ft-budget", "90",
                                 "--ft-epochs", "3", "--benchmark", bench, "--pretrained", path("ccl/checkpoint.json"),
                                 "--seed", "5", "--out", path("s1")},
                                "s1");
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string trace = read(path("s1/traces/npenas-ssccl-0.csv"));
  EXPECT_EQ(std::count(trace.begin(), trace.end(), '\n'), 151);
  EXPECT_TRUE(trace.starts_with("step,val_err,test_err,best_val,best_test\n"));

  const auto manifest = nlohmann::json::parse(read(path("s1/manifest.json")));
  EXPECT_EQ(manifest.at("seed"), 5);
  EXPECT_TRUE(manifest.at("inputs").contains(bench));
  EXPECT_TRUE(manifest.at("outputs").contains("traces/npenas-ssccl-0.csv"));
  EXPECT_TRUE(manifest.at("outputs").contains("curves.csv"));

  ASSERT_EQ(run_confined({"rerun", path("s1/manifest.json"), "--out", path("s2")}, "s2").code, 0);
  EXPECT_EQ(read(path("s2/traces/npenas-ssccl-0.csv")), trace);
  EXPECT_EQ(read(path("s2/curves.csv")), read(path("s1/curves.csv")));
  EXPECT_EQ(read(path("s2/aggregate.json")), read(path("s1/aggregate.json")));
}

TEST_F(CliTest, ConfigFileIsOverriddenByFlags) {
  const std::string bench = synth("synth");
  const std::string cfg = write("cfg.toml", "[search]\nbudget=30\ntrials=3\nstrategy=[\"random\"]\n");
  ASSERT_EQ(run({"--config", cfg, "search", "--benchmark", bench, "--trials", "2", "--out", path("o")}).code, 0);
  EXPECT_TRUE(fs::exists(path("o/traces/random-1.csv")));
  EXPECT_FALSE(fs::exists(path("o/traces/random-2.csv")));
  const std::string trace = read(path("o/traces/random-0.csv"));
  EXPECT_EQ(std::count(trace.begin(), trace.end(), '\n'), 31);
}

TEST_F(CliTest, PretrainAndModelInfo) {
  const Result r = run_confined({"pretrain", "--method", "regression", "--space", "surrogate5", "--size", "100",
                                 "--epochs", "2", "--out", path("rl")},
                                "rl");
  ASSERT_EQ(r.code, 0) << r.err;
  const Result info = run({"model-info", path("rl/checkpoint.json")});
  ASSERT_EQ(info.code, 0);
  EXPECT_NE(info.out.find("kind frl"), std::string::npos);
  EXPECT_NE(info.out.find("\nparameters "), std::string::npos);
  const std::string history = read(path("rl/history.csv"));
  EXPECT_EQ(std::count(history.begin(), history.end(), '\n'), 3);
}

TEST_F(CliTest, StudyWritesGrid) {
  const std::string bench = synth("synth");
  const Result r = run_confined({"study", "--benchmark", bench, "--budgets", "10,20", "--epochs", "2,4", "--trials",
                                 "2", "--eval-size", "50", "--out", path("st")},
                                "st");
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string csv = read(path("st/study.csv"));
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
}

TEST_F(CliTest, ConvertNb201Records) {
  const std::string input =
      write("nb201.jsonl",
            "{\"arch\": \"|nor_conv_3x3~0|+|skip_connect~0|nor_conv_1x1~1|+|none~0|avg_pool_3x3~1|nor_conv_3x3~2|\", "
            "\"val_acc\": [90.0, 91.0, 92.0], \"test_acc\": [89.0, 90.0, 91.0]}\n"
            "{\"cell\": [\"skip_connect\",\"skip_connect\",\"skip_connect\",\"skip_connect\",\"skip_connect\","
            "\"skip_connect\"], \"val_err\": [0.2], \"test_err\": [0.25]}\n"
            "{\"cell\": [\"skip_connect\",\"skip_connect\",\"skip_connect\",\"skip_connect\",\"skip_connect\","
            "\"skip_connect\"], \"val_err\": [0.2], \"test_err\": [0.25]}\n");
  const Result r = run_confined({"convert", "--input", input, "--out", path("cv")}, "cv");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("into 2 records (1 duplicates)"), std::string::npos);
  const std::string bench = read(path("cv/benchmark.jsonl"));
  EXPECT_EQ(std::count(bench.begin(), bench.end(), '\n'), 3);

  const std::string bad = write("bad.jsonl", "{\"cell\": [\"skip_connect\"], \"val_err\": [0.1], \"test_err\": [0.1]}\n"
                                             "{\"cell\": [\"warp\",\"a\",\"b\",\"c\",\"d\",\"e\"]}\n");
  const Result e = run({"convert", "--input", bad, "--out", path("cv2")});
  EXPECT_EQ(e.code, 1);
  EXPECT_NE(e.err.find("bad.jsonl:1:"), std::string::npos);
}

TEST_F(CliTest, ErrorsAreSingleLines) {
  const std::string bench = synth("synth");
  auto single_line = [](const Result& r) {
    EXPECT_NE(r.code, 0);
    EXPECT_TRUE(r.err.starts_with("error: ")) << r.err;
    EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1) << r.err;
  };
  single_line(run({"search", "--benchmark", bench, "--strategy", "random", "--bogus", "--out", path("x")}));
  single_line(run({"ged", path("missing.json"), path("missing.json")}));
  single_line(run({"frobnicate"}));
  single_line(run({"search", "--benchmark", bench, "--strategy", "npenas-ssrl", "--out", path("x")}));

  std::string text = read(bench);
  text.replace(text.find("\"format_version\":1"), 18, "\"format_version\":2");
  const std::string future = write("future.jsonl", text);
  const Result v = run({"search", "--benchmark", future, "--strategy", "random", "--out", path("y")});
  single_line(v);
  EXPECT_EQ(v.code, 1);

  const std::string ckpt = write("ckpt.json", R"({"format_version": 7, "metadata": {}, "params": {}, "buffers": {}})");
  single_line(run({"model-info", ckpt}));
}

TEST_F(CliTest, HelpListsSubcommands) {
  const Result r = run({"--help"});
  EXPECT_EQ(r.code, 0);
  for (const char* sub : {"encode", "ged", "pretrain", "search", "study", "bench-synth", "convert", "model-info"})
    EXPECT_NE(r.out.find(sub), std::string::npos) << sub;
  const Result s = run({"search", "--help"});
  EXPECT_EQ(s.code, 0);
  EXPECT_NE(s.out.find("--ft-budget"), std::string::npos);
}

}  // namespace
