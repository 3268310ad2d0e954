#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cfb/cfb.hpp"
#include "cfb/cli.hpp"

using namespace cfb;
namespace fs = std::filesystem;

namespace {

const std::string kData = CFB_DATA_DIR;

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("cfb_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  int run(std::vector<std::string> args) {
    out_.str("");
    err_.str("");
    return cli::run(args, out_, err_);
  }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  void write(const std::string& name, const std::string& text) const { std::ofstream(dir_ / name) << text; }

  static std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
  }

  std::vector<std::string> bigram_generate(const std::string& out) const {
    return {"generate", "--config", kData + "/config.json", "--backend", "bigram:" + kData + "/corpus.txt",
            "--context", "the bridge was built by the king in the north", "--question", "who built the bridge",
            "--out", out};
  }

  fs::path dir_;
  std::ostringstream out_, err_;
};

ScriptedModelSpec no_attention_spec() {
  ScriptedModelSpec spec;
  spec.vocab = {"</s>", "Context:", "Question:", "Answer:", "a", "b"};
  spec.steps = {{{0, -5, -5, -5, 1, 2}, std::nullopt}};
  spec.embeddings = std::vector<std::vector<double>>(6, std::vector<double>{1, 2});
  return spec;
}

}  // namespace

TEST_F(CliTest, GenerateWritesResultAndManifest) {
  ASSERT_EQ(run(bigram_generate(path("gen"))), cli::kOk) << err_.str();
  const json result = read_json_file(path("gen/result.json"));
  const json manifest = read_json_file(path("gen/manifest.json"));
  EXPECT_EQ(result.at("text").get<std::string>() + "\n", out_.str());
  EXPECT_EQ(result.at("trace").size(), result.at("generated_tokens").size());
  EXPECT_EQ(manifest.at("command"), "generate");
  EXPECT_EQ(manifest.at("config_path"), kData + "/config.json");
  EXPECT_TRUE(manifest.at("backend_spec").contains("bigram"));
}

TEST_F(CliTest, InvalidConfigExitsTwo) {
  write("bad.json", R"({"lambda1": 0.7, "lambda2": 0.7})");
  auto args = bigram_generate(path("o"));
  args[2] = path("bad.json");
  EXPECT_EQ(run(args), cli::kUserError);
  EXPECT_NE(err_.str().find("lambda"), std::string::npos);
}

TEST_F(CliTest, MissingConfigExitsTwo) {
  auto args = bigram_generate(path("o"));
  args[2] = path("nope.json");
  EXPECT_EQ(run(args), cli::kUserError);
}

TEST_F(CliTest, UnknownFlagExitsTwo) { EXPECT_EQ(run({"generate", "--detla", "2"}), cli::kUserError); }

TEST_F(CliTest, CapabilityErrorExitsThree) {
  write("spec.json", scripted_spec_to_json(no_attention_spec()).dump());
  EXPECT_EQ(run({"generate", "--backend", "scripted:" + path("spec.json"), "--mode", "token", "--context", "a b",
                 "--question", "a", "--out", path("o")}),
            cli::kBackendError);
  EXPECT_NE(err_.str().find("capability error"), std::string::npos);
}

TEST_F(CliTest, EvalWritesReportAndFlagsDuplicates) {
  ASSERT_EQ(run({"eval", "--config", kData + "/config.json", "--backend", "bigram:" + kData + "/corpus.txt",
                 "--dataset", kData + "/dataset.jsonl", "--format", "json", "--out", path("ev")}),
            cli::kOk)
      << err_.str();
  const json rep = read_json_file(path("ev/report.json"));
  EXPECT_EQ(rep.at("aggregate").at("scored"), 20);
  EXPECT_TRUE(fs::exists(path("ev/report.txt")));

  const std::string line = R"({"id": "x", "context": "the king", "question": "who", "reference": "the king"})";
  write("dup.jsonl", line + "\n" + line + "\n");
  EXPECT_EQ(run({"eval", "--backend", "bigram:" + kData + "/corpus.txt", "--dataset", path("dup.jsonl"), "--out",
                 path("ev2")}),
            cli::kUserError);
  EXPECT_NE(err_.str().find("duplicate id 'x'"), std::string::npos);
}

TEST_F(CliTest, EmptyDatasetWarns) {
  write("empty.jsonl", "");
  EXPECT_EQ(run({"eval", "--backend", "bigram:" + kData + "/corpus.txt", "--dataset", path("empty.jsonl"), "--out",
                 path("ev")}),
            cli::kOk);
  EXPECT_NE(err_.str().find("no examples"), std::string::npos);
  EXPECT_NE(out_.str().find("no scored examples"), std::string::npos);
}

TEST_F(CliTest, SweepNeedsTwoPoints) {
  const std::vector<std::string> base = {"sweep", "--config", kData + "/config.json", "--backend",
                                         "bigram:" + kData + "/corpus.txt", "--dataset", kData + "/dataset.jsonl",
                                         "--out", path("sw")};
  auto single = base;
  single.insert(single.end(), {"--grid", "2"});
  EXPECT_EQ(run(single), cli::kUserError);

  auto grid = base;
  grid.insert(grid.end(), {"--grid", "0,4", "--max-new-tokens", "4"});
  ASSERT_EQ(run(grid), cli::kOk) << err_.str();
  const std::string csv = slurp(path("sw/sweep.csv"));
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "delta,rouge_l,support_rate,exact_match");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}

TEST_F(CliTest, FlopsTableScalesWithLayers) {
  ASSERT_EQ(run({"flops", "--out", path("f1")}), cli::kOk);
  const std::string table = out_.str();
  EXPECT_NE(table.find("3.33e+12"), std::string::npos);
  EXPECT_NE(table.find("Token-aware CFB"), std::string::npos);
  ASSERT_EQ(run({"flops", "--layers", "64", "--out", path("f2")}), cli::kOk);
  EXPECT_NE(out_.str().find("6.67e+12"), std::string::npos);
}

TEST_F(CliTest, ConflictCommandSummarizesFlips) {
  ASSERT_EQ(run({"conflict", "--n", "20", "--out", path("c")}), cli::kOk) << err_.str();
  const json j = read_json_file(path("c/conflict.json"));
  EXPECT_EQ(j.at("flips_above"), 20);
  EXPECT_EQ(j.at("flips_below"), 0);
}

TEST_F(CliTest, InspectTraceOneRowPerRecord) {
  auto args = bigram_generate(path("gen"));
  args.insert(args.end(), {"--mode", "context"});
  ASSERT_EQ(run(args), cli::kOk) << err_.str();
  const json result = read_json_file(path("gen/result.json"));
  ASSERT_EQ(run({"inspect-trace", path("gen/result.json"), "--out", path("it")}), cli::kOk) << err_.str();
  const std::string table = slurp(path("it/trace_table.txt"));
  const auto lines = std::count(table.begin(), table.end(), '\n');
  EXPECT_EQ(static_cast<std::size_t>(lines), 1 + result.at("trace").size() + 1);
  EXPECT_EQ(table.rfind("stop: ", table.size() - 2) != std::string::npos, true);
}

TEST_F(CliTest, RerunReproducesFilesByteForByte) {
  ASSERT_EQ(run(bigram_generate(path("gen"))), cli::kOk);
  std::map<std::string, std::string> before;
  for (const auto& e : fs::directory_iterator(path("gen"))) before[e.path().filename()] = slurp(e.path());
  fs::copy_file(path("gen/manifest.json"), path("manifest.json"));
  fs::remove_all(path("gen"));
  ASSERT_EQ(run({"rerun", path("manifest.json")}), cli::kOk) << err_.str();
  std::map<std::string, std::string> after;
  for (const auto& e : fs::directory_iterator(path("gen"))) after[e.path().filename()] = slurp(e.path());
  EXPECT_EQ(before, after);
}
