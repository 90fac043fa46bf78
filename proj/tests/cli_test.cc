#include <gtest/gtest.h>

#include <sstream>

#include "json.hpp"
#include "test_support.h"

namespace dupscan {
namespace {

using nlohmann::json;
using testing::TempDir;

const std::string kCli = DUPSCAN_CLI_PATH;

testing::CommandResult cli(const std::string& args) { return testing::run_command(kCli + " " + args + " 2>/dev/null"); }

json cli_json(const std::string& args) {
  const auto r = cli(args);
  EXPECT_EQ(r.exit_code, 0) << args;
  return json::parse(r.out);
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    corpus_ = (dir_ / "corpus").string();
    cli_json("gen --out " + corpus_ + " --n-base 4 --dups 1 --fragment-fraction 0.25 --seed 3");
  }
  TempDir dir_;
  std::string corpus_;
};

TEST(CliGen, DeterministicTree) {
  TempDir dir;
  const std::string a = (dir / "a").string(), b = (dir / "b").string();
  cli_json("gen --out " + a + " --n-base 3 --seed 9");
  cli_json("gen --out " + b + " --n-base 3 --seed 9");
  const auto ta = testing::tree_contents(a);
  EXPECT_FALSE(ta.empty());
  EXPECT_EQ(ta, testing::tree_contents(b));
}

TEST(CliGen, Counts) {
  TempDir dir;
  const json j = cli_json("gen --out " + (dir / "c").string() + " --n-base 4 --dups 2 --fragment-fraction 0.5");
  EXPECT_EQ(j["images"], 16);  // 4 bases, 4 whole duplicates, 4 split ones in 8 halves
  EXPECT_EQ(j["queries"], 4);
  EXPECT_EQ(j["duplicate_images"], 12);
  EXPECT_EQ(j["planted"], 12);
}

TEST(CliGen, UsageErrors) {
  EXPECT_EQ(cli("gen").exit_code, 1);
  EXPECT_EQ(cli("frobnicate").exit_code, 1);
  TempDir dir;
  EXPECT_EQ(cli("gen --out " + (dir / "x").string() + " --n-base 0").exit_code, 2);
}

TEST_F(CliTest, IndexLifecycle) {
  const std::string idx = (dir_ / "idx").string();
  const json first = cli_json("index --corpus " + corpus_ + " --index " + idx);
  EXPECT_EQ(first["status"], "built");
  EXPECT_EQ(first["entries"], 9);
  const json again = cli_json("index --corpus " + corpus_ + " --index " + idx);
  EXPECT_EQ(again["status"], "up_to_date");
  const json other = cli_json("index --corpus " + corpus_ + " --index " + idx + " --max-keypoints 50");
  EXPECT_EQ(other["status"], "rebuilt");
  EXPECT_EQ(json::parse(testing::read_file(dir_ / "idx/header.json"))["count"], 9);

  testing::write_file(dir_ / "idx/header.json", "garbage");
  const auto r = testing::run_command(kCli + " search --corpus " + corpus_ + " --index " + idx +
                                      " --query b0000 2>&1");
  EXPECT_NE(r.exit_code, 0);
  EXPECT_NE(r.out.find("header.json"), std::string::npos) << r.out;
}

TEST_F(CliTest, StaleIndexRefused) {
  const std::string idx = (dir_ / "idx").string();
  cli_json("index --corpus " + corpus_ + " --index " + idx);
  const auto r = cli("search --corpus " + corpus_ + " --index " + idx + " --query b0000 --max-keypoints 50");
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_EQ(cli("search --corpus " + corpus_ + " --index " + (dir_ / "none").string() + " --query b0000").exit_code,
            2);
}

TEST_F(CliTest, SearchOutput) {
  const std::string report = (dir_ / "r.html").string();
  const json j = cli_json("search --corpus " + corpus_ + " --query b0001 --k 3 --report " + report);
  ASSERT_TRUE(j.is_array());
  ASSERT_EQ(j.size(), 3u);
  for (const json& e : j) {
    EXPECT_EQ(e["query"], "b0001");
    for (const char* key : {"candidate", "stage", "final_score", "n_matches", "affine_inliers", "content"}) {
      EXPECT_TRUE(e.contains(key)) << key;
    }
  }
  EXPECT_EQ(j[0]["candidate"].get<std::string>().rfind("b0001_d0", 0), 0u);
  const std::string html = testing::read_file(report);
  EXPECT_NE(html.find("<html"), std::string::npos);
  EXPECT_NE(html.find("data:image/png;base64,"), std::string::npos);
  EXPECT_NE(html.find("<svg"), std::string::npos);
  EXPECT_NE(html.find("b0001"), std::string::npos);
  EXPECT_EQ(cli("search --corpus " + corpus_ + " --query nope").exit_code, 2);
}

TEST_F(CliTest, Discover) {
  const json none = cli_json("discover --corpus " + corpus_ + " --group g00 --threshold 0.999");
  EXPECT_TRUE(none.is_array());
  EXPECT_TRUE(none.empty());
  const json all = cli_json("discover --corpus " + corpus_ + " --group g00 --threshold 0");
  EXPECT_EQ(all.size(), 36u);
  const json found = cli_json("discover --corpus " + corpus_ + " --group g00");
  EXPECT_GE(found.size(), 4u);
  for (const json& e : found) EXPECT_GE(e["final_score"].get<double>(), 0.5);
  EXPECT_EQ(cli("discover --corpus " + corpus_ + " --group nope").exit_code, 2);
}

TEST_F(CliTest, EvalTableAndDeterminism) {
  const std::string table = (dir_ / "t.txt").string();
  const std::string s1 = (dir_ / "s1.json").string(), s8 = (dir_ / "s8.json").string();
  cli_json("eval --corpus " + corpus_ + " --ks 1,3,5 --workers 1 --scores-out " + s1 + " --table-out " + table);
  cli_json("eval --corpus " + corpus_ + " --ks 1,3,5 --workers 8 --scores-out " + s8);
  EXPECT_EQ(testing::read_file(s1), testing::read_file(s8));
  const json scores = json::parse(testing::read_file(s1));
  ASSERT_EQ(scores.size(), 4u);
  EXPECT_EQ(scores[0]["query"], "b0000");
  EXPECT_EQ(scores[0]["results"].size(), 5u);

  const std::string text = testing::read_file(table);
  std::vector<std::string> first_column;
  std::istringstream lines(text);
  for (std::string line; std::getline(lines, line) && !line.empty();) {
    std::istringstream words(line);
    std::string w;
    words >> w;
    first_column.push_back(w);
  }
  EXPECT_EQ(first_column, (std::vector<std::string>{"K", "1", "3", "5"})) << text;
  EXPECT_NE(text.find("R@1"), std::string::npos) << text;
  EXPECT_EQ(cli("eval --corpus " + corpus_ + " --ks 1,x").exit_code, 1);
}

TEST_F(CliTest, DumpConfigRoundTrip) {
  const std::string cfg = (dir_ / "cfg.json").string(), again = (dir_ / "cfg2.json").string();
  cli_json("discover --corpus " + corpus_ + " --group g00 --ratio 0.8 --min-iou 0.2 --dump-config " + cfg);
  const json j = json::parse(testing::read_file(cfg));
  EXPECT_DOUBLE_EQ(j["matching"]["ratio"].get<double>(), 0.8);
  cli_json("discover --corpus " + corpus_ + " --group g00 --config " + cfg + " --dump-config " + again);
  EXPECT_EQ(testing::read_file(cfg), testing::read_file(again));
  testing::write_file(dir_ / "bad.json", R"({"matching": {"bogus": 1}})");
  EXPECT_EQ(cli("discover --corpus " + corpus_ + " --group g00 --config " + (dir_ / "bad.json").string()).exit_code,
            2);
}

}  // namespace
}  // namespace dupscan
