#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include <json.hpp>

#include "common.hpp"
#include "seqadj/cli.hpp"

using namespace seqadj;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "seqadj");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string graph(const std::string& name) { return testing_support::data_path("graphs/" + name + ".graph"); }

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() / ("seqadj_cli_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                         "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

}  // namespace

TEST(GraphCheck, AdmissiblePairPasses) {
  const auto r = run({"graph", "check", "-g", graph("fig3a"), "-p", "W1;Z1,Z2"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("PASS"), std::string::npos);
  EXPECT_EQ(r.out.find("FAIL"), std::string::npos);
}

TEST(GraphCheck, BlockedGraphFails) {
  for (const auto* pair : {";", "C1;", ";C2", "C1,C2;"}) {
    const auto r = run({"graph", "check", "-g", graph("fig2d"), "-p", pair});
    EXPECT_EQ(r.code, 1) << pair;
    EXPECT_NE(r.out.find("FAIL"), std::string::npos);
  }
}

TEST(GraphCheck, MalformedGraphIsAUsageError) {
  TempDir tmp;
  const auto path = tmp.file("bad.graph");
  write_file(path, "node A role=exposure\nnode Y role=outcome\nnode R role=selection\nA -> Y\nY ->\n");
  const auto r = run({"graph", "check", "-g", path, "-p", ";"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("line 5"), std::string::npos) << r.err;
  EXPECT_EQ(run({"graph", "check", "-g", tmp.file("absent.graph"), "-p", ";"}).code, 2);
  EXPECT_EQ(run({"graph", "check", "-g", graph("fig3a")}).code, 2);
}

TEST(GraphPairs, Listings) {
  const auto a = run({"graph", "pairs", "-g", graph("fig2a")});
  EXPECT_EQ(a.code, 0);
  EXPECT_NE(a.out.find("({B1};{C2})"), std::string::npos) << a.out;
  EXPECT_NE(a.out.find("({B1,C1,C2};{})"), std::string::npos) << a.out;

  const auto c = run({"graph", "pairs", "-g", graph("fig2c"), "--json"});
  const auto j = nlohmann::json::parse(c.out);
  ASSERT_EQ(j.size(), 1u);
  EXPECT_EQ(j[0]["w"], nlohmann::json::array());
  EXPECT_EQ(j[0]["z"], nlohmann::json::array({"C2"}));

  const auto d = run({"graph", "pairs", "-g", graph("fig2d")});
  EXPECT_EQ(d.code, 0);
  EXPECT_NE(d.err.find("warning"), std::string::npos);
  EXPECT_EQ(nlohmann::json::parse(run({"graph", "pairs", "-g", graph("fig2d"), "--json"}).out).size(), 0u);
}

class EstimateCli : public ::testing::Test {
 protected:
  void SetUp() override {
    data_ = tmp_.file("setup1.csv");
    ASSERT_EQ(run({"generate", "--setup", "1", "--n", "400", "--seed", "5", "-o", data_}).code, 0);
  }
  TempDir tmp_;
  std::string data_;
};

TEST_F(EstimateCli, AllMethodsGiveSixRows) {
  const auto r = run({"estimate", "-d", data_, "-g", graph("fig3a"), "--pair", "auto", "-m", "all", "--seed", "1",
                      "--bootstrap", "10", "--format", "json"});
  EXPECT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  ASSERT_EQ(j.size(), 6u);
  std::set<std::string> methods;
  for (const auto& e : j) methods.insert(e["method"].get<std::string>());
  EXPECT_EQ(methods, (std::set<std::string>{"tsr", "dipw", "sr", "cd", "tmle1r", "tmlecc"}));
  // Z is continuous here, so the discrete formula reports instead of estimating
  for (const auto& e : j) {
    if (e["method"] == "cd") {
      EXPECT_TRUE(e.contains("error"));
    }
  }
}

TEST_F(EstimateCli, CsvAndTableFormats) {
  const auto csv = run({"estimate", "-d", data_, "-g", graph("fig3a"), "-m", "tsr,dipw", "--seed", "1", "--format", "csv"});
  EXPECT_EQ(csv.code, 0) << csv.err;
  EXPECT_EQ(parse_csv_records(csv.out).size(), 3u);
  const auto table = run({"estimate", "-d", data_, "-g", graph("fig3a"), "-m", "tsr", "--seed", "1"});
  EXPECT_EQ(table.code, 0);
  EXPECT_NE(table.out.find("tsr"), std::string::npos);
}

TEST_F(EstimateCli, InadmissiblePair) {
  const auto refused = run({"estimate", "-d", data_, "-g", graph("fig3a"), "-p", "W1;", "-m", "tsr", "--seed", "1"});
  EXPECT_EQ(refused.code, 1);
  const auto forced = run({"estimate", "-d", data_, "-g", graph("fig3a"), "-p", "W1;", "-m", "tsr", "--seed", "1",
                           "--force", "--format", "json"});
  EXPECT_EQ(forced.code, 0) << forced.err;
  const auto j = nlohmann::json::parse(forced.out);
  EXPECT_NE(j[0]["warnings"][0].get<std::string>().find("WARNING"), std::string::npos);
  EXPECT_NE(forced.err.find("WARNING"), std::string::npos);
}

TEST_F(EstimateCli, Errors) {
  EXPECT_EQ(run({"estimate", "-d", data_, "-g", graph("fig3a"), "-p", "W1,Q;Z1", "--force", "--seed", "1"}).code, 2);
  EXPECT_EQ(run({"estimate", "-d", data_, "-g", graph("fig3a"), "--truncation", "0.3"}).code, 2);
  EXPECT_EQ(run({"estimate", "-d", data_, "-g", graph("fig3a"), "--folds", "1"}).code, 2);
  EXPECT_EQ(run({"estimate", "-d", data_, "-g", graph("fig3a"), "--bootstrap", "5"}).code, 2);
  EXPECT_EQ(run({"estimate", "-d", data_, "-g", graph("fig3a"), "-m", "magic"}).code, 2);
  EXPECT_EQ(run({"estimate", "-d", data_}).code, 2);
  EXPECT_EQ(run({"estimate", "-d", data_, "-g", graph("fig2d")}).code, 1);
}

TEST_F(EstimateCli, SeedIsLoggedWhenOmitted) {
  const auto r = run({"estimate", "-d", data_, "-g", graph("fig3a"), "-m", "dipw"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.err.find("seed:"), std::string::npos);
}

TEST(Simulate, UnknownScenario) {
  EXPECT_EQ(run({"simulate", "-s", "I-z"}).code, 2);
  EXPECT_EQ(run({"simulate", "-s", "I-a", "--n", "5"}).code, 2);
  EXPECT_EQ(run({"simulate"}).code, 2);
}

TEST(Simulate, SameSeedSameBytes) {
  TempDir tmp;
  const std::vector<std::string> base{"simulate", "-s", "II-b", "--reps", "2", "--n", "200", "--seed", "9",
                                      "--bootstrap", "10", "-q"};
  auto a = base, b = base;
  a.insert(a.end(), {"-o", tmp.file("a.json")});
  b.insert(b.end(), {"-o", tmp.file("b.json")});
  ASSERT_EQ(run(a).code, 0);
  ASSERT_EQ(run(b).code, 0);
  const auto ta = read_file(tmp.file("a.json"));
  EXPECT_EQ(ta, read_file(tmp.file("b.json")));
  EXPECT_EQ(nlohmann::json::parse(ta)["estimators"].size(), 4u);
}

TEST(Simulate, DefaultsToOutputDirectory) {
  TempDir tmp;
  ::setenv("SEQADJ_OUTPUT_DIR", tmp.path().c_str(), 1);
  const auto r = run({"simulate", "-s", "I-a", "--reps", "1", "--n", "200", "--seed", "3", "--bootstrap", "10",
                      "--format", "csv", "-q"});
  ::unsetenv("SEQADJ_OUTPUT_DIR");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto text = read_file(tmp.file("I-a_seed3.csv"));
  EXPECT_EQ(parse_csv_records(text).size(), 7u);
  EXPECT_NE(r.out.find("tsr"), std::string::npos);
}

TEST(Generate, Setups) {
  const auto one = run({"generate", "--n", "10", "--seed", "1"});
  EXPECT_EQ(one.code, 0);
  EXPECT_EQ(parse_csv_records(one.out).size(), 11u);
  EXPECT_EQ(one.out, run({"generate", "--n", "10", "--seed", "1"}).out);
  EXPECT_EQ(run({"generate", "--setup", "3"}).code, 2);
}

TEST(Usage, HelpAndUnknownCommands) {
  EXPECT_EQ(run({"--help"}).code, 0);
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
}
