#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include <json.hpp>

#include "seqadj/io.hpp"
#include "seqadj/simulate.hpp"

using namespace seqadj;

namespace {

ColumnBinding wz() { return {{"W"}, {"Z"}}; }

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const IoError& e) {
    return e.what();
  }
  return "";
}

EstimateReport sample_report() {
  EstimateReport r;
  r.method = "tsr";
  r.set_wald(5.123456789012345, 0.1);
  r.diag("delta_star", 1e-3);
  r.warnings.push_back("a warning, with a comma");
  return r;
}

}  // namespace

TEST(Csv, Records) {
  const auto recs = parse_csv_records("a,b\r\n\"x,1\",\"say \"\"hi\"\"\"\n\"multi\nline\",2\n");
  ASSERT_EQ(recs.size(), 3u);
  EXPECT_EQ(recs[1].fields[0], "x,1");
  EXPECT_EQ(recs[1].fields[1], "say \"hi\"");
  EXPECT_EQ(recs[2].fields[0], "multi\nline");
  EXPECT_EQ(recs[2].line, 3);
  EXPECT_THROW(parse_csv_records("a\n\"open\n"), IoError);
}

TEST(Csv, MissingMarkers) {
  for (const char* s : {"", "NA", "na", "NaN", "nan"}) EXPECT_TRUE(is_missing_marker(s)) << s;
  EXPECT_FALSE(is_missing_marker("0"));
  EXPECT_TRUE(is_missing(parse_number("NA", 1, "Y")));
  EXPECT_DOUBLE_EQ(parse_number(" 2.5 ", 1, "Y"), 2.5);
  EXPECT_NE(error_of([] { parse_number("abc", 7, "W"); }).find("line 7"), std::string::npos);
}

TEST(ReadCsv, ThreeRowsOneMasked) {
  const auto d = parse_dataset("W,Z,A,R,Y\n1,2,1,1,3.5\n0,1,0,0,\n2,2,1,1,-1\n", wz());
  ASSERT_EQ(d.rows(), 3);
  EXPECT_TRUE(is_missing(d.y[1]));
  EXPECT_EQ(d.r[1], 0.0);
  EXPECT_EQ(d.y[2], -1.0);
  EXPECT_EQ(d.x.z(0, 0), 2.0);
}

TEST(ReadCsv, Contradictions) {
  auto err = [](const std::string& text) { return error_of([&] { parse_dataset(text, wz()); }); };
  EXPECT_NE(err("W,Z,A,R,Y\n1,2,1,1,3\n1,2,1,0,4\n").find("line 3"), std::string::npos);
  EXPECT_NE(err("W,Z,A,R,Y\n1,2,2,1,3\n").find("line 2"), std::string::npos);
  EXPECT_NE(err("W,Z,A,R,Y\n1,2,1,0.5,3\n").find("line 2"), std::string::npos);
  EXPECT_NE(err("W,Z,A,R,Y\n1,2,1,1,\n").find("line 2"), std::string::npos);
  EXPECT_NE(err("W,Z,A,R,Y\n1,2,1,1,3\n1,x,1,1,3\n").find("line 3"), std::string::npos);
  EXPECT_NE(err("W,Z,A,R,Y\n1,2,1,1\n").find("line 2"), std::string::npos);
  EXPECT_NE(err("W,A,R,Y\n1,1,1,3\n").find("'Z'"), std::string::npos);
  EXPECT_NE(err("W,Z,A,R,Y\nNA,2,1,1,3\n").find("covariate"), std::string::npos);
}

TEST(ReadCsv, DerivedSelection) {
  ColumnBinding b = wz();
  b.r.reset();
  const auto d = parse_dataset("W,Z,A,Y\n0,0,1,1\n0,1,0,2\n1,0,1,\n1,1,0,4\n2,0,1,NA\n", b);
  const std::vector<double> want{1, 1, 0, 1, 0};
  for (Eigen::Index i = 0; i < 5; ++i) EXPECT_EQ(d.r[i], want[static_cast<std::size_t>(i)]);
}

TEST(ReadCsv, FromFile) {
  const auto path = (std::filesystem::temp_directory_path() / "seqadj_io_test.csv").string();
  write_file(path, "W,Z,A,R,Y\n1,2,1,1,3.5\n");
  EXPECT_EQ(read_csv(path, wz()).rows(), 1);
  std::filesystem::remove(path);
  EXPECT_THROW(read_csv(path, wz()), IoError);
}

TEST(RoundTrip, SyntheticDatasetIsReproducedExactly) {
  const auto t = gen_setup1(300, {}, 21);
  const ColumnBinding b{{"W1"}, {"Z1", "Z2"}, "A", "Y", "R", {"U0"}};
  const Dataset d = bind(t, b);
  const Dataset back = parse_dataset(dataset_to_csv(d), b);
  ASSERT_EQ(back.rows(), d.rows());
  EXPECT_EQ(back.x.w, d.x.w);
  EXPECT_EQ(back.x.z, d.x.z);
  EXPECT_EQ(back.x.a, d.x.a);
  EXPECT_EQ(back.r, d.r);
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    EXPECT_EQ(is_missing(back.y[i]), is_missing(d.y[i]));
    if (!is_missing(d.y[i])) {
      EXPECT_EQ(back.y[i], d.y[i]);
    }
  }
  EXPECT_EQ(back.x.aux.at(0).second, d.x.aux.at(0).second);
}

TEST(Report, JsonFieldsAndPrecision) {
  auto r = sample_report();
  const auto j = nlohmann::ordered_json::parse(write_report(r, Format::json));
  ASSERT_TRUE(j.is_array());
  const auto& e = j[0];
  std::vector<std::string> keys;
  for (auto it = e.begin(); it != e.end(); ++it) keys.push_back(it.key());
  EXPECT_EQ(keys, (std::vector<std::string>{"method", "psi", "se", "ci_lo", "ci_hi", "diagnostics", "warnings"}));
  EXPECT_DOUBLE_EQ(e["psi"].get<double>(), 5.123456789);
  EXPECT_FALSE(e.contains("eif"));
}

TEST(Report, EifOnlyWhenAskedAndPresent) {
  auto r = sample_report();
  EXPECT_FALSE(report_json(r, true).contains("eif"));
  r.eif = Eigen::VectorXd::Constant(3, 0.5);
  EXPECT_EQ(report_json(r, true)["eif"].size(), 3u);
  EXPECT_FALSE(report_json(r, false).contains("eif"));
}

TEST(Report, JsonIdempotent) {
  EstimateReport bad;
  bad.method = "cd";
  bad.error = "continuous Z";
  const std::vector<EstimateReport> reps{sample_report(), bad};
  const auto text = write_report(reps, Format::json);
  const auto again = nlohmann::ordered_json::parse(text).dump(2) + "\n";
  EXPECT_EQ(text, again);
  EXPECT_TRUE(nlohmann::ordered_json::parse(text)[1]["psi"].is_null());
}

TEST(Report, CsvRows) {
  EstimateReport bad;
  bad.method = "cd";
  bad.error = "bad, really";
  const auto text = write_report(std::vector<EstimateReport>{sample_report(), bad}, Format::csv);
  const auto recs = parse_csv_records(text);
  ASSERT_EQ(recs.size(), 3u);
  EXPECT_EQ(recs[0].fields, (std::vector<std::string>{"method", "psi", "se", "ci_lo", "ci_hi", "error"}));
  EXPECT_EQ(recs[1].fields[1], "5.123456789");
  EXPECT_EQ(recs[2].fields[1], "");
  EXPECT_EQ(recs[2].fields[5], "bad, really");
}

TEST(Summary, CsvRowPerEstimatorAndJsonIdempotent) {
  McSummary s;
  s.scenario = "I-a";
  s.psi_true = kSetup1Ate;
  s.outcome_sd = 10.0;
  for (const auto* name : {"tsr", "dipw", "sr"}) {
    EstimatorSummary r;
    r.estimator = name;
    r.pair = "({W1};{Z1,Z2})";
    r.bias = 1.0 / 3.0;
    s.rows.push_back(r);
  }
  const auto csv = parse_csv_records(write_summary(s, Format::csv));
  EXPECT_EQ(csv.size(), 4u);
  EXPECT_EQ(csv[1].fields[11], "({W1};{Z1,Z2})");
  EXPECT_EQ(csv[1].fields[15], "0.3333333333");
  const auto json = write_summary(s, Format::json);
  EXPECT_EQ(nlohmann::ordered_json::parse(json).dump(2) + "\n", json);
  EXPECT_EQ(nlohmann::ordered_json::parse(json)["estimators"].size(), 3u);
}

TEST(Format, Parse) {
  EXPECT_EQ(parse_format("csv"), Format::csv);
  EXPECT_EQ(parse_format("json"), Format::json);
  EXPECT_THROW(parse_format("xml"), IoError);
}
