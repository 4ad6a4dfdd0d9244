#pragma once

// CSV ingestion and export, and report serialization.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "data.hpp"
#include "estimators.hpp"
#include "simulate.hpp"

namespace seqadj {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Format { json, csv };

inline Format parse_format(std::string_view s) {
  if (s == "json") return Format::json;
  if (s == "csv") return Format::csv;
  throw IoError("unknown format '" + std::string(s) + "' (expected json or csv)");
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << content;
}

/// RFC 4180 records: quoted fields may hold commas, doubled quotes and line
/// breaks; CRLF and LF line ends are both accepted. Each record carries the
/// line number it starts on.
struct CsvRecord {
  int line = 0;
  std::vector<std::string> fields;
};

inline std::vector<CsvRecord> parse_csv_records(std::string_view text) {
  std::vector<CsvRecord> out;
  CsvRecord rec;
  std::string field;
  bool quoted = false, field_started = false;
  int line = 1;
  rec.line = 1;
  auto end_field = [&] {
    rec.fields.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    if (!(rec.fields.size() == 1 && rec.fields[0].empty())) out.push_back(std::move(rec));
    rec = CsvRecord{};
    rec.line = line;
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    if (c == '"' && !field_started && field.empty()) {
      quoted = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') {
      continue;
    } else if (c == '\n') {
      ++line;
      end_record();
    } else {
      field.push_back(c);
      field_started = true;
    }
  }
  if (quoted) throw IoError("line " + std::to_string(rec.line) + ": unterminated quoted field");
  if (!field.empty() || !rec.fields.empty()) end_record();
  return out;
}

inline bool is_missing_marker(std::string_view s) {
  std::string t;
  for (char c : s)
    if (!std::isspace(static_cast<unsigned char>(c))) t.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  return t.empty() || t == "na" || t == "nan";
}

inline double parse_number(std::string_view s, int line, const std::string& column) {
  if (is_missing_marker(s)) return kMissing;
  auto b = s.find_first_not_of(" \t");
  auto e = s.find_last_not_of(" \t");
  const std::string_view t = s.substr(b, e - b + 1);
  double v = 0.0;
  const char* first = t.data();
  if (!t.empty() && t.front() == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || !std::isfinite(v))
    throw IoError("line " + std::to_string(line) + ": column '" + column + "': cannot parse '" + std::string(t) +
                  "' as a number");
  return v;
}

/// Numeric table from CSV text with a header row.
inline Table parse_table(std::string_view text) {
  const auto recs = parse_csv_records(text);
  if (recs.empty()) throw IoError("empty CSV input");
  const auto& header = recs.front().fields;
  std::vector<std::vector<double>> cols(header.size());
  for (std::size_t r = 1; r < recs.size(); ++r) {
    const auto& rec = recs[r];
    if (rec.fields.size() != header.size())
      throw IoError("line " + std::to_string(rec.line) + ": expected " + std::to_string(header.size()) +
                    " fields, found " + std::to_string(rec.fields.size()));
    for (std::size_t j = 0; j < header.size(); ++j) cols[j].push_back(parse_number(rec.fields[j], rec.line, header[j]));
  }
  Table t;
  for (std::size_t j = 0; j < header.size(); ++j) t.add(header[j], std::move(cols[j]));
  return t;
}

/// Parse and bind, with every consistency error naming its line.
inline Dataset parse_dataset(std::string_view text, const ColumnBinding& b) {
  const Table t = parse_table(text);
  std::vector<std::string> needed = b.w;
  needed.insert(needed.end(), b.z.begin(), b.z.end());
  needed.push_back(b.a);
  needed.push_back(b.y);
  if (b.r) needed.push_back(*b.r);
  needed.insert(needed.end(), b.aux.begin(), b.aux.end());
  for (const auto& c : needed)
    if (!t.has(c)) throw IoError("missing bound column '" + c + "'");

  auto line_of = [](std::size_t row) { return "line " + std::to_string(row + 2); };
  const auto& a = t.col(b.a);
  const auto& y = t.col(b.y);
  for (std::size_t i = 0; i < t.rows(); ++i) {
    if (a[i] != 0.0 && a[i] != 1.0) throw IoError(line_of(i) + ": exposure '" + b.a + "' must be 0 or 1");
    if (b.r) {
      const double r = t.col(*b.r)[i];
      if (r != 0.0 && r != 1.0) throw IoError(line_of(i) + ": selection '" + *b.r + "' must be 0 or 1");
      if (r == 0.0 && !is_missing(y[i])) throw IoError(line_of(i) + ": outcome present but selection is 0");
      if (r == 1.0 && is_missing(y[i])) throw IoError(line_of(i) + ": outcome missing but selection is 1");
    }
    std::vector<std::string> covs = b.w;
    covs.insert(covs.end(), b.z.begin(), b.z.end());
    covs.insert(covs.end(), b.aux.begin(), b.aux.end());
    for (const auto& c : covs)
      if (is_missing(t.col(c)[i])) throw IoError(line_of(i) + ": missing value in covariate '" + c + "'");
  }
  return bind(t, b);
}

inline Dataset read_csv(const std::string& path, const ColumnBinding& b) { return parse_dataset(read_file(path), b); }

/// Shortest text that reads back to the same double; missing is "".
inline std::string format_exact(double v) {
  if (is_missing(v)) return "";
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

inline std::string format_sig10(double v) {
  if (!std::isfinite(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string table_to_csv(const Table& t) {
  std::string out;
  for (std::size_t j = 0; j < t.cols(); ++j) out += (j ? "," : "") + csv_escape(t.names()[j]);
  out += "\n";
  for (std::size_t i = 0; i < t.rows(); ++i) {
    for (std::size_t j = 0; j < t.cols(); ++j) out += (j ? "," : "") + format_exact(t.col(j)[i]);
    out += "\n";
  }
  return out;
}

/// Dataset back to CSV with W, Z, A, R, Y and aux columns under their bound
/// names.
inline std::string dataset_to_csv(const Dataset& d, const std::string& a_name = "A", const std::string& r_name = "R",
                                  const std::string& y_name = "Y") {
  Table t;
  auto add = [&](const std::string& name, const Eigen::VectorXd& v) { t.add(name, std::vector<double>(v.data(), v.data() + v.size())); };
  for (std::size_t j = 0; j < d.x.w_names.size(); ++j) add(d.x.w_names[j], d.x.w.col(static_cast<Eigen::Index>(j)));
  for (std::size_t j = 0; j < d.x.z_names.size(); ++j) add(d.x.z_names[j], d.x.z.col(static_cast<Eigen::Index>(j)));
  add(a_name, d.x.a);
  add(r_name, d.r);
  add(y_name, d.y);
  for (const auto& [name, v] : d.x.aux) add(name, v);
  return table_to_csv(t);
}

namespace detail {

/// Round to 10 significant digits; non-finite becomes null.
inline nlohmann::ordered_json num(double v) {
  if (!std::isfinite(v)) return nullptr;
  return std::stod(format_sig10(v));
}

}  // namespace detail

inline nlohmann::ordered_json report_json(const EstimateReport& r, bool with_eif = false) {
  nlohmann::ordered_json j;
  j["method"] = r.method;
  j["psi"] = detail::num(r.psi);
  j["se"] = detail::num(r.se);
  j["ci_lo"] = detail::num(r.ci_lo);
  j["ci_hi"] = detail::num(r.ci_hi);
  if (!r.diagnostics.empty()) {
    nlohmann::ordered_json d = nlohmann::ordered_json::object();
    for (const auto& [k, v] : r.diagnostics) d[k] = detail::num(v);
    j["diagnostics"] = d;
  }
  if (!r.warnings.empty()) j["warnings"] = r.warnings;
  if (r.error) j["error"] = *r.error;
  if (with_eif && r.eif.size() > 0) {
    nlohmann::ordered_json e = nlohmann::ordered_json::array();
    for (double v : r.eif) e.push_back(detail::num(v));
    j["eif"] = e;
  }
  return j;
}

inline std::string write_report(const std::vector<EstimateReport>& reports, Format f, bool with_eif = false) {
  if (f == Format::json) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& r : reports) arr.push_back(report_json(r, with_eif));
    return arr.dump(2) + "\n";
  }
  std::string out = "method,psi,se,ci_lo,ci_hi,error\n";
  for (const auto& r : reports) {
    out += csv_escape(r.method) + "," + format_sig10(r.psi) + "," + format_sig10(r.se) + "," + format_sig10(r.ci_lo) +
           "," + format_sig10(r.ci_hi) + "," + csv_escape(r.error.value_or("")) + "\n";
  }
  return out;
}

inline std::string write_report(const EstimateReport& r, Format f, bool with_eif = false) {
  return write_report(std::vector<EstimateReport>{r}, f, with_eif);
}

inline nlohmann::ordered_json summary_json(const McSummary& s) {
  nlohmann::ordered_json j;
  j["scenario"] = s.scenario;
  j["setup"] = s.setup;
  j["theta"] = detail::num(s.theta);
  j["misspecified"] = s.misspec;
  j["n"] = s.n;
  j["reps"] = s.reps;
  j["seed"] = s.seed;
  j["psi_true"] = detail::num(s.psi_true);
  j["truth_source"] = s.truth_source;
  j["outcome_sd"] = detail::num(s.outcome_sd);
  j["missing_rate"] = detail::num(s.missing_rate);
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& r : s.rows) {
    nlohmann::ordered_json e;
    e["estimator"] = r.estimator;
    e["pair"] = r.pair;
    e["replicates"] = r.replicates;
    e["failures"] = r.failures;
    e["mean_psi"] = detail::num(r.mean_psi);
    e["bias"] = detail::num(r.bias);
    e["bias_std"] = detail::num(r.bias_std);
    e["mse"] = detail::num(r.mse);
    e["mse_std"] = detail::num(r.mse_std);
    e["coverage"] = detail::num(r.coverage);
    e["ci_width"] = detail::num(r.ci_width);
    e["mean_se"] = detail::num(r.mean_se);
    e["sd_psi"] = detail::num(r.sd_psi);
    e["mc_se"] = detail::num(r.mc_se);
    if (!r.first_error.empty()) e["first_error"] = r.first_error;
    rows.push_back(e);
  }
  j["estimators"] = rows;
  return j;
}

inline std::string write_summary(const McSummary& s, Format f) {
  if (f == Format::json) return summary_json(s).dump(2) + "\n";
  std::string out =
      "scenario,setup,theta,misspecified,n,reps,seed,psi_true,outcome_sd,missing_rate,estimator,pair,replicates,"
      "failures,mean_psi,bias,bias_std,mse,mse_std,coverage,ci_width,mean_se,sd_psi,mc_se\n";
  for (const auto& r : s.rows) {
    out += csv_escape(s.scenario) + "," + std::to_string(s.setup) + "," + format_sig10(s.theta) + "," +
           csv_escape(s.misspec) + "," + std::to_string(s.n) + "," + std::to_string(s.reps) + "," +
           std::to_string(s.seed) + "," + format_sig10(s.psi_true) + "," + format_sig10(s.outcome_sd) + "," +
           format_sig10(s.missing_rate) + "," + csv_escape(r.estimator) + "," + csv_escape(r.pair) + "," +
           std::to_string(r.replicates) + "," + std::to_string(r.failures) + "," + format_sig10(r.mean_psi) + "," +
           format_sig10(r.bias) + "," + format_sig10(r.bias_std) + "," + format_sig10(r.mse) + "," +
           format_sig10(r.mse_std) + "," + format_sig10(r.coverage) + "," + format_sig10(r.ci_width) + "," +
           format_sig10(r.mean_se) + "," + format_sig10(r.sd_psi) + "," + format_sig10(r.mc_se) + "\n";
  }
  return out;
}

}  // namespace seqadj
