#pragma once

// Command-line front end. run_cli takes its streams as arguments so that
// tests can drive it in-process.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "data.hpp"
#include "estimators.hpp"
#include "io.hpp"
#include "mgraph.hpp"
#include "simulate.hpp"

namespace seqadj::cli {

enum Exit : int { kOk = 0, kNegative = 1, kUsage = 2 };

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',' || c == ' ') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (c != '{' && c != '}') {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

/// "W1,W2;Z1" with optional braces and parentheses; either side may be empty.
inline AdmissiblePair parse_pair(std::string s) {
  std::erase_if(s, [](char c) { return c == '(' || c == ')'; });
  const auto semi = s.find(';');
  if (semi == std::string::npos || s.find(';', semi + 1) != std::string::npos)
    throw UsageError("pair must look like 'W1,W2;Z1,Z2'");
  AdmissiblePair p;
  for (const auto& n : split_list(s.substr(0, semi))) p.w.insert(n);
  for (const auto& n : split_list(s.substr(semi + 1))) p.z.insert(n);
  return p;
}

inline MGraph load_graph(const std::string& path) { return parse_graph(read_file(path)); }

inline std::uint64_t resolve_seed(const std::optional<std::uint64_t>& seed, std::ostream& err) {
  if (seed) return *seed;
  std::random_device rd;
  const std::uint64_t s = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  err << "seed: " << s << " (none given)\n";
  return s;
}

inline std::string fmt(double v, int prec = 4) {
  if (!std::isfinite(v)) return "NA";
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

inline std::filesystem::path output_dir() {
  const char* d = std::getenv("SEQADJ_OUTPUT_DIR");
  return d && *d ? std::filesystem::path(d) : std::filesystem::current_path();
}

// ---------------------------------------------------------------------------

struct GraphCheckArgs {
  std::string graph, pair;
};

inline int cmd_graph_check(const GraphCheckArgs& a, std::ostream& out) {
  const MGraph g = load_graph(a.graph);
  const AdmissiblePair p = parse_pair(a.pair);
  const auto cert = is_s_admissible(p, g);
  out << "pair " << p.str() << "\n";
  for (int i = 0; i < 3; ++i) {
    const auto& c = cert.conditions[static_cast<std::size_t>(i)];
    out << "condition " << i + 1 << ": " << (c.holds ? "PASS" : "FAIL") << "  " << c.detail << "\n";
  }
  out << (cert.admissible() ? "s-admissible\n" : "not s-admissible\n");
  return cert.admissible() ? kOk : kNegative;
}

struct GraphPairsArgs {
  std::string graph;
  bool all = false, chronological = false, json = false;
  std::string candidates;
};

inline int cmd_graph_pairs(const GraphPairsArgs& a, std::ostream& out, std::ostream& err) {
  const MGraph g = load_graph(a.graph);
  EnumerationOptions opt;
  opt.minimal_only = !a.all;
  opt.chronological = a.chronological;
  if (!a.candidates.empty()) {
    const auto names = split_list(a.candidates);
    opt.candidates = NodeSet(names.begin(), names.end());
  }
  const auto pairs = enumerate_pairs(g, opt);
  if (pairs.empty()) err << "warning: no s-admissible pair found\n";
  if (a.json) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& p : pairs) {
      nlohmann::ordered_json j;
      j["w"] = p.w.sorted();
      j["z"] = p.z.sorted();
      arr.push_back(j);
    }
    out << arr.dump(2) << "\n";
  } else {
    for (const auto& p : pairs) out << p.str() << "\n";
  }
  return kOk;
}

// ---------------------------------------------------------------------------

struct EstimateArgs {
  std::string data, graph, pair = "auto", method = "tsr";
  std::string exposure, outcome, selection;
  bool split = false, force = false, eif = false;
  double truncation = 0.01;
  std::optional<std::uint64_t> seed;
  int folds = 5, bootstrap = 200;
  std::string format = "table", output;
};

inline const std::vector<std::string>& all_methods() {
  static const std::vector<std::string> m{"tsr", "dipw", "sr", "cd", "tmle1r", "tmlecc"};
  return m;
}

inline EstimateReport run_method(const std::string& m, const Dataset& d, const NuisanceStrategy& st,
                                 const EstimatorOptions& opt) {
  if (m == "tsr") return estimate_tsr(d, st, opt);
  if (m == "dipw") return estimate_dipw(d, st, opt);
  if (m == "sr") return estimate_sr(d, st, opt);
  if (m == "cd") return estimate_cd_discrete(d, st, opt);
  if (m == "tmle1r") return estimate_tmle_1r(d, st, opt);
  if (m == "tmlecc") return estimate_tmle_cc(d, st, opt);
  throw UsageError("unknown method '" + m + "'");
}

inline void render_reports(const std::vector<EstimateReport>& reps, const std::string& pair, std::ostream& out) {
  out << "pair " << pair << "\n";
  out << std::left << std::setw(10) << "method" << std::right << std::setw(12) << "psi" << std::setw(12) << "se"
      << std::setw(12) << "ci_lo" << std::setw(12) << "ci_hi" << "\n";
  for (const auto& r : reps) {
    out << std::left << std::setw(10) << r.method << std::right;
    if (r.error) {
      out << "  error: " << *r.error << "\n";
      continue;
    }
    out << std::setw(12) << fmt(r.psi) << std::setw(12) << fmt(r.se) << std::setw(12) << fmt(r.ci_lo) << std::setw(12)
        << fmt(r.ci_hi) << "\n";
    for (const auto& [k, v] : r.diagnostics) out << "    " << k << " = " << fmt(v, 6) << "\n";
    for (const auto& w : r.warnings) out << "    warning: " << w << "\n";
  }
}

inline int cmd_estimate(const EstimateArgs& a, std::ostream& out, std::ostream& err) {
  if (!(a.truncation > 0.0 && a.truncation <= 0.2)) throw UsageError("--truncation must lie in (0, 0.2]");
  if (a.folds < 2) throw UsageError("--folds must be at least 2");
  if (a.bootstrap < 10) throw UsageError("--bootstrap must be at least 10");
  std::vector<std::string> methods;
  if (a.method == "all") {
    methods = all_methods();
  } else {
    for (const auto& m : split_list(a.method)) {
      if (std::find(all_methods().begin(), all_methods().end(), m) == all_methods().end())
        throw UsageError("unknown method '" + m + "'");
      methods.push_back(m);
    }
  }
  const Format format = a.format == "table" ? Format::json : parse_format(a.format);

  std::optional<MGraph> g;
  if (!a.graph.empty()) g = load_graph(a.graph);
  if (!g && (a.pair == "auto" || !a.force)) throw UsageError("--graph is required unless --force is given with an explicit --pair");

  std::vector<std::string> banner;
  AdmissiblePair pair;
  if (a.pair == "auto") {
    const auto pairs = enumerate_minimal_pairs(*g);
    if (pairs.empty()) {
      err << "no s-admissible pair exists in this graph\n";
      return kNegative;
    }
    pair = pairs.front();
  } else {
    pair = parse_pair(a.pair);
    if (g) {
      const auto cert = is_s_admissible(pair, *g);
      if (!cert.admissible()) {
        const auto& c = cert.conditions[static_cast<std::size_t>(cert.first_violation() - 1)];
        if (!a.force) {
          err << "pair " << pair.str() << " is not s-admissible: condition " << cert.first_violation() << ": "
              << c.detail << "\n";
          return kNegative;
        }
        banner.push_back("WARNING: pair " + pair.str() + " is not s-admissible (condition " +
                         std::to_string(cert.first_violation()) + "); estimates may be biased");
      }
    } else {
      banner.push_back("WARNING: pair " + pair.str() + " was not checked against a graph");
    }
  }

  ColumnBinding b;
  b.w = pair.w.sorted();
  b.z = pair.z.sorted();
  b.a = !a.exposure.empty() ? a.exposure : (g ? g->exposure() : "A");
  b.y = !a.outcome.empty() ? a.outcome : (g ? g->outcome() : "Y");
  const std::string sel = !a.selection.empty() ? a.selection : (g ? g->selection() : "R");
  const Table t = parse_table(read_file(a.data));
  if (sel == "none" || !t.has(sel)) {
    b.r.reset();
    if (sel != "none") banner.push_back("note: no column '" + sel + "'; selection derived from outcome missingness");
  } else {
    b.r = sel;
  }
  const Dataset d = parse_dataset(read_file(a.data), b);

  const std::uint64_t seed = resolve_seed(a.seed, err);
  EstimatorOptions opt;
  opt.truncation = a.truncation;
  opt.split = a.split;
  opt.seed = seed;
  opt.folds = a.folds;
  opt.bootstrap = a.bootstrap;
  const auto st = NuisanceStrategy::super_learner(seed, a.folds);

  std::vector<EstimateReport> reports;
  int ok = 0;
  for (const auto& m : methods) {
    EstimateReport r;
    try {
      r = run_method(m, d, st, opt);
      ++ok;
    } catch (const std::exception& e) {
      r.method = m;
      r.error = e.what();
    }
    r.warnings.insert(r.warnings.begin(), banner.begin(), banner.end());
    reports.push_back(std::move(r));
  }

  for (const auto& line : banner) err << line << "\n";
  if (a.format == "table") {
    for (const auto& line : banner) out << line << "\n";
    render_reports(reports, pair.str(), out);
  } else {
    const std::string text = write_report(reports, format, a.eif);
    if (a.output.empty()) out << text;
  }
  if (!a.output.empty()) write_file(a.output, write_report(reports, format, a.eif));
  return ok > 0 ? kOk : kNegative;
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string scenario;
  int reps = 100;
  std::size_t n = 2000;
  std::optional<std::uint64_t> seed;
  int folds = 5, bootstrap = 200;
  double truncation = 0.01;
  std::string format = "json", output;
  bool quiet = false;
};

inline void render_summary(const McSummary& s, std::ostream& out) {
  out << "scenario " << s.scenario << "  n=" << s.n << "  reps=" << s.reps << "  seed=" << s.seed
      << "  true ATE=" << fmt(s.psi_true) << "  missing=" << fmt(100.0 * s.missing_rate, 1) << "%\n";
  out << std::left << std::setw(12) << "estimator" << std::setw(18) << "pair" << std::right << std::setw(10) << "bias"
      << std::setw(10) << "bias/sd" << std::setw(10) << "MSE" << std::setw(10) << "MSE/var" << std::setw(10) << "cover%"
      << std::setw(10) << "width" << std::setw(8) << "fail" << "\n";
  for (const auto& r : s.rows) {
    out << std::left << std::setw(12) << r.estimator << std::setw(18) << r.pair << std::right << std::setw(10)
        << fmt(r.bias, 3) << std::setw(10) << fmt(r.bias_std, 3) << std::setw(10) << fmt(r.mse, 3) << std::setw(10)
        << fmt(r.mse_std, 3) << std::setw(10) << fmt(r.coverage, 1) << std::setw(10) << fmt(r.ci_width, 3)
        << std::setw(8) << r.failures << "\n";
  }
}

inline int cmd_simulate(const SimulateArgs& a, std::ostream& out, std::ostream& err) {
  const auto names = scenario_names();
  if (std::find(names.begin(), names.end(), a.scenario) == names.end())
    throw UsageError("unknown scenario '" + a.scenario + "'");
  if (a.reps < 1) throw UsageError("--reps must be positive");
  if (a.n < 20) throw UsageError("--n must be at least 20");
  if (!(a.truncation > 0.0 && a.truncation <= 0.2)) throw UsageError("--truncation must lie in (0, 0.2]");
  if (a.folds < 2) throw UsageError("--folds must be at least 2");
  if (a.bootstrap < 10) throw UsageError("--bootstrap must be at least 10");
  const Format format = parse_format(a.format);

  ScenarioConfig c = scenario(a.scenario);
  c.reps = a.reps;
  c.n = a.n;
  c.seed = resolve_seed(a.seed, err);
  c.folds = a.folds;
  c.bootstrap = a.bootstrap;
  c.truncation = a.truncation;
  const auto s = run_monte_carlo(c, [&](int done, int total) {
    if (!a.quiet && (done % 10 == 0 || done == total)) err << "replicate " << done << "/" << total << "\n";
  });
  render_summary(s, out);
  const std::filesystem::path path =
      !a.output.empty() ? std::filesystem::path(a.output)
                        : output_dir() / (a.scenario + "_seed" + std::to_string(c.seed) + (format == Format::json ? ".json" : ".csv"));
  write_file(path.string(), write_summary(s, format));
  out << "summary written to " << path.string() << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct GenerateArgs {
  int setup = 1;
  std::size_t n = 2000;
  double theta = -1.90;
  std::optional<std::uint64_t> seed;
  std::string output;
};

inline int cmd_generate(const GenerateArgs& a, std::ostream& out, std::ostream& err) {
  if (a.setup != 1 && a.setup != 2) throw UsageError("--setup must be 1 or 2");
  const std::uint64_t seed = resolve_seed(a.seed, err);
  const Table t = a.setup == 1 ? gen_setup1(a.n, {a.theta, false}, seed) : gen_setup2(a.n, {}, seed);
  const std::string text = table_to_csv(t);
  if (a.output.empty())
    out << text;
  else
    write_file(a.output, text);
  return kOk;
}

// ---------------------------------------------------------------------------

inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sequential adjustment for causal effects under outcome attrition", "seqadj"};
  app.require_subcommand(1);

  auto* graph = app.add_subcommand("graph", "Inspect an m-graph");
  graph->require_subcommand(1);
  GraphCheckArgs gc;
  auto* check = graph->add_subcommand("check", "Verify the sequential adjustment criteria for a pair");
  check->add_option("--graph,-g", gc.graph, "graph file")->required();
  check->add_option("--pair,-p", gc.pair, "pair as 'W1,W2;Z1,Z2'")->required();

  GraphPairsArgs gp;
  auto* pairs = graph->add_subcommand("pairs", "Enumerate s-admissible pairs");
  pairs->add_option("--graph,-g", gp.graph, "graph file")->required();
  pairs->add_flag("--all", gp.all, "include non-minimal pairs");
  pairs->add_flag("--chronological", gp.chronological, "W from tier 0 and Z from tier 1 only");
  pairs->add_option("--candidates", gp.candidates, "comma-separated candidate covariates");
  pairs->add_flag("--json", gp.json, "machine-readable output");

  EstimateArgs ea;
  std::uint64_t est_seed = 0;
  auto* est = app.add_subcommand("estimate", "Estimate the ATE from a CSV file");
  est->add_option("--data,-d", ea.data, "CSV file")->required();
  est->add_option("--graph,-g", ea.graph, "graph file");
  est->add_option("--pair,-p", ea.pair, "'auto' or 'W1,W2;Z1,Z2'")->capture_default_str();
  est->add_option("--method,-m", ea.method, "tsr, dipw, sr, cd, tmle1r, tmlecc, a comma list, or all")->capture_default_str();
  est->add_option("--exposure", ea.exposure, "exposure column (default: graph exposure)");
  est->add_option("--outcome", ea.outcome, "outcome column (default: graph outcome)");
  est->add_option("--selection", ea.selection, "selection column, or 'none' to derive it from outcome missingness");
  est->add_flag("--split", ea.split, "two-fold sample splitting for TSR");
  est->add_flag("--force", ea.force, "estimate even if the pair fails the criteria");
  est->add_flag("--eif", ea.eif, "include influence-function values in JSON output");
  est->add_option("--truncation", ea.truncation, "propensity truncation level")->capture_default_str();
  auto* est_seed_opt = est->add_option("--seed", est_seed, "random seed");
  est->add_option("--folds", ea.folds, "cross-validation folds")->capture_default_str();
  est->add_option("--bootstrap", ea.bootstrap, "bootstrap resamples for SR intervals")->capture_default_str();
  est->add_option("--format", ea.format, "table, json or csv")->check(CLI::IsMember({"table", "json", "csv"}))->capture_default_str();
  est->add_option("--output,-o", ea.output, "write serialized reports here");

  SimulateArgs sa;
  std::uint64_t sim_seed = 0;
  auto* sim = app.add_subcommand("simulate", "Run a Monte Carlo scenario");
  sim->add_option("--scenario,-s", sa.scenario, "I-a, I-b, I-c, I-d, II-a or II-b")->required();
  sim->add_option("--reps", sa.reps, "replicates")->capture_default_str();
  sim->add_option("--n", sa.n, "sample size")->capture_default_str();
  auto* sim_seed_opt = sim->add_option("--seed", sim_seed, "master seed");
  sim->add_option("--folds", sa.folds, "cross-validation folds")->capture_default_str();
  sim->add_option("--bootstrap", sa.bootstrap, "bootstrap resamples for SR intervals")->capture_default_str();
  sim->add_option("--truncation", sa.truncation, "propensity truncation level")->capture_default_str();
  sim->add_option("--format", sa.format, "json or csv")->check(CLI::IsMember({"json", "csv"}))->capture_default_str();
  sim->add_option("--output,-o", sa.output, "summary file (default: $SEQADJ_OUTPUT_DIR or the working directory)");
  sim->add_flag("--quiet,-q", sa.quiet, "no progress lines");

  GenerateArgs ga;
  std::uint64_t gen_seed = 0;
  auto* gen = app.add_subcommand("generate", "Write one simulated sample as CSV");
  gen->add_option("--setup", ga.setup, "1 or 2")->capture_default_str();
  gen->add_option("--n", ga.n, "sample size")->capture_default_str();
  gen->add_option("--theta", ga.theta, "selection intercept for setup 1")->capture_default_str();
  auto* gen_seed_opt = gen->add_option("--seed", gen_seed, "random seed");
  gen->add_option("--output,-o", ga.output, "CSV file (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kOk : kUsage;
  }

  try {
    if (check->parsed()) return cmd_graph_check(gc, out);
    if (pairs->parsed()) return cmd_graph_pairs(gp, out, err);
    if (est->parsed()) {
      if (est_seed_opt->count()) ea.seed = est_seed;
      return cmd_estimate(ea, out, err);
    }
    if (sim->parsed()) {
      if (sim_seed_opt->count()) sa.seed = sim_seed;
      return cmd_simulate(sa, out, err);
    }
    if (gen->parsed()) {
      if (gen_seed_opt->count()) ga.seed = gen_seed;
      return cmd_generate(ga, out, err);
    }
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const DataError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const GraphError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kNegative;
  }
  return kUsage;
}

}  // namespace seqadj::cli
