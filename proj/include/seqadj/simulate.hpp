#pragma once

// The two simulation designs, their misspecified nuisance substitutes and
// a Monte Carlo harness summarising bias, MSE and interval coverage.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <mutex>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "core/random.hpp"
#include "core/stats.hpp"
#include "data.hpp"
#include "estimators.hpp"
#include "mgraph.hpp"

namespace seqadj {

inline double sign0(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

inline constexpr std::string_view kSetup1Graph = R"(# setup I
node W1 role=covariate tier=0
node A role=exposure
node Z1 role=covariate tier=1
node Z2 role=covariate tier=1
node Y role=outcome
node R role=selection
W1 -> A
W1 -> Y
A -> Z2
A -> Z1
A -> Y
Z2 -> Y
Z1 -> Z2
Z1 -> Y
Z1 -> R
Z2 -> R
)";

inline constexpr std::string_view kSetup2Graph = R"(# setup II
node B1 role=covariate tier=0
node A role=exposure
node C1 role=covariate tier=1
node C2 role=covariate tier=1
node U1 role=latent
node Y role=outcome
node R role=selection
B1 -> A
B1 -> C1
B1 -> Y
A -> C1
A -> Y
A -> R
C1 -> C2
U1 -> C2
U1 -> Y
C2 -> R
)";

struct Setup1Params {
  double theta = -1.90;
  bool null_effect = false;  // drop every exposure term from Z1, Z2 and Y
};

struct Setup2Params {
  double selection_intercept = 0.2;
  bool null_effect = false;
};

/// Exogenous noises of one unit of the first design, drawn in a fixed order.
struct Setup1Noise {
  double w1, ua, uz1, uz2, uy, ur, u0;
};

inline Setup1Noise draw_noise1(Rng& rng) {
  Setup1Noise e{};
  e.w1 = rng.normal();
  e.ua = rng.normal();
  e.uz1 = rng.normal();
  e.uz2 = rng.normal();
  e.uy = 7.0 * rng.normal();
  e.ur = rng.normal();
  e.u0 = rng.normal();
  return e;
}

struct Setup1Unit {
  double w1, a, z1, z2, y, r, u0;
};

/// Structural equations of the first design. `a_override` >= 0 forces the
/// exposure, which gives interventional draws from the same noises.
inline Setup1Unit structural1(const Setup1Noise& e, const Setup1Params& p, int a_override = -1) {
  Setup1Unit u{};
  const double w = e.w1;
  u.w1 = w;
  u.u0 = e.u0;
  u.a = a_override >= 0 ? a_override : (0.9 * w - 0.09 * sign0(w) * w * w + e.ua > 0.0 ? 1.0 : 0.0);
  const double k = p.null_effect ? 0.0 : 1.0;
  const double s = k * (2.0 * u.a - 1.0);
  u.z1 = -0.5 + k * u.a + e.uz1;
  const double inner = 4.0 + 0.05 * s + 0.5 * u.z1 + 0.05 * s * u.z1 + e.uz2;
  u.z2 = 0.2 * inner * inner;
  u.y = 3.0 * w + 1.5 * std::sqrt(std::abs(w)) - 0.25 * s + 0.5 * s * w + 1.25 * u.z1 + 0.25 * s * u.z1 + u.z2 +
        0.5 * s * u.z2 + e.uy;
  u.r = p.theta + 0.29 * u.z1 + 0.54 * u.z2 + e.ur > 0.0 ? 1.0 : 0.0;
  return u;
}

struct Setup2Noise {
  double u1, b1, ua, uy, uc1, uc2, ur, u0;
};

inline Setup2Noise draw_noise2(Rng& rng) {
  Setup2Noise e{};
  e.u1 = rng.normal();
  e.b1 = rng.normal();
  e.ua = rng.normal();
  e.uy = 7.0 * rng.normal();
  e.uc1 = rng.normal();
  e.uc2 = 2.5 * rng.normal();
  e.ur = 0.7 * rng.normal();
  e.u0 = rng.normal();
  return e;
}

struct Setup2Unit {
  double u1, b1, a, c1, c2, y, r, u0;
};

inline Setup2Unit structural2(const Setup2Noise& e, const Setup2Params& p, int a_override = -1) {
  Setup2Unit u{};
  const double b = e.b1;
  u.u1 = e.u1;
  u.b1 = b;
  u.u0 = e.u0;
  u.a = a_override >= 0 ? a_override : (0.9 * b - 0.1 * sign0(b) * b * b + e.ua > 0.0 ? 1.0 : 0.0);
  const double s = (p.null_effect ? 0.0 : 1.0) * (2.0 * u.a - 1.0);
  const double sr = 2.0 * u.a - 1.0;  // selection keeps its exposure terms
  // the declared noises U_Y, U_C1, U_C2 enter additively
  u.y = 2.0 * b + sign0(b) * b * b - 1.2 * s + 0.5 * s * b + 2.0 * u.u1 + 1.2 * s * u.u1 + e.uy;
  u.c1 = 0.2 * b * b + 0.5 * s + 0.2 * s * b + e.uc1;
  u.c2 = 0.1 * u.u1 + 0.1 * u.c1 + 0.1 * u.u1 * u.c1 + e.uc2;
  u.r = p.selection_intercept + 0.2 * sr + 0.1 * u.c2 - 0.1 * sr * u.c2 + e.ur > 0.0 ? 1.0 : 0.0;
  return u;
}

/// A sample of the first design: columns W1, A, Z1, Z2, R, Y (missing when
/// R = 0) and an unrelated noise column U0.
inline Table gen_setup1(std::size_t n, const Setup1Params& p, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> w1(n), a(n), z1(n), z2(n), r(n), y(n), u0(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto u = structural1(draw_noise1(rng), p);
    w1[i] = u.w1;
    a[i] = u.a;
    z1[i] = u.z1;
    z2[i] = u.z2;
    r[i] = u.r;
    y[i] = u.r == 1.0 ? u.y : kMissing;
    u0[i] = u.u0;
  }
  Table t;
  t.add("W1", std::move(w1));
  t.add("A", std::move(a));
  t.add("Z1", std::move(z1));
  t.add("Z2", std::move(z2));
  t.add("R", std::move(r));
  t.add("Y", std::move(y));
  t.add("U0", std::move(u0));
  return t;
}

/// A sample of the second design; the latent U1 is not exported.
inline Table gen_setup2(std::size_t n, const Setup2Params& p, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> b1(n), a(n), c1(n), c2(n), r(n), y(n), u0(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto u = structural2(draw_noise2(rng), p);
    b1[i] = u.b1;
    a[i] = u.a;
    c1[i] = u.c1;
    c2[i] = u.c2;
    r[i] = u.r;
    y[i] = u.r == 1.0 ? u.y : kMissing;
    u0[i] = u.u0;
  }
  Table t;
  t.add("B1", std::move(b1));
  t.add("A", std::move(a));
  t.add("C1", std::move(c1));
  t.add("C2", std::move(c2));
  t.add("R", std::move(r));
  t.add("Y", std::move(y));
  t.add("U0", std::move(u0));
  return t;
}

inline MGraph setup1_graph() { return parse_graph(kSetup1Graph); }
inline MGraph setup2_graph() { return parse_graph(kSetup2Graph); }

/// Closed-form effects of the two designs, confirmed by the interventional
/// Monte Carlo oracle below.
inline constexpr double kSetup1Ate = 5.244625;
inline constexpr double kSetup2Ate = -2.4;

struct OracleAte {
  double value = 0.0;
  double mc_se = 0.0;
  std::size_t draws = 0;
};

/// Interventional oracle: both arms evaluated on the same noise draw, the
/// effect is the mean paired difference.
template <typename Noise, typename Structural>
OracleAte interventional_ate(Noise noise, Structural structural, std::size_t draws, std::uint64_t seed) {
  Rng rng(seed);
  CompensatedSum sum, sq;
  for (std::size_t i = 0; i < draws; ++i) {
    const auto e = noise(rng);
    const double d = structural(e, 1) - structural(e, 0);
    sum.add(d);
    sq.add(d * d);
  }
  const double n = static_cast<double>(draws);
  const double mean = sum.value() / n;
  const double var = (sq.value() - n * mean * mean) / (n - 1.0);
  return {mean, std::sqrt(std::max(var, 0.0) / n), draws};
}

inline OracleAte true_ate_setup1(const Setup1Params& p, std::size_t draws = 10'000'000,
                                 std::uint64_t seed = 20240601) {
  return interventional_ate(draw_noise1, [&](const Setup1Noise& e, int a) { return structural1(e, p, a).y; }, draws,
                            seed);
}

inline OracleAte true_ate_setup2(const Setup2Params& p, std::size_t draws = 10'000'000,
                                 std::uint64_t seed = 20240601) {
  return interventional_ate(draw_noise2, [&](const Setup2Noise& e, int a) { return structural2(e, p, a).y; }, draws,
                            seed);
}

/// Standard deviation of the full (unmasked) outcome in a 10^6 reference
/// draw; the scale for standardized summaries.
inline double outcome_sd(int setup, std::size_t draws = 1'000'000, std::uint64_t seed = 777) {
  static std::mutex mu;
  static std::map<std::pair<int, std::size_t>, double> cache;
  std::lock_guard lock(mu);
  const auto key = std::make_pair(setup, draws);
  if (auto it = cache.find(key); it != cache.end()) return it->second;
  Rng rng(seed);
  Eigen::VectorXd y(static_cast<Eigen::Index>(draws));
  for (std::size_t i = 0; i < draws; ++i)
    y[static_cast<Eigen::Index>(i)] = setup == 1 ? structural1(draw_noise1(rng), {}).y : structural2(draw_noise2(rng), {}).y;
  const double sd = std::sqrt(weighted_variance(y, Eigen::VectorXd::Ones(y.size())));
  cache[key] = sd;
  return sd;
}

enum Misspec : unsigned { kNone = 0, kPiA = 1, kPiR = 2, kQ1 = 4, kQ2 = 8 };

inline std::string misspec_str(unsigned m) {
  if (m == kNone) return "none";
  std::string s;
  auto add = [&](unsigned bit, const char* name) {
    if (m & bit) s += (s.empty() ? "" : "+") + std::string(name);
  };
  add(kPiA, "piA");
  add(kPiR, "piR");
  add(kQ1, "Q1");
  add(kQ2, "Q2");
  return s;
}

/// Parametric substitutes for one nuisance. `single_regression` selects the
/// variants used by the (W, A)-only estimators.
inline SurfaceFitter misspecified_model(int setup, unsigned kind, bool single_regression = false) {
  auto cols = [](std::vector<std::function<Eigen::VectorXd(const Frame&)>> fs) -> FeatureMap {
    return [fs = std::move(fs)](const Frame& f) {
      Eigen::MatrixXd m(f.rows(), static_cast<Eigen::Index>(fs.size()));
      for (std::size_t j = 0; j < fs.size(); ++j) m.col(static_cast<Eigen::Index>(j)) = fs[j](f);
      return m;
    };
  };
  auto sq = [](std::string name) {
    return [name](const Frame& f) { return f.col(name).array().square().matrix().eval(); };
  };
  auto raw = [](std::string name) { return [name](const Frame& f) { return f.col(name); }; };
  auto a_times = [](std::string name) {
    return [name](const Frame& f) { return f.a.cwiseProduct(f.col(name)).eval(); };
  };

  if (setup == 1) {
    switch (kind) {
      case kPiA: return linear_fitter(cols({raw("U0")}));
      case kPiR: return linear_fitter(cols({single_regression ? sq("W1") : sq("Z1")}));
      case kQ1:
        if (single_regression) return linear_fitter(cols({sq("W1"), raw("A"), a_times("W1")}));
        return linear_fitter(cols({sq("W1"), raw("A"), a_times("W1"), raw("Z1")}));
      case kQ2:
        return linear_fitter(cols({[](const Frame& f) { return (f.col("W1").array() - 1.7).square().matrix().eval(); },
                                   raw("A")}));
      default: break;
    }
  } else if (setup == 2 && kind == kQ2) {
    return linear_fitter(
        cols({[](const Frame& f) { return (f.col("B1").array() - 1.0).abs().matrix().eval(); }, raw("A")}));
  }
  throw std::invalid_argument("no misspecified substitute for setup " + std::to_string(setup) + " / " +
                              misspec_str(kind));
}

struct ScenarioConfig {
  std::string name;
  int setup = 1;
  double theta = -1.90;  // setup I only
  unsigned misspec = kNone;
  std::size_t n = 2000;
  int reps = 100;
  std::uint64_t seed = 1;
  int bootstrap = 200;
  int folds = 5;
  double truncation = 0.01;
  std::vector<std::string> estimators;
};

/// Named designs: I-a..I-d and II-a, II-b.
inline ScenarioConfig scenario(const std::string& name) {
  ScenarioConfig c;
  c.name = name;
  const std::vector<std::string> roster1{"tsr", "dipw", "sr", "unadjusted", "tmlecc", "tmle1r"};
  const std::vector<std::string> roster2{"plugin", "tmle1r", "tsr", "sr"};
  if (name == "I-a") {
    c.theta = -1.90;
  } else if (name == "I-b") {
    c.theta = -0.90;
    c.misspec = kPiA;
  } else if (name == "I-c") {
    c.theta = -0.30;
    c.misspec = kQ1;
  } else if (name == "I-d") {
    c.theta = -0.30;
    c.misspec = kQ2 | kPiR;
  } else if (name == "II-a") {
    c.setup = 2;
  } else if (name == "II-b") {
    c.setup = 2;
    c.misspec = kQ2;
  } else {
    throw std::invalid_argument("unknown scenario '" + name + "'");
  }
  c.estimators = c.setup == 1 ? roster1 : roster2;
  return c;
}

inline std::vector<std::string> scenario_names() { return {"I-a", "I-b", "I-c", "I-d", "II-a", "II-b"}; }

struct EstimatorSummary {
  std::string estimator;
  std::string pair;
  int replicates = 0;
  int failures = 0;
  double mean_psi = 0.0, bias = 0.0, mse = 0.0, coverage = 0.0, ci_width = 0.0, mean_se = 0.0;
  double sd_psi = 0.0, mc_se = 0.0;
  double bias_std = 0.0, mse_std = 0.0;
  std::string first_error;
};

struct McSummary {
  std::string scenario;
  int setup = 1;
  double theta = 0.0;
  std::string misspec;
  std::size_t n = 0;
  int reps = 0;
  std::uint64_t seed = 0;
  double psi_true = 0.0;
  std::string truth_source;
  double outcome_sd = 0.0;
  double missing_rate = 0.0;
  std::vector<EstimatorSummary> rows;

  const EstimatorSummary& row(const std::string& est) const {
    for (const auto& r : rows)
      if (r.estimator == est) return r;
    throw std::out_of_range("no estimator '" + est + "' in summary");
  }
};

struct ReplicateEstimate {
  double psi, lo, hi, se;
};

namespace detail {

inline NuisanceStrategy scenario_strategy(const ScenarioConfig& c, std::uint64_t seed, bool single_regression) {
  auto st = NuisanceStrategy::super_learner(seed, c.folds);
  for (unsigned bit : {kPiA, kPiR, kQ1, kQ2}) {
    if (!(c.misspec & bit)) continue;
    if (single_regression && bit == kQ2) continue;
    auto fit = misspecified_model(c.setup, bit, single_regression);
    switch (bit) {
      case kPiA: st.pi_a = fit; break;
      case kPiR: st.pi_r = fit; break;
      case kQ1: st.q1 = fit; break;
      case kQ2:
        st.q2 = fit;
        st.q2_pooled = true;
        break;
    }
  }
  return st;
}

/// Run every configured estimator on one replicate.
inline std::map<std::string, ReplicateEstimate> run_replicate(const ScenarioConfig& c, const Table& t,
                                                              std::uint64_t seed,
                                                              std::map<std::string, std::string>& errors) {
  std::map<std::string, ReplicateEstimate> out;
  EstimatorOptions opt;
  opt.seed = seed;
  opt.folds = c.folds;
  opt.bootstrap = c.bootstrap;
  opt.truncation = c.truncation;
  auto record = [&](const std::string& name, const std::function<EstimateReport()>& f) {
    try {
      const auto rep = f();
      if (!std::isfinite(rep.psi)) throw EstimationError("non-finite estimate");
      out[name] = {rep.psi, rep.ci_lo, rep.ci_hi, rep.se};
    } catch (const std::exception& e) {
      errors[name] = e.what();
    }
  };
  auto wanted = [&](const std::string& name) {
    return std::find(c.estimators.begin(), c.estimators.end(), name) != c.estimators.end();
  };

  const auto two = detail::scenario_strategy(c, seed, false);
  const auto one = detail::scenario_strategy(c, seed, true);
  if (c.setup == 1) {
    const Dataset full = bind(t, {{"W1"}, {"Z1", "Z2"}, "A", "Y", "R", {"U0"}});
    const Dataset outer = bind(t, {{"W1"}, {}, "A", "Y", "R", {"U0"}});
    std::optional<NuisanceSet> ns;
    std::string ns_error;
    if (wanted("tsr") || wanted("dipw") || wanted("sr")) {
      try {
        ns = fit_nuisance(full, two, c.truncation);
      } catch (const std::exception& e) {
        ns_error = e.what();
      }
    }
    auto need_ns = [&]() -> const NuisanceSet& {
      if (!ns) throw EstimationError(ns_error);
      return *ns;
    };
    if (wanted("tsr")) record("tsr", [&] { return tsr_targeting(full, full, need_ns(), two); });
    if (wanted("dipw")) record("dipw", [&] { return dipw_from(full, need_ns()); });
    if (wanted("sr")) record("sr", [&] { return sr_from(full, need_ns().q1, two, opt); });
    if (wanted("unadjusted")) record("unadjusted", [&] { return estimate_unadjusted(outer); });
    if (wanted("tmlecc")) record("tmlecc", [&] { return estimate_tmle_cc(outer, one, opt); });
    if (wanted("tmle1r")) record("tmle1r", [&] { return estimate_tmle_1r(outer, one, opt); });
  } else {
    const Dataset inner = bind(t, {{"B1"}, {"C2"}, "A", "Y", "R", {"U0"}});
    const Dataset outer = bind(t, {{"B1", "C1", "C2"}, {}, "A", "Y", "R", {"U0"}});
    std::optional<NuisanceSet> ns;
    std::string ns_error;
    if (wanted("tsr") || wanted("sr")) {
      try {
        ns = fit_nuisance(inner, two, c.truncation);
      } catch (const std::exception& e) {
        ns_error = e.what();
      }
    }
    auto need_ns = [&]() -> const NuisanceSet& {
      if (!ns) throw EstimationError(ns_error);
      return *ns;
    };
    if (wanted("plugin")) record("plugin", [&] { return estimate_sr(outer, one, opt); });
    if (wanted("tmle1r")) record("tmle1r", [&] { return estimate_tmle_1r(outer, one, opt); });
    if (wanted("tsr")) record("tsr", [&] { return tsr_targeting(inner, inner, need_ns(), two); });
    if (wanted("sr")) record("sr", [&] { return sr_from(inner, need_ns().q1, two, opt); });
  }
  return out;
}

inline std::string estimator_pair(int setup, const std::string& est) {
  if (setup == 1) return (est == "tsr" || est == "dipw" || est == "sr") ? "({W1};{Z1,Z2})" : "({W1};{})";
  return (est == "tsr" || est == "sr") ? "({B1};{C2})" : "({B1,C1,C2};{})";
}

}  // namespace detail

/// Draw `reps` independent samples (replicate r uses substream r of the
/// master seed), run the roster on each, and summarise against the truth.
/// Estimator failures are counted and excluded.
inline McSummary run_monte_carlo(const ScenarioConfig& c,
                                 const std::function<void(int, int)>& progress = nullptr) {
  McSummary s;
  s.scenario = c.name;
  s.setup = c.setup;
  s.theta = c.setup == 1 ? c.theta : 0.0;
  s.misspec = misspec_str(c.misspec);
  s.n = c.n;
  s.reps = c.reps;
  s.seed = c.seed;
  s.psi_true = c.setup == 1 ? kSetup1Ate : kSetup2Ate;
  s.truth_source = "closed form, checked against interventional simulation";
  s.outcome_sd = outcome_sd(c.setup);

  std::map<std::string, std::vector<ReplicateEstimate>> est;
  std::map<std::string, int> fails;
  std::map<std::string, std::string> first_err;
  CompensatedSum miss;
  for (int r = 0; r < c.reps; ++r) {
    const std::uint64_t seed = substream_seed(c.seed, static_cast<std::uint64_t>(r));
    const Table t = c.setup == 1 ? gen_setup1(c.n, {c.theta, false}, seed) : gen_setup2(c.n, {}, seed);
    double nm = 0.0;
    for (double v : t.col("R")) nm += v == 0.0 ? 1.0 : 0.0;
    miss.add(nm / static_cast<double>(c.n));
    std::map<std::string, std::string> errors;
    const auto res = detail::run_replicate(c, t, seed, errors);
    for (const auto& [k, v] : res) est[k].push_back(v);
    for (const auto& [k, e] : errors) {
      ++fails[k];
      if (!first_err.count(k)) first_err[k] = e;
    }
    if (progress) progress(r + 1, c.reps);
  }
  s.missing_rate = c.reps > 0 ? miss.value() / c.reps : 0.0;

  for (const auto& name : c.estimators) {
    EstimatorSummary row;
    row.estimator = name;
    row.pair = detail::estimator_pair(c.setup, name);
    row.failures = fails.count(name) ? fails[name] : 0;
    if (first_err.count(name)) row.first_error = first_err[name];
    const auto& v = est[name];
    row.replicates = static_cast<int>(v.size());
    if (!v.empty()) {
      CompensatedSum ps, err2, cov, width, se;
      for (const auto& e : v) {
        ps.add(e.psi);
        err2.add((e.psi - s.psi_true) * (e.psi - s.psi_true));
        cov.add(e.lo <= s.psi_true && s.psi_true <= e.hi ? 1.0 : 0.0);
        width.add(e.hi - e.lo);
        se.add(e.se);
      }
      const double k = static_cast<double>(v.size());
      row.mean_psi = ps.value() / k;
      row.bias = row.mean_psi - s.psi_true;
      row.mse = err2.value() / k;
      row.coverage = 100.0 * cov.value() / k;
      row.ci_width = width.value() / k;
      row.mean_se = se.value() / k;
      CompensatedSum dev;
      for (const auto& e : v) dev.add((e.psi - row.mean_psi) * (e.psi - row.mean_psi));
      row.sd_psi = v.size() > 1 ? std::sqrt(dev.value() / (k - 1.0)) : 0.0;
      row.mc_se = row.sd_psi / std::sqrt(k);
      row.bias_std = row.bias / s.outcome_sd;
      row.mse_std = row.mse / (s.outcome_sd * s.outcome_sd);
    }
    s.rows.push_back(row);
  }
  return s;
}

}  // namespace seqadj
