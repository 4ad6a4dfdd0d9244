#pragma once

// ATE estimators for the sequentially adjusted functional
//   psi = E_W Delta_a E_{Z|W,A=a} E[Y | W, A=a, Z, R=1]
// together with their nuisance fits and influence-function inference.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "core/random.hpp"
#include "core/stats.hpp"
#include "data.hpp"
#include "learners.hpp"

namespace seqadj {

class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Surface = std::function<Eigen::VectorXd(const Frame&)>;

/// A fitted surface plus anything the fitter wants reported.
struct Fit {
  Surface predict;
  std::vector<std::string> notes;
};

using SurfaceFitter = std::function<Fit(const Frame&, const Eigen::VectorXd& y, const Eigen::VectorXd& w)>;
using FeatureMap = std::function<Eigen::MatrixXd(const Frame&)>;

namespace features {
inline Eigen::MatrixXd w(const Frame& f) { return f.w; }
inline Eigen::MatrixXd wa(const Frame& f) { return f.wa(); }
inline Eigen::MatrixXd waz(const Frame& f) { return f.waz(); }
}  // namespace features

namespace detail {

inline bool constant_response(const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
  std::optional<double> first;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (w[i] <= 0.0) continue;
    if (!first) first = y[i];
    else if (y[i] != *first) return false;
  }
  return true;
}

inline Fit wrap_model(FittedModel model, FeatureMap fm, std::vector<std::string> notes) {
  for (const auto& warn : model.warnings()) notes.push_back(warn);
  Fit out;
  out.notes = std::move(notes);
  out.predict = [model = std::move(model), fm = std::move(fm)](const Frame& f) { return model.predict(fm(f)); };
  return out;
}

}  // namespace detail

/// Cross-validated ensemble on the given features. A response that is
/// constant on the fit rows short-circuits to the mean learner.
inline SurfaceFitter super_learner_fitter(FeatureMap fm, SuperLearnerSpec spec) {
  return [fm = std::move(fm), spec = std::move(spec)](const Frame& f, const Eigen::VectorXd& y,
                                                      const Eigen::VectorXd& w) {
    DesignMatrix d(fm(f), y, w);
    if (detail::constant_response(y, w)) return detail::wrap_model(fit_mean(d), fm, {"constant response: mean learner"});
    if (spec.folds > d.rows()) return detail::wrap_model(fit_mean(d), fm, {"too few rows for cross-validation: mean learner"});
    return detail::wrap_model(fit_super_learner(d, spec), fm, {});
  };
}

/// Ordinary or weighted least squares on the given features (identity link,
/// so a binary response gives a linear probability model).
inline SurfaceFitter linear_fitter(FeatureMap fm) {
  return [fm = std::move(fm)](const Frame& f, const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
    return detail::wrap_model(fit_linear(DesignMatrix(fm(f), y, w)), fm, {});
  };
}

/// Cell means over exact feature vectors. On a discrete population this is
/// the true conditional expectation.
inline SurfaceFitter saturated_fitter(FeatureMap fm) {
  return [fm = std::move(fm)](const Frame& f, const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
    const Eigen::MatrixXd x = fm(f);
    std::map<std::vector<double>, std::pair<CompensatedSum, CompensatedSum>> cells;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      std::vector<double> key(static_cast<std::size_t>(x.cols()));
      for (Eigen::Index j = 0; j < x.cols(); ++j) key[static_cast<std::size_t>(j)] = x(i, j);
      auto& c = cells[key];
      c.first.add(w[i] * y[i]);
      c.second.add(w[i]);
    }
    auto table = std::make_shared<std::map<std::vector<double>, double>>();
    for (auto& [k, c] : cells)
      if (c.second.value() > 0.0) (*table)[k] = c.first.value() / c.second.value();
    Fit out;
    out.predict = [fm, table](const Frame& g) {
      const Eigen::MatrixXd xg = fm(g);
      Eigen::VectorXd p(xg.rows());
      std::vector<double> key(static_cast<std::size_t>(xg.cols()));
      for (Eigen::Index i = 0; i < xg.rows(); ++i) {
        for (Eigen::Index j = 0; j < xg.cols(); ++j) key[static_cast<std::size_t>(j)] = xg(i, j);
        auto it = table->find(key);
        if (it == table->end()) throw EstimationError("saturated surface evaluated outside its support");
        p[i] = it->second;
      }
      return p;
    };
    return out;
  };
}

/// How each nuisance surface is learned.
struct NuisanceStrategy {
  SurfaceFitter pi_a;  // A on W
  SurfaceFitter pi_r;  // R on (W, A, Z)
  SurfaceFitter q1;    // Y on (W, A, Z) among R = 1
  SurfaceFitter q2;    // Q1 predictions on W within each arm
  bool q2_pooled = false;  // q2 instead sees both arms and A as a regressor

  static NuisanceStrategy super_learner(std::uint64_t seed = 1, int folds = 5) {
    auto reg = [&](std::uint64_t k) {
      auto s = SuperLearnerSpec::regression(substream_seed(seed, k));
      s.folds = folds;
      return s;
    };
    auto cls = [&](std::uint64_t k) {
      auto s = SuperLearnerSpec::classification(substream_seed(seed, k));
      s.folds = folds;
      return s;
    };
    NuisanceStrategy st;
    st.pi_a = super_learner_fitter(features::w, cls(1));
    st.pi_r = super_learner_fitter(features::waz, cls(2));
    st.q1 = super_learner_fitter(features::waz, reg(3));
    st.q2 = super_learner_fitter(features::w, reg(4));
    return st;
  }

  static NuisanceStrategy saturated() {
    NuisanceStrategy st;
    st.pi_a = saturated_fitter(features::w);
    st.pi_r = saturated_fitter(features::waz);
    st.q1 = saturated_fitter(features::waz);
    st.q2 = saturated_fitter(features::w);
    return st;
  }
};

struct EstimatorOptions {
  double truncation = 0.01;
  bool split = false;
  std::uint64_t seed = 1;
  int folds = 5;
  int bootstrap = 200;
};

/// Fitted propensities and first-stage outcome regression.
struct NuisanceSet {
  Surface pi_a, pi_r, q1;
  double truncation = 0.01;
  std::vector<std::string> notes;

  static Eigen::VectorXd clamp(Eigen::VectorXd p, double eps, long* count = nullptr) {
    long c = 0;
    for (auto& v : p) {
      if (v < eps) {
        v = eps;
        ++c;
      } else if (v > 1.0 - eps) {
        v = 1.0 - eps;
        ++c;
      }
    }
    if (count) *count += c;
    return p;
  }
  Eigen::VectorXd pa(const Frame& f, long* count = nullptr) const { return clamp(pi_a(f), truncation, count); }
  Eigen::VectorXd pr(const Frame& f, long* count = nullptr) const { return clamp(pi_r(f), truncation, count); }
};

namespace detail {

inline void require_both_arms(const Eigen::VectorXd& a, const Eigen::VectorXd& w, const char* what) {
  bool has0 = false, has1 = false;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (w[i] <= 0.0) continue;
    (a[i] == 1.0 ? has1 : has0) = true;
  }
  if (!has0 || !has1) throw EstimationError(std::string(what) + ": both exposure arms are required");
}

inline void append_notes(std::vector<std::string>& to, const std::string& tag, const std::vector<std::string>& from) {
  for (const auto& n : from) to.push_back(tag + ": " + n);
}

}  // namespace detail

inline NuisanceSet fit_nuisance(const Dataset& data, const NuisanceStrategy& st, double truncation = 0.01) {
  data.validate();
  const Eigen::VectorXd w = data.w();
  detail::require_both_arms(data.x.a, w, "fit_nuisance");
  const auto sel = data.selected();
  if (sel.empty()) throw EstimationError("fit_nuisance: no selected (R = 1) rows");

  NuisanceSet ns;
  ns.truncation = truncation;
  auto fa = st.pi_a(data.x, data.x.a, w);
  auto fr = st.pi_r(data.x, data.r, w);
  auto fq = st.q1(data.x.subset(sel), data.y(sel), w(sel));
  ns.pi_a = std::move(fa.predict);
  ns.pi_r = std::move(fr.predict);
  ns.q1 = std::move(fq.predict);
  detail::append_notes(ns.notes, "pi_a", fa.notes);
  detail::append_notes(ns.notes, "pi_r", fr.notes);
  detail::append_notes(ns.notes, "q1", fq.notes);
  return ns;
}

/// Arm-specific second-stage regressions Q2(W, a).
struct Q2Surfaces {
  std::array<Surface, 2> arm;
  std::vector<std::string> notes;

  Eigen::VectorXd at(const Frame& f, int a) const { return arm[static_cast<std::size_t>(a)](f); }
  Eigen::VectorXd observed(const Frame& f) const {
    const Eigen::VectorXd q0 = at(f, 0), q1 = at(f, 1);
    return (f.a.array() == 1.0).select(q1, q0);
  }
};

/// Regress `target` on W within each arm (or pooled with A when the
/// strategy asks for it).
inline Q2Surfaces fit_q2(const Frame& f, const Eigen::VectorXd& target, const Eigen::VectorXd& w,
                         const NuisanceStrategy& st) {
  Q2Surfaces out;
  if (st.q2_pooled) {
    auto fit = st.q2(f, target, w);
    Surface pooled = std::move(fit.predict);
    for (int a = 0; a < 2; ++a)
      out.arm[static_cast<std::size_t>(a)] = [pooled, a](const Frame& g) { return pooled(g.with_arm(a)); };
    detail::append_notes(out.notes, "q2", fit.notes);
    return out;
  }
  for (int a = 0; a < 2; ++a) {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index i = 0; i < f.rows(); ++i)
      if (f.a[i] == a && w[i] > 0.0) idx.push_back(i);
    if (idx.empty()) throw EstimationError("fit_q2: arm " + std::to_string(a) + " has no rows");
    auto fit = st.q2(f.subset(idx), target(idx), w(idx));
    out.arm[static_cast<std::size_t>(a)] = std::move(fit.predict);
    detail::append_notes(out.notes, "q2[" + std::to_string(a) + "]", fit.notes);
  }
  return out;
}

struct CleverCovariates {
  Eigen::VectorXd h1, h2;
};

/// H2 = (A - piA) / (piA (1 - piA)),  H1 = H2 / piR.
inline CleverCovariates clever_covariates(const Eigen::VectorXd& a, const Eigen::VectorXd& pi_a,
                                          const Eigen::VectorXd& pi_r) {
  CleverCovariates h;
  h.h2 = (a - pi_a).cwiseQuotient(pi_a.cwiseProduct((1.0 - pi_a.array()).matrix()));
  h.h1 = h.h2.cwiseQuotient(pi_r);
  return h;
}

/// One-dimensional weighted least squares of `residual` on `clever`
/// without intercept.
inline double solve_fluctuation(const Eigen::VectorXd& residual, const Eigen::VectorXd& clever,
                                const Eigen::VectorXd& w = {}) {
  CompensatedSum num, den;
  for (Eigen::Index i = 0; i < residual.size(); ++i) {
    const double wi = w.size() ? w[i] : 1.0;
    num.add(wi * clever[i] * residual[i]);
    den.add(wi * clever[i] * clever[i]);
  }
  if (!(den.value() > 0.0)) throw EstimationError("degenerate clever covariate (zero denominator)");
  return num.value() / den.value();
}

/// Per-row efficient influence function
///   D = H1 R (Y - Q1) + H2 (Q1 - Q2(W, A)) + Q2(W, 1) - Q2(W, 0) - psi.
/// Unselected rows contribute nothing to the first term.
inline Eigen::VectorXd eif_values(const Eigen::VectorXd& r, const Eigen::VectorXd& y, const CleverCovariates& h,
                                  const Eigen::VectorXd& q1, const Eigen::VectorXd& q2_obs,
                                  const Eigen::VectorXd& q2_1, const Eigen::VectorXd& q2_0, double psi) {
  Eigen::VectorXd d(r.size());
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    const double first = r[i] == 1.0 ? h.h1[i] * (y[i] - q1[i]) : 0.0;
    d[i] = first + h.h2[i] * (q1[i] - q2_obs[i]) + q2_1[i] - q2_0[i] - psi;
  }
  return d;
}

/// Same, from a nuisance set and second-stage fits evaluated on `data`.
inline Eigen::VectorXd eif_values(const Dataset& data, const NuisanceSet& ns, const Q2Surfaces& q2, double psi) {
  const auto h = clever_covariates(data.x.a, ns.pa(data.x), ns.pr(data.x));
  return eif_values(data.r, data.y, h, ns.q1(data.x), q2.observed(data.x), q2.at(data.x, 1), q2.at(data.x, 0), psi);
}

struct EstimateReport {
  std::string method;
  double psi = std::numeric_limits<double>::quiet_NaN();
  double se = std::numeric_limits<double>::quiet_NaN();
  double ci_lo = std::numeric_limits<double>::quiet_NaN();
  double ci_hi = std::numeric_limits<double>::quiet_NaN();
  Eigen::VectorXd eif;
  std::vector<std::pair<std::string, double>> diagnostics;
  std::vector<std::string> warnings;
  std::optional<std::string> error;

  void set_wald(double psi_, double se_) {
    psi = psi_;
    se = se_;
    ci_lo = psi - kZ975 * se;
    ci_hi = psi + kZ975 * se;
  }
  void diag(std::string key, double value) { diagnostics.emplace_back(std::move(key), value); }
  std::optional<double> diagnostic(const std::string& key) const {
    for (const auto& [k, v] : diagnostics)
      if (k == key) return v;
    return std::nullopt;
  }
  bool covers(double truth) const { return ci_lo <= truth && truth <= ci_hi; }
};

namespace detail {

inline double eif_se(const Eigen::VectorXd& d, const Eigen::VectorXd& w) {
  return std::sqrt(std::max(0.0, weighted_variance(d, w)) / effective_size(w));
}

/// Zero out Y where it is missing so that arithmetic never sees NaN.
inline Eigen::VectorXd filled(const Eigen::VectorXd& y) {
  return y.unaryExpr([](double v) { return is_missing(v) ? 0.0 : v; });
}

inline std::pair<std::vector<Eigen::Index>, std::vector<Eigen::Index>> split_halves(Eigen::Index n,
                                                                                  std::uint64_t seed) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  Rng rng(substream_seed(seed, 0x5eed5917ULL));
  rng.shuffle(idx);
  const auto half = static_cast<std::ptrdiff_t>((n + 1) / 2);
  std::vector<Eigen::Index> j1(idx.begin(), idx.begin() + half), j2(idx.begin() + half, idx.end());
  std::sort(j1.begin(), j1.end());
  std::sort(j2.begin(), j2.end());
  return {j1, j2};
}

}  // namespace detail


/// Targeting and evaluation steps of the sequential TMLE, given nuisances
/// learned on `target` (the whole sample when not splitting).
inline EstimateReport tsr_targeting(const Dataset& target, const Dataset& eval, const NuisanceSet& ns,
                                    const NuisanceStrategy& st) {
  EstimateReport rep;
  rep.method = "tsr";
  const Eigen::VectorXd wt = target.w();
  long trunc_a = 0, trunc_r = 0;

  // first fluctuation, on selected rows of the targeting sample
  const auto ht = clever_covariates(target.x.a, ns.pa(target.x, &trunc_a), ns.pr(target.x, &trunc_r));
  const Eigen::VectorXd q1_hat = ns.q1(target.x);
  const Eigen::VectorXd yt = detail::filled(target.y);
  const Eigen::VectorXd sel_w = wt.cwiseProduct(target.r);
  const double delta = solve_fluctuation(yt - q1_hat, ht.h1, sel_w);
  const Eigen::VectorXd q1_star = q1_hat + delta * ht.h1;

  // second stage on every targeting row, then its fluctuation
  const Q2Surfaces q2 = fit_q2(target.x, q1_star, wt, st);
  const Eigen::VectorXd q2_obs = q2.observed(target.x);
  const double gamma = solve_fluctuation(q1_star - q2_obs, ht.h2, wt);
  const Eigen::VectorXd q2_obs_star = q2_obs + gamma * ht.h2;

  CompensatedSum ne1, ne2;
  for (Eigen::Index i = 0; i < target.rows(); ++i) {
    ne1.add(sel_w[i] * ht.h1[i] * (yt[i] - q1_star[i]));
    ne2.add(wt[i] * ht.h2[i] * (q1_star[i] - q2_obs_star[i]));
  }

  // evaluation sample
  const Eigen::VectorXd we = eval.w();
  const Eigen::VectorXd pa_e = ns.pa(eval.x, &trunc_a);
  const auto he = clever_covariates(eval.x.a, pa_e, ns.pr(eval.x, &trunc_r));
  const Eigen::VectorXd q1_e = ns.q1(eval.x) + delta * he.h1;
  const Eigen::VectorXd q2_1 = q2.at(eval.x, 1) + gamma * pa_e.cwiseInverse();
  const Eigen::VectorXd q2_0 = q2.at(eval.x, 0) - gamma * (1.0 - pa_e.array()).inverse().matrix();
  const Eigen::VectorXd q2_obs_e = (eval.x.a.array() == 1.0).select(q2_1, q2_0);
  const double psi = weighted_mean(q2_1 - q2_0, we);

  rep.eif = eif_values(eval.r, eval.y, he, q1_e, q2_obs_e, q2_1, q2_0, psi);
  rep.set_wald(psi, detail::eif_se(rep.eif, we));
  rep.diag("delta_star", delta);
  rep.diag("gamma_star", gamma);
  rep.diag("normal_eq_q1", ne1.value());
  rep.diag("normal_eq_q2", ne2.value());
  rep.diag("eif_mean", weighted_mean(rep.eif, we));
  rep.diag("n_target", static_cast<double>(target.rows()));
  rep.diag("n_eval", static_cast<double>(eval.rows()));
  rep.diag("truncated_pi_a", static_cast<double>(trunc_a));
  rep.diag("truncated_pi_r", static_cast<double>(trunc_r));
  rep.warnings = ns.notes;
  rep.warnings.insert(rep.warnings.end(), q2.notes.begin(), q2.notes.end());
  return rep;
}

inline EstimateReport estimate_tmle_1r(const Dataset& data, const NuisanceStrategy& st, const EstimatorOptions& opt);

/// Targeted sequential regression. With an empty inner set Z this is the
/// single-regression TMLE.
inline EstimateReport estimate_tsr(const Dataset& data, const NuisanceStrategy& st, const EstimatorOptions& opt) {
  data.validate();
  if (data.x.z.cols() == 0) {
    auto rep = estimate_tmle_1r(data, st, opt);
    rep.method = "tsr";
    rep.warnings.push_back("empty inner set: single-regression TMLE");
    return rep;
  }
  if (!opt.split) return tsr_targeting(data, data, fit_nuisance(data, st, opt.truncation), st);
  if (data.rows() < 20) throw EstimationError("sample splitting needs at least 20 rows");
  const auto [j1, j2] = detail::split_halves(data.rows(), opt.seed);
  const Dataset target = data.subset(j1), eval = data.subset(j2);
  return tsr_targeting(target, eval, fit_nuisance(target, st, opt.truncation), st);
}

inline EstimateReport estimate_tsr(const Dataset& data, const EstimatorOptions& opt = {}) {
  return estimate_tsr(data, NuisanceStrategy::super_learner(opt.seed, opt.folds), opt);
}

/// Double inverse probability weighting with a plug-in sandwich variance.
inline EstimateReport dipw_from(const Dataset& data, const NuisanceSet& ns) {
  EstimateReport rep;
  rep.method = "dipw";
  long ta = 0, tr = 0;
  const Eigen::VectorXd pa = ns.pa(data.x, &ta), pr = ns.pr(data.x, &tr);
  Eigen::VectorXd phi(data.rows());
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    if (data.r[i] != 1.0) {
      phi[i] = 0.0;
      continue;
    }
    const double wa = data.x.a[i] == 1.0 ? 1.0 / pa[i] : -1.0 / (1.0 - pa[i]);
    phi[i] = data.y[i] * wa / pr[i];
  }
  const Eigen::VectorXd w = data.w();
  const double psi = weighted_mean(phi, w);
  rep.eif = phi.array() - psi;
  rep.set_wald(psi, detail::eif_se(rep.eif, w));
  rep.diag("truncated_pi_a", static_cast<double>(ta));
  rep.diag("truncated_pi_r", static_cast<double>(tr));
  rep.warnings = ns.notes;
  return rep;
}

inline EstimateReport estimate_dipw(const Dataset& data, const NuisanceStrategy& st, const EstimatorOptions& opt) {
  return dipw_from(data, fit_nuisance(data, st, opt.truncation));
}

namespace detail {

/// Plug-in sequential regression point estimate from a first-stage surface.
inline double sr_point(const Dataset& data, const Surface& q1, const NuisanceStrategy& st,
                       std::vector<std::string>* notes = nullptr) {
  const Eigen::VectorXd w = data.w();
  if (data.x.z.cols() == 0) {
    return weighted_mean(q1(data.x.with_arm(1)) - q1(data.x.with_arm(0)), w);
  }
  const Q2Surfaces q2 = fit_q2(data.x, q1(data.x), w, st);
  if (notes) notes->insert(notes->end(), q2.notes.begin(), q2.notes.end());
  return weighted_mean(q2.at(data.x, 1) - q2.at(data.x, 0), w);
}

inline Surface fit_q1_only(const Dataset& data, const NuisanceStrategy& st) {
  const auto sel = data.selected();
  if (sel.empty()) throw EstimationError("no selected (R = 1) rows");
  const Eigen::VectorXd w = data.w();
  return st.q1(data.x.subset(sel), data.y(sel), w(sel)).predict;
}

}  // namespace detail

/// Sequential regression plug-in with a percentile bootstrap interval;
/// every resample refits both regression stages.
inline EstimateReport sr_from(const Dataset& data, const Surface& q1, const NuisanceStrategy& st,
                              const EstimatorOptions& opt) {
  EstimateReport rep;
  rep.method = "sr";
  rep.psi = detail::sr_point(data, q1, st, &rep.warnings);
  if (opt.bootstrap <= 0) return rep;
  std::vector<double> boot;
  boot.reserve(static_cast<std::size_t>(opt.bootstrap));
  int failed = 0;
  const Eigen::Index n = data.rows();
  for (int b = 0; b < opt.bootstrap; ++b) {
    Rng rng(substream_seed(opt.seed ^ 0xb007ULL, static_cast<std::uint64_t>(b)));
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    for (auto& i : idx) i = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
    try {
      const Dataset bs = data.subset(idx);
      boot.push_back(detail::sr_point(bs, detail::fit_q1_only(bs, st), st));
    } catch (const std::exception&) {
      ++failed;
    }
  }
  if (boot.size() < 2) throw EstimationError("bootstrap failed on nearly every resample");
  Eigen::VectorXd bv = Eigen::Map<Eigen::VectorXd>(boot.data(), static_cast<Eigen::Index>(boot.size()));
  rep.se = std::sqrt(weighted_variance(bv, Eigen::VectorXd::Ones(bv.size())));
  rep.ci_lo = quantile(boot, 0.025);
  rep.ci_hi = quantile(boot, 0.975);
  rep.diag("bootstrap_replicates", static_cast<double>(boot.size()));
  rep.diag("bootstrap_failures", static_cast<double>(failed));
  return rep;
}

inline EstimateReport estimate_sr(const Dataset& data, const NuisanceStrategy& st, const EstimatorOptions& opt) {
  data.validate();
  detail::require_both_arms(data.x.a, data.w(), "estimate_sr");
  return sr_from(data, detail::fit_q1_only(data, st), st, opt);
}

/// Plug-in with an explicit conditional law of Z: frequencies of each
/// observed Z configuration within (W, A) strata. Continuous W columns are
/// cut at their quintiles; strata without rows of the needed arm fall back
/// to frequencies given A alone.
inline EstimateReport estimate_cd_discrete(const Dataset& data, const NuisanceStrategy& st,
                                           const EstimatorOptions& opt) {
  data.validate();
  if (data.x.z.cols() == 0) throw EstimationError("cd: the inner set Z is empty");
  const Eigen::Index n = data.rows();
  auto distinct = [](const Eigen::VectorXd& v) {
    std::vector<double> u(v.data(), v.data() + v.size());
    std::sort(u.begin(), u.end());
    u.erase(std::unique(u.begin(), u.end()), u.end());
    return u;
  };
  for (Eigen::Index j = 0; j < data.x.z.cols(); ++j)
    if (distinct(data.x.z.col(j)).size() > 20)
      throw EstimationError("cd: unsupported for continuous Z ('" + data.x.z_names[static_cast<std::size_t>(j)] +
                            "' has more than 20 distinct values)");

  // stratum codes for W
  std::vector<std::vector<double>> wkey(static_cast<std::size_t>(n), std::vector<double>(data.x.w.cols()));
  for (Eigen::Index j = 0; j < data.x.w.cols(); ++j) {
    const Eigen::VectorXd col = data.x.w.col(j);
    const auto levels = distinct(col);
    std::vector<double> cuts;
    if (levels.size() > 20) {
      std::vector<double> c(col.data(), col.data() + n);
      for (int q = 1; q < 5; ++q) cuts.push_back(quantile(c, q / 5.0));
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      double code = col[i];
      if (!cuts.empty()) code = static_cast<double>(std::upper_bound(cuts.begin(), cuts.end(), col[i]) - cuts.begin());
      wkey[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = code;
    }
  }

  const Eigen::VectorXd w = data.w();
  std::map<std::vector<double>, int> zindex;
  std::vector<Eigen::RowVectorXd> zconf;
  std::vector<int> zcode(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    std::vector<double> k(static_cast<std::size_t>(data.x.z.cols()));
    for (Eigen::Index j = 0; j < data.x.z.cols(); ++j) k[static_cast<std::size_t>(j)] = data.x.z(i, j);
    auto [it, fresh] = zindex.emplace(k, static_cast<int>(zconf.size()));
    if (fresh) zconf.push_back(data.x.z.row(i));
    zcode[static_cast<std::size_t>(i)] = it->second;
  }
  const std::size_t m = zconf.size();

  using Counts = std::vector<double>;
  std::map<std::pair<std::vector<double>, int>, Counts> strata;
  std::array<Counts, 2> by_arm{Counts(m, 0.0), Counts(m, 0.0)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const int a = data.x.a[i] == 1.0 ? 1 : 0;
    auto& c = strata[{wkey[static_cast<std::size_t>(i)], a}];
    if (c.empty()) c.assign(m, 0.0);
    c[static_cast<std::size_t>(zcode[static_cast<std::size_t>(i)])] += w[i];
    by_arm[static_cast<std::size_t>(a)][static_cast<std::size_t>(zcode[static_cast<std::size_t>(i)])] += w[i];
  }

  const Surface q1 = detail::fit_q1_only(data, st);
  // Q1 at every (row, arm, z configuration)
  std::array<std::vector<Eigen::VectorXd>, 2> q1_at;
  for (int a = 0; a < 2; ++a)
    for (std::size_t k = 0; k < m; ++k) {
      Frame f = data.x.with_arm(a);
      f.z.rowwise() = zconf[k];
      q1_at[static_cast<std::size_t>(a)].push_back(q1(f));
    }

  long fallbacks = 0;
  Eigen::VectorXd contrast(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double arm_value[2];
    for (int a = 0; a < 2; ++a) {
      const Counts* c = nullptr;
      auto it = strata.find({wkey[static_cast<std::size_t>(i)], a});
      if (it != strata.end()) c = &it->second;
      if (!c) {
        c = &by_arm[static_cast<std::size_t>(a)];
        ++fallbacks;
      }
      double tot = 0.0, acc = 0.0;
      for (std::size_t k = 0; k < m; ++k) tot += (*c)[k];
      for (std::size_t k = 0; k < m; ++k) acc += (*c)[k] / tot * q1_at[static_cast<std::size_t>(a)][k][i];
      arm_value[a] = acc;
    }
    contrast[i] = arm_value[1] - arm_value[0];
  }
  EstimateReport rep;
  rep.method = "cd";
  rep.psi = weighted_mean(contrast, w);
  rep.diag("z_configurations", static_cast<double>(m));
  rep.diag("stratum_fallbacks", static_cast<double>(fallbacks));
  (void)opt;
  return rep;
}

namespace detail {

/// Single-regression TMLE on (W, A); with `use_pi_r` the clever covariate is
/// divided by a selection propensity learned from (W, A).
inline EstimateReport tmle_single(const Dataset& data_in, const NuisanceStrategy& st, const EstimatorOptions& opt,
                                  bool use_pi_r) {
  Dataset data = data_in;
  data.x.z.resize(data.rows(), 0);
  data.x.z_names.clear();
  data.validate();
  const Eigen::VectorXd w = data.w();
  require_both_arms(data.x.a, w, "tmle");
  const auto sel = data.selected();
  if (sel.empty()) throw EstimationError("tmle: no selected (R = 1) rows");

  EstimateReport rep;
  auto fa = st.pi_a(data.x, data.x.a, w);
  auto fq = st.q1(data.x.subset(sel), data.y(sel), w(sel));
  append_notes(rep.warnings, "pi_a", fa.notes);
  append_notes(rep.warnings, "q1", fq.notes);
  Surface pi_r = [](const Frame& f) { return Eigen::VectorXd::Ones(f.rows()).eval(); };
  if (use_pi_r) {
    auto fr = st.pi_r(data.x, data.r, w);
    append_notes(rep.warnings, "pi_r", fr.notes);
    pi_r = std::move(fr.predict);
  }
  long ta = 0, tr = 0;
  const Eigen::VectorXd pa = NuisanceSet::clamp(fa.predict(data.x), opt.truncation, &ta);
  auto pr_at = [&](const Frame& f) {
    return use_pi_r ? NuisanceSet::clamp(pi_r(f), opt.truncation, &tr) : pi_r(f);
  };
  const Frame f1 = data.x.with_arm(1), f0 = data.x.with_arm(0);
  const Eigen::VectorXd pr_obs = pr_at(data.x), pr1 = pr_at(f1), pr0 = pr_at(f0);
  const Eigen::VectorXd h = clever_covariates(data.x.a, pa, pr_obs).h1;
  const Eigen::VectorXd h1 = (pa.cwiseProduct(pr1)).cwiseInverse();
  const Eigen::VectorXd h0 = -((1.0 - pa.array()) * pr0.array()).inverse().matrix();

  const Eigen::VectorXd q_obs = fq.predict(data.x);
  const Eigen::VectorXd y = filled(data.y);
  const double delta = solve_fluctuation(y - q_obs, h, w.cwiseProduct(data.r));
  const Eigen::VectorXd qs_obs = q_obs + delta * h;
  const Eigen::VectorXd qs1 = fq.predict(f1) + delta * h1;
  const Eigen::VectorXd qs0 = fq.predict(f0) + delta * h0;
  const double psi = weighted_mean(qs1 - qs0, w);
  Eigen::VectorXd d(data.rows());
  for (Eigen::Index i = 0; i < data.rows(); ++i)
    d[i] = (data.r[i] == 1.0 ? h[i] * (y[i] - qs_obs[i]) : 0.0) + qs1[i] - qs0[i] - psi;
  rep.eif = d;
  rep.set_wald(psi, eif_se(d, w));
  rep.diag("delta_star", delta);
  rep.diag("truncated_pi_a", static_cast<double>(ta));
  rep.diag("truncated_pi_r", static_cast<double>(tr));
  return rep;
}

}  // namespace detail

/// Single-regression TMLE adjusting for W only, with selection propensity
/// given (W, A).
inline EstimateReport estimate_tmle_1r(const Dataset& data, const NuisanceStrategy& st, const EstimatorOptions& opt) {
  auto rep = detail::tmle_single(data, st, opt, true);
  rep.method = "tmle1r";
  return rep;
}

/// TMLE on complete cases only, ignoring selection.
inline EstimateReport estimate_tmle_cc(const Dataset& data, const NuisanceStrategy& st, const EstimatorOptions& opt) {
  data.validate();
  auto rep = detail::tmle_single(data.subset(data.selected()), st, opt, false);
  rep.method = "tmlecc";
  rep.diag("complete_cases", static_cast<double>(data.selected().size()));
  return rep;
}

/// Difference in outcome means between arms among selected rows.
inline EstimateReport estimate_unadjusted(const Dataset& data) {
  data.validate();
  const Eigen::VectorXd w = data.w();
  std::array<std::vector<Eigen::Index>, 2> arms;
  for (Eigen::Index i = 0; i < data.rows(); ++i)
    if (data.r[i] == 1.0 && w[i] > 0.0) arms[data.x.a[i] == 1.0 ? 1 : 0].push_back(i);
  if (arms[0].empty() || arms[1].empty()) throw EstimationError("unadjusted: an arm has no selected rows");
  double mean[2], var[2];
  for (int a = 0; a < 2; ++a) {
    const auto& idx = arms[static_cast<std::size_t>(a)];
    const Eigen::VectorXd ya = data.y(idx), wa = w(idx);
    mean[a] = weighted_mean(ya, wa);
    var[a] = weighted_variance(ya, wa) / effective_size(wa);
  }
  EstimateReport rep;
  rep.method = "unadjusted";
  rep.set_wald(mean[1] - mean[0], std::sqrt(var[0] + var[1]));
  return rep;
}

inline EstimateReport estimate_tmle_1r(const Dataset& data, const EstimatorOptions& opt = {}) {
  return estimate_tmle_1r(data, NuisanceStrategy::super_learner(opt.seed, opt.folds), opt);
}
inline EstimateReport estimate_dipw(const Dataset& data, const EstimatorOptions& opt = {}) {
  return estimate_dipw(data, NuisanceStrategy::super_learner(opt.seed, opt.folds), opt);
}
inline EstimateReport estimate_sr(const Dataset& data, const EstimatorOptions& opt = {}) {
  return estimate_sr(data, NuisanceStrategy::super_learner(opt.seed, opt.folds), opt);
}

}  // namespace seqadj
