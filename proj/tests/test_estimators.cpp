#include <gtest/gtest.h>

#include <cmath>

#include "common.hpp"
#include "seqadj/estimators.hpp"
#include "seqadj/oracles.hpp"
#include "seqadj/simulate.hpp"

using namespace seqadj;

namespace {

Dataset setup1_sample(std::size_t n, std::uint64_t seed, const ColumnBinding& b = {{"W1"}, {"Z1", "Z2"}}) {
  return bind(gen_setup1(n, {}, seed), b);
}

NuisanceStrategy linear_strategy() {
  NuisanceStrategy st;
  st.pi_a = linear_fitter(features::w);
  st.pi_r = linear_fitter(features::waz);
  st.q1 = linear_fitter(features::waz);
  st.q2 = linear_fitter(features::w);
  return st;
}

double sd(const Eigen::VectorXd& v) {
  const double m = v.mean();
  return std::sqrt((v.array() - m).square().sum() / static_cast<double>(v.size() - 1));
}

Eigen::VectorXd selected_y(const Dataset& d) {
  const auto idx = d.selected();
  return d.y(idx);
}

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd y(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double e : v) y[i++] = e;
  return y;
}

}  // namespace

TEST(Clever, Arithmetic) {
  const auto h = clever_covariates(vec({1, 0, 1}), vec({0.5, 0.5, 0.2}), vec({1, 1, 0.5}));
  EXPECT_DOUBLE_EQ(h.h2[0], 2.0);
  EXPECT_DOUBLE_EQ(h.h1[0], 2.0);
  EXPECT_DOUBLE_EQ(h.h2[1], -2.0);
  EXPECT_DOUBLE_EQ(h.h2[2], 5.0);
  EXPECT_DOUBLE_EQ(h.h1[2], 10.0);
}

TEST(Fluctuation, Examples) {
  EXPECT_EQ(solve_fluctuation(vec({0, 0, 0}), vec({1, 2, 3})), 0.0);
  EXPECT_DOUBLE_EQ(solve_fluctuation(vec({2.5, -5, 7.5}), vec({1, -2, 3})), 2.5);
  EXPECT_THROW(solve_fluctuation(vec({1, 2}), vec({0, 0})), EstimationError);

  Rng rng(1);
  Eigen::VectorXd r(100), h(100);
  for (Eigen::Index i = 0; i < 100; ++i) r[i] = rng.normal(), h[i] = rng.normal();
  const Eigen::MatrixXd hm = h;
  const double ls = hm.colPivHouseholderQr().solve(r)[0];
  EXPECT_NEAR(solve_fluctuation(r, h), ls, 1e-10);
}

TEST(Nuisance, Setup1SelectsAboutHalf) {
  const auto d = setup1_sample(2000, 3);
  const double frac = d.selected().size() / 2000.0;
  EXPECT_GT(frac, 0.43);
  EXPECT_LT(frac, 0.53);
  const auto ns = fit_nuisance(d, linear_strategy(), 0.01);
  const auto pa = ns.pa(d.x);
  EXPECT_GE(pa.minCoeff(), 0.01);
  EXPECT_LE(pa.maxCoeff(), 0.99);
}

TEST(Nuisance, NoMissingnessTruncatesSelection) {
  auto d = setup1_sample(300, 4);
  Rng rng(4);
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    d.r[i] = 1.0;
    if (is_missing(d.y[i])) d.y[i] = rng.normal();
  }
  const auto ns = fit_nuisance(d, NuisanceStrategy::super_learner(4), 0.01);
  const auto pr = ns.pr(d.x);
  for (Eigen::Index i = 0; i < pr.size(); ++i) EXPECT_DOUBLE_EQ(pr[i], 0.99);
}

TEST(Nuisance, Truncation) {
  long count = 0;
  const auto p = NuisanceSet::clamp(vec({0.001, 0.5, 0.9999}), 0.01, &count);
  EXPECT_DOUBLE_EQ(p[0], 0.01);
  EXPECT_DOUBLE_EQ(p[1], 0.5);
  EXPECT_DOUBLE_EQ(p[2], 0.99);
  EXPECT_EQ(count, 2);
}

TEST(Nuisance, Errors) {
  auto d = setup1_sample(200, 5);
  auto one_arm = d;
  one_arm.x.a.setOnes();
  EXPECT_THROW(fit_nuisance(one_arm, linear_strategy()), EstimationError);
  auto none = d;
  none.r.setZero();
  none.y.setConstant(kMissing);
  EXPECT_THROW(fit_nuisance(none, linear_strategy()), EstimationError);
}

TEST(Eif, ZeroWhenResidualsVanish) {
  const CleverCovariates h{vec({2, -3}), vec({1, -1})};
  const auto d = eif_values(vec({1, 0}), vec({4, kMissing}), h, vec({4, 1}), vec({4, 1}), vec({5, 2}), vec({3, 0}), 2.0);
  EXPECT_EQ(d[0], 0.0);
  EXPECT_EQ(d[1], 0.0);
}

TEST(Tsr, NormalEquationsWithoutSplitting) {
  const auto d = setup1_sample(2000, 6);
  EstimatorOptions opt;
  opt.seed = 6;
  const auto rep = estimate_tsr(d, opt);
  ASSERT_FALSE(rep.error);
  const double scale = 1e-8 * static_cast<double>(d.rows()) * sd(selected_y(d));
  EXPECT_LE(std::abs(*rep.diagnostic("normal_eq_q1")), scale);
  EXPECT_LE(std::abs(*rep.diagnostic("normal_eq_q2")), scale);
  EXPECT_LE(std::abs(rep.eif.mean()), 1e-8);
  EXPECT_EQ(rep.eif.size(), d.rows());
  EXPECT_GT(rep.se, 0.0);
  EXPECT_NEAR(rep.ci_hi - rep.psi, kZ975 * rep.se, 1e-12);
  // a sample this size lands within a few standard errors of the truth
  EXPECT_LT(std::abs(rep.psi - kSetup1Ate), 5.0 * rep.se);
}

TEST(Tsr, SplitUsesTheSecondHalf) {
  const auto d = setup1_sample(400, 7);
  EstimatorOptions opt;
  opt.split = true;
  opt.seed = 7;
  const auto rep = estimate_tsr(d, linear_strategy(), opt);
  EXPECT_EQ(rep.eif.size(), 200);
  EXPECT_EQ(*rep.diagnostic("n_target"), 200.0);
  const double scale = 1e-8 * 200.0 * sd(selected_y(d));
  EXPECT_LE(std::abs(*rep.diagnostic("normal_eq_q1")), scale);
  EXPECT_LE(std::abs(*rep.diagnostic("normal_eq_q2")), scale);
  EXPECT_THROW(estimate_tsr(setup1_sample(19, 7), linear_strategy(), opt), EstimationError);
}

TEST(Tsr, EmptyInnerSetDispatchesToSingleRegression) {
  const auto d = setup1_sample(500, 8, {{"W1"}, {}});
  EstimatorOptions opt;
  const auto a = estimate_tsr(d, linear_strategy(), opt);
  const auto b = estimate_tmle_1r(d, linear_strategy(), opt);
  EXPECT_EQ(a.method, "tsr");
  EXPECT_DOUBLE_EQ(a.psi, b.psi);
}

TEST(Tsr, Deterministic) {
  const auto d = setup1_sample(400, 9);
  EstimatorOptions opt;
  opt.seed = 3;
  const auto a = estimate_tsr(d, opt), b = estimate_tsr(d, opt);
  EXPECT_EQ(a.psi, b.psi);
  EXPECT_EQ(a.se, b.se);
}

TEST(OracleNuisances, EveryEstimatorHitsTheExactFormula) {
  for (const auto* name : {"fig3a", "fig2a", "fig2b"}) {
    const auto m = DiscreteSCM::load(testing_support::data_path(std::string("scm/") + name + ".json"));
    const auto p = ExactDistribution::from_scm(m);
    for (const auto& pair : enumerate_minimal_pairs(m.graph())) {
      const double truth = exact_s_formula(p, pair);
      const Dataset d = population_dataset(p, pair);
      const auto st = NuisanceStrategy::saturated();
      EstimatorOptions opt;
      opt.bootstrap = 0;
      EXPECT_NEAR(estimate_tsr(d, st, opt).psi, truth, 1e-8) << name << pair.str();
      EXPECT_NEAR(estimate_dipw(d, st, opt).psi, truth, 1e-8) << name << pair.str();
      EXPECT_NEAR(estimate_sr(d, st, opt).psi, truth, 1e-8) << name << pair.str();
      if (!pair.z.empty()) {
        EXPECT_NEAR(estimate_cd_discrete(d, st, opt).psi, truth, 1e-8) << name << pair.str();
      }
      EXPECT_NEAR(truth, exact_ate(m), 1e-10);
    }
  }
}

TEST(OracleNuisances, SrEqualsCdOnSaturatedSample) {
  // a finite sample from the toy model: both reduce to the empirical formula
  const auto m = DiscreteSCM::load(testing_support::data_path("scm/fig3a.json"));
  Rng rng(10);
  Table t;
  std::vector<std::vector<double>> cols(6);
  const std::vector<std::string> names{"W1", "A", "Z1", "Z2", "R", "Y"};
  std::vector<double> cum;
  std::vector<std::vector<int>> states;
  double acc = 0.0;
  m.enumerate([&](const std::vector<int>& s, double pr) {
    acc += pr;
    cum.push_back(acc);
    states.push_back(s);
  });
  for (int i = 0; i < 3000; ++i) {
    const double u = rng.uniform() * acc;
    const auto k = static_cast<std::size_t>(std::lower_bound(cum.begin(), cum.end(), u) - cum.begin());
    const auto& s = states[std::min(k, states.size() - 1)];
    for (std::size_t j = 0; j < names.size(); ++j) {
      const auto v = m.index_of(names[j]);
      double val = m.variable(v).values[static_cast<std::size_t>(s[v])];
      if (names[j] == "Y" && s[m.index_of("R")] == 0) val = kMissing;
      cols[j].push_back(val);
    }
  }
  for (std::size_t j = 0; j < names.size(); ++j) t.add(names[j], cols[j]);
  const Dataset d = bind(t, {{"W1"}, {"Z1", "Z2"}});
  EstimatorOptions opt;
  opt.bootstrap = 0;
  const auto st = NuisanceStrategy::saturated();
  EXPECT_NEAR(estimate_sr(d, st, opt).psi, estimate_cd_discrete(d, st, opt).psi, 1e-8);
}

TEST(Dipw, HorvitzThompsonCollapse) {
  // balanced arms, nothing missing, constant propensities
  Table t;
  std::vector<double> a, y, r, w;
  Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    a.push_back(i % 2);
    y.push_back(rng.normal(1.0 + a.back(), 1.0));
    r.push_back(1.0);
    w.push_back(rng.normal());
  }
  t.add("W", w);
  t.add("A", a);
  t.add("R", r);
  t.add("Y", y);
  const Dataset d = bind(t, {{"W"}, {}});
  NuisanceStrategy st;
  st.pi_a = st.pi_r = st.q1 = st.q2 = saturated_fitter([](const Frame& f) { return Eigen::MatrixXd(f.rows(), 0); });
  EstimatorOptions opt;
  opt.truncation = 1e-12;
  double m1 = 0, m0 = 0;
  for (int i = 0; i < 200; ++i) (a[static_cast<std::size_t>(i)] == 1 ? m1 : m0) += y[static_cast<std::size_t>(i)] / 0.5;
  EXPECT_NEAR(estimate_dipw(d, st, opt).psi, (m1 - m0) / 200.0, 1e-9);
}

TEST(Sr, LinearQ1WithBalancedZMatchesCd) {
  // full factorial in (W, A, Z) so Z is empirically independent of (W, A)
  Table t;
  std::vector<double> w, a, z, r, y;
  Rng rng(12);
  for (int rep = 0; rep < 25; ++rep)
    for (int wi = 0; wi < 2; ++wi)
      for (int ai = 0; ai < 2; ++ai)
        for (int zi = 0; zi < 2; ++zi) {
          w.push_back(wi);
          a.push_back(ai);
          z.push_back(zi);
          r.push_back(1.0);
          y.push_back(0.5 + wi + 2.0 * ai - zi + rng.normal());
        }
  t.add("W", w);
  t.add("A", a);
  t.add("Z", z);
  t.add("R", r);
  t.add("Y", y);
  const Dataset d = bind(t, {{"W"}, {"Z"}});
  EstimatorOptions opt;
  opt.bootstrap = 0;
  EXPECT_NEAR(estimate_sr(d, linear_strategy(), opt).psi, estimate_cd_discrete(d, linear_strategy(), opt).psi, 1e-8);
}

TEST(Cd, RejectsContinuousZ) {
  const auto d = setup1_sample(300, 13);
  EstimatorOptions opt;
  EXPECT_THROW(estimate_cd_discrete(d, linear_strategy(), opt), EstimationError);
  const auto d0 = setup1_sample(300, 13, {{"W1"}, {}});
  EXPECT_THROW(estimate_cd_discrete(d0, linear_strategy(), opt), EstimationError);
}

TEST(Sr, BootstrapInterval) {
  const auto d = setup1_sample(300, 14);
  EstimatorOptions opt;
  opt.bootstrap = 20;
  opt.seed = 14;
  const auto rep = estimate_sr(d, linear_strategy(), opt);
  EXPECT_LE(rep.ci_lo, rep.ci_hi);
  EXPECT_GE(rep.se, 0.0);
  EXPECT_EQ(*rep.diagnostic("bootstrap_replicates"), 20.0);
  const auto again = estimate_sr(d, linear_strategy(), opt);
  EXPECT_EQ(rep.ci_lo, again.ci_lo);
}

TEST(SingleRegression, CoincideWithoutMissingness) {
  auto d = setup1_sample(500, 15, {{"W1"}, {}});
  Rng rng(15);
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    d.r[i] = 1.0;
    if (is_missing(d.y[i])) d.y[i] = rng.normal();
  }
  EstimatorOptions opt;
  const auto a = estimate_tmle_1r(d, linear_strategy(), opt), b = estimate_tmle_cc(d, linear_strategy(), opt);
  EXPECT_NEAR(a.psi, b.psi, 1e-8);
  EXPECT_GE(a.se, 0.0);
  EXPECT_GE(b.se, 0.0);
}

TEST(Unadjusted, IsADifferenceOfSelectedMeans) {
  const auto d = setup1_sample(400, 16, {{"W1"}, {}});
  double s[2] = {0, 0}, c[2] = {0, 0};
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    if (d.r[i] != 1.0) continue;
    const int a = static_cast<int>(d.x.a[i]);
    s[a] += d.y[i];
    c[a] += 1;
  }
  EXPECT_NEAR(estimate_unadjusted(d).psi, s[1] / c[1] - s[0] / c[0], 1e-12);
}
