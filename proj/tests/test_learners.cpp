#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>

#include "seqadj/core/random.hpp"
#include "seqadj/learners.hpp"

using namespace seqadj;

namespace {

Eigen::MatrixXd column(std::initializer_list<double> v) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index i = 0;
  for (double e : v) x(i++, 0) = e;
  return x;
}

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd y(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double e : v) y[i++] = e;
  return y;
}

double mse(const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return (a - b).squaredNorm() / static_cast<double>(a.size()); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace

TEST(FitMean, Examples) {
  EXPECT_DOUBLE_EQ(fit_mean({column({0, 0, 0}), vec({1, 2, 3})}).predict(column({9}))[0], 2.0);
  EXPECT_DOUBLE_EQ(fit_mean({column({0}), vec({5})}).predict(column({1}))[0], 5.0);
  EXPECT_DOUBLE_EQ(fit_mean({column({0, 0, 0}), vec({7, 1, 1}), vec({1, 0, 0})}).predict(column({0}))[0], 7.0);
  EXPECT_THROW(fit_mean({Eigen::MatrixXd(0, 1), Eigen::VectorXd(0)}), LearnerError);
}

TEST(FitLinear, ExactLine) {
  const auto m = fit_linear({column({0, 1, 2, 3, 4}), vec({1, 3, 5, 7, 9})});
  EXPECT_NEAR(m.coefficients()[0], 1.0, 1e-10);
  EXPECT_NEAR(m.coefficients()[1], 2.0, 1e-10);
  EXPECT_FALSE(m.ridge_fallback());
}

TEST(FitLinear, DuplicatedColumnFallsBackToRidge) {
  Rng rng(3);
  Eigen::MatrixXd x(30, 2);
  Eigen::VectorXd y(30);
  for (Eigen::Index i = 0; i < 30; ++i) {
    x(i, 0) = rng.normal();
    x(i, 1) = x(i, 0);
    y[i] = 1.0 + 2.0 * x(i, 0) + 0.1 * rng.normal();
  }
  const auto m = fit_linear({x, y});
  EXPECT_TRUE(m.ridge_fallback());
  EXPECT_FALSE(m.warnings().empty());
  // OLS projection on the single distinct column
  const auto ols = fit_linear({x.leftCols(1), y});
  EXPECT_LT((m.predict(x) - ols.predict(x.leftCols(1))).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(FitLinear, MatchesPseudoInverseAndNormalEquations) {
  Rng rng(4);
  Eigen::MatrixXd x(50, 3);
  Eigen::VectorXd y(50), w(50);
  for (Eigen::Index i = 0; i < 50; ++i) {
    for (Eigen::Index j = 0; j < 3; ++j) x(i, j) = rng.normal();
    y[i] = 0.5 - x(i, 0) + 2.0 * x(i, 2) + rng.normal();
    w[i] = 0.5 + rng.uniform();
  }
  Eigen::MatrixXd xd(50, 4);
  xd << Eigen::VectorXd::Ones(50), x;
  const Eigen::MatrixXd pinv = xd.completeOrthogonalDecomposition().pseudoInverse();
  const Eigen::VectorXd beta = pinv * y;
  const auto m = fit_linear({x, y});
  EXPECT_LT((m.coefficients() - beta).cwiseAbs().maxCoeff(), 1e-8);

  const auto mw = fit_linear({x, y, w});
  const Eigen::VectorXd resid = y - mw.predict(x);
  EXPECT_LT((xd.transpose() * w.asDiagonal() * resid).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(FitLogistic, InterceptOnly) {
  const auto m = fit_logistic({column({0, 0, 0, 0}), vec({0, 1, 0, 1})});
  EXPECT_NEAR(m.predict(column({0}))[0], 0.5, 1e-12);
  EXPECT_THROW(fit_logistic({column({0, 1}), vec({0, 2})}), LearnerError);
}

TEST(FitLogistic, SeparatedDataStaysFinite) {
  const auto m = fit_logistic({column({-3, -2, -1, 1, 2, 3}), vec({0, 0, 0, 1, 1, 1})});
  EXPECT_TRUE(m.ridge_fallback());
  EXPECT_TRUE(m.coefficients().allFinite());
  const auto p = m.predict(column({-10, -1, 1, 10}));
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    EXPECT_GT(p[i], 0.0);
    EXPECT_LT(p[i], 1.0);
  }
  EXPECT_LT(p[1], 0.5);
  EXPECT_GT(p[2], 0.5);
}

TEST(FitLogistic, RecoversProbitProbabilities) {
  Rng rng(5);
  const Eigen::Index n = 200;
  Eigen::MatrixXd x(n, 2);
  Eigen::VectorXd y(n), truth(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    x(i, 0) = rng.normal();
    x(i, 1) = rng.normal();
    truth[i] = normal_cdf(0.3 + 0.8 * x(i, 0) - 0.6 * x(i, 1));
    y[i] = rng.uniform() < truth[i] ? 1.0 : 0.0;
  }
  const auto p = fit_logistic({x, y}).predict(x);
  const Eigen::ArrayXd a = p.array() - p.mean(), b = truth.array() - truth.mean();
  EXPECT_GT((a * b).sum() / std::sqrt((a * a).sum() * (b * b).sum()), 0.9);
}

TEST(FitMarsLite, AbsoluteValue) {
  Eigen::MatrixXd x(41, 1);
  Eigen::VectorXd y(41);
  for (Eigen::Index i = 0; i < 41; ++i) {
    x(i, 0) = -2.0 + 0.1 * static_cast<double>(i);
    y[i] = std::abs(x(i, 0));
  }
  MarsOptions opt;
  opt.max_terms = 4;
  const auto m = fit_mars_lite({x, y}, opt);
  const double var = (y.array() - y.mean()).square().mean();
  EXPECT_LT(mse(m.predict(x), y), 0.01 * var);
  EXPECT_LE(static_cast<int>(m.basis().size()), 4);
}

TEST(FitMarsLite, ConstantResponse) {
  const auto m = fit_mars_lite({column({1, 2, 3, 4, 5}), vec({3, 3, 3, 3, 3})});
  EXPECT_TRUE(m.basis().empty());
  EXPECT_NEAR(m.predict(column({10}))[0], 3.0, 1e-12);
}

TEST(FitMarsLite, NestsLinearFit) {
  Rng rng(6);
  Eigen::MatrixXd x(60, 1);
  Eigen::VectorXd y(60);
  for (Eigen::Index i = 0; i < 60; ++i) {
    x(i, 0) = rng.normal();
    y[i] = 2.0 * x(i, 0) + 0.3 * rng.normal();
  }
  const auto lin = fit_linear({x, y}), mars = fit_mars_lite({x, y});
  EXPECT_LE(mse(mars.predict(x), y), mse(lin.predict(x), y) + 1e-6);
}

TEST(FitMarsLite, LogitRefitStaysInUnitInterval) {
  Rng rng(7);
  Eigen::MatrixXd x(300, 1);
  Eigen::VectorXd y(300);
  for (Eigen::Index i = 0; i < 300; ++i) {
    x(i, 0) = rng.normal();
    y[i] = rng.uniform() < 1.0 / (1.0 + std::exp(-2.0 * std::abs(x(i, 0)) + 1.0)) ? 1.0 : 0.0;
  }
  MarsOptions opt;
  opt.logit = true;
  const auto p = fit_mars_lite({x, y}, opt).predict(x);
  EXPECT_GT(p.minCoeff(), 0.0);
  EXPECT_LT(p.maxCoeff(), 1.0);
}

TEST(Folds, DeterministicAndBalanced) {
  const auto a = assign_folds(23, 5, 9), b = assign_folds(23, 5, 9);
  EXPECT_EQ(a, b);
  std::vector<int> count(5, 0);
  for (int f : a) ++count[static_cast<std::size_t>(f)];
  for (int c : count) EXPECT_TRUE(c == 4 || c == 5);
  EXPECT_NE(assign_folds(23, 5, 10), a);
}

TEST(ProjectSimplex, Basic) {
  const auto p = project_simplex(vec({0.5, 2.0, -1.0}));
  EXPECT_NEAR(p.sum(), 1.0, 1e-15);
  EXPECT_NEAR(p[1], 1.0, 1e-15);
  const auto q = project_simplex(vec({0.2, 0.3, 0.5}));
  EXPECT_NEAR((q - vec({0.2, 0.3, 0.5})).norm(), 0.0, 1e-15);
}

TEST(SuperLearner, SingleLearnerGetsAllWeight) {
  Rng rng(8);
  Eigen::MatrixXd x(40, 1);
  Eigen::VectorXd y(40);
  for (Eigen::Index i = 0; i < 40; ++i) x(i, 0) = rng.normal(), y[i] = rng.normal();
  SuperLearnerSpec spec;
  spec.battery = {LearnerKind::mean};
  const auto m = fit_super_learner({x, y}, spec);
  ASSERT_EQ(m.ensemble_weights().size(), 1);
  EXPECT_DOUBLE_EQ(m.ensemble_weights()[0], 1.0);
}

TEST(SuperLearner, PrefersTheRightModel) {
  Rng rng(9);
  Eigen::MatrixXd x(200, 2);
  Eigen::VectorXd y(200);
  for (Eigen::Index i = 0; i < 200; ++i) {
    x(i, 0) = rng.normal();
    x(i, 1) = rng.normal();
    y[i] = 1.0 + 3.0 * x(i, 0) - x(i, 1) + 0.5 * rng.normal();
  }
  SuperLearnerSpec spec;
  spec.battery = {LearnerKind::mean, LearnerKind::linear};
  const auto m = fit_super_learner({x, y}, spec);
  EXPECT_GE(m.ensemble_weights()[1], 0.9);
}

TEST(SuperLearner, WeightsOnSimplexAndCvOptimal) {
  Rng rng(10);
  for (int rep = 0; rep < 50; ++rep) {
    const Eigen::Index n = 30 + static_cast<Eigen::Index>(rng.below(60));
    Eigen::MatrixXd x(n, 2);
    Eigen::VectorXd y(n);
    const bool binary = rep % 2 == 1;
    for (Eigen::Index i = 0; i < n; ++i) {
      x(i, 0) = rng.normal();
      x(i, 1) = rng.uniform();
      const double f = std::sin(2.0 * x(i, 0)) + x(i, 1);
      y[i] = binary ? (rng.uniform() < 1.0 / (1.0 + std::exp(-f)) ? 1.0 : 0.0) : f + 0.5 * rng.normal();
    }
    auto spec = binary ? SuperLearnerSpec::classification(static_cast<std::uint64_t>(rep))
                       : SuperLearnerSpec::regression(static_cast<std::uint64_t>(rep));
    const auto m = fit_super_learner({x, y}, spec);
    const auto& w = m.ensemble_weights();
    EXPECT_NEAR(w.sum(), 1.0, 1e-12);
    EXPECT_GE(w.minCoeff(), 0.0);
    for (Eigen::Index k = 0; k < m.cv_risk().size(); ++k) EXPECT_LE(m.ensemble_cv_risk(), m.cv_risk()[k] + 1e-10);
    const auto p1 = m.predict(x), p2 = m.predict(x);
    EXPECT_EQ(p1, p2);
    if (binary) {
      EXPECT_GT(p1.minCoeff(), 0.0);
      EXPECT_LT(p1.maxCoeff(), 1.0);
    }
  }
}

TEST(SuperLearner, RejectsBadSpecs) {
  SuperLearnerSpec spec;
  spec.folds = 1;
  EXPECT_THROW(fit_super_learner({column({1, 2, 3}), vec({1, 2, 3})}, spec), LearnerError);
  spec.folds = 5;
  EXPECT_THROW(fit_super_learner({column({1, 2, 3}), vec({1, 2, 3})}, spec), LearnerError);
  spec.battery.clear();
  EXPECT_THROW(fit_super_learner({column({1, 2, 3, 4, 5}), vec({1, 2, 3, 4, 5})}, spec), LearnerError);
}
