#pragma once

// Regression learners used for every nuisance fit, and a cross-validated
// convex stacking ensemble over them.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "core/random.hpp"
#include "core/stats.hpp"

namespace seqadj {

class LearnerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class LearnerKind { mean, linear, logistic, mars_lite, ensemble };

inline std::string to_string(LearnerKind k) {
  switch (k) {
    case LearnerKind::mean: return "mean";
    case LearnerKind::linear: return "linear";
    case LearnerKind::logistic: return "logistic";
    case LearnerKind::mars_lite: return "mars_lite";
    case LearnerKind::ensemble: return "ensemble";
  }
  return "?";
}

enum class Loss { squared_error, log_loss };

/// Feature matrix (no intercept column), response and optional weights.
struct DesignMatrix {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  Eigen::VectorXd weights;  // empty means unit weights
  std::vector<std::string> names;

  DesignMatrix() = default;
  DesignMatrix(Eigen::MatrixXd x_, Eigen::VectorXd y_, Eigen::VectorXd w_ = {}) : x(std::move(x_)), y(std::move(y_)), weights(std::move(w_)) {}

  Eigen::Index rows() const { return y.size(); }
  Eigen::Index cols() const { return x.cols(); }
  Eigen::VectorXd w() const { return weights.size() ? weights : Eigen::VectorXd::Ones(rows()); }

  void validate() const {
    if (rows() < 1) throw LearnerError("empty data");
    if (x.rows() != y.size()) throw LearnerError("feature/response row mismatch");
    if (weights.size() && weights.size() != y.size()) throw LearnerError("weight length mismatch");
    if (!x.allFinite() || !y.allFinite()) throw LearnerError("missing or non-finite values in fit data");
    if (weights.size()) {
      if ((weights.array() < 0.0).any()) throw LearnerError("negative weights");
      if (weights.sum() <= 0.0) throw LearnerError("weights sum to zero");
    }
  }

  DesignMatrix subset(const std::vector<Eigen::Index>& rows_) const {
    DesignMatrix d;
    d.x = x(rows_, Eigen::all);
    d.y = y(rows_);
    if (weights.size()) d.weights = weights(rows_);
    d.names = names;
    return d;
  }
};

/// One hinge factor max(0, sign * (x_j - knot)); sign 0 means the raw x_j.
struct Hinge {
  Eigen::Index feature = 0;
  double knot = 0.0;
  int sign = 0;

  double eval(double v) const {
    if (sign == 0) return v;
    return std::max(0.0, sign * (v - knot));
  }
  Eigen::ArrayXd column(const Eigen::MatrixXd& x) const {
    if (sign == 0) return x.col(feature).array();
    return (sign * (x.col(feature).array() - knot)).max(0.0);
  }
};

/// Product of one or two hinge factors.
struct BasisTerm {
  std::vector<Hinge> factors;

  Eigen::VectorXd column(const Eigen::MatrixXd& x) const {
    Eigen::ArrayXd p = Eigen::ArrayXd::Ones(x.rows());
    for (const auto& h : factors) p *= h.column(x);
    return p.matrix();
  }
};

namespace detail {

inline double logistic(double eta) {
  eta = std::clamp(eta, -30.0, 30.0);
  return 1.0 / (1.0 + std::exp(-eta));
}

inline Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd out(x.rows(), x.cols() + 1);
  out.col(0).setOnes();
  out.rightCols(x.cols()) = x;
  return out;
}

}  // namespace detail

class FittedModel {
 public:
  LearnerKind kind() const noexcept { return kind_; }
  bool logit_link() const noexcept { return logit_; }
  Eigen::Index n_features() const noexcept { return n_features_; }
  const Eigen::VectorXd& coefficients() const noexcept { return coef_; }
  const std::vector<BasisTerm>& basis() const noexcept { return basis_; }
  const std::vector<FittedModel>& members() const noexcept { return members_; }
  const Eigen::VectorXd& ensemble_weights() const noexcept { return ens_weights_; }
  const std::vector<std::string>& warnings() const noexcept { return warnings_; }
  bool ridge_fallback() const noexcept { return ridge_; }
  const Eigen::VectorXd& cv_risk() const noexcept { return cv_risk_; }
  double ensemble_cv_risk() const noexcept { return ens_cv_risk_; }

  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const {
    if (x.cols() != n_features_)
      throw LearnerError("predict expects " + std::to_string(n_features_) + " features, got " +
                         std::to_string(x.cols()));
    Eigen::VectorXd eta;
    switch (kind_) {
      case LearnerKind::mean: return Eigen::VectorXd::Constant(x.rows(), coef_[0]);
      case LearnerKind::linear:
      case LearnerKind::logistic: eta = detail::with_intercept(x) * coef_; break;
      case LearnerKind::mars_lite: eta = basis_matrix(basis_, x) * coef_; break;
      case LearnerKind::ensemble: {
        Eigen::VectorXd out = Eigen::VectorXd::Zero(x.rows());
        for (std::size_t k = 0; k < members_.size(); ++k)
          if (ens_weights_[static_cast<Eigen::Index>(k)] > 0.0)
            out += ens_weights_[static_cast<Eigen::Index>(k)] * members_[k].predict(x);
        return out;
      }
    }
    if (logit_) eta = eta.unaryExpr([](double e) { return detail::logistic(e); });
    return eta;
  }

  /// Design matrix of a basis expansion, intercept column first.
  static Eigen::MatrixXd basis_matrix(const std::vector<BasisTerm>& basis, const Eigen::MatrixXd& x) {
    Eigen::MatrixXd b(x.rows(), static_cast<Eigen::Index>(basis.size()) + 1);
    b.col(0).setOnes();
    for (std::size_t t = 0; t < basis.size(); ++t) b.col(static_cast<Eigen::Index>(t) + 1) = basis[t].column(x);
    return b;
  }

 private:
  friend FittedModel fit_mean(const DesignMatrix&);
  friend FittedModel fit_linear(const DesignMatrix&);
  friend FittedModel fit_logistic(const DesignMatrix&);
  friend struct MarsOptions;
  friend FittedModel fit_mars_lite(const DesignMatrix&, const struct MarsOptions&);
  friend FittedModel fit_super_learner(const DesignMatrix&, const struct SuperLearnerSpec&);

  LearnerKind kind_ = LearnerKind::mean;
  bool logit_ = false;
  bool ridge_ = false;
  Eigen::Index n_features_ = 0;
  Eigen::VectorXd coef_;
  std::vector<BasisTerm> basis_;
  std::vector<FittedModel> members_;
  Eigen::VectorXd ens_weights_;
  Eigen::VectorXd cv_risk_;
  double ens_cv_risk_ = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::string> warnings_;
};

inline FittedModel fit_mean(const DesignMatrix& d) {
  d.validate();
  FittedModel m;
  m.kind_ = LearnerKind::mean;
  m.n_features_ = d.cols();
  m.coef_ = Eigen::VectorXd::Constant(1, weighted_mean(d.y, d.w()));
  return m;
}

namespace detail {

struct LsSolution {
  Eigen::VectorXd coef;
  bool ridge = false;
};

/// Weighted least squares on a design that already holds its intercept.
/// Rank deficiency switches to a ridge penalty of 1e-8 * trace(X'WX) / p.
inline LsSolution weighted_ls(const Eigen::MatrixXd& xd, const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
  const Eigen::VectorXd sw = w.cwiseSqrt();
  const Eigen::MatrixXd xs = sw.asDiagonal() * xd;
  const Eigen::VectorXd ys = sw.cwiseProduct(y);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xs);
  qr.setThreshold(1e-10);
  if (qr.rank() == xd.cols()) return {qr.solve(ys), false};
  const Eigen::MatrixXd gram = xs.transpose() * xs;
  const double lambda = 1e-8 * gram.trace() / static_cast<double>(xd.cols());
  Eigen::MatrixXd pen = gram;
  pen.diagonal().array() += lambda;
  return {pen.ldlt().solve(xs.transpose() * ys), true};
}

}  // namespace detail

inline FittedModel fit_linear(const DesignMatrix& d) {
  d.validate();
  FittedModel m;
  m.kind_ = LearnerKind::linear;
  m.n_features_ = d.cols();
  auto sol = detail::weighted_ls(detail::with_intercept(d.x), d.y, d.w());
  m.coef_ = std::move(sol.coef);
  m.ridge_ = sol.ridge;
  if (sol.ridge) m.warnings_.push_back("rank-deficient design: ridge fallback");
  return m;
}

namespace detail {

struct IrlsResult {
  Eigen::VectorXd beta;
  bool converged = false;
};

/// Newton-Raphson / IRLS for the (optionally ridge-penalised) Bernoulli
/// log-likelihood, with step halving on deviance increase.
inline IrlsResult irls(const Eigen::MatrixXd& xd, const Eigen::VectorXd& y, const Eigen::VectorXd& w, double ridge) {
  const Eigen::Index p = xd.cols();
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  const double ybar = std::clamp(weighted_mean(y, w), 1e-6, 1.0 - 1e-6);
  beta[0] = std::log(ybar / (1.0 - ybar));

  auto objective = [&](const Eigen::VectorXd& b) {
    const Eigen::VectorXd eta = xd * b;
    CompensatedSum nll;
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      // log(1 + e^eta) - y * eta, computed stably
      const double e = eta[i];
      const double soft = e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
      nll.add(w[i] * (soft - y[i] * e));
    }
    return nll.value() + 0.5 * ridge * b.squaredNorm();
  };

  double obj = objective(beta);
  for (int iter = 0; iter < 100; ++iter) {
    const Eigen::VectorXd eta = xd * beta;
    Eigen::VectorXd mu(eta.size()), vw(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      const double e = std::clamp(eta[i], -500.0, 500.0);
      mu[i] = 1.0 / (1.0 + std::exp(-e));
      vw[i] = w[i] * std::max(mu[i] * (1.0 - mu[i]), 1e-300);
    }
    const Eigen::VectorXd score = xd.transpose() * (w.cwiseProduct(y - mu)) - ridge * beta;
    if (score.cwiseAbs().maxCoeff() < 1e-8) return {beta, true};
    Eigen::MatrixXd info = xd.transpose() * vw.asDiagonal() * xd;
    info.diagonal().array() += ridge;
    Eigen::VectorXd step = info.ldlt().solve(score);
    if (!step.allFinite()) return {beta, false};
    double t = 1.0;
    for (int half = 0; half < 30; ++half, t *= 0.5) {
      const Eigen::VectorXd cand = beta + t * step;
      const double c = objective(cand);
      if (c <= obj + 1e-12 * std::abs(obj)) {
        beta = cand;
        obj = c;
        break;
      }
    }
    if (t < 1e-8) return {beta, false};
  }
  return {beta, false};
}

}  // namespace detail

/// Logistic regression by IRLS. Separation (non-convergence or fitted
/// linear predictors beyond +/-30) triggers a ridge penalty of 1e-6.
inline FittedModel fit_logistic(const DesignMatrix& d) {
  d.validate();
  for (Eigen::Index i = 0; i < d.rows(); ++i)
    if (d.y[i] != 0.0 && d.y[i] != 1.0) throw LearnerError("logistic response must be binary 0/1");
  FittedModel m;
  m.kind_ = LearnerKind::logistic;
  m.logit_ = true;
  m.n_features_ = d.cols();
  const Eigen::MatrixXd xd = detail::with_intercept(d.x);
  const Eigen::VectorXd w = d.w();
  auto res = detail::irls(xd, d.y, w, 0.0);
  const bool separated = !res.converged || (xd * res.beta).cwiseAbs().maxCoeff() > 30.0;
  if (separated) {
    res = detail::irls(xd, d.y, w, 1e-6);
    m.ridge_ = true;
    m.warnings_.push_back("quasi-separation: ridge-penalised fit");
  }
  m.coef_ = res.beta;
  return m;
}

struct MarsOptions {
  int max_terms = 10;          // basis functions besides the intercept
  bool linear_terms = true;    // raw features offered as candidates
  bool interactions = false;   // degree-2 products with existing terms
  bool logit = false;          // refit the selected basis by logistic regression
  double min_improvement = 1e-6;
};

/// Greedy forward selection of hinge pairs max(0, x - t), max(0, t - x) with
/// knots at the 10%..90% sample deciles, least-squares refit after each step.
inline FittedModel fit_mars_lite(const DesignMatrix& d, const MarsOptions& opt = {}) {
  d.validate();
  const Eigen::Index n = d.rows(), p = d.cols();
  const Eigen::VectorXd w = d.w();
  const Eigen::VectorXd sw = w.cwiseSqrt();
  const double wsum = w.sum();
  const double tiny = 1e-10 * static_cast<double>(n);

  // Work in the sqrt(w)-scaled space: q holds an orthonormal basis of the
  // selected columns, r the current residual, and cols every candidate
  // column already orthogonalised against q.
  std::vector<Eigen::VectorXd> q{sw / sw.norm()};
  Eigen::VectorXd r = sw.cwiseProduct(d.y);
  r -= q[0].dot(r) * q[0];

  struct Candidate {
    std::vector<BasisTerm> terms;
    std::array<Eigen::Index, 2> col{-1, -1};
    bool used = false;
  };
  std::vector<Candidate> cands;
  std::vector<Eigen::VectorXd> pending;
  auto add_candidate = [&](std::vector<BasisTerm> terms) {
    Candidate c;
    for (std::size_t t = 0; t < terms.size(); ++t) {
      Eigen::VectorXd v = sw.cwiseProduct(terms[t].column(d.x));
      for (int pass = 0; pass < 2; ++pass)
        for (const auto& qk : q) v -= qk.dot(v) * qk;
      c.col[t] = -2 - static_cast<Eigen::Index>(pending.size());  // resolved when packed
      pending.push_back(std::move(v));
    }
    c.terms = std::move(terms);
    cands.push_back(std::move(c));
  };
  Eigen::MatrixXd cols(n, 0);
  auto pack = [&] {
    if (pending.empty()) return;
    const Eigen::Index base = cols.cols();
    cols.conservativeResize(n, base + static_cast<Eigen::Index>(pending.size()));
    for (std::size_t k = 0; k < pending.size(); ++k) cols.col(base + static_cast<Eigen::Index>(k)) = pending[k];
    for (auto& c : cands)
      for (auto& ci : c.col)
        if (ci <= -2) ci = base + (-2 - ci);
    pending.clear();
  };

  std::vector<std::vector<double>> knots(static_cast<std::size_t>(p));
  for (Eigen::Index j = 0; j < p; ++j) {
    std::vector<double> col(d.x.col(j).data(), d.x.col(j).data() + n);
    std::sort(col.begin(), col.end());
    std::vector<double> ks;
    for (int k = 1; k <= 9; ++k) ks.push_back(sorted_quantile(col, k / 10.0));
    ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
    knots[static_cast<std::size_t>(j)] = ks;
    if (opt.linear_terms) add_candidate({BasisTerm{{Hinge{j, 0.0, 0}}}});
    for (double t : ks) add_candidate({BasisTerm{{Hinge{j, t, +1}}}, BasisTerm{{Hinge{j, t, -1}}}});
  }
  pack();

  std::vector<BasisTerm> chosen;
  double mse = r.squaredNorm() / wsum;
  while (static_cast<int>(chosen.size()) < opt.max_terms) {
    const Eigen::VectorXd u = cols.transpose() * r;
    const Eigen::VectorXd nn = cols.colwise().squaredNorm().transpose();
    double best_gain = 0.0;
    std::size_t best = cands.size();
    for (std::size_t c = 0; c < cands.size(); ++c) {
      const auto& cd = cands[c];
      if (cd.used) continue;
      double gain = 0.0;
      const Eigen::Index i0 = cd.col[0], i1 = cd.col[1];
      if (i1 < 0) {
        if (nn[i0] > tiny) gain = u[i0] * u[i0] / nn[i0];
      } else {
        if (static_cast<int>(chosen.size()) + 2 > opt.max_terms) continue;
        const double a = nn[i0], cc = nn[i1], b = cols.col(i0).dot(cols.col(i1));
        const double det = a * cc - b * b;
        if (det > tiny * std::max(a, cc)) {
          gain = (cc * u[i0] * u[i0] - 2.0 * b * u[i0] * u[i1] + a * u[i1] * u[i1]) / det;
        } else if (std::max(a, cc) > tiny) {
          gain = a >= cc ? u[i0] * u[i0] / a : u[i1] * u[i1] / cc;
        }
      }
      if (gain > best_gain) {
        best_gain = gain;
        best = c;
      }
    }
    if (best == cands.size() || best_gain / wsum < opt.min_improvement) break;

    Candidate& pick = cands[best];
    pick.used = true;
    std::vector<BasisTerm> added;
    for (std::size_t t = 0; t < pick.terms.size(); ++t) {
      Eigen::VectorXd v = cols.col(pick.col[t]);
      for (const auto& qk : q) v -= qk.dot(v) * qk;
      const double nv = v.norm();
      if (nv * nv <= tiny) continue;
      v /= nv;
      cols -= v * (v.transpose() * cols);
      r -= v.dot(r) * v;
      q.push_back(std::move(v));
      chosen.push_back(pick.terms[t]);
      added.push_back(pick.terms[t]);
    }
    if (opt.interactions) {
      for (const auto& parent : added) {
        if (parent.factors.size() != 1) continue;
        for (Eigen::Index j = 0; j < p; ++j) {
          if (j == parent.factors[0].feature) continue;
          for (double t : knots[static_cast<std::size_t>(j)]) {
            BasisTerm up = parent, dn = parent;
            up.factors.push_back(Hinge{j, t, +1});
            dn.factors.push_back(Hinge{j, t, -1});
            add_candidate({up, dn});
          }
        }
      }
      pack();
    }
    const double new_mse = r.squaredNorm() / wsum;
    const double improvement = mse - new_mse;
    mse = new_mse;
    if (improvement < opt.min_improvement) break;
  }

  FittedModel m;
  m.kind_ = LearnerKind::mars_lite;
  m.n_features_ = p;
  m.basis_ = chosen;
  const Eigen::MatrixXd bm = FittedModel::basis_matrix(chosen, d.x);
  if (opt.logit) {
    m.logit_ = true;
    auto res = detail::irls(bm, d.y, w, 0.0);
    if (!res.converged || (bm * res.beta).cwiseAbs().maxCoeff() > 30.0) {
      res = detail::irls(bm, d.y, w, 1e-6);
      m.ridge_ = true;
    }
    m.coef_ = res.beta;
  } else {
    auto sol = detail::weighted_ls(bm, d.y, w);
    m.coef_ = sol.coef;
    m.ridge_ = sol.ridge;
  }
  return m;
}

struct SuperLearnerSpec {
  std::vector<LearnerKind> battery{LearnerKind::mean, LearnerKind::linear, LearnerKind::mars_lite};
  int folds = 5;
  Loss loss = Loss::squared_error;
  std::uint64_t seed = 1;
  MarsOptions mars{};

  static SuperLearnerSpec regression(std::uint64_t seed = 1) {
    SuperLearnerSpec s;
    s.seed = seed;
    return s;
  }
  static SuperLearnerSpec classification(std::uint64_t seed = 1) {
    SuperLearnerSpec s;
    s.battery = {LearnerKind::mean, LearnerKind::logistic, LearnerKind::mars_lite};
    s.loss = Loss::log_loss;
    s.seed = seed;
    return s;
  }
};

/// Shuffle 0..n-1 with `seed`, then deal round-robin into k folds.
inline std::vector<int> assign_folds(Eigen::Index n, int k, std::uint64_t seed) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<int> fold(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < order.size(); ++i) fold[static_cast<std::size_t>(order[i])] = static_cast<int>(i % k);
  return fold;
}

/// Euclidean projection onto the probability simplex.
inline Eigen::VectorXd project_simplex(const Eigen::VectorXd& v) {
  std::vector<double> u(v.data(), v.data() + v.size());
  std::sort(u.begin(), u.end(), std::greater<>());
  double css = 0.0, theta = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    css += u[j];
    const double t = (css - 1.0) / static_cast<double>(j + 1);
    if (u[j] - t > 0.0) theta = t;
  }
  return (v.array() - theta).cwiseMax(0.0);
}

namespace detail {

inline FittedModel fit_kind(LearnerKind kind, const DesignMatrix& d, const SuperLearnerSpec& spec) {
  switch (kind) {
    case LearnerKind::mean: return fit_mean(d);
    case LearnerKind::linear: return fit_linear(d);
    case LearnerKind::logistic: return fit_logistic(d);
    case LearnerKind::mars_lite: {
      MarsOptions mo = spec.mars;
      mo.logit = spec.loss == Loss::log_loss;
      return fit_mars_lite(d, mo);
    }
    case LearnerKind::ensemble: break;
  }
  throw LearnerError("ensemble cannot be a battery member");
}

/// Minimise 0.5 x'Hx + c'x over the simplex by projected gradient descent
/// with step 1/L, started at x0.
inline Eigen::VectorXd simplex_qp(const Eigen::MatrixXd& hess, const Eigen::VectorXd& c, Eigen::VectorXd x) {
  const double lip = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(hess).eigenvalues().maxCoeff();
  if (!(lip > 0.0)) return x;
  for (int it = 0; it < 500; ++it) {
    const Eigen::VectorXd next = project_simplex(x - (hess * x + c) / lip);
    const double moved = (next - x).norm();
    x = next;
    if (moved < 1e-10) break;
  }
  return x;
}

inline double loss_value(Loss loss, const Eigen::VectorXd& pred, const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
  CompensatedSum s;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (loss == Loss::squared_error) {
      s.add(w[i] * (y[i] - pred[i]) * (y[i] - pred[i]));
    } else {
      const double p = std::clamp(pred[i], 1e-6, 1.0 - 1e-6);
      s.add(-w[i] * (y[i] * std::log(p) + (1.0 - y[i]) * std::log(1.0 - p)));
    }
  }
  return s.value() / w.sum();
}

}  // namespace detail

/// Cross-validated convex stacking. Weights minimise the cross-validated
/// loss over the simplex by projected gradient descent started at the best
/// single learner, so the ensemble risk never exceeds a member's.
inline FittedModel fit_super_learner(const DesignMatrix& d, const SuperLearnerSpec& spec) {
  d.validate();
  if (spec.battery.empty()) throw LearnerError("empty learner battery");
  if (spec.folds < 2) throw LearnerError("super learner needs at least 2 folds");
  if (spec.folds > d.rows()) throw LearnerError("more folds than rows");
  const Eigen::Index n = d.rows();
  const auto folds = assign_folds(n, spec.folds, spec.seed);
  const Eigen::VectorXd w = d.w();

  FittedModel ens;
  ens.kind_ = LearnerKind::ensemble;
  ens.n_features_ = d.cols();

  std::vector<LearnerKind> kept;
  std::vector<Eigen::VectorXd> cv_cols;
  for (auto kind : spec.battery) {
    Eigen::VectorXd cvp(n);
    try {
      for (int f = 0; f < spec.folds; ++f) {
        std::vector<Eigen::Index> train, test;
        for (Eigen::Index i = 0; i < n; ++i) (folds[static_cast<std::size_t>(i)] == f ? test : train).push_back(i);
        if (train.empty() || test.empty()) continue;
        const auto model = detail::fit_kind(kind, d.subset(train), spec);
        cvp(test) = model.predict(d.x(test, Eigen::all));
      }
    } catch (const std::exception& e) {
      ens.warnings_.push_back(to_string(kind) + " dropped: " + e.what());
      continue;
    }
    kept.push_back(kind);
    cv_cols.push_back(std::move(cvp));
  }
  if (kept.empty()) throw LearnerError("every learner in the battery failed");

  const auto k = static_cast<Eigen::Index>(kept.size());
  Eigen::MatrixXd cv(n, k);
  for (Eigen::Index j = 0; j < k; ++j) cv.col(j) = cv_cols[static_cast<std::size_t>(j)];

  auto risk = [&](const Eigen::VectorXd& a) { return detail::loss_value(spec.loss, cv * a, d.y, w); };
  Eigen::VectorXd member_risk(k);
  for (Eigen::Index j = 0; j < k; ++j) member_risk[j] = risk(Eigen::VectorXd::Unit(k, j));
  Eigen::Index best;
  member_risk.minCoeff(&best);
  Eigen::VectorXd alpha = Eigen::VectorXd::Unit(k, best);

  if (k > 1) {
    const double wsum = w.sum();
    if (spec.loss == Loss::squared_error) {
      // risk(alpha) = alpha' G alpha - 2 c' alpha + const
      const Eigen::MatrixXd gram = cv.transpose() * w.asDiagonal() * cv / wsum;
      const Eigen::VectorXd cross = cv.transpose() * w.cwiseProduct(d.y) / wsum;
      alpha = detail::simplex_qp(2.0 * gram, -2.0 * cross, alpha);
    } else {
      // sequential quadratic steps: Newton model of the log loss minimised
      // over the simplex, then backtracking on the true risk
      double cur = risk(alpha);
      for (int it = 0; it < 100; ++it) {
        const Eigen::VectorXd pred = cv * alpha;
        Eigen::VectorXd g(n), h(n);
        for (Eigen::Index i = 0; i < n; ++i) {
          const double p = std::clamp(pred[i], 1e-6, 1.0 - 1e-6);
          g[i] = -w[i] * (d.y[i] / p - (1.0 - d.y[i]) / (1.0 - p)) / wsum;
          h[i] = w[i] * (d.y[i] / (p * p) + (1.0 - d.y[i]) / ((1.0 - p) * (1.0 - p))) / wsum;
        }
        const Eigen::VectorXd grad = cv.transpose() * g;
        Eigen::MatrixXd hess = cv.transpose() * h.asDiagonal() * cv;
        hess.diagonal().array() += 1e-12 * std::max(1.0, hess.trace());
        const Eigen::VectorXd dir = detail::simplex_qp(hess, grad - hess * alpha, alpha) - alpha;
        if (dir.norm() < 1e-10) break;
        double t = 1.0;
        bool accepted = false;
        for (int bt = 0; bt < 40; ++bt, t *= 0.5) {
          const double val = risk(alpha + t * dir);
          if (val < cur) {
            alpha = project_simplex(alpha + t * dir);
            cur = val;
            accepted = true;
            break;
          }
        }
        if (!accepted || t * dir.norm() < 1e-10) break;
      }
    }
  }
  ens.cv_risk_ = member_risk;
  ens.ens_cv_risk_ = risk(alpha);
  // guard against drift from the starting vertex
  if (ens.ens_cv_risk_ > member_risk[best]) {
    alpha = Eigen::VectorXd::Unit(k, best);
    ens.ens_cv_risk_ = member_risk[best];
  }

  for (Eigen::Index j = 0; j < k; ++j) {
    auto kind = kept[static_cast<std::size_t>(j)];
    if (alpha[j] > 0.0) {
      ens.members_.push_back(detail::fit_kind(kind, d, spec));
    } else {
      FittedModel placeholder;  // zero weight, never evaluated
      placeholder.kind_ = kind;
      placeholder.n_features_ = d.cols();
      placeholder.coef_ = Eigen::VectorXd::Zero(1);
      ens.members_.push_back(placeholder);
    }
  }
  ens.ens_weights_ = alpha;
  return ens;
}

}  // namespace seqadj
