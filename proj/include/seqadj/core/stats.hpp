#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace seqadj {

/// Neumaier compensated accumulator.
class CompensatedSum {
 public:
  void add(double x) noexcept {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      carry_ += (sum_ - t) + x;
    } else {
      carry_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  CompensatedSum& operator+=(double x) noexcept {
    add(x);
    return *this;
  }
  double value() const noexcept { return sum_ + carry_; }

 private:
  double sum_ = 0.0;
  double carry_ = 0.0;
};

inline double compensated_sum(std::span<const double> xs) {
  CompensatedSum acc;
  for (double x : xs) acc.add(x);
  return acc.value();
}

inline double weighted_mean(const Eigen::VectorXd& x, const Eigen::VectorXd& w) {
  CompensatedSum num, den;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    num.add(w[i] * x[i]);
    den.add(w[i]);
  }
  if (den.value() <= 0.0) throw std::invalid_argument("weights must have positive sum");
  return num.value() / den.value();
}

/// Kish effective sample size; equals n for unit weights.
inline double effective_size(const Eigen::VectorXd& w) {
  const double s = w.sum();
  return s * s / w.squaredNorm();
}

/// Weighted variance with the small-sample correction n_eff / (n_eff - 1);
/// reduces to the usual sample variance for unit weights.
inline double weighted_variance(const Eigen::VectorXd& x, const Eigen::VectorXd& w) {
  const double m = weighted_mean(x, w);
  CompensatedSum num;
  for (Eigen::Index i = 0; i < x.size(); ++i) num.add(w[i] * (x[i] - m) * (x[i] - m));
  const double pop = num.value() / w.sum();
  const double neff = effective_size(w);
  return neff > 1.0 ? pop * neff / (neff - 1.0) : 0.0;
}

/// Quantile of an already sorted sample, linear interpolation between order
/// statistics (R type 7).
inline double sorted_quantile(const std::vector<double>& xs, double p) {
  if (xs.empty()) throw std::invalid_argument("quantile of empty sample");
  const double h = (static_cast<double>(xs.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, xs.size() - 1);
  return xs[lo] + (h - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
}

inline double quantile(std::vector<double> xs, double p) {
  std::sort(xs.begin(), xs.end());
  return sorted_quantile(xs, p);
}

inline constexpr double kZ975 = 1.959963984540054;

}  // namespace seqadj
