#pragma once

// Tabular data and the role-bound sample O = (W, A, Z, R, Y).

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "core/stats.hpp"

namespace seqadj {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

inline bool is_missing(double v) { return std::isnan(v); }

/// Named numeric columns of equal length; NaN marks a missing cell.
class Table {
 public:
  Table() = default;

  std::size_t rows() const noexcept { return cols_.empty() ? 0 : cols_.front().size(); }
  std::size_t cols() const noexcept { return cols_.size(); }
  const std::vector<std::string>& names() const noexcept { return names_; }

  bool has(const std::string& name) const {
    for (const auto& n : names_)
      if (n == name) return true;
    return false;
  }

  void add(std::string name, std::vector<double> values) {
    if (has(name)) throw DataError("duplicate column '" + name + "'");
    if (!cols_.empty() && values.size() != rows()) throw DataError("column '" + name + "' has the wrong length");
    names_.push_back(std::move(name));
    cols_.push_back(std::move(values));
  }

  const std::vector<double>& col(const std::string& name) const {
    for (std::size_t j = 0; j < names_.size(); ++j)
      if (names_[j] == name) return cols_[j];
    throw DataError("no column named '" + name + "'");
  }
  const std::vector<double>& col(std::size_t j) const { return cols_.at(j); }

 private:
  std::vector<std::string> names_;
  std::vector<std::vector<double>> cols_;
};

/// Feature side of the sample: everything a nuisance surface may look at.
struct Frame {
  Eigen::MatrixXd w;
  Eigen::VectorXd a;
  Eigen::MatrixXd z;
  std::vector<std::string> w_names, z_names;
  std::vector<std::pair<std::string, Eigen::VectorXd>> aux;  // unbound extras, e.g. noise columns

  Eigen::Index rows() const { return a.size(); }

  Frame with_arm(double arm) const {
    Frame f = *this;
    f.a.setConstant(arm);
    return f;
  }

  Frame subset(const std::vector<Eigen::Index>& idx) const {
    Frame f;
    f.w = w(idx, Eigen::all);
    f.a = a(idx);
    f.z = z(idx, Eigen::all);
    f.w_names = w_names;
    f.z_names = z_names;
    for (const auto& [name, v] : aux) f.aux.emplace_back(name, v(idx));
    return f;
  }

  /// Column by name across W, Z, aux, and "A".
  Eigen::VectorXd col(const std::string& name) const {
    for (std::size_t j = 0; j < w_names.size(); ++j)
      if (w_names[j] == name) return w.col(static_cast<Eigen::Index>(j));
    for (std::size_t j = 0; j < z_names.size(); ++j)
      if (z_names[j] == name) return z.col(static_cast<Eigen::Index>(j));
    for (const auto& [n, v] : aux)
      if (n == name) return v;
    if (name == "A") return a;
    throw DataError("frame has no column '" + name + "'");
  }

  Eigen::MatrixXd wa() const {
    Eigen::MatrixXd m(rows(), w.cols() + 1);
    m << w, a;
    return m;
  }
  Eigen::MatrixXd waz() const {
    Eigen::MatrixXd m(rows(), w.cols() + 1 + z.cols());
    m << w, a, z;
    return m;
  }
};

/// A sample bound to an adjustment pair. y is NaN exactly where r == 0.
/// Row weights default to 1; probability weights turn a table of
/// configurations into an exact population.
struct Dataset {
  Frame x;
  Eigen::VectorXd r;
  Eigen::VectorXd y;
  Eigen::VectorXd weights;

  Eigen::Index rows() const { return r.size(); }
  Eigen::VectorXd w() const { return weights.size() ? weights : Eigen::VectorXd::Ones(rows()); }

  Dataset subset(const std::vector<Eigen::Index>& idx) const {
    Dataset d;
    d.x = x.subset(idx);
    d.r = r(idx);
    d.y = y(idx);
    if (weights.size()) d.weights = weights(idx);
    return d;
  }

  std::vector<Eigen::Index> selected() const {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index i = 0; i < rows(); ++i)
      if (r[i] == 1.0) idx.push_back(i);
    return idx;
  }

  double missing_rate() const { return 1.0 - weighted_mean(r, w()); }

  void validate() const {
    const auto n = rows();
    if (n < 1) throw DataError("empty dataset");
    if (x.rows() != n || y.size() != n || x.w.rows() != n || x.z.rows() != n)
      throw DataError("dataset columns have inconsistent lengths");
    if (weights.size() && weights.size() != n) throw DataError("weight length mismatch");
    for (Eigen::Index i = 0; i < n; ++i) {
      if (x.a[i] != 0.0 && x.a[i] != 1.0) throw DataError("row " + std::to_string(i + 1) + ": exposure must be 0/1");
      if (r[i] != 0.0 && r[i] != 1.0) throw DataError("row " + std::to_string(i + 1) + ": selection must be 0/1");
      if ((r[i] == 1.0) == is_missing(y[i]))
        throw DataError("row " + std::to_string(i + 1) + ": outcome must be observed exactly when selected");
    }
    if (!x.w.allFinite() || !x.z.allFinite()) throw DataError("missing covariate values");
  }
};

/// Which table columns play which role.
struct ColumnBinding {
  std::vector<std::string> w, z;
  std::string a = "A";
  std::string y = "Y";
  std::optional<std::string> r = std::string("R");
  std::vector<std::string> aux = {};
};

inline Dataset bind(const Table& t, const ColumnBinding& b) {
  std::vector<std::string> used = b.w;
  used.insert(used.end(), b.z.begin(), b.z.end());
  used.push_back(b.a);
  used.push_back(b.y);
  if (b.r) used.push_back(*b.r);
  for (std::size_t i = 0; i < used.size(); ++i)
    for (std::size_t j = i + 1; j < used.size(); ++j)
      if (used[i] == used[j]) throw DataError("column '" + used[i] + "' bound to more than one role");

  const auto n = static_cast<Eigen::Index>(t.rows());
  auto vec = [&](const std::string& name) {
    const auto& c = t.col(name);
    return Eigen::Map<const Eigen::VectorXd>(c.data(), n).eval();
  };
  auto mat = [&](const std::vector<std::string>& names) {
    Eigen::MatrixXd m(n, static_cast<Eigen::Index>(names.size()));
    for (std::size_t j = 0; j < names.size(); ++j) m.col(static_cast<Eigen::Index>(j)) = vec(names[j]);
    return m;
  };

  Dataset d;
  d.x.w = mat(b.w);
  d.x.z = mat(b.z);
  d.x.w_names = b.w;
  d.x.z_names = b.z;
  d.x.a = vec(b.a);
  for (const auto& name : b.aux) d.x.aux.emplace_back(name, vec(name));
  d.y = vec(b.y);
  if (b.r) {
    d.r = vec(*b.r);
  } else {
    d.r.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) d.r[i] = is_missing(d.y[i]) ? 0.0 : 1.0;
  }
  d.validate();
  return d;
}

}  // namespace seqadj
