#pragma once

// Exact references on finite supports: discrete SCMs, the observed-data law,
// the s-formula and its influence function by direct summation, and
// brute-force graph searches. Nothing here shares code with the estimators or
// the Bayes-ball search it is meant to check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "core/random.hpp"
#include "core/stats.hpp"
#include "data.hpp"
#include "io.hpp"
#include "mgraph.hpp"

namespace seqadj {

class OracleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::size_t kMaxStates = 6;
inline constexpr std::size_t kMaxVariables = 7;

struct DiscreteVariable {
  std::string name;
  Role role = Role::covariate;
  std::optional<int> tier;
  std::vector<double> values;
  std::vector<std::size_t> parents;      // indices of earlier variables
  std::vector<std::vector<double>> cpt;  // one pmf row per parent configuration, first parent most significant
};

class DiscreteSCM {
 public:
  DiscreteSCM() = default;

  static DiscreteSCM build(std::vector<DiscreteVariable> vars) {
    if (vars.empty() || vars.size() > kMaxVariables)
      throw OracleError("an SCM needs between 1 and " + std::to_string(kMaxVariables) + " variables");
    DiscreteSCM m;
    m.vars_ = std::move(vars);
    std::set<std::string> seen;
    int counts[3] = {0, 0, 0};
    for (std::size_t v = 0; v < m.vars_.size(); ++v) {
      const auto& x = m.vars_[v];
      if (!seen.insert(x.name).second) throw OracleError("duplicate variable '" + x.name + "'");
      if (x.values.empty() || x.values.size() > kMaxStates)
        throw OracleError("variable '" + x.name + "' needs 1 to " + std::to_string(kMaxStates) + " states");
      std::size_t rows = 1;
      for (auto p : x.parents) {
        if (p >= v) throw OracleError("variable '" + x.name + "' lists a parent that is not earlier in the order");
        rows *= m.vars_[p].values.size();
      }
      if (x.cpt.size() != rows)
        throw OracleError("variable '" + x.name + "' needs " + std::to_string(rows) + " pmf rows");
      for (const auto& row : x.cpt) {
        if (row.size() != x.values.size()) throw OracleError("pmf row of '" + x.name + "' has the wrong length");
        double s = 0.0;
        for (double p : row) {
          if (!(p >= 0.0) || !std::isfinite(p)) throw OracleError("negative or non-finite probability in '" + x.name + "'");
          s += p;
        }
        if (std::abs(s - 1.0) > 1e-12) throw OracleError("pmf row of '" + x.name + "' does not sum to 1");
      }
      if (x.role == Role::exposure || x.role == Role::selection) {
        if (x.values != std::vector<double>{0.0, 1.0})
          throw OracleError("variable '" + x.name + "' must take the values [0, 1]");
      }
      if (x.role == Role::exposure) ++counts[0], m.a_ = v;
      if (x.role == Role::outcome) ++counts[1], m.y_ = v;
      if (x.role == Role::selection) ++counts[2], m.r_ = v;
    }
    if (counts[0] != 1 || counts[1] != 1 || counts[2] != 1)
      throw OracleError("an SCM needs exactly one exposure, one outcome and one selection variable");
    return m;
  }

  /// {"name": ..., "variables": [{"name", "role", "values", "parents", "cpt", "tier"?}, ...]}
  static DiscreteSCM from_json(const nlohmann::json& j) {
    try {
      std::vector<DiscreteVariable> vars;
      std::map<std::string, std::size_t> index;
      for (const auto& jv : j.at("variables")) {
        DiscreteVariable v;
        v.name = jv.at("name").get<std::string>();
        v.role = detail::parse_role(jv.value("role", std::string("covariate")));
        if (jv.contains("tier")) v.tier = jv.at("tier").get<int>();
        v.values = jv.at("values").get<std::vector<double>>();
        for (const auto& p : jv.at("parents")) {
          const auto it = index.find(p.get<std::string>());
          if (it == index.end())
            throw OracleError("parent '" + p.get<std::string>() + "' of '" + v.name + "' is not declared earlier");
          v.parents.push_back(it->second);
        }
        v.cpt = jv.at("cpt").get<std::vector<std::vector<double>>>();
        index.emplace(v.name, vars.size());
        vars.push_back(std::move(v));
      }
      auto m = build(std::move(vars));
      m.name_ = j.value("name", std::string());
      return m;
    } catch (const nlohmann::json::exception& e) {
      throw OracleError(std::string("malformed SCM description: ") + e.what());
    }
  }

  static DiscreteSCM load(const std::string& path) {
    try {
      return from_json(nlohmann::json::parse(read_file(path)));
    } catch (const nlohmann::json::parse_error& e) {
      throw OracleError("'" + path + "': " + e.what());
    }
  }

  const std::string& name() const noexcept { return name_; }
  const std::vector<DiscreteVariable>& variables() const noexcept { return vars_; }
  const DiscreteVariable& variable(std::size_t i) const { return vars_.at(i); }
  std::size_t exposure() const noexcept { return a_; }
  std::size_t outcome() const noexcept { return y_; }
  std::size_t selection() const noexcept { return r_; }

  std::size_t index_of(const std::string& name) const {
    for (std::size_t i = 0; i < vars_.size(); ++i)
      if (vars_[i].name == name) return i;
    throw OracleError("no variable '" + name + "'");
  }

  MGraph graph() const {
    std::vector<Node> nodes;
    std::vector<MGraph::Edge> edges;
    for (const auto& v : vars_) {
      nodes.push_back({v.name, v.role, v.tier});
      for (auto p : v.parents) edges.emplace_back(vars_[p].name, v.name);
    }
    return MGraph::build(std::move(nodes), edges);
  }

  double prob(std::size_t v, const std::vector<int>& state) const {
    const auto& x = vars_[v];
    std::size_t row = 0;
    for (auto p : x.parents) row = row * vars_[p].values.size() + static_cast<std::size_t>(state[p]);
    return x.cpt[row][static_cast<std::size_t>(state[v])];
  }

  /// Visits every configuration of positive probability as f(state, prob).
  /// With `do_a` the exposure factor becomes the indicator of A = do_a.
  template <typename F>
  void enumerate(F&& f, std::optional<int> do_a = std::nullopt) const {
    std::vector<int> state(vars_.size(), 0);
    auto rec = [&](auto&& self, std::size_t v, double p) -> void {
      if (v == vars_.size()) {
        f(static_cast<const std::vector<int>&>(state), p);
        return;
      }
      for (std::size_t s = 0; s < vars_[v].values.size(); ++s) {
        state[v] = static_cast<int>(s);
        const double q = (do_a && v == a_) ? (static_cast<int>(s) == *do_a ? 1.0 : 0.0) : prob(v, state);
        if (q > 0.0) self(self, v + 1, p * q);
      }
    };
    rec(rec, 0, 1.0);
  }

 private:
  std::string name_;
  std::vector<DiscreteVariable> vars_;
  std::size_t a_ = 0, y_ = 0, r_ = 0;
};

/// Δ_a E[Y | do(A = a)] by the truncated factorization.
inline double exact_ate(const DiscreteSCM& m) {
  double mean[2];
  for (int a = 0; a < 2; ++a) {
    CompensatedSum s;
    m.enumerate([&](const std::vector<int>& st, double p) { s.add(p * m.variable(m.outcome()).values[st[m.outcome()]]); }, a);
    mean[a] = s.value();
  }
  return mean[1] - mean[0];
}

/// One configuration of the observed variables; the outcome slot holds -1
/// when R = 0.
struct ObservedCell {
  std::vector<int> state;
  double prob = 0.0;
};

/// Joint pmf of the observed data, in which Y is seen only when R = 1.
class ExactDistribution {
 public:
  static ExactDistribution from_scm(const DiscreteSCM& m) {
    ExactDistribution d;
    std::vector<std::size_t> obs;
    for (std::size_t i = 0; i < m.variables().size(); ++i) {
      const auto& v = m.variable(i);
      if (v.role == Role::latent) continue;
      if (i == m.exposure()) d.a_ = obs.size();
      if (i == m.outcome()) d.y_ = obs.size();
      if (i == m.selection()) d.r_ = obs.size();
      obs.push_back(i);
      d.names_.push_back(v.name);
      d.values_.push_back(v.values);
    }
    std::map<std::vector<int>, CompensatedSum> acc;
    std::vector<int> key(obs.size());
    m.enumerate([&](const std::vector<int>& st, double p) {
      for (std::size_t k = 0; k < obs.size(); ++k) key[k] = st[obs[k]];
      if (key[d.r_] == 0) key[d.y_] = -1;
      acc[key].add(p);
    });
    for (const auto& [k, s] : acc) d.cells_.push_back({k, s.value()});
    return d;
  }

  const std::vector<std::string>& names() const noexcept { return names_; }
  const std::vector<ObservedCell>& cells() const noexcept { return cells_; }
  std::size_t exposure_slot() const noexcept { return a_; }
  std::size_t outcome_slot() const noexcept { return y_; }
  std::size_t selection_slot() const noexcept { return r_; }

  std::size_t slot(const std::string& name) const {
    for (std::size_t i = 0; i < names_.size(); ++i)
      if (names_[i] == name) return i;
    throw OracleError("'" + name + "' is not an observed variable");
  }

  double value(std::size_t slot, int state) const { return values_[slot][static_cast<std::size_t>(state)]; }

  double total() const {
    CompensatedSum s;
    for (const auto& c : cells_) s.add(c.prob);
    return s.value();
  }

  std::size_t find(const std::vector<int>& state) const {
    for (std::size_t i = 0; i < cells_.size(); ++i)
      if (cells_[i].state == state) return i;
    throw OracleError("configuration is outside the support");
  }

  /// (1 - eps) P + eps * point mass at cell `i`.
  ExactDistribution contaminate(std::size_t i, double eps) const {
    ExactDistribution d = *this;
    for (auto& c : d.cells_) c.prob *= 1.0 - eps;
    d.cells_.at(i).prob += eps;
    return d;
  }

 private:
  std::vector<std::string> names_;
  std::vector<std::vector<double>> values_;
  std::vector<ObservedCell> cells_;
  std::size_t a_ = 0, y_ = 0, r_ = 0;
};

/// Nuisance surfaces indexed by state keys: pi_a over w, pi_r and q1 over
/// (w, a, z), q2 over (w, a).
struct ExactSurfaces {
  using Key = std::vector<int>;
  std::map<Key, double> pi_a, pi_r, q1, q2;
};

/// Conditional structure of an observed law around one pair (W; Z).
class ExactPairLaw {
 public:
  using Key = ExactSurfaces::Key;

  ExactPairLaw(const ExactDistribution& p, const AdmissiblePair& pair) : p_(&p) {
    for (const auto& n : pair.w) w_.push_back(p.slot(n));
    for (const auto& n : pair.z) z_.push_back(p.slot(n));
    std::map<Key, CompensatedSum> pw, pwa, pwaz, sel, sely;
    for (const auto& c : p.cells()) {
      const Key w = wkey(c.state), wa = wakey(c.state), waz = wazkey(c.state);
      pw[w].add(c.prob);
      pwa[wa].add(c.prob);
      pwaz[waz].add(c.prob);
      if (c.state[p.selection_slot()] == 1) {
        sel[waz].add(c.prob);
        sely[waz].add(c.prob * p.value(p.outcome_slot(), c.state[p.outcome_slot()]));
      }
    }
    for (const auto& [k, s] : pw) pw_[k] = s.value();
    for (const auto& [k, s] : pwa) pwa_[k] = s.value();
    for (const auto& [k, s] : pwaz) {
      pwaz_[k] = s.value();
      Key wa(k.begin(), k.begin() + static_cast<std::ptrdiff_t>(w_.size() + 1));
      z_given_wa_[wa].push_back(k);
    }
    for (const auto& [w, m] : pw_) {
      for (int a = 0; a < 2; ++a) {
        Key wa = w;
        wa.push_back(a);
        if (!pwa_.count(wa) || pwa_[wa] <= 0.0) throw OracleError("positivity fails: an exposure arm has no mass");
      }
    }
    for (const auto& [k, m] : pwaz_) {
      if (m <= 0.0) continue;
      if (!sel.count(k) || sel[k].value() <= 0.0) throw OracleError("positivity fails: a stratum has no selected mass");
      sel_[k] = sel[k].value();
      sely_[k] = sely[k].value();
    }
  }

  Key wkey(const std::vector<int>& s) const {
    Key k;
    for (auto i : w_) k.push_back(s[i]);
    return k;
  }
  Key wakey(const std::vector<int>& s) const {
    Key k = wkey(s);
    k.push_back(s[p_->exposure_slot()]);
    return k;
  }
  Key wazkey(const std::vector<int>& s) const {
    Key k = wakey(s);
    for (auto i : z_) k.push_back(s[i]);
    return k;
  }

  ExactSurfaces truth() const {
    ExactSurfaces t;
    for (const auto& [w, m] : pw_) {
      Key w1 = w;
      w1.push_back(1);
      t.pi_a[w] = pwa_.at(w1) / m;
    }
    for (const auto& [k, m] : pwaz_) {
      t.pi_r[k] = sel_.at(k) / m;
      t.q1[k] = sely_.at(k) / sel_.at(k);
    }
    t.q2 = q2_from(t.q1);
    return t;
  }

  /// E[q1(W, a, Z) | W, A = a] for every (w, a).
  std::map<Key, double> q2_from(const std::map<Key, double>& q1) const {
    std::map<Key, double> q2;
    for (const auto& [wa, zs] : z_given_wa_) {
      CompensatedSum s;
      for (const auto& k : zs) s.add(pwaz_.at(k) * q1.at(k));
      q2[wa] = s.value() / pwa_.at(wa);
    }
    return q2;
  }

  /// E_W Δ_a q2(W, a).
  double psi_q2(const std::map<Key, double>& q2) const {
    CompensatedSum s;
    for (const auto& [w, m] : pw_) {
      Key w1 = w, w0 = w;
      w1.push_back(1);
      w0.push_back(0);
      s.add(m * q2.at(w1));
      s.add(-m * q2.at(w0));
    }
    return s.value();
  }

  double psi_q1(const std::map<Key, double>& q1) const { return psi_q2(q2_from(q1)); }
  double psi() const { return psi_q1(truth().q1); }

  /// The influence function with the given surfaces, at one cell.
  double eif(const ExactSurfaces& s, double psi, const std::vector<int>& state) const {
    const Key w = wkey(state), wa = wakey(state), waz = wazkey(state);
    Key w1 = w, w0 = w;
    w1.push_back(1);
    w0.push_back(0);
    const int a = state[p_->exposure_slot()];
    const double pa = s.pi_a.at(w);
    const double h2 = a == 1 ? 1.0 / pa : -1.0 / (1.0 - pa);
    const double h1 = h2 / s.pi_r.at(waz);
    const double q1 = s.q1.at(waz);
    double d = h2 * (q1 - s.q2.at(wa)) + s.q2.at(w1) - s.q2.at(w0) - psi;
    if (state[p_->selection_slot()] == 1) d += h1 * (p_->value(p_->outcome_slot(), state[p_->outcome_slot()]) - q1);
    return d;
  }

  double expected_eif(const ExactSurfaces& s, double psi) const {
    CompensatedSum sum;
    for (const auto& c : p_->cells()) sum.add(c.prob * eif(s, psi, c.state));
    return sum.value();
  }

 private:
  const ExactDistribution* p_;
  std::vector<std::size_t> w_, z_;
  std::map<Key, double> pw_, pwa_, pwaz_, sel_, sely_;
  std::map<Key, std::vector<Key>> z_given_wa_;
};

inline double exact_s_formula(const ExactDistribution& p, const AdmissiblePair& pair) {
  return ExactPairLaw(p, pair).psi();
}

inline double exact_eif(const ExactDistribution& p, const AdmissiblePair& pair, const std::vector<int>& state) {
  const ExactPairLaw law(p, pair);
  return law.eif(law.truth(), law.psi(), state);
}

/// (Ψ[(1 - eps) P + eps δ_cell] - Ψ[P]) / eps.
inline double gateaux_difference(const ExactDistribution& p, const AdmissiblePair& pair, std::size_t cell, double eps) {
  return (exact_s_formula(p.contaminate(cell, eps), pair) - exact_s_formula(p, pair)) / eps;
}

/// Supplied surfaces replace the true ones; absent entries stay true.
struct PutativeSurfaces {
  std::optional<std::map<ExactSurfaces::Key, double>> pi_a, pi_r, q1, q2;
};

/// E D̃(O) under P with the putative components substituted.
inline double robustness_residual(const ExactDistribution& p, const AdmissiblePair& pair, const PutativeSurfaces& put,
                                  double psi_true) {
  const ExactPairLaw law(p, pair);
  ExactSurfaces s = law.truth();
  if (put.pi_a) s.pi_a = *put.pi_a;
  if (put.pi_r) s.pi_r = *put.pi_r;
  if (put.q1) s.q1 = *put.q1;
  if (put.q2) s.q2 = *put.q2;
  return law.expected_eif(s, psi_true);
}

/// Ψ at the mixture alpha*a + (1 - alpha)*b of two Q1 surfaces minus the
/// same mixture of Ψ values.
inline double linearity_residual_q1(const ExactDistribution& p, const AdmissiblePair& pair,
                                    const std::map<ExactSurfaces::Key, double>& a,
                                    const std::map<ExactSurfaces::Key, double>& b, double alpha) {
  const ExactPairLaw law(p, pair);
  std::map<ExactSurfaces::Key, double> mix;
  for (const auto& [k, v] : a) mix[k] = alpha * v + (1.0 - alpha) * b.at(k);
  return law.psi_q1(mix) - (alpha * law.psi_q1(a) + (1.0 - alpha) * law.psi_q1(b));
}

/// As above for two Q2 surfaces, with Q1 and P_W held fixed.
inline double linearity_residual_q2(const ExactDistribution& p, const AdmissiblePair& pair,
                                    const std::map<ExactSurfaces::Key, double>& a,
                                    const std::map<ExactSurfaces::Key, double>& b, double alpha) {
  const ExactPairLaw law(p, pair);
  std::map<ExactSurfaces::Key, double> mix;
  for (const auto& [k, v] : a) mix[k] = alpha * v + (1.0 - alpha) * b.at(k);
  return law.psi_q2(mix) - (alpha * law.psi_q2(a) + (1.0 - alpha) * law.psi_q2(b));
}

/// Logit shift by a uniform draw on [-scale, scale] per entry, then
/// truncation to [trunc, 1 - trunc].
inline std::map<ExactSurfaces::Key, double> perturb_logit(const std::map<ExactSurfaces::Key, double>& p, Rng& rng,
                                                          double scale, double trunc = 0.01) {
  auto out = p;
  for (auto& [k, v] : out) {
    const double eta = std::log(v / (1.0 - v)) + scale * (2.0 * rng.uniform() - 1.0);
    v = std::clamp(1.0 / (1.0 + std::exp(-eta)), trunc, 1.0 - trunc);
  }
  return out;
}

inline std::map<ExactSurfaces::Key, double> perturb_additive(const std::map<ExactSurfaces::Key, double>& q, Rng& rng,
                                                             double scale) {
  auto out = q;
  for (auto& [k, v] : out) v += scale * (2.0 * rng.uniform() - 1.0);
  return out;
}

/// The observed law as a weighted dataset: one row per (W, A, Z, R, Y) cell,
/// weighted by its probability.
inline Dataset population_dataset(const ExactDistribution& p, const AdmissiblePair& pair) {
  std::vector<std::size_t> ws, zs;
  for (const auto& n : pair.w) ws.push_back(p.slot(n));
  for (const auto& n : pair.z) zs.push_back(p.slot(n));
  std::map<std::vector<int>, CompensatedSum> acc;
  for (const auto& c : p.cells()) {
    std::vector<int> k;
    for (auto i : ws) k.push_back(c.state[i]);
    for (auto i : zs) k.push_back(c.state[i]);
    k.push_back(c.state[p.exposure_slot()]);
    k.push_back(c.state[p.selection_slot()]);
    k.push_back(c.state[p.outcome_slot()]);
    acc[k].add(c.prob);
  }
  const auto n = static_cast<Eigen::Index>(acc.size());
  const auto nw = static_cast<Eigen::Index>(ws.size()), nz = static_cast<Eigen::Index>(zs.size());
  Dataset d;
  d.x.w.resize(n, nw);
  d.x.z.resize(n, nz);
  d.x.a.resize(n);
  d.r.resize(n);
  d.y.resize(n);
  d.weights.resize(n);
  d.x.w_names = pair.w.sorted();
  d.x.z_names = pair.z.sorted();
  Eigen::Index i = 0;
  for (const auto& [k, s] : acc) {
    for (Eigen::Index j = 0; j < nw; ++j) d.x.w(i, j) = p.value(ws[static_cast<std::size_t>(j)], k[static_cast<std::size_t>(j)]);
    for (Eigen::Index j = 0; j < nz; ++j)
      d.x.z(i, j) = p.value(zs[static_cast<std::size_t>(j)], k[static_cast<std::size_t>(nw + j)]);
    const std::size_t base = ws.size() + zs.size();
    d.x.a[i] = p.value(p.exposure_slot(), k[base]);
    d.r[i] = k[base + 1];
    d.y[i] = k[base + 1] == 1 ? p.value(p.outcome_slot(), k[base + 2]) : kMissing;
    d.weights[i] = s.value();
    ++i;
  }
  d.validate();
  return d;
}

struct RandomScmOptions {
  int min_covariates = 2;
  int max_covariates = 4;
  double latent_prob = 0.25;
  double edge_prob = 0.5;
  int max_states = 3;
};

/// A random positive SCM over A, Y, R and a few covariates, in a random
/// topological order with A before Y. Every pmf entry is at least about 0.06.
inline DiscreteSCM random_scm(Rng& rng, const RandomScmOptions& opt = {}) {
  const int k = opt.min_covariates + static_cast<int>(rng.below(static_cast<std::uint64_t>(opt.max_covariates - opt.min_covariates + 1)));
  std::vector<DiscreteVariable> vars;
  int latents = 0, observed = 0;
  for (int i = 0; i < k; ++i) {
    DiscreteVariable v;
    if (rng.uniform() < opt.latent_prob) {
      v.role = Role::latent;
      v.name = "U" + std::to_string(++latents);
    } else {
      v.name = "V" + std::to_string(++observed);
    }
    const int states = 2 + static_cast<int>(rng.below(static_cast<std::uint64_t>(opt.max_states - 1)));
    for (int s = 0; s < states; ++s) v.values.push_back(s);
    vars.push_back(std::move(v));
  }
  DiscreteVariable a{"A", Role::exposure, std::nullopt, {0.0, 1.0}, {}, {}};
  DiscreteVariable r{"R", Role::selection, std::nullopt, {0.0, 1.0}, {}, {}};
  DiscreteVariable y{"Y", Role::outcome, std::nullopt, {}, {}, {}};
  std::set<double> ys;
  const int ny = 2 + static_cast<int>(rng.below(3));
  while (static_cast<int>(ys.size()) < ny) ys.insert(static_cast<double>(rng.below(9)) - 3.0);
  y.values.assign(ys.begin(), ys.end());

  // insert A, then Y after it, then R anywhere
  auto pos = [&](std::size_t lo) { return lo + static_cast<std::size_t>(rng.below(vars.size() - lo + 1)); };
  const std::size_t ia = pos(0);
  vars.insert(vars.begin() + static_cast<std::ptrdiff_t>(ia), a);
  vars.insert(vars.begin() + static_cast<std::ptrdiff_t>(pos(ia + 1)), y);
  vars.insert(vars.begin() + static_cast<std::ptrdiff_t>(pos(0)), r);

  for (std::size_t v = 0; v < vars.size(); ++v) {
    std::size_t rows = 1;
    for (std::size_t u = 0; u < v; ++u) {
      const bool force = vars[u].role == Role::exposure && vars[v].role == Role::outcome;
      if (force || rng.uniform() < opt.edge_prob) {
        if (rows * vars[u].values.size() > 36) continue;
        vars[v].parents.push_back(u);
        rows *= vars[u].values.size();
      }
    }
    for (std::size_t row = 0; row < rows; ++row) {
      std::vector<double> pm(vars[v].values.size());
      double s = 0.0;
      for (auto& x : pm) s += x = 0.2 + 0.8 * rng.uniform();
      for (auto& x : pm) x /= s;
      vars[v].cpt.push_back(std::move(pm));
    }
  }
  return DiscreteSCM::build(std::move(vars));
}

// ---------------------------------------------------------------------------
// Brute-force graph references

namespace brute {

struct Adjacency {
  std::vector<std::string> names;
  std::vector<std::vector<bool>> edge;  // edge[u][v]: u -> v

  static Adjacency from(const MGraph& g, const std::set<std::pair<std::string, std::string>>& drop = {}) {
    Adjacency adj;
    for (const auto& n : g.nodes()) adj.names.push_back(n.name);
    const auto n = adj.names.size();
    adj.edge.assign(n, std::vector<bool>(n, false));
    for (const auto& [u, v] : g.edges()) {
      if (drop.count({u, v})) continue;
      adj.edge[g.index_of(u)][g.index_of(v)] = true;
    }
    return adj;
  }

  std::size_t at(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return i;
    throw GraphError("no node '" + name + "'");
  }

  /// Nodes reachable from `u` along directed edges, including `u`.
  std::vector<bool> descendants(std::size_t u) const {
    std::vector<bool> seen(names.size(), false);
    std::vector<std::size_t> todo{u};
    while (!todo.empty()) {
      const auto x = todo.back();
      todo.pop_back();
      if (seen[x]) continue;
      seen[x] = true;
      for (std::size_t v = 0; v < names.size(); ++v)
        if (edge[x][v]) todo.push_back(v);
    }
    return seen;
  }
};

/// Whether some simple path between X and Y is open given S.
inline bool connected(const Adjacency& g, const std::set<std::size_t>& x, const std::set<std::size_t>& y,
                      const std::set<std::size_t>& s) {
  const auto n = g.names.size();
  std::vector<bool> has_desc_in_s(n, false);
  for (std::size_t v = 0; v < n; ++v) {
    const auto de = g.descendants(v);
    for (auto t : s) has_desc_in_s[v] = has_desc_in_s[v] || de[t];
  }
  std::vector<std::size_t> path;
  std::vector<bool> on(n, false);
  auto open = [&] {
    for (std::size_t i = 1; i + 1 < path.size(); ++i) {
      const auto prev = path[i - 1], v = path[i], next = path[i + 1];
      const bool collider = g.edge[prev][v] && g.edge[next][v];
      if (collider ? !has_desc_in_s[v] : s.count(v) != 0) return false;
    }
    return true;
  };
  auto dfs = [&](auto&& self, std::size_t u) -> bool {
    if (path.size() > 1 && y.count(u)) return open();
    for (std::size_t v = 0; v < n; ++v) {
      if (on[v] || !(g.edge[u][v] || g.edge[v][u])) continue;
      on[v] = true;
      path.push_back(v);
      if (self(self, v)) return true;
      path.pop_back();
      on[v] = false;
    }
    return false;
  };
  for (auto start : x) {
    std::fill(on.begin(), on.end(), false);
    on[start] = true;
    path = {start};
    if (dfs(dfs, start)) return true;
  }
  return false;
}

inline std::set<std::size_t> indices(const Adjacency& g, const NodeSet& s) {
  std::set<std::size_t> out;
  for (const auto& n : s) out.insert(g.at(n));
  return out;
}

}  // namespace brute

/// d-separation by enumerating every simple path in the skeleton.
inline bool brute_dsep(const NodeSet& x, const NodeSet& y, const NodeSet& s, const MGraph& g) {
  const auto adj = brute::Adjacency::from(g);
  return !brute::connected(adj, brute::indices(adj, x), brute::indices(adj, y), brute::indices(adj, s));
}

/// Every (minimal) s-admissible pair over the observed covariates by a full
/// three-way assignment scan, in canonical order.
inline std::vector<AdmissiblePair> brute_pairs(const MGraph& g, bool minimal_only = true) {
  const auto adj = brute::Adjacency::from(g);
  const std::size_t ia = adj.at(g.exposure()), iy = adj.at(g.outcome()), ir = adj.at(g.selection());
  const auto n = adj.names.size();

  // proper causal nodes: everything on a directed A -> ... -> Y path except A
  std::set<std::size_t> cn;
  std::vector<std::size_t> path{ia};
  auto walk = [&](auto&& self, std::size_t u) -> void {
    if (u == iy) {
      cn.insert(path.begin() + 1, path.end());
      return;
    }
    for (std::size_t v = 0; v < n; ++v) {
      if (!adj.edge[u][v] || std::find(path.begin(), path.end(), v) != path.end()) continue;
      path.push_back(v);
      self(self, v);
      path.pop_back();
    }
  };
  walk(walk, ia);
  std::vector<bool> fb(n, false);
  fb[ia] = true;
  for (auto c : cn) {
    const auto de = adj.descendants(c);
    for (std::size_t v = 0; v < n; ++v) fb[v] = fb[v] || de[v];
  }
  std::set<std::pair<std::string, std::string>> drop;
  for (auto c : cn)
    if (adj.edge[ia][c]) drop.emplace(adj.names[ia], adj.names[c]);
  const auto backdoor = brute::Adjacency::from(g, drop);

  std::vector<std::size_t> cands;
  for (const auto& node : g.nodes())
    if (node.role == Role::covariate) cands.push_back(adj.at(node.name));

  auto admissible = [&](const std::set<std::size_t>& w, const std::set<std::size_t>& z) {
    for (auto v : w)
      if (fb[v]) return false;
    if (brute::connected(backdoor, {iy}, {ia}, w)) return false;
    std::set<std::size_t> sep = w;
    sep.insert(z.begin(), z.end());
    sep.insert(ia);
    return !brute::connected(adj, {iy}, {ir}, sep);
  };

  std::vector<AdmissiblePair> out;
  std::size_t total = 1;
  for (std::size_t i = 0; i < cands.size(); ++i) total *= 3;
  for (std::size_t code = 0; code < total; ++code) {
    std::set<std::size_t> w, z;
    std::size_t c = code;
    for (auto v : cands) {
      if (c % 3 == 1) w.insert(v);
      if (c % 3 == 2) z.insert(v);
      c /= 3;
    }
    if (!admissible(w, z)) continue;
    bool minimal = true;
    if (minimal_only) {
      for (auto v : w) {
        auto w2 = w;
        w2.erase(v);
        if (admissible(w2, z)) minimal = false;
      }
      for (auto v : z) {
        auto z2 = z;
        z2.erase(v);
        if (admissible(w, z2)) minimal = false;
      }
    }
    if (!minimal) continue;
    AdmissiblePair p;
    for (auto v : w) p.w.insert(adj.names[v]);
    for (auto v : z) p.z.insert(adj.names[v]);
    out.push_back(std::move(p));
  }
  std::sort(out.begin(), out.end(), canonical_less);
  return out;
}

/// A random DAG over `n` nodes named N0.. with the first three (in a random
/// order) playing exposure, outcome and selection; `latent_prob` hides
/// covariates.
inline MGraph random_dag(Rng& rng, std::size_t n, double edge_prob, double latent_prob = 0.0) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);
  std::vector<Node> nodes(n);
  for (std::size_t i = 0; i < n; ++i) {
    nodes[i].name = "N" + std::to_string(i);
    nodes[i].role = Role::covariate;
  }
  std::vector<std::size_t> roles(n);
  for (std::size_t i = 0; i < n; ++i) roles[i] = i;
  rng.shuffle(roles);
  nodes[roles[0]].role = Role::exposure;
  nodes[roles[1]].role = Role::outcome;
  nodes[roles[2]].role = Role::selection;
  for (std::size_t i = 3; i < n; ++i)
    if (rng.uniform() < latent_prob) nodes[roles[i]].role = Role::latent;
  std::vector<MGraph::Edge> edges;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (rng.uniform() < edge_prob) edges.emplace_back(nodes[order[i]].name, nodes[order[j]].name);
  return MGraph::build(std::move(nodes), edges);
}

}  // namespace seqadj
