#pragma once

// m-graphs: causal DAGs carrying an exposure A, an outcome Y and the
// outcome's selection indicator R, plus the graphical machinery needed to
// check sequential adjustment pairs (W; Z).

#include <algorithm>
#include <array>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace seqadj {

enum class Role { exposure, outcome, selection, covariate, latent };

inline std::string_view to_string(Role r) {
  switch (r) {
    case Role::exposure: return "exposure";
    case Role::outcome: return "outcome";
    case Role::selection: return "selection";
    case Role::covariate: return "covariate";
    case Role::latent: return "latent";
  }
  return "covariate";
}

class GraphError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
 public:
  enum class Kind { syntax, cycle, duplicate_node, missing_role, duplicate_role, undeclared_node };

  ParseError(Kind kind, int line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), kind_(kind), line_(line) {}

  Kind kind() const noexcept { return kind_; }
  int line() const noexcept { return line_; }

 private:
  Kind kind_;
  int line_;
};

/// A set of node names with value semantics and set algebra.
class NodeSet {
 public:
  NodeSet() = default;
  NodeSet(std::initializer_list<std::string> names) : names_(names) {}
  template <typename It>
  NodeSet(It first, It last) : names_(first, last) {}

  bool contains(const std::string& n) const { return names_.count(n) != 0; }
  bool empty() const noexcept { return names_.empty(); }
  std::size_t size() const noexcept { return names_.size(); }
  void insert(const std::string& n) { names_.insert(n); }
  void erase(const std::string& n) { names_.erase(n); }
  auto begin() const { return names_.begin(); }
  auto end() const { return names_.end(); }
  std::vector<std::string> sorted() const { return {names_.begin(), names_.end()}; }

  NodeSet operator|(const NodeSet& o) const {
    NodeSet r = *this;
    r.names_.insert(o.names_.begin(), o.names_.end());
    return r;
  }
  NodeSet operator&(const NodeSet& o) const {
    NodeSet r;
    for (const auto& n : names_)
      if (o.contains(n)) r.names_.insert(n);
    return r;
  }
  NodeSet operator-(const NodeSet& o) const {
    NodeSet r;
    for (const auto& n : names_)
      if (!o.contains(n)) r.names_.insert(n);
    return r;
  }
  bool operator==(const NodeSet&) const = default;
  auto operator<=>(const NodeSet& o) const { return sorted() <=> o.sorted(); }

  std::string str() const {
    std::string out = "{";
    bool first = true;
    for (const auto& n : names_) {
      if (!first) out += ",";
      out += n;
      first = false;
    }
    return out + "}";
  }

 private:
  std::set<std::string> names_;
};

/// Outer confounder set W and inner separator set Z.
struct AdmissiblePair {
  NodeSet w;
  NodeSet z;

  bool operator==(const AdmissiblePair&) const = default;
  std::size_t size() const { return w.size() + z.size(); }
  std::string str() const {
    auto join = [](const NodeSet& s) {
      std::string out = "{";
      bool first = true;
      for (const auto& n : s) {
        out += (first ? "" : ",") + n;
        first = false;
      }
      return out + "}";
    };
    return "(" + join(w) + ";" + join(z) + ")";
  }
};

/// Canonical order: total size, then W names, then Z names.
inline bool canonical_less(const AdmissiblePair& a, const AdmissiblePair& b) {
  if (a.size() != b.size()) return a.size() < b.size();
  const auto aw = a.w.sorted(), bw = b.w.sorted();
  if (aw != bw) return aw < bw;
  return a.z.sorted() < b.z.sorted();
}

struct Node {
  std::string name;
  Role role = Role::covariate;
  std::optional<int> tier;
};

class MGraph {
 public:
  using Edge = std::pair<std::string, std::string>;

  MGraph() = default;

  /// Validates names, endpoints, roles and acyclicity.
  static MGraph build(std::vector<Node> nodes, const std::vector<Edge>& edges) {
    MGraph g;
    g.nodes_ = std::move(nodes);
    for (std::size_t i = 0; i < g.nodes_.size(); ++i) {
      if (!g.index_.emplace(g.nodes_[i].name, i).second)
        throw GraphError("duplicate node '" + g.nodes_[i].name + "'");
    }
    g.parents_.assign(g.nodes_.size(), {});
    g.children_.assign(g.nodes_.size(), {});
    for (const auto& [from, to] : edges) {
      const auto u = g.index_of(from), v = g.index_of(to);
      if (u == v) throw GraphError("self-loop on '" + from + "'");
      if (std::find(g.children_[u].begin(), g.children_[u].end(), v) != g.children_[u].end()) continue;
      g.children_[u].push_back(v);
      g.parents_[v].push_back(u);
    }
    for (auto& c : g.children_) std::sort(c.begin(), c.end());
    for (auto& p : g.parents_) std::sort(p.begin(), p.end());
    if (!g.acyclic()) throw GraphError("edge relation contains a cycle");
    for (Role r : {Role::exposure, Role::outcome, Role::selection}) {
      int count = 0;
      for (const auto& n : g.nodes_) count += n.role == r;
      if (count != 1)
        throw GraphError("expected exactly one node with role " + std::string(to_string(r)) + ", found " +
                         std::to_string(count));
    }
    return g;
  }

  std::size_t size() const noexcept { return nodes_.size(); }
  const std::vector<Node>& nodes() const noexcept { return nodes_; }
  const Node& node(std::size_t i) const { return nodes_.at(i); }
  const Node& node(const std::string& name) const { return nodes_[index_of(name)]; }
  bool has_node(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw GraphError("unknown node '" + name + "'");
    return it->second;
  }

  const std::vector<std::size_t>& children(std::size_t i) const { return children_[i]; }
  const std::vector<std::size_t>& parents(std::size_t i) const { return parents_[i]; }

  std::vector<Edge> edges() const {
    std::vector<Edge> out;
    for (std::size_t u = 0; u < size(); ++u)
      for (auto v : children_[u]) out.emplace_back(nodes_[u].name, nodes_[v].name);
    std::sort(out.begin(), out.end());
    return out;
  }
  std::size_t edge_count() const {
    std::size_t m = 0;
    for (const auto& c : children_) m += c.size();
    return m;
  }
  bool has_edge(const std::string& from, const std::string& to) const {
    const auto& c = children_[index_of(from)];
    return std::find(c.begin(), c.end(), index_of(to)) != c.end();
  }

  const std::string& role_node(Role r) const {
    for (const auto& n : nodes_)
      if (n.role == r) return n.name;
    throw GraphError("no node with role " + std::string(to_string(r)));
  }
  const std::string& exposure() const { return role_node(Role::exposure); }
  const std::string& outcome() const { return role_node(Role::outcome); }
  const std::string& selection() const { return role_node(Role::selection); }

  NodeSet all_nodes() const {
    NodeSet s;
    for (const auto& n : nodes_) s.insert(n.name);
    return s;
  }
  NodeSet nodes_with_role(Role r) const {
    NodeSet s;
    for (const auto& n : nodes_)
      if (n.role == r) s.insert(n.name);
    return s;
  }
  NodeSet parents_of(const std::string& name) const { return names(parents_[index_of(name)]); }

  std::vector<bool> mask(const NodeSet& s) const {
    std::vector<bool> m(size(), false);
    for (const auto& n : s) m[index_of(n)] = true;
    return m;
  }
  NodeSet names(const std::vector<bool>& m) const {
    NodeSet s;
    for (std::size_t i = 0; i < m.size(); ++i)
      if (m[i]) s.insert(nodes_[i].name);
    return s;
  }
  NodeSet names(const std::vector<std::size_t>& idx) const {
    NodeSet s;
    for (auto i : idx) s.insert(nodes_[i].name);
    return s;
  }

  /// Copy with a subset of edges removed; node list is unchanged.
  MGraph without_edges(const std::vector<std::pair<std::size_t, std::size_t>>& drop) const {
    MGraph g = *this;
    for (auto [u, v] : drop) {
      auto& c = g.children_[u];
      c.erase(std::remove(c.begin(), c.end(), v), c.end());
      auto& p = g.parents_[v];
      p.erase(std::remove(p.begin(), p.end(), u), p.end());
    }
    return g;
  }

  std::string to_text() const {
    std::ostringstream os;
    for (const auto& n : nodes_) {
      os << "node " << n.name << " role=" << to_string(n.role);
      if (n.tier) os << " tier=" << *n.tier;
      os << '\n';
    }
    for (const auto& [u, v] : edges()) os << u << " -> " << v << '\n';
    return os.str();
  }

 private:
  bool acyclic() const {
    std::vector<int> indeg(size(), 0);
    for (std::size_t v = 0; v < size(); ++v) indeg[v] = static_cast<int>(parents_[v].size());
    std::deque<std::size_t> q;
    for (std::size_t v = 0; v < size(); ++v)
      if (indeg[v] == 0) q.push_back(v);
    std::size_t seen = 0;
    while (!q.empty()) {
      auto u = q.front();
      q.pop_front();
      ++seen;
      for (auto v : children_[u])
        if (--indeg[v] == 0) q.push_back(v);
    }
    return seen == size();
  }

  std::vector<Node> nodes_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::vector<std::size_t>> parents_, children_;
};

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

inline std::vector<std::string> split_ws(std::string_view line) {
  std::vector<std::string> out;
  std::istringstream is{std::string(line)};
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

inline Role parse_role(std::string_view v) {
  if (v == "exposure") return Role::exposure;
  if (v == "outcome") return Role::outcome;
  if (v == "selection") return Role::selection;
  if (v == "latent") return Role::latent;
  return Role::covariate;
}

}  // namespace detail

/// Parses the line-oriented graph format:
///   node <name> [role=<exposure|outcome|selection|covariate|latent>] [tier=<0|1>]
///   <name> -> <name>
/// `#` starts a comment. Node declarations may follow the edges using them.
inline MGraph parse_graph(std::string_view text) {
  using K = ParseError::Kind;
  struct EdgeLine {
    std::string from, to;
    int line;
  };
  std::vector<Node> nodes;
  std::map<std::string, int> declared_at;
  std::vector<EdgeLine> edges;
  std::map<Role, int> role_line;

  int lineno = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++lineno;
    if (auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
    auto tok = detail::split_ws(raw);
    if (tok.empty()) continue;

    if (tok[0] == "node") {
      if (tok.size() < 2) throw ParseError(K::syntax, lineno, "node statement without a name");
      Node n{tok[1], Role::covariate, std::nullopt};
      for (std::size_t i = 2; i < tok.size(); ++i) {
        const auto eq = tok[i].find('=');
        if (eq == std::string::npos) throw ParseError(K::syntax, lineno, "expected key=value, got '" + tok[i] + "'");
        const auto key = tok[i].substr(0, eq), val = tok[i].substr(eq + 1);
        if (key == "role") {
          n.role = detail::parse_role(val);
        } else if (key == "tier") {
          if (val != "0" && val != "1") throw ParseError(K::syntax, lineno, "tier must be 0 or 1");
          n.tier = val == "0" ? 0 : 1;
        } else {
          throw ParseError(K::syntax, lineno, "unknown attribute '" + key + "'");
        }
      }
      if (declared_at.count(n.name))
        throw ParseError(K::duplicate_node, lineno,
                         "node '" + n.name + "' already declared on line " + std::to_string(declared_at[n.name]));
      if (n.role != Role::covariate && n.role != Role::latent) {
        if (role_line.count(n.role))
          throw ParseError(K::duplicate_role, lineno,
                           "second node with role " + std::string(to_string(n.role)) + " (first on line " +
                               std::to_string(role_line[n.role]) + ")");
        role_line[n.role] = lineno;
      }
      declared_at[n.name] = lineno;
      nodes.push_back(std::move(n));
    } else if (tok.size() == 3 && tok[1] == "->") {
      edges.push_back({tok[0], tok[2], lineno});
    } else {
      throw ParseError(K::syntax, lineno, "unrecognised statement");
    }
  }

  std::vector<MGraph::Edge> edge_list;
  std::map<std::string, std::vector<std::string>> adj;
  auto reaches = [&adj](const std::string& from, const std::string& target) {
    std::vector<std::string> stack{from};
    std::set<std::string> seen{from};
    while (!stack.empty()) {
      auto u = stack.back();
      stack.pop_back();
      if (u == target) return true;
      for (const auto& v : adj[u])
        if (seen.insert(v).second) stack.push_back(v);
    }
    return false;
  };
  for (const auto& e : edges) {
    if (e.from == e.to) throw ParseError(K::cycle, e.line, "self-loop on '" + e.from + "'");
    for (const auto* end : {&e.from, &e.to})
      if (!declared_at.count(*end)) throw ParseError(K::undeclared_node, e.line, "undeclared node '" + *end + "'");
    if (reaches(e.to, e.from))
      throw ParseError(K::cycle, e.line, "edge " + e.from + " -> " + e.to + " closes a directed cycle");
    adj[e.from].push_back(e.to);
    edge_list.emplace_back(e.from, e.to);
  }
  for (Role r : {Role::exposure, Role::outcome, Role::selection})
    if (!role_line.count(r))
      throw ParseError(K::missing_role, lineno, "no node declared with role=" + std::string(to_string(r)));

  return MGraph::build(std::move(nodes), edge_list);
}

// ---------------------------------------------------------------------------
// Genealogic sets and graph surgery

enum class Genealogy { an, de, An, De, nd };

namespace detail {

inline std::vector<bool> reach(const MGraph& g, const std::vector<bool>& start, bool downward) {
  std::vector<bool> seen(g.size(), false);
  std::vector<std::size_t> stack;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (start[i]) stack.push_back(i);
  while (!stack.empty()) {
    auto u = stack.back();
    stack.pop_back();
    for (auto v : downward ? g.children(u) : g.parents(u))
      if (!seen[v]) {
        seen[v] = true;
        stack.push_back(v);
      }
  }
  return seen;  // strict: start nodes only if reachable through an edge
}

}  // namespace detail

inline NodeSet genealogy(const NodeSet& s, const MGraph& g, Genealogy kind) {
  const auto m = g.mask(s);
  switch (kind) {
    case Genealogy::an: return g.names(detail::reach(g, m, false));
    case Genealogy::de: return g.names(detail::reach(g, m, true));
    case Genealogy::An: return g.names(detail::reach(g, m, false)) | s;
    case Genealogy::De: return g.names(detail::reach(g, m, true)) | s;
    case Genealogy::nd: return g.all_nodes() - (g.names(detail::reach(g, m, true)) | s);
  }
  return {};
}

/// Removes every edge u -> v with u in `out_of` and v in `into`.
inline MGraph mutilate(const MGraph& g, const NodeSet& out_of, const NodeSet& into) {
  const auto from = g.mask(out_of), to = g.mask(into);
  std::vector<std::pair<std::size_t, std::size_t>> drop;
  for (std::size_t u = 0; u < g.size(); ++u)
    if (from[u])
      for (auto v : g.children(u))
        if (to[v]) drop.emplace_back(u, v);
  return g.without_edges(drop);
}

/// G with incoming edges of `s` removed.
inline MGraph overline(const MGraph& g, const NodeSet& s) { return mutilate(g, g.all_nodes(), s); }
/// G with outgoing edges of `s` removed.
inline MGraph underline(const MGraph& g, const NodeSet& s) { return mutilate(g, s, g.all_nodes()); }

/// Nodes on proper directed paths from A to Y, excluding A.
inline NodeSet proper_causal_nodes(const std::string& a, const std::string& y, const MGraph& g) {
  const NodeSet as{a}, ys{y};
  return genealogy(as, overline(g, as), Genealogy::de) & genealogy(ys, underline(g, as), Genealogy::An);
}

inline NodeSet forbidden_nodes(const std::string& a, const std::string& y, const MGraph& g) {
  return genealogy(proper_causal_nodes(a, y, g), g, Genealogy::De) | NodeSet{a};
}

inline MGraph proper_backdoor_graph(const std::string& a, const std::string& y, const MGraph& g) {
  return mutilate(g, NodeSet{a}, proper_causal_nodes(a, y, g));
}

// ---------------------------------------------------------------------------
// d-separation

namespace detail {

inline void check_disjoint(const NodeSet& x, const NodeSet& y, const NodeSet& s) {
  if (!(x & y).empty() || !(x & s).empty() || !(y & s).empty())
    throw GraphError("d-separation arguments must be pairwise disjoint");
}

/// Bayes-ball reachability: nodes d-connected to `x` given `s`.
inline std::vector<bool> dconnected(const MGraph& g, const std::vector<bool>& x, const std::vector<bool>& s) {
  std::vector<bool> anc_s = reach(g, s, false);
  for (std::size_t i = 0; i < g.size(); ++i) anc_s[i] = anc_s[i] || s[i];

  // state: node * 2 + (0 = arrived from a child / moving up, 1 = arrived from a parent / moving down)
  std::vector<bool> visited(2 * g.size(), false), reachable(g.size(), false);
  std::vector<std::size_t> stack;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (x[i]) stack.push_back(2 * i);
  while (!stack.empty()) {
    const auto st = stack.back();
    stack.pop_back();
    if (visited[st]) continue;
    visited[st] = true;
    const auto v = st / 2;
    const bool from_parent = st % 2 == 1;
    if (!s[v]) reachable[v] = true;
    if (!from_parent) {
      if (!s[v]) {
        for (auto p : g.parents(v)) stack.push_back(2 * p);
        for (auto c : g.children(v)) stack.push_back(2 * c + 1);
      }
    } else {
      if (!s[v])
        for (auto c : g.children(v)) stack.push_back(2 * c + 1);
      if (anc_s[v])
        for (auto p : g.parents(v)) stack.push_back(2 * p);
    }
  }
  return reachable;
}

}  // namespace detail

inline bool d_separated(const NodeSet& x, const NodeSet& y, const NodeSet& s, const MGraph& g) {
  detail::check_disjoint(x, y, s);
  const auto r = detail::dconnected(g, g.mask(x), g.mask(s));
  for (const auto& n : y)
    if (r[g.index_of(n)]) return false;
  return true;
}

/// One path between X and Y left open by S, if any (simple path, as node names).
inline std::optional<std::vector<std::string>> find_open_path(const NodeSet& x, const NodeSet& y, const NodeSet& s,
                                                              const MGraph& g) {
  detail::check_disjoint(x, y, s);
  const auto sm = g.mask(s), ym = g.mask(y);
  auto desc = detail::reach(g, sm, false);  // ancestors of S, i.e. nodes with a descendant in S
  for (std::size_t i = 0; i < g.size(); ++i) desc[i] = desc[i] || sm[i];

  std::vector<std::size_t> path;
  std::vector<bool> on_path(g.size(), false);
  // into_current: whether the edge used to reach the path's last node points into it
  std::optional<std::vector<std::string>> found;

  auto extend = [&](auto&& self, std::size_t u, bool arrived_into) -> bool {
    if (ym[u]) return true;
    auto try_next = [&](std::size_t v, bool into_v) {
      if (on_path[v]) return false;
      if (path.size() > 1) {
        const bool collider = arrived_into && !into_v;  // -> u <-
        if (collider ? !desc[u] : sm[u]) return false;
      }
      path.push_back(v);
      on_path[v] = true;
      if (self(self, v, into_v)) return true;
      on_path[v] = false;
      path.pop_back();
      return false;
    };
    for (auto c : g.children(u))
      if (try_next(c, true)) return true;
    for (auto p : g.parents(u))
      if (try_next(p, false)) return true;
    return false;
  };

  for (const auto& start : x) {
    const auto i = g.index_of(start);
    path = {i};
    std::fill(on_path.begin(), on_path.end(), false);
    on_path[i] = true;
    if (extend(extend, i, false)) {
      std::vector<std::string> out;
      for (auto k : path) out.push_back(g.node(k).name);
      return out;
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Sequential adjustment criteria

struct SacCondition {
  bool holds = true;
  std::string detail;
  std::vector<std::string> open_path;
};

struct SacCertificate {
  std::array<SacCondition, 3> conditions;

  bool admissible() const {
    return conditions[0].holds && conditions[1].holds && conditions[2].holds;
  }
  /// 1-based index of the first failing condition, 0 when admissible.
  int first_violation() const {
    for (int i = 0; i < 3; ++i)
      if (!conditions[i].holds) return i + 1;
    return 0;
  }
};

inline void validate_pair(const AdmissiblePair& p, const MGraph& g) {
  if (!(p.w & p.z).empty()) throw GraphError("W and Z overlap: " + (p.w & p.z).str());
  for (const auto& n : p.w | p.z) {
    const auto role = g.node(n).role;
    if (role != Role::covariate)
      throw GraphError("pair member '" + n + "' has role " + std::string(to_string(role)));
  }
}

namespace detail {

inline std::string path_text(const MGraph& g, const std::vector<std::string>& path) {
  std::string out;
  for (std::size_t i = 0; i < path.size(); ++i) {
    out += path[i];
    if (i + 1 < path.size()) out += g.has_edge(path[i], path[i + 1]) ? " -> " : " <- ";
  }
  return out;
}

}  // namespace detail

/// Checks the three conditions:
///   1. W contains no forbidden node;
///   2. W d-separates Y from A in the proper backdoor graph;
///   3. (W, A, Z) d-separates Y from R in G.
inline SacCertificate is_s_admissible(const AdmissiblePair& pair, const MGraph& g) {
  validate_pair(pair, g);
  const auto& a = g.exposure();
  const auto& y = g.outcome();
  const auto& r = g.selection();
  SacCertificate cert;

  const auto bad = pair.w & forbidden_nodes(a, y, g);
  cert.conditions[0].holds = bad.empty();
  cert.conditions[0].detail = bad.empty() ? "W contains no forbidden nodes" : "forbidden nodes in W: " + bad.str();

  const auto backdoor = proper_backdoor_graph(a, y, g);
  if (auto path = find_open_path(NodeSet{y}, NodeSet{a}, pair.w, backdoor)) {
    cert.conditions[1] = {false, "open path in proper backdoor graph: " + detail::path_text(backdoor, *path), *path};
  } else {
    cert.conditions[1].detail = "Y _||_ A | W in the proper backdoor graph";
  }

  const auto sep = pair.w | pair.z | NodeSet{a};
  if (auto path = find_open_path(NodeSet{y}, NodeSet{r}, sep, g)) {
    cert.conditions[2] = {false, "open path: " + detail::path_text(g, *path), *path};
  } else {
    cert.conditions[2].detail = "Y _||_ R | W, A, Z";
  }
  return cert;
}

struct EnumerationOptions {
  std::optional<NodeSet> candidates;  // default: every covariate node
  bool minimal_only = true;
  bool chronological = false;  // restrict W to tier 0 and Z to tier 1
};

/// All (minimal) s-admissible pairs over the candidates, in canonical order.
inline std::vector<AdmissiblePair> enumerate_pairs(const MGraph& g, const EnumerationOptions& opt = {}) {
  const NodeSet cands = opt.candidates ? *opt.candidates : g.nodes_with_role(Role::covariate);
  for (const auto& c : cands)
    if (g.node(c).role != Role::covariate) throw GraphError("candidate '" + c + "' is not an observed covariate");
  const std::vector<std::string> items = cands.sorted();
  const std::size_t k = items.size();
  if (k > 20) throw GraphError("too many candidates for exhaustive enumeration");

  const auto& a = g.exposure();
  const auto& y = g.outcome();
  const auto& r = g.selection();
  const auto fb = forbidden_nodes(a, y, g);
  const auto backdoor = proper_backdoor_graph(a, y, g);
  const std::size_t ia = g.index_of(a), iy = g.index_of(y), ir = g.index_of(r);

  std::vector<std::size_t> idx(k);
  std::uint32_t w_allowed = 0, z_allowed = 0;
  for (std::size_t j = 0; j < k; ++j) {
    idx[j] = g.index_of(items[j]);
    const auto& node = g.node(items[j]);
    if (!fb.contains(items[j]) && (!opt.chronological || node.tier == 0)) w_allowed |= 1u << j;
    if (!opt.chronological || node.tier == 1) z_allowed |= 1u << j;
  }

  // condition 2 depends on W only, condition 3 on W | Z
  std::unordered_map<std::uint32_t, bool> cond2_cache, cond3_cache;
  auto cond2 = [&](std::uint32_t wm) {
    auto it = cond2_cache.find(wm);
    if (it != cond2_cache.end()) return it->second;
    std::vector<bool> s(g.size(), false), x(g.size(), false);
    for (std::size_t j = 0; j < k; ++j)
      if (wm >> j & 1u) s[idx[j]] = true;
    x[iy] = true;
    const bool ok = !detail::dconnected(backdoor, x, s)[ia];
    cond2_cache.emplace(wm, ok);
    return ok;
  };
  auto cond3 = [&](std::uint32_t wz) {
    auto it = cond3_cache.find(wz);
    if (it != cond3_cache.end()) return it->second;
    std::vector<bool> s(g.size(), false), x(g.size(), false);
    for (std::size_t j = 0; j < k; ++j)
      if (wz >> j & 1u) s[idx[j]] = true;
    s[ia] = true;
    x[iy] = true;
    const bool ok = !detail::dconnected(g, x, s)[ir];
    cond3_cache.emplace(wz, ok);
    return ok;
  };
  auto admissible = [&](std::uint32_t wm, std::uint32_t zm) {
    if ((wm & ~w_allowed) || (zm & ~z_allowed)) return false;
    return cond2(wm) && cond3(wm | zm);
  };

  std::vector<AdmissiblePair> out;
  const std::uint32_t full = k == 0 ? 0u : (k == 32 ? ~0u : ((1u << k) - 1u));
  for (std::uint32_t wm = 0;; wm = (wm - w_allowed) & w_allowed) {  // subsets of w_allowed
    const std::uint32_t rest = z_allowed & ~wm & full;
    for (std::uint32_t zm = 0;; zm = (zm - rest) & rest) {
      if (admissible(wm, zm)) {
        bool minimal = true;
        if (opt.minimal_only) {
          for (std::size_t j = 0; j < k && minimal; ++j) {
            if ((wm >> j & 1u) && admissible(wm & ~(1u << j), zm)) minimal = false;
            if ((zm >> j & 1u) && admissible(wm, zm & ~(1u << j))) minimal = false;
          }
        }
        if (minimal) {
          AdmissiblePair p;
          for (std::size_t j = 0; j < k; ++j) {
            if (wm >> j & 1u) p.w.insert(items[j]);
            if (zm >> j & 1u) p.z.insert(items[j]);
          }
          out.push_back(std::move(p));
        }
      }
      if (zm == rest) break;
    }
    if (wm == w_allowed) break;
  }
  std::sort(out.begin(), out.end(), canonical_less);
  return out;
}

inline std::vector<AdmissiblePair> enumerate_minimal_pairs(const MGraph& g,
                                                           const std::optional<NodeSet>& candidates = std::nullopt) {
  EnumerationOptions opt;
  opt.candidates = candidates;
  return enumerate_pairs(g, opt);
}

/// W = pa(Y) \ fb, Z = (pa(Y) & fb) \ {A} when that passes the criteria.
/// Otherwise (a confounder of A and a mediator that is not a parent of Y
/// leaves a backdoor open) W = pa(A), Z = pa(Y) \ (W | {A}): pa(A) blocks every
/// backdoor path and holds no forbidden node, and pa(Y) plus non-descendants
/// of Y separate Y from R. Markovian graphs without self-selection, with A
/// not downstream of Y.
inline AdmissiblePair default_pair_markovian(const MGraph& g) {
  if (!g.nodes_with_role(Role::latent).empty()) throw GraphError("graph has latent nodes; not Markovian");
  const auto& a = g.exposure();
  const auto& y = g.outcome();
  const auto& r = g.selection();
  const auto de_y = genealogy(NodeSet{y}, g, Genealogy::de);
  if (de_y.contains(r)) throw GraphError("self-selection: R is a descendant of Y");
  if (de_y.contains(a)) throw GraphError("Y is an ancestor of A; no adjustment pair is constructed");
  const auto pa = g.parents_of(y);
  if (pa.contains(r)) throw GraphError("R is a parent of Y; no separating set exists");
  const auto fb = forbidden_nodes(a, y, g);
  AdmissiblePair p{pa - fb, (pa & fb) - NodeSet{a}};
  if (is_s_admissible(p, g).admissible()) return p;
  const auto pa_a = g.parents_of(a);
  if (!pa_a.contains(r)) return {pa_a, pa - pa_a - NodeSet{a}};
  // R -> A: neither construction applies, search instead
  const auto found = enumerate_minimal_pairs(g);
  if (found.empty()) throw GraphError("R is a parent of A and no s-admissible pair exists");
  return found.front();
}

}  // namespace seqadj
