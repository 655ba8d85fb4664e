#include "moghs/grammar.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace moghs {

namespace {

constexpr int kUnreachable = std::numeric_limits<int>::max() / 4;

bool has_physical_fields(const LinkNode& n) {
  return n.length != 0.0 || n.radius != 0.0 || n.density != 0.0 || n.attach_angle != 0.0 ||
         n.torque_limit != 0.0 || n.joint_kind != JointKind::fixed;
}

// Checks that nodes/edges form one tree and returns its root.
int fragment_root(std::size_t node_count, const std::vector<Edge>& edges, const std::string& what) {
  std::vector<int> parent(node_count, -1);
  for (const Edge& e : edges) {
    if (e.parent < 0 || e.child < 0 || e.parent >= static_cast<int>(node_count) ||
        e.child >= static_cast<int>(node_count))
      throw GrammarError(what + ": edge index out of range");
    if (e.parent == e.child) throw GrammarError(what + ": self-edge");
    if (parent[e.child] != -1) throw GrammarError(what + ": node with two parents");
    parent[e.child] = e.parent;
  }
  int root = -1;
  for (std::size_t i = 0; i < node_count; ++i) {
    if (parent[i] == -1) {
      if (root != -1) throw GrammarError(what + ": more than one root");
      root = static_cast<int>(i);
    }
  }
  if (root == -1) throw GrammarError(what + ": cycle, no root");
  // every node must reach the root
  for (std::size_t i = 0; i < node_count; ++i) {
    int v = static_cast<int>(i);
    for (std::size_t steps = 0; v != root; ++steps) {
      if (steps > node_count) throw GrammarError(what + ": cycle");
      v = parent[v];
    }
  }
  return root;
}

}  // namespace

std::vector<int> DesignGraph::children_of(int node) const {
  std::vector<int> out;
  for (const Edge& e : edges)
    if (e.parent == node) out.push_back(e.child);
  return out;
}

int DesignGraph::parent_of(int node) const {
  for (const Edge& e : edges)
    if (e.child == node) return e.parent;
  return -1;
}

std::vector<std::vector<int>> DesignGraph::child_lists() const {
  std::vector<std::vector<int>> out(nodes.size());
  for (const Edge& e : edges) out[e.parent].push_back(e.child);
  return out;
}

void validate_tree(const DesignGraph& d) {
  if (d.nodes.empty()) throw GrammarError("design has no nodes");
  if (d.edges.size() + 1 != d.nodes.size()) throw GrammarError("design edge count is not nodes - 1");
  const int root = fragment_root(d.nodes.size(), d.edges, "design");
  if (root != d.root) throw GrammarError("design root does not match its tree root");
}

Grammar::Grammar(std::vector<Symbol> symbols, std::vector<Rule> rules, int max_nodes)
    : symbols_(std::move(symbols)), rules_(std::move(rules)), max_nodes_(max_nodes) {
  if (symbols_.empty()) throw GrammarError("grammar has no symbols");
  if (max_nodes_ < 1) throw GrammarError("max_nodes must be positive");

  start_ = -1;
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    Symbol& s = symbols_[i];
    s.id = static_cast<int>(i);
    if (s.name.empty()) throw GrammarError("symbol " + std::to_string(i) + " has no name");
    for (std::size_t j = 0; j < i; ++j)
      if (symbols_[j].name == s.name) throw GrammarError("duplicate symbol " + s.name);
    if (s.name == "S") {
      if (s.terminal) throw GrammarError("start symbol S must be nonterminal");
      start_ = s.id;
    }
  }
  if (start_ < 0) throw GrammarError("grammar has no start symbol S");

  rules_by_lhs_.assign(symbols_.size(), {});
  for (std::size_t r = 0; r < rules_.size(); ++r) {
    Rule& rule = rules_[r];
    rule.id = static_cast<int>(r);
    const std::string what = "rule " + std::to_string(r);
    if (rule.lhs < 0 || rule.lhs >= static_cast<int>(symbols_.size()))
      throw GrammarError(what + ": unknown lhs symbol");
    if (symbols_[rule.lhs].terminal)
      throw GrammarError(what + ": lhs " + symbols_[rule.lhs].name + " is terminal");
    for (LinkNode& n : rule.rhs_nodes) {
      if (n.symbol < 0 || n.symbol >= static_cast<int>(symbols_.size()))
        throw GrammarError(what + ": unknown rhs symbol");
      const Symbol& s = symbols_[n.symbol];
      n.terminal = s.terminal;
      if (s.terminal) {
        if (!(n.length > 0.0) || !(n.density > 0.0) || n.radius < 0.0 || n.torque_limit < 0.0)
          throw GrammarError(what + ": terminal " + s.name + " needs length > 0 and density > 0");
      } else if (has_physical_fields(n)) {
        throw GrammarError(what + ": nonterminal " + s.name + " must have zero physical fields");
      }
    }
    if (rule.rhs_nodes.empty()) {
      if (!rule.rhs_edges.empty()) throw GrammarError(what + ": edges on an empty rhs");
      if (rule.boundary.parent != -1 || rule.boundary.children != -1)
        throw GrammarError(what + ": dangling boundary_map on an empty rhs");
    } else {
      const int n = static_cast<int>(rule.rhs_nodes.size());
      if (rule.boundary.parent < 0 || rule.boundary.parent >= n)
        throw GrammarError(what + ": dangling boundary_map parent");
      if (rule.boundary.children < 0 || rule.boundary.children >= n)
        throw GrammarError(what + ": dangling boundary_map children");
      const int root = fragment_root(rule.rhs_nodes.size(), rule.rhs_edges, what + " rhs");
      if (root != rule.boundary.parent)
        throw GrammarError(what + ": boundary_map parent must be the rhs root");
    }
    rules_by_lhs_[rule.lhs].push_back(rule.id);
  }

  for (const Symbol& s : symbols_)
    if (!s.terminal && rules_by_lhs_[s.id].empty())
      throw GrammarError("dead-end nonterminal " + s.name);

  // Rules that add no terminal node must not form a cycle, or derivations may not terminate.
  {
    const std::size_t S = symbols_.size();
    std::vector<std::vector<int>> unit(S);
    for (const Rule& rule : rules_) {
      const bool productive = std::any_of(rule.rhs_nodes.begin(), rule.rhs_nodes.end(),
                                          [](const LinkNode& n) { return n.terminal; });
      if (productive) continue;
      for (const LinkNode& n : rule.rhs_nodes) unit[rule.lhs].push_back(n.symbol);
    }
    std::vector<int> color(S, 0);
    std::function<void(int)> visit = [&](int v) {
      color[v] = 1;
      for (int w : unit[v]) {
        if (color[w] == 1) throw GrammarError("non-terminating rule cycle through " + symbols_[w].name);
        if (color[w] == 0) visit(w);
      }
      color[v] = 2;
    };
    for (std::size_t v = 0; v < S; ++v)
      if (color[v] == 0) visit(static_cast<int>(v));
  }

  // Minimal completion sizes by fixed-point relaxation.
  min_completion_.assign(symbols_.size(), kUnreachable);
  for (const Symbol& s : symbols_)
    if (s.terminal) min_completion_[s.id] = 1;
  for (bool changed = true; changed;) {
    changed = false;
    for (const Rule& rule : rules_) {
      long total = 0;
      for (const LinkNode& n : rule.rhs_nodes) total += min_completion_[n.symbol];
      if (total < min_completion_[rule.lhs]) {
        min_completion_[rule.lhs] = static_cast<int>(total);
        changed = true;
      }
    }
  }
  for (const Symbol& s : symbols_)
    if (min_completion_[s.id] >= kUnreachable)
      throw GrammarError("nonterminal " + s.name + " derives no terminal design");
  if (min_completion_[start_] > max_nodes_)
    throw GrammarError("no terminal design fits within max_nodes");
}

int Grammar::symbol_id(std::string_view name) const {
  for (const Symbol& s : symbols_)
    if (s.name == name) return s.id;
  return -1;
}

int Grammar::min_completion(const DesignGraph& d) const {
  int total = 0;
  for (const LinkNode& n : d.nodes) total += min_completion_[n.symbol];
  return total;
}

DesignGraph Grammar::initial_design() const {
  DesignGraph d;
  LinkNode n;
  n.symbol = start_;
  n.terminal = false;
  d.nodes.push_back(n);
  d.root = 0;
  return d;
}

namespace {

using nlohmann::json;

int line_of(std::string_view text, std::size_t byte) {
  byte = std::min(byte, text.size());
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<long>(byte), '\n'));
}

double number_or_zero(const json& j, const char* key) {
  if (!j.contains(key)) return 0.0;
  return j.at(key).get<double>();
}

}  // namespace

Grammar load_grammar(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    const int line = e.byte == 0 ? 1 : line_of(text, e.byte - 1);
    throw GrammarError("grammar parse error at line " + std::to_string(line) + ": " + e.what());
  }

  try {
    std::vector<Symbol> symbols;
    for (const json& s : doc.at("symbols")) {
      Symbol sym;
      sym.name = s.at("name").get<std::string>();
      sym.terminal = s.at("terminal").get<bool>();
      sym.id = static_cast<int>(symbols.size());
      symbols.push_back(std::move(sym));
    }
    auto lookup = [&](const std::string& name) {
      for (const Symbol& s : symbols)
        if (s.name == name) return s.id;
      throw GrammarError("unknown symbol " + name);
    };

    std::vector<Rule> rules;
    for (const json& r : doc.at("rules")) {
      Rule rule;
      rule.id = static_cast<int>(rules.size());
      rule.lhs = lookup(r.at("lhs").get<std::string>());
      for (const json& n : r.value("rhs_nodes", json::array())) {
        LinkNode node;
        node.symbol = lookup(n.at("symbol").get<std::string>());
        node.length = number_or_zero(n, "length");
        node.radius = number_or_zero(n, "radius");
        node.density = number_or_zero(n, "density");
        node.attach_angle = number_or_zero(n, "attach_angle");
        node.torque_limit = number_or_zero(n, "torque_limit");
        const std::string joint = n.value("joint", std::string("fixed"));
        if (joint == "revolute")
          node.joint_kind = JointKind::revolute;
        else if (joint == "fixed")
          node.joint_kind = JointKind::fixed;
        else
          throw GrammarError("rule " + std::to_string(rule.id) + ": unknown joint kind " + joint);
        rule.rhs_nodes.push_back(node);
      }
      for (const json& e : r.value("rhs_edges", json::array()))
        rule.rhs_edges.push_back({e.at(0).get<int>(), e.at(1).get<int>()});
      if (r.contains("boundary_map") && !r.at("boundary_map").is_null()) {
        const json& b = r.at("boundary_map");
        rule.boundary.parent = b.value("parent", -1);
        rule.boundary.children = b.value("children", rule.boundary.parent);
      }
      rules.push_back(std::move(rule));
    }
    return Grammar(std::move(symbols), std::move(rules), doc.at("max_nodes").get<int>());
  } catch (const json::exception& e) {
    throw GrammarError(std::string("grammar schema error: ") + e.what());
  }
}

Grammar load_grammar_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw GrammarError("cannot open grammar file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return load_grammar(buf.str());
}

std::vector<RuleApplication> applicable_rules(const Grammar& g, const DesignGraph& d) {
  std::vector<RuleApplication> out;
  const int base = g.min_completion(d);
  std::vector<int> child_count(d.nodes.size(), 0);
  for (const Edge& e : d.edges) ++child_count[e.parent];

  for (std::size_t v = 0; v < d.nodes.size(); ++v) {
    const LinkNode& node = d.nodes[v];
    if (node.terminal) continue;
    for (int r : g.rules_for(node.symbol)) {
      const Rule& rule = g.rules()[r];
      if (rule.rhs_nodes.empty() && (static_cast<int>(v) == d.root || child_count[v] > 0)) continue;
      int after = base - g.min_completion(node.symbol);
      for (const LinkNode& n : rule.rhs_nodes) after += g.min_completion(n.symbol);
      if (after > g.max_nodes()) continue;
      out.push_back({static_cast<int>(v), r});
    }
  }
  return out;
}

DesignGraph apply_rule(const Grammar& g, const DesignGraph& d, RuleApplication app) {
  assert(app.node >= 0 && app.node < static_cast<int>(d.nodes.size()));
  assert(!d.nodes[app.node].terminal);
  const Rule& rule = g.rules()[app.rule];
  assert(rule.lhs == d.nodes[app.node].symbol);

  DesignGraph out;
  std::vector<int> remap(d.nodes.size(), -1);
  for (std::size_t i = 0; i < d.nodes.size(); ++i) {
    if (static_cast<int>(i) == app.node) continue;
    remap[i] = static_cast<int>(out.nodes.size());
    out.nodes.push_back(d.nodes[i]);
  }
  const int base = static_cast<int>(out.nodes.size());
  out.nodes.insert(out.nodes.end(), rule.rhs_nodes.begin(), rule.rhs_nodes.end());

  for (const Edge& e : d.edges) {
    if (e.child == app.node) {
      if (!rule.rhs_nodes.empty()) out.edges.push_back({remap[e.parent], base + rule.boundary.parent});
    } else if (e.parent == app.node) {
      assert(!rule.rhs_nodes.empty());
      out.edges.push_back({base + rule.boundary.children, remap[e.child]});
    } else {
      out.edges.push_back({remap[e.parent], remap[e.child]});
    }
  }
  for (const Edge& e : rule.rhs_edges) out.edges.push_back({base + e.parent, base + e.child});

  if (d.root == app.node) {
    assert(!rule.rhs_nodes.empty());
    out.root = base + rule.boundary.parent;
  } else {
    out.root = remap[d.root];
  }
  return out;
}

bool is_terminal(const DesignGraph& d) {
  return std::all_of(d.nodes.begin(), d.nodes.end(), [](const LinkNode& n) { return n.terminal; });
}

namespace {

constexpr std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

struct Hasher128 {
  std::uint64_t a = 0x243f6a8885a308d3ULL;
  std::uint64_t b = 0x13198a2e03707344ULL;
  void add(std::uint64_t v) {
    a = mix64(a ^ (v + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2)));
    b = mix64(b + (v ^ 0xc2b2ae3d27d4eb4fULL) * 0x165667b19e3779f9ULL);
  }
  void add(const DesignKey& k) {
    add(k.hi);
    add(k.lo);
  }
  DesignKey done() const { return {mix64(a ^ (b >> 1)), mix64(b + a)}; }
};

std::uint64_t quantize(double x) {
  return static_cast<std::uint64_t>(std::llround(x * 1e6));
}

DesignKey subtree_key(const DesignGraph& d, const std::vector<std::vector<int>>& children, int v) {
  std::vector<DesignKey> kids;
  kids.reserve(children[v].size());
  for (int c : children[v]) kids.push_back(subtree_key(d, children, c));
  std::sort(kids.begin(), kids.end());

  const LinkNode& n = d.nodes[v];
  Hasher128 h;
  h.add(static_cast<std::uint64_t>(n.symbol));
  h.add(quantize(n.length));
  h.add(quantize(n.radius));
  h.add(quantize(n.density));
  h.add(quantize(n.attach_angle));
  h.add(static_cast<std::uint64_t>(n.joint_kind));
  h.add(quantize(n.torque_limit));
  h.add(kids.size());
  for (const DesignKey& k : kids) h.add(k);
  return h.done();
}

}  // namespace

std::string DesignKey::hex() const {
  char buf[33];
  std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(hi),
                static_cast<unsigned long long>(lo));
  return buf;
}

DesignKey canonical_key(const DesignGraph& d) {
  const auto children = d.child_lists();
  Hasher128 h;
  h.add(subtree_key(d, children, d.root));
  h.add(is_terminal(d) ? 1 : 0);
  return h.done();
}

}  // namespace moghs
