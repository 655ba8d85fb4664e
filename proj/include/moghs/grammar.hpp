#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace moghs {

class GrammarError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class JointKind { fixed, revolute };

struct Symbol {
  int id = 0;
  std::string name;
  bool terminal = false;
};

/// One link of a design. Nonterminal placeholders carry zero physical fields.
struct LinkNode {
  int symbol = 0;
  bool terminal = false;  // copy of the symbol's flag so designs are self-describing
  double length = 0.0;        // m
  double radius = 0.0;        // m
  double density = 0.0;       // kg/m^3
  double attach_angle = 0.0;  // rad, rest angle relative to the parent link
  JointKind joint_kind = JointKind::fixed;
  double torque_limit = 0.0;  // N*m
  friend bool operator==(const LinkNode&, const LinkNode&) = default;
};

struct Edge {
  int parent = 0;
  int child = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
};

/// A rooted tree of links; edges point from parent to child.
struct DesignGraph {
  std::vector<LinkNode> nodes;
  std::vector<Edge> edges;
  int root = 0;

  std::size_t size() const { return nodes.size(); }
  std::vector<int> children_of(int node) const;
  int parent_of(int node) const;  // -1 for the root
  std::vector<std::vector<int>> child_lists() const;
  friend bool operator==(const DesignGraph&, const DesignGraph&) = default;
};

/// Throws GrammarError if d is not a tree rooted at d.root.
void validate_tree(const DesignGraph& d);

/// Where the matched node's parent edge and child edges reconnect inside the RHS.
struct BoundaryMap {
  int parent = -1;    // RHS node receiving the incoming edge; -1 iff the RHS is empty
  int children = -1;  // RHS node adopting the matched node's children
};

struct Rule {
  int id = 0;
  int lhs = 0;
  std::vector<LinkNode> rhs_nodes;
  std::vector<Edge> rhs_edges;
  BoundaryMap boundary;
};

struct RuleApplication {
  int node = 0;
  int rule = 0;
  friend bool operator==(const RuleApplication&, const RuleApplication&) = default;
};

class Grammar {
 public:
  /// Validates every invariant; throws GrammarError naming the offending symbol or rule.
  Grammar(std::vector<Symbol> symbols, std::vector<Rule> rules, int max_nodes);

  const std::vector<Symbol>& symbols() const { return symbols_; }
  const std::vector<Rule>& rules() const { return rules_; }
  const std::vector<int>& rules_for(int symbol) const { return rules_by_lhs_[symbol]; }
  int max_nodes() const { return max_nodes_; }
  int start_symbol() const { return start_; }
  int symbol_id(std::string_view name) const;  // -1 if unknown

  /// Fewest nodes of any terminal design derivable from the symbol.
  int min_completion(int symbol) const { return min_completion_[symbol]; }
  /// Fewest nodes of any terminal design derivable from d.
  int min_completion(const DesignGraph& d) const;

  DesignGraph initial_design() const;

 private:
  std::vector<Symbol> symbols_;
  std::vector<Rule> rules_;
  std::vector<std::vector<int>> rules_by_lhs_;
  std::vector<int> min_completion_;
  int max_nodes_ = 0;
  int start_ = 0;
};

/// Parses and validates a grammar document (JSON). Parse errors report the line.
Grammar load_grammar(std::string_view text);
Grammar load_grammar_file(const std::string& path);

/// Every (nonterminal node, rule) pair whose result can still finish within max_nodes.
/// The cap is enforced on the minimal terminal completion, so no derivation dead-ends.
std::vector<RuleApplication> applicable_rules(const Grammar& g, const DesignGraph& d);

/// Replaces the matched node by the rule's RHS; d is not modified.
DesignGraph apply_rule(const Grammar& g, const DesignGraph& d, RuleApplication app);

bool is_terminal(const DesignGraph& d);

/// 128-bit structural hash; equal for isomorphic trees with equal (quantized) attributes.
struct DesignKey {
  std::uint64_t hi = 0;
  std::uint64_t lo = 0;
  friend auto operator<=>(const DesignKey&, const DesignKey&) = default;
  std::string hex() const;
};

DesignKey canonical_key(const DesignGraph& d);

}  // namespace moghs

template <>
struct std::hash<moghs::DesignKey> {
  std::size_t operator()(const moghs::DesignKey& k) const noexcept {
    return static_cast<std::size_t>(k.lo ^ (k.hi * 0x9e3779b97f4a7c15ULL));
  }
};
