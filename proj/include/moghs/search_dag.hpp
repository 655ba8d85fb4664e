#pragma once

#include <optional>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "moghs/archive.hpp"
#include "moghs/grammar.hpp"

namespace moghs {

using StateId = int;
using Weight = Eigen::VectorXd;

/// Running per-objective bounds; maps raw rewards affinely onto [0, 1].
class RewardNormalizer {
 public:
  explicit RewardNormalizer(int objectives = 0);
  void observe(const RewardVector& r);
  RewardVector normalize(const RewardVector& r) const;
  bool empty() const { return count_ == 0; }
  const Eigen::VectorXd& lower() const { return lo_; }
  const Eigen::VectorXd& upper() const { return hi_; }

 private:
  Eigen::VectorXd lo_, hi_;
  long count_ = 0;
};

struct Successor {
  RuleApplication app;
  DesignGraph design;
  DesignKey key;
};

struct StateRecord {
  DesignKey key;
  DesignGraph design;
  bool terminal = false;
  std::vector<StateId> parents;
  std::vector<StateId> children;
  bool invalid = false;
  std::vector<RewardVector> reward_set;  // raw rewards, mutually non-dominated, insertion order
  std::optional<RewardVector> own_reward;  // terminal states: elementwise max over evaluations
  int evaluations = 0;
  int visits = 0;
};

/// Derivation DAG of every visited partial and complete design.
class SearchDag {
 public:
  SearchDag(const Grammar& grammar, int objectives, std::size_t reward_set_cap = 64);

  /// Idempotent per key; the first insertion stores the design.
  StateId get_or_insert(const DesignKey& key, const DesignGraph& design);
  StateId get_or_insert(const DesignGraph& design) { return get_or_insert(canonical_key(design), design); }
  std::optional<StateId> find(const DesignKey& key) const;

  /// Records a derivation edge and merges the child's rewards into every ancestor.
  void link(StateId parent, StateId child);

  /// Folds r into the terminal's elementwise-max reward and propagates it upward.
  void record_evaluation(StateId terminal, const RewardVector& r);

  /// Normalized reward vector of the evaluated descendant maximizing w . r; nullopt if none.
  std::optional<RewardVector> target_value(StateId s, const Weight& w) const;

  /// Flags s invalid and recursively flags parents whose every expansion is known-invalid.
  void mark_invalid(StateId s);

  /// One-step expansions of s (cached). The first call links s to every successor already in
  /// the DAG; successors inserted later are linked on insertion.
  const std::vector<Successor>& successors(StateId s);
  bool expanded(StateId s) const { return successor_cache_.count(s) > 0; }

  const StateRecord& state(StateId s) const { return states_[static_cast<std::size_t>(s)]; }
  StateRecord& state(StateId s) { return states_[static_cast<std::size_t>(s)]; }
  std::size_t size() const { return states_.size(); }
  int objectives() const { return m_; }
  const Grammar& grammar() const { return *grammar_; }
  const RewardNormalizer& normalizer() const { return normalizer_; }

  /// States whose reward_set became nonempty, in that order.
  const std::vector<StateId>& rewarded_states() const { return rewarded_; }

 private:
  bool insert_reward(StateRecord& s, const RewardVector& r);
  void propagate(StateId from, std::vector<RewardVector> added);
  bool all_successors_invalid(StateId s);

  const Grammar* grammar_;
  int m_;
  std::size_t cap_;
  std::vector<StateRecord> states_;
  std::unordered_map<DesignKey, StateId> index_;
  std::vector<StateId> rewarded_;
  RewardNormalizer normalizer_;
  std::unordered_map<StateId, std::vector<Successor>> successor_cache_;
  std::unordered_map<DesignKey, std::vector<StateId>> pending_;  // expanded parents of keys not yet inserted
};

/// Removes the vector with the smallest crowding distance until at most cap remain.
void prune_by_crowding(std::vector<RewardVector>& set, std::size_t cap);

}  // namespace moghs
