#include "moghs/search_dag.hpp"

#include <algorithm>
#include <cassert>
#include <deque>
#include <limits>
#include <numeric>

namespace moghs {

RewardNormalizer::RewardNormalizer(int objectives)
    : lo_(Eigen::VectorXd::Zero(objectives)), hi_(Eigen::VectorXd::Zero(objectives)) {}

void RewardNormalizer::observe(const RewardVector& r) {
  if (count_ == 0) {
    lo_ = r;
    hi_ = r;
  } else {
    lo_ = lo_.cwiseMin(r);
    hi_ = hi_.cwiseMax(r);
  }
  ++count_;
}

RewardVector RewardNormalizer::normalize(const RewardVector& r) const {
  RewardVector out(r.size());
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    const double range = count_ ? hi_(i) - lo_(i) : 0.0;
    out(i) = range > 0.0 ? (r(i) - lo_(i)) / range : 0.0;
  }
  return out;
}

void prune_by_crowding(std::vector<RewardVector>& set, std::size_t cap) {
  while (set.size() > cap && set.size() > 2) {
    const std::size_t n = set.size();
    const Eigen::Index m = set.front().size();
    std::vector<double> crowd(n, 0.0);
    std::vector<std::size_t> order(n);
    for (Eigen::Index j = 0; j < m; ++j) {
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return set[a](j) < set[b](j); });
      const double span = set[order.back()](j) - set[order.front()](j);
      crowd[order.front()] = crowd[order.back()] = std::numeric_limits<double>::infinity();
      if (span <= 0.0) continue;
      for (std::size_t k = 1; k + 1 < n; ++k)
        crowd[order[k]] += (set[order[k + 1]](j) - set[order[k - 1]](j)) / span;
    }
    // earliest index wins ties so pruning is deterministic
    const auto victim = static_cast<std::size_t>(std::min_element(crowd.begin(), crowd.end()) - crowd.begin());
    set.erase(set.begin() + static_cast<long>(victim));
  }
}

SearchDag::SearchDag(const Grammar& grammar, int objectives, std::size_t reward_set_cap)
    : grammar_(&grammar), m_(objectives), cap_(reward_set_cap), normalizer_(objectives) {}

StateId SearchDag::get_or_insert(const DesignKey& key, const DesignGraph& design) {
  if (auto it = index_.find(key); it != index_.end()) return it->second;
  const auto id = static_cast<StateId>(states_.size());
  StateRecord rec;
  rec.key = key;
  rec.design = design;
  rec.terminal = is_terminal(design);
  states_.push_back(std::move(rec));
  index_.emplace(key, id);
  if (auto it = pending_.find(key); it != pending_.end()) {
    const std::vector<StateId> parents = std::move(it->second);
    pending_.erase(it);
    for (StateId p : parents) link(p, id);
  }
  return id;
}

std::optional<StateId> SearchDag::find(const DesignKey& key) const {
  if (auto it = index_.find(key); it != index_.end()) return it->second;
  return std::nullopt;
}

bool SearchDag::insert_reward(StateRecord& s, const RewardVector& r) {
  for (const RewardVector& q : s.reward_set)
    if (dominates(q, r) || q == r) return false;
  const bool was_empty = s.reward_set.empty();
  std::erase_if(s.reward_set, [&](const RewardVector& q) { return dominates(r, q); });
  s.reward_set.push_back(r);
  if (s.reward_set.size() > cap_) {
    prune_by_crowding(s.reward_set, cap_);
    if (std::find(s.reward_set.begin(), s.reward_set.end(), r) == s.reward_set.end()) return false;
  }
  if (was_empty) rewarded_.push_back(index_.at(s.key));
  return true;
}

void SearchDag::propagate(StateId from, std::vector<RewardVector> added) {
  std::deque<std::pair<StateId, std::vector<RewardVector>>> work;
  for (StateId p : state(from).parents) work.emplace_back(p, added);
  while (!work.empty()) {
    auto [id, vecs] = std::move(work.front());
    work.pop_front();
    StateRecord& s = state(id);
    if (s.invalid) continue;
    std::vector<RewardVector> kept;
    for (const RewardVector& r : vecs)
      if (insert_reward(s, r)) kept.push_back(r);
    if (kept.empty()) continue;
    for (StateId p : s.parents) work.emplace_back(p, kept);
  }
}

void SearchDag::link(StateId parent, StateId child) {
  assert(parent != child);
  StateRecord& p = state(parent);
  if (std::find(p.children.begin(), p.children.end(), child) != p.children.end()) return;
  p.children.push_back(child);
  state(child).parents.push_back(parent);

  const StateRecord& c = state(child);
  if (c.invalid) {
    if (!p.invalid && all_successors_invalid(parent)) mark_invalid(parent);
    return;
  }
  if (p.invalid || c.reward_set.empty()) return;
  std::vector<RewardVector> kept;
  for (const RewardVector& r : std::vector<RewardVector>(c.reward_set))
    if (insert_reward(state(parent), r)) kept.push_back(r);
  if (!kept.empty()) propagate(parent, std::move(kept));
}

void SearchDag::record_evaluation(StateId terminal, const RewardVector& r) {
  StateRecord& s = state(terminal);
  assert(s.terminal && !s.invalid);
  assert(r.size() == m_);
  normalizer_.observe(r);
  ++s.evaluations;
  RewardVector merged = s.own_reward ? RewardVector(s.own_reward->cwiseMax(r)) : r;
  if (s.own_reward && *s.own_reward == merged) return;
  s.own_reward = merged;
  if (insert_reward(s, merged)) propagate(terminal, {merged});
}

std::optional<RewardVector> SearchDag::target_value(StateId s, const Weight& w) const {
  const StateRecord& rec = state(s);
  if (rec.reward_set.empty()) return std::nullopt;
  const RewardVector* best = nullptr;
  double best_score = -std::numeric_limits<double>::infinity();
  RewardVector best_norm;
  for (const RewardVector& r : rec.reward_set) {
    RewardVector n = normalizer_.normalize(r);
    const double score = w.dot(n);
    if (!best || score > best_score) {
      best = &r;
      best_score = score;
      best_norm = std::move(n);
    }
  }
  return best_norm;
}

const std::vector<Successor>& SearchDag::successors(StateId s) {
  if (auto it = successor_cache_.find(s); it != successor_cache_.end()) return it->second;
  std::vector<Successor> out;
  const DesignGraph d = state(s).design;
  for (const RuleApplication& app : applicable_rules(*grammar_, d)) {
    DesignGraph next = apply_rule(*grammar_, d, app);
    DesignKey key = canonical_key(next);
    out.push_back({app, std::move(next), key});
  }
  const std::vector<Successor>& cached = successor_cache_.emplace(s, std::move(out)).first->second;
  for (const Successor& n : cached) {
    if (auto id = find(n.key))
      link(s, *id);
    else
      pending_[n.key].push_back(s);
  }
  return cached;
}

bool SearchDag::all_successors_invalid(StateId s) {
  const auto& succ = successors(s);
  if (succ.empty()) return false;
  for (const Successor& n : succ) {
    auto id = find(n.key);
    if (!id || !state(*id).invalid) return false;
  }
  return true;
}

void SearchDag::mark_invalid(StateId s) {
  std::deque<StateId> work{s};
  while (!work.empty()) {
    const StateId id = work.front();
    work.pop_front();
    StateRecord& rec = state(id);
    if (rec.invalid) continue;
    rec.invalid = true;
    rec.reward_set.clear();
    const std::vector<StateId> parents = rec.parents;
    for (StateId p : parents)
      if (!state(p).invalid && all_successors_invalid(p)) work.push_back(p);
  }
}

}  // namespace moghs
