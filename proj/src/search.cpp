#include "moghs/search.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>

namespace moghs {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) {
  return splitmix(splitmix(splitmix(base) ^ a) ^ b);
}

template <typename Rng>
std::size_t uniform_index(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

}  // namespace

std::size_t argmax_first(const std::vector<double>& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

std::size_t epsilon_greedy(std::size_t n, double eps, std::mt19937_64& rng,
                           const std::function<std::vector<double>()>& scores) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  if (u01(rng) < eps || !scores) return uniform_index(rng, n);
  return argmax_first(scores());
}

std::string_view to_string(Algorithm a) {
  switch (a) {
    case Algorithm::moghs: return "moghs";
    case Algorithm::discrete_weights: return "discrete_weights";
    case Algorithm::random: return "random";
  }
  return "unknown";
}

Algorithm parse_algorithm(std::string_view name) {
  if (name == "moghs") return Algorithm::moghs;
  if (name == "dw" || name == "discrete_weights") return Algorithm::discrete_weights;
  if (name == "random") return Algorithm::random;
  throw std::invalid_argument("unknown algorithm " + std::string(name));
}

double EpsilonSchedule::at(int episode, int episodes) const {
  const double span = anneal_fraction * episodes;
  if (span <= 0.0) return end;
  const double t = std::min(1.0, static_cast<double>(episode) / span);
  return start + (end - start) * t;
}

SuiteEvaluator::SuiteEvaluator(std::vector<ObjectiveSpec> specs, EvaluatorConfig cfg)
    : specs_(std::move(specs)), cfg_(std::move(cfg)) {}

EvalResult SuiteEvaluator::evaluate(const DesignGraph& d, int i, std::mt19937_64& rng) {
  return moghs::evaluate(d, specs_[i], cfg_, rng);
}

FunctionEvaluator::FunctionEvaluator(int objectives, Fn fn, std::vector<bool> motion)
    : m_(objectives), fn_(std::move(fn)), motion_(std::move(motion)) {}

Weight sample_weight(std::mt19937_64& rng, int m) {
  if (m < 1) throw std::invalid_argument("sample_weight: m must be positive");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> cuts(static_cast<std::size_t>(m - 1));
  for (double& c : cuts) c = u(rng);
  std::sort(cuts.begin(), cuts.end());
  Weight w(m);
  double prev = 0.0;
  for (int i = 0; i < m - 1; ++i) {
    w(i) = cuts[i] - prev;
    prev = cuts[i];
  }
  w(m - 1) = 1.0 - prev;
  return w;
}

std::vector<Weight> discrete_weight_grid() {
  std::vector<Weight> grid;
  for (int i = 0; i <= 10; ++i) {
    Weight w(2);
    w << i / 10.0, 1.0 - i / 10.0;
    grid.push_back(w);
  }
  return grid;
}

int subproblem_budget(int episodes, int subproblems, int i) {
  return episodes / subproblems + (i < episodes % subproblems ? 1 : 0);
}

GraphSearch::GraphSearch(const Grammar& grammar, Evaluator& evaluator, const SearchConfig& cfg, Mode mode,
                         std::uint64_t seed, Weight fixed_weight)
    : grammar_(&grammar),
      evaluator_(&evaluator),
      cfg_(cfg),
      mode_(mode),
      seed_(seed),
      fixed_weight_(std::move(fixed_weight)),
      dag_(grammar, evaluator.objectives(), cfg.reward_set_cap),
      rng_(derive_seed(seed, 1)) {
  const int m = evaluator.objectives();
  if (mode_ == Mode::fixed_weight && fixed_weight_.size() != m)
    throw std::invalid_argument("fixed-weight search needs a weight of length m");
  if (mode_ != Mode::random) {
    HeuristicConfig hc;
    hc.symbols = static_cast<int>(grammar.symbols().size());
    hc.weight_dim = mode_ == Mode::universal ? m : 0;
    hc.outputs = mode_ == Mode::universal ? m : 1;
    hc.hidden = cfg.hidden;
    hc.layers = cfg.layers;
    hc.learning_rate = cfg.learning_rate;
    hc.scaling = cfg.scaling;
    heuristic_ = std::make_unique<Heuristic>(hc, derive_seed(seed, 2));
  }
  root_ = dag_.get_or_insert(grammar.initial_design());
}

std::vector<double> GraphSearch::score(const std::vector<const DesignGraph*>& designs, const Weight& w) const {
  std::vector<double> out(designs.size(), 0.0);
  if (!heuristic_ || designs.empty()) return out;
  const HeuristicConfig& hc = heuristic_->config();
  const Weight block = mode_ == Mode::universal ? w : Weight();
  std::vector<GraphFeatures> feats;
  feats.reserve(designs.size());
  for (const DesignGraph* d : designs) feats.push_back(featurize(*d, block, hc));
  const Eigen::MatrixXd pred = heuristic_->predict(feats);
  for (std::size_t i = 0; i < designs.size(); ++i) {
    const auto row = pred.row(static_cast<Eigen::Index>(i));
    out[i] = mode_ == Mode::universal ? row.dot(w) : row(0);
  }
  return out;
}

StateId GraphSearch::rollout_design(const Weight& w, double eps) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int attempt = 0; attempt <= cfg_.max_restarts; ++attempt) {
    if (dag_.state(root_).invalid) throw DesignSpaceExhausted();
    StateId cur = root_;
    bool dead = false;
    while (!dag_.state(cur).terminal) {
      ++dag_.state(cur).visits;
      const std::vector<Successor>& succ = dag_.successors(cur);
      std::vector<const Successor*> open;
      for (const Successor& s : succ) {
        if (auto id = dag_.find(s.key); id && dag_.state(*id).invalid) continue;
        open.push_back(&s);
      }
      if (open.empty()) {
        dag_.mark_invalid(cur);
        dead = true;
        break;
      }
      std::function<std::vector<double>()> scores;
      if (heuristic_)
        scores = [&] {
          std::vector<const DesignGraph*> designs;
          for (const Successor* s : open) designs.push_back(&s->design);
          return score(designs, w);
        };
      const Successor* pick = open[epsilon_greedy(open.size(), eps, rng_, scores)];
      const StateId next = dag_.get_or_insert(pick->key, pick->design);
      dag_.link(cur, next);
      cur = next;
    }
    if (!dead) {
      ++dag_.state(cur).visits;
      return cur;
    }
  }
  throw DesignSpaceExhausted();
}

StateId GraphSearch::design_phase(const Weight& w, double eps, int candidates) {
  std::vector<StateId> pool;
  for (int k = 0; k < std::max(1, candidates); ++k) pool.push_back(rollout_design(w, eps));
  if (pool.size() == 1) return pool.front();
  std::function<std::vector<double>()> scores;
  if (heuristic_)
    scores = [&] {
      std::vector<const DesignGraph*> designs;
      for (StateId s : pool) designs.push_back(&dag_.state(s).design);
      return score(designs, w);
    };
  return pool[epsilon_greedy(pool.size(), eps, rng_, scores)];
}

EpisodeRecord GraphSearch::evaluate_state(StateId s, int episode) {
  const int m = evaluator_->objectives();
  EpisodeRecord rec;
  rec.key = dag_.state(s).key;
  rec.reward = RewardVector::Zero(m);
  rec.valid = true;
  const DesignGraph design = dag_.state(s).design;
  rec.design = design;
  for (int i = 0; i < m; ++i) {
    std::mt19937_64 erng(derive_seed(seed_, 1000 + static_cast<std::uint64_t>(episode), static_cast<std::uint64_t>(i)));
    const EvalResult r = evaluator_->evaluate(design, i, erng);
    ++rec.evaluator_calls;
    if (evaluator_->motion_dependent(i)) ++rec.simulator_calls;
    rec.reward(i) = r.reward;
    rec.valid = rec.valid && r.valid && std::isfinite(r.reward);
  }
  if (rec.valid) {
    dag_.record_evaluation(s, rec.reward);
    rec.design_reward = *dag_.state(s).own_reward;
  } else {
    dag_.mark_invalid(s);
  }
  return rec;
}

std::vector<LabeledGraph> GraphSearch::make_batch() {
  std::vector<StateId> pool;
  for (StateId s : dag_.rewarded_states())
    if (!dag_.state(s).invalid && !dag_.state(s).reward_set.empty()) pool.push_back(s);
  std::vector<LabeledGraph> batch;
  if (pool.empty()) return batch;

  const HeuristicConfig& hc = heuristic_->config();
  const int m = evaluator_->objectives();
  // one weight set W per step, paired with every sampled design
  std::vector<Weight> weights;
  if (mode_ == Mode::universal)
    for (int j = 0; j < cfg_.weight_minibatch; ++j) weights.push_back(sample_weight(rng_, m));
  else
    weights.push_back(fixed_weight_);
  batch.reserve(static_cast<std::size_t>(cfg_.minibatch) * weights.size());
  for (int k = 0; k < cfg_.minibatch; ++k) {
    const StateId id = pool[uniform_index(rng_, pool.size())];
    const StateRecord& st = dag_.state(id);
    for (const Weight& w : weights) {
      const RewardVector target = *dag_.target_value(id, w);
      if (mode_ == Mode::universal) {
        batch.push_back({featurize(st.design, w, hc), target});
      } else {
        Eigen::VectorXd t(1);
        t(0) = w.dot(target);
        batch.push_back({featurize(st.design, Weight(), hc), t});
      }
    }
  }
  return batch;
}

double GraphSearch::learning_phase() {
  if (!heuristic_ || cfg_.opt_iter <= 0) return 0.0;
  double total = 0.0;
  int steps = 0;
  for (int it = 0; it < cfg_.opt_iter; ++it) {
    const std::vector<LabeledGraph> batch = make_batch();
    if (batch.empty()) break;
    total += heuristic_->train_step(batch);
    ++steps;
  }
  return steps ? total / steps : 0.0;
}

EpisodeRecord GraphSearch::run_episode(int index, int episodes) {
  const auto t0 = Clock::now();
  Weight w;
  if (mode_ == Mode::universal) w = sample_weight(rng_, evaluator_->objectives());
  if (mode_ == Mode::fixed_weight) w = fixed_weight_;
  const double eps = mode_ == Mode::random ? 1.0 : cfg_.epsilon.at(index, episodes);

  const StateId s = mode_ == Mode::random ? rollout_design(w, 1.0) : design_phase(w, eps, cfg_.candidates);
  const double t_design = seconds_since(t0);

  const auto t1 = Clock::now();
  EpisodeRecord rec = evaluate_state(s, index);
  const double t_eval = seconds_since(t1);

  const auto t2 = Clock::now();
  if (rec.valid) rec.loss = learning_phase();
  rec.timings = {t_design, t_eval, seconds_since(t2)};
  rec.index = index;
  rec.weight = w;
  rec.epsilon = eps;
  rec.wall_time = seconds_since(t0);
  return rec;
}

namespace {

void account(SearchResult& res, EpisodeRecord& rec, int global_index, const EpisodeCallback& cb) {
  rec.index = global_index;
  if (rec.valid) res.archive.insert(rec.key, rec.design_reward, global_index);
  res.designs.emplace(rec.key, rec.design);
  res.evaluator_calls += rec.evaluator_calls;
  res.simulator_calls += rec.simulator_calls;
  if (cb) cb(rec);
  res.log.push_back(rec);
}

void exhausted(SearchResult& res, int done, int total) {
  res.exhausted = true;
  res.warning = "design space exhausted after " + std::to_string(done) + " of " + std::to_string(total) +
                " episodes; archive is partial";
  std::cerr << "warning: " << res.warning << '\n';
}

SearchResult single_engine(const Grammar& g, Evaluator& ev, const SearchConfig& cfg, GraphSearch::Mode mode,
                           const EpisodeCallback& cb) {
  SearchResult res;
  res.archive = ParetoArchive(ev.objectives());
  GraphSearch gs(g, ev, cfg, mode, cfg.seed);
  for (int e = 0; e < cfg.episodes; ++e) {
    EpisodeRecord rec;
    try {
      rec = gs.run_episode(e, cfg.episodes);
    } catch (const DesignSpaceExhausted&) {
      exhausted(res, e, cfg.episodes);
      break;
    }
    account(res, rec, e, cb);
  }
  return res;
}

}  // namespace

SearchResult run_moghs(const Grammar& g, Evaluator& ev, const SearchConfig& cfg, const EpisodeCallback& cb) {
  return single_engine(g, ev, cfg, GraphSearch::Mode::universal, cb);
}

SearchResult run_random_baseline(const Grammar& g, Evaluator& ev, const SearchConfig& cfg,
                                 const EpisodeCallback& cb) {
  return single_engine(g, ev, cfg, GraphSearch::Mode::random, cb);
}

SearchResult run_discrete_weights(const Grammar& g, Evaluator& ev, const SearchConfig& cfg,
                                  const EpisodeCallback& cb) {
  if (ev.objectives() != 2)
    throw std::invalid_argument("discrete weights needs exactly 2 objectives, got " +
                                std::to_string(ev.objectives()));
  SearchResult res;
  res.archive = ParetoArchive(2);
  const std::vector<Weight> grid = discrete_weight_grid();
  const int n = static_cast<int>(grid.size());
  int global = 0;
  for (int i = 0; i < n; ++i) {
    const int budget = subproblem_budget(cfg.episodes, n, i);
    if (budget == 0) continue;
    GraphSearch gs(g, ev, cfg, GraphSearch::Mode::fixed_weight, derive_seed(cfg.seed, 77, static_cast<std::uint64_t>(i)),
                   grid[i]);
    for (int e = 0; e < budget; ++e) {
      EpisodeRecord rec;
      try {
        rec = gs.run_episode(e, budget);
      } catch (const DesignSpaceExhausted&) {
        exhausted(res, global, cfg.episodes);
        break;
      }
      rec.subproblem = i;
      account(res, rec, global++, cb);
    }
  }
  return res;
}

SearchResult run_search(const Grammar& g, Evaluator& ev, const SearchConfig& cfg, const EpisodeCallback& cb) {
  if (ev.objectives() < 2) throw std::invalid_argument("search needs at least 2 objectives");
  switch (cfg.algorithm) {
    case Algorithm::moghs: return run_moghs(g, ev, cfg, cb);
    case Algorithm::discrete_weights: return run_discrete_weights(g, ev, cfg, cb);
    case Algorithm::random: return run_random_baseline(g, ev, cfg, cb);
  }
  throw std::invalid_argument("unknown algorithm");
}

}  // namespace moghs
