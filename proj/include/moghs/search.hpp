#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "moghs/archive.hpp"
#include "moghs/evaluation.hpp"
#include "moghs/grammar.hpp"
#include "moghs/heuristic.hpp"
#include "moghs/search_dag.hpp"

namespace moghs {

enum class Algorithm { moghs, discrete_weights, random };

std::string_view to_string(Algorithm a);
Algorithm parse_algorithm(std::string_view name);  // accepts "dw" for discrete_weights

/// Linear anneal from start to end over the first `anneal_fraction` of the episodes.
struct EpsilonSchedule {
  double start = 1.0;
  double end = 0.1;
  double anneal_fraction = 0.5;
  double at(int episode, int episodes) const;
};

struct SearchConfig {
  int episodes = 300;
  int candidates = 16;  // K
  EpsilonSchedule epsilon;
  int opt_iter = 25;
  int minibatch = 32;         // M
  int weight_minibatch = 10;  // N_w
  int max_restarts = 20;
  std::size_t reward_set_cap = 64;
  std::uint64_t seed = 0;
  Algorithm algorithm = Algorithm::moghs;
  int hidden = 64;
  int layers = 3;
  double learning_rate = 1e-4;
  FeatureScaling scaling;
};

/// Scores terminal designs on objective i. Implementations must be deterministic given the rng.
class Evaluator {
 public:
  virtual ~Evaluator() = default;
  virtual int objectives() const = 0;
  virtual bool motion_dependent(int objective) const = 0;
  virtual std::string name(int objective) const = 0;
  virtual EvalResult evaluate(const DesignGraph& d, int objective, std::mt19937_64& rng) = 0;
};

/// Evaluator over an ObjectiveSpec list.
class SuiteEvaluator : public Evaluator {
 public:
  SuiteEvaluator(std::vector<ObjectiveSpec> specs, EvaluatorConfig cfg);
  int objectives() const override { return static_cast<int>(specs_.size()); }
  bool motion_dependent(int i) const override { return specs_[i].motion_dependent; }
  std::string name(int i) const override { return std::string(to_string(specs_[i].kind)); }
  EvalResult evaluate(const DesignGraph& d, int i, std::mt19937_64& rng) override;
  const std::vector<ObjectiveSpec>& specs() const { return specs_; }

 private:
  std::vector<ObjectiveSpec> specs_;
  EvaluatorConfig cfg_;
};

/// Adapter for closures (tests and oracles). Every objective is treated as design-only unless flagged.
class FunctionEvaluator : public Evaluator {
 public:
  using Fn = std::function<EvalResult(const DesignGraph&, int objective, std::mt19937_64&)>;
  FunctionEvaluator(int objectives, Fn fn, std::vector<bool> motion = {});
  int objectives() const override { return m_; }
  bool motion_dependent(int i) const override { return !motion_.empty() && motion_[i]; }
  std::string name(int i) const override { return "f" + std::to_string(i + 1); }
  EvalResult evaluate(const DesignGraph& d, int i, std::mt19937_64& rng) override { return fn_(d, i, rng); }

 private:
  int m_;
  Fn fn_;
  std::vector<bool> motion_;
};

struct PhaseTimings {
  double design = 0.0;  // s
  double evaluation = 0.0;
  double learning = 0.0;
};

struct EpisodeRecord {
  int index = 0;
  int subproblem = -1;  // discrete-weights weight index
  Weight weight;        // empty for the random baseline
  double epsilon = 1.0;
  DesignKey key;
  DesignGraph design;
  RewardVector reward;         // this evaluation, raw
  RewardVector design_reward;  // elementwise max over every evaluation of this design
  bool valid = false;
  int evaluator_calls = 0;
  int simulator_calls = 0;
  double loss = 0.0;  // mean pre-step loss of the learning phase
  PhaseTimings timings;
  double wall_time = 0.0;
};

struct SearchResult {
  ParetoArchive archive;
  std::vector<EpisodeRecord> log;
  std::map<DesignKey, DesignGraph> designs;  // every evaluated design
  long evaluator_calls = 0;
  long simulator_calls = 0;
  bool exhausted = false;
  std::string warning;
};

class DesignSpaceExhausted : public std::runtime_error {
 public:
  DesignSpaceExhausted() : std::runtime_error("design space exhausted") {}
};

/// Uniform on the simplex: gaps between sorted uniforms.
Weight sample_weight(std::mt19937_64& rng, int m);

/// The discrete-weights grid (i/10, 1 - i/10), i = 0..10.
std::vector<Weight> discrete_weight_grid();

/// Episode budget of subproblem i when N episodes are split over n subproblems.
int subproblem_budget(int episodes, int subproblems, int i);

/// First index of the largest score.
std::size_t argmax_first(const std::vector<double>& v);

/// With probability eps (or without scores) a uniform index in [0, n), else the argmax of scores().
std::size_t epsilon_greedy(std::size_t n, double eps, std::mt19937_64& rng,
                           const std::function<std::vector<double>()>& scores);

/// One graph heuristic search instance: DAG, heuristic and rng.
class GraphSearch {
 public:
  enum class Mode { universal, fixed_weight, random };

  GraphSearch(const Grammar& grammar, Evaluator& evaluator, const SearchConfig& cfg, Mode mode,
              std::uint64_t seed, Weight fixed_weight = {});

  /// omega . V(d, omega) in universal mode, V(d) in fixed-weight mode.
  std::vector<double> score(const std::vector<const DesignGraph*>& designs, const Weight& w) const;

  StateId rollout_design(const Weight& w, double eps);
  StateId design_phase(const Weight& w, double eps, int candidates);

  /// Evaluates every objective; invalid results mark the state invalid.
  EpisodeRecord evaluate_state(StateId s, int episode);

  /// opt_iter Adam steps; returns the mean pre-step loss (0 if nothing to learn from).
  double learning_phase();

  /// Design, evaluation and learning phases. `index` of `episodes` drives the epsilon schedule.
  EpisodeRecord run_episode(int index, int episodes);

  SearchDag& dag() { return dag_; }
  const SearchDag& dag() const { return dag_; }
  Heuristic* heuristic() { return heuristic_.get(); }
  std::mt19937_64& rng() { return rng_; }
  Mode mode() const { return mode_; }

 private:
  std::vector<LabeledGraph> make_batch();

  const Grammar* grammar_;
  Evaluator* evaluator_;
  SearchConfig cfg_;
  Mode mode_;
  std::uint64_t seed_;
  Weight fixed_weight_;
  SearchDag dag_;
  std::unique_ptr<Heuristic> heuristic_;
  std::mt19937_64 rng_;
  StateId root_;
};

using EpisodeCallback = std::function<void(const EpisodeRecord&)>;

/// Dispatches on cfg.algorithm.
SearchResult run_search(const Grammar& g, Evaluator& ev, const SearchConfig& cfg, const EpisodeCallback& cb = {});
SearchResult run_moghs(const Grammar& g, Evaluator& ev, const SearchConfig& cfg, const EpisodeCallback& cb = {});
SearchResult run_discrete_weights(const Grammar& g, Evaluator& ev, const SearchConfig& cfg,
                                  const EpisodeCallback& cb = {});
SearchResult run_random_baseline(const Grammar& g, Evaluator& ev, const SearchConfig& cfg,
                                 const EpisodeCallback& cb = {});

}  // namespace moghs
