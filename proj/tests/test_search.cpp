#include <doctest.h>

#include <cmath>
#include <set>
#include <stdexcept>

#include "moghs/search.hpp"
#include "test_util.hpp"

using namespace moghs;

namespace {

std::string link_json(double length) {
  return R"({"symbol": "body", "length": )" + std::to_string(length) +
         R"(, "radius": 0.02, "density": 1000.0, "attach_angle": 0.0, "joint": "revolute", "torque_limit": 4.0})";
}

// S -> one body link, one rule per length.
Grammar one_step_grammar(const std::vector<double>& lengths) {
  std::string rules;
  for (double l : lengths) {
    if (!rules.empty()) rules += ",";
    rules += R"({"lhs": "S", "rhs_nodes": [)" + link_json(l) +
             R"(], "rhs_edges": [], "boundary_map": {"parent": 0, "children": 0}})";
  }
  return load_grammar(R"({"max_nodes": 2, "symbols": [{"name": "S", "terminal": false}, {"name": "body", "terminal": true}], "rules": [)" +
                      rules + "]}");
}

SearchConfig small_config(int episodes, std::uint64_t seed = 0) {
  SearchConfig cfg;
  cfg.episodes = episodes;
  cfg.seed = seed;
  cfg.hidden = 8;
  cfg.layers = 1;
  cfg.opt_iter = 2;
  cfg.minibatch = 4;
  cfg.weight_minibatch = 2;
  cfg.candidates = 4;
  return cfg;
}

EvalResult ok(double r) {
  EvalResult e;
  e.valid = true;
  e.reward = r;
  return e;
}

// Rewards depend on the design only: node count and total length.
FunctionEvaluator shape_evaluator(int m, std::vector<bool> motion = {}) {
  return FunctionEvaluator(
      m,
      [](const DesignGraph& d, int i, std::mt19937_64&) {
        double len = 0.0;
        for (const auto& n : d.nodes) len += n.length;
        return ok(i == 0 ? 1.0 / d.size() : (i == 1 ? len : 0.5 * i));
      },
      std::move(motion));
}

bool same_log(const SearchResult& a, const SearchResult& b) {
  if (a.log.size() != b.log.size()) return false;
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    const EpisodeRecord &x = a.log[i], &y = b.log[i];
    if (!(x.key == y.key) || x.valid != y.valid || x.subproblem != y.subproblem || x.epsilon != y.epsilon) return false;
    if (x.weight.size() != y.weight.size() || (x.weight.size() && x.weight != y.weight)) return false;
    if (x.reward != y.reward || x.loss != y.loss) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("preference weights are uniform on the simplex") {
  std::mt19937_64 rng(0);
  const int draws = 100000;
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  double worst_sum = 0.0;
  for (int k = 0; k < draws; ++k) {
    const Weight w = sample_weight(rng, 3);
    REQUIRE(w.size() == 3);
    CHECK((w.array() >= 0.0).all());
    worst_sum = std::max(worst_sum, std::abs(w.sum() - 1.0));
    mean += w / draws;
  }
  CHECK(worst_sum <= 4e-16);
  for (int i = 0; i < 3; ++i) CHECK(std::abs(mean(i) - 1.0 / 3.0) < 0.01);
  // Dirichlet(1,1,1): the first coordinate has density 2(1 - x), so P(w0 < 0.5) = 3/4
  int below = 0;
  for (int k = 0; k < 20000; ++k) below += sample_weight(rng, 3)(0) < 0.5;
  CHECK(below / 20000.0 == doctest::Approx(0.75).epsilon(0.02));
  CHECK(sample_weight(rng, 1)(0) == 1.0);
}

TEST_CASE("epsilon anneals linearly over the first half then holds") {
  const EpsilonSchedule e;
  CHECK(e.at(0, 300) == 1.0);
  CHECK(e.at(75, 300) == doctest::Approx(0.55));
  CHECK(e.at(150, 300) == doctest::Approx(0.1));
  CHECK(e.at(299, 300) == doctest::Approx(0.1));
}

TEST_CASE("epsilon-greedy selection") {
  std::mt19937_64 rng(1);
  const std::vector<double> scores{0.2, 0.9, 0.5};
  for (int k = 0; k < 100; ++k) CHECK(epsilon_greedy(3, 0.0, rng, [&] { return scores; }) == 1);
  CHECK(argmax_first({1.0, 3.0, 3.0}) == 1);
  // eps = 1 and the score-free case are uniform
  std::vector<int> hits(3, 0);
  for (int k = 0; k < 30000; ++k) ++hits[epsilon_greedy(3, 1.0, rng, [&] { return scores; })];
  for (int h : hits) CHECK(h / 30000.0 == doctest::Approx(1.0 / 3.0).epsilon(0.05));
  hits.assign(3, 0);
  for (int k = 0; k < 30000; ++k) ++hits[epsilon_greedy(3, 0.0, rng, {})];
  for (int h : hits) CHECK(h / 30000.0 == doctest::Approx(1.0 / 3.0).epsilon(0.05));
}

TEST_CASE("greedy search follows a trained heuristic") {
  const Grammar g = one_step_grammar({0.1, 0.2, 0.3});
  FunctionEvaluator ev = shape_evaluator(2);
  SearchConfig cfg = small_config(1);
  cfg.learning_rate = 1e-2;
  GraphSearch gs(g, ev, cfg, GraphSearch::Mode::universal, 3);
  Heuristic& h = *gs.heuristic();

  std::vector<DesignGraph> designs;
  for (const auto& app : applicable_rules(g, g.initial_design())) designs.push_back(apply_rule(g, g.initial_design(), app));
  REQUIRE(designs.size() == 3);
  // the 0.2 link is the best design for every preference
  std::vector<LabeledGraph> batch;
  std::mt19937_64 rng(4);
  for (int j = 0; j < 6; ++j) {
    const Weight w = sample_weight(rng, 2);
    for (int d = 0; d < 3; ++d)
      batch.push_back({featurize(designs[d], w, h.config()), Eigen::Vector2d::Constant(d == 1 ? 0.9 : (d == 0 ? 0.2 : 0.5))});
  }
  for (int step = 0; step < 500; ++step) h.train_step(batch);

  for (int k = 0; k < 10; ++k) {
    const Weight w = sample_weight(rng, 2);
    const std::vector<double> s = gs.score({&designs[0], &designs[1], &designs[2]}, w);
    CHECK(argmax_first(s) == 1);
    const StateId id = gs.design_phase(w, 0.0, 4);
    CHECK(gs.dag().state(id).design.nodes[0].length == doctest::Approx(0.2));
  }
}

TEST_CASE("K = 1 takes the single rollout") {
  const Grammar g = one_step_grammar({0.1, 0.2, 0.3});
  FunctionEvaluator ev = shape_evaluator(2);
  GraphSearch a(g, ev, small_config(1), GraphSearch::Mode::universal, 5);
  GraphSearch b(g, ev, small_config(1), GraphSearch::Mode::universal, 5);
  const Weight w = Eigen::Vector2d(0.5, 0.5);
  for (int k = 0; k < 20; ++k) CHECK(a.design_phase(w, 0.5, 1) == b.rollout_design(w, 0.5));
}

TEST_CASE("a single-derivation grammar always yields its one design") {
  const Grammar g = one_step_grammar({0.15});
  FunctionEvaluator ev = shape_evaluator(2);
  for (Algorithm a : {Algorithm::moghs, Algorithm::discrete_weights, Algorithm::random}) {
    SearchConfig cfg = small_config(11);
    cfg.algorithm = a;
    const SearchResult res = run_search(g, ev, cfg);
    REQUIRE(res.log.size() == 11);
    for (const auto& rec : res.log) CHECK(rec.key == res.log[0].key);
    CHECK(res.archive.size() == 1);
    CHECK(res.designs.size() == 1);
  }
}

TEST_CASE("zero episodes give an empty archive") {
  FunctionEvaluator ev = shape_evaluator(2);
  for (Algorithm a : {Algorithm::moghs, Algorithm::discrete_weights, Algorithm::random}) {
    SearchConfig cfg = small_config(0);
    cfg.algorithm = a;
    const SearchResult res = run_search(testutil::tiny(), ev, cfg);
    CHECK(res.archive.empty());
    CHECK(res.log.empty());
    CHECK(res.evaluator_calls == 0);
    CHECK_FALSE(res.exhausted);
  }
}

TEST_CASE("repeated evaluations of one design keep the elementwise max") {
  const Grammar g = one_step_grammar({0.15});
  const std::vector<Eigen::Vector2d> draws{{3, 1}, {1, 3}, {2, 2}};
  int call = 0;
  FunctionEvaluator ev(2, [&](const DesignGraph&, int i, std::mt19937_64&) {
    const EvalResult r = ok(draws[call / 2](i));
    ++call;
    return r;
  });
  const SearchResult res = run_moghs(g, ev, small_config(3));
  REQUIRE(res.archive.size() == 1);
  CHECK(res.archive.entries()[0].reward == Eigen::Vector2d(3, 3));
  CHECK(res.log.back().design_reward == Eigen::Vector2d(3, 3));
  CHECK(res.log.back().reward == Eigen::Vector2d(2, 2));
}

TEST_CASE("discrete weights split the budget over the 11-point grid") {
  const auto grid = discrete_weight_grid();
  REQUIRE(grid.size() == 11);
  CHECK(grid[3](0) == doctest::Approx(0.3));
  CHECK(grid[3](1) == doctest::Approx(0.7));
  FunctionEvaluator ev = shape_evaluator(2);
  for (int n : {22, 25}) {
    SearchConfig cfg = small_config(n);
    cfg.algorithm = Algorithm::discrete_weights;
    const SearchResult res = run_search(testutil::tiny(), ev, cfg);
    REQUIRE(res.log.size() == static_cast<std::size_t>(n));
    std::vector<int> per(11, 0);
    for (std::size_t e = 0; e < res.log.size(); ++e) {
      const auto& rec = res.log[e];
      ++per[rec.subproblem];
      CHECK(rec.index == static_cast<int>(e));
      CHECK(rec.weight == grid[rec.subproblem]);
    }
    for (int i = 0; i < 11; ++i) CHECK(per[i] == subproblem_budget(n, 11, i));
    if (n == 22)
      for (int c : per) CHECK(c == 2);
  }
  CHECK(subproblem_budget(25, 11, 0) == 3);
  CHECK(subproblem_budget(25, 11, 3) == 2);
  CHECK(subproblem_budget(5, 11, 7) == 0);

  FunctionEvaluator three = shape_evaluator(3);
  SearchConfig cfg = small_config(5);
  cfg.algorithm = Algorithm::discrete_weights;
  CHECK_THROWS_AS(run_search(testutil::tiny(), three, cfg), std::invalid_argument);
  FunctionEvaluator one = shape_evaluator(1);
  cfg.algorithm = Algorithm::moghs;
  CHECK_THROWS_AS(run_search(testutil::tiny(), one, cfg), std::invalid_argument);
  CHECK(parse_algorithm("dw") == Algorithm::discrete_weights);
  CHECK_THROWS_AS(parse_algorithm("nsga"), std::invalid_argument);
}

TEST_CASE("every algorithm spends exactly the same evaluation budget") {
  FunctionEvaluator ev = shape_evaluator(2, {true, false});
  std::vector<long> calls, sims;
  for (Algorithm a : {Algorithm::moghs, Algorithm::discrete_weights, Algorithm::random}) {
    SearchConfig cfg = small_config(33, 9);
    cfg.algorithm = a;
    const SearchResult res = run_search(testutil::crawler(), ev, cfg);
    REQUIRE(res.log.size() == 33);
    calls.push_back(res.evaluator_calls);
    sims.push_back(res.simulator_calls);
    for (const auto& rec : res.log) {
      CHECK(rec.evaluator_calls == 2);
      CHECK(rec.simulator_calls == 1);  // one motion objective: one simulator run per episode
    }
  }
  CHECK(calls == std::vector<long>{66, 66, 66});
  CHECK(sims == std::vector<long>{33, 33, 33});
}

TEST_CASE("a fixed seed reproduces the run exactly") {
  testutil::DesignHeightEvaluator ev;
  for (Algorithm a : {Algorithm::moghs, Algorithm::discrete_weights, Algorithm::random}) {
    SearchConfig cfg = small_config(24, 11);
    cfg.algorithm = a;
    const SearchResult x = run_search(testutil::tiny(), ev, cfg);
    const SearchResult y = run_search(testutil::tiny(), ev, cfg);
    CHECK(same_log(x, y));
    cfg.seed = 12;
    const SearchResult z = run_search(testutil::tiny(), ev, cfg);
    CHECK_FALSE(same_log(x, z));
  }
}

TEST_CASE("an all-invalid design space ends the run early with a warning") {
  FunctionEvaluator ev(2, [](const DesignGraph&, int, std::mt19937_64&) { return EvalResult{}; });
  for (Algorithm a : {Algorithm::moghs, Algorithm::random}) {
    SearchConfig cfg = small_config(400);
    cfg.algorithm = a;
    const SearchResult res = run_search(testutil::tiny(), ev, cfg);
    CHECK(res.exhausted);
    CHECK(res.warning.find("exhausted") != std::string::npos);
    CHECK(res.archive.empty());
    // each terminal design is evaluated once, never again after it is known to be invalid
    CHECK(res.log.size() == res.designs.size());
    CHECK(res.log.size() <= 168);
  }
}

TEST_CASE("invalid states are never rolled out again") {
  testutil::DesignHeightEvaluator ev;
  SearchConfig cfg = small_config(120, 13);
  GraphSearch gs(testutil::tiny(), ev, cfg, GraphSearch::Mode::universal, 13);
  int invalid_seen = 0;
  for (int e = 0; e < cfg.episodes; ++e) {
    std::set<DesignKey> invalid;
    for (std::size_t s = 0; s < gs.dag().size(); ++s)
      if (gs.dag().state(static_cast<StateId>(s)).invalid) invalid.insert(gs.dag().state(static_cast<StateId>(s)).key);
    const EpisodeRecord rec = gs.run_episode(e, cfg.episodes);
    CHECK(invalid.count(rec.key) == 0);
    invalid_seen += !rec.valid;
  }
  CHECK(invalid_seen > 0);
}

TEST_CASE("learning only runs on valid episodes and reduces loss on repeated data") {
  testutil::DesignHeightEvaluator ev;
  SearchConfig cfg = small_config(30, 14);
  cfg.opt_iter = 10;
  const SearchResult res = run_moghs(testutil::tiny(), ev, cfg);
  for (const auto& rec : res.log) {
    if (!rec.valid) CHECK(rec.loss == 0.0);
    CHECK(std::isfinite(rec.loss));
    CHECK(rec.weight.size() == 2);
    CHECK(rec.weight.sum() == doctest::Approx(1.0));
  }
}
