#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "moghs/evaluation.hpp"
#include "test_util.hpp"

using namespace moghs;

namespace {

LinkNode link_node(double length, double angle) {
  LinkNode n;
  n.symbol = 4;
  n.terminal = true;
  n.length = length;
  n.radius = 0.02;
  n.density = 1000.0;
  n.attach_angle = angle;
  n.joint_kind = JointKind::revolute;
  n.torque_limit = 4.0;
  return n;
}

// Flat trajectory of a single link: `steps` control steps over duration T, root moved by dx per step.
Trajectory synthetic(const ArticulatedBody& body, int steps, double T, double dx, std::vector<double> pitches = {}) {
  Trajectory t;
  SimState s = rest_state(body);
  t.states.push_back(s);
  for (int k = 1; k <= steps; ++k) {
    s.time = T * k / steps;
    s.pose(0, 0) += dx;
    if (!pitches.empty()) s.pose(0, 2) = body.rest_pose(0, 2) + pitches[(k - 1) % pitches.size()];
    t.states.push_back(s);
    t.torques.push_back(Eigen::VectorXd::Zero(body.joint_count()));
  }
  return t;
}

EvaluatorConfig quick() {
  EvaluatorConfig cfg;
  cfg.mppi.horizon = 8;
  cfg.mppi.samples = 8;
  return cfg;
}

ObjectiveSpec short_spec(ObjectiveKind kind) {
  ObjectiveSpec s = ObjectiveSpec::make(kind);
  s.params.duration = 0.5;
  return s;
}

DesignGraph random_terminal(const Grammar& g, std::mt19937_64& rng) {
  DesignGraph d = g.initial_design();
  while (!is_terminal(d)) {
    const auto apps = applicable_rules(g, d);
    d = apply_rule(g, d, apps[rng() % apps.size()]);
  }
  return d;
}

constexpr ObjectiveKind kAllKinds[] = {ObjectiveKind::flat_locomotion, ObjectiveKind::low_power_locomotion,
                                       ObjectiveKind::jumping, ObjectiveKind::design_complexity,
                                       ObjectiveKind::robot_height};

}  // namespace

TEST_CASE("objective kinds and their defaults") {
  for (ObjectiveKind k : kAllKinds) CHECK(parse_objective_kind(to_string(k)) == k);
  CHECK_THROWS_AS(parse_objective_kind("wall_terrain"), std::invalid_argument);
  CHECK_FALSE(ObjectiveSpec::make(ObjectiveKind::design_complexity).motion_dependent);
  CHECK_FALSE(ObjectiveSpec::make(ObjectiveKind::robot_height).motion_dependent);
  CHECK(ObjectiveSpec::make(ObjectiveKind::flat_locomotion).motion_dependent);
  CHECK(ObjectiveSpec::make(ObjectiveKind::jumping).motion_dependent);
  CHECK(ObjectiveSpec::make(ObjectiveKind::low_power_locomotion).params.torque_scale == 0.2);
  CHECK(ObjectiveSpec::make(ObjectiveKind::flat_locomotion).params.torque_scale == 1.0);
}

TEST_CASE("design complexity is inversely proportional to the link count") {
  std::mt19937_64 rng(0);
  const auto spec = ObjectiveSpec::make(ObjectiveKind::design_complexity);
  const DesignGraph three = testutil::derive(testutil::crawler(), {0, 1, 3, 7, 2, 4});  // body, leg, body
  REQUIRE(three.size() == 3);
  CHECK(evaluate(three, spec, {}, rng).reward == doctest::Approx(10.0 / 3.0));
  const DesignGraph two_leg = testutil::two_leg_crawler();
  REQUIRE(two_leg.size() == 4);
  CHECK(evaluate(two_leg, spec, {}, rng).reward == doctest::Approx(2.5));
  const EvalResult one = evaluate(testutil::limbless(), spec, {}, rng);
  CHECK(one.valid);
  CHECK(one.reward == doctest::Approx(10.0));

  // overlapping designs are invalid for every kind
  DesignGraph bad;
  bad.nodes = {link_node(0.15, 0.0), link_node(0.1, std::numbers::pi)};
  bad.edges = {{0, 1}};
  for (ObjectiveKind k : kAllKinds) CHECK_FALSE(evaluate(bad, ObjectiveSpec::make(k), quick(), rng).valid);
}

TEST_CASE("adding a link strictly lowers design complexity") {
  std::mt19937_64 rng(1);
  const auto spec = ObjectiveSpec::make(ObjectiveKind::design_complexity);
  int compared = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const DesignGraph d = random_terminal(testutil::crawler(), rng);
    // grow by one downward limb under a random link
    DesignGraph bigger = d;
    bigger.nodes.push_back(link_node(0.06, -std::numbers::pi / 2));
    bigger.edges.push_back({static_cast<int>(rng() % d.size()), static_cast<int>(d.size())});
    const EvalResult a = evaluate(d, spec, {}, rng), b = evaluate(bigger, spec, {}, rng);
    if (!a.valid || !b.valid) continue;
    CHECK(b.reward < a.reward);
    ++compared;
  }
  CHECK(compared > 10);
}

TEST_CASE("motion tasks reject designs without actuated joints") {
  std::mt19937_64 rng(2);
  for (ObjectiveKind k : {ObjectiveKind::flat_locomotion, ObjectiveKind::low_power_locomotion, ObjectiveKind::jumping}) {
    const EvalResult r = evaluate(testutil::limbless(), ObjectiveSpec::make(k), quick(), rng);
    CHECK_FALSE(r.valid);
    CHECK(r.error == "no actuated joints");
  }
  CHECK_FALSE(evaluate(testutil::crawler().initial_design(), ObjectiveSpec::make(ObjectiveKind::robot_height), {}, rng).valid);
}

TEST_CASE("flat reward arithmetic") {
  const ArticulatedBody body = instantiate(testutil::limbless());
  CHECK(reward_flat(body, synthetic(body, 120, 4.0, 0.0), 1.0) == doctest::Approx(1.0));
  CHECK(reward_flat(body, synthetic(body, 120, 4.0, 4.0 / 120), 1.0) == doctest::Approx(2.0));
  const double half = std::numbers::pi / 2;
  CHECK(reward_flat(body, synthetic(body, 120, 4.0, 2.0 / 120, {half, -half}), 1.0) == doctest::Approx(0.5));
  // no executed steps: stability from the initial state only
  CHECK(reward_flat(body, synthetic(body, 0, 4.0, 0.0), 1.0) == doctest::Approx(1.0));
}

TEST_CASE("jump reward arithmetic") {
  const ArticulatedBody body = instantiate(testutil::limbless());
  Trajectory rest = synthetic(body, 30, 1.0, 0.0);
  CHECK(reward_jump(body, rest, 10.0, 1.0) == doctest::Approx(1.0));
  Trajectory hop = rest;
  hop.states[10].pose(0, 1) += 0.3;
  CHECK(reward_jump(body, hop, 10.0, 1.0) == doctest::Approx(4.0));
}

TEST_CASE("robot height of a flat link and its determinism") {
  std::mt19937_64 rng(3);
  const auto spec = ObjectiveSpec::make(ObjectiveKind::robot_height);
  const EvalResult a = evaluate(testutil::limbless(), spec, {}, rng);
  REQUIRE(a.valid);
  CHECK(a.diagnostics.peak_height == doctest::Approx(0.04));
  CHECK(a.reward == doctest::Approx(0.4).epsilon(0.01));
  CHECK(a.reward <= 0.4 + 1e-12);
  std::mt19937_64 other(99);
  const EvalResult b = evaluate(testutil::limbless(), spec, {}, other);
  CHECK(a.reward == b.reward);

  const EvalResult legs = evaluate(testutil::two_leg_crawler(), spec, {}, rng);
  REQUIRE(legs.valid);
  CHECK(legs.diagnostics.peak_height == doctest::Approx(0.16));
}

TEST_CASE("a design that tips over scores below one that stands at the same height") {
  const double up = std::numbers::pi / 2;
  // body with a vertical mast over its far end: stable
  DesignGraph stand;
  stand.nodes = {link_node(0.15, 0.0), link_node(0.2, up)};
  stand.edges = {{0, 1}};
  // short base with a mast leaning well outside it, same top height
  const double lean = 0.5;
  DesignGraph tip;
  tip.nodes = {link_node(0.04, 0.0), link_node(0.2 / std::sin(up - lean), up - lean)};
  tip.edges = {{0, 1}};
  const auto spec = ObjectiveSpec::make(ObjectiveKind::robot_height);
  std::mt19937_64 rng(4);
  const EvalResult a = evaluate(stand, spec, {}, rng), b = evaluate(tip, spec, {}, rng);
  REQUIRE(a.valid);
  REQUIRE(b.valid);
  CHECK(a.diagnostics.peak_height == doctest::Approx(b.diagnostics.peak_height).epsilon(1e-9));
  CHECK(b.reward < a.reward);
  CHECK(b.diagnostics.mean_pitch > 0.05);
}

TEST_CASE("low power is the flat task with a fifth of the torque") {
  const EvaluatorConfig cfg = quick();
  ObjectiveSpec flat = short_spec(ObjectiveKind::flat_locomotion);
  flat.params.torque_scale = 0.2;
  const ObjectiveSpec low = short_spec(ObjectiveKind::low_power_locomotion);
  std::mt19937_64 r1(5), r2(5);
  const EvalResult a = evaluate(testutil::two_leg_crawler(), flat, cfg, r1);
  const EvalResult b = evaluate(testutil::two_leg_crawler(), low, cfg, r2);
  REQUIRE(a.valid);
  CHECK(a.reward == b.reward);
  CHECK(a.diagnostics.distance == b.diagnostics.distance);
}

TEST_CASE("motion objectives are deterministic for a seed") {
  const EvaluatorConfig cfg = quick();
  for (ObjectiveKind k : {ObjectiveKind::flat_locomotion, ObjectiveKind::jumping}) {
    std::mt19937_64 r1(6), r2(6);
    const EvalResult a = evaluate(testutil::two_leg_crawler(), short_spec(k), cfg, r1);
    const EvalResult b = evaluate(testutil::two_leg_crawler(), short_spec(k), cfg, r2);
    REQUIRE(a.valid);
    CHECK(a.reward == b.reward);
    CHECK(a.diagnostics.energy_used == b.diagnostics.energy_used);
    CHECK(a.diagnostics.energy_used > 0.0);
  }
}

TEST_CASE("fuzz: every valid crawler design gets a finite reward on every kind") {
  std::mt19937_64 rng(7);
  EvaluatorConfig cfg = quick();
  int valid = 0, motion_valid = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const DesignGraph d = random_terminal(testutil::crawler(), rng);
    bool instantiable = true;
    try {
      (void)instantiate(d, cfg.physics);
    } catch (const InstantiationError&) {
      instantiable = false;
    }
    for (ObjectiveKind k : kAllKinds) {
      const EvalResult r = evaluate(d, short_spec(k), cfg, rng);
      if (!instantiable) {
        CHECK_FALSE(r.valid);
        continue;
      }
      if (!r.valid) {
        // only the zero-joint rule may reject an instantiable design
        CHECK(r.error == "no actuated joints");
        continue;
      }
      CHECK(std::isfinite(r.reward));
      ++valid;
      if (ObjectiveSpec::make(k).motion_dependent) ++motion_valid;
    }
  }
  CHECK(valid > 200);
  CHECK(motion_valid > 100);
}
