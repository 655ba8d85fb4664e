#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "moghs/physics.hpp"
#include "test_util.hpp"

using namespace moghs;

namespace {

LinkNode link_node(double length, double angle, JointKind joint = JointKind::revolute) {
  LinkNode n;
  n.symbol = 1;
  n.terminal = true;
  n.length = length;
  n.radius = 0.02;
  n.density = 1000.0;
  n.attach_angle = angle;
  n.joint_kind = joint;
  n.torque_limit = 4.0;
  return n;
}

DesignGraph single_link() {
  DesignGraph d;
  d.nodes.push_back(link_node(0.15, 0.0));
  return d;
}

// body link -> long leg -> short leg
DesignGraph three_link_chain() { return testutil::derive(testutil::crawler(), {0, 2, 3, 5, 8}); }

double joint_error(const ArticulatedBody& body, const SimState& s) {
  double worst = 0.0;
  for (int c = 1; c < static_cast<int>(body.links.size()); ++c) {
    const auto child = link_ends(body, s, c).first;
    const auto parent = link_ends(body, s, body.links[c].parent).second;
    worst = std::max(worst, (child - parent).norm());
  }
  return worst;
}

}  // namespace

TEST_CASE("instantiate derives mass and inertia from geometry") {
  const ArticulatedBody body = instantiate(single_link());
  REQUIRE(body.links.size() == 1);
  const double r = 0.02, l = 0.15;
  const double mass = 1000.0 * std::numbers::pi * r * r * l;
  CHECK(mass == doctest::Approx(0.19).epsilon(0.01));
  CHECK(body.links[0].mass == doctest::Approx(mass).epsilon(1e-12));
  CHECK(body.links[0].inertia == doctest::Approx(mass * (l * l / 12 + r * r / 4)).epsilon(1e-12));
  CHECK(body.joint_count() == 0);
  // resting on the ground with its proximal end at x = 0
  const SimState s = rest_state(body);
  CHECK(lowest_point(body, s) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(link_ends(body, s, 0).first.x() == doctest::Approx(0.0));
}

TEST_CASE("tree arithmetic: a 3-link chain has 2 joints") {
  const ArticulatedBody body = instantiate(three_link_chain());
  CHECK(body.links.size() == 3);
  CHECK(body.joint_count() == 2);
  CHECK(body.links[0].parent == -1);
  CHECK(body.links[1].parent == 0);
  CHECK(body.links[2].parent == 1);

  // fixed joints do not count
  DesignGraph d = single_link();
  d.nodes.push_back(link_node(0.1, -std::numbers::pi / 2, JointKind::fixed));
  d.edges.push_back({0, 1});
  CHECK(instantiate(d).joint_count() == 0);
  CHECK(instantiate(testutil::two_leg_crawler()).joint_count() == 3);
}

TEST_CASE("rest-pose self-overlap fails instantiation") {
  DesignGraph d = single_link();
  // two identical legs at the same joint
  d.nodes.push_back(link_node(0.1, -std::numbers::pi / 2));
  d.nodes.push_back(link_node(0.1, -std::numbers::pi / 2));
  d.edges.push_back({0, 1});
  d.edges.push_back({0, 2});
  CHECK_THROWS_AS(instantiate(d), InstantiationError);

  // a limb folded straight back onto its parent
  DesignGraph back = single_link();
  back.nodes.push_back(link_node(0.1, std::numbers::pi));
  back.edges.push_back({0, 1});
  CHECK_THROWS_AS(instantiate(back), InstantiationError);

  // one leg is fine, and so is a leg at a right angle plus the body continuing
  DesignGraph ok = single_link();
  ok.nodes.push_back(link_node(0.1, -std::numbers::pi / 2));
  ok.nodes.push_back(link_node(0.15, 0.0));
  ok.edges.push_back({0, 1});
  ok.edges.push_back({0, 2});
  CHECK_NOTHROW(instantiate(ok));

  DesignGraph partial = single_link();
  partial.nodes[0].terminal = false;
  CHECK_THROWS_AS(instantiate(partial), InstantiationError);
}

TEST_CASE("free fall follows the ballistic closed form") {
  PhysicsConfig cfg;
  cfg.ground = false;
  for (const DesignGraph& d : {single_link(), three_link_chain()}) {
    const ArticulatedBody body = instantiate(d, cfg);
    SimState s = rest_state(body);
    const double z0 = s.pose.col(1).mean();
    const int steps = static_cast<int>(std::lround(1.0 / cfg.dt));
    for (int k = 0; k < steps; ++k) REQUIRE(step(body, s, Eigen::VectorXd::Zero(body.joint_count()), cfg));
    const double t = steps * cfg.dt;
    // every link falls together when nothing acts but gravity
    for (Eigen::Index i = 0; i < s.pose.rows(); ++i)
      CHECK(s.pose(i, 1) - body.rest_pose(i, 1) == doctest::Approx(-0.5 * 9.81 * t * t).epsilon(0.02));
    CHECK(s.pose.col(1).mean() - z0 == doctest::Approx(-0.5 * 9.81 * t * t).epsilon(0.02));
    CHECK(s.pose.col(0).isApprox(body.rest_pose.col(0), 1e-9));
  }
}

TEST_CASE("resting contact settles without sinking") {
  PhysicsConfig cfg;
  for (const DesignGraph& d : {single_link(), testutil::two_leg_crawler()}) {
    const ArticulatedBody body = instantiate(d, cfg);
    SimState s = rest_state(body);
    SolverCache cache;
    double worst = 0.0;
    for (int k = 0; k < static_cast<int>(std::lround(2.0 / cfg.dt)); ++k) {
      REQUIRE(step(body, s, Eigen::VectorXd::Zero(body.joint_count()), cfg, &cache));
      worst = std::max(worst, max_penetration(body, s));
    }
    CHECK(worst < 1e-3);
    CHECK(s.vel.cwiseAbs().maxCoeff() < 1e-2);
  }
}

TEST_CASE("dropped body lands and comes to rest above the ground") {
  PhysicsConfig cfg;
  const ArticulatedBody body = instantiate(single_link(), cfg);
  SimState s = rest_state(body);
  s.pose.col(1).array() += 0.2;
  SolverCache cache;
  double worst = 0.0;
  for (int k = 0; k < static_cast<int>(std::lround(3.0 / cfg.dt)); ++k) {
    REQUIRE(step(body, s, Eigen::VectorXd::Zero(0), cfg, &cache));
    worst = std::max(worst, max_penetration(body, s));
  }
  CHECK(worst < 0.01);  // impact transient
  CHECK(max_penetration(body, s) < 1e-3);
  CHECK(s.vel.cwiseAbs().maxCoeff() < 1e-2);
}

TEST_CASE("energy audit: damped, unactuated motion loses energy") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> gauss(0.0, 3.0);
  for (double gravity : {0.0, 9.81}) {
    PhysicsConfig cfg;
    cfg.ground = false;
    cfg.gravity = gravity;
    const ArticulatedBody body = instantiate(three_link_chain(), cfg);
    for (int trial = 0; trial < 5; ++trial) {
      SimState s = rest_state(body);
      for (Eigen::Index i = 0; i < s.vel.rows(); ++i) s.vel(i, 2) = gauss(rng);
      // make the initial velocities consistent with the joints
      SolverCache cache;
      REQUIRE(step(body, s, Eigen::VectorXd::Zero(2), cfg, &cache));
      std::vector<double> energy{mechanical_energy(body, s, cfg)};
      const double scale = kinetic_energy(body, s) + 0.5 * cfg.joint_stiffness;  // J, energy budget in play
      const int per_second = static_cast<int>(std::lround(1.0 / cfg.dt));
      for (int k = 0; k < 3 * per_second; ++k) {
        REQUIRE(step(body, s, Eigen::VectorXd::Zero(2), cfg, &cache));
        energy.push_back(mechanical_energy(body, s, cfg));
      }
      double worst_gain = 0.0;  // per second
      for (std::size_t a = 0; a < energy.size(); a += 8)
        for (std::size_t b = a + 8; b < energy.size(); b += 8) {
          const double secs = static_cast<double>(b - a) * cfg.dt;
          worst_gain = std::max(worst_gain, (energy[b] - energy[a]) / (scale * std::max(secs, 1.0)));
        }
      CHECK(worst_gain <= 0.01);
      CHECK(energy.back() < energy.front());
      CHECK(joint_error(body, s) < 1e-4);
    }
  }
}

TEST_CASE("torques are clamped to the joint limits") {
  const ArticulatedBody body = instantiate(three_link_chain());
  Eigen::VectorXd tau(2);
  tau << 100.0, -100.0;
  const Eigen::VectorXd c = clamp_torques(body, tau);
  CHECK(c(0) == 4.0);
  CHECK(c(1) == -4.0);

  // a clamped command moves the body exactly like the limit itself
  PhysicsConfig cfg;
  SimState a = rest_state(body), b = rest_state(body);
  REQUIRE(control_step(body, a, tau, cfg));
  REQUIRE(control_step(body, b, c, cfg));
  CHECK(a.pose == b.pose);

  ArticulatedBody weak = body;
  weak.scale_torque_limits(0.2);
  const Eigen::VectorXd w = clamp_torques(weak, tau);
  CHECK(w(0) == doctest::Approx(0.8));
  CHECK(w(1) == doctest::Approx(-0.8));
}

TEST_CASE("non-finite input is reported") {
  const ArticulatedBody body = instantiate(three_link_chain());
  SimState s = rest_state(body);
  s.vel(1, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_FALSE(step(body, s, Eigen::VectorXd::Zero(2), PhysicsConfig{}));
}
