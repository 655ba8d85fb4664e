#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "moghs/evaluation.hpp"
#include "moghs/mppi.hpp"
#include "test_util.hpp"

using namespace moghs;

namespace {

// Remembers every sequence it is asked to roll out; reward is a fixed linear functional.
struct RecordingModel {
  using State = int;
  int control_dim() const { return 2; }
  Eigen::VectorXd control_limits() const { return Eigen::Vector2d(1.0, 2.0); }
  double rollout(const State&, const Eigen::MatrixXd& u) const {
    seen.push_back(u);
    rewards.push_back(u.col(0).sum() - 0.5 * u.col(1).sum());
    return rewards.back();
  }
  mutable std::vector<Eigen::MatrixXd> seen;
  mutable std::vector<double> rewards;
};

// Torque-limited pendulum; theta = 0 hangs down. The limit is below m g l, so it has to swing.
struct Pendulum {
  using State = Eigen::Vector2d;  // (theta, omega)
  static constexpr double dt = 0.05, g = 9.81, l = 1.0, m = 1.0, damping = 0.1, limit = 5.0;
  int control_dim() const { return 1; }
  Eigen::VectorXd control_limits() const { return Eigen::VectorXd::Constant(1, limit); }
  static State advance(State s, double u) {
    const double acc = -g / l * std::sin(s(0)) + u / (m * l * l) - damping * s(1);
    s(1) += dt * acc;
    s(0) += dt * s(1);
    return s;
  }
  static double reward(const State& s) { return -std::cos(s(0)); }  // +1 upright
  double rollout(const State& start, const Eigen::MatrixXd& u) const {
    State s = start;
    double total = 0.0;
    for (Eigen::Index t = 0; t < u.rows(); ++t) {
      s = advance(s, std::clamp(u(t, 0), -limit, limit));
      total += reward(s);
    }
    return total;
  }
};

double swing_up(std::uint64_t seed, bool control) {
  const Pendulum model;
  MppiConfig cfg;
  cfg.horizon = 40;
  cfg.samples = 64;
  cfg.noise = 2.0;
  cfg.temperature = 0.5;
  cfg.executed = 4;
  std::mt19937_64 rng(seed);
  Pendulum::State s(0.0, 0.0);
  Eigen::MatrixXd plan = Eigen::MatrixXd::Zero(cfg.horizon, 1);
  double total = 0.0;
  for (int cycle = 0; cycle < 10; ++cycle) {
    if (control) plan = mppi_plan(model, s, plan, cfg, rng).controls;
    for (int t = 0; t < cfg.executed; ++t) {
      s = Pendulum::advance(s, control ? plan(t, 0) : 0.0);
      total += Pendulum::reward(s);
    }
    Eigen::MatrixXd shifted = Eigen::MatrixXd::Zero(cfg.horizon, 1);
    shifted.topRows(cfg.horizon - cfg.executed) = plan.bottomRows(cfg.horizon - cfg.executed);
    plan = shifted;
  }
  return total;
}

MppiConfig small_mppi() {
  MppiConfig cfg;
  cfg.horizon = 8;
  cfg.samples = 8;
  return cfg;
}

}  // namespace

TEST_CASE("infinite temperature returns the plain mean of the samples") {
  RecordingModel model;
  MppiConfig cfg;
  cfg.horizon = 5;
  cfg.samples = 16;
  cfg.noise = 0.7;
  cfg.temperature = std::numeric_limits<double>::infinity();
  std::mt19937_64 rng(1);
  const MppiResult res = mppi_plan(model, 0, Eigen::MatrixXd::Zero(5, 2), cfg, rng);
  REQUIRE(model.seen.size() == 16);
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(5, 2);
  for (const auto& u : model.seen) mean += u / 16.0;
  CHECK(res.controls.isApprox(mean, 1e-12));
  CHECK_FALSE(res.all_invalid);
}

TEST_CASE("one sample comes back unchanged") {
  RecordingModel model;
  MppiConfig cfg;
  cfg.horizon = 3;
  cfg.samples = 1;
  std::mt19937_64 rng(2);
  const MppiResult res = mppi_plan(model, 0, Eigen::MatrixXd::Zero(3, 2), cfg, rng);
  REQUIRE(model.seen.size() == 1);
  CHECK(res.controls == model.seen[0]);
}

TEST_CASE("finite temperature is the softmax-weighted mean of clamped samples") {
  RecordingModel model;
  MppiConfig cfg;
  cfg.horizon = 4;
  cfg.samples = 32;
  cfg.noise = 3.0;  // large enough that clamping happens
  cfg.temperature = 0.8;
  std::mt19937_64 rng(3);
  const MppiResult res = mppi_plan(model, 0, Eigen::MatrixXd::Ones(4, 2), cfg, rng);
  Eigen::MatrixXd num = Eigen::MatrixXd::Zero(4, 2);
  double den = 0.0;
  bool clamped = false;
  for (std::size_t k = 0; k < model.seen.size(); ++k) {
    const double w = std::exp(model.rewards[k] / cfg.temperature);
    num += w * model.seen[k];
    den += w;
    CHECK(model.seen[k].col(0).cwiseAbs().maxCoeff() <= 1.0);
    CHECK(model.seen[k].col(1).cwiseAbs().maxCoeff() <= 2.0);
    clamped |= model.seen[k].col(0).cwiseAbs().maxCoeff() == 1.0;
  }
  CHECK(clamped);
  CHECK(res.controls.isApprox(num / den, 1e-10));
}

TEST_CASE("all-invalid rollouts yield zero controls") {
  struct Broken {
    using State = int;
    int control_dim() const { return 1; }
    Eigen::VectorXd control_limits() const { return Eigen::VectorXd::Ones(1); }
    double rollout(const State&, const Eigen::MatrixXd&) const { return std::numeric_limits<double>::quiet_NaN(); }
  };
  std::mt19937_64 rng(4);
  const MppiResult res = mppi_plan(Broken{}, 0, Eigen::MatrixXd::Ones(3, 1), small_mppi(), rng);
  CHECK(res.all_invalid);
  CHECK(res.controls.isZero());
}

TEST_CASE("pendulum swing-up beats doing nothing") {
  const double baseline = swing_up(0, false);
  CHECK(baseline == doctest::Approx(-40.0));
  int better = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed)
    if (swing_up(seed, true) >= baseline) ++better;
  CHECK(better >= 9);
}

TEST_CASE("run_task with zero duration is just the initial state") {
  const ArticulatedBody body = instantiate(testutil::two_leg_crawler());
  std::mt19937_64 rng(5);
  const Trajectory t = run_task(body, flat_step_reward(1.0, PhysicsConfig{}.control_dt()), 0.0, PhysicsConfig{},
                                small_mppi(), rng);
  REQUIRE(t.states.size() == 1);
  CHECK(t.torques.empty());
  CHECK(t.total_reward == 0.0);
  CHECK(t.plans == 0);
  CHECK(t.states[0].pose == body.rest_pose);
}

TEST_CASE("run_task is deterministic for a seed and independent of the thread count") {
  const ArticulatedBody body = instantiate(testutil::two_leg_crawler());
  const PhysicsConfig phys;
  const auto reward = flat_step_reward(1.0, phys.control_dt());
  auto run = [&](std::uint64_t seed, int threads) {
    std::mt19937_64 rng(seed);
    return run_task(body, reward, 0.5, phys, small_mppi(), rng, threads);
  };
  const Trajectory a = run(7, 1), b = run(7, 1), c = run(7, 3), d = run(8, 1);
  REQUIRE(a.states.size() == b.states.size());
  CHECK(a.states.size() == 16);  // 0.5 s at 30 Hz plus the initial state
  bool same = true, same_threads = true;
  for (std::size_t i = 0; i < a.states.size(); ++i) {
    same = same && a.states[i].pose == b.states[i].pose && a.states[i].vel == b.states[i].vel;
    same_threads = same_threads && a.states[i].pose == c.states[i].pose;
  }
  CHECK(same);
  CHECK(same_threads);
  CHECK(a.total_reward == b.total_reward);
  CHECK(a.states.back().pose != d.states.back().pose);
}

TEST_CASE("executed torques respect the limits, including the low-power scale") {
  ArticulatedBody body = instantiate(testutil::two_leg_crawler());
  const PhysicsConfig phys;
  MppiConfig cfg = small_mppi();
  cfg.noise = 20.0;  // push every sample into the clamp
  for (double scale : {1.0, 0.2}) {
    ArticulatedBody b = body;
    b.scale_torque_limits(scale);
    std::mt19937_64 rng(9);
    const Trajectory t = run_task(b, flat_step_reward(1.0, phys.control_dt()), 0.5, phys, cfg, rng);
    REQUIRE(!t.torques.empty());
    double peak = 0.0;
    for (const auto& tau : t.torques) peak = std::max(peak, tau.cwiseAbs().maxCoeff());
    CHECK(peak <= 4.0 * scale + 1e-12);
    CHECK(peak > 0.5 * 4.0 * scale);  // the clamp is actually reached
  }
}

TEST_CASE("flat task moves the two-leg crawler forward") {
  const ArticulatedBody body = instantiate(testutil::two_leg_crawler());
  const PhysicsConfig phys;
  const MppiConfig cfg;
  int forward = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    const Trajectory t = run_task(body, flat_step_reward(1.0, phys.control_dt()), 4.0, phys, cfg, rng);
    REQUIRE(t.valid);
    const double dx = t.states.back().pose(0, 0) - t.states.front().pose(0, 0);
    MESSAGE("seed " << seed << " displacement " << dx);
    if (dx > 0.0) ++forward;
  }
  CHECK(forward >= 8);
}
