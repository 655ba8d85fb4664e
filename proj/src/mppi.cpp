#include "moghs/mppi.hpp"

#include <cmath>
#include <iostream>

namespace moghs {

double ArticulatedModel::rollout(const State& start, const Eigen::MatrixXd& controls) const {
  PlantState s = start;
  double total = 0.0;
  for (Eigen::Index t = 0; t < controls.rows(); ++t) {
    const SimState before = s.sim;
    if (!control_step(*body_, s.sim, controls.row(t).transpose(), physics_, &s.cache))
      return std::numeric_limits<double>::quiet_NaN();
    total += reward_(*body_, before, s.sim);
  }
  return std::isfinite(total) ? total : std::numeric_limits<double>::quiet_NaN();
}

Trajectory run_task(const ArticulatedBody& body, const StepReward& reward, double duration,
                    const PhysicsConfig& physics, const MppiConfig& cfg, std::mt19937_64& rng, int threads) {
  const ArticulatedModel model(body, physics, reward);
  const int steps = static_cast<int>(std::lround(duration / physics.control_dt()));
  const int J = body.joint_count();

  Trajectory traj;
  PlantState state{rest_state(body), {}};
  traj.states.push_back(state.sim);
  Eigen::MatrixXd plan = Eigen::MatrixXd::Zero(cfg.horizon, J);

  for (int done = 0; done < steps;) {
    const MppiResult res = mppi_plan(model, state, plan, cfg, rng, threads);
    ++traj.plans;
    if (res.all_invalid) {
      ++traj.invalid_plans;
      std::cerr << "warning: every MPPI rollout was invalid; applying zero torques\n";
    }
    plan = res.controls;
    const int run = std::min(cfg.executed, steps - done);
    for (int t = 0; t < run; ++t) {
      const Eigen::VectorXd tau = clamp_torques(body, plan.row(t).transpose());
      const SimState before = state.sim;
      if (!control_step(body, state.sim, tau, physics, &state.cache)) {
        traj.valid = false;
        return traj;
      }
      traj.total_reward += reward(body, before, state.sim);
      traj.states.push_back(state.sim);
      traj.torques.push_back(tau);
    }
    done += run;
    // warm start: shift by the executed steps, pad with zeros
    Eigen::MatrixXd shifted = Eigen::MatrixXd::Zero(cfg.horizon, J);
    if (run < cfg.horizon) shifted.topRows(cfg.horizon - run) = plan.bottomRows(cfg.horizon - run);
    plan = std::move(shifted);
  }
  return traj;
}

Trajectory run_passive(const ArticulatedBody& body, double duration, const PhysicsConfig& physics) {
  const int steps = static_cast<int>(std::lround(duration / physics.control_dt()));
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(body.joint_count());
  Trajectory traj;
  SimState s = rest_state(body);
  SolverCache cache;
  traj.states.push_back(s);
  for (int t = 0; t < steps; ++t) {
    if (!control_step(body, s, zero, physics, &cache)) {
      traj.valid = false;
      return traj;
    }
    traj.states.push_back(s);
    traj.torques.push_back(zero);
  }
  return traj;
}

}  // namespace moghs
