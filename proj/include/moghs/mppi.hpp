#pragma once

// Model predictive path integral control over any rollout model.
//
// A Model provides:
//   using State = ...;
//   int control_dim() const;
//   Eigen::VectorXd control_limits() const;             // symmetric box, per control
//   double rollout(const State&, const Eigen::MatrixXd& controls) const;  // H x control_dim; NaN if invalid

#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "moghs/parallel.hpp"
#include "moghs/physics.hpp"

namespace moghs {

struct MppiConfig {
  int horizon = 32;  // control steps
  int samples = 64;
  double noise = 0.5;  // N*m, per joint
  double temperature = 0.5;
  int executed = 4;  // control steps executed per replan
};

struct MppiResult {
  Eigen::MatrixXd controls;  // horizon x control_dim
  bool all_invalid = false;
};

/// One MPPI update around `nominal`. Perturbed sequences are clamped before rollout, and the
/// returned plan is the exp(reward / temperature)-weighted mean of the clamped samples.
template <typename Model, typename Rng>
MppiResult mppi_plan(const Model& model, const typename Model::State& state, const Eigen::MatrixXd& nominal,
                     const MppiConfig& cfg, Rng& rng, int threads = 1) {
  const int H = static_cast<int>(nominal.rows());
  const int J = model.control_dim();
  const Eigen::VectorXd limit = model.control_limits();
  std::normal_distribution<double> gauss(0.0, 1.0);

  // noise is drawn up front so the result does not depend on the thread count
  std::vector<Eigen::MatrixXd> candidates(static_cast<std::size_t>(cfg.samples));
  for (auto& u : candidates) {
    u.resize(H, J);
    for (int t = 0; t < H; ++t)
      for (int j = 0; j < J; ++j) u(t, j) = std::clamp(nominal(t, j) + cfg.noise * gauss(rng), -limit(j), limit(j));
  }

  std::vector<double> reward(candidates.size());
  parallel_for(cfg.samples, threads, [&](int k) { reward[k] = model.rollout(state, candidates[k]); });

  double best = -std::numeric_limits<double>::infinity();
  for (double r : reward)
    if (std::isfinite(r)) best = std::max(best, r);

  MppiResult out;
  out.controls = Eigen::MatrixXd::Zero(H, J);
  if (!std::isfinite(best)) {
    out.all_invalid = true;
    return out;
  }
  double total = 0.0;
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    if (!std::isfinite(reward[k])) continue;
    const double w = std::isfinite(cfg.temperature) ? std::exp((reward[k] - best) / cfg.temperature) : 1.0;
    out.controls += w * candidates[k];
    total += w;
  }
  out.controls /= total;
  return out;
}

/// Per-control-step reward used inside MPPI rollouts.
using StepReward = std::function<double(const ArticulatedBody&, const SimState& before, const SimState& after)>;

struct PlantState {
  SimState sim;
  SolverCache cache;
};

/// Rollout model over the planar simulator.
class ArticulatedModel {
 public:
  using State = PlantState;

  ArticulatedModel(const ArticulatedBody& body, const PhysicsConfig& physics, StepReward reward)
      : body_(&body), physics_(physics), reward_(std::move(reward)) {}

  int control_dim() const { return body_->joint_count(); }
  Eigen::VectorXd control_limits() const { return body_->torque_limits(); }
  double rollout(const State& start, const Eigen::MatrixXd& controls) const;

  const ArticulatedBody& body() const { return *body_; }
  const PhysicsConfig& physics() const { return physics_; }
  const StepReward& reward() const { return reward_; }

 private:
  const ArticulatedBody* body_;
  PhysicsConfig physics_;
  StepReward reward_;
};

struct Trajectory {
  std::vector<SimState> states;          // one per control step, starting with the initial state
  std::vector<Eigen::VectorXd> torques;  // applied (clamped) torques per control step
  bool valid = true;
  double total_reward = 0.0;             // sum of step rewards along the executed motion
  int plans = 0;
  int invalid_plans = 0;
};

/// Receding-horizon loop: plan, execute cfg.executed steps, shift the plan, repeat.
Trajectory run_task(const ArticulatedBody& body, const StepReward& reward, double duration,
                    const PhysicsConfig& physics, const MppiConfig& cfg, std::mt19937_64& rng, int threads = 1);

/// Zero-torque simulation for the given duration.
Trajectory run_passive(const ArticulatedBody& body, double duration, const PhysicsConfig& physics);

}  // namespace moghs
