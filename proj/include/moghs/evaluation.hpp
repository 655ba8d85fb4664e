#pragma once

#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "moghs/grammar.hpp"
#include "moghs/mppi.hpp"
#include "moghs/physics.hpp"

namespace moghs {

enum class ObjectiveKind { flat_locomotion, low_power_locomotion, jumping, design_complexity, robot_height };

std::string_view to_string(ObjectiveKind kind);
ObjectiveKind parse_objective_kind(std::string_view name);  // throws std::invalid_argument

struct ObjectiveParams {
  double duration = 4.0;          // s, locomotion and jumping episodes
  double passive_duration = 1.0;  // s, robot height settle test
  double stability = 1.0;         // c_s, weight of mean cos(pitch)
  double jump_scale = 10.0;       // c_j
  double complexity_scale = 10.0; // c_d
  double height_scale = 10.0;     // c_h
  double pitch_penalty = 2.0;     // c_p
  double torque_scale = 1.0;      // multiplies every joint torque limit
};

struct ObjectiveSpec {
  ObjectiveKind kind = ObjectiveKind::design_complexity;
  bool motion_dependent = false;
  ObjectiveParams params;

  /// Objective with the kind's defaults (low power gets torque_scale = 0.2).
  static ObjectiveSpec make(ObjectiveKind kind);
};

struct EvalDiagnostics {
  double distance = 0.0;     // forward displacement of the root link, m
  double peak_height = 0.0;  // highest lowest-point reached, m
  double mean_pitch = 0.0;   // rad
  double energy_used = 0.0;  // J, integral of |torque * joint rate|
};

struct EvalResult {
  double reward = 0.0;
  bool valid = false;
  EvalDiagnostics diagnostics;
  std::string error;
};

struct EvaluatorConfig {
  PhysicsConfig physics;
  MppiConfig mppi;
  int threads = 1;
};

/// Scores a terminal design on one objective. Motion-dependent kinds run MPPI.
EvalResult evaluate(const DesignGraph& d, const ObjectiveSpec& spec, const EvaluatorConfig& cfg, std::mt19937_64& rng);

/// Root-link pitch relative to its rest orientation.
double pitch(const ArticulatedBody& body, const SimState& s);

/// displacement / T + c_s * mean cos(pitch); the mean runs over the executed steps.
double reward_flat(const ArticulatedBody& body, const Trajectory& traj, double stability);
/// c_j * max_t lowest point + c_s * mean cos(pitch).
double reward_jump(const ArticulatedBody& body, const Trajectory& traj, double jump_scale, double stability);
/// c_h * rest height of the top point - c_p * max |pitch| over a passive settle.
EvalResult reward_height(const DesignGraph& d, const ObjectiveParams& params, const PhysicsConfig& physics);

/// Per-step rewards MPPI maximizes for the motion tasks.
StepReward flat_step_reward(double stability, double control_dt);
StepReward jump_step_reward(double jump_scale, double stability);

}  // namespace moghs
