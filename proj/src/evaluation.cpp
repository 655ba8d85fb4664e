#include "moghs/evaluation.hpp"

#include <cmath>
#include <algorithm>
#include <limits>
#include <stdexcept>

namespace moghs {

std::string_view to_string(ObjectiveKind kind) {
  switch (kind) {
    case ObjectiveKind::flat_locomotion: return "flat_locomotion";
    case ObjectiveKind::low_power_locomotion: return "low_power_locomotion";
    case ObjectiveKind::jumping: return "jumping";
    case ObjectiveKind::design_complexity: return "design_complexity";
    case ObjectiveKind::robot_height: return "robot_height";
  }
  return "unknown";
}

ObjectiveKind parse_objective_kind(std::string_view name) {
  for (auto k : {ObjectiveKind::flat_locomotion, ObjectiveKind::low_power_locomotion, ObjectiveKind::jumping,
                 ObjectiveKind::design_complexity, ObjectiveKind::robot_height})
    if (to_string(k) == name) return k;
  throw std::invalid_argument("unknown objective kind " + std::string(name));
}

ObjectiveSpec ObjectiveSpec::make(ObjectiveKind kind) {
  ObjectiveSpec s;
  s.kind = kind;
  s.motion_dependent = kind == ObjectiveKind::flat_locomotion || kind == ObjectiveKind::low_power_locomotion ||
                       kind == ObjectiveKind::jumping;
  if (kind == ObjectiveKind::low_power_locomotion) s.params.torque_scale = 0.2;
  return s;
}

double pitch(const ArticulatedBody& body, const SimState& s) {
  return s.pose(0, 2) - body.rest_pose(0, 2);
}

namespace {

// Mean of cos(pitch) over executed steps, or the initial state when nothing ran.
double mean_cos_pitch(const ArticulatedBody& body, const Trajectory& traj) {
  if (traj.states.size() <= 1) return std::cos(pitch(body, traj.states.front()));
  double sum = 0.0;
  for (std::size_t i = 1; i < traj.states.size(); ++i) sum += std::cos(pitch(body, traj.states[i]));
  return sum / static_cast<double>(traj.states.size() - 1);
}

double mean_abs_pitch(const ArticulatedBody& body, const Trajectory& traj) {
  double sum = 0.0;
  for (const SimState& s : traj.states) sum += std::abs(pitch(body, s));
  return sum / static_cast<double>(traj.states.size());
}

double energy_used(const ArticulatedBody& body, const Trajectory& traj) {
  double e = 0.0;
  for (std::size_t t = 0; t < traj.torques.size() && t + 1 < traj.states.size(); ++t) {
    const SimState& a = traj.states[t];
    const SimState& b = traj.states[t + 1];
    const double dt = b.time - a.time;
    for (int j = 0; j < body.joint_count(); ++j) {
      const int c = body.actuated[j];
      const int p = body.links[c].parent;
      const double rate = ((b.pose(c, 2) - b.pose(p, 2)) - (a.pose(c, 2) - a.pose(p, 2))) / dt;
      e += std::abs(traj.torques[t](j) * rate) * dt;
    }
  }
  return e;
}

EvalResult invalid(std::string why) {
  EvalResult r;
  r.valid = false;
  r.error = std::move(why);
  return r;
}

}  // namespace

double reward_flat(const ArticulatedBody& body, const Trajectory& traj, double stability) {
  const SimState& first = traj.states.front();
  const SimState& last = traj.states.back();
  const double T = last.time - first.time;
  const double speed = T > 0.0 ? (last.pose(0, 0) - first.pose(0, 0)) / T : 0.0;
  return speed + stability * mean_cos_pitch(body, traj);
}

double reward_jump(const ArticulatedBody& body, const Trajectory& traj, double jump_scale, double stability) {
  double peak = -std::numeric_limits<double>::infinity();
  for (const SimState& s : traj.states) peak = std::max(peak, lowest_point(body, s));
  return jump_scale * peak + stability * mean_cos_pitch(body, traj);
}

EvalResult reward_height(const DesignGraph& d, const ObjectiveParams& params, const PhysicsConfig& physics) {
  ArticulatedBody body;
  try {
    body = instantiate(d, physics);
  } catch (const InstantiationError& e) {
    return invalid(e.what());
  }
  const double top = highest_point(body, rest_state(body));
  const Trajectory traj = run_passive(body, params.passive_duration, physics);
  if (!traj.valid) return invalid("simulation diverged");
  double drift = 0.0;
  for (const SimState& s : traj.states) drift = std::max(drift, std::abs(pitch(body, s)));

  EvalResult r;
  r.valid = true;
  r.reward = params.height_scale * top - params.pitch_penalty * drift;
  r.diagnostics.peak_height = top;
  r.diagnostics.mean_pitch = mean_abs_pitch(body, traj);
  r.diagnostics.distance = traj.states.back().pose(0, 0) - traj.states.front().pose(0, 0);
  return r;
}

StepReward flat_step_reward(double stability, double control_dt) {
  return [stability, control_dt](const ArticulatedBody& body, const SimState& before, const SimState& after) {
    return (after.pose(0, 0) - before.pose(0, 0)) / control_dt + stability * std::cos(pitch(body, after));
  };
}

StepReward jump_step_reward(double jump_scale, double stability) {
  return [jump_scale, stability](const ArticulatedBody& body, const SimState&, const SimState& after) {
    return jump_scale * lowest_point(body, after) + stability * std::cos(pitch(body, after));
  };
}

EvalResult evaluate(const DesignGraph& d, const ObjectiveSpec& spec, const EvaluatorConfig& cfg,
                    std::mt19937_64& rng) {
  if (!is_terminal(d)) return invalid("design is not terminal");
  const ObjectiveParams& p = spec.params;

  switch (spec.kind) {
    case ObjectiveKind::robot_height:
      return reward_height(d, p, cfg.physics);
    case ObjectiveKind::design_complexity: {
      try {
        (void)instantiate(d, cfg.physics);
      } catch (const InstantiationError& e) {
        return invalid(e.what());
      }
      EvalResult r;
      r.valid = true;
      r.reward = p.complexity_scale / static_cast<double>(d.size());
      return r;
    }
    case ObjectiveKind::flat_locomotion:
    case ObjectiveKind::low_power_locomotion:
    case ObjectiveKind::jumping:
      break;
  }

  ArticulatedBody body;
  try {
    body = instantiate(d, cfg.physics);
  } catch (const InstantiationError& e) {
    return invalid(e.what());
  }
  if (body.joint_count() == 0) return invalid("no actuated joints");
  body.scale_torque_limits(p.torque_scale);

  const bool jumping = spec.kind == ObjectiveKind::jumping;
  const StepReward step_reward = jumping ? jump_step_reward(p.jump_scale, p.stability)
                                         : flat_step_reward(p.stability, cfg.physics.control_dt());
  const Trajectory traj = run_task(body, step_reward, p.duration, cfg.physics, cfg.mppi, rng, cfg.threads);
  if (!traj.valid) return invalid("simulation diverged");

  EvalResult r;
  r.reward = jumping ? reward_jump(body, traj, p.jump_scale, p.stability) : reward_flat(body, traj, p.stability);
  r.valid = std::isfinite(r.reward);
  if (!r.valid) r.error = "non-finite reward";
  r.diagnostics.distance = traj.states.back().pose(0, 0) - traj.states.front().pose(0, 0);
  double peak = -std::numeric_limits<double>::infinity();
  for (const SimState& s : traj.states) peak = std::max(peak, lowest_point(body, s));
  r.diagnostics.peak_height = peak;
  r.diagnostics.mean_pitch = mean_abs_pitch(body, traj);
  r.diagnostics.energy_used = energy_used(body, traj);
  return r;
}

}  // namespace moghs
