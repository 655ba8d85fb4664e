#pragma once

// Planar articulated rigid bodies in maximal coordinates. The x axis points forward,
// z points up; link angles are measured from +x toward +z.

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "moghs/grammar.hpp"

namespace moghs {

struct PhysicsConfig {
  double gravity = 9.81;
  double dt = 1.0 / 240.0;
  int substeps = 8;  // per control step
  int iterations = 8;
  int projection_iterations = 4;
  double contact_stiffness = 1e4;  // N/m
  double contact_damping = 50.0;   // N*s/m
  double friction = 0.8;
  double joint_stiffness = 6.0;  // N*m/rad, pulls revolute joints toward their rest angle
  double joint_damping = 0.05;   // N*m*s/rad
  bool ground = true;
  double overlap_tolerance = 1e-3;  // m

  double control_dt() const { return dt * substeps; }
};

struct Link {
  int parent = -1;  // -1 for the root
  double length = 0.0;
  double radius = 0.0;
  double mass = 0.0;
  double inertia = 0.0;  // about the center of mass
  JointKind joint = JointKind::fixed;
  double rest_angle = 0.0;  // child angle minus parent angle at rest
  double torque_limit = 0.0;
};

struct ArticulatedBody {
  std::vector<Link> links;       // parents precede children; links[0] is the root
  std::vector<int> actuated;     // link index of each revolute joint, in control order
  Eigen::MatrixX3d rest_pose;    // (x, z, theta) of each link center at rest

  int joint_count() const { return static_cast<int>(actuated.size()); }
  double total_mass() const;
  Eigen::VectorXd torque_limits() const;
  void scale_torque_limits(double s);
};

struct SimState {
  Eigen::MatrixX3d pose;  // per link (x, z, theta)
  Eigen::MatrixX3d vel;   // per link (vx, vz, omega)
  double time = 0.0;
};

/// Solver scratch carried between steps (warm-start impulses).
struct SolverCache {
  std::vector<Eigen::Vector2d> joint_impulse;
  std::vector<double> angle_impulse;
  std::vector<Eigen::Vector2d> contact_impulse;  // (normal, tangent) per link end
};

class InstantiationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Builds the rest pose: root proximal end at x = 0, lowest point on the ground.
/// mass = density * pi * r^2 * length; inertia = mass * (length^2 / 12 + r^2 / 4).
/// Throws InstantiationError on rest-pose self-overlap or nonterminal nodes.
ArticulatedBody instantiate(const DesignGraph& d, const PhysicsConfig& cfg = {});

SimState rest_state(const ArticulatedBody& body);

/// One integrator step of length cfg.dt. Torques are per actuated joint and clamped to limits.
/// Returns false if the state became non-finite.
bool step(const ArticulatedBody& body, SimState& state, const Eigen::VectorXd& torques, const PhysicsConfig& cfg,
          SolverCache* cache = nullptr);

/// Runs cfg.substeps steps with constant torques.
bool control_step(const ArticulatedBody& body, SimState& state, const Eigen::VectorXd& torques,
                  const PhysicsConfig& cfg, SolverCache* cache = nullptr);

Eigen::VectorXd clamp_torques(const ArticulatedBody& body, const Eigen::VectorXd& torques);

/// Link end points (proximal, distal) in world coordinates.
std::pair<Eigen::Vector2d, Eigen::Vector2d> link_ends(const ArticulatedBody& body, const SimState& s, int link);

/// Lowest and highest capsule surface heights.
double lowest_point(const ArticulatedBody& body, const SimState& s);
double highest_point(const ArticulatedBody& body, const SimState& s);

double kinetic_energy(const ArticulatedBody& body, const SimState& s);
/// Kinetic + gravitational + joint-spring energy.
double mechanical_energy(const ArticulatedBody& body, const SimState& s, const PhysicsConfig& cfg);

/// Largest ground penetration over all link ends (0 if none).
double max_penetration(const ArticulatedBody& body, const SimState& s);

}  // namespace moghs
