#include "moghs/physics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace moghs {

namespace {

using Eigen::Vector2d;

Vector2d perp(const Vector2d& r) { return {-r.y(), r.x()}; }
double cross(const Vector2d& a, const Vector2d& b) { return a.x() * b.y() - a.y() * b.x(); }
Vector2d direction(double theta) { return {std::cos(theta), std::sin(theta)}; }

double point_segment_distance(const Vector2d& p, const Vector2d& a, const Vector2d& b) {
  const Vector2d ab = b - a;
  const double len2 = ab.squaredNorm();
  const double t = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  return (a + t * ab - p).norm();
}

double segment_distance(const Vector2d& a0, const Vector2d& a1, const Vector2d& b0, const Vector2d& b1) {
  const double d1 = cross(a1 - a0, b0 - a0), d2 = cross(a1 - a0, b1 - a0);
  const double d3 = cross(b1 - b0, a0 - b0), d4 = cross(b1 - b0, a1 - b0);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0))) return 0.0;
  return std::min({point_segment_distance(a0, b0, b1), point_segment_distance(a1, b0, b1),
                   point_segment_distance(b0, a0, a1), point_segment_distance(b1, a0, a1)});
}

struct Segment {
  Vector2d a, b;
};

// Shortens a segment by `amount` from one end; nullopt when nothing is left.
std::optional<Segment> trim(const Segment& s, double amount, bool from_start) {
  const Vector2d d = s.b - s.a;
  const double len = d.norm();
  if (len <= amount) return std::nullopt;
  const Vector2d u = d / len;
  return from_start ? Segment{s.a + amount * u, s.b} : Segment{s.a, s.b - amount * u};
}

struct Anchors {
  Vector2d parent;  // offset from the parent's center to the joint
  Vector2d child;   // offset from the child's center to the joint
};

Anchors joint_anchors(const ArticulatedBody& body, const SimState& s, int c) {
  const Link& lc = body.links[c];
  const Link& lp = body.links[lc.parent];
  return {0.5 * lp.length * direction(s.pose(lc.parent, 2)), -0.5 * lc.length * direction(s.pose(c, 2))};
}

Eigen::Matrix2d point_mass_matrix(double inv_mp, double inv_ip, const Vector2d& rp, double inv_mc, double inv_ic,
                                  const Vector2d& rc) {
  const Vector2d pp = perp(rp), pc = perp(rc);
  return (inv_mp + inv_mc) * Eigen::Matrix2d::Identity() + inv_ip * pp * pp.transpose() +
         inv_ic * pc * pc.transpose();
}

void apply_impulse(SimState& s, int link, double inv_m, double inv_i, const Vector2d& r, const Vector2d& p) {
  s.vel(link, 0) += inv_m * p.x();
  s.vel(link, 1) += inv_m * p.y();
  s.vel(link, 2) += inv_i * cross(r, p);
}

Vector2d point_velocity(const SimState& s, int link, const Vector2d& r) {
  return Vector2d(s.vel(link, 0), s.vel(link, 1)) + s.vel(link, 2) * perp(r);
}

}  // namespace

double ArticulatedBody::total_mass() const {
  double m = 0.0;
  for (const Link& l : links) m += l.mass;
  return m;
}

Eigen::VectorXd ArticulatedBody::torque_limits() const {
  Eigen::VectorXd out(joint_count());
  for (int j = 0; j < joint_count(); ++j) out(j) = links[actuated[j]].torque_limit;
  return out;
}

void ArticulatedBody::scale_torque_limits(double s) {
  for (Link& l : links) l.torque_limit *= s;
}

ArticulatedBody instantiate(const DesignGraph& d, const PhysicsConfig& cfg) {
  if (!is_terminal(d)) throw InstantiationError("design is not terminal");
  const auto children = d.child_lists();

  ArticulatedBody body;
  std::vector<int> order{d.root};
  for (std::size_t i = 0; i < order.size(); ++i)
    for (int c : children[order[i]]) order.push_back(c);
  std::vector<int> link_of(d.nodes.size(), -1);
  for (std::size_t i = 0; i < order.size(); ++i) link_of[order[i]] = static_cast<int>(i);

  const auto n = static_cast<Eigen::Index>(order.size());
  body.rest_pose.resize(n, 3);
  std::vector<Segment> segs(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    const LinkNode& node = d.nodes[order[i]];
    Link l;
    const int parent_node = d.parent_of(order[i]);
    l.parent = parent_node < 0 ? -1 : link_of[parent_node];
    l.length = node.length;
    l.radius = node.radius;
    l.mass = node.density * std::numbers::pi * node.radius * node.radius * node.length;
    l.inertia = l.mass * (node.length * node.length / 12.0 + node.radius * node.radius / 4.0);
    l.joint = node.joint_kind;
    l.torque_limit = node.torque_limit;

    const double angle = node.attach_angle;
    const Vector2d start = l.parent < 0 ? Vector2d::Zero() : segs[l.parent].b;
    segs[i] = {start, start + l.length * direction(angle)};
    if (l.parent >= 0) {
      l.rest_angle = angle - body.rest_pose(l.parent, 2);
      if (l.joint == JointKind::revolute) body.actuated.push_back(static_cast<int>(i));
    }
    const Vector2d center = 0.5 * (segs[i].a + segs[i].b);
    body.rest_pose.row(static_cast<Eigen::Index>(i)) << center.x(), center.y(), angle;
    body.links.push_back(l);
  }
  if (!(body.total_mass() > 0.0)) throw InstantiationError("design has no mass");

  // Self-overlap at rest. Links sharing a joint point are compared with the shared end trimmed away.
  for (std::size_t i = 0; i < segs.size(); ++i) {
    for (std::size_t j = i + 1; j < segs.size(); ++j) {
      const Link& a = body.links[i];
      const Link& b = body.links[j];
      const double reach = a.radius + b.radius;
      std::optional<Segment> sa = segs[i], sb = segs[j];
      if (b.parent == static_cast<int>(i)) {
        sa = trim(segs[i], reach, false);
        sb = trim(segs[j], reach, true);
      } else if (a.parent >= 0 && a.parent == b.parent) {
        sa = trim(segs[i], reach, true);
        sb = trim(segs[j], reach, true);
      }
      if (!sa || !sb) continue;
      if (segment_distance(sa->a, sa->b, sb->a, sb->b) < reach - cfg.overlap_tolerance)
        throw InstantiationError("links " + std::to_string(i) + " and " + std::to_string(j) + " overlap at rest");
    }
  }

  double lowest = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < segs.size(); ++i)
    lowest = std::min({lowest, segs[i].a.y() - body.links[i].radius, segs[i].b.y() - body.links[i].radius});
  body.rest_pose.col(1).array() -= lowest;
  return body;
}

SimState rest_state(const ArticulatedBody& body) {
  SimState s;
  s.pose = body.rest_pose;
  s.vel = Eigen::MatrixX3d::Zero(body.rest_pose.rows(), 3);
  return s;
}

Eigen::VectorXd clamp_torques(const ArticulatedBody& body, const Eigen::VectorXd& torques) {
  const Eigen::VectorXd lim = body.torque_limits();
  return torques.cwiseMax(-lim).cwiseMin(lim);
}

bool step(const ArticulatedBody& body, SimState& s, const Eigen::VectorXd& torques, const PhysicsConfig& cfg,
          SolverCache* cache) {
  const int n = static_cast<int>(body.links.size());
  const double h = cfg.dt;
  std::vector<double> inv_m(n), inv_i(n);
  for (int i = 0; i < n; ++i) {
    inv_m[i] = 1.0 / body.links[i].mass;
    inv_i[i] = 1.0 / body.links[i].inertia;
  }

  // external forces
  s.vel.col(1).array() -= h * cfg.gravity;
  const Eigen::VectorXd tau = clamp_torques(body, torques);
  for (int j = 0; j < body.joint_count(); ++j) {
    const int c = body.actuated[j];
    const int p = body.links[c].parent;
    s.vel(c, 2) += h * tau(j) * inv_i[c];
    s.vel(p, 2) -= h * tau(j) * inv_i[p];
  }

  SolverCache local;
  SolverCache& sc = cache ? *cache : local;
  sc.joint_impulse.resize(n, Vector2d::Zero());
  sc.angle_impulse.resize(n, 0.0);
  sc.contact_impulse.resize(2 * static_cast<std::size_t>(n), Vector2d::Zero());

  // joint constraint data
  struct JointRow {
    int p, c;
    Anchors r;
    Eigen::Matrix2d k_inv;
    double ang_mass_inv;  // 1/Ip + 1/Ic
    double erp_h, cfm_h;  // soft angle spring; cfm_h < 0 marks a hard (fixed) angle
  };
  std::vector<JointRow> joints;
  for (int c = 1; c < n; ++c) {
    const Link& l = body.links[c];
    JointRow row;
    row.p = l.parent;
    row.c = c;
    row.r = joint_anchors(body, s, c);
    row.k_inv = point_mass_matrix(inv_m[row.p], inv_i[row.p], row.r.parent, inv_m[c], inv_i[c], row.r.child).inverse();
    row.ang_mass_inv = inv_i[row.p] + inv_i[c];
    if (l.joint == JointKind::fixed) {
      row.erp_h = 0.0;
      row.cfm_h = -1.0;
    } else {
      const double denom = h * cfg.joint_stiffness + cfg.joint_damping;
      row.erp_h = denom > 0.0 ? cfg.joint_stiffness / denom : 0.0;
      row.cfm_h = denom > 0.0 ? 1.0 / (h * denom) : 0.0;
    }
    joints.push_back(row);
  }

  struct ContactRow {
    int link, slot;
    Vector2d r;
    double depth;  // negative when penetrating
    double kn_inv, kt_inv;
  };
  std::vector<ContactRow> contacts;
  const double c_denom = h * cfg.contact_stiffness + cfg.contact_damping;
  const double c_erp_h = c_denom > 0.0 ? cfg.contact_stiffness / c_denom : 0.0;
  const double c_cfm_h = c_denom > 0.0 ? 1.0 / (h * c_denom) : 0.0;
  if (cfg.ground) {
    for (int i = 0; i < n; ++i) {
      const Link& l = body.links[i];
      const Vector2d u = direction(s.pose(i, 2));
      for (int e = 0; e < 2; ++e) {
        const int slot = 2 * i + e;
        const Vector2d r = (e == 0 ? -0.5 : 0.5) * l.length * u - Vector2d(0.0, l.radius);
        const double depth = s.pose(i, 1) + r.y();
        if (depth >= 0.0) {
          sc.contact_impulse[slot].setZero();
          continue;
        }
        ContactRow row{i, slot, r, depth, 0.0, 0.0};
        row.kn_inv = 1.0 / (inv_m[i] + inv_i[i] * r.x() * r.x() + c_cfm_h);
        row.kt_inv = 1.0 / (inv_m[i] + inv_i[i] * r.y() * r.y());
        contacts.push_back(row);
      }
    }
  }

  // warm start
  for (const JointRow& j : joints) {
    const Vector2d& P = sc.joint_impulse[j.c];
    apply_impulse(s, j.c, inv_m[j.c], inv_i[j.c], j.r.child, P);
    apply_impulse(s, j.p, inv_m[j.p], inv_i[j.p], j.r.parent, -P);
    s.vel(j.c, 2) += inv_i[j.c] * sc.angle_impulse[j.c];
    s.vel(j.p, 2) -= inv_i[j.p] * sc.angle_impulse[j.c];
  }
  for (const ContactRow& c : contacts)
    apply_impulse(s, c.link, inv_m[c.link], inv_i[c.link], c.r,
                  Vector2d(sc.contact_impulse[c.slot].y(), sc.contact_impulse[c.slot].x()));

  for (int it = 0; it < cfg.iterations; ++it) {
    for (const JointRow& j : joints) {
      const Vector2d cdot = point_velocity(s, j.c, j.r.child) - point_velocity(s, j.p, j.r.parent);
      const Vector2d P = -(j.k_inv * cdot);
      sc.joint_impulse[j.c] += P;
      apply_impulse(s, j.c, inv_m[j.c], inv_i[j.c], j.r.child, P);
      apply_impulse(s, j.p, inv_m[j.p], inv_i[j.p], j.r.parent, -P);

      const double rel = s.vel(j.c, 2) - s.vel(j.p, 2);
      double& acc = sc.angle_impulse[j.c];
      double d_lambda;
      if (j.cfm_h < 0.0) {
        d_lambda = -rel / j.ang_mass_inv;
      } else {
        const double phi = s.pose(j.c, 2) - s.pose(j.p, 2) - body.links[j.c].rest_angle;
        d_lambda = -(rel + j.erp_h * phi + j.cfm_h * acc) / (j.ang_mass_inv + j.cfm_h);
      }
      acc += d_lambda;
      s.vel(j.c, 2) += inv_i[j.c] * d_lambda;
      s.vel(j.p, 2) -= inv_i[j.p] * d_lambda;
    }
    for (const ContactRow& c : contacts) {
      Vector2d& acc = sc.contact_impulse[c.slot];  // (normal, tangent)
      const Vector2d v = point_velocity(s, c.link, c.r);
      const double old_n = acc.x();
      acc.x() = std::max(0.0, old_n - c.kn_inv * (v.y() + c_erp_h * c.depth + c_cfm_h * old_n));
      const double dn = acc.x() - old_n;
      apply_impulse(s, c.link, inv_m[c.link], inv_i[c.link], c.r, Vector2d(0.0, dn));

      const double vt = point_velocity(s, c.link, c.r).x();
      const double old_t = acc.y();
      const double bound = cfg.friction * acc.x();
      acc.y() = std::clamp(old_t - c.kt_inv * vt, -bound, bound);
      apply_impulse(s, c.link, inv_m[c.link], inv_i[c.link], c.r, Vector2d(acc.y() - old_t, 0.0));
    }
  }

  s.pose += h * s.vel;
  s.time += h;

  // position projection of joint drift; velocities are left untouched
  for (int it = 0; it < cfg.projection_iterations; ++it) {
    for (int c = 1; c < n; ++c) {
      const int p = body.links[c].parent;
      const Anchors r = joint_anchors(body, s, c);
      const Vector2d err = Vector2d(s.pose(c, 0), s.pose(c, 1)) + r.child - Vector2d(s.pose(p, 0), s.pose(p, 1)) -
                           r.parent;
      const Eigen::Matrix2d k = point_mass_matrix(inv_m[p], inv_i[p], r.parent, inv_m[c], inv_i[c], r.child);
      const Vector2d P = -k.ldlt().solve(err);
      s.pose(c, 0) += inv_m[c] * P.x();
      s.pose(c, 1) += inv_m[c] * P.y();
      s.pose(c, 2) += inv_i[c] * cross(r.child, P);
      s.pose(p, 0) -= inv_m[p] * P.x();
      s.pose(p, 1) -= inv_m[p] * P.y();
      s.pose(p, 2) -= inv_i[p] * cross(r.parent, P);
      if (body.links[c].joint == JointKind::fixed) {
        const double phi = s.pose(c, 2) - s.pose(p, 2) - body.links[c].rest_angle;
        const double lambda = -phi / (inv_i[p] + inv_i[c]);
        s.pose(c, 2) += inv_i[c] * lambda;
        s.pose(p, 2) -= inv_i[p] * lambda;
      }
    }
  }

  return s.pose.allFinite() && s.vel.allFinite();
}

bool control_step(const ArticulatedBody& body, SimState& state, const Eigen::VectorXd& torques,
                  const PhysicsConfig& cfg, SolverCache* cache) {
  for (int k = 0; k < cfg.substeps; ++k)
    if (!step(body, state, torques, cfg, cache)) return false;
  return true;
}

std::pair<Eigen::Vector2d, Eigen::Vector2d> link_ends(const ArticulatedBody& body, const SimState& s, int link) {
  const Vector2d c(s.pose(link, 0), s.pose(link, 1));
  const Vector2d half = 0.5 * body.links[link].length * direction(s.pose(link, 2));
  return {c - half, c + half};
}

double lowest_point(const ArticulatedBody& body, const SimState& s) {
  double z = std::numeric_limits<double>::infinity();
  for (int i = 0; i < static_cast<int>(body.links.size()); ++i) {
    const auto [a, b] = link_ends(body, s, i);
    z = std::min({z, a.y() - body.links[i].radius, b.y() - body.links[i].radius});
  }
  return z;
}

double highest_point(const ArticulatedBody& body, const SimState& s) {
  double z = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < static_cast<int>(body.links.size()); ++i) {
    const auto [a, b] = link_ends(body, s, i);
    z = std::max({z, a.y() + body.links[i].radius, b.y() + body.links[i].radius});
  }
  return z;
}

double kinetic_energy(const ArticulatedBody& body, const SimState& s) {
  double e = 0.0;
  for (int i = 0; i < static_cast<int>(body.links.size()); ++i) {
    const Link& l = body.links[i];
    e += 0.5 * l.mass * (s.vel(i, 0) * s.vel(i, 0) + s.vel(i, 1) * s.vel(i, 1)) + 0.5 * l.inertia * s.vel(i, 2) * s.vel(i, 2);
  }
  return e;
}

double mechanical_energy(const ArticulatedBody& body, const SimState& s, const PhysicsConfig& cfg) {
  double e = kinetic_energy(body, s);
  for (int i = 0; i < static_cast<int>(body.links.size()); ++i) {
    const Link& l = body.links[i];
    e += l.mass * cfg.gravity * s.pose(i, 1);
    if (l.parent >= 0 && l.joint == JointKind::revolute) {
      const double phi = s.pose(i, 2) - s.pose(l.parent, 2) - l.rest_angle;
      e += 0.5 * cfg.joint_stiffness * phi * phi;
    }
  }
  return e;
}

double max_penetration(const ArticulatedBody& body, const SimState& s) {
  return std::max(0.0, -lowest_point(body, s));
}

}  // namespace moghs
