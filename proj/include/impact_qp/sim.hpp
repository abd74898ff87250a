#pragma once

// Ground-truth simulator: semi-implicit Euler on M qdd + N = S^T tau + J^T f
// with bilateral sticking contacts, plane impact detection with interpolated
// crossing time, and an impulse resolution that does not reuse the
// controller's predictor.

#include "impact_qp/impact.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace impact_qp {

struct Surface {
  std::string name;
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();  // points out of the surface
  double restitution = 0.02;
  double friction = 0.7;
  /// End-effector names this surface can be hit by; empty means all.
  std::vector<std::string> applies_to;

  double signed_distance(const Vec3& x) const { return normal.dot(x - point); }

  bool applies(const std::string& frame) const {
    return applies_to.empty() ||
           std::find(applies_to.begin(), applies_to.end(), frame) != applies_to.end();
  }

  void validate() const {
    if (std::abs(normal.norm() - 1.0) > 1e-9) {
      throw std::invalid_argument("surface '" + name + "': normal must be unit");
    }
    if (restitution < 0.0) throw std::invalid_argument("surface '" + name + "': negative restitution");
    if (!(friction > 0.0)) throw std::invalid_argument("surface '" + name + "': friction must be positive");
  }
};

struct World {
  std::vector<Surface> surfaces;
  double step = 0.001;
  /// Baumgarte stabilization of sticking contacts (rad/s); 0 disables.
  double stabilization = 40.0;
  /// Approach speed below which a crossing is not an impact (m/s).
  double speed_floor = 1e-4;

  void validate() const {
    if (!(step > 0.0)) throw std::invalid_argument("integration step must be positive");
    if (stabilization < 0.0) throw std::invalid_argument("stabilization gain must be non-negative");
    for (const auto& s : surfaces) s.validate();
  }
};

/// A sticking contact: the frame origin is held at `anchor`.
struct StickingContact {
  int frame = -1;
  Vec3 anchor = Vec3::Zero();
  int surface = -1;  // -1 for contacts not tied to a world surface
};

struct SimState {
  RobotState robot;
  double time = 0.0;
  std::vector<StickingContact> contacts;

  std::optional<std::size_t> contact_index(int frame) const {
    for (std::size_t k = 0; k < contacts.size(); ++k) {
      if (contacts[k].frame == frame) return k;
    }
    return std::nullopt;
  }
};

struct ContactDynamics {
  VecX qdd;
  VecX forces;            // 3 per sticking contact, world frame
  bool singular = false;  // Delassus matrix rank deficient
};

/// Forward dynamics with sticking contacts. The contact forces solve the
/// Delassus system J M^-1 J^T f = a* - J M^-1 (S^T tau - N) in the
/// minimum-norm sense.
inline ContactDynamics forward_dynamics(const RobotModel& model, const World& world,
                                        const SimState& s, const VecX& torques) {
  check_dim(torques.size(), model.num_actuated(), "actuated torques");
  const Kinematics kin = compute_kinematics(model, s.robot);
  const MatX M = mass_matrix(model, kin);
  VecX Q = -bias_forces(model, kin);
  Q.tail(model.num_actuated()) += torques;
  const Eigen::LLT<MatX> llt(M);

  ContactDynamics out;
  const int m = static_cast<int>(s.contacts.size());
  out.forces = VecX::Zero(3 * m);
  if (m == 0) {
    out.qdd = llt.solve(Q);
    return out;
  }
  std::vector<int> frames;
  for (const auto& c : s.contacts) frames.push_back(c.frame);
  const MatX J = stacked_jacobian(model, kin, frames);
  const MatX Jd = stacked_jacobian_derivative(model, kin, s.robot.v, frames);
  const VecX xdot = J * s.robot.v;
  VecX target = -Jd * s.robot.v;
  const double w = world.stabilization;
  for (int k = 0; k < m; ++k) {
    const Vec3 err = frame_position(model, kin, frames[k]) - s.contacts[k].anchor;
    target.segment<3>(3 * k) -= 2.0 * w * xdot.segment<3>(3 * k) + w * w * err;
  }
  const MatX MinvJt = llt.solve(J.transpose());
  const MatX D = J * MinvJt;
  const VecX free_qdd = llt.solve(Q);
  Eigen::CompleteOrthogonalDecomposition<MatX> cod(D);
  cod.setThreshold(1e-10);
  out.singular = cod.rank() < D.rows();
  out.forces = cod.solve(target - J * free_qdd);
  out.qdd = free_qdd + MinvJt * out.forces;
  return out;
}

struct StepOutput {
  SimState state;
  VecX forces;  // 3 per sticking contact of the returned state
  bool singular = false;
};

/// One semi-implicit Euler step (velocity, then position).
inline StepOutput integrate_step(const RobotModel& model, const World& world,
                                 const SimState& s, const VecX& torques, double h) {
  const ContactDynamics cd = forward_dynamics(model, world, s, torques);
  StepOutput out{s, cd.forces, cd.singular};
  out.state.robot.v = s.robot.v + h * cd.qdd;
  out.state.robot.q = integrate(model, s.robot.q, out.state.robot.v, h);
  out.state.time = s.time + h;
  return out;
}

struct Crossing {
  int frame = -1;
  int surface = -1;
  double fraction = 1.0;       // position of the crossing inside the step
  double approach_speed = 0.0; // -n . xdot after the step
};

/// Frames (not currently sticking) whose signed distance to an applicable
/// surface changes from positive to non-positive across the step with an
/// approach speed above the floor.
inline std::vector<Crossing> detect_impact(const RobotModel& model, const World& world,
                                           const SimState& before, const SimState& after) {
  std::vector<Crossing> out;
  const Kinematics k0 = compute_kinematics(model, before.robot);
  const Kinematics k1 = compute_kinematics(model, after.robot);
  for (int f = 0; f < model.num_frames(); ++f) {
    if (before.contact_index(f)) continue;
    const Vec3 x0 = frame_position(model, k0, f);
    const Vec3 x1 = frame_position(model, k1, f);
    const Vec3 v1 = point_jacobian(model, k1, f) * after.robot.v;
    for (std::size_t si = 0; si < world.surfaces.size(); ++si) {
      const Surface& surf = world.surfaces[si];
      if (!surf.applies(model.frame(f).name)) continue;
      const double g0 = surf.signed_distance(x0);
      const double g1 = surf.signed_distance(x1);
      const double speed = -surf.normal.dot(v1);
      if (g0 > 0.0 && g1 <= 0.0 && speed > world.speed_floor) {
        out.push_back({f, static_cast<int>(si), g0 / (g0 - g1), speed});
      }
    }
  }
  std::sort(out.begin(), out.end(),
            [](const Crossing& a, const Crossing& b) { return a.fraction < b.fraction; });
  return out;
}

struct ImpactEvent {
  double time = 0.0;
  int frame = -1;
  int surface = -1;
  Vec3 pre_velocity = Vec3::Zero();
  Vec3 post_velocity = Vec3::Zero();
  double pre_normal_velocity = 0.0;
  double post_normal_velocity = 0.0;
  Vec3 impulse = Vec3::Zero();     // on the impacting frame
  Vec3 force_jump = Vec3::Zero();  // impulse / impact duration
};

struct ImpactResolution {
  std::vector<ImpactEvent> events;
  VecX joint_velocity_jump;
  /// Impulses ordered [sticking contacts, impacting frames], 3 each.
  VecX impulses;
  std::vector<int> frames;
  bool singular = false;
};

/// Solves J M^-1 J^T iota = rhs with rhs = -xdot for sticking contacts and
/// -(1 + c_r) n n^T xdot for impacting frames; dqdot = M^-1 J^T iota.
inline ImpactResolution resolve_impact(const RobotModel& model, const World& world,
                                       const SimState& s,
                                       const std::vector<Crossing>& impacting,
                                       double impact_duration) {
  if (!(impact_duration > 0.0)) throw std::invalid_argument("impact duration must be positive");
  const Kinematics kin = compute_kinematics(model, s.robot);
  ImpactResolution r;
  for (const auto& c : s.contacts) r.frames.push_back(c.frame);
  for (const auto& c : impacting) r.frames.push_back(c.frame);
  const int nc = static_cast<int>(s.contacts.size());
  const MatX J = stacked_jacobian(model, kin, r.frames);
  const VecX xdot = J * s.robot.v;
  VecX rhs = -xdot;
  for (std::size_t k = 0; k < impacting.size(); ++k) {
    const Surface& surf = world.surfaces.at(impacting[k].surface);
    const Mat3 P = -(1.0 + surf.restitution) * surf.normal * surf.normal.transpose();
    rhs.segment<3>(3 * (nc + k)) = P * xdot.segment<3>(3 * (nc + k));
  }
  const Eigen::LLT<MatX> llt(mass_matrix(model, kin));
  const MatX MinvJt = llt.solve(J.transpose());
  const MatX D = J * MinvJt;
  Eigen::CompleteOrthogonalDecomposition<MatX> cod(D);
  cod.setThreshold(1e-10);
  r.singular = cod.rank() < D.rows();
  r.impulses = cod.solve(rhs);
  r.joint_velocity_jump = MinvJt * r.impulses;

  const VecX post = xdot + D * r.impulses;
  for (std::size_t k = 0; k < impacting.size(); ++k) {
    const int row = 3 * (nc + static_cast<int>(k));
    const Vec3 n = world.surfaces.at(impacting[k].surface).normal;
    ImpactEvent e;
    e.time = s.time;
    e.frame = impacting[k].frame;
    e.surface = impacting[k].surface;
    e.pre_velocity = xdot.segment<3>(row);
    e.post_velocity = post.segment<3>(row);
    e.pre_normal_velocity = n.dot(e.pre_velocity);
    e.post_normal_velocity = n.dot(e.post_velocity);
    e.impulse = r.impulses.segment<3>(row);
    e.force_jump = e.impulse / impact_duration;
    r.events.push_back(e);
  }
  return r;
}

struct ImpactRecord {
  ImpactResolution resolution;
  SimState pre_impact;
  VecX pre_impact_forces;  // sticking forces just before the impact
};

struct AdvanceOutput {
  SimState state;
  VecX forces;  // 3 per sticking contact of the returned state
  std::vector<ImpactRecord> impacts;
  bool singular = false;
};

/// One world step with impact handling: on a crossing the step is split at
/// the interpolated crossing time, the impulse applied, the frame turned into
/// a sticking contact, and the remainder integrated (and checked again).
inline AdvanceOutput advance(const RobotModel& model, const World& world, const SimState& s,
                             const VecX& torques, double impact_duration) {
  AdvanceOutput out;
  SimState current = s;
  double remaining = world.step;
  while (true) {
    StepOutput trial = integrate_step(model, world, current, torques, remaining);
    out.singular = out.singular || trial.singular;
    std::vector<Crossing> crossings = detect_impact(model, world, current, trial.state);
    if (crossings.empty()) {
      out.state = std::move(trial.state);
      out.forces = std::move(trial.forces);
      return out;
    }
    // Crossings at (numerically) the same instant are resolved together.
    const double alpha = crossings.front().fraction;
    std::erase_if(crossings, [alpha](const Crossing& c) { return c.fraction > alpha + 1e-9; });
    StepOutput first = integrate_step(model, world, current, torques, alpha * remaining);
    ImpactRecord record{resolve_impact(model, world, first.state, crossings, impact_duration),
                        first.state, first.forces};
    out.singular = out.singular || first.singular || record.resolution.singular;
    current = first.state;
    current.robot.v += record.resolution.joint_velocity_jump;
    const Kinematics kin = compute_kinematics(model, current.robot);
    for (const auto& c : crossings) {
      current.contacts.push_back({c.frame, frame_position(model, kin, c.frame), c.surface});
    }
    out.impacts.push_back(std::move(record));
    remaining *= 1.0 - alpha;
  }
}

/// Detaches a sticking contact.
inline void release(SimState& s, int frame) {
  s.contacts.erase(std::remove_if(s.contacts.begin(), s.contacts.end(),
                                  [frame](const StickingContact& c) { return c.frame == frame; }),
                   s.contacts.end());
}

// ---------------------------------------------------------------------------

enum class Phase { Start, Impact, Admittance, Detach, Reset, Done };

inline const char* to_string(Phase p) {
  switch (p) {
    case Phase::Start: return "start";
    case Phase::Impact: return "impact";
    case Phase::Admittance: return "admittance";
    case Phase::Detach: return "detach";
    case Phase::Reset: return "reset";
    case Phase::Done: return "done";
  }
  return "?";
}

/// Start -> Impact -> Admittance -> Detach -> Reset -> Done.
struct PhaseMachine {
  Phase phase = Phase::Start;
  double detection_threshold = 20.0;  // N
  double admittance_setpoint = 15.0;  // N
  double admittance_gain = 0.5;       // 1/s
  double start_duration = 0.1;
  double admittance_duration = 0.5;
  double detach_duration = 0.3;
  double reset_duration = 0.3;
  double entered = 0.0;  // time the current phase started

  void validate() const {
    if (!(detection_threshold > 0.0)) throw std::invalid_argument("detection threshold must be positive");
    if (admittance_gain < 0.0) throw std::invalid_argument("admittance gain must be non-negative");
    if (start_duration < 0.0 || admittance_duration < 0.0 || detach_duration < 0.0 ||
        reset_duration < 0.0) {
      throw std::invalid_argument("phase durations must be non-negative");
    }
  }

  static Phase successor(Phase p) {
    switch (p) {
      case Phase::Start: return Phase::Impact;
      case Phase::Impact: return Phase::Admittance;
      case Phase::Admittance: return Phase::Detach;
      case Phase::Detach: return Phase::Reset;
      case Phase::Reset:
      case Phase::Done: return Phase::Done;
    }
    return Phase::Done;
  }

  void transition(Phase next, double time) {
    if (next != successor(phase)) {
      throw std::logic_error(std::string("illegal phase transition ") + to_string(phase) +
                             " -> " + to_string(next));
    }
    phase = next;
    entered = time;
  }

  /// Advances on elapsed time or, in the impact phase, on the measured
  /// normal force of the impacting end-effector. Returns true on a change.
  bool update(double time, double measured_normal_force) {
    const double elapsed = time - entered;
    bool advance = false;
    switch (phase) {
      case Phase::Start: advance = elapsed >= start_duration; break;
      case Phase::Impact: advance = measured_normal_force > detection_threshold; break;
      case Phase::Admittance: advance = elapsed >= admittance_duration; break;
      case Phase::Detach: advance = elapsed >= detach_duration; break;
      case Phase::Reset: advance = elapsed >= reset_duration; break;
      case Phase::Done: break;
    }
    if (advance) transition(successor(phase), time);
    return advance;
  }
};

}  // namespace impact_qp
