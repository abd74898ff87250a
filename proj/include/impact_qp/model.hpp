#pragma once

// Floating-base kinematic trees: forward kinematics, 3-row point Jacobians
// and their time derivatives, composite-rigid-body mass matrix, recursive
// Newton-Euler bias forces, center of mass and the centroidal momentum
// matrix.
//
// Conventions
//  * Every body is moved by exactly one joint; the body index equals the
//    joint index and parents always precede children.
//  * A free-flyer root stores q = [p (3), quaternion (w, x, y, z)] and a
//    body-frame twist v = [v_b (3), w_b (3)].
//  * Revolute/prismatic joints hold one q and one v entry.

#include "impact_qp/spatial.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

namespace impact_qp {

enum class JointKind { Revolute, Prismatic, FreeFlyer };

enum class EndEffectorRole { Established, Impacting, Free };

inline const char* to_string(EndEffectorRole role) {
  switch (role) {
    case EndEffectorRole::Established: return "established";
    case EndEffectorRole::Impacting: return "impacting";
    case EndEffectorRole::Free: return "free";
  }
  return "?";
}

struct Link {
  std::string name;
  double mass = 1.0;
  Vec3 com = Vec3::Zero();
  Mat3 inertia = Mat3::Identity();  // about the link COM, link axes
};

struct Joint {
  std::string name;
  JointKind kind = JointKind::Revolute;
  int parent = -1;  // -1 is the world
  Vec3 axis = Vec3::UnitZ();
  Transform origin;  // parent frame -> joint frame at q = 0
};

struct EndEffectorFrame {
  std::string name;
  int body = 0;
  Transform offset;  // body frame -> end-effector frame
  EndEffectorRole role = EndEffectorRole::Free;
};

struct RobotState {
  VecX q;
  VecX v;
};

class RobotModel {
 public:
  RobotModel() = default;

  /// Appends a body moved by `joint`. Returns the body index.
  int add_body(const Link& link, const Joint& joint) {
    const int index = static_cast<int>(links_.size());
    if (joint.parent < -1 || joint.parent >= index) {
      throw DimensionError("joint '" + joint.name +
                           "' references an unknown or later parent");
    }
    if (joint.kind == JointKind::FreeFlyer && (index != 0 || joint.parent != -1)) {
      throw DimensionError("free-flyer joint '" + joint.name +
                           "' is only allowed at the root");
    }
    if (index > 0 && joint.parent == -1) {
      throw DimensionError("kinematic tree must have a single root");
    }
    if (!(link.mass > 0.0)) {
      throw DimensionError("link '" + link.name + "' must have positive mass");
    }
    if ((link.inertia - link.inertia.transpose()).norm() > 1e-12 ||
        Eigen::LLT<Mat3>(link.inertia).info() != Eigen::Success) {
      throw DimensionError("link '" + link.name +
                           "' inertia must be symmetric positive definite");
    }
    if (joint.kind != JointKind::FreeFlyer &&
        std::abs(joint.axis.norm() - 1.0) > 1e-12) {
      throw DimensionError("joint '" + joint.name + "' axis must be unit norm");
    }
    links_.push_back(link);
    joints_.push_back(joint);
    q_index_.push_back(nq_);
    v_index_.push_back(nv_);
    const int nvj = joint.kind == JointKind::FreeFlyer ? 6 : 1;
    nq_ += joint.kind == JointKind::FreeFlyer ? 7 : 1;
    nv_ += nvj;
    nv_joint_.push_back(nvj);
    // Supporting dofs: the parent's plus our own.
    std::vector<int> support;
    if (joint.parent >= 0) support = support_[joint.parent];
    for (int k = 0; k < nvj; ++k) support.push_back(v_index_.back() + k);
    support_.push_back(std::move(support));
    return index;
  }

  int add_frame(const EndEffectorFrame& frame) {
    if (frame.body < 0 || frame.body >= num_bodies()) {
      throw DimensionError("end-effector '" + frame.name +
                           "' references an invalid body");
    }
    frames_.push_back(frame);
    return static_cast<int>(frames_.size()) - 1;
  }

  int num_bodies() const { return static_cast<int>(links_.size()); }
  int nq() const { return nq_; }
  int nv() const { return nv_; }
  bool floating_base() const {
    return !joints_.empty() && joints_.front().kind == JointKind::FreeFlyer;
  }
  /// Number of actuated velocity coordinates (n in the robot equations).
  int num_actuated() const { return floating_base() ? nv_ - 6 : nv_; }
  /// First actuated velocity index.
  int actuated_offset() const { return floating_base() ? 6 : 0; }

  const Link& link(int i) const { return links_.at(i); }
  const Joint& joint(int i) const { return joints_.at(i); }
  int q_index(int i) const { return q_index_.at(i); }
  int v_index(int i) const { return v_index_.at(i); }
  int joint_nv(int i) const { return nv_joint_.at(i); }
  const std::vector<int>& support(int body) const { return support_.at(body); }

  const std::vector<EndEffectorFrame>& frames() const { return frames_; }
  const EndEffectorFrame& frame(int i) const { return frames_.at(i); }
  EndEffectorFrame& frame(int i) { return frames_.at(i); }
  int num_frames() const { return static_cast<int>(frames_.size()); }

  std::optional<int> find_body(const std::string& name) const {
    for (int i = 0; i < num_bodies(); ++i)
      if (links_[i].name == name) return i;
    return std::nullopt;
  }
  std::optional<int> find_frame(const std::string& name) const {
    for (int i = 0; i < num_frames(); ++i)
      if (frames_[i].name == name) return i;
    return std::nullopt;
  }

  double total_mass() const {
    double m = 0.0;
    for (const auto& l : links_) m += l.mass;
    return m;
  }

  Vec3 gravity = Vec3(0.0, 0.0, -9.81);

  /// Configuration with zero joint values and an identity base pose.
  VecX neutral_configuration() const {
    VecX q = VecX::Zero(nq_);
    if (floating_base()) q(3) = 1.0;
    return q;
  }

  /// Maps actuated joint j (0..num_actuated-1) to its q index.
  int actuated_q_index(int j) const {
    return floating_base() ? j + 7 : j;
  }

  void check_state(const RobotState& s) const {
    check_dim(s.q.size(), nq_, "configuration");
    check_dim(s.v.size(), nv_, "velocity");
    if (floating_base() && std::abs(s.q.segment<4>(3).norm() - 1.0) > 1e-9) {
      throw DimensionError("free-flyer quaternion must have unit norm");
    }
  }

 private:
  std::vector<Link> links_;
  std::vector<Joint> joints_;
  std::vector<EndEffectorFrame> frames_;
  std::vector<int> q_index_;
  std::vector<int> v_index_;
  std::vector<int> nv_joint_;
  std::vector<std::vector<int>> support_;
  int nq_ = 0;
  int nv_ = 0;
};

/// Per-state kinematic quantities shared by all algorithms below. Motion
/// subspaces S, their derivatives and body velocities are in world
/// coordinates about the world origin.
struct Kinematics {
  std::vector<Transform> body;  // world pose of every body
  Mat6X S;                      // 6 x nv, one motion column per dof
  Mat6X S_dot;                  // time derivative of S
  std::vector<Vec6> velocity;   // spatial velocity per body
  std::vector<Vec6> bias_acceleration;  // S_dot*v accumulated, no gravity
  std::vector<Mat6> inertia;    // spatial inertia per body about origin
};

namespace detail {

inline Quat base_quaternion(const VecX& q) {
  return Quat(q(3), q(4), q(5), q(6));
}

inline Transform joint_motion(const RobotModel& model, int i, const VecX& q) {
  const Joint& j = model.joint(i);
  const int qi = model.q_index(i);
  switch (j.kind) {
    case JointKind::Revolute:
      return {Eigen::AngleAxisd(q(qi), j.axis).toRotationMatrix(), Vec3::Zero()};
    case JointKind::Prismatic:
      return {Mat3::Identity(), j.axis * q(qi)};
    case JointKind::FreeFlyer:
      return Transform::from(q.segment<3>(qi), base_quaternion(q.segment<7>(qi)));
  }
  return {};
}

}  // namespace detail

inline std::vector<Transform> body_poses(const RobotModel& model, const VecX& q) {
  check_dim(q.size(), model.nq(), "configuration");
  std::vector<Transform> X(model.num_bodies());
  for (int i = 0; i < model.num_bodies(); ++i) {
    const Joint& j = model.joint(i);
    const Transform parent = j.parent < 0 ? Transform::identity() : X[j.parent];
    X[i] = parent * j.origin * detail::joint_motion(model, i, q);
  }
  return X;
}

inline Kinematics compute_kinematics(const RobotModel& model,
                                     const RobotState& state) {
  model.check_state(state);
  Kinematics k;
  const int nb = model.num_bodies();
  k.body.resize(nb);
  k.S = Mat6X::Zero(6, model.nv());
  k.S_dot = Mat6X::Zero(6, model.nv());
  k.velocity.assign(nb, Vec6::Zero());
  k.bias_acceleration.assign(nb, Vec6::Zero());
  k.inertia.resize(nb);

  for (int i = 0; i < nb; ++i) {
    const Joint& j = model.joint(i);
    const Transform parent =
        j.parent < 0 ? Transform::identity() : k.body[j.parent];
    const Transform joint_frame = parent * j.origin;
    k.body[i] = joint_frame * detail::joint_motion(model, i, state.q);
    const int vi = model.v_index(i);

    switch (j.kind) {
      case JointKind::Revolute: {
        const Vec3 a = joint_frame.R * j.axis;
        k.S.col(vi) << a, joint_frame.p.cross(a);
        break;
      }
      case JointKind::Prismatic: {
        k.S.col(vi) << Vec3::Zero(), joint_frame.R * j.axis;
        break;
      }
      case JointKind::FreeFlyer: {
        const Mat3& R = k.body[i].R;
        const Vec3& p = k.body[i].p;
        k.S.block<3, 3>(0, vi).setZero();
        k.S.block<3, 3>(3, vi) = R;
        k.S.block<3, 3>(0, vi + 3) = R;
        k.S.block<3, 3>(3, vi + 3) = skew(p) * R;
        break;
      }
    }

    const int nvj = model.joint_nv(i);
    const Vec6 parent_velocity = j.parent < 0 ? Vec6::Zero() : k.velocity[j.parent];
    k.velocity[i] = parent_velocity + k.S.middleCols(vi, nvj) * state.v.segment(vi, nvj);
    const Mat6 vx = motion_cross(k.velocity[i]);
    k.S_dot.middleCols(vi, nvj) = vx * k.S.middleCols(vi, nvj);
    const Vec6 parent_bias =
        j.parent < 0 ? Vec6::Zero() : k.bias_acceleration[j.parent];
    k.bias_acceleration[i] =
        parent_bias + k.S_dot.middleCols(vi, nvj) * state.v.segment(vi, nvj);

    const Link& l = model.link(i);
    const Mat3& R = k.body[i].R;
    k.inertia[i] = spatial_inertia(l.mass, k.body[i].apply(l.com),
                                   R * l.inertia * R.transpose());
  }
  return k;
}

/// World poses of every body and every end-effector frame.
struct FramePoses {
  std::vector<Transform> bodies;
  std::vector<Transform> frames;
};

inline FramePoses forward_kinematics(const RobotModel& model, const VecX& q) {
  FramePoses out;
  out.bodies = body_poses(model, q);
  for (const auto& f : model.frames()) {
    out.frames.push_back(out.bodies[f.body] * f.offset);
  }
  return out;
}

inline Vec3 frame_position(const RobotModel& model, const Kinematics& kin,
                           int frame) {
  const EndEffectorFrame& f = model.frame(frame);
  return kin.body[f.body].apply(f.offset.p);
}

inline Mat3X point_jacobian(const RobotModel& model, const Kinematics& kin,
                            int frame) {
  const EndEffectorFrame& f = model.frame(frame);
  const Vec3 x = frame_position(model, kin, frame);
  Mat3X J = Mat3X::Zero(3, model.nv());
  for (int c : model.support(f.body)) {
    J.col(c) = point_velocity(kin.S.col(c), x);
  }
  return J;
}

/// 3 x nv Jacobian of the frame origin's world linear velocity.
inline Mat3X point_jacobian(const RobotModel& model, const RobotState& state,
                            int frame) {
  return point_jacobian(model, compute_kinematics(model, state), frame);
}

inline Mat3X jacobian_derivative(const RobotModel& model, const Kinematics& kin,
                                 const VecX& v, int frame) {
  check_dim(v.size(), model.nv(), "generalized velocity");
  const EndEffectorFrame& f = model.frame(frame);
  const Vec3 x = frame_position(model, kin, frame);
  const Vec3 xdot = point_velocity(kin.velocity[f.body], x);
  Mat3X Jd = Mat3X::Zero(3, model.nv());
  for (int c : model.support(f.body)) {
    const Vec6 s = kin.S.col(c);
    const Vec6 sd = kin.S_dot.col(c);
    Jd.col(c) = sd.tail<3>() + sd.head<3>().cross(x) + s.head<3>().cross(xdot);
  }
  return Jd;
}

/// Analytic time derivative of point_jacobian along the current velocity.
inline Mat3X jacobian_derivative(const RobotModel& model,
                                 const RobotState& state, int frame) {
  return jacobian_derivative(model, compute_kinematics(model, state), state.v,
                             frame);
}

/// Composite-rigid-body mass matrix.
inline MatX mass_matrix(const RobotModel& model, const Kinematics& kin) {
  const int nb = model.num_bodies();
  std::vector<Mat6> composite = kin.inertia;
  for (int i = nb - 1; i >= 0; --i) {
    const int p = model.joint(i).parent;
    if (p >= 0) composite[p] += composite[i];
  }
  MatX M = MatX::Zero(model.nv(), model.nv());
  for (int i = 0; i < nb; ++i) {
    const int vi = model.v_index(i);
    const int nvj = model.joint_nv(i);
    const Mat6X F = composite[i] * kin.S.middleCols(vi, nvj);
    for (int c : model.support(i)) {
      M.block(vi, c, nvj, 1) = F.transpose() * kin.S.col(c);
      M.block(c, vi, 1, nvj) = M.block(vi, c, nvj, 1).transpose();
    }
  }
  return M;
}

inline MatX mass_matrix(const RobotModel& model, const RobotState& state) {
  return mass_matrix(model, compute_kinematics(model, state));
}

/// Recursive Newton-Euler with zero acceleration: Coriolis, centrifugal and
/// gravity generalized forces N(q, v).
inline VecX bias_forces(const RobotModel& model, const Kinematics& kin) {
  const int nb = model.num_bodies();
  Vec6 a_gravity = Vec6::Zero();
  a_gravity.tail<3>() = -model.gravity;
  std::vector<Vec6> f(nb);
  for (int i = 0; i < nb; ++i) {
    const Vec6 a = kin.bias_acceleration[i] + a_gravity;
    const Vec6& vel = kin.velocity[i];
    f[i] = kin.inertia[i] * a + force_cross(vel) * (kin.inertia[i] * vel);
  }
  VecX N = VecX::Zero(model.nv());
  for (int i = nb - 1; i >= 0; --i) {
    const int vi = model.v_index(i);
    const int nvj = model.joint_nv(i);
    N.segment(vi, nvj) = kin.S.middleCols(vi, nvj).transpose() * f[i];
    const int p = model.joint(i).parent;
    if (p >= 0) f[p] += f[i];
  }
  return N;
}

inline VecX bias_forces(const RobotModel& model, const RobotState& state) {
  return bias_forces(model, compute_kinematics(model, state));
}

struct CenterOfMass {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
};

inline Vec3 com_position(const RobotModel& model, const Kinematics& kin) {
  Vec3 c = Vec3::Zero();
  for (int i = 0; i < model.num_bodies(); ++i) {
    c += model.link(i).mass * kin.body[i].apply(model.link(i).com);
  }
  return c / model.total_mass();
}

/// Centroidal momentum matrix A_G (6 x nv): rows [angular; linear] of the
/// momentum about the COM with world-aligned axes. Built by moving every
/// link's spatial momentum to the COM and summing.
inline Mat6X centroidal_momentum_matrix(const RobotModel& model,
                                        const Kinematics& kin) {
  const Mat6 shift = momentum_shift(com_position(model, kin));
  Mat6X A = Mat6X::Zero(6, model.nv());
  for (int i = 0; i < model.num_bodies(); ++i) {
    const Mat6 Ii = shift * kin.inertia[i];
    for (int c : model.support(i)) A.col(c) += Ii * kin.S.col(c);
  }
  return A;
}

inline Mat6X centroidal_momentum_matrix(const RobotModel& model,
                                        const RobotState& state) {
  return centroidal_momentum_matrix(model, compute_kinematics(model, state));
}

inline CenterOfMass com(const RobotModel& model, const Kinematics& kin,
                        const VecX& v) {
  CenterOfMass out;
  out.position = com_position(model, kin);
  out.velocity =
      centroidal_momentum_matrix(model, kin).bottomRows<3>() * v / model.total_mass();
  return out;
}

inline CenterOfMass com(const RobotModel& model, const RobotState& state) {
  return com(model, compute_kinematics(model, state), state.v);
}

/// Integrates q along v for time h; the free-flyer pose moves on SE(3) and
/// its quaternion is renormalized.
inline VecX integrate(const RobotModel& model, const VecX& q, const VecX& v,
                      double h) {
  check_dim(q.size(), model.nq(), "configuration");
  check_dim(v.size(), model.nv(), "velocity");
  VecX out = q;
  for (int i = 0; i < model.num_bodies(); ++i) {
    const int qi = model.q_index(i);
    const int vi = model.v_index(i);
    if (model.joint(i).kind != JointKind::FreeFlyer) {
      out(qi) += h * v(vi);
      continue;
    }
    const Quat quat = detail::base_quaternion(q.segment<7>(qi)).normalized();
    const Vec3 lin = v.segment<3>(vi);
    const Vec3 ang = v.segment<3>(vi + 3);
    out.segment<3>(qi) += h * (quat * lin);
    const double angle = ang.norm() * h;
    Quat dq = Quat::Identity();
    if (angle != 0.0) dq = Quat(Eigen::AngleAxisd(angle, ang.normalized()));
    Quat next = (quat * dq).normalized();
    out.segment<4>(qi + 3) << next.w(), next.x(), next.y(), next.z();
  }
  return out;
}

/// Stacks 3-row Jacobians of several frames.
inline MatX stacked_jacobian(const RobotModel& model, const Kinematics& kin,
                             const std::vector<int>& frames) {
  MatX J(3 * frames.size(), model.nv());
  for (std::size_t k = 0; k < frames.size(); ++k) {
    J.middleRows(3 * k, 3) = point_jacobian(model, kin, frames[k]);
  }
  return J;
}

inline MatX stacked_jacobian_derivative(const RobotModel& model,
                                        const Kinematics& kin, const VecX& v,
                                        const std::vector<int>& frames) {
  MatX J(3 * frames.size(), model.nv());
  for (std::size_t k = 0; k < frames.size(); ++k) {
    J.middleRows(3 * k, 3) = jacobian_derivative(model, kin, v, frames[k]);
  }
  return J;
}

/// Actuated selection (n x nv): picks the actuated velocity coordinates.
inline MatX actuated_selection(const RobotModel& model) {
  MatX S = MatX::Zero(model.num_actuated(), model.nv());
  S.rightCols(model.num_actuated()).setIdentity();
  return S;
}

}  // namespace impact_qp
