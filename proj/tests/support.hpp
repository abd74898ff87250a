#pragma once

// Random models and small fixtures shared by the test binaries.

#include "impact_qp/impact_qp.hpp"

#include <random>
#include <string>

namespace impact_qp::testing {

inline std::string data_path(const std::string& name) {
  return std::string(IMPACT_QP_DATA_DIR) + "/" + name;
}

inline Mat3 random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Quat q(n(rng), n(rng), n(rng), n(rng));
  q.normalize();
  return q.toRotationMatrix();
}

inline Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  return Vec3(n(rng), n(rng), n(rng)).normalized();
}

inline Link random_link(std::mt19937_64& rng, const std::string& name) {
  std::uniform_real_distribution<double> mass(0.5, 3.0), len(0.1, 0.4), u(-0.1, 0.1);
  Link l;
  l.name = name;
  l.mass = mass(rng);
  l.com = Vec3(len(rng), u(rng), u(rng));
  const Mat3 R = random_rotation(rng);
  const Vec3 d(0.01 + 0.05 * std::abs(u(rng)) * 10.0, 0.02 + 0.2 * std::abs(u(rng)),
               0.02 + 0.2 * std::abs(u(rng)));
  l.inertia = R * d.asDiagonal() * R.transpose();
  l.inertia = 0.5 * (l.inertia + l.inertia.transpose());
  return l;
}

struct RandomModelOptions {
  int dof = 3;              // actuated joints
  bool floating = false;
  bool chain = false;       // serial chain instead of a random tree
  bool prismatic = true;    // allow prismatic joints
};

/// Random kinematic tree; one frame per body at a random offset, role Free.
inline RobotModel random_model(std::mt19937_64& rng, const RandomModelOptions& opt) {
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  std::bernoulli_distribution coin(0.2);
  RobotModel m;
  int first = -1;
  if (opt.floating) {
    Joint root{"root", JointKind::FreeFlyer, -1, Vec3::UnitZ(), Transform{}};
    Link base = random_link(rng, "base");
    base.mass += 5.0;
    first = m.add_body(base, root);
  }
  for (int i = 0; i < opt.dof; ++i) {
    const int bodies = m.num_bodies();
    int parent = bodies - 1;
    if (!opt.chain && bodies > 1) parent = std::uniform_int_distribution<int>(0, bodies - 1)(rng);
    if (bodies == 0) parent = -1;
    if (opt.floating && bodies > 0 && parent < first) parent = first;
    Joint j;
    j.name = "j" + std::to_string(i);
    j.kind = opt.prismatic && coin(rng) ? JointKind::Prismatic : JointKind::Revolute;
    j.parent = parent;
    j.axis = random_unit(rng);
    j.origin.R = random_rotation(rng);
    j.origin.p = parent < 0 ? Vec3::Zero() : Vec3(0.3 + 0.5 * std::abs(u(rng)), u(rng), u(rng));
    m.add_body(random_link(rng, "l" + std::to_string(i)), j);
  }
  for (int b = 0; b < m.num_bodies(); ++b) {
    EndEffectorFrame f;
    f.name = "f" + std::to_string(b);
    f.body = b;
    f.offset.p = Vec3(0.2 + std::abs(u(rng)), u(rng), u(rng));
    m.add_frame(f);
  }
  return m;
}

inline RobotState random_state(std::mt19937_64& rng, const RobotModel& m, double vscale = 1.0) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  RobotState s;
  s.q = VecX(m.nq());
  for (Eigen::Index i = 0; i < s.q.size(); ++i) s.q(i) = u(rng);
  if (m.floating_base()) s.q.segment<4>(3).normalize();
  s.v = VecX(m.nv());
  for (Eigen::Index i = 0; i < s.v.size(); ++i) s.v(i) = vscale * u(rng);
  return s;
}

/// Three revolute joints (yaw, pitch, pitch) with a tip frame: a
/// non-redundant spatial arm for the tip position.
inline RobotModel random_spatial_arm(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> len(0.25, 0.6);
  RobotModel m;
  const double l1 = len(rng), l2 = len(rng), l3 = len(rng);
  Link base = random_link(rng, "base");
  m.add_body(base, Joint{"yaw", JointKind::Revolute, -1, Vec3::UnitZ(), Transform{}});
  Link upper = random_link(rng, "upper");
  upper.com = Vec3(0.5 * l2, 0, 0);
  m.add_body(upper, Joint{"pitch", JointKind::Revolute, 0, Vec3::UnitY(),
                          Transform{Mat3::Identity(), Vec3(0, 0, l1)}});
  Link fore = random_link(rng, "fore");
  fore.com = Vec3(0.5 * l3, 0, 0);
  m.add_body(fore, Joint{"elbow", JointKind::Revolute, 1, Vec3::UnitY(),
                         Transform{Mat3::Identity(), Vec3(l2, 0, 0)}});
  m.add_frame({"tip", 2, Transform{Mat3::Identity(), Vec3(l3, 0, 0)}, EndEffectorRole::Impacting});
  return m;
}

/// Arm state with a well-conditioned tip Jacobian.
inline RobotState random_arm_state(std::mt19937_64& rng, const RobotModel& m) {
  std::uniform_real_distribution<double> u(-1.0, 1.0), elbow(0.4, 2.4);
  while (true) {
    RobotState s{VecX(3), VecX(3)};
    s.q << u(rng) * 3.0, u(rng), elbow(rng) * (u(rng) < 0 ? -1.0 : 1.0);
    for (int i = 0; i < 3; ++i) s.v(i) = u(rng);
    const Mat3X J = point_jacobian(m, s, 0);
    if (std::abs(J.leftCols<3>().determinant()) > 1e-2) return s;
  }
}

/// Single pendulum: point-like bob of mass m at distance l along x, hinge
/// about -y so that q = 0 is horizontal and positive q lifts the bob.
inline RobotModel pendulum(double m = 1.0, double l = 1.0) {
  RobotModel model;
  Link bob{"bob", m, Vec3(l, 0, 0), Mat3::Identity() * 1e-8};
  model.add_body(bob, Joint{"hinge", JointKind::Revolute, -1, -Vec3::UnitY(), Transform{}});
  model.add_frame({"bob", 0, Transform{Mat3::Identity(), Vec3(l, 0, 0)}, EndEffectorRole::Free});
  return model;
}

/// 1-DoF prismatic joint along the axis, fixed base, tip frame impacting.
inline RobotModel slider(double mass = 2.0, const Vec3& axis = Vec3::UnitY()) {
  RobotModel model;
  Link l{"cart", mass, Vec3::Zero(), Mat3::Identity() * 0.01};
  model.add_body(l, Joint{"slide", JointKind::Prismatic, -1, axis, Transform{}});
  model.add_frame({"tip", 0, Transform{}, EndEffectorRole::Impacting});
  return model;
}

/// Single free body with a frame at its COM.
inline RobotModel free_body(double mass = 3.0) {
  RobotModel model;
  Link l{"body", mass, Vec3::Zero(), Vec3(0.1, 0.2, 0.3).asDiagonal()};
  model.add_body(l, Joint{"root", JointKind::FreeFlyer, -1, Vec3::UnitZ(), Transform{}});
  model.add_frame({"com", 0, Transform{}, EndEffectorRole::Impacting});
  return model;
}

/// Humanoid of data/humanoid_wall.json: arms raised towards the wall, right
/// hand moving forward.
inline RobotState humanoid_state(const RobotModel& m) {
  RobotState s{m.neutral_configuration(), VecX::Zero(m.nv())};
  const double arm[] = {0.0, 1.0, -2.0, 0.0, 1.0, -2.0};
  for (int j = 0; j < 6; ++j) s.q(m.actuated_q_index(j)) = arm[j];
  s.v.segment<3>(6) << 0.0, -0.9, 1.5;
  return s;
}

}  // namespace impact_qp::testing
