#pragma once

// The two-link planar arm hitting a surface with its tip: a two-variable QP
// small enough to draw, solved with and without the post-impact joint
// velocity rows.

#include "impact_qp/controller.hpp"

#include <numbers>

namespace impact_qp {

/// Planar 2R arm in the xy plane; both joints about z, tip frame "tip".
inline RobotModel planar_2r(double l1 = 0.5, double l2 = 0.5, double m1 = 1.0,
                            double m2 = 1.0,
                            EndEffectorRole tip_role = EndEffectorRole::Impacting) {
  RobotModel model;
  const auto rod = [](const std::string& name, double m, double l) {
    Link link{name, m, Vec3(0.5 * l, 0.0, 0.0), Mat3::Identity()};
    const double axial = 1e-4 * m;
    const double transverse = m * l * l / 12.0 + axial;
    link.inertia.diagonal() << axial, transverse, transverse;
    return link;
  };
  Joint j1{"shoulder", JointKind::Revolute, -1, Vec3::UnitZ(), Transform{}};
  const int b1 = model.add_body(rod("upper", m1, l1), j1);
  Joint j2{"elbow", JointKind::Revolute, b1, Vec3::UnitZ(),
           Transform{Mat3::Identity(), Vec3(l1, 0.0, 0.0)}};
  const int b2 = model.add_body(rod("fore", m2, l2), j2);
  model.add_frame({"tip", b2, Transform{Mat3::Identity(), Vec3(l2, 0.0, 0.0)}, tip_role});
  return model;
}

struct ToyExample {
  RobotModel model;
  RobotState state;
  ImpactConfig impact;
  BoundsSpec bounds;
  Vec3 desired_acceleration;
  double control_period = 0.005;

  static ToyExample paper() {
    ToyExample t;
    t.model = planar_2r();
    t.state.q = VecX(2);
    t.state.q << 0.0, 0.2 * std::numbers::pi;
    // Joint velocity reaching the tip velocity [0, 0.3] m/s.
    const Mat3X J = point_jacobian(t.model, RobotState{t.state.q, VecX::Zero(2)}, 0);
    t.state.v = J.topRows<2>().lu().solve(Eigen::Vector2d(0.0, 0.3));
    t.impact.restitution = 0.02;
    t.impact.normal = -Vec3::UnitY();
    t.impact.impact_duration = 0.005;
    t.impact.control_period = t.control_period;
    t.bounds = BoundsSpec::unbounded(2);
    t.bounds.v_upper << 0.9, 0.6;
    t.bounds.v_lower = -t.bounds.v_upper;
    t.desired_acceleration = Vec3(0.0, 120.0, 0.0);
    return t;
  }
};

struct ToyResult {
  Mode mode = Mode::Baseline;
  QPSolution solution;
  VecX qdd;
  VecX pre_impact_velocity;   // qdot + qdd dt
  VecX post_impact_velocity;  // pre-impact velocity + predicted jump
  std::vector<ConstraintBlock> blocks;
  std::vector<Eigen::Vector2d> polytope;  // vertices of the feasible qdot set
};

inline ToyResult solve_toy(const ToyExample& toy, Mode mode) {
  ControllerSettings settings;
  settings.mode = mode;
  settings.control_period = toy.control_period;
  settings.impacts = {toy.impact};
  settings.bounds = toy.bounds;
  const EndEffectorPartition partition = EndEffectorPartition::from_roles(toy.model);
  const std::vector<TaskObjective> tasks = {
      end_effector_acceleration_task(toy.model, toy.state, 0, toy.desired_acceleration, 1.0)};
  const ControllerOutput out =
      controller_step(toy.model, toy.state, partition, settings, {}, tasks, true);

  ToyResult r;
  r.mode = mode;
  r.solution = out.solution;
  r.blocks = out.blocks;
  if (!out.solution.optimal()) return r;
  r.qdd = out.qdd;
  r.pre_impact_velocity = toy.state.v + out.qdd * toy.control_period;
  r.post_impact_velocity = r.pre_impact_velocity + out.predicted->joint_velocity;

  // Feasible set in the qdot-after-one-step coordinates y = qdot + qdd dt.
  MatX A(0, 2);
  VecX b(0);
  for (const auto& blk : out.blocks) {
    if (mode == Mode::Baseline && blk.provenance == Provenance::ImpactAware) continue;
    // A qdd <= b  <=>  (A / dt) y <= b + (A / dt) qdot
    const MatX Ay = blk.A / toy.control_period;
    MatX A2(A.rows() + Ay.rows(), 2);
    A2 << A, Ay;
    VecX b2(b.size() + blk.b.size());
    b2 << b, blk.b + Ay * toy.state.v;
    A = std::move(A2);
    b = std::move(b2);
  }
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < A.rows(); ++j) {
      Eigen::Matrix2d m;
      m << A.row(i), A.row(j);
      if (std::abs(m.determinant()) < 1e-12) continue;
      const Eigen::Vector2d p = m.inverse() * (Eigen::Vector2d(b(i), b(j)));
      if (((A * p - b).array() <= 1e-9 * (1.0 + b.cwiseAbs().array())).all()) {
        r.polytope.push_back(p);
      }
    }
  }
  // Counter-clockwise order around the centroid.
  if (!r.polytope.empty()) {
    Eigen::Vector2d c = Eigen::Vector2d::Zero();
    for (const auto& p : r.polytope) c += p;
    c /= static_cast<double>(r.polytope.size());
    std::sort(r.polytope.begin(), r.polytope.end(),
              [&c](const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
                return std::atan2(a.y() - c.y(), a.x() - c.x()) <
                       std::atan2(b.y() - c.y(), b.x() - c.x());
              });
  }
  return r;
}

}  // namespace impact_qp
