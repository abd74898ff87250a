#pragma once

// One control tick: rebuild the impulse distribution and jump predictors at
// the current state, compile baseline (and, when armed, impact-aware) rows,
// assemble and solve the QP, and recover joint torques.

#include "impact_qp/qp.hpp"

#include <optional>
#include <vector>

namespace impact_qp {

struct ControllerSettings {
  Mode mode = Mode::ImpactAware;
  double control_period = 0.005;
  std::vector<ImpactConfig> impacts;   // one per impacting end-effector
  std::vector<ContactSpec> contacts;   // one per established contact
  BoundsSpec bounds;
  std::optional<ZmpPolygon> zmp;       // relative to zmp_origin
  Vec3 zmp_origin = Vec3::Zero();
  std::optional<ComVelPolygon> com_velocity;
  AssembleOptions assemble;
  SolverOptions solver;
  DistributionOptions distribution;
};

/// Measured contact forces of the established contacts (world, 3 m1),
/// zero on the first tick.
struct Measurements {
  VecX contact_forces;
};

/// Jumps evaluated at the commanded acceleration.
struct PredictedJumps {
  VecX joint_velocity;
  VecX impulsive_torque;
  VecX force;                  // S_e = [S_c, S_i]
  VecX ee_velocity;            // S_m = [S_c, S_i, S_f]
  std::optional<Vec3> angular_momentum;
  std::optional<Eigen::Vector2d> com_velocity;
  std::optional<Vec6> wrench;  // about the ZMP origin
  std::optional<Vec3> zmp;     // post-impact ZMP, when defined
};

struct ControllerOutput {
  QPSolution solution;
  bool aware_active = false;
  bool fallback = false;  // slack relaxation was needed
  double slack = 0.0;
  VecX qdd;
  VecX weights;
  VecX contact_forces;    // G w, world, 3 m1
  VecX torques;           // actuated joints
  std::optional<ImpulseDistribution> distribution;
  std::optional<PredictedJumps> predicted;
  std::vector<ConstraintBlock> blocks;
  VariableLayout layout;
};

inline VariableLayout make_layout(const RobotModel& model,
                                  const std::vector<ContactSpec>& contacts) {
  VariableLayout layout{model.nv(), {}};
  for (const auto& c : contacts) layout.generator_counts.push_back(c.generators);
  return layout;
}

inline std::vector<Mat3X> contact_generators(const std::vector<ContactSpec>& contacts) {
  std::vector<Mat3X> out;
  for (const auto& c : contacts) out.push_back(generator_matrix(c, contact_rotation(c.normal)));
  return out;
}

/// Net wrench [f; tau] about `origin` of point forces (3 per point).
inline Vec6 net_wrench(const std::vector<Vec3>& points, const VecX& forces,
                       const Vec3& origin) {
  check_dim(forces.size(), 3 * static_cast<Eigen::Index>(points.size()), "point forces");
  Vec6 w = Vec6::Zero();
  for (std::size_t k = 0; k < points.size(); ++k) {
    w += force_to_wrench(points[k], origin) * forces.segment<3>(3 * k);
  }
  return w;
}

/// Every jump decomposition of the impact module for one distribution.
struct Predictors {
  JumpDecomposition joint_velocity;
  JumpDecomposition impulsive_torque;
  JumpDecomposition force;
  JumpDecomposition ee_velocity;
  std::optional<JumpDecomposition> angular_momentum;
  std::optional<JumpDecomposition> com_velocity;
  JumpDecomposition wrench;

  static Predictors from(const ImpulseDistribution& d, const Vec3& origin) {
    return {predict_joint_velocity_jump(d), predict_impulsive_torques(d),
            predict_force_jumps(d),          predict_ee_velocity_jumps(d),
            predict_angular_momentum_jump(d), predict_com_velocity_jump(d),
            predict_wrench_jump(d, origin)};
  }
};

namespace detail {

inline std::vector<Vec3> frame_points(const RobotModel& model, const Kinematics& kin,
                                      const std::vector<int>& frames) {
  std::vector<Vec3> out;
  for (int f : frames) out.push_back(frame_position(model, kin, f));
  return out;
}

}  // namespace detail

inline ControllerOutput controller_step(const RobotModel& model, const RobotState& state,
                                        const EndEffectorPartition& partition,
                                        const ControllerSettings& settings,
                                        const Measurements& measured,
                                        const std::vector<TaskObjective>& tasks,
                                        bool arm_impact_constraints) {
  model.check_state(state);
  check_dim(static_cast<Eigen::Index>(settings.contacts.size()), partition.m1(),
            "contact specifications");
  const int m1 = partition.m1();
  const VecX forces = measured.contact_forces.size() ? measured.contact_forces
                                                     : VecX::Zero(3 * m1);
  check_dim(forces.size(), 3 * m1, "measured contact forces");
  const double dt = settings.control_period;
  const Kinematics kin = compute_kinematics(model, state);

  ControllerOutput out;
  out.layout = make_layout(model, settings.contacts);
  const VariableLayout& layout = out.layout;
  const std::vector<Mat3X> generators = contact_generators(settings.contacts);
  const std::vector<Vec3> contact_points = detail::frame_points(model, kin, partition.established);
  const MatX Jc = stacked_jacobian(model, kin, partition.established);

  // Baseline rows.
  auto& blocks = out.blocks;
  blocks.push_back(joint_torque_rows(model, state, settings.bounds, Jc, forces));
  blocks.push_back(joint_kinematic_rows(model, state, settings.bounds, dt));
  if (m1 > 0) {
    blocks.push_back(contact_acceleration_rows(model, state, partition.established));
    blocks.push_back(generator_nonnegativity_rows(layout));
  }
  if (model.floating_base()) {
    blocks.push_back(newton_euler_rows(model, state, partition.established, generators, layout));
    if (settings.zmp && m1 > 0) {
      blocks.push_back(zmp_wrench_rows(*settings.zmp, settings.zmp_origin, contact_points,
                                       generators, layout));
    }
    if (settings.com_velocity) {
      blocks.push_back(com_velocity_rows(*settings.com_velocity, model, state, dt));
    }
    blocks.push_back(angular_momentum_rows(model, state, settings.bounds, dt));
  }

  // Impact-aware rows.
  out.aware_active = arm_impact_constraints && settings.mode == Mode::ImpactAware &&
                     partition.m2() > 0;
  std::optional<Predictors> predictors;
  if (partition.m2() > 0) {
    out.distribution = build_distribution(model, state, partition, settings.impacts,
                                          settings.distribution);
    predictors = Predictors::from(*out.distribution, settings.zmp_origin);
  }
  if (out.aware_active) {
    const auto& p = *predictors;
    blocks.push_back(impact_joint_velocity_rows(model, p.joint_velocity, settings.bounds,
                                                state.v, dt));
    blocks.push_back(impact_impulsive_torque_rows(model, p.impulsive_torque,
                                                  settings.bounds, state.v, dt));
    if (m1 > 0) {
      std::vector<Mat3> rotations;
      for (const auto& c : settings.contacts) rotations.push_back(contact_rotation(c.normal));
      blocks.push_back(impact_cwc_rows(p.force, settings.contacts, rotations, forces,
                                       state.v, dt));
    }
    if (p.angular_momentum) {
      const Vec3 k = out.distribution->A_G.topRows<3>() * state.v;
      blocks.push_back(impact_angular_momentum_rows(*p.angular_momentum,
                                                    settings.bounds.angular_momentum_max,
                                                    k, state.v, dt));
    }
    if (p.com_velocity && settings.com_velocity) {
      const Eigen::Vector2d cdot =
          out.distribution->A_G.block(3, 0, 2, model.nv()) * state.v / model.total_mass();
      blocks.push_back(impact_com_velocity_rows(*p.com_velocity, *settings.com_velocity,
                                                cdot, state.v, dt));
    }
    if (model.floating_base() && settings.zmp && m1 > 0) {
      const Vec6 W = net_wrench(contact_points, forces, settings.zmp_origin);
      blocks.push_back(impact_zmp_rows(p.wrench, *settings.zmp, W, state.v, dt));
    }
  }

  const Mode mode = out.aware_active ? Mode::ImpactAware : Mode::Baseline;
  out.solution = solve(assemble(tasks, blocks, layout, mode, settings.assemble),
                       settings.solver);
  if (!out.solution.optimal() && out.aware_active &&
      out.solution.status == SolveStatus::Infeasible) {
    AssembleOptions relaxed = settings.assemble;
    relaxed.slack = true;
    const QPProblem problem = assemble(tasks, blocks, layout, mode, relaxed);
    out.solution = solve(problem, settings.solver);
    out.fallback = true;
    if (out.solution.optimal()) {
      out.slack = out.solution.x(problem.slack_index);
      out.solution.x.conservativeResize(layout.size());
    }
  }
  if (!out.solution.optimal()) return out;

  out.qdd = out.solution.x.head(model.nv());
  out.weights = out.solution.x.tail(layout.num_generators());
  out.contact_forces = VecX::Zero(3 * m1);
  for (int k = 0; k < m1; ++k) {
    out.contact_forces.segment<3>(3 * k) =
        generators[k] * out.weights.segment(layout.generator_offset(k) - layout.nv,
                                            generators[k].cols());
  }
  VecX generalized = mass_matrix(model, kin) * out.qdd + bias_forces(model, kin);
  if (m1 > 0) generalized -= Jc.transpose() * out.contact_forces;
  out.torques = generalized.tail(model.num_actuated());

  if (predictors) {
    const auto& p = *predictors;
    PredictedJumps j;
    j.joint_velocity = p.joint_velocity.evaluate(out.qdd, state.v, dt);
    j.impulsive_torque = p.impulsive_torque.evaluate(out.qdd, state.v, dt);
    j.force = p.force.evaluate(out.qdd, state.v, dt);
    j.ee_velocity = p.ee_velocity.evaluate(out.qdd, state.v, dt);
    if (p.angular_momentum) j.angular_momentum = p.angular_momentum->evaluate(out.qdd, state.v, dt);
    if (p.com_velocity) j.com_velocity = p.com_velocity->evaluate(out.qdd, state.v, dt);
    if (model.floating_base() && m1 > 0) {
      const Vec6 W = net_wrench(contact_points, forces, settings.zmp_origin);
      const Vec6 dW = p.wrench.evaluate(out.qdd, state.v, dt);
      j.wrench = dW;
      const Vec3 n = settings.zmp ? settings.zmp->normal : Vec3::UnitZ();
      if (std::abs(n.dot(W.head<3>() + dW.head<3>())) >= kMinZmpNormalForce) {
        j.zmp = zmp(W + dW, n);
      }
    }
    out.predicted = std::move(j);
  }
  return out;
}

}  // namespace impact_qp
