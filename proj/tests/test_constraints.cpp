#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace impact_qp;
using namespace impact_qp::testing;

namespace {

constexpr double kDt = 0.005;

VecX random_vec(std::mt19937_64& rng, Eigen::Index n, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  VecX v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = u(rng);
  return v;
}

BoundsSpec symmetric_bounds(int n, double v, double tau) {
  BoundsSpec b = BoundsSpec::unbounded(n);
  b.v_upper = VecX::Constant(n, v);
  b.v_lower = -b.v_upper;
  b.tau_upper = VecX::Constant(n, tau);
  b.tau_lower = -b.tau_upper;
  b.impulse_upper = 0.4 * b.tau_upper;
  b.impulse_lower = -b.impulse_upper;
  return b;
}

ZmpPolygon feet_polygon() {
  return ZmpPolygon::support_polygon(
      {Vec3(0.1, 0.1, 0), Vec3(0.1, -0.1, 0), Vec3(-0.1, 0.1, 0), Vec3(-0.1, -0.1, 0)},
      Vec3::Zero());
}

}  // namespace

TEST(ConstraintBlock, ResidualAndValidation) {
  ConstraintBlock b{"x", RowKind::Inequality, MatX::Identity(2, 2), Eigen::Vector2d(1, 2)};
  EXPECT_TRUE(b.satisfied(Eigen::Vector2d(1, 2)));
  EXPECT_NEAR(b.max_violation(Eigen::Vector2d(1.5, 0)), 0.5, 1e-15);
  ConstraintBlock e{"e", RowKind::Equality, MatX::Identity(1, 1), VecX::Constant(1, 1.0)};
  EXPECT_NEAR(e.max_violation(VecX::Constant(1, 0.0)), 1.0, 1e-15);
  ConstraintBlock bad{"bad", RowKind::Inequality, MatX::Identity(2, 2), VecX::Zero(3)};
  EXPECT_THROW(bad.validate(), DimensionError);
  bad.b = VecX::Zero(2);
  bad.A(0, 0) = std::nan("");
  EXPECT_THROW(bad.validate(), DimensionError);
}

TEST(ConstraintBlock, DropUnboundedAndEmbed) {
  ConstraintBlock b{"x", RowKind::Inequality, MatX::Identity(3, 3), Eigen::Vector3d(1, kInf, 2)};
  const ConstraintBlock d = drop_unbounded_rows(b);
  ASSERT_EQ(d.rows(), 2);
  EXPECT_EQ(d.b(1), 2.0);
  const VariableLayout layout{3, {4, 4}};
  const ConstraintBlock e = embed(d, layout);
  EXPECT_EQ(e.A.cols(), 11);
  EXPECT_EQ(e.A.rightCols(8).norm(), 0.0);
  EXPECT_EQ(layout.generator_offset(1), 7);
}

TEST(FrictionCone, GeneratorsInsideAndInscribed) {
  ContactSpec spec;
  spec.friction = 0.6;
  for (int k : {4, 6, 8}) {
    spec.generators = k;
    const MatX C = friction_cone_force_rows(spec);
    const Mat3X G = generator_matrix(spec, Mat3::Identity());
    EXPECT_LE((C * G).maxCoeff(), 1e-12);
    std::mt19937_64 rng(31 + k);
    for (int t = 0; t < 2000; ++t) {
      const Vec3 f = random_vec(rng, 3, 1.0);
      if ((C * f).maxCoeff() <= 0.0) {
        EXPECT_LE(f.head<2>().norm(), spec.friction * f.z() + 1e-12);
      }
    }
  }
}

TEST(FrictionCone, FourGeneratorPyramidEdges) {
  ContactSpec spec;
  spec.friction = 0.7;
  const MatX C = friction_cone_force_rows(spec);
  const double edge = 0.7 / std::sqrt(2.0);
  EXPECT_LE((C * Vec3(edge, 0, 1)).maxCoeff(), 1e-12);
  EXPECT_GT((C * Vec3(edge + 1e-6, 0, 1)).maxCoeff(), 0.0);
  EXPECT_GT((C * Vec3(0, 0, -1)).maxCoeff(), 0.0);
}

TEST(FrictionCone, RotatedGenerators) {
  std::mt19937_64 rng(33);
  ContactSpec spec;
  spec.normal = random_unit(rng);
  const Mat3 R = contact_rotation(spec.normal);
  EXPECT_LT((R.col(2) - spec.normal).norm(), 1e-15);
  EXPECT_LT((R.transpose() * R - Mat3::Identity()).norm(), 1e-12);
  const Mat3X G = generator_matrix(spec, R);
  EXPECT_LE((friction_cone_force_rows(spec) * R.transpose() * G).maxCoeff(), 1e-12);
}

TEST(WrenchCone, CenterOfPressureRows) {
  ContactSpec spec;
  spec.half_x = 0.1;
  spec.half_y = 0.05;
  const WrenchCone cone = contact_wrench_cone_rows(spec);
  Vec6 w;
  w << 0, 0, 100, 5.0, 10.0, 0;
  EXPECT_LE((cone.C * w - cone.d).maxCoeff(), 1e-12);
  w(3) = 5.1;
  EXPECT_GT((cone.C * w - cone.d).maxCoeff(), 0.0);
  w(3) = 0.0;
  w(4) = -10.1;
  EXPECT_GT((cone.C * w - cone.d).maxCoeff(), 0.0);
  spec.tau_z_max = 1.0;
  EXPECT_EQ(contact_wrench_cone_rows(spec).C.rows(), cone.C.rows() + 1);
}

TEST(ContactSpec, Validation) {
  ContactSpec spec;
  spec.generators = 3;
  EXPECT_THROW(spec.validate(), std::invalid_argument);
  spec.generators = 4;
  spec.friction = 0.0;
  EXPECT_THROW(spec.validate(), std::invalid_argument);
}

TEST(Zmp, SupportPolygonOfFeet) {
  const ZmpPolygon p = feet_polygon();
  EXPECT_EQ(p.A.rows(), 4);
  EXPECT_EQ(p.vertices().size(), 4u);
  EXPECT_TRUE(p.contains(Vec3::Zero()));
  EXPECT_TRUE(p.contains(Vec3(0.1, -0.1, 0), 1e-12));
  EXPECT_FALSE(p.contains(Vec3(0.11, 0, 0)));
  EXPECT_NEAR(p.violation(Vec3(0.15, 0, 0)), 0.05, 1e-12);
  EXPECT_NO_THROW(p.validate());
  EXPECT_THROW(ZmpPolygon::support_polygon({Vec3::Zero(), Vec3::UnitX(), 2 * Vec3::UnitX()},
                                           Vec3::Zero()),
               std::invalid_argument);
}

TEST(Zmp, WrenchRowsMatchZmpMembership) {
  const ZmpPolygon p = feet_polygon();
  const MatX G = zmp_rows(p);
  std::mt19937_64 rng(34);
  int inside = 0, outside = 0;
  for (int t = 0; t < 10000; ++t) {
    Vec6 w = random_vec(rng, 6, 10.0);
    w(2) = 5.0 + std::abs(w(2)) * 10.0;
    const bool by_rows = (G * w).maxCoeff() <= 0.0;
    const bool by_zmp = p.contains(zmp(w, Vec3::UnitZ()));
    EXPECT_EQ(by_rows, by_zmp);
    (by_zmp ? inside : outside)++;
  }
  EXPECT_GT(inside, 100);
  EXPECT_GT(outside, 100);
}

TEST(JointTorque, RowsMatchInverseDynamics) {
  std::mt19937_64 rng(35);
  for (int t = 0; t < 10; ++t) {
    const RobotModel m = random_model(rng, {.dof = 4, .floating = t % 2 == 0});
    const RobotState s = random_state(rng, m);
    const int n = m.num_actuated();
    const BoundsSpec bounds = symmetric_bounds(n, 2.0, 20.0);
    const std::vector<int> frames{0};
    const MatX Jc = stacked_jacobian(m, compute_kinematics(m, s), frames);
    const VecX F = random_vec(rng, 3, 10.0);
    const ConstraintBlock blk = joint_torque_rows(m, s, bounds, Jc, F);
    const MatX M = mass_matrix(m, s);
    const VecX N = bias_forces(m, s);
    for (int k = 0; k < 200; ++k) {
      const VecX qdd = random_vec(rng, m.nv(), 20.0);
      const VecX tau = (M * qdd + N - Jc.transpose() * F).tail(n);
      const bool inside = (tau.cwiseAbs().array() <= 20.0).all();
      EXPECT_EQ(blk.satisfied(qdd, 0.0), inside);
    }
  }
}

TEST(JointKinematics, EulerStepBounds) {
  const RobotModel m = planar_2r();
  const RobotState s{Eigen::Vector2d(0.1, 0.2), Eigen::Vector2d(0.5, -0.3)};
  BoundsSpec b = symmetric_bounds(2, 0.6, 10.0);
  b.q_upper = VecX::Constant(2, 0.3);
  b.q_lower = -b.q_upper;
  const ConstraintBlock blk = joint_kinematic_rows(m, s, b, kDt);
  EXPECT_EQ(blk.rows(), 8);
  const VecX qdd = Eigen::Vector2d((0.6 - 0.5) / kDt, (-0.6 + 0.3) / kDt);
  EXPECT_TRUE(blk.satisfied(qdd, 1e-9));
  EXPECT_FALSE(blk.satisfied(qdd * 1.01, 1e-9));
  const ConstraintBlock free = joint_kinematic_rows(m, s, BoundsSpec::unbounded(2), kDt);
  EXPECT_EQ(free.rows(), 0);
}

TEST(ContactAcceleration, ZeroAtSolution) {
  std::mt19937_64 rng(36);
  const RobotModel m = random_model(rng, {.dof = 6, .floating = true});
  const RobotState s = random_state(rng, m);
  const ConstraintBlock blk = contact_acceleration_rows(m, s, {1});
  const VecX qdd = blk.A.completeOrthogonalDecomposition().solve(blk.b);
  const Vec3 a = point_jacobian(m, s, 1) * qdd + jacobian_derivative(m, s, 1) * s.v;
  EXPECT_LT(a.norm(), 1e-9);
}

TEST(NewtonEuler, FreeFallWithoutContacts) {
  const RobotModel m = free_body();
  const RobotState s{m.neutral_configuration(), VecX::Zero(6)};
  const VariableLayout layout{6, {}};
  const ConstraintBlock blk = newton_euler_rows(m, s, {}, {}, layout);
  VecX qdd = VecX::Zero(6);
  qdd(2) = -9.81;
  EXPECT_LT(blk.residual(qdd).maxCoeff(), 1e-12);
  EXPECT_EQ(newton_euler_rows(planar_2r(), ToyExample::paper().state, {}, {}, {2, {}}).rows(), 0);
}

TEST(NewtonEuler, StandingOnGeneratorsBalancesGravity) {
  const RobotModel m = load_model(data_path("humanoid_wall.json"));
  RobotState s = humanoid_state(m);
  s.v.setZero();
  const auto part = EndEffectorPartition::from_roles(m);
  std::vector<ContactSpec> specs(part.m1());
  std::vector<Mat3X> gens;
  VariableLayout layout{m.nv(), {}};
  for (const auto& c : specs) {
    gens.push_back(generator_matrix(c, contact_rotation(c.normal)));
    layout.generator_counts.push_back(c.generators);
  }
  const ConstraintBlock blk = newton_euler_rows(m, s, part.established, gens, layout);
  // Equal vertical support on the four feet, arms static.
  VecX x = VecX::Zero(layout.size());
  const double fz = m.total_mass() * 9.81 / 4.0;
  x.tail(layout.num_generators()).setConstant(fz / 4.0);
  EXPECT_LT(blk.residual(x).head<3>().maxCoeff(), 1e-9 * fz);
}

TEST(CentroidalRows, ComVelocityAndAngularMomentum) {
  std::mt19937_64 rng(37);
  const RobotModel m = load_model(data_path("humanoid_wall.json"));
  const RobotState s = humanoid_state(m);
  const ConstraintBlock cv = com_velocity_rows(ComVelPolygon::box(0.05, 0.05), m, s, kDt);
  BoundsSpec b = symmetric_bounds(6, 2, 60);
  b.angular_momentum_max = Vec3::Constant(0.5);
  const ConstraintBlock am = angular_momentum_rows(m, s, b, kDt);
  for (int t = 0; t < 500; ++t) {
    const VecX qdd = random_vec(rng, m.nv(), 20.0);
    const RobotState next{s.q, s.v + kDt * qdd};
    const Vec3 cdot = com(m, next).velocity;
    EXPECT_EQ(cv.satisfied(qdd, 0.0),
              std::abs(cdot.x()) <= 0.05 + 1e-12 && std::abs(cdot.y()) <= 0.05 + 1e-12);
    const Vec3 k = centroidal_momentum_matrix(m, next).topRows<3>() * next.v;
    EXPECT_EQ(am.satisfied(qdd, 1e-12), (k.cwiseAbs().array() <= 0.5).all());
  }
}

TEST(Template, ZeroJumpReducesToStaticBound) {
  std::mt19937_64 rng(38);
  const MatX D = random_vec(rng, 12, 1.0).reshaped(4, 3);
  const VecX bound = random_vec(rng, 4, 1.0);
  const VecX current = random_vec(rng, 3, 1.0);
  const VecX qdot = random_vec(rng, 5, 1.0);
  const ConstraintBlock blk = impact_template_rows(
      "t", D, bound, JumpDecomposition::zero("z", 3, 5), current, qdot, kDt);
  EXPECT_EQ(blk.provenance, Provenance::ImpactAware);
  EXPECT_EQ(blk.A.norm(), 0.0);
  EXPECT_LT((blk.b - (bound - D * current)).norm(), 1e-15);
  EXPECT_THROW(impact_template_rows("t", D, bound, JumpDecomposition::zero("z", 2, 5), current,
                                    qdot, kDt),
               DimensionError);
}

TEST(Template, ZeroJointVelocityJumpEqualsBaseline) {
  const ToyExample toy = ToyExample::paper();
  const ConstraintBlock aware = impact_joint_velocity_rows(
      toy.model, JumpDecomposition::zero("z", 2, 2), toy.bounds, toy.state.v, kDt);
  const ConstraintBlock base = joint_kinematic_rows(toy.model, toy.state, toy.bounds, kDt);
  ASSERT_EQ(aware.rows(), base.rows());
  EXPECT_LT((aware.A - base.A).norm(), 1e-15);
  EXPECT_LT((aware.b - base.b).norm(), 1e-15);
}

TEST(ImpactRows, JointVelocityMembershipMatchesPrediction) {
  std::mt19937_64 rng(39);
  const ToyExample toy = ToyExample::paper();
  const ImpulseDistribution d = build_distribution(
      toy.model, toy.state, EndEffectorPartition::from_roles(toy.model), {toy.impact});
  const JumpDecomposition jd = predict_joint_velocity_jump(d);
  const ConstraintBlock blk =
      impact_joint_velocity_rows(toy.model, jd, toy.bounds, toy.state.v, kDt);
  int inside = 0;
  for (int t = 0; t < 5000; ++t) {
    const VecX qdd = random_vec(rng, 2, 300.0);
    const VecX post = toy.state.v + qdd * kDt + jd.evaluate(qdd, toy.state.v, kDt);
    const bool ok = (post.array() <= toy.bounds.v_upper.array()).all() &&
                    (post.array() >= toy.bounds.v_lower.array()).all();
    EXPECT_EQ(blk.satisfied(qdd, 0.0), ok);
    inside += ok;
  }
  EXPECT_GT(inside, 10);
}

TEST(ImpactRows, ImpulsiveTorqueAndZmp) {
  std::mt19937_64 rng(40);
  const RobotModel m = load_model(data_path("humanoid_wall.json"));
  const RobotState s = humanoid_state(m);
  const auto part = EndEffectorPartition::from_roles(m);
  ImpactConfig c;
  c.normal = -Vec3::UnitX();
  const ImpulseDistribution d = build_distribution(m, s, part, {c});
  const Predictors p = Predictors::from(d, Vec3::Zero());
  const BoundsSpec b = symmetric_bounds(6, 2, 60);
  const ConstraintBlock torque = impact_impulsive_torque_rows(m, p.impulsive_torque, b, s.v, kDt);
  Vec6 W = Vec6::Zero();
  W(2) = m.total_mass() * 9.81;
  const ConstraintBlock zmp_blk = impact_zmp_rows(p.wrench, feet_polygon(), W, s.v, kDt);
  for (int t = 0; t < 500; ++t) {
    const VecX qdd = random_vec(rng, m.nv(), 50.0);
    const VecX gamma = p.impulsive_torque.evaluate(qdd, s.v, kDt).tail(6);
    EXPECT_EQ(torque.satisfied(qdd, 0.0), (gamma.cwiseAbs().array() <= 24.0).all());
    const Vec6 post = W + p.wrench.evaluate(qdd, s.v, kDt);
    if (post(2) > 1.0) {
      EXPECT_EQ(zmp_blk.satisfied(qdd, 0.0), feet_polygon().contains(zmp(post, Vec3::UnitZ())));
    }
  }
}

TEST(ImpactRows, ContactWrenchConeOnMeasuredForces) {
  const RobotModel m = load_model(data_path("humanoid_wall.json"));
  const RobotState s = humanoid_state(m);
  const auto part = EndEffectorPartition::from_roles(m);
  ImpactConfig c;
  c.normal = -Vec3::UnitX();
  const ImpulseDistribution d = build_distribution(m, s, part, {c});
  const JumpDecomposition fj = predict_force_jumps(d);
  std::vector<ContactSpec> specs(part.m1());
  const std::vector<Mat3> rot(part.m1(), Mat3::Identity());
  VecX measured = VecX::Zero(3 * part.m1());
  for (int k = 0; k < part.m1(); ++k) measured(3 * k + 2) = 93.2;
  const ConstraintBlock blk = impact_cwc_rows(fj, specs, rot, measured, s.v, kDt);
  EXPECT_EQ(blk.rows(), 5 * part.m1());
  const VecX qdd = VecX::Zero(m.nv());
  const VecX post = measured + fj.evaluate(qdd, s.v, kDt).head(3 * part.m1());
  bool inside = true;
  for (int k = 0; k < part.m1(); ++k) {
    inside = inside && (friction_cone_force_rows(specs[k]) * post.segment<3>(3 * k)).maxCoeff() <= 0.0;
  }
  EXPECT_EQ(blk.satisfied(qdd, 0.0), inside);
}
