#pragma once

// One-step-ahead prediction of impact-induced state jumps.
//
// Every predicted jump of a quantity lambda is affine in the controller's
// decision variable:
//
//     delta_lambda = J * qdd * dt + C * qdot          (JumpDecomposition)
//
// The chain is: restitution at the impacting end-effectors gives the target
// velocity jump, the least-norm impulse distribution maps it to joint
// velocity jumps and impulses, and every other quantity is a linear image of
// those two.

#include "impact_qp/model.hpp"

#include <Eigen/SVD>

#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace impact_qp {

/// The distribution matrix lost rank in the directions the restitution
/// targets live in; carries the singular values of B.
class ConditioningError : public std::runtime_error {
 public:
  ConditioningError(const std::string& what, VecX singular_values)
      : std::runtime_error(what), singular_values(std::move(singular_values)) {}
  VecX singular_values;
};

/// Post-impact normal force too small for a ZMP to exist.
class DegenerateZmpError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ImpactConfig {
  double restitution = 0.02;
  Vec3 normal = Vec3::UnitZ();
  double impact_duration = 0.005;  // delta t of the impulse integral
  double control_period = 0.005;   // Delta t of the controller

  void validate() const {
    if (std::abs(normal.norm() - 1.0) > 1e-9) {
      throw std::invalid_argument("impact normal must be unit norm");
    }
    if (!(impact_duration > 0.0) || !(control_period > 0.0)) {
      throw std::invalid_argument("impact duration and control period must be positive");
    }
    if (!(restitution >= 0.0)) {
      throw std::invalid_argument("coefficient of restitution must be non-negative");
    }
  }

  Mat3 normal_projector() const { return normal * normal.transpose(); }
  /// -(1 + c_r) n n^T
  Mat3 jump_projector() const { return -(1.0 + restitution) * normal_projector(); }
};

/// End-effector velocity jump for a pre-impact velocity.
inline Vec3 restitution_jump(const ImpactConfig& config, const Vec3& pre_velocity) {
  config.validate();
  return config.jump_projector() * pre_velocity;
}

struct JumpDecomposition {
  std::string quantity;
  MatX J;  // rows x nv, multiplies qdd * dt
  MatX C;  // rows x nv, multiplies qdot

  Eigen::Index rows() const { return J.rows(); }

  VecX evaluate(const VecX& qdd, const VecX& qdot, double dt) const {
    return J * qdd * dt + C * qdot;
  }

  static JumpDecomposition zero(std::string name, Eigen::Index rows, Eigen::Index nv) {
    return {std::move(name), MatX::Zero(rows, nv), MatX::Zero(rows, nv)};
  }
};

/// Left-multiplies both matrices of a decomposition.
inline JumpDecomposition compose(std::string quantity, const MatX& map,
                                 const JumpDecomposition& d) {
  return {std::move(quantity), map * d.J, map * d.C};
}

/// Frame indices of established (S_c), impacting (S_i) and free (S_f)
/// end-effectors.
struct EndEffectorPartition {
  std::vector<int> established;
  std::vector<int> impacting;
  std::vector<int> free;

  int m1() const { return static_cast<int>(established.size()); }
  int m2() const { return static_cast<int>(impacting.size()); }
  int m3() const { return static_cast<int>(free.size()); }

  /// S_m ordered [S_c, S_i, S_f].
  std::vector<int> all() const {
    std::vector<int> out = established;
    out.insert(out.end(), impacting.begin(), impacting.end());
    out.insert(out.end(), free.begin(), free.end());
    return out;
  }
  /// S_e = S_c followed by S_i.
  std::vector<int> external() const {
    std::vector<int> out = established;
    out.insert(out.end(), impacting.begin(), impacting.end());
    return out;
  }

  static EndEffectorPartition from_roles(const RobotModel& model) {
    EndEffectorPartition p;
    for (int i = 0; i < model.num_frames(); ++i) {
      switch (model.frame(i).role) {
        case EndEffectorRole::Established: p.established.push_back(i); break;
        case EndEffectorRole::Impacting: p.impacting.push_back(i); break;
        case EndEffectorRole::Free: p.free.push_back(i); break;
      }
    }
    return p;
  }
};

namespace detail {

inline MatX block_projector(const std::vector<ImpactConfig>& configs) {
  MatX P = MatX::Zero(3 * configs.size(), 3 * configs.size());
  for (std::size_t k = 0; k < configs.size(); ++k) {
    P.block<3, 3>(3 * k, 3 * k) = configs[k].jump_projector();
  }
  return P;
}

inline void check_configs(const EndEffectorPartition& partition,
                          const std::vector<ImpactConfig>& configs) {
  if (partition.impacting.empty()) {
    throw std::invalid_argument("impact prediction needs at least one impacting end-effector");
  }
  if (configs.size() != partition.impacting.size()) {
    throw std::invalid_argument("one impact configuration per impacting end-effector is required");
  }
  for (const auto& c : configs) {
    c.validate();
    if (c.control_period != configs.front().control_period ||
        c.impact_duration != configs.front().impact_duration) {
      throw std::invalid_argument("impact configurations must share durations and periods");
    }
  }
}

}  // namespace detail

/// Jump of the impacting end-effector velocities:
/// J = P J_i, C = P (J_i + Jdot_i dt).
inline JumpDecomposition impacting_velocity_jump_map(
    const RobotModel& model, const RobotState& state,
    const EndEffectorPartition& partition,
    const std::vector<ImpactConfig>& configs) {
  detail::check_configs(partition, configs);
  const Kinematics kin = compute_kinematics(model, state);
  const MatX P = detail::block_projector(configs);
  const MatX J = stacked_jacobian(model, kin, partition.impacting);
  const MatX Jd = stacked_jacobian_derivative(model, kin, state.v, partition.impacting);
  const double dt = configs.front().control_period;
  return {"ee_velocity_impacting", P * J, P * (J + Jd * dt)};
}

struct ImpulseSolution {
  VecX joint_velocity_jump;       // nv
  VecX impulses;                  // 3 (m1 + m2), ordered [S_c, S_i]
  VecX force_jumps;               // impulses / impact duration
};

/// Least-norm impulse distribution u = [dqdot; iota_e] solving B u = b with
/// b = [0; 0; dxdot_i]. Only the columns of the pseudoinverse acting on the
/// restitution targets are kept (K_dqdot, K_iota).
struct ImpulseDistribution {
  int nv = 0;
  int m1 = 0, m2 = 0, m3 = 0;
  bool centroidal_row = false;
  double control_period = 0.005;
  double impact_duration = 0.005;

  MatX B;
  MatX K_dqdot;    // nv x 3 m2
  MatX K_impulse;  // 3 (m1 + m2) x 3 m2
  MatX projector;  // block-diagonal jump projectors, 3 m2 x 3 m2
  MatX J_all;      // S_m stacked [S_c, S_i, S_f]
  MatX J_external; // S_e stacked [S_c, S_i]
  MatX J_impacting;
  MatX Jdot_impacting;
  MatX Upsilon;    // J_all M^-1 J_all^T
  MatX Omega;      // left 3 (m1 + m2) columns of Upsilon
  MatX A_G;        // centroidal momentum matrix at the current state
  std::vector<Vec3> external_points;  // S_e contact points (world)
  Vec3 com = Vec3::Zero();
  double total_mass = 0.0;

  VecX singular_values;
  int rank = 0;
  /// (sigma_max / sigma_min)^2 over the retained spectrum of B.
  double condition = 1.0;

  /// Full least-norm solution u* = B^# b for a target impacting velocity jump.
  VecX solve_full(const VecX& target) const {
    check_dim(target.size(), 3 * m2, "impacting velocity jump");
    VecX u(K_dqdot.rows() + K_impulse.rows());
    u << K_dqdot * target, K_impulse * target;
    return u;
  }

  /// Right-hand side b of B u = b.
  VecX rhs(const VecX& target) const {
    VecX b = VecX::Zero(B.rows());
    b.tail(3 * m2) = target;
    return b;
  }

  ImpulseSolution solve(const VecX& target) const {
    check_dim(target.size(), 3 * m2, "impacting velocity jump");
    ImpulseSolution s;
    s.joint_velocity_jump = K_dqdot * target;
    s.impulses = K_impulse * target;
    s.force_jumps = s.impulses / impact_duration;
    return s;
  }
};

struct DistributionOptions {
  /// Singular values below this fraction of sigma_max are treated as zero.
  double rank_tolerance = 1e-10;
  /// Allowed relative residual of the restitution rows before the
  /// distribution is declared ill-conditioned.
  double consistency_tolerance = 1e-8;
};

inline ImpulseDistribution build_distribution(
    const RobotModel& model, const RobotState& state,
    const EndEffectorPartition& partition,
    const std::vector<ImpactConfig>& configs,
    const DistributionOptions& options = {}) {
  detail::check_configs(partition, configs);
  const Kinematics kin = compute_kinematics(model, state);
  const int nv = model.nv();

  ImpulseDistribution d;
  d.nv = nv;
  d.m1 = partition.m1();
  d.m2 = partition.m2();
  d.m3 = partition.m3();
  d.centroidal_row = model.floating_base();
  d.control_period = configs.front().control_period;
  d.impact_duration = configs.front().impact_duration;
  d.projector = detail::block_projector(configs);
  d.J_all = stacked_jacobian(model, kin, partition.all());
  d.J_external = stacked_jacobian(model, kin, partition.external());
  d.J_impacting = stacked_jacobian(model, kin, partition.impacting);
  d.Jdot_impacting =
      stacked_jacobian_derivative(model, kin, state.v, partition.impacting);
  d.A_G = centroidal_momentum_matrix(model, kin);
  d.com = com_position(model, kin);
  d.total_mass = model.total_mass();
  for (int f : partition.external()) d.external_points.push_back(frame_position(model, kin, f));

  const MatX M = mass_matrix(model, kin);
  Eigen::LLT<MatX> llt(M);
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error("mass matrix is not positive definite");
  }
  const int ne = 3 * (d.m1 + d.m2);
  const int nm = 3 * (d.m1 + d.m2 + d.m3);
  d.Upsilon = d.J_all * llt.solve(d.J_all.transpose());
  d.Omega = d.Upsilon.leftCols(ne);

  const int rows = nm + (d.centroidal_row ? 6 : 0) + 3 * d.m2;
  d.B = MatX::Zero(rows, nv + ne);
  d.B.topLeftCorner(nm, nv) = d.J_all;
  d.B.topRightCorner(nm, ne) = -d.Omega;
  int r = nm;
  if (d.centroidal_row) {
    d.B.block(r, 0, 6, nv) = d.A_G;
    for (int k = 0; k < d.m1 + d.m2; ++k) {
      // [I; (p - c)x] arranged as [angular; linear] to match A_G's rows.
      const Eigen::Matrix<double, 6, 3> G = force_to_wrench(d.external_points[k], d.com);
      d.B.block(r, nv + 3 * k, 3, 3) = -G.bottomRows<3>();
      d.B.block(r + 3, nv + 3 * k, 3, 3) = -G.topRows<3>();
    }
    r += 6;
  }
  d.B.block(r, 0, 3 * d.m2, nv) = d.J_impacting;

  Eigen::JacobiSVD<MatX> svd(d.B, Eigen::ComputeThinU | Eigen::ComputeThinV);
  d.singular_values = svd.singularValues();
  const double smax = d.singular_values.size() ? d.singular_values(0) : 0.0;
  const double cutoff = options.rank_tolerance * smax;
  d.rank = 0;
  VecX inv = VecX::Zero(d.singular_values.size());
  for (Eigen::Index i = 0; i < d.singular_values.size(); ++i) {
    if (d.singular_values(i) > cutoff && d.singular_values(i) > 0.0) {
      inv(i) = 1.0 / d.singular_values(i);
      ++d.rank;
    }
  }
  if (d.rank == 0) {
    throw ConditioningError("impulse distribution matrix is zero", d.singular_values);
  }
  const double smin = d.singular_values(d.rank - 1);
  d.condition = (smax / smin) * (smax / smin);

  // Right 3 m2 columns of B^# = V S^-1 U^T.
  const MatX U_tail = svd.matrixU().bottomRows(3 * d.m2);
  const MatX K = svd.matrixV() * inv.asDiagonal() * U_tail.transpose();
  d.K_dqdot = K.topRows(nv);
  d.K_impulse = K.bottomRows(ne);

  // The targets live in range(P [J_i, Jdot_i]); they must be reproducible.
  MatX targets(3 * d.m2, 2 * nv);
  targets << d.projector * d.J_impacting, d.projector * d.Jdot_impacting;
  MatX b_targets = MatX::Zero(rows, 2 * nv);
  b_targets.bottomRows(3 * d.m2) = targets;
  const MatX residual = d.B * (K * targets) - b_targets;
  if (residual.norm() > options.consistency_tolerance * (1.0 + targets.norm())) {
    std::ostringstream msg;
    msg << "impulse distribution is rank deficient along the restitution targets"
        << " (residual " << residual.norm() << ", rank " << d.rank << " of "
        << d.singular_values.size() << ")";
    throw ConditioningError(msg.str(), d.singular_values);
  }
  return d;
}

/// dqdot jump: J = K P J_i, C = K P (J_i + Jdot_i dt).
inline JumpDecomposition predict_joint_velocity_jump(const ImpulseDistribution& d) {
  const MatX base = d.K_dqdot * d.projector;
  return {"joint_velocity",
          base * d.J_impacting,
          base * (d.J_impacting + d.Jdot_impacting * d.control_period)};
}

/// Force jumps of S_e = [S_c, S_i]: the K_iota chain divided by delta t.
inline JumpDecomposition predict_force_jumps(const ImpulseDistribution& d) {
  const MatX base = d.K_impulse * d.projector / d.impact_duration;
  return {"force",
          base * d.J_impacting,
          base * (d.J_impacting + d.Jdot_impacting * d.control_period)};
}

/// Impulsive joint torques J_e^T * delta f.
inline JumpDecomposition predict_impulsive_torques(const ImpulseDistribution& d) {
  return compose("impulsive_torque", d.J_external.transpose(), predict_force_jumps(d));
}

/// Velocity jumps of every end-effector of S_m.
inline JumpDecomposition predict_ee_velocity_jumps(const ImpulseDistribution& d) {
  return compose("ee_velocity", d.J_all, predict_joint_velocity_jump(d));
}

/// Centroidal angular momentum jump; fixed-base models carry no centroidal
/// row and skip it.
inline std::optional<JumpDecomposition> predict_angular_momentum_jump(
    const ImpulseDistribution& d) {
  if (!d.centroidal_row) return std::nullopt;
  return compose("angular_momentum", d.A_G.topRows<3>(), predict_joint_velocity_jump(d));
}

/// Horizontal (x, y) COM velocity jump.
inline std::optional<JumpDecomposition> predict_com_velocity_jump(
    const ImpulseDistribution& d) {
  if (!d.centroidal_row) return std::nullopt;
  const MatX map = d.A_G.block(3, 0, 2, d.nv) / d.total_mass;
  return compose("com_velocity_xy", map, predict_joint_velocity_jump(d));
}

/// Net contact wrench jump [delta f; delta tau] about `origin`.
inline JumpDecomposition predict_wrench_jump(const ImpulseDistribution& d,
                                             const Vec3& origin) {
  MatX G(6, 3 * (d.m1 + d.m2));
  for (int k = 0; k < d.m1 + d.m2; ++k) {
    G.middleCols(3 * k, 3) = force_to_wrench(d.external_points[k], origin);
  }
  return compose("wrench", G, predict_force_jumps(d));
}

/// Smallest post-impact normal force accepted by the ZMP jump.
inline constexpr double kMinZmpNormalForce = 1e-6;

/// ZMP of a wrench [f; tau]: n x tau / (n . f).
inline Vec3 zmp(const Vec6& wrench, const Vec3& normal) {
  const double fn = normal.dot(wrench.head<3>());
  if (std::abs(fn) < kMinZmpNormalForce) {
    throw DegenerateZmpError("normal force too small for a ZMP");
  }
  return normal.cross(wrench.tail<3>()) / fn;
}

/// ZMP jump n x delta_tau / n^T (f + delta f).
inline Vec3 predict_zmp_jump(const Vec6& wrench, const Vec6& wrench_jump,
                             const Vec3& normal) {
  const double fn = normal.dot(wrench.head<3>() + wrench_jump.head<3>());
  if (std::abs(fn) < kMinZmpNormalForce) {
    throw DegenerateZmpError("post-impact normal force too small for a ZMP jump");
  }
  return normal.cross(wrench_jump.tail<3>()) / fn;
}

}  // namespace impact_qp
