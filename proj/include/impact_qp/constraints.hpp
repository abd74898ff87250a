#pragma once

// Half-plane and equality rows over the decision variable
// nu = [qdd (nv); generator weights (one group per established contact)].
//
// Baseline builders express the usual joint, contact and centroidal limits
// one control period ahead. The impact-aware builders instantiate the
// template
//
//     D * J * qdd * dt <= bound - D * (lambda + C * qdot)
//
// with the JumpDecomposition of the bounded quantity.

#include "impact_qp/impact.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <ostream>
#include <string>
#include <vector>

namespace impact_qp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class RowKind { Inequality, Equality };
enum class Provenance { Baseline, ImpactAware };

/// Rows A * nu <= b (or == b). A has either nv columns (acceleration only)
/// or the full layout width; see embed().
struct ConstraintBlock {
  std::string label;
  RowKind kind = RowKind::Inequality;
  MatX A;
  VecX b;
  Provenance provenance = Provenance::Baseline;

  Eigen::Index rows() const { return A.rows(); }

  /// Positive entries are violations (for equalities, absolute error).
  VecX residual(const VecX& x) const {
    VecX r = A * x - b;
    if (kind == RowKind::Equality) r = r.cwiseAbs();
    return r;
  }

  double max_violation(const VecX& x) const {
    if (rows() == 0) return 0.0;
    return std::max(0.0, residual(x).maxCoeff());
  }

  bool satisfied(const VecX& x, double tol = 1e-9) const {
    return max_violation(x) <= tol;
  }

  void validate() const {
    if (A.rows() != b.size()) {
      throw DimensionError("constraint block '" + label + "': row count mismatch");
    }
    if (!A.allFinite()) {
      throw DimensionError("constraint block '" + label + "': non-finite entries");
    }
  }
};

/// Drops rows whose bound is +infinity (or unset); they constrain nothing.
inline ConstraintBlock drop_unbounded_rows(ConstraintBlock block) {
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < block.b.size(); ++i) {
    const double v = block.b(i);
    if (std::isnan(v) || v == kInf) continue;
    keep.push_back(i);
  }
  ConstraintBlock out{block.label, block.kind,
                      MatX(keep.size(), block.A.cols()), VecX(keep.size()),
                      block.provenance};
  for (std::size_t k = 0; k < keep.size(); ++k) {
    out.A.row(k) = block.A.row(keep[k]);
    out.b(k) = block.b(keep[k]);
  }
  return out;
}

/// Layout of nu: qdd first, then one group of generator weights per
/// established contact.
struct VariableLayout {
  int nv = 0;
  std::vector<int> generator_counts;

  int num_generators() const {
    int n = 0;
    for (int c : generator_counts) n += c;
    return n;
  }
  int size() const { return nv + num_generators(); }
  int generator_offset(int contact) const {
    int off = nv;
    for (int k = 0; k < contact; ++k) off += generator_counts.at(k);
    return off;
  }
};

/// Pads an acceleration-only block with zero generator columns.
inline ConstraintBlock embed(ConstraintBlock block, const VariableLayout& layout) {
  if (block.A.cols() == layout.size()) return block;
  check_dim(block.A.cols(), layout.nv, "constraint columns");
  MatX A = MatX::Zero(block.A.rows(), layout.size());
  A.leftCols(layout.nv) = block.A;
  block.A = std::move(A);
  return block;
}

// ---------------------------------------------------------------------------
// Specifications

struct BoundsSpec {
  // All vectors are over the actuated joints.
  VecX q_lower, q_upper;
  VecX v_lower, v_upper;
  VecX tau_lower, tau_upper;
  VecX impulse_lower, impulse_upper;
  Vec3 angular_momentum_max = Vec3::Constant(kInf);

  static BoundsSpec unbounded(int n) {
    BoundsSpec b;
    b.q_lower = b.v_lower = b.tau_lower = b.impulse_lower = VecX::Constant(n, -kInf);
    b.q_upper = b.v_upper = b.tau_upper = b.impulse_upper = VecX::Constant(n, kInf);
    return b;
  }

  void validate(int n) const {
    const auto check = [n](const VecX& lo, const VecX& hi, const char* what) {
      check_dim(lo.size(), n, what);
      check_dim(hi.size(), n, what);
      for (int i = 0; i < n; ++i) {
        if (lo(i) > hi(i)) {
          throw std::invalid_argument(std::string(what) + ": lower bound above upper bound");
        }
      }
    };
    check(q_lower, q_upper, "position bounds");
    check(v_lower, v_upper, "velocity bounds");
    check(tau_lower, tau_upper, "torque bounds");
    check(impulse_lower, impulse_upper, "impulsive torque bounds");
    if ((angular_momentum_max.array() < 0.0).any()) {
      throw std::invalid_argument("angular momentum bound must be non-negative");
    }
  }
};

struct ContactSpec {
  double friction = 0.7;
  double half_x = 0.05;
  double half_y = 0.05;
  double tau_z_min = -kInf;
  double tau_z_max = kInf;
  int generators = 4;
  Vec3 normal = Vec3::UnitZ();  // world frame

  void validate() const {
    if (std::abs(normal.norm() - 1.0) > 1e-9) throw std::invalid_argument("contact normal must be unit");
    if (!(friction > 0.0)) throw std::invalid_argument("friction coefficient must be positive");
    if (!(half_x > 0.0) || !(half_y > 0.0)) {
      throw std::invalid_argument("CoP half-extents must be positive");
    }
    if (generators < 4) throw std::invalid_argument("at least four cone generators are required");
    if (tau_z_min > tau_z_max) throw std::invalid_argument("yaw torque bounds are inverted");
  }
};

/// Rotation whose z axis is `normal` (contact frame -> world).
inline Mat3 contact_rotation(const Vec3& normal) {
  const Vec3 z = normal.normalized();
  const Vec3 helper = std::abs(z.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  const Vec3 x = (helper - helper.dot(z) * z).normalized();
  Mat3 R;
  R << x, z.cross(x), z;
  return R;
}

/// Half-plane form C * W <= d of the linearized contact wrench cone over a
/// local wrench W = [f; tau] (z is the contact normal).
struct WrenchCone {
  MatX C;
  VecX d;
};

namespace detail {

// Angle of the first generator; puts the 4-generator pyramid's edges on the
// axes so that |f_x|, |f_y| <= mu / sqrt(2) f_z.
inline double generator_phase(int k) { return std::numbers::pi / k; }

}  // namespace detail

/// Force-only rows: the friction pyramid inscribed in the exact cone plus
/// unilaterality.
inline MatX friction_cone_force_rows(const ContactSpec& spec) {
  spec.validate();
  const int k = spec.generators;
  MatX C = MatX::Zero(k + 1, 3);
  const double inner = spec.friction * std::cos(std::numbers::pi / k);
  for (int j = 0; j < k; ++j) {
    // Facet between generators j and j + 1.
    const double phi = detail::generator_phase(k) + (2.0 * j + 1.0) * std::numbers::pi / k;
    C.row(j) << std::cos(phi), std::sin(phi), -inner;
  }
  C.row(k) << 0.0, 0.0, -1.0;
  return C;
}

inline WrenchCone contact_wrench_cone_rows(const ContactSpec& spec) {
  const MatX force = friction_cone_force_rows(spec);
  std::vector<Eigen::Matrix<double, 1, 6>> rows;
  std::vector<double> offsets;
  for (Eigen::Index i = 0; i < force.rows(); ++i) {
    Eigen::Matrix<double, 1, 6> r = Eigen::Matrix<double, 1, 6>::Zero();
    r.head<3>() = force.row(i);
    rows.push_back(r);
    offsets.push_back(0.0);
  }
  const auto add = [&](std::initializer_list<double> coeffs, double offset) {
    Eigen::Matrix<double, 1, 6> r;
    int c = 0;
    for (double v : coeffs) r(c++) = v;
    rows.push_back(r);
    offsets.push_back(offset);
  };
  // |tau_x| <= Y f_z, |tau_y| <= X f_z
  add({0, 0, -spec.half_y, 1, 0, 0}, 0.0);
  add({0, 0, -spec.half_y, -1, 0, 0}, 0.0);
  add({0, 0, -spec.half_x, 0, 1, 0}, 0.0);
  add({0, 0, -spec.half_x, 0, -1, 0}, 0.0);
  if (spec.tau_z_max < kInf) add({0, 0, 0, 0, 0, 1}, spec.tau_z_max);
  if (spec.tau_z_min > -kInf) add({0, 0, 0, 0, 0, -1}, -spec.tau_z_min);
  WrenchCone cone{MatX(rows.size(), 6), VecX(rows.size())};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    cone.C.row(i) = rows[i];
    cone.d(i) = offsets[i];
  }
  return cone;
}

/// World-frame generators (3 x k) of the pyramid for a contact with frame
/// rotation R. Nonnegative combinations stay inside the exact cone.
inline Mat3X generator_matrix(const ContactSpec& spec, const Mat3& R) {
  spec.validate();
  const int k = spec.generators;
  Mat3X G(3, k);
  for (int j = 0; j < k; ++j) {
    const double theta = detail::generator_phase(k) + 2.0 * std::numbers::pi * j / k;
    G.col(j) = R * Vec3(spec.friction * std::cos(theta), spec.friction * std::sin(theta), 1.0);
  }
  return G;
}

/// Convex polygon A z <= a (z a 3-vector on the plane orthogonal to n),
/// expressed relative to the wrench origin O.
struct ZmpPolygon {
  MatX A;  // rows x 3
  VecX a;
  Vec3 normal = Vec3::UnitZ();

  bool contains(const Vec3& z, double tol = 0.0) const {
    return ((A * z - a).array() <= tol).all();
  }

  /// Largest row violation (negative inside).
  double violation(const Vec3& z) const { return (A * z - a).maxCoeff(); }

  /// Vertices from pairwise row intersections on the plane.
  std::vector<Vec3> vertices(double tol = 1e-9) const {
    const Mat3 R = contact_rotation(normal);
    const Eigen::Matrix<double, 3, 2> T = R.leftCols<2>();
    const MatX A2 = A * T;
    std::vector<Vec3> out;
    for (Eigen::Index i = 0; i < A2.rows(); ++i) {
      for (Eigen::Index j = i + 1; j < A2.rows(); ++j) {
        Eigen::Matrix2d m;
        m << A2.row(i), A2.row(j);
        if (std::abs(m.determinant()) < 1e-12) continue;
        const Eigen::Vector2d p = m.inverse() * (Eigen::Vector2d(a(i), a(j)));
        if (((A2 * p - a).array() <= tol).all()) out.push_back(T * p);
      }
    }
    return out;
  }

  void validate() const {
    check_dim(A.cols(), 3, "ZMP polygon columns");
    check_dim(a.size(), A.rows(), "ZMP polygon offsets");
    const auto v = vertices();
    if (v.size() < 3) throw std::invalid_argument("ZMP polygon is empty");
    Vec3 c = Vec3::Zero();
    for (const auto& p : v) c += p;
    c /= static_cast<double>(v.size());
    if (!(violation(c) < 0.0)) throw std::invalid_argument("ZMP polygon has no interior");
  }

  /// Support polygon of coplanar contact points: the convex hull of their
  /// projections, relative to `origin`.
  static ZmpPolygon support_polygon(const std::vector<Vec3>& points,
                                    const Vec3& origin,
                                    const Vec3& normal = Vec3::UnitZ()) {
    const Mat3 R = contact_rotation(normal);
    std::vector<Eigen::Vector2d> p;
    for (const auto& x : points) {
      const Vec3 local = R.transpose() * (x - origin);
      p.emplace_back(local.x(), local.y());
    }
    std::sort(p.begin(), p.end(), [](const auto& l, const auto& r) {
      return l.x() < r.x() || (l.x() == r.x() && l.y() < r.y());
    });
    const auto cross = [](const Eigen::Vector2d& o, const Eigen::Vector2d& a,
                          const Eigen::Vector2d& b) {
      return (a - o).x() * (b - o).y() - (a - o).y() * (b - o).x();
    };
    // Monotone chain, counter-clockwise.
    std::vector<Eigen::Vector2d> hull(2 * p.size());
    std::size_t k = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      while (k >= 2 && cross(hull[k - 2], hull[k - 1], p[i]) <= 0) --k;
      hull[k++] = p[i];
    }
    for (std::size_t i = p.size() - 1, t = k + 1; i > 0; --i) {
      while (k >= t && cross(hull[k - 2], hull[k - 1], p[i - 1]) <= 0) --k;
      hull[k++] = p[i - 1];
    }
    hull.resize(k > 0 ? k - 1 : 0);
    if (hull.size() < 3) throw std::invalid_argument("support polygon needs three non-collinear points");

    ZmpPolygon poly;
    poly.normal = normal;
    poly.A.resize(hull.size(), 3);
    poly.a.resize(hull.size());
    for (std::size_t i = 0; i < hull.size(); ++i) {
      const Eigen::Vector2d e = hull[(i + 1) % hull.size()] - hull[i];
      const Eigen::Vector2d outward = Eigen::Vector2d(e.y(), -e.x()).normalized();
      poly.A.row(i) = (R.leftCols<2>() * outward).transpose();
      poly.a(i) = outward.dot(hull[i]);
    }
    return poly;
  }
};

/// Convex polygon G cdot_xy <= h for the horizontal COM velocity.
struct ComVelPolygon {
  MatX G;  // rows x 2
  VecX h;

  void validate() const {
    check_dim(G.cols(), 2, "COM velocity polygon columns");
    check_dim(h.size(), G.rows(), "COM velocity polygon offsets");
    if (G.rows() < 3) throw std::invalid_argument("COM velocity polygon is empty");
  }

  static ComVelPolygon box(double vx, double vy) {
    ComVelPolygon p;
    p.G.resize(4, 2);
    p.G << 1, 0, -1, 0, 0, 1, 0, -1;
    p.h.resize(4);
    p.h << vx, vx, vy, vy;
    return p;
  }
};

// ---------------------------------------------------------------------------
// Baseline rows

/// [I; -I] M qdd <= [tau_max; -tau_min] + [I; -I](J^T F_prev - N), actuated
/// rows only. The unactuated rows of a floating base are handled by
/// newton_euler_rows().
inline ConstraintBlock joint_torque_rows(const RobotModel& model,
                                         const RobotState& state,
                                         const BoundsSpec& bounds,
                                         const MatX& contact_jacobian,
                                         const VecX& previous_forces) {
  const int n = model.num_actuated();
  bounds.validate(n);
  const Kinematics kin = compute_kinematics(model, state);
  const MatX M = mass_matrix(model, kin);
  const VecX N = bias_forces(model, kin);
  VecX generalized = -N;
  if (contact_jacobian.rows() > 0) {
    check_dim(contact_jacobian.cols(), model.nv(), "contact Jacobian");
    check_dim(previous_forces.size(), contact_jacobian.rows(), "previous forces");
    generalized += contact_jacobian.transpose() * previous_forces;
  }
  const int off = model.actuated_offset();
  ConstraintBlock block{"joint_torque", RowKind::Inequality, MatX(2 * n, model.nv()),
                        VecX(2 * n), Provenance::Baseline};
  block.A.topRows(n) = M.middleRows(off, n);
  block.A.bottomRows(n) = -M.middleRows(off, n);
  block.b.head(n) = bounds.tau_upper + generalized.segment(off, n);
  block.b.tail(n) = -bounds.tau_lower - generalized.segment(off, n);
  return drop_unbounded_rows(std::move(block));
}

/// Joint velocity (Euler step) and position (double integration) limits.
inline ConstraintBlock joint_kinematic_rows(const RobotModel& model,
                                            const RobotState& state,
                                            const BoundsSpec& bounds, double dt) {
  const int n = model.num_actuated();
  bounds.validate(n);
  model.check_state(state);
  const int off = model.actuated_offset();
  const VecX v = state.v.segment(off, n);
  VecX q(n);
  for (int j = 0; j < n; ++j) q(j) = state.q(model.actuated_q_index(j));

  ConstraintBlock block{"joint_kinematics", RowKind::Inequality,
                        MatX::Zero(4 * n, model.nv()), VecX(4 * n), Provenance::Baseline};
  for (int j = 0; j < n; ++j) {
    block.A(j, off + j) = dt;
    block.A(n + j, off + j) = -dt;
    block.A(2 * n + j, off + j) = 0.5 * dt * dt;
    block.A(3 * n + j, off + j) = -0.5 * dt * dt;
  }
  block.b.segment(0, n) = bounds.v_upper - v;
  block.b.segment(n, n) = -bounds.v_lower + v;
  block.b.segment(2 * n, n) = bounds.q_upper - q - v * dt;
  block.b.segment(3 * n, n) = -bounds.q_lower + q + v * dt;
  return drop_unbounded_rows(std::move(block));
}

/// Zero relative acceleration J_i qdd + Jdot_i qdot = 0 at every established
/// contact.
inline ConstraintBlock contact_acceleration_rows(const RobotModel& model,
                                                 const RobotState& state,
                                                 const std::vector<int>& established) {
  const Kinematics kin = compute_kinematics(model, state);
  ConstraintBlock block{"contact_acceleration", RowKind::Equality,
                        stacked_jacobian(model, kin, established), VecX(),
                        Provenance::Baseline};
  block.b = -stacked_jacobian_derivative(model, kin, state.v, established) * state.v;
  return block;
}

/// Unactuated rows of the equation of motion for a floating base:
/// M_u qdd + N_u = (J_c^T G w)_u.
inline ConstraintBlock newton_euler_rows(const RobotModel& model,
                                         const RobotState& state,
                                         const std::vector<int>& established,
                                         const std::vector<Mat3X>& generators,
                                         const VariableLayout& layout) {
  check_dim(static_cast<Eigen::Index>(generators.size()),
            static_cast<Eigen::Index>(established.size()), "generator groups");
  ConstraintBlock block{"newton_euler", RowKind::Equality, MatX::Zero(0, layout.size()),
                        VecX(), Provenance::Baseline};
  if (!model.floating_base()) return block;
  const Kinematics kin = compute_kinematics(model, state);
  const MatX M = mass_matrix(model, kin);
  const VecX N = bias_forces(model, kin);
  block.A = MatX::Zero(6, layout.size());
  block.A.leftCols(model.nv()) = M.topRows(6);
  for (std::size_t k = 0; k < established.size(); ++k) {
    const Mat3X J = point_jacobian(model, kin, established[k]);
    block.A.block(0, layout.generator_offset(static_cast<int>(k)), 6, generators[k].cols()) =
        -(J.transpose() * generators[k]).topRows(6);
  }
  block.b = -N.head(6);
  return block;
}

inline ConstraintBlock generator_nonnegativity_rows(const VariableLayout& layout) {
  const int ng = layout.num_generators();
  ConstraintBlock block{"generator_nonnegativity", RowKind::Inequality,
                        MatX::Zero(ng, layout.size()), VecX::Zero(ng),
                        Provenance::Baseline};
  block.A.rightCols(ng) = -MatX::Identity(ng, ng);
  return block;
}

/// Wrench-space ZMP rows G_z = [-a n^T, A n^]: G_z W <= 0 iff A z <= a for
/// wrenches with a positive normal force.
inline MatX zmp_rows(const ZmpPolygon& polygon) {
  MatX G(polygon.A.rows(), 6);
  G.leftCols<3>() = -polygon.a * polygon.normal.transpose();
  G.rightCols<3>() = polygon.A * skew(polygon.normal);
  return G;
}

/// Baseline ZMP rows over the generator weights of the established contacts.
inline ConstraintBlock zmp_wrench_rows(const ZmpPolygon& polygon, const Vec3& origin,
                                       const std::vector<Vec3>& contact_points,
                                       const std::vector<Mat3X>& generators,
                                       const VariableLayout& layout) {
  const MatX Gz = zmp_rows(polygon);
  ConstraintBlock block{"zmp", RowKind::Inequality, MatX::Zero(Gz.rows(), layout.size()),
                        VecX::Zero(Gz.rows()), Provenance::Baseline};
  for (std::size_t k = 0; k < contact_points.size(); ++k) {
    block.A.block(0, layout.generator_offset(static_cast<int>(k)), Gz.rows(),
                  generators[k].cols()) =
        Gz * force_to_wrench(contact_points[k], origin) * generators[k];
  }
  return block;
}

/// Horizontal COM velocity after one Euler step stays in the polygon.
inline ConstraintBlock com_velocity_rows(const ComVelPolygon& polygon,
                                         const RobotModel& model,
                                         const RobotState& state, double dt) {
  polygon.validate();
  const Mat6X A_G = centroidal_momentum_matrix(model, state);
  const MatX map = A_G.block(3, 0, 2, model.nv()) / model.total_mass();
  return {"com_velocity", RowKind::Inequality, polygon.G * map * dt,
          polygon.h - polygon.G * map * state.v, Provenance::Baseline};
}

/// |A_wG (qdot + dt qdd)| <= k_max componentwise.
inline ConstraintBlock angular_momentum_rows(const RobotModel& model,
                                             const RobotState& state,
                                             const BoundsSpec& bounds, double dt) {
  const Mat6X A_G = centroidal_momentum_matrix(model, state);
  const MatX Aw = A_G.topRows<3>();
  ConstraintBlock block{"angular_momentum", RowKind::Inequality, MatX(6, model.nv()),
                        VecX(6), Provenance::Baseline};
  block.A.topRows(3) = Aw * dt;
  block.A.bottomRows(3) = -Aw * dt;
  const Vec3 k = Aw * state.v;
  block.b.head(3) = bounds.angular_momentum_max - k;
  block.b.tail(3) = bounds.angular_momentum_max + k;
  return drop_unbounded_rows(std::move(block));
}

// ---------------------------------------------------------------------------
// Impact-aware rows

/// D J qdd dt <= bound - D (lambda + C qdot). The pre-impact drift of lambda
/// over the period is neglected.
inline ConstraintBlock impact_template_rows(std::string label, const MatX& D,
                                            const VecX& bound,
                                            const JumpDecomposition& jump,
                                            const VecX& current, const VecX& qdot,
                                            double dt) {
  check_dim(D.cols(), jump.rows(), "template half-plane columns");
  check_dim(bound.size(), D.rows(), "template bound");
  check_dim(current.size(), jump.rows(), "template current value");
  check_dim(qdot.size(), jump.C.cols(), "template velocity");
  ConstraintBlock block{std::move(label), RowKind::Inequality, D * jump.J * dt,
                        bound - D * (current + jump.C * qdot), Provenance::ImpactAware};
  return drop_unbounded_rows(std::move(block));
}

namespace detail {

inline MatX plus_minus(const MatX& S) {
  MatX D(2 * S.rows(), S.cols());
  D << S, -S;
  return D;
}

}  // namespace detail

/// Post-impact joint velocity on actuated joints:
/// [S; -S](I + J) qdd dt <= [v_max; -v_min] - [S; -S](I + C) qdot.
/// Unlike the generic template, the pre-impact drift qdd dt is kept.
inline ConstraintBlock impact_joint_velocity_rows(const RobotModel& model,
                                                  const JumpDecomposition& jump,
                                                  const BoundsSpec& bounds,
                                                  const VecX& qdot, double dt) {
  const int nv = model.nv();
  const int n = model.num_actuated();
  bounds.validate(n);
  check_dim(jump.rows(), nv, "joint velocity jump");
  const MatX D = detail::plus_minus(actuated_selection(model));
  const MatX I = MatX::Identity(nv, nv);
  VecX bound(2 * n);
  bound << bounds.v_upper, -bounds.v_lower;
  ConstraintBlock block{"impact_joint_velocity", RowKind::Inequality,
                        D * (I + jump.J) * dt, bound - D * (I + jump.C) * qdot,
                        Provenance::ImpactAware};
  return drop_unbounded_rows(std::move(block));
}

/// Post-impact impulsive torques on actuated joints (current jump is zero).
inline ConstraintBlock impact_impulsive_torque_rows(const RobotModel& model,
                                                    const JumpDecomposition& jump,
                                                    const BoundsSpec& bounds,
                                                    const VecX& qdot, double dt) {
  const int n = model.num_actuated();
  bounds.validate(n);
  check_dim(jump.rows(), model.nv(), "impulsive torque jump");
  const MatX D = detail::plus_minus(actuated_selection(model));
  VecX bound(2 * n);
  bound << bounds.impulse_upper, -bounds.impulse_lower;
  return impact_template_rows("impact_impulsive_torque", D, bound, jump,
                              VecX::Zero(model.nv()), qdot, dt);
}

/// Post-impact friction cone of every established contact, using the first
/// 3 m1 rows of the force-jump decomposition and the measured forces.
inline ConstraintBlock impact_cwc_rows(const JumpDecomposition& force_jump,
                                       const std::vector<ContactSpec>& specs,
                                       const std::vector<Mat3>& rotations,
                                       const VecX& measured_forces,
                                       const VecX& qdot, double dt) {
  const int m1 = static_cast<int>(specs.size());
  check_dim(static_cast<Eigen::Index>(rotations.size()), m1, "contact rotations");
  check_dim(measured_forces.size(), 3 * m1, "measured contact forces");
  if (force_jump.rows() < 3 * m1) {
    throw DimensionError("force jump decomposition misses established contacts");
  }
  std::vector<MatX> blocks;
  Eigen::Index rows = 0;
  for (int k = 0; k < m1; ++k) {
    blocks.push_back(friction_cone_force_rows(specs[k]) * rotations[k].transpose());
    rows += blocks.back().rows();
  }
  MatX D = MatX::Zero(rows, 3 * m1);
  Eigen::Index r = 0;
  for (int k = 0; k < m1; ++k) {
    D.block(r, 3 * k, blocks[k].rows(), 3) = blocks[k];
    r += blocks[k].rows();
  }
  const JumpDecomposition established{force_jump.quantity,
                                      force_jump.J.topRows(3 * m1),
                                      force_jump.C.topRows(3 * m1)};
  return impact_template_rows("impact_contact_wrench_cone", D, VecX::Zero(rows),
                              established, measured_forces, qdot, dt);
}

/// Two-sided post-impact centroidal angular momentum bound.
inline ConstraintBlock impact_angular_momentum_rows(const JumpDecomposition& jump,
                                                    const Vec3& bound,
                                                    const Vec3& current,
                                                    const VecX& qdot, double dt) {
  const MatX D = detail::plus_minus(MatX::Identity(3, 3));
  VecX b(6);
  b << bound, bound;
  return impact_template_rows("impact_angular_momentum", D, b, jump, current, qdot, dt);
}

inline ConstraintBlock impact_com_velocity_rows(const JumpDecomposition& jump,
                                                const ComVelPolygon& polygon,
                                                const Eigen::Vector2d& current,
                                                const VecX& qdot, double dt) {
  polygon.validate();
  return impact_template_rows("impact_com_velocity", polygon.G, polygon.h, jump,
                              current, qdot, dt);
}

/// Post-impact ZMP: G_z J_W qdd dt <= -G_z (W_O + C_W qdot).
inline ConstraintBlock impact_zmp_rows(const JumpDecomposition& wrench_jump,
                                       const ZmpPolygon& polygon,
                                       const Vec6& measured_wrench,
                                       const VecX& qdot, double dt) {
  const MatX Gz = zmp_rows(polygon);
  return impact_template_rows("impact_zmp", Gz, VecX::Zero(Gz.rows()), wrench_jump,
                              measured_wrench, qdot, dt);
}

// ---------------------------------------------------------------------------

/// Debug dump: label,kind,row,A entries...,b
inline void write_blocks_csv(std::ostream& out, const std::vector<ConstraintBlock>& blocks) {
  out << std::setprecision(17);
  for (const auto& blk : blocks) {
    for (Eigen::Index r = 0; r < blk.rows(); ++r) {
      out << blk.label << ',' << (blk.kind == RowKind::Equality ? "eq" : "le") << ',' << r;
      for (Eigen::Index c = 0; c < blk.A.cols(); ++c) out << ',' << blk.A(r, c);
      out << ',' << blk.b(r) << '\n';
    }
  }
}

}  // namespace impact_qp
