#pragma once

// Small spatial-algebra toolkit shared by the dynamics, impact and
// simulation headers. Spatial motion vectors are ordered [angular; linear]
// and, unless stated otherwise, expressed in world coordinates about the
// world origin. Wrenches handed to the controller use [force; torque].

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <stdexcept>
#include <string>

namespace impact_qp {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;
using Mat3X = Eigen::Matrix<double, 3, Eigen::Dynamic>;
using Mat6X = Eigen::Matrix<double, 6, Eigen::Dynamic>;
using Quat = Eigen::Quaterniond;

/// Raised on malformed models, states or inputs whose dimensions disagree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return s;
}

/// Rigid transform x_world = R * x_local + p.
struct Transform {
  Mat3 R = Mat3::Identity();
  Vec3 p = Vec3::Zero();

  static Transform identity() { return {}; }

  static Transform from(const Vec3& translation, const Quat& rotation) {
    return {rotation.normalized().toRotationMatrix(), translation};
  }

  Vec3 apply(const Vec3& x) const { return R * x + p; }

  Transform operator*(const Transform& other) const {
    return {R * other.R, R * other.p + p};
  }

  Transform inverse() const { return {R.transpose(), -R.transpose() * p}; }
};

inline void check_dim(Eigen::Index got, Eigen::Index want, const char* what) {
  if (got != want) {
    throw DimensionError(std::string(what) + ": expected dimension " +
                         std::to_string(want) + ", got " +
                         std::to_string(got));
  }
}

// Motion cross product (v x m).
inline Mat6 motion_cross(const Vec6& v) {
  Mat6 x = Mat6::Zero();
  const Mat3 w = skew(v.head<3>());
  x.topLeftCorner<3, 3>() = w;
  x.bottomLeftCorner<3, 3>() = skew(v.tail<3>());
  x.bottomRightCorner<3, 3>() = w;
  return x;
}

// Force cross product (v x*), the negative transpose of motion_cross.
inline Mat6 force_cross(const Vec6& v) { return -motion_cross(v).transpose(); }

/// Spatial inertia about the world origin of a body with mass `m`, world COM
/// `c` and rotational inertia `inertia_c` (about the COM, world axes).
inline Mat6 spatial_inertia(double m, const Vec3& c, const Mat3& inertia_c) {
  Mat6 I;
  const Mat3 cx = skew(c);
  I.topLeftCorner<3, 3>() = inertia_c + m * cx * cx.transpose();
  I.topRightCorner<3, 3>() = m * cx;
  I.bottomLeftCorner<3, 3>() = m * cx.transpose();
  I.bottomRightCorner<3, 3>() = m * Mat3::Identity();
  return I;
}

/// Maps a momentum (or force) spatial vector about the world origin to the
/// same quantity about point `c`, axes unchanged.
inline Mat6 momentum_shift(const Vec3& c) {
  Mat6 T = Mat6::Identity();
  T.topRightCorner<3, 3>() = -skew(c);
  return T;
}

/// Linear velocity of point `x` for a spatial motion column [w; v_O].
inline Vec3 point_velocity(const Vec6& motion, const Vec3& x) {
  return motion.tail<3>() + motion.head<3>().cross(x);
}

/// Force-to-wrench map [I; (p - o)x] placing a point force at `p` into a
/// wrench [f; tau] about `o`.
inline Eigen::Matrix<double, 6, 3> force_to_wrench(const Vec3& p,
                                                   const Vec3& o) {
  Eigen::Matrix<double, 6, 3> G;
  G.topRows<3>() = Mat3::Identity();
  G.bottomRows<3>() = skew(p - o);
  return G;
}

}  // namespace impact_qp
