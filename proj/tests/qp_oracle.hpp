#pragma once

// Independent reference solvers for dense convex QPs
//   minimize 1/2 x^T H x + c^T x  s.t.  E x == e,  A x <= b.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <optional>

namespace impact_qp::testing {

struct DenseQP {
  Eigen::MatrixXd H;
  Eigen::VectorXd c;
  Eigen::MatrixXd E;
  Eigen::VectorXd e;
  Eigen::MatrixXd A;
  Eigen::VectorXd b;

  double objective(const Eigen::VectorXd& x) const { return 0.5 * x.dot(H * x) + c.dot(x); }
};

/// Exhaustive active-set enumeration: the KKT point over some working set
/// that is primal and dual feasible. Only for a handful of inequality rows.
inline std::optional<Eigen::VectorXd> enumerate_active_sets(const DenseQP& qp) {
  const int n = static_cast<int>(qp.H.rows());
  const int me = static_cast<int>(qp.E.rows());
  const int mi = static_cast<int>(qp.A.rows());
  std::optional<Eigen::VectorXd> best;
  double best_obj = std::numeric_limits<double>::infinity();
  for (long mask = 0; mask < (1L << mi); ++mask) {
    std::vector<int> w;
    for (int i = 0; i < mi; ++i)
      if (mask & (1L << i)) w.push_back(i);
    const int k = me + static_cast<int>(w.size());
    if (k > n) continue;
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + k, n + k);
    Eigen::VectorXd r(n + k);
    K.topLeftCorner(n, n) = qp.H;
    r.head(n) = -qp.c;
    for (int j = 0; j < me; ++j) {
      K.block(n + j, 0, 1, n) = qp.E.row(j);
      r(n + j) = qp.e(j);
    }
    for (std::size_t j = 0; j < w.size(); ++j) {
      K.block(n + me + j, 0, 1, n) = qp.A.row(w[j]);
      r(n + me + j) = qp.b(w[j]);
    }
    K.topRightCorner(n, k) = K.bottomLeftCorner(k, n).transpose();
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(K);
    if (!lu.isInvertible()) continue;
    const Eigen::VectorXd sol = lu.solve(r);
    const Eigen::VectorXd x = sol.head(n);
    // K holds +A^T y with H x + A^T y = -c, so y is the multiplier.
    const Eigen::VectorXd y = sol.tail(k);
    bool ok = true;
    for (std::size_t j = 0; j < w.size() && ok; ++j) ok = y(me + j) >= -1e-9;
    if (ok && mi > 0) ok = (qp.A * x - qp.b).maxCoeff() <= 1e-9 * (1.0 + qp.b.cwiseAbs().maxCoeff());
    if (!ok) continue;
    const double obj = qp.objective(x);
    if (obj < best_obj) {
      best_obj = obj;
      best = x;
    }
  }
  return best;
}

/// Primal-dual path-following interior point method with slacks.
inline std::optional<Eigen::VectorXd> interior_point(const DenseQP& qp, int max_iter = 200) {
  using Eigen::MatrixXd;
  using Eigen::VectorXd;
  const int n = static_cast<int>(qp.H.rows());
  const int me = static_cast<int>(qp.E.rows());
  const int mi = static_cast<int>(qp.A.rows());
  VectorXd x = VectorXd::Zero(n), lam = VectorXd::Zero(me);
  VectorXd s = VectorXd::Ones(mi), z = VectorXd::Ones(mi);
  const double scale = 1.0 + qp.c.norm() + (mi ? qp.b.norm() : 0.0);
  for (int it = 0; it < max_iter; ++it) {
    const VectorXd rd = qp.H * x + qp.c + qp.E.transpose() * lam + qp.A.transpose() * z;
    const VectorXd re = qp.E * x - qp.e;
    const VectorXd ri = qp.A * x + s - qp.b;
    const double mu = mi ? s.dot(z) / mi : 0.0;
    if (rd.norm() < 1e-11 * scale && re.norm() < 1e-11 * scale && ri.norm() < 1e-11 * scale &&
        mu < 1e-13) {
      return x;
    }
    const double sigma = 0.1;
    const VectorXd rc = (s.array() * z.array()).matrix() - VectorXd::Constant(mi, sigma * mu);
    const VectorXd D = (z.array() / s.array()).matrix();
    MatrixXd K = MatrixXd::Zero(n + me, n + me);
    K.topLeftCorner(n, n) = qp.H + qp.A.transpose() * D.asDiagonal() * qp.A;
    K.topRightCorner(n, me) = qp.E.transpose();
    K.bottomLeftCorner(me, n) = qp.E;
    VectorXd r(n + me);
    r.head(n) = -rd - qp.A.transpose() *
                          ((z.array() * ri.array() - rc.array()) / s.array()).matrix();
    r.tail(me) = -re;
    const VectorXd d = K.fullPivLu().solve(r);
    const VectorXd dx = d.head(n), dlam = d.tail(me);
    const VectorXd ds = -ri - qp.A * dx;
    const VectorXd dz = ((-rc.array() - z.array() * ds.array()) / s.array()).matrix();
    double alpha = 1.0;
    for (int i = 0; i < mi; ++i) {
      if (ds(i) < 0) alpha = std::min(alpha, -0.99 * s(i) / ds(i));
      if (dz(i) < 0) alpha = std::min(alpha, -0.99 * z(i) / dz(i));
    }
    x += alpha * dx;
    lam += alpha * dlam;
    s += alpha * ds;
    z += alpha * dz;
  }
  return std::nullopt;
}

}  // namespace impact_qp::testing
