#pragma once

// Weighted-task scalarization and a dense strictly convex QP solver.
//
//   minimize    1/2 sum_i w_i |E_i nu - g_i|^2
//   subject to  A_eq nu == b_eq,  A_in nu <= b_in
//
// The solver is the Goldfarb-Idnani dual active-set method: it starts from
// the unconstrained minimizer, repeatedly adds the most violated row and
// keeps J = L^-T Q and the triangular R of the active normals up to date
// with Givens rotations.

#include "impact_qp/constraints.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace impact_qp {

struct TaskObjective {
  std::string label;
  double weight = 1.0;
  MatX E;  // over qdd (nv columns) or the full layout
  VecX g;

  void validate() const {
    if (!(weight > 0.0) || !std::isfinite(weight)) {
      throw std::invalid_argument("task '" + label + "': weight must be positive");
    }
    check_dim(g.size(), E.rows(), "task target");
    if (!E.allFinite() || !g.allFinite()) {
      throw std::invalid_argument("task '" + label + "': non-finite entries");
    }
  }
};

/// E = J over qdd, g = xdd_des - Jdot qdot.
inline TaskObjective end_effector_acceleration_task(const RobotModel& model,
                                                    const RobotState& state, int frame,
                                                    const Vec3& desired, double weight) {
  const Kinematics kin = compute_kinematics(model, state);
  return {"ee_acceleration:" + model.frame(frame).name, weight,
          point_jacobian(model, kin, frame),
          desired - jacobian_derivative(model, kin, state.v, frame) * state.v};
}

/// Joint-space PD toward a reference on the actuated joints.
inline TaskObjective posture_task(const RobotModel& model, const RobotState& state,
                                  const VecX& reference, double stiffness, double weight) {
  const int n = model.num_actuated();
  check_dim(reference.size(), n, "posture reference");
  const int off = model.actuated_offset();
  TaskObjective t{"posture", weight, MatX::Zero(n, model.nv()), VecX(n)};
  const double damping = 2.0 * std::sqrt(stiffness);
  for (int j = 0; j < n; ++j) {
    t.E(j, off + j) = 1.0;
    t.g(j) = stiffness * (reference(j) - state.q(model.actuated_q_index(j))) -
             damping * state.v(off + j);
  }
  return t;
}

/// Small pull of the generator weights toward zero.
inline TaskObjective force_regularization_task(const VariableLayout& layout, double weight) {
  const int ng = layout.num_generators();
  TaskObjective t{"force_regularization", weight, MatX::Zero(ng, layout.size()),
                  VecX::Zero(ng)};
  t.E.rightCols(ng).setIdentity();
  return t;
}

/// Drives the normal force of one established contact toward `target` (N).
inline TaskObjective contact_force_task(const VariableLayout& layout, int contact,
                                        const Mat3X& generators, const Vec3& normal,
                                        double target, double weight) {
  TaskObjective t{"contact_force", weight, MatX::Zero(1, layout.size()), VecX(1)};
  t.E.block(0, layout.generator_offset(contact), 1, generators.cols()) =
      normal.transpose() * generators;
  t.g(0) = target;
  return t;
}

enum class Mode { Baseline, ImpactAware };

inline const char* to_string(Mode m) {
  return m == Mode::Baseline ? "baseline" : "aware";
}

struct QPProblem {
  MatX H;
  VecX c;
  double constant = 0.0;  // makes the objective equal the weighted task cost
  std::vector<ConstraintBlock> blocks;
  VariableLayout layout;
  int slack_index = -1;   // column of the shared slack, if any

  int size() const { return static_cast<int>(H.rows()); }
};

struct AssembleOptions {
  /// Tikhonov term, relative to the mean Hessian diagonal (at least 1).
  double regularization = 1e-9;
  /// Relax impact-aware rows with one shared nonnegative slack.
  bool slack = false;
  double slack_weight = 1e6;
};

inline QPProblem assemble(const std::vector<TaskObjective>& tasks,
                          const std::vector<ConstraintBlock>& blocks,
                          const VariableLayout& layout, Mode mode,
                          const AssembleOptions& options = {}) {
  const int n = layout.size() + (options.slack ? 1 : 0);
  QPProblem p;
  p.layout = layout;
  p.H = MatX::Zero(n, n);
  p.c = VecX::Zero(n);
  for (const auto& task : tasks) {
    task.validate();
    MatX E = MatX::Zero(task.E.rows(), n);
    if (task.E.cols() == layout.nv) {
      E.leftCols(layout.nv) = task.E;
    } else {
      check_dim(task.E.cols(), layout.size(), "task columns");
      E.leftCols(layout.size()) = task.E;
    }
    p.H.noalias() += task.weight * E.transpose() * E;
    p.c.noalias() -= task.weight * E.transpose() * task.g;
    p.constant += 0.5 * task.weight * task.g.squaredNorm();
  }
  if (options.slack) {
    p.slack_index = n - 1;
    p.H(n - 1, n - 1) += options.slack_weight;
  }
  const double scale = std::max(1.0, p.H.trace() / std::max(1, n));
  p.H.diagonal().array() += options.regularization * scale;

  for (const auto& raw : blocks) {
    if (mode == Mode::Baseline && raw.provenance == Provenance::ImpactAware) continue;
    ConstraintBlock b = embed(raw, layout);
    b.validate();
    if (options.slack) {
      MatX A = MatX::Zero(b.rows(), n);
      A.leftCols(layout.size()) = b.A;
      if (b.provenance == Provenance::ImpactAware && b.kind == RowKind::Inequality) {
        A.col(n - 1).setConstant(-1.0);
      }
      b.A = std::move(A);
    }
    p.blocks.push_back(std::move(b));
  }
  if (options.slack) {
    ConstraintBlock s{"slack_nonnegativity", RowKind::Inequality, MatX::Zero(1, n),
                      VecX::Zero(1), Provenance::Baseline};
    s.A(0, n - 1) = -1.0;
    p.blocks.push_back(std::move(s));
  }
  return p;
}

enum class SolveStatus { Optimal, Infeasible, MaxIterations, Numerical };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::MaxIterations: return "max-iter";
    case SolveStatus::Numerical: return "numerical";
  }
  return "?";
}

struct KKTResiduals {
  double stationarity = 0.0;     // |H x + c + A^T y|_inf
  double primal = 0.0;           // largest row violation
  double dual = 0.0;             // largest negative inequality multiplier
  double complementarity = 0.0;  // largest |y_i * slack_i|
};

struct QPSolution {
  SolveStatus status = SolveStatus::Numerical;
  VecX x;
  double objective = 0.0;
  int iterations = 0;
  /// Multipliers over the stacked rows (block order): A^T y = -(H x + c).
  VecX multipliers;
  std::vector<int> active_rows;
  std::vector<std::string> active_labels;
  KKTResiduals kkt;
  /// For infeasible problems: y with y_ineq >= 0, y^T A = 0 and y^T b < 0.
  VecX certificate;

  bool optimal() const { return status == SolveStatus::Optimal; }
};

struct SolverOptions {
  double feasibility_tolerance = 1e-11;
  int max_iterations = 0;  // 0 selects a size-based cap
};

struct StackedRows {
  MatX A;
  VecX b;
  std::vector<bool> equality;
  std::vector<std::string> labels;
};

inline StackedRows stack_rows(const QPProblem& p) {
  Eigen::Index m = 0;
  for (const auto& b : p.blocks) m += b.rows();
  StackedRows s{MatX(m, p.size()), VecX(m), {}, {}};
  Eigen::Index r = 0;
  for (const auto& b : p.blocks) {
    check_dim(b.A.cols(), p.size(), "constraint columns");
    s.A.middleRows(r, b.rows()) = b.A;
    s.b.segment(r, b.rows()) = b.b;
    for (Eigen::Index i = 0; i < b.rows(); ++i) {
      s.equality.push_back(b.kind == RowKind::Equality);
      s.labels.push_back(b.label);
    }
    r += b.rows();
  }
  return s;
}

namespace detail {

/// Dual active-set state over normalized rows n_i x >= c_i.
class GoldfarbIdnani {
 public:
  GoldfarbIdnani(const MatX& H, const VecX& c, const MatX& N, const VecX& rhs,
                 const std::vector<bool>& equality, double tol, int max_iter)
      : n_(static_cast<int>(H.rows())), N_(N), rhs_(rhs), eq_(equality), tol_(tol),
        max_iter_(max_iter) {
    Eigen::LLT<MatX> llt(H);
    if (llt.info() != Eigen::Success) {
      status = SolveStatus::Numerical;
      return;
    }
    const MatX L = llt.matrixL();
    J_ = L.triangularView<Eigen::Lower>().transpose().solve(MatX::Identity(n_, n_));
    R_ = MatX::Zero(n_, n_);
    x = -llt.solve(c);
    u_all = VecX::Zero(N.rows());
    ok_ = true;
  }

  SolveStatus status = SolveStatus::Optimal;
  VecX x;
  VecX u_all;
  VecX certificate;  // over the normalized rows
  int iterations = 0;
  std::vector<int> active;

  void run() {
    if (!ok_) return;
    // Equalities first, in row order.
    for (Eigen::Index i = 0; i < N_.rows(); ++i) {
      if (!eq_[i]) continue;
      if (!add_equality(static_cast<int>(i))) return;
    }
    while (true) {
      if (++iterations > max_iter_) {
        status = SolveStatus::MaxIterations;
        return;
      }
      int p = -1;
      double worst = -tol_;
      for (Eigen::Index i = 0; i < N_.rows(); ++i) {
        if (eq_[i] || is_active(static_cast<int>(i))) continue;
        const double s = N_.row(i).dot(x) - rhs_(i);
        if (s < worst) {
          worst = s;
          p = static_cast<int>(i);
        }
      }
      if (p < 0) {
        status = SolveStatus::Optimal;
        finish();
        return;
      }
      if (!add_inequality(p)) return;
    }
  }

 private:
  int n_;
  const MatX& N_;
  const VecX& rhs_;
  const std::vector<bool>& eq_;
  double tol_;
  int max_iter_;
  bool ok_ = false;
  MatX J_, R_;
  VecX u_;  // multipliers of `active`
  double r_norm_ = 1.0;

  bool is_active(int i) const {
    return std::find(active.begin(), active.end(), i) != active.end();
  }

  int iq() const { return static_cast<int>(active.size()); }

  // d = J^T n, z = J2 d2, r = R^-1 d1.
  void directions(int p, VecX& d, VecX& z, VecX& r) const {
    d = J_.transpose() * N_.row(p).transpose();
    const int q = iq();
    z = J_.rightCols(n_ - q) * d.tail(n_ - q);
    r = R_.topLeftCorner(q, q).triangularView<Eigen::Upper>().solve(d.head(q));
  }

  double zero_tol() const { return 1e-12 * std::max(1.0, r_norm_); }

  void infeasible(int p, const VecX& r) {
    status = SolveStatus::Infeasible;
    certificate = VecX::Zero(N_.rows());
    certificate(p) = 1.0;
    for (int k = 0; k < iq(); ++k) certificate(active[k]) = -r(k);
  }

  bool add_equality(int p) {
    VecX d, z, r;
    directions(p, d, z, r);
    const double s = N_.row(p).dot(x) - rhs_(p);
    const double zn = z.dot(N_.row(p).transpose());
    if (z.norm() <= zero_tol() || std::abs(zn) <= zero_tol()) {
      // Dependent on the rows already active.
      if (std::abs(s) <= 1e3 * tol_ * (1.0 + std::abs(rhs_(p)))) return true;
      infeasible(p, r);
      if (s > 0.0) certificate = -certificate;
      return false;
    }
    const double t = -s / zn;
    x += t * z;
    u_ -= t * r;
    u_.conservativeResize(iq() + 1);
    u_(iq()) = t;
    return append(p, d);
  }

  bool add_inequality(int p) {
    double u_p = 0.0;
    while (true) {
      VecX d, z, r;
      directions(p, d, z, r);
      // Largest dual step keeping active inequality multipliers nonnegative.
      double t1 = std::numeric_limits<double>::infinity();
      int l = -1;
      for (int k = 0; k < iq(); ++k) {
        if (eq_[active[k]] || r(k) <= 0.0) continue;
        const double ratio = u_(k) / r(k);
        if (ratio < t1) {
          t1 = ratio;
          l = k;
        }
      }
      const double s = N_.row(p).dot(x) - rhs_(p);
      const double zn = z.dot(N_.row(p).transpose());
      const bool primal_step = z.norm() > zero_tol() && zn > zero_tol();
      const double t2 = primal_step ? -s / zn : std::numeric_limits<double>::infinity();
      const double t = std::min(t1, t2);
      if (!std::isfinite(t)) {
        infeasible(p, r);
        return false;
      }
      if (primal_step) x += t * z;
      u_ -= t * r;
      u_p += t;
      if (t == t2) {
        u_.conservativeResize(iq() + 1);
        u_(iq()) = u_p;
        return append(p, d);
      }
      drop(l);
      if (++iterations > max_iter_) {
        status = SolveStatus::MaxIterations;
        return false;
      }
    }
  }

  bool append(int p, VecX d) {
    const int q = iq();
    for (int j = n_ - 1; j >= q + 1; --j) {
      double cc = d(j - 1), ss = d(j);
      const double h = std::hypot(cc, ss);
      if (h == 0.0) continue;
      d(j) = 0.0;
      cc /= h;
      ss /= h;
      if (cc < 0.0) {
        cc = -cc;
        ss = -ss;
        d(j - 1) = -h;
      } else {
        d(j - 1) = h;
      }
      const double xny = ss / (1.0 + cc);
      for (int k = 0; k < n_; ++k) {
        const double a = J_(k, j - 1), b = J_(k, j);
        J_(k, j - 1) = a * cc + b * ss;
        J_(k, j) = xny * (a + J_(k, j - 1)) - b;
      }
    }
    active.push_back(p);
    R_.col(q).head(q + 1) = d.head(q + 1);
    if (std::abs(d(q)) <= 1e-14 * r_norm_) {
      status = SolveStatus::Numerical;
      return false;
    }
    r_norm_ = std::max(r_norm_, std::abs(d(q)));
    return true;
  }

  void drop(int l) {
    const int q = iq();
    active.erase(active.begin() + l);
    for (int k = l; k < q - 1; ++k) {
      u_(k) = u_(k + 1);
      R_.col(k) = R_.col(k + 1);
    }
    u_.conservativeResize(q - 1);
    R_.col(q - 1).setZero();
    const int nq = q - 1;
    for (int j = l; j < nq; ++j) {
      double cc = R_(j, j), ss = R_(j + 1, j);
      const double h = std::hypot(cc, ss);
      if (h == 0.0) continue;
      cc /= h;
      ss /= h;
      R_(j + 1, j) = 0.0;
      if (cc < 0.0) {
        R_(j, j) = -h;
        cc = -cc;
        ss = -ss;
      } else {
        R_(j, j) = h;
      }
      const double xny = ss / (1.0 + cc);
      for (int k = j + 1; k < nq; ++k) {
        const double a = R_(j, k), b = R_(j + 1, k);
        R_(j, k) = a * cc + b * ss;
        R_(j + 1, k) = xny * (a + R_(j, k)) - b;
      }
      for (int k = 0; k < n_; ++k) {
        const double a = J_(k, j), b = J_(k, j + 1);
        J_(k, j) = a * cc + b * ss;
        J_(k, j + 1) = xny * (J_(k, j) + a) - b;
      }
    }
    // The removed row of R is now zero; keep R upper triangular.
    R_.row(nq).setZero();
  }

  void finish() {
    for (int k = 0; k < iq(); ++k) u_all(active[k]) = u_(k);
  }
};

}  // namespace detail

inline KKTResiduals kkt_residuals(const QPProblem& problem, const StackedRows& rows,
                                  const VecX& x, const VecX& y) {
  KKTResiduals k;
  if (rows.A.rows() == 0) {
    k.stationarity = (problem.H * x + problem.c).lpNorm<Eigen::Infinity>();
    return k;
  }
  k.stationarity = (problem.H * x + problem.c + rows.A.transpose() * y).lpNorm<Eigen::Infinity>();
  const VecX slack = rows.b - rows.A * x;
  for (Eigen::Index i = 0; i < slack.size(); ++i) {
    if (rows.equality[i]) {
      k.primal = std::max(k.primal, std::abs(slack(i)));
    } else {
      k.primal = std::max(k.primal, -slack(i));
      k.dual = std::max(k.dual, -y(i));
      k.complementarity = std::max(k.complementarity, std::abs(y(i) * slack(i)));
    }
  }
  return k;
}

inline QPSolution solve(const QPProblem& problem, const SolverOptions& options = {}) {
  const StackedRows rows = stack_rows(problem);
  const Eigen::Index m = rows.A.rows();
  const int n = problem.size();
  QPSolution sol;

  // Internal form: n_i x >= c_i with unit normals; inequality a x <= b
  // becomes -a x >= -b.
  MatX N(m, n);
  VecX rhs(m);
  VecX scale = VecX::Ones(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double norm = rows.A.row(i).norm();
    if (norm == 0.0) {
      const bool violated = rows.equality[i] ? std::abs(rows.b(i)) > 0.0 : rows.b(i) < 0.0;
      if (violated) {
        sol.status = SolveStatus::Infeasible;
        sol.certificate = VecX::Zero(m);
        sol.certificate(i) = rows.b(i) < 0.0 ? 1.0 : -1.0;
        sol.x = VecX::Zero(n);
        return sol;
      }
      N.row(i).setZero();
      rhs(i) = -1.0;  // always satisfied, never selected
      continue;
    }
    scale(i) = 1.0 / norm;
    const double sign = rows.equality[i] ? 1.0 : -1.0;
    N.row(i) = sign * rows.A.row(i) * scale(i);
    rhs(i) = sign * rows.b(i) * scale(i);
  }
  std::vector<bool> eq = rows.equality;
  for (Eigen::Index i = 0; i < m; ++i) {
    if (N.row(i).squaredNorm() == 0.0) eq[i] = false;
  }

  const int cap = options.max_iterations > 0 ? options.max_iterations
                                             : 50 * static_cast<int>(n + m) + 100;
  detail::GoldfarbIdnani gi(problem.H, problem.c, N, rhs, eq,
                            options.feasibility_tolerance, cap);
  gi.run();
  sol.status = gi.status;
  sol.iterations = gi.iterations;
  sol.x = gi.x;

  // Back to the <= form: y_i = sign_i * u_i * scale_i.
  sol.multipliers = VecX::Zero(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double sign = rows.equality[i] ? -1.0 : 1.0;
    sol.multipliers(i) = sign * gi.u_all(i) * scale(i);
  }
  if (sol.status == SolveStatus::Infeasible) {
    sol.certificate = VecX::Zero(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      const double sign = rows.equality[i] ? -1.0 : 1.0;
      sol.certificate(i) = sign * gi.certificate(i) * scale(i);
    }
  }
  if (sol.status != SolveStatus::Optimal) return sol;

  sol.active_rows = gi.active;
  std::sort(sol.active_rows.begin(), sol.active_rows.end());
  for (int r : sol.active_rows) sol.active_labels.push_back(rows.labels[r]);
  sol.objective = 0.5 * sol.x.dot(problem.H * sol.x) + problem.c.dot(sol.x) + problem.constant;
  sol.kkt = kkt_residuals(problem, rows, sol.x, sol.multipliers);
  return sol;
}

}  // namespace impact_qp
