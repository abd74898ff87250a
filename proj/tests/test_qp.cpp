#include "qp_oracle.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

using namespace impact_qp;
using namespace impact_qp::testing;

namespace {

QPProblem to_problem(const DenseQP& qp) {
  QPProblem p;
  p.H = qp.H;
  p.c = qp.c;
  const int n = static_cast<int>(qp.H.rows());
  p.layout = VariableLayout{n, {}};
  if (qp.E.rows() > 0) p.blocks.push_back({"eq", RowKind::Equality, qp.E, qp.e});
  if (qp.A.rows() > 0) p.blocks.push_back({"in", RowKind::Inequality, qp.A, qp.b});
  return p;
}

DenseQP random_qp(std::mt19937_64& rng, int n, int me, int mi, bool feasible = true) {
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  DenseQP qp;
  const MatX L = MatX::NullaryExpr(n, n, [&] { return g(rng); });
  qp.H = L * L.transpose() + 0.1 * MatX::Identity(n, n);
  qp.c = VecX::NullaryExpr(n, [&] { return 3.0 * g(rng); });
  const VecX x0 = VecX::NullaryExpr(n, [&] { return g(rng); });
  qp.E = MatX::NullaryExpr(me, n, [&] { return g(rng); });
  qp.e = qp.E * x0;
  qp.A = MatX::NullaryExpr(mi, n, [&] { return g(rng); });
  qp.b = qp.A * x0 + VecX::NullaryExpr(mi, [&] { return u(rng); });
  if (!feasible && mi >= 2) {
    qp.A.row(1) = -qp.A.row(0);
    qp.b(1) = -qp.b(0) - 1.0;
  }
  return qp;
}

}  // namespace

TEST(QP, UnconstrainedMinimizer) {
  DenseQP qp{MatX::Identity(3, 3) * 2.0, Eigen::Vector3d(-2, 4, 0), MatX(0, 3), VecX(0),
             MatX(0, 3), VecX(0)};
  const QPSolution s = solve(to_problem(qp));
  ASSERT_TRUE(s.optimal());
  EXPECT_LT((s.x - Eigen::Vector3d(1, -2, 0)).norm(), 1e-12);
  EXPECT_TRUE(s.active_rows.empty());
}

TEST(QP, SeparableBoxClamps) {
  const int n = 5;
  DenseQP qp;
  qp.H = MatX::Identity(n, n);
  const VecX target = (VecX(n) << 2.0, -3.0, 0.5, -0.2, 7.0).finished();
  qp.c = -target;
  qp.E = MatX(0, n);
  qp.e = VecX(0);
  qp.A.resize(2 * n, n);
  qp.A << MatX::Identity(n, n), -MatX::Identity(n, n);
  qp.b = VecX::Ones(2 * n);
  const QPSolution s = solve(to_problem(qp));
  ASSERT_TRUE(s.optimal());
  EXPECT_LT((s.x - target.cwiseMax(-1.0).cwiseMin(1.0)).norm(), 1e-12);
  EXPECT_EQ(s.active_rows.size(), 3u);
  EXPECT_LT(s.kkt.stationarity, 1e-12);
  EXPECT_LT(s.kkt.dual, 1e-12);
}

TEST(QP, SymmetricHalfPlane) {
  // min 1/2 |x|^2  s.t.  x1 + x2 >= 1
  DenseQP qp{MatX::Identity(2, 2), VecX::Zero(2), MatX(0, 2), VecX(0),
             (MatX(1, 2) << -1, -1).finished(), VecX::Constant(1, -1.0)};
  const QPSolution s = solve(to_problem(qp));
  ASSERT_TRUE(s.optimal());
  EXPECT_NEAR(s.x(0), 0.5, 1e-14);
  EXPECT_NEAR(s.x(1), 0.5, 1e-14);
  EXPECT_NEAR(s.multipliers(0), 0.5, 1e-14);
  EXPECT_NEAR(s.objective, 0.25, 1e-14);
}

TEST(QP, EqualityConstrained) {
  DenseQP qp{MatX::Identity(3, 3), VecX::Zero(3), (MatX(1, 3) << 1, 1, 1).finished(),
             VecX::Constant(1, 3.0), MatX(0, 3), VecX(0)};
  const QPSolution s = solve(to_problem(qp));
  ASSERT_TRUE(s.optimal());
  EXPECT_LT((s.x - VecX::Ones(3)).norm(), 1e-13);
}

TEST(QP, AgreesWithEnumerationAndInteriorPoint) {
  std::mt19937_64 rng(41);
  std::uniform_int_distribution<int> dim(2, 10), eqs(0, 2), ineq(0, 40);
  int enumerated = 0;
  for (int t = 0; t < 200; ++t) {
    const int n = dim(rng);
    const int me = std::min(eqs(rng), n - 1);
    const int mi = t < 80 ? std::min(ineq(rng), 12) : ineq(rng);
    const DenseQP qp = random_qp(rng, n, me, mi);
    const QPSolution s = solve(to_problem(qp));
    ASSERT_TRUE(s.optimal()) << "instance " << t;
    std::optional<VecX> ref;
    if (mi <= 12) {
      ref = enumerate_active_sets(qp);
      ++enumerated;
    } else {
      ref = interior_point(qp);
    }
    ASSERT_TRUE(ref.has_value()) << "instance " << t;
    EXPECT_LT((s.x - *ref).norm(), 1e-6 * (1.0 + ref->norm())) << "instance " << t;
    EXPECT_LE(std::abs(s.objective - qp.objective(*ref)), 1e-7 * (1.0 + std::abs(s.objective)));
    EXPECT_LT(s.kkt.primal, 1e-8);
    EXPECT_LT(s.kkt.dual, 1e-8);
    EXPECT_LT(s.kkt.stationarity, 1e-7 * (1.0 + qp.c.norm()));
  }
  EXPECT_GE(enumerated, 80);
}

TEST(QP, InfeasibilityCertificate) {
  std::mt19937_64 rng(42);
  for (int t = 0; t < 30; ++t) {
    const DenseQP qp = random_qp(rng, 4, t % 2, 6, false);
    const QPSolution s = solve(to_problem(qp));
    ASSERT_EQ(s.status, SolveStatus::Infeasible);
    const StackedRows rows = stack_rows(to_problem(qp));
    const VecX& y = s.certificate;
    ASSERT_EQ(y.size(), rows.A.rows());
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      if (!rows.equality[i]) {
        EXPECT_GE(y(i), -1e-12);
      }
    }
    const double scale = y.cwiseAbs().sum();
    EXPECT_LT((rows.A.transpose() * y).norm(), 1e-8 * scale);
    EXPECT_LT(y.dot(rows.b), -1e-6 * scale);
  }
}

TEST(QP, ZeroRowViolation) {
  QPProblem p;
  p.H = MatX::Identity(2, 2);
  p.c = VecX::Zero(2);
  p.layout = {2, {}};
  p.blocks.push_back({"zero", RowKind::Inequality, MatX::Zero(1, 2), VecX::Constant(1, -1.0)});
  EXPECT_EQ(solve(p).status, SolveStatus::Infeasible);
  p.blocks.back().b(0) = 1.0;
  EXPECT_TRUE(solve(p).optimal());
}

TEST(QP, RowScalingInvariance) {
  std::mt19937_64 rng(43);
  for (int t = 0; t < 20; ++t) {
    DenseQP qp = random_qp(rng, 6, 1, 15);
    const VecX x = solve(to_problem(qp)).x;
    for (Eigen::Index i = 0; i < qp.A.rows(); ++i) {
      const double k = std::pow(10.0, static_cast<double>(i % 7) - 3.0);
      qp.A.row(i) *= k;
      qp.b(i) *= k;
    }
    EXPECT_LT((solve(to_problem(qp)).x - x).norm(), 1e-9 * (1.0 + x.norm()));
  }
}

TEST(QP, Deterministic) {
  std::mt19937_64 rng(44);
  const DenseQP qp = random_qp(rng, 8, 2, 30);
  const QPSolution a = solve(to_problem(qp));
  const QPSolution b = solve(to_problem(qp));
  EXPECT_TRUE((a.x.array() == b.x.array()).all());
  EXPECT_EQ(a.iterations, b.iterations);
  EXPECT_EQ(a.active_rows, b.active_rows);
}

TEST(QP, IterationCap) {
  std::mt19937_64 rng(45);
  const DenseQP qp = random_qp(rng, 8, 0, 30);
  SolverOptions opt;
  opt.max_iterations = 1;
  const QPSolution s = solve(to_problem(qp), opt);
  if (!s.optimal()) {
    EXPECT_EQ(s.status, SolveStatus::MaxIterations);
  }
}

TEST(Assemble, WeightedTasksAndModeFiltering) {
  const VariableLayout layout{2, {}};
  const TaskObjective a{"a", 2.0, MatX::Identity(2, 2), Eigen::Vector2d(1, 0)};
  const TaskObjective b{"b", 1.0, (MatX(1, 2) << 0, 1).finished(), VecX::Constant(1, 3.0)};
  const ConstraintBlock aware{"aware", RowKind::Inequality, (MatX(1, 2) << 1, 0).finished(),
                              VecX::Constant(1, 0.0), Provenance::ImpactAware};
  AssembleOptions opt;
  opt.regularization = 0.0;
  const QPProblem base = assemble({a, b}, {aware}, layout, Mode::Baseline, opt);
  EXPECT_TRUE(base.blocks.empty());
  const QPSolution s = solve(base);
  EXPECT_NEAR(s.x(0), 1.0, 1e-14);
  EXPECT_NEAR(s.x(1), 1.0, 1e-14);  // (2 * 0 + 1 * 3) / 3
  EXPECT_NEAR(s.objective, 0.5 * 2 * 1 + 0.5 * 4, 1e-12);
  const QPProblem aw = assemble({a, b}, {aware}, layout, Mode::ImpactAware, opt);
  ASSERT_EQ(aw.blocks.size(), 1u);
  EXPECT_NEAR(solve(aw).x(0), 0.0, 1e-14);
}

TEST(Assemble, SlackRelaxesOnlyAwareRows) {
  const VariableLayout layout{1, {}};
  const TaskObjective t{"t", 1.0, MatX::Identity(1, 1), VecX::Constant(1, 0.0)};
  const ConstraintBlock base{"base", RowKind::Inequality, MatX::Constant(1, 1, -1.0),
                             VecX::Constant(1, -1.0)};  // x >= 1
  const ConstraintBlock aware{"aware", RowKind::Inequality, MatX::Constant(1, 1, 1.0),
                              VecX::Constant(1, 0.0), Provenance::ImpactAware};  // x <= 0
  EXPECT_EQ(solve(assemble({t}, {base, aware}, layout, Mode::ImpactAware)).status,
            SolveStatus::Infeasible);
  AssembleOptions opt;
  opt.slack = true;
  const QPProblem p = assemble({t}, {base, aware}, layout, Mode::ImpactAware, opt);
  const QPSolution s = solve(p);
  ASSERT_TRUE(s.optimal());
  EXPECT_NEAR(s.x(0), 1.0, 1e-6);
  EXPECT_NEAR(s.x(p.slack_index), 1.0, 1e-6);
}

TEST(Assemble, RejectsBadTasks) {
  const TaskObjective bad{"bad", -1.0, MatX::Identity(1, 1), VecX::Zero(1)};
  EXPECT_THROW(assemble({bad}, {}, {1, {}}, Mode::Baseline), std::invalid_argument);
  const TaskObjective wide{"wide", 1.0, MatX::Identity(1, 3), VecX::Zero(1)};
  EXPECT_THROW(assemble({wide}, {}, {2, {}}, Mode::Baseline), DimensionError);
}

TEST(Toy, RowCountsPerMode) {
  const ToyExample toy = ToyExample::paper();
  for (const Mode mode : {Mode::Baseline, Mode::ImpactAware}) {
    const ToyResult r = solve_toy(toy, mode);
    ASSERT_TRUE(r.solution.optimal());
    Eigen::Index rows = 0;
    for (const auto& b : r.blocks) {
      if (mode == Mode::Baseline && b.provenance == Provenance::ImpactAware) continue;
      rows += b.rows();
    }
    EXPECT_EQ(rows, mode == Mode::Baseline ? 4 : 8);
  }
}

TEST(Toy, PostImpactVelocities) {
  const ToyExample toy = ToyExample::paper();
  const ToyResult base = solve_toy(toy, Mode::Baseline);
  const ToyResult aware = solve_toy(toy, Mode::ImpactAware);
  ASSERT_TRUE(base.solution.optimal());
  ASSERT_TRUE(aware.solution.optimal());
  EXPECT_NEAR(base.post_impact_velocity(0), -0.618, 0.01);
  EXPECT_NEAR(base.post_impact_velocity(1), 1.345, 0.01);
  EXPECT_NEAR(aware.post_impact_velocity(0), -0.281, 0.01);
  EXPECT_NEAR(aware.post_impact_velocity(1), 0.600, 1e-6);
}

TEST(Toy, AwareFeasibleSetInsideBaseline) {
  const ToyExample toy = ToyExample::paper();
  const ToyResult aware = solve_toy(toy, Mode::ImpactAware);
  MatX A_base(0, 2), A_all(0, 2);
  VecX b_base(0), b_all(0);
  const auto append = [](MatX& A, VecX& b, const ConstraintBlock& blk) {
    MatX A2(A.rows() + blk.rows(), 2);
    A2 << A, blk.A;
    VecX b2(b.size() + blk.rows());
    b2 << b, blk.b;
    A = A2;
    b = b2;
  };
  for (const auto& blk : aware.blocks) {
    append(A_all, b_all, blk);
    if (blk.provenance == Provenance::Baseline) append(A_base, b_base, blk);
  }
  std::mt19937_64 rng(46);
  std::uniform_real_distribution<double> u(-400.0, 400.0);
  int in_aware = 0;
  for (int t = 0; t < 10000; ++t) {
    const Eigen::Vector2d qdd(u(rng), u(rng));
    const bool a = ((A_all * qdd - b_all).array() <= 0.0).all();
    const bool b = ((A_base * qdd - b_base).array() <= 0.0).all();
    if (a) {
      EXPECT_TRUE(b);
    }
    in_aware += a;
  }
  EXPECT_GT(in_aware, 0);
  EXPECT_GE(aware.polytope.size(), 3u);
}
