#include <gtest/gtest.h>

#include <Eigen/Dense>

#include "ifem/benchmark.hpp"
#include "ifem/solver.hpp"

using namespace ifem;

namespace {

Eigen::MatrixXd to_dense(const SparseMatrix& a) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(a.rows(), a.cols());
  a.for_each([&](int i, int j, double v) { m(i, j) += v; });
  return m;
}

double max_diff(const std::vector<double>& a, const std::vector<double>& b) {
  EXPECT_EQ(a.size(), b.size());
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

RadialProblem radial(double beta, Point center = {0.0, 0.0}) {
  RadialProblem pb;
  pb.beta = beta;
  pb.center = center;
  return pb;
}

SolverConfig tight() {
  SolverConfig c;
  c.cg_tolerance = 1e-13;
  c.outer_tolerance = 1e-12;
  return c;
}

BlockSystem hybrid_system(const FittedMesh& f, const RadialProblem& pb) {
  return assemble_hybrid(f, pb.coefficient_field(), pb.source(), pb.boundary());
}

}  // namespace

TEST(Config, Validation) {
  SolverConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_DOUBLE_EQ(c.inner_tolerance(), 0.01 * c.outer_tolerance);
  c.cg_tolerance = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.outer_max_iter = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Cg, MatchesEigenOnTheStandardSystem) {
  const RadialProblem pb = radial(10.0);
  const Mesh m = build_structured_mesh(12);
  const auto sys = assemble_standard(m, pb.coefficient_field(), pb.interface(), pb.source(), pb.boundary());
  const auto x = solve_standard(sys, tight());
  const Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(sys.rhs.data(), sys.rhs.size());
  const Eigen::VectorXd ref = to_dense(sys.K).partialPivLu().solve(b);
  for (int i = 0; i < ref.size(); ++i) EXPECT_NEAR(x[i], ref[i], 1e-11);
}

TEST(Cg, JacobiGivesTheSameSolution) {
  const RadialProblem pb = radial(100.0);
  const auto f = build_fitted_mesh(build_structured_mesh(20), pb.interface());
  const auto sys = assemble_fitted(f, pb.coefficient_field(), pb.source(), pb.boundary());
  auto cfg = tight();
  CgReport plain, jac;
  const auto x0 = solve_fitted(sys, cfg, &plain);
  cfg.jacobi = true;
  const auto x1 = solve_fitted(sys, cfg, &jac);
  EXPECT_LE(max_diff(x0, x1), 1e-10);
  EXPECT_LE(jac.iterations, plain.iterations);
}

TEST(Cg, ResidualHistoryDecreasesOverWindows) {
  const RadialProblem pb = radial(10.0);
  const auto sys = assemble_standard(build_structured_mesh(40), pb.coefficient_field(), pb.interface(), pb.source(),
                                     pb.boundary());
  CgReport rep;
  solve_standard(sys, tight(), &rep);
  ASSERT_EQ(rep.history.size(), static_cast<std::size_t>(rep.iterations + 1));
  EXPECT_EQ(rep.history.front(), 1.0);
  EXPECT_LE(rep.relative_residual, 1e-13);
  double previous = 1.0;
  for (std::size_t w = 10; w < rep.history.size(); w += 10) {
    const double lo = *std::min_element(rep.history.begin() + w - 10, rep.history.begin() + w);
    EXPECT_LE(lo, previous);
    previous = lo;
  }
}

TEST(Cg, ThrowsOnNonConvergence) {
  const RadialProblem pb = radial(10.0);
  const auto sys = assemble_standard(build_structured_mesh(20), pb.coefficient_field(), pb.interface(), pb.source(),
                                     pb.boundary());
  SolverConfig cfg;
  cfg.cg_max_iter = 3;
  EXPECT_THROW(solve_standard(sys, cfg), SolverError);
}

TEST(Cg, ThrowsOnIndefiniteOperator) {
  TripletList t(2, 2);
  t.add(0, 0, 1.0);
  t.add(1, 1, -1.0);
  const SparseMatrix a(t);
  const std::vector<double> rhs{1.0, 1.0};
  EXPECT_THROW(cg_solve(a, rhs, SolverConfig{}), SolverError);
}

TEST(Cg, ZeroRightHandSideGivesZero) {
  TripletList t(2, 2);
  t.add(0, 0, 2.0);
  t.add(1, 1, 3.0);
  const auto x = cg_solve(SparseMatrix(t), std::vector<double>{0.0, 0.0}, SolverConfig{});
  EXPECT_EQ(x, (std::vector<double>{0.0, 0.0}));
}

TEST(Condensation, MatchesDenseSchurComplement) {
  const RadialProblem pb = radial(10.0, {0.05, -0.02});
  const auto f = build_fitted_mesh(build_structured_mesh(10), pb.interface());
  const auto s = hybrid_system(f, pb);
  const auto op = condense(s);
  const Eigen::MatrixXd A = to_dense(s.A), C = to_dense(s.C), D = to_dense(s.D);
  const Eigen::MatrixXd S = A - C * D.inverse() * C.transpose();
  EXPECT_LE((to_dense(op.S) - S).cwiseAbs().maxCoeff(), 1e-12 * S.cwiseAbs().maxCoeff());
  const Eigen::VectorXd bh = Eigen::Map<const Eigen::VectorXd>(s.b.data(), s.nv()) -
                             C * D.inverse() * Eigen::Map<const Eigen::VectorXd>(s.c.data(), s.ne());
  for (int i = 0; i < s.nv(); ++i) EXPECT_NEAR(op.b_hat[i], bh[i], 1e-13);
}

TEST(Condensation, PatternIsContainedInTheStandardPattern) {
  for (int n : {10, 20}) {
    for (double beta : {10.0, 100.0}) {
      const RadialProblem pb = radial(beta);
      const auto f = build_fitted_mesh(build_structured_mesh(n), pb.interface());
      const auto op = condense(hybrid_system(f, pb));
      const auto std_sys =
          assemble_standard(f.base(), pb.coefficient_field(), pb.interface(), pb.source(), pb.boundary());
      int outside = 0;
      op.S.for_each([&](int i, int j, double) { outside += std_sys.K.has_entry(i, j) ? 0 : 1; });
      EXPECT_EQ(outside, 0) << "N=" << n;
      EXPECT_EQ(op.S.nnz(), std_sys.K.nnz());
    }
  }
}

TEST(Condensation, RejectsCouplingAcrossTriangles) {
  const RadialProblem pb = radial(10.0);
  const auto f = build_fitted_mesh(build_structured_mesh(10), pb.interface());
  auto s = hybrid_system(f, pb);
  int other = 1;
  while (s.dofs.enriched_triangle[other] == s.dofs.enriched_triangle[0]) ++other;
  TripletList t(s.ne(), s.ne());
  s.D.for_each([&](int i, int j, double v) { t.add(i, j, v); });
  t.add(0, other, 1e-3);
  t.add(other, 0, 1e-3);
  s.D = SparseMatrix(t);
  EXPECT_THROW(condense(s), SolverError);
}

TEST(Hybrid, MatchesDenseSaddlePointSolve) {
  for (int n : {4, 10}) {
    for (double beta : {10.0, 100.0}) {
      const RadialProblem pb = radial(beta);
      const auto f = build_fitted_mesh(build_structured_mesh(n), pb.interface());
      const auto s = hybrid_system(f, pb);
      const auto h = solve_hybrid(s, tight());
      const auto d = dense_direct_solve(s);
      EXPECT_LE(max_diff(h.u_vertex, d.u_vertex), 1e-8) << "N=" << n;
      EXPECT_LE(max_diff(h.u_enriched, d.u_enriched), 1e-8) << "N=" << n;
      EXPECT_LE(max_diff(h.lambda, d.lambda), 1e-8) << "N=" << n;
      EXPECT_LE(d.max_jump, 1e-12);
    }
  }
}

TEST(Hybrid, ReproducesTheFittedSolution) {
  for (int n : {10, 20, 40}) {
    for (double beta : {10.0, 100.0}) {
      const RadialProblem pb = radial(beta);
      const auto f = build_fitted_mesh(build_structured_mesh(n), pb.interface());
      const auto hs = hybrid_system(f, pb);
      const auto h = solve_hybrid(hs, tight());
      const auto fs = assemble_fitted(f, pb.coefficient_field(), pb.source(), pb.boundary());
      const auto x = solve_fitted(fs, tight());
      const std::vector<double> uf(x.begin(), x.begin() + fs.dofs.num_vertex);
      EXPECT_LE(max_diff(h.u_vertex, uf), 1e-7) << "N=" << n << " beta=" << beta;
      EXPECT_LE(h.max_jump, 1e-8);
      // both copies of each cut-point value equal the conforming coefficient
      for (int d = 0; d < static_cast<int>(h.u_enriched.size()); ++d) {
        const int k = f.cut_index(hs.dofs.enriched_edge[d]);
        EXPECT_NEAR(h.u_enriched[d], x[fs.dofs.num_vertex + k], 1e-7);
      }
    }
  }
}

TEST(Hybrid, ZeroDataGivesZeroSolution) {
  const RadialProblem pb = radial(10.0);
  const auto f = build_fitted_mesh(build_structured_mesh(10), pb.interface());
  const ScalarField zero = [](Point) { return 0.0; };
  const auto s = assemble_hybrid(f, pb.coefficient_field(), zero, zero);
  const auto h = solve_hybrid(s, tight());
  for (double l : h.lambda) EXPECT_EQ(l, 0.0);
  for (double u : h.u_vertex) EXPECT_EQ(u, 0.0);
  EXPECT_EQ(h.outer_iterations, 0);
}

TEST(Hybrid, JacobiInnerSolvesAgree) {
  const RadialProblem pb = radial(100.0);
  const auto f = build_fitted_mesh(build_structured_mesh(20), pb.interface());
  const auto s = hybrid_system(f, pb);
  auto cfg = tight();
  const auto a = solve_hybrid(s, cfg);
  cfg.jacobi = true;
  const auto b = solve_hybrid(s, cfg);
  EXPECT_LE(max_diff(a.u_vertex, b.u_vertex), 1e-9);
}

TEST(Hybrid, SolutionIsSymmetricUnderHalfTurn) {
  // the diagonal direction is preserved by x -> -x
  const int n = 20;
  const RadialProblem pb = radial(10.0);
  const auto f = build_fitted_mesh(build_structured_mesh(n), pb.interface());
  const auto h = solve_hybrid(hybrid_system(f, pb), tight());
  const Mesh& m = f.base();
  for (int i = 0; i <= n; ++i)
    for (int j = 0; j <= n; ++j)
      EXPECT_NEAR(h.u_vertex[m.grid_vertex(i, j)], h.u_vertex[m.grid_vertex(n - i, n - j)], 1e-11);
}

TEST(Dense, DimensionGuard) {
  const RadialProblem pb = radial(10.0);
  const auto f = build_fitted_mesh(build_structured_mesh(10), pb.interface());
  EXPECT_THROW(dense_direct_solve(hybrid_system(f, pb), 50), ConfigError);
}

TEST(PatchTest, AllMethodsReproduceLinearData) {
  const auto cfg = tight();
  for (auto method : {Method::Standard, Method::Fitted, Method::Hybrid}) {
    for (const auto& iface :
         {LevelSetInterface::circle({0.0, 0.0}, 0.5), LevelSetInterface::circle({0.13, -0.07}, 0.5)}) {
      for (int n : {10, 20}) EXPECT_LE(patch_test_error(method, n, iface, 1.0, cfg), 1e-9) << to_string(method);
    }
  }
}
