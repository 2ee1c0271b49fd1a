#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "e2b/eb_solver.hpp"
#include "e2b/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace e2b;

namespace {

BalancingProblem hand_problem(double ell1, double ell2) {
  BalancingProblem p;
  p.G = Matrix(1, 2);
  p.G << 1.0, -1.0;
  p.ell = Vector(2);
  p.ell << ell1, ell2;
  return p;
}

}  // namespace

TEST(SolveDual, SymmetricPairIsUniform) {
  const DualSolution s = solve_dual(hand_problem(0.0, 0.0));
  ASSERT_TRUE(s.converged);
  EXPECT_NEAR(s.lambda[0], 0.0, 1e-12);
  EXPECT_NEAR(s.weights[0], 0.5, 1e-12);
  EXPECT_NEAR(s.weights[1], 0.5, 1e-12);
}

TEST(SolveDual, TiltedPairIsRebalanced) {
  const DualSolution s = solve_dual(hand_problem(std::log(3.0), 0.0));
  ASSERT_TRUE(s.converged);
  EXPECT_NEAR(s.lambda[0], std::log(3.0) / 2.0, 1e-9);
  EXPECT_NEAR(s.weights[0], 0.5, 1e-9);
  EXPECT_NEAR(s.weights[1], 0.5, 1e-9);
}

TEST(SolveDual, MatchesGridSearchOracle) {
  int checked = 0;
  for (std::uint32_t seed = 0; checked < 3 && seed < 20; ++seed) {
    Stream rng(seed, StreamId::probe, 7);
    const BalancingProblem p = random_problem(rng, 6, 1);
    const DualSolution s = solve_dual(p);
    ASSERT_TRUE(s.converged);
    if (s.lambda.lpNorm<Eigen::Infinity>() > 4.5) continue;  // minimizer near the box edge
    const auto f = [&](const Vector& l) { return oracle::dual_objective(p.G, p.ell, l); };
    const auto g = oracle::convex_grid_argmin(f, 3);
    for (Index k = 0; k < 3; ++k) EXPECT_NEAR(s.lambda[k], g.argmin[k], 2e-3) << "seed " << seed;
    EXPECT_LE(s.objective, g.value + 1e-12);
    ++checked;
  }
  EXPECT_EQ(checked, 3);
}

TEST(SolveDual, WeightsArePositiveAndNormalized) {
  Stream rng(1, StreamId::probe, 8);
  for (int rep = 0; rep < 10; ++rep) {
    const BalancingProblem p = random_problem(rng, 40, 3, 1.0);
    const DualSolution s = solve_dual(p);
    ASSERT_TRUE(s.converged);
    EXPECT_GT(s.weights.minCoeff(), 0.0);
    EXPECT_NEAR(s.weights.sum(), 1.0, 1e-12);
    EXPECT_LE(s.grad_norm, 1e-9);
    EXPECT_LE(balance_residual(p, s.weights).lpNorm<Eigen::Infinity>(), 1e-9);
  }
}

TEST(SolveDual, ConstantShiftOfEllLeavesSolutionUnchanged) {
  Stream rng(2, StreamId::probe, 9);
  const BalancingProblem p = random_problem(rng, 30, 2);
  BalancingProblem q = p;
  q.ell.array() += 17.0;
  const DualSolution a = solve_dual(p), b = solve_dual(q);
  EXPECT_LE((a.lambda - b.lambda).lpNorm<Eigen::Infinity>(), 1e-8);
  EXPECT_LE((a.weights - b.weights).lpNorm<Eigen::Infinity>(), 1e-10);
}

TEST(SolveDual, BitwiseDeterministic) {
  Stream rng(3, StreamId::probe, 10);
  const BalancingProblem p = random_problem(rng, 50, 3);
  const DualSolution a = solve_dual(p), b = solve_dual(p);
  ASSERT_EQ(a.lambda.size(), b.lambda.size());
  EXPECT_EQ(0, std::memcmp(a.lambda.data(), b.lambda.data(), sizeof(double) * a.lambda.size()));
  EXPECT_EQ(0, std::memcmp(a.weights.data(), b.weights.data(), sizeof(double) * a.weights.size()));
}

TEST(SolveDual, ZeroRowIsReportedAndIgnored) {
  BalancingProblem p = hand_problem(0.3, 0.0);
  p.G.conservativeResize(2, 2);
  p.G.row(1).setZero();
  p.labels = {"x", "dead"};
  const DualSolution s = solve_dual(p);
  EXPECT_TRUE(s.converged);
  ASSERT_FALSE(s.warnings.empty());
  EXPECT_NE(s.warnings.front().find("dead"), std::string::npos);
  EXPECT_EQ(s.lambda[1], 0.0);
}

TEST(SolveDual, InfeasibleProblemReportsNonConvergence) {
  // Every column has a positive first coordinate, so G w = 0 has no solution
  // on the simplex.
  BalancingProblem p;
  p.G = Matrix(1, 3);
  p.G << 1.0, 2.0, 3.0;
  p.ell = Vector::Zero(3);
  const DualSolution s = solve_dual(p);
  EXPECT_FALSE(s.converged);
  EXPECT_GT(s.grad_norm, 1e-9);
  EXPECT_TRUE(s.weights.allFinite());
}

TEST(SolveDual, RejectsNonFiniteInput) {
  BalancingProblem p = hand_problem(0.0, 0.0);
  p.G(0, 0) = std::nan("");
  EXPECT_THROW(solve_dual(p), Error);
}

TEST(SolveDual, RejectsBadOptions) {
  SolverOptions o;
  o.tol = 0.0;
  EXPECT_THROW(solve_dual(hand_problem(0.0, 0.0), o), Error);
  o = {};
  o.max_iter = 0;
  EXPECT_THROW(solve_dual(hand_problem(0.0, 0.0), o), Error);
}

// Solved weights minimize KL to the base among feasible weights: moving
// along any direction that keeps G w = 0 and 1'w = 1 increases it.
TEST(SolveDual, KlIsMinimalAmongFeasiblePerturbations) {
  for (Index n : {5, 8}) {
    Stream rng(static_cast<std::uint64_t>(n), StreamId::probe, 11);
    for (int inst = 0; inst < 5; ++inst) {
      const BalancingProblem p = random_problem(rng, n, 1, 0.8);
      SolverOptions tight;
      tight.tol = 1e-13;
      const DualSolution s = solve_dual(p, tight);
      ASSERT_TRUE(s.converged);
      Matrix A(p.dim() + 1, n);
      A << p.G, Eigen::RowVectorXd::Ones(n);
      const Matrix N = oracle::null_space(A);
      ASSERT_GT(N.cols(), 0);
      const double base = oracle::kl_uniform_base(s.weights, p.ell);
      EXPECT_NEAR(kl_to_base(s.weights, p.ell), base, 1e-12);
      for (int k = 0; k < 20; ++k) {
        Vector c(N.cols());
        for (Index j = 0; j < c.size(); ++j) c[j] = rng.normal();
        Vector delta = N * c;
        delta *= 0.2 * s.weights.minCoeff() / delta.lpNorm<Eigen::Infinity>();
        const Vector w2 = s.weights + delta;
        ASSERT_GT(w2.minCoeff(), 0.0);
        EXPECT_GT(oracle::kl_uniform_base(w2, p.ell), base);
      }
    }
  }
}

TEST(WeightsFromDual, ConstantLogitsAreUniform) {
  BalancingProblem p;
  p.G = Matrix::Zero(1, 4);
  p.ell = Vector::Constant(4, 2.5);
  const Vector w = weights_from_dual(p, Vector::Constant(1, 3.0));
  for (Index i = 0; i < 4; ++i) EXPECT_NEAR(w[i], 0.25, 1e-15);
}

TEST(WeightsFromDual, ClosedFormLogits) {
  BalancingProblem p;
  p.G = Matrix::Zero(1, 3);
  p.ell = Vector(3);
  p.ell << std::log(1.0), std::log(2.0), std::log(5.0);
  const Vector w = weights_from_dual(p, Vector::Zero(1));
  EXPECT_NEAR(w[0], 0.125, 1e-15);
  EXPECT_NEAR(w[1], 0.25, 1e-15);
  EXPECT_NEAR(w[2], 0.625, 1e-15);
  // A large shift must not overflow; the tolerance reflects the spacing of
  // doubles near 700.
  p.ell.array() += 700.0;
  const Vector shifted = weights_from_dual(p, Vector::Zero(1));
  EXPECT_LE((shifted - w).lpNorm<Eigen::Infinity>(), 1e-12);
}

TEST(WeightsFromDual, ShapeMismatchThrows) {
  EXPECT_THROW(weights_from_dual(hand_problem(0, 0), Vector::Zero(2)), Error);
}

TEST(BalanceResidual, HandInstance) {
  Vector w(2);
  w << 0.75, 0.25;
  EXPECT_NEAR(balance_residual(hand_problem(0, 0), w)[0], 0.5, 1e-15);
}

TEST(BalanceResidual, UniformWeightsOnDemeanedData) {
  Stream rng(4, StreamId::probe, 12);
  const BalancingProblem p = random_problem(rng, 25, 3);
  const Vector r = balance_residual(p, Vector::Constant(25, 1.0 / 25));
  for (Index k = 0; k <= 3; ++k) EXPECT_LE(std::abs(r[k]), 1e-10);
}

TEST(KlToBase, ClosedForms) {
  EXPECT_NEAR(kl_to_base(Vector::Constant(4, 0.25), Vector::Constant(4, -3.0)), 0.0, 1e-15);
  Vector w(2);
  w << 0.75, 0.25;
  EXPECT_NEAR(kl_to_base(w, Vector::Zero(2)), 0.75 * std::log(1.5) + 0.25 * std::log(0.5), 1e-15);
  EXPECT_NEAR(kl_to_base(w, Vector::Zero(2)), 0.1308, 1e-4);
}

TEST(DualHessian, IsWeightedCovariance) {
  Stream rng(5, StreamId::probe, 13);
  const BalancingProblem p = random_problem(rng, 12, 2);
  Vector w = Vector::Zero(12);
  for (Index i = 0; i < 12; ++i) w[i] = 0.5 + rng.uniform();
  w /= w.sum();
  const Matrix H = dual_hessian(p.G, w);
  Matrix ref = Matrix::Zero(p.dim(), p.dim());
  const Vector m = p.G * w;
  for (Index i = 0; i < 12; ++i) ref += w[i] * (p.G.col(i) - m) * (p.G.col(i) - m).transpose();
  EXPECT_LE((H - ref).lpNorm<Eigen::Infinity>(), 1e-13);
}
