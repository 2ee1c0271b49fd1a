#include <gtest/gtest.h>

#include <cmath>

#include "e2b/regressors.hpp"
#include "e2b/rng.hpp"
#include "support/oracles.hpp"

using namespace e2b;

namespace {

struct Instance {
  Vector a, y, w;
  Matrix x;
};

Instance random_instance(std::uint64_t seed, Index n, Index r = 2) {
  Stream s(seed, StreamId::probe, 50);
  Instance in;
  in.a.resize(n);
  in.y.resize(n);
  in.w.resize(n);
  in.x.resize(n, r);
  for (Index i = 0; i < n; ++i) {
    for (Index k = 0; k < r; ++k) in.x(i, k) = s.normal();
    in.a[i] = s.normal() + 0.4 * in.x(i, 0);
    in.y[i] = std::sin(in.a[i]) + 0.5 * in.x(i, 0) + 0.3 * s.normal();
    in.w[i] = 0.2 + s.uniform();
  }
  in.w /= in.w.sum();
  return in;
}

}  // namespace

TEST(WlsSlope, PerfectLineHasZeroDerivative) {
  const Instance in = random_instance(1, 15);
  const WlsResult r = wls_slope(in.a, 2.0 * in.a, in.w);
  EXPECT_NEAR(r.slope, 2.0, 1e-12);
  EXPECT_LE(r.d_slope_dw.lpNorm<Eigen::Infinity>(), 1e-12);
}

TEST(WlsSlope, TwoPoints) {
  Vector a(2), y(2), w(2);
  a << 0.0, 1.0;
  y << 0.0, 1.0;
  w << 0.5, 0.5;
  EXPECT_NEAR(wls_slope(a, y, w).slope, 1.0, 1e-15);
}

TEST(WlsSlope, MatchesNormalEquationsOracle) {
  const Instance in = random_instance(2, 30);
  // Solve the 2x2 weighted normal equations for [1, a] directly.
  double s0 = 0, s1 = 0, s2 = 0, t0 = 0, t1 = 0;
  for (Index i = 0; i < 30; ++i) {
    s0 += in.w[i];
    s1 += in.w[i] * in.a[i];
    s2 += in.w[i] * in.a[i] * in.a[i];
    t0 += in.w[i] * in.y[i];
    t1 += in.w[i] * in.a[i] * in.y[i];
  }
  const double slope = (s0 * t1 - s1 * t0) / (s0 * s2 - s1 * s1);
  EXPECT_NEAR(wls_slope(in.a, in.y, in.w).slope, slope, 1e-12);
}

TEST(WlsSlope, DerivativeMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Instance in = random_instance(seed, 10);
    const auto f = [&](const Vector& w) { return wls_slope(in.a, in.y, w).slope; };
    const Vector numeric = oracle::central_difference(f, in.w, 1e-6);
    EXPECT_LE(oracle::rel_error(wls_slope(in.a, in.y, in.w).d_slope_dw, numeric), 1e-6)
        << "seed " << seed;
  }
}

TEST(WlsSlope, ConstantTreatmentIsDegenerate) {
  const Instance in = random_instance(3, 10);
  try {
    wls_slope(Vector::Constant(10, 1.5), in.y, in.w);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::degenerate);
  }
}

TEST(WlsSlope, ScaleInvariantInWeights) {
  const Instance in = random_instance(4, 25);
  const WlsResult a = wls_slope(in.a, in.y, in.w);
  const WlsResult b = wls_slope(in.a, in.y, 37.0 * in.w);
  EXPECT_NEAR(a.slope, b.slope, 1e-12);
}

TEST(WlsSlopeAdjusted, MatchesQrOracleAndFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Instance in = random_instance(seed, 12);
    Matrix X(12, 4);
    X.col(0).setOnes();
    X.col(1) = in.a;
    X.rightCols(2) = in.x;
    const Vector sw = in.w.cwiseSqrt();
    const Vector beta =
        (sw.asDiagonal() * X).colPivHouseholderQr().solve(sw.cwiseProduct(in.y));
    const WlsResult r = wls_slope_adjusted(in.a, in.y, in.x, in.w);
    EXPECT_NEAR(r.slope, beta[1], 1e-10);
    const auto f = [&](const Vector& w) { return wls_slope_adjusted(in.a, in.y, in.x, w).slope; };
    EXPECT_LE(oracle::rel_error(r.d_slope_dw, oracle::central_difference(f, in.w, 1e-6)), 1e-6)
        << "seed " << seed;
  }
}

TEST(KernelCurve, ConstantResponseIsFlat) {
  const Instance in = random_instance(5, 40);
  const Vector grid = uniform_grid(-1.5, 1.5, 30);
  const KernelCurveResult r = kernel_curve(in.a, Vector::Constant(40, 3.25), in.w, grid);
  for (Index g = 0; g < 30; ++g) EXPECT_NEAR(r.curve.mu_hat[g], 3.25, 1e-12);
  EXPECT_LE(r.d_mu_dw.cwiseAbs().maxCoeff(), 1e-10);
}

TEST(KernelCurve, DominantPointDrivesEstimate) {
  const Instance in = random_instance(6, 20);
  const Vector grid = uniform_grid(-1.0, 1.0, 5);
  double prev = std::numeric_limits<double>::infinity();
  for (double eps : {1e-2, 1e-4, 1e-6, 1e-8}) {
    Vector w = Vector::Constant(20, eps / 19.0);
    w[7] = 1.0 - eps;
    const Vector mu = kernel_curve(in.a, in.y, w, grid).curve.mu_hat;
    const double gap = (mu.array() - in.y[7]).abs().maxCoeff();
    EXPECT_LT(gap, prev);
    prev = gap;
  }
  EXPECT_LT(prev, 1e-4);
}

TEST(KernelCurve, MatchesDirectSummation) {
  const Instance in = random_instance(7, 20);
  const Vector grid = uniform_grid(-2.0, 2.0, 100);
  const double h = 0.45;
  KernelOptions opt;
  opt.bandwidth = h;
  const Vector mu = kernel_curve(in.a, in.y, in.w, grid, opt).curve.mu_hat;
  for (Index g = 0; g < grid.size(); ++g) {
    double num = 0.0, den = 0.0;
    for (Index i = 0; i < 20; ++i) {
      const double u = (grid[g] - in.a[i]) / h;
      const double k = std::exp(-0.5 * u * u);
      num += in.w[i] * k * in.y[i];
      den += in.w[i] * k;
    }
    EXPECT_NEAR(mu[g], num / den, 1e-12);
  }
}

TEST(KernelCurve, DerivativeMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Instance in = random_instance(seed, 15);
    const Vector grid = uniform_grid(-1.0, 1.0, 7);
    const KernelCurveResult r = kernel_curve(in.a, in.y, in.w, grid);
    for (Index g = 0; g < grid.size(); ++g) {
      const auto f = [&](const Vector& w) { return kernel_curve(in.a, in.y, w, grid).curve.mu_hat[g]; };
      EXPECT_LE(oracle::rel_error(r.d_mu_dw.row(g).transpose(),
                                  oracle::central_difference(f, in.w, 1e-6)),
                1e-6)
          << "seed " << seed << " grid " << g;
    }
  }
}

TEST(KernelCurve, MseGradientMatchesDerivative) {
  const Instance in = random_instance(8, 30);
  const Vector grid = uniform_grid(-1.5, 1.5, 12);
  const KernelRegressor reg(in.a, grid, 0.5);
  const Vector truth = grid.array().sin();
  Vector grad;
  const double mse = reg.mse_and_grad(in.w, in.y, truth, &grad);
  const Vector mu = reg.estimate(in.w, in.y);
  EXPECT_NEAR(mse, evaluation_loss(mu, truth, LossMode::curve), 1e-14);
  const Vector via_jacobian =
      reg.derivative(in.w, in.y, mu).transpose() * (2.0 / 12.0 * (mu - truth));
  EXPECT_LE((grad - via_jacobian).lpNorm<Eigen::Infinity>(), 1e-12);
}

TEST(KernelCurve, ConvexCombinationAndScaleInvariance) {
  const Instance in = random_instance(9, 50);
  const Vector grid = uniform_grid(-2.0, 2.0, 100);
  const Vector mu = kernel_curve(in.a, in.y, in.w, grid).curve.mu_hat;
  EXPECT_GE(mu.minCoeff(), in.y.minCoeff());
  EXPECT_LE(mu.maxCoeff(), in.y.maxCoeff());
  const Vector scaled = kernel_curve(in.a, in.y, 11.0 * in.w, grid).curve.mu_hat;
  EXPECT_LE((mu - scaled).lpNorm<Eigen::Infinity>(), 1e-12);
}

TEST(KernelCurve, SparseRegionNamesGridPoint) {
  Vector a(3), y(3), w(3);
  a << 0.0, 0.1, 0.2;
  y << 1, 2, 3;
  w << 0.3, 0.3, 0.4;
  Vector grid(2);
  grid << 0.1, 40.0;
  KernelOptions opt;
  opt.bandwidth = 0.1;
  try {
    kernel_curve(a, y, w, grid, opt);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::sparse_region);
    EXPECT_NE(std::string(e.what()).find("40"), std::string::npos) << e.what();
  }
}

TEST(KernelOptions, SilvermanTimesMultiplier) {
  const Instance in = random_instance(10, 64);
  KernelOptions opt;
  opt.multiplier = 0.5;
  EXPECT_NEAR(opt.resolve(in.a), 0.5 * silverman_bandwidth(in.a), 1e-15);
  opt.bandwidth = 0.3;
  EXPECT_EQ(opt.resolve(in.a), 0.3);
}

TEST(EvaluationLoss, Examples) {
  const Vector v = Vector::LinSpaced(100, -2, 2);
  EXPECT_EQ(evaluation_loss(v, v, LossMode::curve), 0.0);
  EXPECT_EQ(evaluation_loss(1.0, 1.0, LossMode::linear), 0.0);
  EXPECT_NEAR(evaluation_loss(1.5, 1.0, LossMode::linear), 0.25, 1e-15);
  EXPECT_NEAR(evaluation_loss(1.5, 1.0, LossMode::linear_report), 0.5, 1e-15);
  const Vector shifted = v.array() + 0.1;
  EXPECT_NEAR(evaluation_loss(shifted, v, LossMode::curve_report), 0.1, 1e-12);
  EXPECT_NEAR(evaluation_loss(shifted, v, LossMode::curve), 0.01, 1e-12);
  EXPECT_THROW(evaluation_loss(v, Vector::Zero(3), LossMode::curve), Error);
}

TEST(UniformGrid, EndpointsAndSpacing) {
  const Vector g = uniform_grid(-2.0, 2.0, 100);
  EXPECT_EQ(g[0], -2.0);
  EXPECT_EQ(g[99], 2.0);
  EXPECT_NEAR(g[1] - g[0], 4.0 / 99.0, 1e-15);
  EXPECT_THROW(uniform_grid(0, 1, 1), Error);
}
