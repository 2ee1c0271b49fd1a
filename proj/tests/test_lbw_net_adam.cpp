#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "e2b/adam.hpp"
#include "e2b/gradcheck.hpp"
#include "e2b/lbw_net.hpp"
#include "support/oracles.hpp"

using namespace e2b;

namespace {

LbwNetParams hand_params() {
  LbwNetParams p = LbwNetParams::zeros(2);
  p.c = 0.7;
  p.W1 << 0.5, -1.2;
  p.b1 << 0.3, -0.4;
  p.W2 << 0.8, -0.5, 0.2, 1.1;
  p.ln_gain << 1.5, 0.5;
  p.ln_bias << 0.1, -0.2;
  p.W3 << 0.9, -0.6;
  return p;
}

LbwNetParams random_params(std::uint64_t seed, Index h) {
  LbwNetParams p = init_lbw_net(h, seed);
  Stream rng(seed, StreamId::probe, 40);
  p.c = rng.normal();
  for (Index j = 0; j < h; ++j) p.W3[j] = rng.normal();
  for (Index j = 0; j < h; ++j) p.ln_gain[j] = 1.0 + 0.3 * rng.normal();
  for (Index j = 0; j < h; ++j) p.ln_bias[j] = 0.3 * rng.normal();
  return p;
}

}  // namespace

TEST(LbwForward, DeadBranchLeavesSkipOnly) {
  LbwNetParams p = LbwNetParams::zeros(4);
  p.c = -1.7;
  Vector z(3);
  z << -2.0, 0.0, 5.0;
  const Vector ell = lbw_forward(p, z).ell;
  for (Index i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(ell[i], -1.7 * z[i]);
}

TEST(LbwForward, HandComputedTwoUnitNetwork) {
  Vector z(2);
  z << 0.0, 1.3;
  const Vector ell = lbw_forward(hand_params(), z).ell;
  // Reference values from a separate scalar evaluation of the same formula.
  EXPECT_NEAR(ell[0], 1.741999884209439, 1e-13);
  EXPECT_NEAR(ell[1], 2.652041183176577, 1e-13);
}

TEST(LbwForward, ShiftingZChangesOnlyThroughInputPaths) {
  LbwNetParams p = random_params(1, 5);
  Vector z(4);
  z << -50.0, -1.0, 1.0, 50.0;
  const Vector ell = lbw_forward(p, z).ell;
  EXPECT_TRUE(ell.allFinite());
  // Removing the skip and the dense1 weights makes the output constant in z.
  p.c = 0.0;
  p.W1.setZero();
  const Vector flat = lbw_forward(p, z).ell;
  for (Index i = 1; i < 4; ++i) EXPECT_DOUBLE_EQ(flat[i], flat[0]);
  // The non-skip branch is bounded: tanh saturates, layer norm rescales.
  LbwNetParams q = random_params(2, 5);
  q.c = 0.0;
  const Vector bounded = lbw_forward(q, z).ell;
  EXPECT_LE(bounded.cwiseAbs().maxCoeff(), q.W3.cwiseAbs().sum() * (std::sqrt(5.0) * 2.0 + 1.0));
}

TEST(LbwForward, InitialNetworkIsConstant) {
  const LbwNetParams p = init_lbw_net(10, 123);
  EXPECT_EQ(p.c, 0.0);
  EXPECT_TRUE(p.W3.isZero());
  EXPECT_TRUE(p.ln_gain.isOnes());
  EXPECT_TRUE(p.ln_bias.isZero());
  EXPECT_LE(p.W1.cwiseAbs().maxCoeff(), 1.0);
  EXPECT_LE(p.W2.cwiseAbs().maxCoeff(), 1.0 / std::sqrt(10.0));
  Vector z(6);
  z << -3, -1, 0, 0.5, 2, 7;
  EXPECT_TRUE(lbw_forward(p, z).ell.isZero());
}

TEST(LbwForward, InitIsSeedDeterministic) {
  EXPECT_EQ(init_lbw_net(10, 7), init_lbw_net(10, 7));
  EXPECT_FALSE(init_lbw_net(10, 7) == init_lbw_net(10, 8));
}

TEST(LbwBackward, SkipPathGradient) {
  LbwNetParams p = LbwNetParams::zeros(3);
  p.c = 0.4;
  Vector z(4), up(4);
  z << 1, -2, 0.5, 3;
  up << 0.2, 0.1, -1, 2;
  const LbwGrad g = lbw_backward(p, lbw_forward(p, z).tape, up);
  EXPECT_NEAR(g.params.c, up.dot(z), 1e-15);
  for (Index i = 0; i < 4; ++i) EXPECT_NEAR(g.z[i], 0.4 * up[i], 1e-15);
}

TEST(LbwBackward, ZeroUpstreamGivesZeroGradients) {
  const LbwNetParams p = random_params(3, 4);
  Vector z(5);
  z << 1, 2, 3, 4, 5;
  const LbwGrad g = lbw_backward(p, lbw_forward(p, z).tape, Vector::Zero(5));
  EXPECT_TRUE(g.params.flatten().isZero());
  EXPECT_TRUE(g.z.isZero());
}

TEST(LbwBackward, MatchesFiniteDifferences) {
  const LbwNetParams p = random_params(4, 3);
  Stream rng(4, StreamId::probe, 41);
  Vector z(4), up(4);
  for (Index i = 0; i < 4; ++i) z[i] = rng.normal();
  for (Index i = 0; i < 4; ++i) up[i] = rng.normal();
  const LbwGrad g = lbw_backward(p, lbw_forward(p, z).tape, up);
  const auto f = [&](const Vector& flat) {
    LbwNetParams q = p;
    q.unflatten(flat);
    return up.dot(lbw_forward(q, z).ell);
  };
  const Vector numeric = oracle::central_difference(f, p.flatten(), 1e-6);
  const Vector analytic = g.params.flatten();
  for (Index k = 0; k < analytic.size(); ++k)
    EXPECT_NEAR(analytic[k], numeric[k], 1e-5 * std::max(1.0, std::abs(numeric[k]))) << "param " << k;
  const auto fz = [&](const Vector& zz) { return up.dot(lbw_forward(p, zz).ell); };
  EXPECT_LE(oracle::rel_error(g.z, oracle::central_difference(fz, z, 1e-6)), 1e-5);
}

TEST(LbwBackward, TwentyRandomConfigurations) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Index h = 1 + static_cast<Index>(seed % 10);
    EXPECT_LE(check_lbw_gradient(seed, 6, h), 1e-5) << "seed " << seed;
  }
}

TEST(LbwBackward, TapeMismatchThrows) {
  const LbwNetParams p = random_params(5, 3);
  Vector z(4);
  z.setOnes();
  const auto fwd = lbw_forward(p, z);
  try {
    lbw_backward(p, fwd.tape, Vector::Zero(3));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::shape);
  }
  EXPECT_THROW(lbw_backward(random_params(5, 4), fwd.tape, Vector::Zero(4)), Error);
}

TEST(LbwParams, FlattenRoundTripAndLayout) {
  const LbwNetParams p = random_params(6, 10);
  EXPECT_EQ(p.size(), 1 + 10 + 10 + 100 + 10 + 10 + 10);
  LbwNetParams q = LbwNetParams::zeros(10);
  q.unflatten(p.flatten());
  EXPECT_EQ(p, q);
  EXPECT_THROW(q.unflatten(Vector::Zero(5)), Error);
  EXPECT_THROW(LbwNetParams::zeros(0), Error);
}

TEST(LbwCheckpoint, JsonRoundTripIsExact) {
  const LbwNetParams p = random_params(7, 10);
  const nlohmann::json j = lbw_to_json(p);
  EXPECT_EQ(j.at("format"), "e2b-lbw-net");
  EXPECT_EQ(j.at("tensors").at("dense2.weight").at("shape"), nlohmann::json({10, 10}));
  EXPECT_EQ(lbw_from_json(nlohmann::json::parse(j.dump())), p);
  nlohmann::json bad = j;
  bad["tensors"]["dense3.weight"]["data"] = std::vector<double>{1.0};
  EXPECT_THROW(lbw_from_json(bad), Error);
  bad = j;
  bad["format"] = "other";
  EXPECT_THROW(lbw_from_json(bad), Error);
}

TEST(Adam, ZeroGradientWithoutDecayIsStationary) {
  Vector params(3);
  params << 1.0, -2.0, 3.0;
  const Vector before = params;
  AdamState st(3);
  AdamOptions opt;
  opt.weight_decay = 0.0;
  for (int k = 0; k < 5; ++k) adam_step(st, params, Vector::Zero(3), opt);
  EXPECT_EQ(params, before);
}

TEST(Adam, FirstStepHasLearningRateMagnitude) {
  Vector params = Vector::Zero(1);
  AdamState st(1);
  AdamOptions opt;
  opt.weight_decay = 0.0;
  adam_step(st, params, Vector::Constant(1, 1.0), opt);
  EXPECT_NEAR(params[0], -0.02, 1e-6);
  // Sign-invariant magnitude for other gradient scales.
  Vector q = Vector::Zero(1);
  AdamState st2(1);
  adam_step(st2, q, Vector::Constant(1, -250.0), opt);
  EXPECT_NEAR(q[0], 0.02, 1e-6);
}

TEST(Adam, MatchesScalarReferenceWithDecay) {
  // Independent scalar implementation of bias-corrected Adam with coupled L2.
  double x = 0.8, m = 0.0, v = 0.0;
  const double lr = 0.02, wd = 2.5e-5, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  Vector params = Vector::Constant(1, 0.8);
  AdamState st(1);
  for (int t = 1; t <= 50; ++t) {
    const double grad = std::sin(0.3 * t) + x;
    const double g = grad + wd * x;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t));
    const double vh = v / (1 - std::pow(b2, t));
    x -= lr * mh / (std::sqrt(vh) + eps);
    adam_step(st, params, Vector::Constant(1, std::sin(0.3 * t) + params[0]));
    ASSERT_NEAR(params[0], x, 1e-14) << "step " << t;
  }
  EXPECT_EQ(st.step, 50);
}

TEST(Adam, IdenticalRunsAreBitwiseEqual) {
  auto run = [] {
    LbwNetParams p = init_lbw_net(10, 99);
    Vector flat = p.flatten();
    AdamState st(flat.size());
    Stream rng(99, StreamId::probe, 42);
    Vector z(20), up(20);
    for (int step = 0; step < 10; ++step) {
      for (Index i = 0; i < 20; ++i) z[i] = rng.normal();
      for (Index i = 0; i < 20; ++i) up[i] = rng.normal();
      p.unflatten(flat);
      const LbwGrad g = lbw_backward(p, lbw_forward(p, z).tape, up);
      adam_step(st, flat, g.params.flatten());
    }
    return flat;
  };
  const Vector a = run(), b = run();
  EXPECT_EQ(0, std::memcmp(a.data(), b.data(), sizeof(double) * a.size()));
}

TEST(Adam, ShapeMismatchThrows) {
  Vector params = Vector::Zero(2);
  AdamState st(3);
  EXPECT_THROW(adam_step(st, params, Vector::Zero(2)), Error);
}
