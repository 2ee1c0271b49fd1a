#pragma once

// Central finite-difference checks for the analytic derivatives: the
// implicit derivative of the balancing solution and the network backward
// pass. Used by the debug-grad command.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "e2b/data_model.hpp"
#include "e2b/eb_solver.hpp"
#include "e2b/implicit_grad.hpp"
#include "e2b/lbw_net.hpp"
#include "e2b/rng.hpp"

namespace e2b {

struct GradCheck {
  double vjp_error = 0.0;       // relative, infinity norm
  double jacobian_error = 0.0;  // relative, infinity norm
  Index n = 0;
  Index K = 0;
};

inline double relative_error(const Vector& analytic, const Vector& numeric) {
  const double scale = std::max(numeric.lpNorm<Eigen::Infinity>(), 1e-12);
  return (analytic - numeric).lpNorm<Eigen::Infinity>() / scale;
}

// Random balancing problem with n observations and K identity features.
// Redraws until the dual converges with every weight above 1e-6; instances
// where some weights collapse to zero pin w completely and have a zero
// gradient, which makes relative error checks meaningless.
inline BalancingProblem random_problem(Stream& rng, Index n, Index K, double ell_scale = 0.5) {
  for (int attempt = 0; attempt < 100; ++attempt) {
    Dataset d;
    d.x.resize(n, K);
    d.a.resize(n);
    d.y = Vector::Zero(n);
    for (Index i = 0; i < n; ++i) {
      double s = 0.0;
      for (Index k = 0; k < K; ++k) {
        d.x(i, k) = rng.normal();
        s += d.x(i, k);
      }
      d.a[i] = 0.3 * s + rng.normal();
    }
    Vector ell(n);
    for (Index i = 0; i < n; ++i) ell[i] = ell_scale * rng.normal();
    auto [dm, basis] = demean(d);
    BalancingProblem p = build_problem(dm, basis, ell);
    const DualSolution sol = solve_dual(p);
    if (sol.converged && sol.weights.minCoeff() > 1e-6) return p;
  }
  throw Error(ErrorKind::degenerate, "could not draw a feasible balancing problem");
}

// Compares the VJP of L(w) = c'w + 0.5 sum d_i w_i^2 and the lambda Jacobian
// against central differences in ell.
inline GradCheck check_implicit_gradient(std::uint64_t seed, Index n, Index K, double step = 1e-4) {
  Stream rng(seed, StreamId::probe, 1);
  BalancingProblem p = random_problem(rng, n, K);
  Vector c(n), dd(n);
  for (Index i = 0; i < n; ++i) c[i] = rng.normal();
  for (Index i = 0; i < n; ++i) dd[i] = rng.normal();
  auto loss = [&](const Vector& w) { return c.dot(w) + 0.5 * dd.dot(w.cwiseAbs2()); };

  SolverOptions tight;
  tight.tol = 1e-13;
  const DualSolution sol = solve_dual(p, tight);
  const Vector analytic = vjp_loss_wrt_ell(p, sol, c + dd.cwiseProduct(sol.weights));
  const Matrix J = jacobian_lambda_wrt_ell(p, sol);

  Vector numeric(n);
  Matrix Jn(p.dim(), n);
  for (Index i = 0; i < n; ++i) {
    BalancingProblem q = p;
    q.ell[i] = p.ell[i] + step;
    const DualSolution up = solve_dual(q, tight);
    q.ell[i] = p.ell[i] - step;
    const DualSolution dn = solve_dual(q, tight);
    numeric[i] = (loss(up.weights) - loss(dn.weights)) / (2.0 * step);
    Jn.col(i) = (up.lambda - dn.lambda) / (2.0 * step);
  }
  GradCheck out;
  out.n = n;
  out.K = K;
  out.vjp_error = relative_error(analytic, numeric);
  out.jacobian_error = relative_error(Eigen::Map<const Vector>(J.data(), J.size()),
                                      Eigen::Map<const Vector>(Jn.data(), Jn.size()));
  return out;
}

// Relative error of lbw_backward against central differences of
// L(ell) = c' ell over every parameter and every input.
inline double check_lbw_gradient(std::uint64_t seed, Index n, Index hidden, double step = 1e-6) {
  Stream rng(seed, StreamId::probe, 2);
  LbwNetParams p = init_lbw_net(hidden, seed);
  // Non-zero skip and output weights so every path carries gradient.
  p.c = rng.normal();
  for (Index j = 0; j < p.W3.size(); ++j) p.W3[j] = rng.normal();
  for (Index j = 0; j < hidden; ++j) p.ln_gain[j] = 1.0 + 0.3 * rng.normal();
  for (Index j = 0; j < hidden; ++j) p.ln_bias[j] = 0.3 * rng.normal();
  Vector z(n), c(n);
  for (Index i = 0; i < n; ++i) z[i] = rng.normal();
  for (Index i = 0; i < n; ++i) c[i] = rng.normal();

  const LbwForward fwd = lbw_forward(p, z);
  const LbwGrad g = lbw_backward(p, fwd.tape, c);
  Vector analytic(p.size() + n);
  analytic << g.params.flatten(), g.z;

  const Vector flat = p.flatten();
  Vector numeric(analytic.size());
  LbwNetParams q = p;
  for (Index j = 0; j < flat.size(); ++j) {
    Vector f = flat;
    f[j] += step;
    q.unflatten(f);
    const double up = c.dot(lbw_forward(q, z).ell);
    f[j] -= 2.0 * step;
    q.unflatten(f);
    const double dn = c.dot(lbw_forward(q, z).ell);
    numeric[j] = (up - dn) / (2.0 * step);
  }
  for (Index i = 0; i < n; ++i) {
    Vector zz = z;
    zz[i] += step;
    const double up = c.dot(lbw_forward(p, zz).ell);
    zz[i] -= 2.0 * step;
    const double dn = c.dot(lbw_forward(p, zz).ell);
    numeric[flat.size() + i] = (up - dn) / (2.0 * step);
  }
  return relative_error(analytic, numeric);
}

}  // namespace e2b
