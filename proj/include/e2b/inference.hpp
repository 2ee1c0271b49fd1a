#pragma once

// Asymptotic variance of the entropy-balancing weights.
//
// Written with mu = -lambda so that w_i is proportional to exp(g_i' mu + ell_i).
// The score is psi_i = g_i exp(g_i' mu + ell_i) and its derivative is
// psi_dot_i = g_i g_i' exp(g_i' mu + ell_i). With A = E[psi_dot] and
// B = E[psi psi'] (empirical, at the solution), V = A^{-1} B A^{-1} is the
// covariance of sqrt(n)(mu_hat - mu*). For the normalized weight
// s_i = exp(g_i' mu + ell_i) / mean_j exp(g_j' mu + ell_j), the delta method
// gives sigma_i^2 = grad s_i' V grad s_i with grad s_i = s_i (g_i - G w).
//
// V is invariant to rescaling exp(.) by a constant, so the exponentials are
// replaced by s = n w; then mean(psi) equals the balance residual G w.
//
// That delta-method term treats the normalizer mean_j exp(.) as a function
// of mu alone and misses its own sampling noise, which is the whole variance
// wherever g is near 0. sigma2 therefore stacks the normalizer Z as one more
// parameter with score exp(g' mu + ell) - Z and applies the same sandwich to
// (mu, Z). The mu-only term is kept as sigma2_lambda.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <utility>

#include "e2b/eb_solver.hpp"
#include "e2b/error.hpp"

namespace e2b {

struct WeightVariance {
  Vector sigma2;         // per observation, scale of sqrt(n) (n w_i - w*_i)
  Vector sigma2_lambda;  // the part carried by mu alone
  Matrix V;              // (2K+1) x (2K+1), for mu
  Matrix V_full;         // (2K+2) x (2K+2), for (mu, Z) with Z scaled to 1
  Matrix A;          // mean psi_dot
  Matrix B;          // mean psi psi'
  Vector score_mean; // mean psi, equals G w
  double condition = 0.0;  // reciprocal condition estimate of A

  // Normalized weight and its variance at an arbitrary feature vector g with
  // log-base-weight ell (out of sample), given the fitted solution.
  std::pair<double, double> at(const BalancingProblem& p, const DualSolution& sol,
                               const Vector& g, double ell) const {
    const Vector u = dual_logits(p, sol.lambda);
    const double m = u.maxCoeff();
    const double mean_exp = (u.array() - m).exp().mean();
    const double s = std::exp(-sol.lambda.dot(g) + ell - m) / mean_exp;
    Vector grad(g.size() + 1);
    grad << s * g, -s;
    return {s, grad.dot(V_full * grad)};
  }
};

inline WeightVariance sandwich_variance(const BalancingProblem& p, const DualSolution& sol) {
  if (!sol.converged) throw Error(ErrorKind::precondition, "solution did not converge");
  const Index n = p.n();
  const double nd = static_cast<double>(n);
  const Vector s = nd * sol.weights;

  WeightVariance out;
  out.A = p.G * s.asDiagonal() * p.G.transpose() / nd;
  out.B = p.G * s.cwiseAbs2().asDiagonal() * p.G.transpose() / nd;
  out.score_mean = p.G * s / nd;

  Eigen::LDLT<Matrix> ldlt(out.A);
  // LDLT::rcond pseudo-inverts zero pivots, so bound it by the pivot ratio too.
  const Vector piv = ldlt.vectorD().cwiseAbs();
  const double piv_ratio = piv.maxCoeff() > 0.0 ? piv.minCoeff() / piv.maxCoeff() : 0.0;
  out.condition = std::min(ldlt.rcond(), piv_ratio);
  if (ldlt.info() != Eigen::Success || !(out.condition > 1e-14))
    throw Error(ErrorKind::rank, "mean score derivative is singular");
  const Matrix Ainv_B = ldlt.solve(out.B);
  out.V = ldlt.solve(Ainv_B.transpose());
  out.V = 0.5 * (out.V + out.V.transpose());

  const Vector center = p.G * sol.weights;
  const Matrix grads = (p.G.colwise() - center) * s.asDiagonal();  // column i: grad s_i
  out.sigma2_lambda = (grads.transpose() * out.V).cwiseProduct(grads.transpose()).rowwise().sum();

  // Stacked scores [g s; s - 1] with derivative [[A, 0], [mean(g s)', -1]].
  const Index d = p.dim();
  Matrix scores(d + 1, n);
  scores.topRows(d) = p.G * s.asDiagonal();
  scores.row(d) = (s.array() - 1.0).matrix().transpose();
  Matrix A_full = Matrix::Zero(d + 1, d + 1);
  A_full.topLeftCorner(d, d) = out.A;
  A_full.bottomLeftCorner(1, d) = out.score_mean.transpose();
  A_full(d, d) = -1.0;
  const Matrix B_full = scores * scores.transpose() / nd;
  const Eigen::PartialPivLU<Matrix> lu(A_full);
  const Matrix left = lu.solve(B_full);
  out.V_full = lu.solve(left.transpose());
  out.V_full = 0.5 * (out.V_full + out.V_full.transpose());
  Matrix grads_full(d + 1, n);
  grads_full.topRows(d) = p.G * s.asDiagonal();
  grads_full.row(d) = -s.transpose();
  out.sigma2 =
      (grads_full.transpose() * out.V_full).cwiseProduct(grads_full.transpose()).rowwise().sum();
  return out;
}

// sum w log(w / p^{-1}) and sum (1/p) H(p w) with H(t) = t log t.
inline std::pair<double, double> weighted_entropy_identity(const Vector& w, const Vector& p_hat) {
  if (w.size() != p_hat.size()) throw Error(ErrorKind::shape, "w and p_hat lengths differ");
  double lhs = 0.0;
  double rhs = 0.0;
  for (Index i = 0; i < w.size(); ++i) {
    lhs += w[i] * std::log(w[i] / (1.0 / p_hat[i]));
    const double t = p_hat[i] * w[i];
    rhs += (1.0 / p_hat[i]) * (t * std::log(t));
  }
  return {lhs, rhs};
}

// sum_i w_i a_i phi(x_i); zero for weights that decorrelate a and phi(x).
inline Vector gsw_balance_check(const Vector& w, const Vector& a, const Matrix& phi) {
  if (w.size() != a.size() || phi.rows() != a.size())
    throw Error(ErrorKind::shape, "w, a and phi sizes differ");
  return phi.transpose() * w.cwiseProduct(a);
}

}  // namespace e2b
