#pragma once

// Entropy balancing through its dual:
//
//   lambda = argmin log(1' exp(-G' lambda + ell)),   w = softmax(-G' lambda + ell)
//
// The dual gradient is -G w, so the stopping rule on the gradient is also a
// bound on the balance residual.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "e2b/data_model.hpp"
#include "e2b/error.hpp"

namespace e2b {

struct SolverOptions {
  double tol = 1e-9;
  int max_iter = 200;
  double backtrack = 0.5;
  double sufficient_decrease = 1e-4;

  void validate() const {
    if (!(tol > 0.0)) throw Error(ErrorKind::config, "solver tol must be positive");
    if (max_iter < 1) throw Error(ErrorKind::config, "solver max_iter must be >= 1");
    if (!(backtrack > 0.0 && backtrack < 1.0))
      throw Error(ErrorKind::config, "backtracking factor must lie in (0, 1)");
  }
};

struct DualSolution {
  Vector lambda;
  Vector weights;
  Matrix hessian;  // at the returned lambda
  double objective = 0.0;
  int iterations = 0;
  double grad_norm = std::numeric_limits<double>::infinity();
  bool converged = false;
  std::vector<std::string> warnings;
};

inline double log_sum_exp(const Vector& u) {
  const double m = u.maxCoeff();
  return m + std::log((u.array() - m).exp().sum());
}

inline Vector softmax(const Vector& u) {
  const double m = u.maxCoeff();
  Vector e = (u.array() - m).exp();
  return e / e.sum();
}

inline Vector dual_logits(const BalancingProblem& p, const Vector& lambda) {
  return -(p.G.transpose() * lambda) + p.ell;
}

inline Vector weights_from_dual(const BalancingProblem& p, const Vector& lambda) {
  if (lambda.size() != p.G.rows()) throw Error(ErrorKind::shape, "lambda length must be 2K+1");
  if (p.ell.size() != p.G.cols()) throw Error(ErrorKind::shape, "ell length must equal n");
  return softmax(dual_logits(p, lambda));
}

inline Vector balance_residual(const BalancingProblem& p, const Vector& w) {
  if (w.size() != p.G.cols()) throw Error(ErrorKind::shape, "weight length must equal n");
  return p.G * w;
}

// KL(w || q) with q = softmax(ell).
inline double kl_to_base(const Vector& w, const Vector& ell) {
  if (w.size() != ell.size()) throw Error(ErrorKind::shape, "w and ell lengths differ");
  const double log_norm = log_sum_exp(ell);
  double kl = 0.0;
  for (Index i = 0; i < w.size(); ++i) kl += w[i] * (std::log(w[i]) - (ell[i] - log_norm));
  return kl;
}

// Weighted covariance of the columns of G: sum w g g' - (Gw)(Gw)'.
inline Matrix dual_hessian(const Matrix& G, const Vector& w) {
  const Vector mean = G * w;
  Matrix H = G * w.asDiagonal() * G.transpose();
  H.noalias() -= mean * mean.transpose();
  return H;
}

// Newton's method with backtracking. Rows of G that are identically zero are
// left out of the Newton system (their multipliers stay at 0) and reported as
// rank warnings. If the Cholesky factorization fails the step falls back to
// steepest descent.
inline DualSolution solve_dual(const BalancingProblem& p, const SolverOptions& opts = {}) {
  opts.validate();
  const Index d = p.G.rows();
  const Index n = p.G.cols();
  if (p.ell.size() != n) throw Error(ErrorKind::shape, "ell length must equal n");
  if (!p.G.allFinite() || !p.ell.allFinite())
    throw Error(ErrorKind::precondition, "G and ell must be finite");

  DualSolution sol;
  std::vector<Index> active;
  for (Index k = 0; k < d; ++k) {
    if (p.G.row(k).cwiseAbs().maxCoeff() == 0.0) {
      const std::string label =
          static_cast<std::size_t>(k) < p.labels.size() ? p.labels[static_cast<std::size_t>(k)]
                                                        : "row " + std::to_string(k);
      sol.warnings.push_back("constraint '" + label + "' is identically zero");
    } else {
      active.push_back(k);
    }
  }
  if (active.empty()) throw Error(ErrorKind::precondition, "all rows of G are zero");
  const auto m = static_cast<Index>(active.size());
  Matrix Ga(m, n);
  for (Index k = 0; k < m; ++k) Ga.row(k) = p.G.row(active[static_cast<std::size_t>(k)]);

  Vector lam = Vector::Zero(m);
  Vector u = p.ell;
  Vector w = softmax(u);
  Vector grad = -(Ga * w);

  int it = 0;
  for (; it < opts.max_iter; ++it) {
    if (grad.lpNorm<Eigen::Infinity>() <= opts.tol) break;

    const Matrix H = dual_hessian(Ga, w);
    Eigen::LLT<Matrix> llt(H);
    Vector step;
    if (llt.info() == Eigen::Success) step = -llt.solve(grad);
    if (llt.info() != Eigen::Success || !step.allFinite() || grad.dot(step) >= 0.0)
      step = -grad;

    // f(lam + t*step) - f(lam) = log sum_i w_i exp(-t (G' step)_i), evaluated
    // with log1p/expm1 so the decrease stays resolvable near the optimum.
    const Vector dir = Ga.transpose() * step;
    const double slope = grad.dot(step);
    double t = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      const Vector shift = -t * dir;
      const double smax = shift.maxCoeff();
      double delta;
      if (smax < 1.0) {
        double acc = 0.0;
        for (Index i = 0; i < n; ++i) acc += w[i] * std::expm1(shift[i]);
        delta = std::log1p(acc);
      } else {
        delta = smax + std::log((w.array() * (shift.array() - smax).exp()).sum());
      }
      if (std::isfinite(delta) && delta <= opts.sufficient_decrease * t * slope) {
        accepted = true;
        lam += t * step;
        u = p.ell - Ga.transpose() * lam;
        break;
      }
      t *= opts.backtrack;
    }
    if (!accepted) {
      sol.warnings.push_back("line search stalled at iteration " + std::to_string(it));
      break;
    }
    w = softmax(u);
    grad = -(Ga * w);
  }

  sol.lambda = Vector::Zero(d);
  for (Index k = 0; k < m; ++k) sol.lambda[active[static_cast<std::size_t>(k)]] = lam[k];
  sol.weights = w;
  sol.objective = log_sum_exp(u);
  sol.iterations = it;
  sol.grad_norm = (p.G * w).lpNorm<Eigen::Infinity>();
  sol.converged = sol.grad_norm <= opts.tol;
  sol.hessian = dual_hessian(p.G, w);
  return sol;
}

}  // namespace e2b
