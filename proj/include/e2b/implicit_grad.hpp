#pragma once

// Derivatives of the entropy-balancing solution with respect to the
// log-base-weights ell.
//
// With u = -G' lambda + ell and w = softmax(u), optimality is G w = 0.
// Differentiating it gives H dlambda/dell = G S, where S = diag(w) - w w' is
// the softmax Jacobian and H = G S G' is the dual Hessian. The total
// derivative of the weights is dw/dell = S (I - G' dlambda/dell).

#include <Eigen/Dense>

#include <cmath>
#include <string>

#include "e2b/eb_solver.hpp"
#include "e2b/error.hpp"

namespace e2b {

struct WeightJacobianContext {
  Matrix hessian;
  Eigen::LLT<Matrix> factor;
  Vector weights;
  Vector residual;  // G w
  double jitter = 0.0;
};

// Cholesky with diagonal jitter escalating from 1e-12 to 1e-8 (relative to the
// largest diagonal entry). Failure names the constraint that dominates the
// null direction.
inline WeightJacobianContext make_jacobian_context(const BalancingProblem& p,
                                                   const DualSolution& sol) {
  if (sol.weights.size() != p.n() || sol.lambda.size() != p.dim())
    throw Error(ErrorKind::shape, "solution does not match problem");
  WeightJacobianContext ctx;
  ctx.weights = sol.weights;
  ctx.residual = p.G * sol.weights;
  ctx.hessian = sol.hessian.size() == p.dim() * p.dim() ? sol.hessian
                                                        : dual_hessian(p.G, sol.weights);
  const double scale = std::max(1.0, ctx.hessian.diagonal().cwiseAbs().maxCoeff());
  for (double jitter : {0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8}) {
    Matrix H = ctx.hessian;
    H.diagonal().array() += jitter * scale;
    ctx.factor.compute(H);
    if (ctx.factor.info() == Eigen::Success) {
      const double min_pivot = ctx.factor.matrixL().toDenseMatrix().diagonal().minCoeff();
      if (min_pivot > 0.0 && std::isfinite(min_pivot)) {
        ctx.jitter = jitter * scale;
        return ctx;
      }
    }
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(ctx.hessian);
  Index worst = 0;
  eig.eigenvectors().col(0).cwiseAbs().maxCoeff(&worst);
  const std::string label = static_cast<std::size_t>(worst) < p.labels.size()
                                ? p.labels[static_cast<std::size_t>(worst)]
                                : "row " + std::to_string(worst);
  throw Error(ErrorKind::rank, "dual Hessian is singular along constraint '" + label +
                                   "' (smallest eigenvalue " +
                                   std::to_string(eig.eigenvalues()[0]) + ")");
}

// dlambda/dell, (2K+1) x n. Column i is H^{-1} w_i (g_i - G w).
inline Matrix jacobian_lambda_wrt_ell(const BalancingProblem& p, const DualSolution& sol) {
  if (!sol.converged) throw Error(ErrorKind::precondition, "solution did not converge");
  const auto ctx = make_jacobian_context(p, sol);
  Matrix rhs = (p.G.colwise() - ctx.residual) * ctx.weights.asDiagonal();
  return ctx.factor.solve(rhs);
}

inline Vector vjp_loss_wrt_ell(const BalancingProblem& p, const WeightJacobianContext& ctx,
                               const Vector& dL_dw) {
  if (dL_dw.size() != p.n()) throw Error(ErrorKind::shape, "dL/dw length must equal n");
  const Vector& w = ctx.weights;
  // t = S v
  const Vector t = w.cwiseProduct(dL_dw) - w * w.dot(dL_dw);
  // s = H^{-1} G t ;  dL/dell = t - S G' s
  const Vector s = ctx.factor.solve(p.G * t);
  const Vector q = p.G.transpose() * s;
  const Vector Sq = w.cwiseProduct(q) - w * w.dot(q);
  return t - Sq;
}

inline Vector vjp_loss_wrt_ell(const BalancingProblem& p, const DualSolution& sol,
                               const Vector& dL_dw) {
  if (!sol.converged) throw Error(ErrorKind::precondition, "solution did not converge");
  return vjp_loss_wrt_ell(p, make_jacobian_context(p, sol), dL_dw);
}

// Full n x n Jacobian dw/dell; diagnostics only.
inline Matrix weight_jacobian(const BalancingProblem& p, const DualSolution& sol) {
  const Matrix J = jacobian_lambda_wrt_ell(p, sol);
  const Vector& w = sol.weights;
  const Matrix S = Matrix(w.asDiagonal()) - w * w.transpose();
  return S * (Matrix::Identity(p.n(), p.n()) - p.G.transpose() * J);
}

}  // namespace e2b
