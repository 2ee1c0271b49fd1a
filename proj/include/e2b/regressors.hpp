#pragma once

// Weighted causal-response estimators and their derivatives with respect to
// the sample weights. Both estimators depend on the weights only through
// w / sum(w).

#include <Eigen/Dense>

#include <cmath>
#include <string>

#include "e2b/data_model.hpp"
#include "e2b/error.hpp"

namespace e2b {

struct ResponseCurve {
  Vector grid;
  Vector mu_hat;
  Matrix members;  // grid x members, empty unless an ensemble produced it
  Vector member_sd;
};

inline Vector uniform_grid(double lo, double hi, Index m) {
  if (m < 2) throw Error(ErrorKind::config, "grid needs at least 2 points");
  return Vector::LinSpaced(m, lo, hi);
}

// ---------------------------------------------------------------------------
// Weighted least squares

struct WlsResult {
  double slope = 0.0;
  Vector d_slope_dw;
};

// Slope of y on [1, a]: sum w ã ỹ / sum w ã², with ã, ỹ centered at their
// weighted means. d slope / d w_i = ã_i r_i / sum w ã², where r is the
// weighted residual.
inline WlsResult wls_slope(const Vector& a, const Vector& y, const Vector& w) {
  if (a.size() != y.size() || a.size() != w.size())
    throw Error(ErrorKind::shape, "wls: a, y and w lengths differ");
  const double sw = w.sum();
  const double a_bar = w.dot(a) / sw;
  const double y_bar = w.dot(y) / sw;
  const Vector ac = a.array() - a_bar;
  const Vector yc = y.array() - y_bar;
  const double saa = w.dot(ac.cwiseProduct(ac));
  if (saa / sw < 1e-12) throw Error(ErrorKind::degenerate, "weighted variance of a is zero");
  WlsResult out;
  out.slope = w.dot(ac.cwiseProduct(yc)) / saa;
  const Vector resid = yc - out.slope * ac;
  out.d_slope_dw = ac.cwiseProduct(resid) / saa;
  return out;
}

// Slope on a in the regression of y on [1, a, x]. With X the design and
// beta = (X'WX)^{-1} X'Wy, d beta / d w_i = (X'WX)^{-1} x_i r_i.
inline WlsResult wls_slope_adjusted(const Vector& a, const Vector& y, const Matrix& x,
                                    const Vector& w) {
  const Index n = a.size();
  if (y.size() != n || w.size() != n || x.rows() != n)
    throw Error(ErrorKind::shape, "wls: a, y, x and w sizes differ");
  Matrix X(n, 2 + x.cols());
  X.col(0).setOnes();
  X.col(1) = a;
  X.rightCols(x.cols()) = x;
  const Matrix XtW = X.transpose() * w.asDiagonal();
  const Matrix A = XtW * X;
  Eigen::LDLT<Matrix> ldlt(A);
  if (ldlt.info() != Eigen::Success || ldlt.rcond() < 1e-14)
    throw Error(ErrorKind::degenerate, "weighted design matrix is singular");
  const Vector beta = ldlt.solve(XtW * y);
  const Vector resid = y - X * beta;
  Vector e1 = Vector::Zero(X.cols());
  e1[1] = 1.0;
  const Vector row = ldlt.solve(e1);  // A symmetric
  WlsResult out;
  out.slope = beta[1];
  out.d_slope_dw = (X * row).cwiseProduct(resid);
  return out;
}

// ---------------------------------------------------------------------------
// Nadaraya-Watson kernel regression

struct KernelOptions {
  double bandwidth = 0.0;   // > 0 fixes the bandwidth
  double multiplier = 1.0;  // applied to Silverman's rule when bandwidth == 0

  double resolve(const Vector& a) const {
    const double h = bandwidth > 0.0 ? bandwidth : multiplier * silverman_bandwidth(a);
    if (!(h > 0.0) || !std::isfinite(h))
      throw Error(ErrorKind::degenerate, "kernel bandwidth must be positive");
    return h;
  }
};

// Gaussian kernel weights K_h(g - a_i), grid x n.
inline Matrix kernel_matrix(const Vector& a, const Vector& grid, double h) {
  Matrix K(grid.size(), a.size());
  const double norm = 1.0 / (h * std::sqrt(2.0 * std::numbers::pi));
  for (Index i = 0; i < a.size(); ++i)
    for (Index g = 0; g < grid.size(); ++g) {
      const double u = (grid[g] - a[i]) / h;
      K(g, i) = norm * std::exp(-0.5 * u * u);
    }
  return K;
}

// Fixed (a, grid, h): repeated evaluations for many (w, y) pairs share the
// kernel matrix.
class KernelRegressor {
 public:
  KernelRegressor(const Vector& a, Vector grid, double bandwidth)
      : grid_(std::move(grid)), bandwidth_(bandwidth), K_(kernel_matrix(a, grid_, bandwidth)) {}

  const Vector& grid() const { return grid_; }
  double bandwidth() const { return bandwidth_; }
  const Matrix& kernel() const { return K_; }

  Vector denominators(const Vector& w) const {
    Vector den = K_ * w;
    for (Index g = 0; g < den.size(); ++g)
      if (!(den[g] >= 1e-12 * w.sum()))
        throw Error(ErrorKind::sparse_region,
                    "kernel denominator below 1e-12 at grid point " + format_double(grid_[g]));
    return den;
  }

  Vector estimate(const Vector& w, const Vector& y) const {
    const Vector den = denominators(w);
    return (K_ * w.cwiseProduct(y)).cwiseQuotient(den);
  }

  // d mu(g) / d w_i = K_gi (y_i - mu(g)) / den_g
  Matrix derivative(const Vector& w, const Vector& y, const Vector& mu) const {
    const Vector den = denominators(w);
    Matrix D = K_;
    for (Index g = 0; g < D.rows(); ++g)
      D.row(g) = (K_.row(g).array() * (y.transpose().array() - mu[g])) / den[g];
    return D;
  }

  // Mean squared error against `truth` on the grid and its gradient in w,
  // without forming the grid x n derivative.
  double mse_and_grad(const Vector& w, const Vector& y, const Vector& truth,
                      Vector* grad) const {
    const Vector den = denominators(w);
    const Vector mu = (K_ * w.cwiseProduct(y)).cwiseQuotient(den);
    const Vector err = mu - truth;
    const double m = static_cast<double>(grid_.size());
    if (grad) {
      const Vector r = (2.0 / m) * err.cwiseQuotient(den);
      *grad = (K_.transpose() * r).cwiseProduct(y) - K_.transpose() * r.cwiseProduct(mu);
    }
    return err.squaredNorm() / m;
  }

 private:
  Vector grid_;
  double bandwidth_;
  Matrix K_;
};

struct KernelCurveResult {
  ResponseCurve curve;
  Matrix d_mu_dw;  // grid x n
};

inline KernelCurveResult kernel_curve(const Vector& a, const Vector& y, const Vector& w,
                                      const Vector& grid, const KernelOptions& opts = {}) {
  if (a.size() != y.size() || a.size() != w.size())
    throw Error(ErrorKind::shape, "kernel_curve: a, y and w lengths differ");
  const KernelRegressor reg(a, grid, opts.resolve(a));
  KernelCurveResult out;
  out.curve.grid = grid;
  out.curve.mu_hat = reg.estimate(w, y);
  out.d_mu_dw = reg.derivative(w, y, out.curve.mu_hat);
  return out;
}

// ---------------------------------------------------------------------------
// Losses

enum class LossMode {
  linear,         // (beta_hat - beta)^2
  curve,          // mean squared error over the grid
  linear_report,  // |beta_hat - beta|
  curve_report,   // root mean squared error over the grid
};

inline double evaluation_loss(const Vector& estimate, const Vector& truth, LossMode mode) {
  if (estimate.size() != truth.size()) throw Error(ErrorKind::shape, "loss: size mismatch");
  switch (mode) {
    case LossMode::linear:
      return (estimate - truth).squaredNorm();
    case LossMode::linear_report:
      return (estimate - truth).cwiseAbs().sum();
    case LossMode::curve:
      return (estimate - truth).squaredNorm() / static_cast<double>(estimate.size());
    case LossMode::curve_report:
      return std::sqrt((estimate - truth).squaredNorm() / static_cast<double>(estimate.size()));
  }
  return 0.0;
}

inline double evaluation_loss(double estimate, double truth, LossMode mode) {
  return evaluation_loss(Vector::Constant(1, estimate), Vector::Constant(1, truth), mode);
}

}  // namespace e2b
