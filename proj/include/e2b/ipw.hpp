#pragma once

// Stabilized inverse-propensity weights sw = f(a) / f(a | x) with both
// densities normal. The conditional mean is a two-layer tanh network.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "e2b/adam.hpp"
#include "e2b/data_model.hpp"
#include "e2b/eb_solver.hpp"
#include "e2b/error.hpp"
#include "e2b/rng.hpp"

namespace e2b {

struct PropensityConfig {
  Index hidden = 30;
  int max_epochs = 2000;
  int eval_period = 10;
  int patience = 20;  // evaluations without improvement
  double validation_fraction = 0.2;
  AdamOptions adam{};
};

// Two dense layers: x (standardized) -> tanh(W1 x + b1) -> w2' h + b2, on the
// standardized treatment scale.
struct MeanNetwork {
  Matrix W1;  // hidden x r
  Vector b1;
  Vector w2;
  double b2 = 0.0;

  Index size() const { return W1.size() + b1.size() + w2.size() + 1; }

  Vector flatten() const {
    Vector v(size());
    Index o = 0;
    v.segment(o, W1.size()) = Eigen::Map<const Vector>(W1.data(), W1.size()); o += W1.size();
    v.segment(o, b1.size()) = b1; o += b1.size();
    v.segment(o, w2.size()) = w2; o += w2.size();
    v[o] = b2;
    return v;
  }

  void unflatten(const Vector& v) {
    Index o = 0;
    W1 = Eigen::Map<const Matrix>(v.data(), W1.rows(), W1.cols()); o += W1.size();
    b1 = v.segment(o, b1.size()); o += b1.size();
    w2 = v.segment(o, w2.size()); o += w2.size();
    b2 = v[o];
  }

  Vector predict(const Matrix& xs) const {
    const Matrix hidden = ((W1 * xs.transpose()).colwise() + b1).array().tanh();
    return (w2.transpose() * hidden).transpose().array() + b2;
  }

  // Mean squared error on rows `xs` with targets `t`, and its gradient.
  double loss_and_grad(const Matrix& xs, const Vector& t, Vector* grad) const {
    const double n = static_cast<double>(xs.rows());
    const Matrix hidden = ((W1 * xs.transpose()).colwise() + b1).array().tanh();
    const Vector pred = (w2.transpose() * hidden).transpose().array() + b2;
    const Vector err = pred - t;
    if (grad) {
      const Vector dpred = (2.0 / n) * err;
      MeanNetwork g;
      g.w2 = hidden * dpred;
      g.b2 = dpred.sum();
      const Matrix dh = (w2 * dpred.transpose()).cwiseProduct(
          (1.0 - hidden.array().square()).matrix());
      g.W1 = dh * xs;
      g.b1 = dh.rowwise().sum();
      *grad = g.flatten();
    }
    return err.squaredNorm() / n;
  }
};

struct PropensityModel {
  double marginal_mean = 0.0;
  double marginal_sd = 1.0;
  double conditional_sd = 1.0;
  Eigen::RowVectorXd x_mean;
  Eigen::RowVectorXd x_scale;
  MeanNetwork net;
  int epochs_run = 0;
  double validation_loss = 0.0;

  Vector conditional_mean(const Matrix& x) const {
    const Matrix xs = (x.rowwise() - x_mean).array().rowwise() / x_scale.array();
    return (net.predict(xs).array() * marginal_sd + marginal_mean).matrix();
  }
};

inline PropensityModel fit_propensity(const Dataset& d, std::uint64_t seed,
                                      const PropensityConfig& cfg = {}) {
  d.validate();
  const Index n = d.n();
  const Index r = d.r();
  if (n <= 10) throw Error(ErrorKind::size, "propensity fit needs n > 10");

  PropensityModel m;
  m.marginal_mean = d.a.mean();
  m.marginal_sd = sample_sd(d.a);
  if (!(m.marginal_sd > 0.0)) throw Error(ErrorKind::degenerate, "treatment has zero variance");
  m.x_mean = d.x.colwise().mean();
  m.x_scale.resize(r);
  for (Index k = 0; k < r; ++k) {
    const double sd = sample_sd(d.x.col(k));
    m.x_scale[k] = sd > 0.0 ? sd : 1.0;
  }
  const Matrix xs = (d.x.rowwise() - m.x_mean).array().rowwise() / m.x_scale.array();
  const Vector ts = (d.a.array() - m.marginal_mean) / m.marginal_sd;

  // Seeded shuffle, last fraction held out for early stopping.
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  Stream split(seed, StreamId::propensity_split);
  for (std::size_t i = order.size() - 1; i > 0; --i)
    std::swap(order[i], order[split.below(static_cast<std::uint32_t>(i + 1))]);
  const auto n_val = std::max<Index>(1, static_cast<Index>(cfg.validation_fraction * n));
  const Index n_train = n - n_val;
  Matrix x_train(n_train, r), x_val(n_val, r);
  Vector t_train(n_train), t_val(n_val);
  for (Index i = 0; i < n; ++i) {
    const Index src = order[static_cast<std::size_t>(i)];
    if (i < n_train) {
      x_train.row(i) = xs.row(src);
      t_train[i] = ts[src];
    } else {
      x_val.row(i - n_train) = xs.row(src);
      t_val[i - n_train] = ts[src];
    }
  }

  MeanNetwork& net = m.net;
  net.W1.resize(cfg.hidden, r);
  net.b1.resize(cfg.hidden);
  net.w2.resize(cfg.hidden);
  Stream init(seed, StreamId::propensity_init);
  const double b_in = 1.0 / std::sqrt(static_cast<double>(r));
  const double b_out = 1.0 / std::sqrt(static_cast<double>(cfg.hidden));
  for (Index j = 0; j < net.W1.size(); ++j) net.W1.data()[j] = init.uniform(-b_in, b_in);
  for (Index j = 0; j < cfg.hidden; ++j) net.b1[j] = init.uniform(-b_in, b_in);
  for (Index j = 0; j < cfg.hidden; ++j) net.w2[j] = init.uniform(-b_out, b_out);
  net.b2 = 0.0;

  Vector params = net.flatten();
  Vector best = params;
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;
  AdamState state(params.size());
  Vector grad;
  int epoch = 0;
  for (; epoch < cfg.max_epochs; ++epoch) {
    net.unflatten(params);
    if (epoch % cfg.eval_period == 0) {
      const double val = net.loss_and_grad(x_val, t_val, nullptr);
      if (!std::isfinite(val)) throw Error(ErrorKind::training, "propensity training diverged");
      if (val < best_val) {
        best_val = val;
        best = params;
        since_best = 0;
      } else if (++since_best >= cfg.patience) {
        break;
      }
    }
    const double loss = net.loss_and_grad(x_train, t_train, &grad);
    if (!std::isfinite(loss)) throw Error(ErrorKind::training, "propensity training diverged");
    adam_step(state, params, grad, cfg.adam);
  }
  net.unflatten(best);
  m.epochs_run = epoch;
  m.validation_loss = best_val;

  const Vector resid = d.a - m.conditional_mean(d.x);
  m.conditional_sd = std::sqrt(resid.squaredNorm() / static_cast<double>(n));
  if (!(m.conditional_sd > 0.0)) m.conditional_sd = 1e-12;
  return m;
}

inline double normal_log_pdf(double v, double mean, double sd) {
  const double u = (v - mean) / sd;
  return -0.5 * u * u - std::log(sd) - 0.5 * std::log(2.0 * std::numbers::pi);
}

// sw_i = N(a_i; mu_a, s_a^2) / N(a_i; mu(x_i), s_{a|x}^2) in log space,
// normalized to sum 1.
inline Vector stabilized_log_ratio(double marginal_mean, double marginal_sd,
                                   const Vector& conditional_mean, double conditional_sd,
                                   const Vector& a) {
  Vector lr(a.size());
  for (Index i = 0; i < a.size(); ++i)
    lr[i] = normal_log_pdf(a[i], marginal_mean, marginal_sd) -
            normal_log_pdf(a[i], conditional_mean[i], conditional_sd);
  return lr;
}

inline Vector stabilized_weights(const PropensityModel& m, const Dataset& d) {
  return softmax(stabilized_log_ratio(m.marginal_mean, m.marginal_sd, m.conditional_mean(d.x),
                                      m.conditional_sd, d.a));
}

// Linear-interpolation quantile on sorted data: position p (n - 1).
inline double quantile_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw Error(ErrorKind::size, "quantile of empty data");
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

inline double quantile(const Vector& v, double p) {
  std::vector<double> s(v.data(), v.data() + v.size());
  std::sort(s.begin(), s.end());
  return quantile_sorted(s, p);
}

// Clip to the [lo, hi] percentiles, then renormalize.
inline Vector winsorize(const Vector& w, double lo = 5.0, double hi = 95.0) {
  if (!(lo >= 0.0 && lo <= hi && hi <= 100.0))
    throw Error(ErrorKind::config, "trim percentiles must satisfy 0 <= lo <= hi <= 100");
  std::vector<double> s(w.data(), w.data() + w.size());
  std::sort(s.begin(), s.end());
  const double qlo = quantile_sorted(s, lo / 100.0);
  const double qhi = quantile_sorted(s, hi / 100.0);
  const Vector clipped = w.cwiseMax(qlo).cwiseMin(qhi);
  return clipped / clipped.sum();
}

}  // namespace e2b
