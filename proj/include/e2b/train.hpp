#pragma once

// End-to-end training of the log-base-weight network.
//
// Per step: ell = net(z), solve the balancing dual for the fixed constraint
// matrix G, w = softmax(-G' lambda + ell), then for a batch of pseudo
// datasets (same x and a, fresh y and a fresh known potential outcome)
// estimate the potential outcome with the weighted regressor and average the
// squared error. The gradient flows dL/dw -> dL/dell (implicit differentiation
// of the dual) -> dL/dtheta (network backward) -> Adam.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "e2b/adam.hpp"
#include "e2b/data_model.hpp"
#include "e2b/eb_solver.hpp"
#include "e2b/error.hpp"
#include "e2b/implicit_grad.hpp"
#include "e2b/ipw.hpp"
#include "e2b/lbw_net.hpp"
#include "e2b/regressors.hpp"
#include "e2b/rng.hpp"
#include "e2b/synthgen.hpp"

namespace e2b {

enum class RegressorKind { wls, kernel };

inline RegressorKind parse_regressor(const std::string& s) {
  if (s == "wls") return RegressorKind::wls;
  if (s == "kernel") return RegressorKind::kernel;
  throw Error(ErrorKind::config, "unknown regressor '" + s + "' (expected wls or kernel)");
}

enum class GridKind { fixed, quantile };

struct TrainConfig {
  int max_epochs = 200;  // training steps, one batch each
  int batch_size = 100;  // pseudo datasets per step
  double lr = 0.02;
  double weight_decay = 2.5e-5;
  int validation_size = 400;  // pseudo datasets in the validation set
  int validation_period = 10;
  int patience = 10;  // validation evaluations without improvement
  Index hidden = 10;
  PseudoFamily family = PseudoFamily::linear;
  RegressorKind regressor = RegressorKind::wls;
  bool adjust_x = false;
  NoiseKind noise = NoiseKind::homoskedastic;
  BasisKind basis = BasisKind::identity;
  ProjectionScaling scaling = ProjectionScaling::vector_norm;
  bool standardize_treatment = false;  // hermite families see (a - mean) / sd
  double kernel_multiplier = 1.0;
  GridKind grid = GridKind::fixed;
  double grid_lo = -2.0;
  double grid_hi = 2.0;
  Index grid_points = 100;
  double solver_tol = 1e-9;
  int solver_max_iter = 200;
  std::uint64_t seed = 0;

  void validate() const {
    if (max_epochs < 0 || batch_size < 1 || validation_size < 1 || validation_period < 1 ||
        patience < 1 || hidden < 1 || grid_points < 2)
      throw Error(ErrorKind::config, "training sizes must be positive");
    if (!(lr > 0.0) || weight_decay < 0.0 || !(kernel_multiplier > 0.0))
      throw Error(ErrorKind::config, "lr and kernel multiplier must be positive");
    if (grid == GridKind::fixed && !(grid_lo < grid_hi))
      throw Error(ErrorKind::config, "grid_lo must be below grid_hi");
  }

  SolverOptions solver() const {
    SolverOptions o;
    o.tol = solver_tol;
    o.max_iter = solver_max_iter;
    return o;
  }

  AdamOptions adam() const {
    AdamOptions o;
    o.lr = lr;
    o.weight_decay = weight_decay;
    return o;
  }
};

// Network input: log density standardized to zero mean and unit variance.
inline Vector standardize(const Vector& v) {
  const double mean = v.mean();
  const double sd = v.size() > 1 ? sample_sd(v) : 0.0;
  if (!(sd > 0.0)) return Vector::Zero(v.size());
  return (v.array() - mean) / sd;
}

// Everything about one observed dataset that stays fixed during training.
class E2BContext {
 public:
  E2BContext(const Dataset& d, const TrainConfig& cfg) : data_(d), cfg_(cfg) {
    cfg.validate();
    d.validate();
    auto [dm, basis] = demean(d, BasisSpec{cfg.basis});
    problem_ = build_problem(dm, basis, Vector::Zero(d.n()));
    density_ = treatment_density(d.a);
    features_ = standardize(density_.log_p_hat);
    noise_ = estimate_noise(d, cfg.noise);
    if (cfg.standardize_treatment) {
      pseudo_.a_center = d.a.mean();
      pseudo_.a_scale = sample_sd(d.a);
    }
    pseudo_.scaling = cfg.scaling;
    if (cfg.regressor == RegressorKind::kernel) {
      grid_ = cfg.grid == GridKind::fixed
                  ? uniform_grid(cfg.grid_lo, cfg.grid_hi, cfg.grid_points)
                  : uniform_grid(quantile(d.a, 0.01), quantile(d.a, 0.99), cfg.grid_points);
      KernelOptions ko;
      ko.multiplier = cfg.kernel_multiplier;
      kernel_.emplace(d.a, grid_, ko.resolve(d.a));
    }
  }

  const Dataset& data() const { return data_; }
  const TrainConfig& config() const { return cfg_; }
  const BalancingProblem& problem() const { return problem_; }
  const DensityFeatures& density() const { return density_; }
  const Vector& features() const { return features_; }
  const NoiseModel& noise() const { return noise_; }
  const PseudoOptions& pseudo_options() const { return pseudo_; }
  const Vector& grid() const { return grid_; }
  const std::optional<KernelRegressor>& kernel() const { return kernel_; }

  DualSolution solve(const Vector& ell) const {
    return solve_dual(problem_.with_ell(ell), cfg_.solver());
  }

  PseudoDataset draw(Stream& rng) const {
    return gen_pseudo_responses(data_, noise_, cfg_.family, rng, pseudo_);
  }

  // Training loss for one pseudo dataset and optionally dL/dw.
  double loss(const Vector& w, const PseudoDataset& ps, Vector* grad) const {
    if (cfg_.regressor == RegressorKind::wls) {
      const WlsResult r = cfg_.adjust_x ? wls_slope_adjusted(data_.a, ps.y, data_.x, w)
                                        : wls_slope(data_.a, ps.y, w);
      const double err = r.slope - ps.truth.slope;
      if (grad) *grad = 2.0 * err * r.d_slope_dw;
      return err * err;
    }
    return kernel_->mse_and_grad(w, ps.y, ps.truth(grid_), grad);
  }

  // Estimate on an arbitrary response vector: the slope (wls) or the curve.
  Vector estimate(const Vector& w, const Vector& y) const {
    if (cfg_.regressor == RegressorKind::wls) {
      const WlsResult r =
          cfg_.adjust_x ? wls_slope_adjusted(data_.a, y, data_.x, w) : wls_slope(data_.a, y, w);
      return Vector::Constant(1, r.slope);
    }
    return kernel_->estimate(w, y);
  }

  Vector log_base_weights(const LbwNetParams& params) const {
    return lbw_forward(params, features_).ell;
  }

 private:
  Dataset data_;
  TrainConfig cfg_;
  BalancingProblem problem_;
  DensityFeatures density_;
  Vector features_;
  NoiseModel noise_;
  PseudoOptions pseudo_;
  Vector grid_;
  std::optional<KernelRegressor> kernel_;
};

struct TrainRecord {
  int step = 0;
  double train_loss = std::numeric_limits<double>::quiet_NaN();
  double validation_loss = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
  LbwNetParams params;          // best validation checkpoint
  LbwNetParams initial_params;
  double initial_validation = 0.0;
  double best_validation = 0.0;
  int best_step = 0;
  int steps_run = 0;
  std::vector<TrainRecord> history;
};

struct ValidationSet {
  std::vector<Vector> y;
  std::vector<Vector> truth;  // slope (size 1) or curve on the grid
};

inline ValidationSet make_validation_set(const E2BContext& ctx) {
  const TrainConfig& cfg = ctx.config();
  ValidationSet v;
  for (int i = 0; i < cfg.validation_size; ++i) {
    Stream rng(cfg.seed, StreamId::pseudo_validation, static_cast<std::uint32_t>(i));
    PseudoDataset ps = ctx.draw(rng);
    v.y.push_back(std::move(ps.y));
    v.truth.push_back(cfg.regressor == RegressorKind::wls ? Vector::Constant(1, ps.truth.slope)
                                                          : ps.truth(ctx.grid()));
  }
  return v;
}

inline double validation_loss(const E2BContext& ctx, const ValidationSet& v, const Vector& w) {
  const LossMode mode =
      ctx.config().regressor == RegressorKind::wls ? LossMode::linear : LossMode::curve;
  double total = 0.0;
  for (std::size_t i = 0; i < v.y.size(); ++i)
    total += evaluation_loss(ctx.estimate(w, v.y[i]), v.truth[i], mode);
  return total / static_cast<double>(v.y.size());
}

inline DualSolution solve_or_throw(const E2BContext& ctx, const Vector& ell, int step) {
  DualSolution sol = ctx.solve(ell);
  if (!sol.converged)
    throw Error(ErrorKind::training,
                "balancing dual did not converge at step " + std::to_string(step) +
                    " (gradient norm " + format_double(sol.grad_norm) + " after " +
                    std::to_string(sol.iterations) + " iterations)");
  return sol;
}

inline TrainResult train_e2b(const E2BContext& ctx) {
  const TrainConfig& cfg = ctx.config();
  TrainResult res;
  LbwNetParams params = init_lbw_net(cfg.hidden, cfg.seed);
  res.initial_params = params;
  Vector flat = params.flatten();
  AdamState adam(flat.size());
  const AdamOptions adam_opts = cfg.adam();
  const ValidationSet val = make_validation_set(ctx);

  double best = std::numeric_limits<double>::infinity();
  int since_best = 0;
  Vector batch_grad(ctx.data().n());
  Vector item_grad;

  auto evaluate = [&](int step) {
    const DualSolution sol = solve_or_throw(ctx, ctx.log_base_weights(params), step);
    const double v = validation_loss(ctx, val, sol.weights);
    if (step == 0) res.initial_validation = v;
    TrainRecord rec;
    rec.step = step;
    rec.validation_loss = v;
    res.history.push_back(rec);
    if (v < best) {
      best = v;
      res.params = params;
      res.best_step = step;
      since_best = 0;
    } else {
      ++since_best;
    }
  };

  int step = 0;
  for (; step < cfg.max_epochs; ++step) {
    if (step % cfg.validation_period == 0) {
      evaluate(step);
      if (since_best >= cfg.patience) break;
    }
    const LbwForward fwd = lbw_forward(params, ctx.features());
    const BalancingProblem prob = ctx.problem().with_ell(fwd.ell);
    const DualSolution sol = solve_or_throw(ctx, fwd.ell, step);

    batch_grad.setZero();
    double batch_loss = 0.0;
    for (int b = 0; b < cfg.batch_size; ++b) {
      Stream rng(cfg.seed, StreamId::pseudo_batch,
                 static_cast<std::uint32_t>(step * cfg.batch_size + b));
      const PseudoDataset ps = ctx.draw(rng);
      batch_loss += ctx.loss(sol.weights, ps, &item_grad);
      batch_grad += item_grad;
    }
    batch_loss /= cfg.batch_size;
    batch_grad /= cfg.batch_size;
    if (!std::isfinite(batch_loss))
      throw Error(ErrorKind::training, "non-finite loss at step " + std::to_string(step));

    const WeightJacobianContext jac = make_jacobian_context(prob, sol);
    const Vector dL_dell = vjp_loss_wrt_ell(prob, jac, batch_grad);
    const LbwGrad g = lbw_backward(params, fwd.tape, dL_dell);
    adam_step(adam, flat, g.params.flatten(), adam_opts);
    params.unflatten(flat);

    TrainRecord rec;
    rec.step = step;
    rec.train_loss = batch_loss;
    res.history.push_back(rec);
  }
  if (step == cfg.max_epochs && since_best < cfg.patience) evaluate(step);
  if (res.history.empty() || !std::isfinite(best)) {
    res.params = params;
    best = res.initial_validation;
  }
  res.best_validation = best;
  res.steps_run = step;
  return res;
}

inline TrainResult train_e2b(const Dataset& d, const TrainConfig& cfg) {
  const E2BContext ctx(d, cfg);
  return train_e2b(ctx);
}

}  // namespace e2b
