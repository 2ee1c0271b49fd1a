#pragma once

#include <Eigen/Dense>

#include <cmath>

#include "e2b/error.hpp"

namespace e2b {

struct AdamOptions {
  double lr = 0.02;
  double weight_decay = 2.5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long step = 0;

  explicit AdamState(Eigen::Index size = 0)
      : m(Eigen::VectorXd::Zero(size)), v(Eigen::VectorXd::Zero(size)) {}
};

// Adam with bias correction and coupled L2 weight decay (grad += wd * param),
// no AMSGrad.
inline void adam_step(AdamState& state, Eigen::VectorXd& params, const Eigen::VectorXd& grads,
                      const AdamOptions& opt = {}) {
  if (params.size() != grads.size() || state.m.size() != params.size())
    throw Error(ErrorKind::shape, "adam: parameter, gradient and state sizes differ");
  ++state.step;
  const Eigen::VectorXd g = grads + opt.weight_decay * params;
  state.m = opt.beta1 * state.m + (1.0 - opt.beta1) * g;
  state.v = opt.beta2 * state.v + (1.0 - opt.beta2) * g.cwiseAbs2();
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(state.step));
  const double step_size = opt.lr / bc1;
  const Eigen::VectorXd denom = (state.v.array() / bc2).sqrt() + opt.eps;
  params.array() -= step_size * state.m.array() / denom.array();
}

}  // namespace e2b
