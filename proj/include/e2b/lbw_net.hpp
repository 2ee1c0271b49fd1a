#pragma once

// Log-base-weight network
//
//   ell(z) = c z + dense3(elu(layer_norm(dense2(tanh(dense1(z))))))
//
// dense1: 1 -> h with bias, dense2: h -> h and dense3: h -> 1 without bias,
// skip term c z without bias. Forward and backward are written out by hand
// over a batch of n scalar inputs.

#include <Eigen/Dense>
#include <json.hpp>

#include <cmath>
#include <fstream>
#include <string>

#include "e2b/error.hpp"
#include "e2b/rng.hpp"

namespace e2b {

inline constexpr double kLayerNormEps = 1e-5;

struct LbwNetParams {
  double c = 0.0;
  Eigen::VectorXd W1;        // h
  Eigen::VectorXd b1;        // h
  Eigen::MatrixXd W2;        // h x h
  Eigen::VectorXd ln_gain;   // h
  Eigen::VectorXd ln_bias;   // h
  Eigen::RowVectorXd W3;     // 1 x h

  Eigen::Index hidden() const { return W1.size(); }

  static LbwNetParams zeros(Eigen::Index h) {
    if (h < 1) throw Error(ErrorKind::config, "hidden width must be >= 1");
    LbwNetParams p;
    p.W1 = Eigen::VectorXd::Zero(h);
    p.b1 = Eigen::VectorXd::Zero(h);
    p.W2 = Eigen::MatrixXd::Zero(h, h);
    p.ln_gain = Eigen::VectorXd::Zero(h);
    p.ln_bias = Eigen::VectorXd::Zero(h);
    p.W3 = Eigen::RowVectorXd::Zero(h);
    return p;
  }

  Eigen::Index size() const { return 1 + 3 * hidden() + hidden() * hidden() + 2 * hidden(); }

  Eigen::VectorXd flatten() const {
    const Eigen::Index h = hidden();
    Eigen::VectorXd v(size());
    Eigen::Index o = 0;
    v[o++] = c;
    v.segment(o, h) = W1; o += h;
    v.segment(o, h) = b1; o += h;
    v.segment(o, h * h) = Eigen::Map<const Eigen::VectorXd>(W2.data(), h * h); o += h * h;
    v.segment(o, h) = ln_gain; o += h;
    v.segment(o, h) = ln_bias; o += h;
    v.segment(o, h) = W3.transpose();
    return v;
  }

  void unflatten(const Eigen::VectorXd& v) {
    const Eigen::Index h = hidden();
    if (v.size() != size()) throw Error(ErrorKind::shape, "parameter vector has wrong length");
    Eigen::Index o = 0;
    c = v[o++];
    W1 = v.segment(o, h); o += h;
    b1 = v.segment(o, h); o += h;
    W2 = Eigen::Map<const Eigen::MatrixXd>(v.data() + o, h, h); o += h * h;
    ln_gain = v.segment(o, h); o += h;
    ln_bias = v.segment(o, h); o += h;
    W3 = v.segment(o, h).transpose();
  }

  bool operator==(const LbwNetParams& o) const {
    return hidden() == o.hidden() && flatten() == o.flatten();
  }
};

// Dense layers uniform in +-1/sqrt(fan_in); c = 0, layer norm gain 1 and
// offset 0. dense3 starts at zero so the initial network is constant and the
// first weights are exactly the entropy-balancing weights.
inline LbwNetParams init_lbw_net(Eigen::Index h, std::uint64_t seed) {
  LbwNetParams p = LbwNetParams::zeros(h);
  Stream rng(seed, StreamId::net_init);
  for (Eigen::Index j = 0; j < h; ++j) p.W1[j] = rng.uniform(-1.0, 1.0);
  for (Eigen::Index j = 0; j < h; ++j) p.b1[j] = rng.uniform(-1.0, 1.0);
  const double bound = 1.0 / std::sqrt(static_cast<double>(h));
  for (Eigen::Index j = 0; j < h; ++j)
    for (Eigen::Index k = 0; k < h; ++k) p.W2(j, k) = rng.uniform(-bound, bound);
  p.ln_gain.setOnes();
  return p;
}

struct LbwTape {
  Eigen::VectorXd z;
  Eigen::MatrixXd tanh_out;   // h x n
  Eigen::MatrixXd normed;     // h x n, layer-norm output before gain/offset
  Eigen::RowVectorXd inv_std; // per example
  Eigen::MatrixXd pre_elu;    // h x n
  Eigen::MatrixXd elu_out;    // h x n
};

struct LbwForward {
  Eigen::VectorXd ell;
  LbwTape tape;
};

inline LbwForward lbw_forward(const LbwNetParams& p, const Eigen::VectorXd& z) {
  LbwForward out;
  LbwTape& t = out.tape;
  t.z = z;
  t.tanh_out = ((p.W1 * z.transpose()).colwise() + p.b1).array().tanh();
  const Eigen::MatrixXd d2 = p.W2 * t.tanh_out;
  const Eigen::RowVectorXd mean = d2.colwise().mean();
  const Eigen::MatrixXd centered = d2.rowwise() - mean;
  const Eigen::RowVectorXd var = centered.array().square().colwise().mean();
  t.inv_std = (var.array() + kLayerNormEps).rsqrt();
  t.normed = centered.array().rowwise() * t.inv_std.array();
  t.pre_elu = (t.normed.array().colwise() * p.ln_gain.array()).colwise() + p.ln_bias.array();
  t.elu_out = t.pre_elu.unaryExpr([](double v) { return v > 0.0 ? v : std::expm1(v); });
  out.ell = p.c * z + (p.W3 * t.elu_out).transpose();
  return out;
}

struct LbwGrad {
  LbwNetParams params;
  Eigen::VectorXd z;
};

inline LbwGrad lbw_backward(const LbwNetParams& p, const LbwTape& t,
                            const Eigen::VectorXd& dL_dell) {
  const Eigen::Index h = p.hidden();
  const Eigen::Index n = t.z.size();
  if (dL_dell.size() != n || t.tanh_out.rows() != h || t.tanh_out.cols() != n)
    throw Error(ErrorKind::shape, "tape does not match parameters or upstream gradient");

  LbwGrad g;
  g.params = LbwNetParams::zeros(h);
  const Eigen::RowVectorXd up = dL_dell.transpose();

  g.params.c = dL_dell.dot(t.z);
  g.params.W3 = up * t.elu_out.transpose();

  // d elu
  Eigen::MatrixXd d_elu = p.W3.transpose() * up;  // h x n
  const Eigen::MatrixXd elu_grad =
      t.pre_elu.unaryExpr([](double v) { return v > 0.0 ? 1.0 : std::exp(v); });
  const Eigen::MatrixXd d_pre = d_elu.cwiseProduct(elu_grad);

  g.params.ln_bias = d_pre.rowwise().sum();
  g.params.ln_gain = d_pre.cwiseProduct(t.normed).rowwise().sum();

  // layer norm over the h units of each example
  const Eigen::MatrixXd d_norm = d_pre.array().colwise() * p.ln_gain.array();
  const Eigen::RowVectorXd mean_d = d_norm.colwise().mean();
  const Eigen::RowVectorXd mean_dx = d_norm.cwiseProduct(t.normed).colwise().mean();
  Eigen::MatrixXd d_d2 = d_norm.rowwise() - mean_d;
  d_d2 -= (t.normed.array().rowwise() * mean_dx.array()).matrix();
  d_d2 = d_d2.array().rowwise() * t.inv_std.array();

  g.params.W2 = d_d2 * t.tanh_out.transpose();
  const Eigen::MatrixXd d_tanh = p.W2.transpose() * d_d2;
  const Eigen::MatrixXd d_h1 =
      d_tanh.cwiseProduct((1.0 - t.tanh_out.array().square()).matrix());

  g.params.b1 = d_h1.rowwise().sum();
  g.params.W1 = d_h1 * t.z;
  g.z = p.c * dL_dell + (p.W1.transpose() * d_h1).transpose();
  return g;
}

// ---------------------------------------------------------------------------
// Checkpoint: JSON document
//   {"format": "e2b-lbw-net", "version": 1, "hidden": h,
//    "tensors": {name: {"shape": [...], "data": [...]}, ...}}
// Matrices are stored row-major.

inline nlohmann::json lbw_to_json(const LbwNetParams& p) {
  const auto h = static_cast<std::size_t>(p.hidden());
  auto vec = [](const auto& v) {
    std::vector<double> out(static_cast<std::size_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) out[static_cast<std::size_t>(i)] = v[i];
    return out;
  };
  std::vector<double> w2;
  for (Eigen::Index i = 0; i < p.W2.rows(); ++i)
    for (Eigen::Index j = 0; j < p.W2.cols(); ++j) w2.push_back(p.W2(i, j));
  auto tensor = [](std::vector<std::size_t> shape, std::vector<double> data) {
    nlohmann::json j = nlohmann::json::object();
    j["shape"] = shape;
    j["data"] = data;
    return j;
  };
  nlohmann::json t = nlohmann::json::object();
  t["c"] = tensor({1}, {p.c});
  t["dense1.weight"] = tensor({h, 1}, vec(p.W1));
  t["dense1.bias"] = tensor({h}, vec(p.b1));
  t["dense2.weight"] = tensor({h, h}, w2);
  t["layer_norm.weight"] = tensor({h}, vec(p.ln_gain));
  t["layer_norm.bias"] = tensor({h}, vec(p.ln_bias));
  t["dense3.weight"] = tensor({1, h}, vec(p.W3));
  nlohmann::json doc = nlohmann::json::object();
  doc["format"] = "e2b-lbw-net";
  doc["version"] = 1;
  doc["hidden"] = h;
  doc["tensors"] = t;
  return doc;
}

inline LbwNetParams lbw_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "e2b-lbw-net" || j.value("version", 0) != 1)
    throw Error(ErrorKind::parse, "not an e2b-lbw-net version 1 checkpoint");
  const auto h = j.at("hidden").get<Eigen::Index>();
  LbwNetParams p = LbwNetParams::zeros(h);
  const auto& t = j.at("tensors");
  auto read = [&](const char* name, std::size_t expected) {
    auto data = t.at(name).at("data").get<std::vector<double>>();
    if (data.size() != expected)
      throw Error(ErrorKind::shape, std::string("tensor '") + name + "' has wrong size");
    return data;
  };
  const auto hs = static_cast<std::size_t>(h);
  p.c = read("c", 1)[0];
  auto w1 = read("dense1.weight", hs);
  auto b1 = read("dense1.bias", hs);
  auto w2 = read("dense2.weight", hs * hs);
  auto g = read("layer_norm.weight", hs);
  auto b = read("layer_norm.bias", hs);
  auto w3 = read("dense3.weight", hs);
  for (std::size_t i = 0; i < hs; ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    p.W1[k] = w1[i];
    p.b1[k] = b1[i];
    p.ln_gain[k] = g[i];
    p.ln_bias[k] = b[i];
    p.W3[k] = w3[i];
    for (std::size_t jx = 0; jx < hs; ++jx) p.W2(k, static_cast<Eigen::Index>(jx)) = w2[i * hs + jx];
  }
  return p;
}

inline void save_checkpoint(const std::string& path, const LbwNetParams& p) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::io, "cannot write '" + path + "'");
  out << lbw_to_json(p).dump(2) << '\n';
}

inline LbwNetParams load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open '" + path + "'");
  return lbw_from_json(nlohmann::json::parse(in));
}

}  // namespace e2b
