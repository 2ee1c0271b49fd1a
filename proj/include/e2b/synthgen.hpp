#pragma once

// Synthetic designs with known potential outcomes, the noise model fitted
// from observed residuals, and the random pseudo-response generator used for
// end-to-end training.
//
// Draw order (each item is its own stream, see rng.hpp):
//   confounders      n rows of 5 standard normals, x_i = L z_i with L L' = Sigma
//   treatment_coef   beta_xa (5 uniforms on (-1, 1))
//   treatment_noise  n normals
//   outcome_coef     beta_xy (5 normals), then beta_ay (linear) or
//                    gamma_xy (4), gamma_ay (4) (nonlinear)
//   outcome_noise    n normals

#include <Eigen/Dense>
#include <json.hpp>

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "e2b/data_model.hpp"
#include "e2b/error.hpp"
#include "e2b/rng.hpp"

namespace e2b {

using Hermite = std::array<double, 4>;

// h(z) = g0 + g1 z + g2 (z^2 - 1) + g3 (z^3 - 3 z)
inline double hermite(const Hermite& g, double z) {
  return g[0] + g[1] * z + g[2] * (z * z - 1.0) + g[3] * (z * z * z - 3.0 * z);
}

enum class DesignKind { linear, nonlinear };

// How the confounder projection is scaled inside the nonlinear outcome:
// by the Euclidean norm of the n-vector of projections, or per sample by
// its own absolute value.
enum class ProjectionScaling { vector_norm, per_sample };

struct SynthDesign {
  DesignKind kind = DesignKind::linear;
  Matrix sigma;
  Vector beta_xa;
  Vector beta_xy;
  double beta_ay = 0.0;
  Hermite gamma_xy{};
  Hermite gamma_ay{};
  double sigma_a = 0.3;
  double sigma_y = 0.5;
  ProjectionScaling scaling = ProjectionScaling::vector_norm;

  // E[y^(a)] up to the confounder offset: beta_ay * a or h_gamma_ay(a).
  double true_curve(double a) const {
    return kind == DesignKind::linear ? beta_ay * a : hermite(gamma_ay, a);
  }

  nlohmann::json to_json() const {
    auto vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    nlohmann::json j = nlohmann::json::object();
    j["design"] = kind == DesignKind::linear ? "linear" : "nonlinear";
    j["beta_xa"] = vec(beta_xa);
    j["beta_xy"] = vec(beta_xy);
    if (kind == DesignKind::linear) {
      j["beta_ay"] = beta_ay;
    } else {
      j["gamma_xy"] = std::vector<double>(gamma_xy.begin(), gamma_xy.end());
      j["gamma_ay"] = std::vector<double>(gamma_ay.begin(), gamma_ay.end());
      j["projection_scaling"] = scaling == ProjectionScaling::vector_norm ? "vector_norm"
                                                                           : "per_sample";
    }
    j["sigma_a"] = sigma_a;
    j["sigma_y"] = sigma_y;
    j["sigma_diag"] = sigma(0, 0);
    j["sigma_offdiag"] = sigma(0, 1);
    return j;
  }
};

struct SynthOptions {
  ProjectionScaling scaling = ProjectionScaling::vector_norm;
  bool zero_treatment_coef = false;  // beta_xa = 0: a independent of x
  bool zero_gamma_xy = false;        // no confounder term in the nonlinear outcome
};

struct SynthData {
  Dataset data;
  SynthDesign design;
};

inline Matrix tridiagonal_covariance(Index r, double diag = 1.0, double off = 0.2) {
  Matrix s = Matrix::Zero(r, r);
  for (Index k = 0; k < r; ++k) {
    s(k, k) = diag;
    if (k + 1 < r) s(k, k + 1) = s(k + 1, k) = off;
  }
  return s;
}

inline Vector projection_scaled(const Vector& proj, ProjectionScaling scaling) {
  if (scaling == ProjectionScaling::vector_norm) {
    const double norm = proj.norm();
    return norm > 0.0 ? Vector(proj / norm) : Vector(Vector::Zero(proj.size()));
  }
  return proj.unaryExpr([](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

namespace detail {

// Steps shared by both designs: confounders and treatment.
inline SynthData gen_confounders_and_treatment(std::uint64_t seed, Index n,
                                               const SynthOptions& opts) {
  constexpr Index r = 5;
  SynthData out;
  SynthDesign& s = out.design;
  s.sigma = tridiagonal_covariance(r);
  s.scaling = opts.scaling;
  const Matrix L = s.sigma.llt().matrixL();

  Dataset& d = out.data;
  d.x.resize(n, r);
  Stream xs(seed, StreamId::confounders);
  Vector z(r);
  for (Index i = 0; i < n; ++i) {
    for (Index k = 0; k < r; ++k) z[k] = xs.normal();
    d.x.row(i) = (L * z).transpose();
  }
  s.beta_xa.resize(r);
  Stream cs(seed, StreamId::treatment_coef);
  for (Index k = 0; k < r; ++k) s.beta_xa[k] = cs.uniform(-1.0, 1.0);
  if (opts.zero_treatment_coef) s.beta_xa.setZero();

  Stream as(seed, StreamId::treatment_noise);
  const Vector mu_a = (d.x * s.beta_xa).array().sin();
  d.a.resize(n);
  for (Index i = 0; i < n; ++i) d.a[i] = mu_a[i] + s.sigma_a * as.normal();
  for (Index k = 0; k < r; ++k) d.confounder_names.push_back("x" + std::to_string(k + 1));
  return out;
}

}  // namespace detail

inline SynthData gen_linear(std::uint64_t seed, Index n = 1000, const SynthOptions& opts = {}) {
  if (n < 2) throw Error(ErrorKind::size, "n must be >= 2");
  SynthData out = detail::gen_confounders_and_treatment(seed, n, opts);
  SynthDesign& s = out.design;
  s.kind = DesignKind::linear;
  Stream cs(seed, StreamId::outcome_coef);
  s.beta_xy.resize(5);
  for (Index k = 0; k < 5; ++k) s.beta_xy[k] = cs.normal();
  s.beta_ay = cs.normal();
  Stream ns(seed, StreamId::outcome_noise);
  Dataset& d = out.data;
  const Vector mu = d.x * s.beta_xy + s.beta_ay * d.a;
  d.y.resize(n);
  for (Index i = 0; i < n; ++i) d.y[i] = mu[i] + s.sigma_y * ns.normal();
  return out;
}

inline SynthData gen_nonlinear(std::uint64_t seed, Index n = 1000,
                               const SynthOptions& opts = {}) {
  if (n < 2) throw Error(ErrorKind::size, "n must be >= 2");
  SynthData out = detail::gen_confounders_and_treatment(seed, n, opts);
  SynthDesign& s = out.design;
  s.kind = DesignKind::nonlinear;
  Stream cs(seed, StreamId::outcome_coef);
  s.beta_xy.resize(5);
  for (Index k = 0; k < 5; ++k) s.beta_xy[k] = cs.normal();
  for (auto& g : s.gamma_xy) g = cs.normal();
  for (auto& g : s.gamma_ay) g = cs.normal();
  if (opts.zero_gamma_xy) s.gamma_xy = {0.0, 0.0, 0.0, 0.0};
  Dataset& d = out.data;
  const Vector zx = projection_scaled(d.x * s.beta_xy, s.scaling);
  Stream ns(seed, StreamId::outcome_noise);
  d.y.resize(n);
  for (Index i = 0; i < n; ++i)
    d.y[i] = hermite(s.gamma_xy, zx[i]) + hermite(s.gamma_ay, d.a[i]) + s.sigma_y * ns.normal();
  return out;
}

// Stand-in with the column layout of the county air-pollution table
// (PM2.5 treatment, CMR response, ten confounders). Confounders share one
// latent factor; the treatment is linear-Gaussian in the confounders and the
// response does not depend on the treatment, so the true curve is flat.
inline Dataset gen_nsaph_standin(std::uint64_t seed, Index n = 2132) {
  if (n < 2) throw Error(ErrorKind::size, "n must be >= 2");
  struct Column {
    const char* name;
    double mean;
    double sd;
  };
  static constexpr std::array<Column, 10> kConfounders{{
      {"healthfac", 0.18, 0.5},
      {"population", 10.78, 1.26},
      {"ses", 0.0, 0.96},
      {"unemploy", 7.85, 2.83},
      {"HH_inc", 10.69, 0.24},
      {"femaleHH", 11.92, 3.94},
      {"vacant", 14.25, 8.71},
      {"owner_occ", 71.44, 7.76},
      {"eduattain", 35.03, 7.07},
      {"pctfam_pover", 11.25, 5.2},
  }};
  constexpr Index r = static_cast<Index>(kConfounders.size());
  Dataset d;
  d.treatment_name = "PM2.5";
  d.response_name = "CMR";
  for (const auto& c : kConfounders) d.confounder_names.emplace_back(c.name);
  d.x.resize(n, r);
  d.a.resize(n);
  d.y.resize(n);
  Stream xs(seed, StreamId::confounders);
  Stream as(seed, StreamId::treatment_noise);
  Stream ys(seed, StreamId::outcome_noise);
  Matrix zs(n, r);
  for (Index i = 0; i < n; ++i) {
    const double latent = xs.normal();
    for (Index k = 0; k < r; ++k) zs(i, k) = 0.5 * latent + std::sqrt(0.75) * xs.normal();
  }
  for (Index k = 0; k < r; ++k)
    d.x.col(k) = (zs.col(k) * kConfounders[static_cast<std::size_t>(k)].sd).array() +
                 kConfounders[static_cast<std::size_t>(k)].mean;
  for (Index i = 0; i < n; ++i) {
    const double drive = 0.35 * (zs(i, 1) + zs(i, 3) - zs(i, 7));
    d.a[i] = 6.17 + 1.45 * (drive + 0.7 * as.normal());
    const double conf = 0.4 * (zs(i, 2) + zs(i, 3) - zs(i, 8));
    d.y[i] = 255.25 + 56.76 * (conf + 0.6 * ys.normal());
  }
  return d;
}

// ---------------------------------------------------------------------------
// Noise model

enum class NoiseKind { homoskedastic, heteroskedastic };

inline constexpr double kVarianceFloor = 1e-6;

struct NoiseModel {
  NoiseKind kind = NoiseKind::homoskedastic;
  double sigma = 0.0;  // homoskedastic residual sd
  double c = 0.0;      // heteroskedastic: variance = c * yhat
  std::string source;

  double sd_at(double yhat) const {
    if (kind == NoiseKind::homoskedastic) return sigma;
    return std::sqrt(std::max(c * yhat, kVarianceFloor));
  }
};

// Least squares of y on [1, x, a]. The homoskedastic model takes the residual
// sd (n - p degrees of freedom); the heteroskedastic model regresses squared
// residuals on fitted values through the origin.
inline NoiseModel estimate_noise(const Dataset& d, NoiseKind kind) {
  d.validate();
  const Index n = d.n();
  const Index p = d.r() + 2;
  if (n <= p) throw Error(ErrorKind::size, "noise fit needs n > r + 2");
  Matrix X(n, p);
  X.col(0).setOnes();
  X.middleCols(1, d.r()) = d.x;
  X.col(p - 1) = d.a;
  Eigen::ColPivHouseholderQR<Matrix> qr(X);
  if (qr.rank() < p) throw Error(ErrorKind::rank, "noise regression design is rank deficient");
  const Vector beta = qr.solve(d.y);
  const Vector fitted = X * beta;
  const Vector resid = d.y - fitted;
  NoiseModel m;
  m.kind = kind;
  m.sigma = std::sqrt(resid.squaredNorm() / static_cast<double>(n - p));
  if (kind == NoiseKind::heteroskedastic) {
    const double den = fitted.squaredNorm();
    m.c = den > 0.0 ? std::max(0.0, fitted.dot(resid.cwiseAbs2()) / den) : 0.0;
  }
  m.source = "residuals of y ~ 1 + x + a";
  return m;
}

// ---------------------------------------------------------------------------
// Pseudo responses

enum class PseudoFamily { linear, hermite, hermite_abs };

inline PseudoFamily parse_family(const std::string& s) {
  if (s == "linear") return PseudoFamily::linear;
  if (s == "hermite") return PseudoFamily::hermite;
  if (s == "hermite-abs" || s == "hermite_abs") return PseudoFamily::hermite_abs;
  throw Error(ErrorKind::config, "unknown pseudo-response family '" + s + "'");
}

inline const char* to_string(PseudoFamily f) {
  switch (f) {
    case PseudoFamily::linear: return "linear";
    case PseudoFamily::hermite: return "hermite";
    case PseudoFamily::hermite_abs: return "hermite-abs";
  }
  return "?";
}

struct PseudoOptions {
  ProjectionScaling scaling = ProjectionScaling::vector_norm;
  // Hermite families evaluate h at (a - center) / scale.
  double a_center = 0.0;
  double a_scale = 1.0;
};

// The randomly drawn potential-outcome mean a -> E[y^(a)] (for the linear
// family, without the confounder offset).
struct PotentialOutcome {
  PseudoFamily family = PseudoFamily::linear;
  double slope = 0.0;
  Hermite gamma{};
  double a_center = 0.0;
  double a_scale = 1.0;
  Vector confounder_terms;  // hermite_abs: h_xy(z_i), averaged over the sample

  double operator()(double a) const {
    if (family == PseudoFamily::linear) return slope * a;
    const double h = hermite(gamma, (a - a_center) / a_scale);
    if (family == PseudoFamily::hermite) return h;
    return (confounder_terms.array() + h).abs().mean();
  }

  Vector operator()(const Vector& grid) const {
    Vector out(grid.size());
    for (Index g = 0; g < grid.size(); ++g) out[g] = (*this)(grid[g]);
    return out;
  }
};

struct PseudoDataset {
  Vector y;
  Vector mean;  // noiseless E[y | x, a]
  PotentialOutcome truth;
};

// Redraws y for fixed (x, a). Coefficients come first from `rng`, then n
// noise normals. Linear: y = beta_xy' x + beta_ay a + e. Hermite:
// y = h_xy(scaled beta_xy' x) + h_ay(a) + e; hermite_abs wraps the sum in
// an absolute value.
inline PseudoDataset gen_pseudo_responses(const Dataset& d, const NoiseModel& noise,
                                          PseudoFamily family, Stream& rng,
                                          const PseudoOptions& opts = {}) {
  const Index n = d.n();
  const Index r = d.r();
  PseudoDataset out;
  out.truth.family = family;
  Vector beta_xy(r);
  for (Index k = 0; k < r; ++k) beta_xy[k] = rng.normal();
  const Vector proj = d.x * beta_xy;
  if (family == PseudoFamily::linear) {
    out.truth.slope = rng.normal();
    out.mean = proj + out.truth.slope * d.a;
  } else {
    Hermite gamma_xy;
    for (auto& g : gamma_xy) g = rng.normal();
    for (auto& g : out.truth.gamma) g = rng.normal();
    out.truth.a_center = opts.a_center;
    out.truth.a_scale = opts.a_scale;
    const Vector zx = projection_scaled(proj, opts.scaling);
    Vector hx(n);
    for (Index i = 0; i < n; ++i) hx[i] = hermite(gamma_xy, zx[i]);
    out.mean.resize(n);
    for (Index i = 0; i < n; ++i)
      out.mean[i] = hx[i] + hermite(out.truth.gamma, (d.a[i] - opts.a_center) / opts.a_scale);
    if (family == PseudoFamily::hermite_abs) {
      out.mean = out.mean.cwiseAbs();
      out.truth.confounder_terms = hx;
    }
  }
  out.y.resize(n);
  for (Index i = 0; i < n; ++i) out.y[i] = out.mean[i] + noise.sd_at(out.mean[i]) * rng.normal();
  return out;
}

}  // namespace e2b
