#pragma once

// Experiment drivers: the synthetic benchmark matrix (EB, E2B, IPW over
// seeded datasets), the ensemble response-curve pipeline for observed data,
// and CSV/JSON reporting.

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "e2b/data_model.hpp"
#include "e2b/eb_solver.hpp"
#include "e2b/error.hpp"
#include "e2b/ipw.hpp"
#include "e2b/lbw_net.hpp"
#include "e2b/regressors.hpp"
#include "e2b/rng.hpp"
#include "e2b/synthgen.hpp"
#include "e2b/train.hpp"

namespace e2b {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Seed-derivation tags.
enum : std::uint32_t { kTagData = 1, kTagTrain = 2, kTagIpw = 3, kTagMember = 4 };

// ---------------------------------------------------------------------------
// Small statistics helpers

inline Vector average_ranks(const Vector& v) {
  const auto n = static_cast<std::size_t>(v.size());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return v[Index(i)] < v[Index(j)]; });
  Vector ranks(v.size());
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[Index(order[j + 1])] == v[Index(order[i])]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[Index(order[k])] = r;
    i = j + 1;
  }
  return ranks;
}

inline double pearson(const Vector& a, const Vector& b) {
  const Vector ac = a.array() - a.mean();
  const Vector bc = b.array() - b.mean();
  const double den = std::sqrt(ac.squaredNorm() * bc.squaredNorm());
  return den > 0.0 ? ac.dot(bc) / den : 0.0;
}

inline double spearman(const Vector& a, const Vector& b) {
  if (a.size() != b.size() || a.size() < 2) throw Error(ErrorKind::shape, "spearman: bad sizes");
  return pearson(average_ranks(a), average_ranks(b));
}

struct MeanStderr {
  double mean = kNaN;
  double stderr_ = kNaN;
  int count = 0;
};

// Mean and sd / sqrt(count) over the finite entries.
inline MeanStderr mean_stderr(const std::vector<double>& v) {
  std::vector<double> f;
  for (double x : v)
    if (std::isfinite(x)) f.push_back(x);
  MeanStderr out;
  out.count = static_cast<int>(f.size());
  if (f.empty()) return out;
  const double m = std::accumulate(f.begin(), f.end(), 0.0) / static_cast<double>(f.size());
  out.mean = m;
  if (f.size() < 2) return out;
  double ss = 0.0;
  for (double x : f) ss += (x - m) * (x - m);
  const double sd = std::sqrt(ss / static_cast<double>(f.size() - 1));
  out.stderr_ = sd / std::sqrt(static_cast<double>(f.size()));
  return out;
}

// Runs fn(0..count-1) on up to `threads` workers. Results must be written
// to per-index slots so the outcome does not depend on scheduling. The
// first exception is rethrown after all workers finish.
inline void parallel_for(int count, int threads, const std::function<void(int)>& fn) {
  threads = std::max(1, std::min(threads, count));
  if (threads == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (int i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!first) first = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  if (first) std::rethrow_exception(first);
}

// ---------------------------------------------------------------------------
// Learned log-base-weight as a function of log density

struct LbwProfile {
  Vector log_density;  // evaluation points, increasing
  Vector ell;          // ell_theta at those points, first value shifted to 0
};

// Evaluates the trained network on `points` (log-density values) using the
// same standardization as the training features.
inline LbwProfile lbw_profile(const LbwNetParams& params, const DensityFeatures& dens,
                              const Vector& points) {
  const double mean = dens.log_p_hat.mean();
  const double sd = sample_sd(dens.log_p_hat);
  const Vector z = sd > 0.0 ? Vector((points.array() - mean) / sd) : Vector::Zero(points.size());
  LbwProfile out;
  out.log_density = points;
  out.ell = lbw_forward(params, z).ell;
  out.ell.array() -= out.ell[0];
  return out;
}

inline Vector decile_points(const Vector& v) {
  Vector out(11);
  for (Index k = 0; k <= 10; ++k) out[k] = quantile(v, static_cast<double>(k) / 10.0);
  return out;
}

struct BandRow {
  double x = 0.0;
  double median = 0.0;
  double q25 = 0.0;
  double q75 = 0.0;
};

// Row-wise median and quartiles of `members` (points x members).
inline std::vector<BandRow> quantile_band(const Vector& x, const Matrix& members) {
  std::vector<BandRow> rows;
  for (Index i = 0; i < members.rows(); ++i) {
    const Vector row = members.row(i).transpose();
    rows.push_back({x[i], quantile(row, 0.5), quantile(row, 0.25), quantile(row, 0.75)});
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Synthetic benchmark

enum class Method { eb, e2b, ipw };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::eb: return "EB";
    case Method::e2b: return "E2B";
    case Method::ipw: return "IPW";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  std::string l;
  for (char c : s) l.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (l == "eb") return Method::eb;
  if (l == "e2b") return Method::e2b;
  if (l == "ipw") return Method::ipw;
  throw Error(ErrorKind::config, "unknown method '" + s + "'");
}

inline DesignKind parse_design(const std::string& s) {
  if (s == "linear") return DesignKind::linear;
  if (s == "nonlinear") return DesignKind::nonlinear;
  throw Error(ErrorKind::config, "unknown design '" + s + "' (expected linear or nonlinear)");
}

inline const char* to_string(DesignKind d) {
  return d == DesignKind::linear ? "linear" : "nonlinear";
}

// Training defaults matched to the estimator each design is scored with.
inline TrainConfig train_defaults(DesignKind design) {
  TrainConfig c;
  if (design == DesignKind::nonlinear) {
    c.family = PseudoFamily::hermite;
    c.regressor = RegressorKind::kernel;
    c.grid = GridKind::fixed;
    c.grid_lo = -2.0;
    c.grid_hi = 2.0;
    c.grid_points = 100;
  }
  return c;
}

struct Table1Config {
  DesignKind design = DesignKind::linear;
  std::vector<Method> methods{Method::eb, Method::e2b, Method::ipw};
  int runs = 25;
  Index n = 1000;
  std::uint64_t seed = 0;
  TrainConfig train = train_defaults(DesignKind::linear);
  PropensityConfig ipw{};
  double trim_lo = 5.0;
  double trim_hi = 95.0;
  bool exclude_failed = false;
  int threads = 1;

  bool has(Method m) const { return std::find(methods.begin(), methods.end(), m) != methods.end(); }
};

struct RunResult {
  int index = 0;
  std::uint64_t data_seed = 0;
  double eb = kNaN;
  double e2b = kNaN;
  double ipw = kNaN;
  double spearman = kNaN;  // ell_theta vs log density over the sample
  LbwProfile profile;      // ell_theta at the deciles of log density
  int best_step = 0;
  int steps_run = 0;
  double initial_validation = kNaN;
  double best_validation = kNaN;
  std::string error;
  double seconds = 0.0;

  double value(Method m) const {
    return m == Method::eb ? eb : (m == Method::e2b ? e2b : ipw);
  }
};

struct MethodSummary {
  std::string name;
  double mean = kNaN;
  double stderr_ = kNaN;
};

struct ExperimentReport {
  Table1Config config;
  std::vector<RunResult> runs;
  std::vector<MethodSummary> summary;
  std::vector<BandRow> lbw_band;  // across runs, by decile index
  int negative_spearman = 0;
  int failed_runs = 0;
  double seconds = 0.0;
};

// Error metric of weights `w` on one synthetic dataset.
inline double synthetic_error(const SynthData& s, const Vector& w, const TrainConfig& cfg) {
  if (s.design.kind == DesignKind::linear) {
    const WlsResult r = cfg.adjust_x ? wls_slope_adjusted(s.data.a, s.data.y, s.data.x, w)
                                     : wls_slope(s.data.a, s.data.y, w);
    return evaluation_loss(r.slope, s.design.beta_ay, LossMode::linear_report);
  }
  const Vector grid = uniform_grid(cfg.grid_lo, cfg.grid_hi, cfg.grid_points);
  KernelOptions ko;
  ko.multiplier = cfg.kernel_multiplier;
  const KernelRegressor reg(s.data.a, grid, ko.resolve(s.data.a));
  Vector truth(grid.size());
  for (Index g = 0; g < grid.size(); ++g) truth[g] = s.design.true_curve(grid[g]);
  return evaluation_loss(reg.estimate(w, s.data.y), truth, LossMode::curve_report);
}

inline SynthData synth_dataset(DesignKind design, std::uint64_t seed, Index n,
                               ProjectionScaling scaling) {
  SynthOptions o;
  o.scaling = scaling;
  return design == DesignKind::linear ? gen_linear(seed, n, o) : gen_nonlinear(seed, n, o);
}

inline RunResult run_one(const Table1Config& cfg, int index) {
  const auto t0 = std::chrono::steady_clock::now();
  RunResult res;
  res.index = index;
  res.data_seed = derive_seed(cfg.seed, kTagData, static_cast<std::uint32_t>(index));
  const SynthData s = synth_dataset(cfg.design, res.data_seed, cfg.n, cfg.train.scaling);

  TrainConfig tc = cfg.train;
  tc.seed = derive_seed(cfg.seed, kTagTrain, static_cast<std::uint32_t>(index));
  const E2BContext ctx(s.data, tc);

  if (cfg.has(Method::eb)) {
    const DualSolution eb = solve_or_throw(ctx, Vector::Zero(cfg.n), -1);
    res.eb = synthetic_error(s, eb.weights, tc);
  }
  if (cfg.has(Method::e2b)) {
    const TrainResult tr = train_e2b(ctx);
    const Vector ell = ctx.log_base_weights(tr.params);
    const DualSolution sol = solve_or_throw(ctx, ell, tr.best_step);
    res.e2b = synthetic_error(s, sol.weights, tc);
    res.spearman = spearman(ell, ctx.density().log_p_hat);
    res.profile = lbw_profile(tr.params, ctx.density(), decile_points(ctx.density().log_p_hat));
    res.best_step = tr.best_step;
    res.steps_run = tr.steps_run;
    res.initial_validation = tr.initial_validation;
    res.best_validation = tr.best_validation;
  }
  if (cfg.has(Method::ipw)) {
    const PropensityModel pm =
        fit_propensity(s.data, derive_seed(cfg.seed, kTagIpw, static_cast<std::uint32_t>(index)),
                       cfg.ipw);
    const Vector w = winsorize(stabilized_weights(pm, s.data), cfg.trim_lo, cfg.trim_hi);
    res.ipw = synthetic_error(s, w, tc);
  }
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

inline ExperimentReport run_table1(const Table1Config& cfg) {
  if (cfg.runs < 1 || cfg.n < 2) throw Error(ErrorKind::config, "runs and n must be positive");
  cfg.train.validate();
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentReport rep;
  rep.config = cfg;
  rep.runs.resize(static_cast<std::size_t>(cfg.runs));
  parallel_for(cfg.runs, cfg.threads, [&](int i) {
    try {
      rep.runs[static_cast<std::size_t>(i)] = run_one(cfg, i);
    } catch (const Error& e) {
      if (!cfg.exclude_failed) throw;
      RunResult r;
      r.index = i;
      r.data_seed = derive_seed(cfg.seed, kTagData, static_cast<std::uint32_t>(i));
      r.error = std::string(to_string(e.kind())) + ": " + e.what();
      rep.runs[static_cast<std::size_t>(i)] = r;
    }
  });

  for (Method m : {Method::eb, Method::e2b, Method::ipw}) {
    if (!cfg.has(m)) continue;
    std::vector<double> v;
    for (const auto& r : rep.runs) v.push_back(r.value(m));
    const MeanStderr ms = mean_stderr(v);
    rep.summary.push_back({to_string(m), ms.mean, ms.stderr_});
  }
  std::vector<const RunResult*> ok;
  for (const auto& r : rep.runs) {
    if (!r.error.empty()) {
      ++rep.failed_runs;
      continue;
    }
    if (std::isfinite(r.spearman)) {
      if (r.spearman < 0.0) ++rep.negative_spearman;
      ok.push_back(&r);
    }
  }
  if (!ok.empty()) {
    const Index pts = ok.front()->profile.ell.size();
    Matrix ell(pts, static_cast<Index>(ok.size()));
    Matrix xs(pts, static_cast<Index>(ok.size()));
    for (std::size_t j = 0; j < ok.size(); ++j) {
      ell.col(Index(j)) = ok[j]->profile.ell;
      xs.col(Index(j)) = ok[j]->profile.log_density;
    }
    Vector x(pts);
    for (Index i = 0; i < pts; ++i) x[i] = quantile(Vector(xs.row(i).transpose()), 0.5);
    rep.lbw_band = quantile_band(x, ell);
  }
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

// ---------------------------------------------------------------------------
// Ensemble response curve for observed data

struct CurveConfig {
  TrainConfig train;
  int members = 25;
  Index density_points = 20;  // evaluation points for the ell_theta profile
  bool standardize_confounders = true;
  int threads = 1;
};

inline CurveConfig curve_defaults() {
  CurveConfig c;
  c.train.family = PseudoFamily::hermite_abs;
  c.train.regressor = RegressorKind::kernel;
  c.train.noise = NoiseKind::heteroskedastic;
  c.train.grid = GridKind::quantile;
  c.train.grid_points = 100;
  c.train.standardize_treatment = true;
  return c;
}

struct EnsembleCurve {
  ResponseCurve curve;     // grid, mean, members (grid x members), member sd
  Vector log_density;      // profile evaluation points
  Matrix lbw_members;      // points x members, each column starts at 0
  std::vector<BandRow> lbw_band;
  NoiseModel noise;
  double seconds = 0.0;
};

inline Dataset standardize_confounders(const Dataset& d) {
  Dataset out = d;
  for (Index k = 0; k < d.r(); ++k) {
    const double sd = sample_sd(d.x.col(k));
    const double mean = d.x.col(k).mean();
    out.x.col(k) = (d.x.col(k).array() - mean) / (sd > 0.0 ? sd : 1.0);
  }
  return out;
}

inline EnsembleCurve estimate_real_curve(const Dataset& raw, const CurveConfig& cfg) {
  if (cfg.members < 1) throw Error(ErrorKind::config, "ensemble needs at least one member");
  if (cfg.train.regressor != RegressorKind::kernel)
    throw Error(ErrorKind::config, "the response curve uses the kernel regressor");
  const auto t0 = std::chrono::steady_clock::now();
  const Dataset d = cfg.standardize_confounders ? standardize_confounders(raw) : raw;
  const E2BContext base(d, cfg.train);  // shared pieces: grid, density, noise

  EnsembleCurve out;
  out.noise = base.noise();
  out.curve.grid = base.grid();
  const Index m = cfg.members;
  out.curve.members.resize(out.curve.grid.size(), m);
  const Vector& lp = base.density().log_p_hat;
  out.log_density = Vector::LinSpaced(cfg.density_points, lp.minCoeff(), lp.maxCoeff());
  out.lbw_members.resize(cfg.density_points, m);

  parallel_for(cfg.members, cfg.threads, [&](int j) {
    TrainConfig tc = cfg.train;
    tc.seed = derive_seed(cfg.train.seed, kTagMember, static_cast<std::uint32_t>(j));
    const E2BContext ctx(d, tc);
    const TrainResult tr = train_e2b(ctx);
    const DualSolution sol = solve_or_throw(ctx, ctx.log_base_weights(tr.params), tr.best_step);
    out.curve.members.col(j) = ctx.kernel()->estimate(sol.weights, d.y);
    out.lbw_members.col(j) = lbw_profile(tr.params, ctx.density(), out.log_density).ell;
  });

  out.curve.mu_hat = out.curve.members.rowwise().mean();
  out.curve.member_sd.resize(out.curve.grid.size());
  for (Index g = 0; g < out.curve.grid.size(); ++g) {
    const Vector row = out.curve.members.row(g).transpose();
    out.curve.member_sd[g] = m > 1 ? sample_sd(row) : 0.0;
  }
  out.lbw_band = quantile_band(out.log_density, out.lbw_members);
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

// ---------------------------------------------------------------------------
// Reporting

inline nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json j = nlohmann::json::object();
  j["max_epochs"] = c.max_epochs;
  j["batch_size"] = c.batch_size;
  j["lr"] = c.lr;
  j["weight_decay"] = c.weight_decay;
  j["validation_size"] = c.validation_size;
  j["validation_period"] = c.validation_period;
  j["patience"] = c.patience;
  j["hidden"] = c.hidden;
  j["family"] = to_string(c.family);
  j["regressor"] = c.regressor == RegressorKind::wls ? "wls" : "kernel";
  j["loss"] = c.regressor == RegressorKind::wls ? "squared slope error"
                                                : "mean squared error over the grid";
  j["adjust_x"] = c.adjust_x;
  j["noise"] = c.noise == NoiseKind::homoskedastic ? "homoskedastic" : "heteroskedastic";
  j["basis"] = c.basis == BasisKind::identity ? "identity" : "poly2";
  j["scaling"] = c.scaling == ProjectionScaling::vector_norm ? "vector_norm" : "per_sample";
  j["standardize_treatment"] = c.standardize_treatment;
  j["kernel_multiplier"] = c.kernel_multiplier;
  j["grid"] = c.grid == GridKind::fixed ? "fixed" : "quantile";
  j["grid_lo"] = c.grid_lo;
  j["grid_hi"] = c.grid_hi;
  j["grid_points"] = c.grid_points;
  j["solver_tol"] = c.solver_tol;
  j["solver_max_iter"] = c.solver_max_iter;
  j["seed"] = c.seed;
  return j;
}

inline std::string csv_value(double v) { return std::isfinite(v) ? format_double(v) : "nan"; }

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::io, "cannot write " + path.string());
  f << text;
  if (!f) throw Error(ErrorKind::io, "write failed for " + path.string());
}

inline void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir))
    throw Error(ErrorKind::io, "cannot create directory " + dir.string());
}

inline std::string table1_csv(const ExperimentReport& rep) {
  std::ostringstream s;
  s << "method,mean,stderr\n";
  for (const auto& m : rep.summary)
    s << m.name << ',' << csv_value(m.mean) << ',' << csv_value(m.stderr_) << '\n';
  return s.str();
}

inline std::vector<MethodSummary> parse_table1_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != "method,mean,stderr")
    throw Error(ErrorKind::parse, "table header must be 'method,mean,stderr'");
  std::vector<MethodSummary> out;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != 3) throw Error(ErrorKind::parse, "row " + std::to_string(row) + ": 3 cells expected");
    out.push_back({cells[0], detail::parse_cell(cells[1], row, "mean"), detail::parse_cell(cells[2], row, "stderr")});
  }
  return out;
}

inline std::string band_csv(const std::vector<BandRow>& band) {
  std::ostringstream s;
  s << "log_density,median,q25,q75\n";
  for (const auto& r : band)
    s << csv_value(r.x) << ',' << csv_value(r.median) << ',' << csv_value(r.q25) << ','
      << csv_value(r.q75) << '\n';
  return s.str();
}

inline std::string runs_csv(const ExperimentReport& rep) {
  std::ostringstream s;
  s << "run,data_seed,eb,e2b,ipw,spearman,best_step,steps_run,initial_validation,best_validation,"
       "error\n";
  for (const auto& r : rep.runs) {
    std::string err = r.error;
    std::replace(err.begin(), err.end(), ',', ';');
    s << r.index << ',' << r.data_seed << ',' << csv_value(r.eb) << ',' << csv_value(r.e2b) << ','
      << csv_value(r.ipw) << ',' << csv_value(r.spearman) << ',' << r.best_step << ','
      << r.steps_run << ',' << csv_value(r.initial_validation) << ','
      << csv_value(r.best_validation) << ',' << err << '\n';
  }
  return s.str();
}

inline nlohmann::json manifest_base(const std::string& command) {
  nlohmann::json j = nlohmann::json::object();
  j["tool"] = "e2b";
  j["command"] = command;
  j["version"] = "1.0.0";
  j["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
               "." + std::to_string(EIGEN_MINOR_VERSION);
  j["compiler"] = __VERSION__;
  return j;
}

// Writes table1.csv, runs.csv, lbw_curve.csv and manifest.json into `dir`.
inline void emit_report(const ExperimentReport& rep, const std::filesystem::path& dir) {
  ensure_dir(dir);
  write_text(dir / "table1.csv", table1_csv(rep));
  write_text(dir / "runs.csv", runs_csv(rep));
  write_text(dir / "lbw_curve.csv", band_csv(rep.lbw_band));
  nlohmann::json j = manifest_base("eval-table1");
  j["design"] = to_string(rep.config.design);
  j["runs"] = rep.config.runs;
  j["n"] = rep.config.n;
  j["seed"] = rep.config.seed;
  j["train"] = to_json(rep.config.train);
  j["ipw"] = {{"hidden", rep.config.ipw.hidden},
              {"max_epochs", rep.config.ipw.max_epochs},
              {"patience", rep.config.ipw.patience},
              {"trim", {rep.config.trim_lo, rep.config.trim_hi}}};
  j["metric"] = rep.config.design == DesignKind::linear ? "absolute slope error"
                                                        : "rmse over the evaluation grid";
  j["negative_spearman_runs"] = rep.negative_spearman;
  j["failed_runs"] = rep.failed_runs;
  j["threads"] = rep.config.threads;
  j["seconds"] = rep.seconds;
  std::vector<double> per_run;
  for (const auto& r : rep.runs) per_run.push_back(r.seconds);
  j["run_seconds"] = per_run;
  write_text(dir / "manifest.json", j.dump(2) + "\n");
}

// Writes curve.csv (grid, mean, sd, one column per member), lbw_members.csv
// (one row per member and density point), lbw_curve.csv and manifest.json.
inline void emit_curve(const EnsembleCurve& c, const CurveConfig& cfg,
                       const std::filesystem::path& dir) {
  ensure_dir(dir);
  std::ostringstream s;
  s << "a,mean,sd";
  for (Index j = 0; j < c.curve.members.cols(); ++j) s << ",member_" << (j + 1);
  s << '\n';
  for (Index g = 0; g < c.curve.grid.size(); ++g) {
    s << csv_value(c.curve.grid[g]) << ',' << csv_value(c.curve.mu_hat[g]) << ','
      << csv_value(c.curve.member_sd[g]);
    for (Index j = 0; j < c.curve.members.cols(); ++j) s << ',' << csv_value(c.curve.members(g, j));
    s << '\n';
  }
  write_text(dir / "curve.csv", s.str());

  std::ostringstream m;
  m << "member,point,log_density,ell\n";
  for (Index j = 0; j < c.lbw_members.cols(); ++j)
    for (Index i = 0; i < c.lbw_members.rows(); ++i)
      m << (j + 1) << ',' << i << ',' << csv_value(c.log_density[i]) << ','
        << csv_value(c.lbw_members(i, j)) << '\n';
  write_text(dir / "lbw_members.csv", m.str());
  write_text(dir / "lbw_curve.csv", band_csv(c.lbw_band));

  nlohmann::json j = manifest_base("curve");
  j["members"] = cfg.members;
  j["train"] = to_json(cfg.train);
  j["standardize_confounders"] = cfg.standardize_confounders;
  j["noise"] = {{"kind", c.noise.kind == NoiseKind::homoskedastic ? "homoskedastic"
                                                                 : "heteroskedastic"},
                {"sigma", c.noise.sigma},
                {"c", c.noise.c},
                {"source", c.noise.source}};
  j["seconds"] = c.seconds;
  write_text(dir / "manifest.json", j.dump(2) + "\n");
}

}  // namespace e2b
