// Command-line front end: synthetic data, balancing and IPW weights,
// training, the benchmark matrix, ensemble curves and weight variances.
//
// Exit codes: 0 success, 2 usage or configuration error, 3 numerical failure.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "e2b/e2b.hpp"
#include "e2b/gradcheck.hpp"

namespace fs = std::filesystem;
using namespace e2b;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  std::string config;
  std::string out;
  int threads = 1;
  bool seed_given = false;
};

struct DataFlags {
  std::string path;
  std::string treatment;
  std::string response;
  std::vector<std::string> confounders;

  void add(CLI::App* cmd) {
    cmd->add_option("--data", path, "input CSV with a header row")->required();
    cmd->add_option("--treatment", treatment, "treatment column")->required();
    cmd->add_option("--response", response, "response column")->required();
    cmd->add_option("--confounders", confounders, "confounder columns (default: all others)")
        ->delimiter(',');
  }

  Dataset load() const { return load_csv(path, CsvSchema{treatment, response, confounders}); }
};

// Writes to the file named by --out, or to stdout.
void emit(const std::string& out, const std::string& text) {
  if (out.empty()) {
    std::cout << text;
    return;
  }
  write_text(out, text);
}

struct Settings {
  TrainConfig train;
  HarnessSettings harness;
};

Settings settings_for(const Globals& g, TrainConfig train) {
  Settings s;
  s.train = train;
  if (!g.config.empty()) apply_config(load_config(g.config), s.train, s.harness);
  if (g.seed_given) s.train.seed = g.seed;
  s.train.validate();
  return s;
}

std::string weights_csv(const Vector& w, const Vector* extra = nullptr,
                        const char* extra_name = nullptr) {
  std::ostringstream s;
  s << "row,weight";
  if (extra) s << ',' << extra_name;
  s << '\n';
  for (Index i = 0; i < w.size(); ++i) {
    s << i << ',' << format_double(w[i]);
    if (extra) s << ',' << format_double((*extra)[i]);
    s << '\n';
  }
  return s.str();
}

std::string residual_csv(const BalancingProblem& p, const Vector& w) {
  const Vector r = p.G * w;
  std::ostringstream s;
  s << "constraint,residual\n";
  for (Index k = 0; k < r.size(); ++k) {
    std::string label = static_cast<std::size_t>(k) < p.labels.size()
                            ? p.labels[static_cast<std::size_t>(k)]
                            : "row" + std::to_string(k);
    std::replace(label.begin(), label.end(), ',', ';');
    s << label << ',' << format_double(r[k]) << '\n';
  }
  return s.str();
}

std::string with_suffix(const std::string& path, const std::string& suffix) {
  fs::path p(path);
  const std::string stem = p.stem().string();
  return (p.parent_path() / (stem + suffix)).string();
}

// ---------------------------------------------------------------------------

int cmd_synth(const Globals& g, const std::string& design, Index n, const std::string& scaling) {
  if (g.out.empty()) throw Error(ErrorKind::config, "synth needs --out FILE.csv");
  std::ostringstream csv;
  nlohmann::json truth;
  if (design == "nsaph") {
    const Dataset d = gen_nsaph_standin(g.seed, n == 0 ? 2132 : n);
    write_csv(csv, d);
    truth = {{"design", "nsaph"}, {"true_curve", "flat"}, {"seed", g.seed}};
  } else {
    SynthOptions o;
    if (scaling == "per_sample") o.scaling = ProjectionScaling::per_sample;
    else if (scaling != "vector_norm") throw Error(ErrorKind::config, "unknown --scaling");
    const DesignKind kind = parse_design(design);
    const SynthData s = kind == DesignKind::linear ? gen_linear(g.seed, n == 0 ? 1000 : n, o)
                                                   : gen_nonlinear(g.seed, n == 0 ? 1000 : n, o);
    write_csv(csv, s.data);
    truth = s.design.to_json();
    truth["seed"] = g.seed;
  }
  write_text(g.out, csv.str());
  write_text(with_suffix(g.out, ".truth.json"), truth.dump(2) + "\n");
  return 0;
}

int cmd_balance(const Globals& g, const DataFlags& df, double tol, int max_iter,
                const std::string& basis) {
  const Dataset d = df.load();
  auto [dm, ex] = demean(d, BasisSpec{parse_basis_kind(basis)});
  const BalancingProblem p = build_problem(dm, ex, Vector::Zero(d.n()));
  SolverOptions o;
  o.tol = tol;
  o.max_iter = max_iter;
  const DualSolution sol = solve_dual(p, o);
  for (const auto& w : sol.warnings) std::cerr << "warning: " << w << '\n';
  if (!sol.converged)
    throw Error(ErrorKind::degenerate, "balancing did not converge (residual " +
                                           format_double(sol.grad_norm) + ")");
  if (g.out.empty()) {
    std::cout << weights_csv(sol.weights) << '\n' << residual_csv(p, sol.weights);
  } else {
    write_text(g.out, weights_csv(sol.weights));
    write_text(with_suffix(g.out, ".residuals.csv"), residual_csv(p, sol.weights));
  }
  return 0;
}

int cmd_ipw(const Globals& g, const DataFlags& df, const std::string& trim, Index hidden,
            int max_epochs) {
  const Dataset d = df.load();
  double lo = 5.0, hi = 95.0;
  bool clip = true;
  if (trim == "none") {
    clip = false;
  } else {
    const auto comma = trim.find(',');
    if (comma == std::string::npos) throw Error(ErrorKind::config, "--trim expects lo,hi");
    try {
      lo = std::stod(trim.substr(0, comma));
      hi = std::stod(trim.substr(comma + 1));
    } catch (const std::exception&) {
      throw Error(ErrorKind::config, "--trim expects two numbers");
    }
  }
  PropensityConfig pc;
  pc.hidden = hidden;
  pc.max_epochs = max_epochs;
  const PropensityModel m = fit_propensity(d, g.seed, pc);
  Vector w = stabilized_weights(m, d);
  if (clip) w = winsorize(w, lo, hi);
  emit(g.out, weights_csv(w));
  return 0;
}

int cmd_train(const Globals& g, const DataFlags& df) {
  const Settings s = settings_for(g, TrainConfig{});
  const Dataset d = df.load();
  const E2BContext ctx(d, s.train);
  const TrainResult tr = train_e2b(ctx);
  const Vector ell = ctx.log_base_weights(tr.params);
  const DualSolution sol = solve_or_throw(ctx, ell, tr.best_step);

  const fs::path dir = g.out.empty() ? fs::path("train_out") : fs::path(g.out);
  ensure_dir(dir);
  save_checkpoint((dir / "checkpoint.json").string(), tr.params);
  write_text(dir / "weights.csv", weights_csv(sol.weights, &ell, "log_base_weight"));
  std::ostringstream h;
  h << "step,train_loss,validation_loss\n";
  for (const auto& r : tr.history)
    h << r.step << ',' << csv_value(r.train_loss) << ',' << csv_value(r.validation_loss) << '\n';
  write_text(dir / "history.csv", h.str());
  const Vector est = ctx.estimate(sol.weights, d.y);
  std::ostringstream e;
  if (s.train.regressor == RegressorKind::wls) {
    e << "slope\n" << format_double(est[0]) << '\n';
  } else {
    e << "a,mu_hat\n";
    for (Index k = 0; k < est.size(); ++k)
      e << format_double(ctx.grid()[k]) << ',' << format_double(est[k]) << '\n';
  }
  write_text(dir / "estimate.csv", e.str());
  nlohmann::json j = manifest_base("train");
  j["train"] = to_json(s.train);
  j["best_step"] = tr.best_step;
  j["steps_run"] = tr.steps_run;
  j["initial_validation"] = tr.initial_validation;
  j["best_validation"] = tr.best_validation;
  write_text(dir / "manifest.json", j.dump(2) + "\n");
  std::cout << "best validation " << format_double(tr.best_validation) << " at step "
            << tr.best_step << " (initial " << format_double(tr.initial_validation) << ")\n";
  return 0;
}

int cmd_table1(const Globals& g, const std::string& design, std::optional<int> runs,
               std::optional<Index> n, const std::vector<std::string>& methods, bool smoke) {
  const DesignKind kind = parse_design(design);
  TrainConfig base = train_defaults(kind);
  if (smoke) base.max_epochs = 40;
  Settings s;
  s.train = base;
  if (smoke) {
    s.harness.runs = 5;
    s.harness.n = 400;
  }
  if (!g.config.empty()) apply_config(load_config(g.config), s.train, s.harness);
  s.train.validate();

  Table1Config cfg;
  cfg.design = kind;
  cfg.runs = runs.value_or(s.harness.runs);
  cfg.n = n.value_or(s.harness.n);
  cfg.seed = g.seed;
  cfg.train = s.train;
  cfg.ipw.hidden = s.harness.ipw_hidden;
  cfg.ipw.max_epochs = s.harness.ipw_max_epochs;
  cfg.ipw.patience = s.harness.ipw_patience;
  cfg.trim_lo = s.harness.trim_lo;
  cfg.trim_hi = s.harness.trim_hi;
  cfg.exclude_failed = s.harness.exclude_failed;
  cfg.threads = g.threads;
  if (!methods.empty()) {
    cfg.methods.clear();
    for (const auto& m : methods) cfg.methods.push_back(parse_method(m));
  }
  const ExperimentReport rep = run_table1(cfg);
  const fs::path dir = g.out.empty() ? fs::path("table1_out") : fs::path(g.out);
  emit_report(rep, dir);
  std::cout << table1_csv(rep);
  return 0;
}

int cmd_curve(const Globals& g, const DataFlags& df, std::optional<int> members) {
  CurveConfig cc = curve_defaults();
  Settings s;
  s.train = cc.train;
  if (!g.config.empty()) apply_config(load_config(g.config), s.train, s.harness);
  s.train.seed = g.seed;
  s.train.validate();
  cc.train = s.train;
  cc.members = members.value_or(s.harness.members);
  cc.threads = g.threads;
  const Dataset d = df.load();
  const EnsembleCurve c = estimate_real_curve(d, cc);
  emit_curve(c, cc, g.out.empty() ? fs::path("curve_out") : fs::path(g.out));
  return 0;
}

Dataset take_rows(const Dataset& d, Index begin, Index count) {
  Dataset out = d;
  out.x = d.x.middleRows(begin, count);
  out.a = d.a.segment(begin, count);
  out.y = d.y.segment(begin, count);
  return out;
}

// Without --split: EB weights (ell = 0) on every row. With --split: the
// log-base-weight network is trained on the first half of the rows, and
// weights and variances are estimated on the second half only.
int cmd_variance(const Globals& g, const DataFlags& df, const std::string& basis, bool split) {
  const Dataset d = df.load();
  Index offset = 0;
  BalancingProblem p;
  DualSolution sol;
  if (split) {
    const Settings s = settings_for(g, TrainConfig{});
    const Index half = d.n() / 2;
    if (half < 2) throw Error(ErrorKind::size, "--split needs at least 4 rows");
    const E2BContext fit(take_rows(d, 0, half), s.train);
    const TrainResult tr = train_e2b(fit);
    offset = half;
    const E2BContext held(take_rows(d, half, d.n() - half), s.train);
    p = held.problem().with_ell(held.log_base_weights(tr.params));
    sol = solve_dual(p, s.train.solver());
  } else {
    auto [dm, ex] = demean(d, BasisSpec{parse_basis_kind(basis)});
    p = build_problem(dm, ex, Vector::Zero(d.n()));
    sol = solve_dual(p);
  }
  if (!sol.converged) throw Error(ErrorKind::degenerate, "balancing did not converge");
  const WeightVariance v = sandwich_variance(p, sol);
  std::ostringstream out;
  out << "row,weight,sigma2,sigma2_lambda\n";
  for (Index i = 0; i < sol.weights.size(); ++i)
    out << (offset + i) << ',' << format_double(sol.weights[i]) << ','
        << format_double(v.sigma2[i]) << ',' << format_double(v.sigma2_lambda[i]) << '\n';
  emit(g.out, out.str());
  return 0;
}

int cmd_debug_grad(const Globals& g, int configs, Index n, Index K, Index hidden) {
  double worst_vjp = 0.0, worst_jac = 0.0, worst_lbw = 0.0;
  for (int i = 0; i < configs; ++i) {
    const std::uint64_t s = derive_seed(g.seed, 9, static_cast<std::uint32_t>(i));
    const GradCheck c = check_implicit_gradient(s, n, K);
    worst_vjp = std::max(worst_vjp, c.vjp_error);
    worst_jac = std::max(worst_jac, c.jacobian_error);
    worst_lbw = std::max(worst_lbw, check_lbw_gradient(s, n, hidden));
  }
  std::printf("implicit_vjp_max_rel_error %.3e\n", worst_vjp);
  std::printf("implicit_jacobian_max_rel_error %.3e\n", worst_jac);
  std::printf("lbw_backward_max_rel_error %.3e\n", worst_lbw);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"End-to-end balancing for continuous treatments"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "root random seed")->each([&](const std::string&) {
    g.seed_given = true;
  });
  app.add_option("--config", g.config, "key=value configuration file");
  app.add_option("--out", g.out, "output file or directory");
  app.add_option("--threads", g.threads, "worker threads")->check(CLI::PositiveNumber);

  std::function<int()> run;

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  std::string design = "linear", scaling = "vector_norm";
  Index synth_n = 0;
  synth->add_option("--design", design, "linear, nonlinear or nsaph");
  synth->add_option("--n", synth_n, "rows (default 1000, nsaph 2132)");
  synth->add_option("--scaling", scaling, "vector_norm or per_sample");
  synth->callback([&] { run = [&] { return cmd_synth(g, design, synth_n, scaling); }; });

  auto* balance = app.add_subcommand("balance", "entropy-balancing weights");
  DataFlags bal_df;
  bal_df.add(balance);
  double tol = 1e-9;
  int max_iter = 200;
  std::string basis = "identity";
  balance->add_option("--tol", tol, "stopping tolerance on the balance residual");
  balance->add_option("--max-iter", max_iter, "Newton iterations");
  balance->add_option("--basis", basis, "identity or poly2");
  balance->callback([&] { run = [&] { return cmd_balance(g, bal_df, tol, max_iter, basis); }; });

  auto* ipw = app.add_subcommand("ipw", "stabilized inverse-propensity weights");
  DataFlags ipw_df;
  ipw_df.add(ipw);
  std::string trim = "5,95";
  Index ipw_hidden = 30;
  int ipw_epochs = 2000;
  ipw->add_option("--trim", trim, "percentiles lo,hi or none");
  ipw->add_option("--hidden", ipw_hidden, "hidden units of the mean network");
  ipw->add_option("--max-epochs", ipw_epochs, "training epochs");
  ipw->callback([&] { run = [&] { return cmd_ipw(g, ipw_df, trim, ipw_hidden, ipw_epochs); }; });

  auto* train = app.add_subcommand("train", "train the log-base-weight network");
  DataFlags train_df;
  train_df.add(train);
  train->callback([&] { run = [&] { return cmd_train(g, train_df); }; });

  auto* table1 = app.add_subcommand("eval-table1", "benchmark EB, E2B and IPW on synthetic data");
  std::string t_design = "linear";
  std::optional<int> t_runs;
  std::optional<Index> t_n;
  std::vector<std::string> t_methods;
  bool smoke = false;
  table1->add_option("--design", t_design, "linear or nonlinear");
  table1->add_option("--runs", t_runs, "datasets (default 25)");
  table1->add_option("--n", t_n, "rows per dataset (default 1000)");
  table1->add_option("--methods", t_methods, "subset of eb,e2b,ipw")->delimiter(',');
  table1->add_flag("--smoke", smoke, "5 runs, n = 400, 40 training steps");
  table1->callback(
      [&] { run = [&] { return cmd_table1(g, t_design, t_runs, t_n, t_methods, smoke); }; });

  auto* curve = app.add_subcommand("curve", "ensemble response curve for observed data");
  DataFlags curve_df;
  curve_df.add(curve);
  std::optional<int> members;
  curve->add_option("--members", members, "ensemble members (default 25)");
  curve->callback([&] { run = [&] { return cmd_curve(g, curve_df, members); }; });

  auto* variance = app.add_subcommand("variance", "weights with their sandwich variance");
  DataFlags var_df;
  var_df.add(variance);
  std::string var_basis = "identity";
  bool var_split = false;
  variance->add_option("--basis", var_basis, "identity or poly2 (ignored with --split)");
  variance->add_flag("--split", var_split, "train on the first half, estimate on the second");
  variance->callback(
      [&] { run = [&] { return cmd_variance(g, var_df, var_basis, var_split); }; });

  auto* debug = app.add_subcommand("debug-grad", "");  // hidden
  int configs = 5;
  Index dn = 12, dk = 2, dh = 10;
  debug->add_option("--configs", configs);
  debug->add_option("--n", dn);
  debug->add_option("--k", dk);
  debug->add_option("--hidden", dh);
  debug->callback([&] { run = [&] { return cmd_debug_grad(g, configs, dn, dk, dh); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  try {
    return run();
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
    return is_numerical(e.kind()) ? 3 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
