#pragma once

// key = value configuration files. Every TrainConfig field has a key of the
// same name; the remaining keys configure the experiment drivers. Blank
// lines and lines starting with '#' are ignored. Unknown keys are errors.

#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <string>

#include "e2b/error.hpp"
#include "e2b/experiment.hpp"
#include "e2b/train.hpp"

namespace e2b {

using ConfigMap = std::map<std::string, std::string>;

inline ConfigMap parse_config(std::istream& in) {
  ConfigMap out;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorKind::config, "config line " + std::to_string(row) + ": expected key = value");
    const std::string key = detail::trim(t.substr(0, eq));
    const std::string value = detail::trim(t.substr(eq + 1));
    if (key.empty()) throw Error(ErrorKind::config, "config line " + std::to_string(row) + ": empty key");
    out[key] = value;
  }
  return out;
}

inline ConfigMap load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorKind::config, "cannot open config file " + path);
  return parse_config(f);
}

namespace detail {

inline double config_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos == v.size() && std::isfinite(d)) return d;
  } catch (const std::exception&) {
  }
  throw Error(ErrorKind::config, "config key '" + key + "': not a number: '" + v + "'");
}

inline long long config_int(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw Error(ErrorKind::config, "config key '" + key + "': not an integer: '" + v + "'");
  return out;
}

inline bool config_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw Error(ErrorKind::config, "config key '" + key + "': not a boolean: '" + v + "'");
}

}  // namespace detail

// Applies one TrainConfig key; returns false if the key is not a TrainConfig field.
inline bool apply_train_key(TrainConfig& c, const std::string& key, const std::string& v) {
  using namespace detail;
  if (key == "max_epochs") c.max_epochs = static_cast<int>(config_int(key, v));
  else if (key == "batch_size") c.batch_size = static_cast<int>(config_int(key, v));
  else if (key == "lr") c.lr = config_double(key, v);
  else if (key == "weight_decay") c.weight_decay = config_double(key, v);
  else if (key == "validation_size") c.validation_size = static_cast<int>(config_int(key, v));
  else if (key == "validation_period") c.validation_period = static_cast<int>(config_int(key, v));
  else if (key == "patience") c.patience = static_cast<int>(config_int(key, v));
  else if (key == "hidden") c.hidden = config_int(key, v);
  else if (key == "family") c.family = parse_family(v);
  else if (key == "regressor") c.regressor = parse_regressor(v);
  else if (key == "adjust_x") c.adjust_x = config_bool(key, v);
  else if (key == "noise") {
    if (v == "homoskedastic") c.noise = NoiseKind::homoskedastic;
    else if (v == "heteroskedastic") c.noise = NoiseKind::heteroskedastic;
    else throw Error(ErrorKind::config, "noise must be homoskedastic or heteroskedastic");
  } else if (key == "basis") {
    try {
      c.basis = parse_basis_kind(v);
    } catch (const Error& e) {
      throw Error(ErrorKind::config, e.what());
    }
  } else if (key == "scaling") {
    if (v == "vector_norm") c.scaling = ProjectionScaling::vector_norm;
    else if (v == "per_sample") c.scaling = ProjectionScaling::per_sample;
    else throw Error(ErrorKind::config, "scaling must be vector_norm or per_sample");
  } else if (key == "standardize_treatment") c.standardize_treatment = config_bool(key, v);
  else if (key == "kernel_multiplier") c.kernel_multiplier = config_double(key, v);
  else if (key == "grid") {
    if (v == "fixed") c.grid = GridKind::fixed;
    else if (v == "quantile") c.grid = GridKind::quantile;
    else throw Error(ErrorKind::config, "grid must be fixed or quantile");
  } else if (key == "grid_lo") c.grid_lo = config_double(key, v);
  else if (key == "grid_hi") c.grid_hi = config_double(key, v);
  else if (key == "grid_points") c.grid_points = config_int(key, v);
  else if (key == "solver_tol") c.solver_tol = config_double(key, v);
  else if (key == "solver_max_iter") c.solver_max_iter = static_cast<int>(config_int(key, v));
  else if (key == "seed") c.seed = static_cast<std::uint64_t>(config_int(key, v));
  else return false;
  return true;
}

// Harness settings beyond TrainConfig.
struct HarnessSettings {
  int runs = 25;
  Index n = 1000;
  int members = 25;
  double trim_lo = 5.0;
  double trim_hi = 95.0;
  Index ipw_hidden = 30;
  int ipw_max_epochs = 2000;
  int ipw_patience = 20;
  bool exclude_failed = false;
};

inline bool apply_harness_key(HarnessSettings& h, const std::string& key, const std::string& v) {
  using namespace detail;
  if (key == "runs") h.runs = static_cast<int>(config_int(key, v));
  else if (key == "n") h.n = config_int(key, v);
  else if (key == "members") h.members = static_cast<int>(config_int(key, v));
  else if (key == "trim_lo") h.trim_lo = config_double(key, v);
  else if (key == "trim_hi") h.trim_hi = config_double(key, v);
  else if (key == "ipw_hidden") h.ipw_hidden = config_int(key, v);
  else if (key == "ipw_max_epochs") h.ipw_max_epochs = static_cast<int>(config_int(key, v));
  else if (key == "ipw_patience") h.ipw_patience = static_cast<int>(config_int(key, v));
  else if (key == "exclude_failed") h.exclude_failed = config_bool(key, v);
  else return false;
  return true;
}

inline void apply_config(const ConfigMap& m, TrainConfig& train, HarnessSettings& harness) {
  for (const auto& [k, v] : m)
    if (!apply_train_key(train, k, v) && !apply_harness_key(harness, k, v))
      throw Error(ErrorKind::config, "unknown config key '" + k + "'");
  train.validate();
}

}  // namespace e2b
