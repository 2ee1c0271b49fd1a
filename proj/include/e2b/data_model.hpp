#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "e2b/error.hpp"

namespace e2b {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

// Confounders x (n x r), treatment a and response y.
struct Dataset {
  Matrix x;
  Vector a;
  Vector y;
  std::vector<std::string> confounder_names;
  std::string treatment_name = "a";
  std::string response_name = "y";
  bool x_demeaned = false;
  bool a_demeaned = false;

  Index n() const { return a.size(); }
  Index r() const { return x.cols(); }

  void validate() const {
    if (a.size() < 2) throw Error(ErrorKind::size, "dataset needs n >= 2 rows");
    if (x.rows() != a.size() || y.size() != a.size())
      throw Error(ErrorKind::shape, "x, a and y must have the same number of rows");
    if (x.cols() < 1) throw Error(ErrorKind::shape, "dataset needs at least one confounder");
    if (!x.allFinite() || !a.allFinite() || !y.allFinite())
      throw Error(ErrorKind::parse, "dataset contains non-finite values");
  }
};

enum class BasisKind { identity, poly2 };

struct BasisSpec {
  BasisKind kind = BasisKind::identity;

  Index dimension(Index r) const {
    return kind == BasisKind::identity ? r : r + r * (r + 1) / 2;
  }
};

inline BasisKind parse_basis_kind(const std::string& s) {
  if (s == "identity") return BasisKind::identity;
  if (s == "poly2") return BasisKind::poly2;
  throw Error(ErrorKind::config, "unknown basis '" + s + "' (expected identity or poly2)");
}

// Basis columns in fixed order: x_1..x_r, then x_j*x_k for j <= k
// lexicographically.
inline Matrix expand_basis(const Matrix& x, BasisKind kind) {
  if (kind == BasisKind::identity) return x;
  const Index r = x.cols();
  Matrix phi(x.rows(), r + r * (r + 1) / 2);
  phi.leftCols(r) = x;
  Index col = r;
  for (Index j = 0; j < r; ++j)
    for (Index k = j; k < r; ++k) phi.col(col++) = x.col(j).cwiseProduct(x.col(k));
  return phi;
}

inline std::vector<std::string> basis_labels(const std::vector<std::string>& names,
                                             BasisKind kind) {
  std::vector<std::string> labels = names;
  if (kind == BasisKind::poly2) {
    for (std::size_t j = 0; j < names.size(); ++j)
      for (std::size_t k = j; k < names.size(); ++k) labels.push_back(names[j] + "*" + names[k]);
  }
  return labels;
}

// Centered basis values phi(x) plus the means needed to map new rows.
struct BasisExpansion {
  BasisSpec spec;
  Matrix phi;
  Eigen::RowVectorXd x_mean;
  Eigen::RowVectorXd phi_mean;
  double a_mean = 0.0;
  std::vector<std::string> labels;

  Index K() const { return phi.cols(); }

  // Expansion of raw confounder rows with the stored centering.
  Matrix apply(const Matrix& x_raw) const {
    Matrix xc = x_raw.rowwise() - x_mean;
    Matrix out = expand_basis(xc, spec.kind);
    out.rowwise() -= phi_mean;
    return out;
  }
};

// x is centered, expanded, and the expansion centered again, so every basis
// column has sample mean zero. The treatment is centered as well; y is left
// untouched.
inline std::pair<Dataset, BasisExpansion> demean(const Dataset& d, BasisSpec basis = {}) {
  d.validate();
  const double n = static_cast<double>(d.n());
  BasisExpansion ex;
  ex.spec = basis;
  ex.x_mean = d.x.colwise().sum() / n;
  ex.a_mean = d.a.sum() / n;

  Dataset out = d;
  out.x = d.x.rowwise() - ex.x_mean;
  out.a = d.a.array() - ex.a_mean;
  if (out.a.cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, std::abs(ex.a_mean)))
    throw Error(ErrorKind::degenerate, "treatment has zero variance");

  Matrix phi = expand_basis(out.x, basis.kind);
  ex.phi_mean = phi.colwise().sum() / n;
  ex.phi = phi.rowwise() - ex.phi_mean;
  std::vector<std::string> names = d.confounder_names;
  if (names.size() != static_cast<std::size_t>(d.r())) {
    names.clear();
    for (Index k = 0; k < d.r(); ++k) names.push_back("x" + std::to_string(k + 1));
  }
  ex.labels = basis_labels(names, basis.kind);
  out.x_demeaned = true;
  out.a_demeaned = true;
  return {std::move(out), std::move(ex)};
}

// Stacked balance features: column i is [phi(x_i); a_i; a_i * phi(x_i)].
struct BalancingProblem {
  Matrix G;
  Vector ell;
  std::vector<std::string> labels;

  Index n() const { return G.cols(); }
  Index dim() const { return G.rows(); }

  BalancingProblem with_ell(Vector new_ell) const {
    if (new_ell.size() != G.cols())
      throw Error(ErrorKind::shape, "log-base-weight length must equal n");
    BalancingProblem p{G, std::move(new_ell), labels};
    return p;
  }
};

inline BalancingProblem build_problem(const Dataset& d, const BasisExpansion& phi,
                                      const Vector& ell) {
  if (!d.x_demeaned || !d.a_demeaned)
    throw Error(ErrorKind::precondition, "build_problem requires a demeaned dataset");
  const Index n = d.n();
  const Index K = phi.K();
  if (phi.phi.rows() != n) throw Error(ErrorKind::shape, "basis rows must equal n");
  if (ell.size() != n) throw Error(ErrorKind::shape, "log-base-weight length must equal n");

  BalancingProblem p;
  p.G.resize(2 * K + 1, n);
  p.G.topRows(K) = phi.phi.transpose();
  p.G.row(K) = d.a.transpose();
  p.G.bottomRows(K) = (phi.phi.array().colwise() * d.a.array()).transpose();
  p.ell = ell;
  for (const auto& l : phi.labels) p.labels.push_back(l);
  p.labels.push_back(d.treatment_name);
  for (const auto& l : phi.labels) p.labels.push_back(d.treatment_name + "*" + l);
  return p;
}

// Kernel density of the treatment evaluated at the sample points.
struct DensityFeatures {
  Vector p_hat;
  Vector log_p_hat;
  double bandwidth = 0.0;
};

inline double sample_sd(const Vector& v) {
  const double mean = v.mean();
  return std::sqrt((v.array() - mean).square().sum() / static_cast<double>(v.size() - 1));
}

inline double silverman_bandwidth(const Vector& a) {
  return 1.06 * sample_sd(a) * std::pow(static_cast<double>(a.size()), -0.2);
}

inline double normal_pdf(double u) {
  return std::exp(-0.5 * u * u) / std::sqrt(2.0 * std::numbers::pi);
}

inline double kde_eval(const Vector& a, double bandwidth, double t) {
  double s = 0.0;
  for (Index j = 0; j < a.size(); ++j) s += normal_pdf((t - a[j]) / bandwidth);
  return s / (static_cast<double>(a.size()) * bandwidth);
}

inline DensityFeatures treatment_density(const Vector& a,
                                         std::optional<double> bandwidth = std::nullopt) {
  if (a.size() < 2) throw Error(ErrorKind::size, "density needs n >= 2");
  DensityFeatures f;
  f.bandwidth = bandwidth ? *bandwidth : silverman_bandwidth(a);
  if (!(f.bandwidth > 0.0) || !std::isfinite(f.bandwidth))
    throw Error(ErrorKind::degenerate, "zero bandwidth: all treatments are equal");
  f.p_hat.resize(a.size());
  for (Index i = 0; i < a.size(); ++i) f.p_hat[i] = kde_eval(a, f.bandwidth, a[i]);
  f.log_p_hat = f.p_hat.array().log();
  return f;
}

// ---------------------------------------------------------------------------
// CSV ingestion

struct CsvSchema {
  std::string treatment;
  std::string response;
  std::vector<std::string> confounders;  // empty: every other column
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cell.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cell);
      cell.clear();
    } else if (c != '\r') {
      cell.push_back(c);
    }
  }
  out.push_back(cell);
  return out;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

inline double parse_cell(const std::string& raw, std::size_t row, const std::string& column) {
  const std::string s = trim(raw);
  double v = 0.0;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  if (!s.empty() && *begin == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (s.empty() || ec != std::errc() || ptr != end || !std::isfinite(v))
    throw Error(ErrorKind::parse, "non-numeric cell '" + s + "' at row " +
                                      std::to_string(row) + ", column '" + column + "'");
  return v;
}

}  // namespace detail

inline Dataset parse_csv(std::istream& in, const CsvSchema& schema) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::schema, "missing header row");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  std::vector<std::string> header = detail::split_csv_line(line);
  for (auto& h : header) h = detail::trim(h);

  auto find = [&](const std::string& name) -> std::size_t {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw Error(ErrorKind::schema, "missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t ia = find(schema.treatment);
  const std::size_t iy = find(schema.response);
  std::vector<std::size_t> ix;
  std::vector<std::string> names;
  if (schema.confounders.empty()) {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (c == ia || c == iy) continue;
      ix.push_back(c);
      names.push_back(header[c]);
    }
  } else {
    for (const auto& name : schema.confounders) {
      ix.push_back(find(name));
      names.push_back(name);
    }
  }
  if (ix.empty()) throw Error(ErrorKind::schema, "no confounder columns");

  std::vector<double> av, yv, xv;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw Error(ErrorKind::parse, "row " + std::to_string(row) + " has " +
                                        std::to_string(cells.size()) + " cells, expected " +
                                        std::to_string(header.size()));
    av.push_back(detail::parse_cell(cells[ia], row, header[ia]));
    yv.push_back(detail::parse_cell(cells[iy], row, header[iy]));
    for (std::size_t c : ix) xv.push_back(detail::parse_cell(cells[c], row, header[c]));
  }
  const auto n = static_cast<Index>(av.size());
  if (n < 2) throw Error(ErrorKind::size, "need at least 2 data rows, got " + std::to_string(n));

  Dataset d;
  const auto r = static_cast<Index>(ix.size());
  d.a = Eigen::Map<Vector>(av.data(), n);
  d.y = Eigen::Map<Vector>(yv.data(), n);
  d.x = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      xv.data(), n, r);
  d.confounder_names = std::move(names);
  d.treatment_name = schema.treatment;
  d.response_name = schema.response;
  return d;
}

inline Dataset load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open '" + path + "'");
  return parse_csv(in, schema);
}

// Shortest round-trip decimal form, so repeated runs emit identical bytes.
inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

inline void write_csv(std::ostream& out, const Dataset& d) {
  out << d.treatment_name << ',' << d.response_name;
  for (Index k = 0; k < d.r(); ++k) {
    const std::string name = static_cast<std::size_t>(k) < d.confounder_names.size()
                                 ? d.confounder_names[static_cast<std::size_t>(k)]
                                 : "x" + std::to_string(k + 1);
    out << ',' << name;
  }
  out << '\n';
  for (Index i = 0; i < d.n(); ++i) {
    out << format_double(d.a[i]) << ',' << format_double(d.y[i]);
    for (Index k = 0; k < d.r(); ++k) out << ',' << format_double(d.x(i, k));
    out << '\n';
  }
}

}  // namespace e2b
