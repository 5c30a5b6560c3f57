#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>
#include <nlohmann/json.hpp>

#include "objscope/error.hpp"
#include "objscope/format.hpp"
#include "objscope/objectives.hpp"

namespace objscope::analysis {

using Column = std::vector<std::optional<double>>;

struct PearsonResult {
  double r = 0.0;
  std::size_t n = 0;
};

// Sample Pearson coefficient over complete pairs.
inline PearsonResult pearson(std::span<const std::optional<double>> xs, std::span<const std::optional<double>> ys) {
  if (xs.size() != ys.size()) throw FormatError("pearson: columns differ in length");
  std::vector<double> a;
  std::vector<double> b;
  for (std::size_t t = 0; t < xs.size(); ++t) {
    if (xs[t] && ys[t]) {
      a.push_back(*xs[t]);
      b.push_back(*ys[t]);
    }
  }
  const std::size_t n = a.size();
  if (n < 3) throw InsufficientDataError("pearson: " + std::to_string(n) + " complete pairs, need at least 3");
  double ma = 0.0;
  double mb = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    ma += a[t];
    mb += b[t];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double sab = 0.0;
  double saa = 0.0;
  double sbb = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const double da = a[t] - ma;
    const double db = b[t] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) throw DegenerateInputError("pearson: zero variance in an input column");
  const double r = sab / std::sqrt(saa * sbb);
  return {std::clamp(r, -1.0, 1.0), n};
}

inline PearsonResult pearson(std::span<const double> xs, std::span<const double> ys) {
  Column a(xs.begin(), xs.end());
  Column b(ys.begin(), ys.end());
  return pearson(a, b);
}

// Two-tailed p-value of r under the t-distribution with n-2 degrees of freedom.
inline double pearson_p(double r, std::size_t n) {
  if (n < 3) throw InsufficientDataError("pearson_p: need n >= 3");
  if (!(std::abs(r) <= 1.0)) throw DomainError("pearson_p: |r| must not exceed 1");
  if (std::abs(r) == 1.0) return 0.0;
  if (r == 0.0) return 1.0;
  const double dof = static_cast<double>(n - 2);
  const double t = std::abs(r) * std::sqrt(dof / (1.0 - r * r));
  const boost::math::students_t dist(dof);
  return std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, t)));
}

// ---------------------------------------------------------------------------
// Objective table

struct TableRow {
  std::string environment;
  std::string agent;
  std::array<std::optional<double>, kObjectiveCount> values;
};

struct ObjectiveTable {
  std::vector<std::string> environments;  // first-appearance order
  std::vector<TableRow> rows;             // grouped by environment, agents in first-appearance order

  [[nodiscard]] Column column(Objective o, const std::string* environment = nullptr) const {
    Column c;
    for (const auto& r : rows) {
      if (environment == nullptr || r.environment == *environment) c.push_back(r.values[static_cast<std::size_t>(o)]);
    }
    return c;
  }
};

using VariantSelection = std::array<std::string, kObjectiveCount>;

inline VariantSelection default_variants() {
  VariantSelection v;
  for (std::size_t o = 0; o < kObjectiveCount; ++o) v[o] = std::string(kDefaultVariant[o]);
  return v;
}

// Pivots long-format rows into one row per (environment, agent), keeping the
// selected variant of each objective. Absent or NA values stay missing.
inline ObjectiveTable build_table(const std::vector<ObjectiveRow>& rows,
                                  const VariantSelection& variants = default_variants()) {
  ObjectiveTable t;
  std::map<std::pair<std::string, std::string>, std::size_t> index;
  std::map<std::string, std::vector<std::string>> agents;
  for (const auto& r : rows) {
    if (std::find(t.environments.begin(), t.environments.end(), r.environment) == t.environments.end()) {
      t.environments.push_back(r.environment);
    }
    auto& list = agents[r.environment];
    if (std::find(list.begin(), list.end(), r.agent) == list.end()) list.push_back(r.agent);
  }
  for (const auto& env : t.environments) {
    for (const auto& agent : agents[env]) {
      index[{env, agent}] = t.rows.size();
      t.rows.push_back({env, agent, {}});
    }
  }
  for (const auto& r : rows) {
    const auto o = static_cast<std::size_t>(r.objective);
    if (r.variant != variants[o]) continue;
    auto& slot = t.rows[index.at({r.environment, r.agent})].values[o];
    if (slot && r.value) {
      throw FormatError("objective table: duplicate value for " + r.environment + "/" + r.agent + "/" +
                        std::string(objective_name(r.objective)));
    }
    if (r.value) slot = r.value;
  }
  return t;
}

// ---------------------------------------------------------------------------
// Per-environment normalization

enum class Scheme { raw, minmax, zscore };

inline std::string_view scheme_name(Scheme s) {
  switch (s) {
    case Scheme::raw: return "raw";
    case Scheme::minmax: return "minmax";
    case Scheme::zscore: return "zscore";
  }
  return "";
}

inline Scheme parse_scheme(std::string_view s) {
  if (s == "raw") return Scheme::raw;
  if (s == "minmax") return Scheme::minmax;
  if (s == "zscore") return Scheme::zscore;
  throw ConfigError("unknown normalization scheme '" + std::string(s) + "'");
}

// Pooling scheme adopted for combined matrices: it is the one of the three
// that reproduces the published pooled correlations (see select_scheme).
inline constexpr Scheme kDefaultScheme = Scheme::zscore;

// minmax maps each environment-objective column onto [0,1]; zscore subtracts
// the mean and divides by the population standard deviation. Missing values
// stay missing and do not enter the statistics.
inline ObjectiveTable normalize_per_environment(const ObjectiveTable& table, Scheme scheme) {
  if (scheme == Scheme::raw) return table;
  ObjectiveTable out = table;
  for (const auto& env : table.environments) {
    for (auto o : kObjectives) {
      const auto oi = static_cast<std::size_t>(o);
      std::vector<double> present;
      for (const auto& r : table.rows) {
        if (r.environment == env && r.values[oi]) present.push_back(*r.values[oi]);
      }
      if (present.empty()) continue;
      const auto [lo, hi] = std::minmax_element(present.begin(), present.end());
      if (*lo == *hi) {
        throw DegenerateInputError("normalize_per_environment: constant column " + env + "/" +
                                   std::string(objective_name(o)));
      }
      double shift = 0.0;
      double scale = 1.0;
      if (scheme == Scheme::minmax) {
        shift = *lo;
        scale = *hi - *lo;
      } else {
        double mean = 0.0;
        for (double v : present) mean += v;
        mean /= static_cast<double>(present.size());
        double var = 0.0;
        for (double v : present) var += (v - mean) * (v - mean);
        var /= static_cast<double>(present.size());
        shift = mean;
        scale = std::sqrt(var);
      }
      for (auto& r : out.rows) {
        if (r.environment == env && r.values[oi]) r.values[oi] = (*r.values[oi] - shift) / scale;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Correlation report

using Matrix = std::array<std::array<double, kObjectiveCount>, kObjectiveCount>;
using CountMatrix = std::array<std::array<std::size_t, kObjectiveCount>, kObjectiveCount>;

struct CorrelationBlock {
  std::string name;
  Matrix r{};
  Matrix p{};
  CountMatrix n{};
};

struct CorrelationReport {
  std::vector<CorrelationBlock> per_environment;
  CorrelationBlock combined;
  Scheme scheme = kDefaultScheme;
  std::size_t pairs = 0;  // (environment, agent) rows in the table
};

inline CorrelationBlock correlate_columns(const std::string& name,
                                          const std::array<Column, kObjectiveCount>& columns) {
  CorrelationBlock b;
  b.name = name;
  for (std::size_t a = 0; a < kObjectiveCount; ++a) {
    b.r[a][a] = 1.0;
    b.p[a][a] = 0.0;
    std::size_t diag = 0;
    for (const auto& v : columns[a]) diag += v ? 1 : 0;
    b.n[a][a] = diag;
    for (std::size_t c = a + 1; c < kObjectiveCount; ++c) {
      PearsonResult res;
      const auto where = [&] {
        return name + " " + std::string(objective_name(kObjectives[a])) + " vs " +
               std::string(objective_name(kObjectives[c])) + ": ";
      };
      try {
        res = pearson(columns[a], columns[c]);
      } catch (const InsufficientDataError& e) {
        throw InsufficientDataError(where() + e.what());
      } catch (const DegenerateInputError& e) {
        throw DegenerateInputError(where() + e.what());
      }
      b.r[a][c] = b.r[c][a] = res.r;
      b.p[a][c] = b.p[c][a] = pearson_p(res.r, res.n);
      b.n[a][c] = b.n[c][a] = res.n;
    }
  }
  return b;
}

// Per-environment matrices on raw values; the combined matrix pools the
// scheme-normalized values of every environment.
inline CorrelationReport correlation_report(const ObjectiveTable& table, Scheme scheme = kDefaultScheme) {
  CorrelationReport rep;
  rep.scheme = scheme;
  rep.pairs = table.rows.size();
  for (const auto& env : table.environments) {
    std::array<Column, kObjectiveCount> cols;
    for (auto o : kObjectives) cols[static_cast<std::size_t>(o)] = table.column(o, &env);
    if (cols[0].size() < 2) throw InsufficientDataError("environment " + env + " has fewer than 2 agents");
    rep.per_environment.push_back(correlate_columns(env, cols));
  }
  const ObjectiveTable pooled = normalize_per_environment(table, scheme);
  std::array<Column, kObjectiveCount> cols;
  for (auto o : kObjectives) cols[static_cast<std::size_t>(o)] = pooled.column(o);
  rep.combined = correlate_columns("combined", cols);
  return rep;
}

inline double max_abs_residual(const Matrix& a, const Matrix& b) {
  double worst = 0.0;
  for (std::size_t r = 0; r < kObjectiveCount; ++r) {
    for (std::size_t c = 0; c < kObjectiveCount; ++c) worst = std::max(worst, std::abs(a[r][c] - b[r][c]));
  }
  return worst;
}

struct SchemeSelection {
  Scheme best = kDefaultScheme;
  std::map<Scheme, double> max_residual;
  std::map<Scheme, Matrix> residuals;  // signed, computed - reference
};

// Tries every scheme and keeps the one whose combined matrix is closest
// (max absolute cell residual) to `reference`.
inline SchemeSelection select_scheme(const ObjectiveTable& table, const Matrix& reference) {
  SchemeSelection s;
  double best = std::numeric_limits<double>::infinity();
  for (auto scheme : {Scheme::raw, Scheme::minmax, Scheme::zscore}) {
    const auto rep = correlation_report(table, scheme);
    Matrix diff{};
    for (std::size_t r = 0; r < kObjectiveCount; ++r) {
      for (std::size_t c = 0; c < kObjectiveCount; ++c) diff[r][c] = rep.combined.r[r][c] - reference[r][c];
    }
    const double worst = max_abs_residual(rep.combined.r, reference);
    s.max_residual[scheme] = worst;
    s.residuals[scheme] = diff;
    if (worst < best) {
      best = worst;
      s.best = scheme;
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Reference matrices: environment,row,column,value (objective names)

inline std::map<std::string, Matrix> read_reference_matrices(std::istream& in) {
  std::map<std::string, Matrix> out;
  std::map<std::string, std::array<std::array<bool, kObjectiveCount>, kObjectiveCount>> seen;
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      header = true;
      continue;
    }
    const auto cells = split_csv_line(line);
    if (cells.size() != 4) throw FormatError("reference matrix: expected 4 cells per line");
    const auto r = static_cast<std::size_t>(parse_objective(cells[1]));
    const auto c = static_cast<std::size_t>(parse_objective(cells[2]));
    const auto v = parse_number(cells[3]);
    if (!v) throw FormatError("reference matrix: bad value '" + cells[3] + "'");
    out[cells[0]][r][c] = *v;
    out[cells[0]][c][r] = *v;
    seen[cells[0]][r][c] = seen[cells[0]][c][r] = true;
  }
  for (const auto& [name, mask] : seen) {
    for (const auto& row : mask) {
      for (bool b : row) {
        if (!b) throw FormatError("reference matrix " + name + " is incomplete");
      }
    }
  }
  return out;
}

inline std::map<std::string, Matrix> read_reference_matrices(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open reference matrices " + path.string());
  return read_reference_matrices(in);
}

// ---------------------------------------------------------------------------
// Emission

inline nlohmann::ordered_json matrix_json(const Matrix& m) {
  auto rows = nlohmann::ordered_json::array();
  for (const auto& row : m) {
    auto r = nlohmann::ordered_json::array();
    for (double v : row) r.push_back(round6(v));
    rows.push_back(r);
  }
  return rows;
}

inline nlohmann::ordered_json block_json(const CorrelationBlock& b) {
  nlohmann::ordered_json j;
  j["name"] = b.name;
  j["r"] = matrix_json(b.r);
  j["p"] = matrix_json(b.p);
  auto n = nlohmann::ordered_json::array();
  for (const auto& row : b.n) n.push_back(row);
  j["n_used"] = n;
  return j;
}

inline nlohmann::ordered_json report_json(const CorrelationReport& rep, const nlohmann::ordered_json& metadata = {}) {
  nlohmann::ordered_json j;
  auto objectives = nlohmann::ordered_json::array();
  for (auto o : kObjectives) objectives.push_back(objective_name(o));
  j["objectives"] = objectives;
  j["normalization"] = scheme_name(rep.scheme);
  j["pairs"] = rep.pairs;
  auto envs = nlohmann::ordered_json::array();
  for (const auto& b : rep.per_environment) envs.push_back(block_json(b));
  j["per_environment"] = envs;
  j["combined"] = block_json(rep.combined);
  j["metadata"] = metadata.is_null() ? nlohmann::ordered_json::object() : metadata;
  return j;
}

// Scheme-selection record for report metadata: per-scheme worst cell and
// the signed cell-by-cell residuals of every candidate.
inline nlohmann::ordered_json selection_json(const SchemeSelection& s) {
  nlohmann::ordered_json j;
  j["selected"] = scheme_name(s.best);
  for (const auto& [scheme, worst] : s.max_residual) j["max_abs_residual"][std::string(scheme_name(scheme))] = round6(worst);
  for (const auto& [scheme, m] : s.residuals) j["residuals"][std::string(scheme_name(scheme))] = matrix_json(m);
  return j;
}

inline void write_matrix_csv(std::ostream& out, const Matrix& m) {
  out << "objective";
  for (auto o : kObjectives) out << ',' << objective_name(o);
  out << '\n';
  for (auto o : kObjectives) {
    out << objective_name(o);
    for (double v : m[static_cast<std::size_t>(o)]) out << ',' << fixed6(v);
    out << '\n';
  }
}

// Normalized intrinsic-vs-supervised pairs per agent, one row per panel point.
inline void write_scatter_csv(std::ostream& out, const ObjectiveTable& table, Scheme scheme) {
  const ObjectiveTable norm = normalize_per_environment(table, scheme);
  out << "environment,agent,intrinsic,intrinsic_value,supervised,supervised_value\n";
  for (const auto& r : norm.rows) {
    for (auto x : {Objective::input_entropy, Objective::information_gain, Objective::empowerment}) {
      for (auto y : {Objective::task_reward, Objective::human_similarity}) {
        const auto& vx = r.values[static_cast<std::size_t>(x)];
        const auto& vy = r.values[static_cast<std::size_t>(y)];
        if (!vx || !vy) continue;
        out << r.environment << ',' << r.agent << ',' << objective_name(x) << ',' << fixed6(*vx) << ','
            << objective_name(y) << ',' << fixed6(*vy) << '\n';
      }
    }
  }
}

inline std::string file_safe(std::string s) {
  for (auto& c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
  }
  return s;
}

// Writes report.json, corr_<env>.csv, combined.csv and scatter.csv.
inline void write_report_files(const std::filesystem::path& dir, const CorrelationReport& rep,
                               const ObjectiveTable& table, const nlohmann::ordered_json& metadata = {},
                               Scheme scatter_scheme = Scheme::minmax) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "report.json", std::ios::binary);
    out << report_json(rep, metadata).dump(2) << '\n';
    if (!out) throw IoError("cannot write report.json");
  }
  for (const auto& b : rep.per_environment) {
    std::ofstream out(dir / ("corr_" + file_safe(b.name) + ".csv"), std::ios::binary);
    write_matrix_csv(out, b.r);
  }
  {
    std::ofstream out(dir / "combined.csv", std::ios::binary);
    write_matrix_csv(out, rep.combined.r);
  }
  std::ofstream out(dir / "scatter.csv", std::ios::binary);
  write_scatter_csv(out, table, scatter_scheme);
  if (!out) throw IoError("cannot write scatter.csv");
}

}  // namespace objscope::analysis
