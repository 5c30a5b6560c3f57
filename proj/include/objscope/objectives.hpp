#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <boost/math/special_functions/digamma.hpp>

#include "objscope/error.hpp"
#include "objscope/format.hpp"
#include "objscope/transition_tensor.hpp"

namespace objscope {

// Supervised (R, S) and intrinsic (C, I, E) objectives, in report order.
enum class Objective : std::size_t { task_reward, human_similarity, input_entropy, information_gain, empowerment };
inline constexpr std::size_t kObjectiveCount = 5;
inline constexpr std::array<Objective, kObjectiveCount> kObjectives = {
    Objective::task_reward, Objective::human_similarity, Objective::input_entropy, Objective::information_gain,
    Objective::empowerment};

inline std::string_view objective_name(Objective o) {
  static constexpr std::array<std::string_view, kObjectiveCount> names = {
      "task_reward", "human_similarity", "input_entropy", "information_gain", "empowerment"};
  return names[static_cast<std::size_t>(o)];
}

inline std::string_view objective_label(Objective o) {
  static constexpr std::array<std::string_view, kObjectiveCount> labels = {
      "Task Reward", "Human Similarity", "Input Entropy", "Information Gain", "Empowerment"};
  return labels[static_cast<std::size_t>(o)];
}

inline Objective parse_objective(std::string_view s) {
  for (auto o : kObjectives) {
    if (objective_name(o) == s) return o;
  }
  throw FormatError("unknown objective '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Task reward

inline double task_reward_rate(double reward_sum, std::uint64_t steps) {
  if (steps == 0) throw EmptyDatasetError("task_reward_rate: no steps");
  return reward_sum / static_cast<double>(steps);
}

inline double task_reward_rate(std::span<const double> rewards) {
  return task_reward_rate(std::accumulate(rewards.begin(), rewards.end(), 0.0), rewards.size());
}

// ---------------------------------------------------------------------------
// Input entropy

inline double shannon_entropy(std::span<const double> dist) {
  double h = 0.0;
  for (double x : dist) {
    if (x > 0.0) h -= x * std::log(x);
  }
  return h;
}

// H[x] over the input marginal, in nats.
inline double input_entropy(const ProbTensor& p) { return shannon_entropy(marginal_inputs(p)); }

// ---------------------------------------------------------------------------
// Human similarity

inline void require_same_codebook(const ProbTensor& a, const ProbTensor& b) {
  if (a.dims().inputs != b.dims().inputs) {
    throw FormatError("human similarity: tensors were built against different codebooks (|X| " +
                      std::to_string(a.dims().inputs) + " vs " + std::to_string(b.dims().inputs) + ")");
  }
}

// Intersection over union of the marginal supports.
inline double human_similarity_jaccard(const ProbTensor& agent, const ProbTensor& human) {
  require_same_codebook(agent, human);
  const auto x = marginal_inputs(agent);
  const auto y = marginal_inputs(human);
  std::size_t both = 0;
  std::size_t either = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    both += (x[i] > 0.0 && y[i] > 0.0) ? 1 : 0;
    either += (x[i] > 0.0 || y[i] > 0.0) ? 1 : 0;
  }
  if (either == 0) throw DegenerateInputError("human similarity: both supports are empty");
  return static_cast<double>(both) / static_cast<double>(either);
}

// 1 - JSD(X, Y) / ln 2 over the input marginals.
inline double jsd_similarity(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw FormatError("jsd_similarity: distributions differ in length");
  std::vector<double> mid(x.size());
  bool any = false;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mid[i] = 0.5 * (x[i] + y[i]);
    any = any || mid[i] > 0.0;
  }
  if (!any) throw DegenerateInputError("human similarity: both supports are empty");
  const double jsd = shannon_entropy(mid) - 0.5 * (shannon_entropy(x) + shannon_entropy(y));
  return std::clamp(1.0 - jsd / std::log(2.0), 0.0, 1.0);
}

inline double human_similarity_jsd(const ProbTensor& agent, const ProbTensor& human) {
  require_same_codebook(agent, human);
  return jsd_similarity(marginal_inputs(agent), marginal_inputs(human));
}

// ---------------------------------------------------------------------------
// Dirichlet entropy and information gain

// H[Dir(alpha)] = ln B(alpha) - sum_k (alpha_k - 1) psi(alpha_k) + (alpha_0 - K) psi(alpha_0)
inline double dirichlet_entropy(std::span<const double> alpha) {
  if (alpha.size() < 2) throw DomainError("dirichlet_entropy: need at least 2 categories");
  double alpha0 = 0.0;
  double log_beta = 0.0;
  double weighted_digamma = 0.0;
  for (double a : alpha) {
    if (!(a > 0.0) || !std::isfinite(a)) throw DomainError("dirichlet_entropy: concentrations must be positive");
    alpha0 += a;
    log_beta += std::lgamma(a);
    weighted_digamma += (a - 1.0) * boost::math::digamma(a);
  }
  log_beta -= std::lgamma(alpha0);
  const auto k = static_cast<double>(alpha.size());
  return log_beta - weighted_digamma + (alpha0 - k) * boost::math::digamma(alpha0);
}

enum class InfoGainVariant { dirichlet_counts, dirichlet_unique, log_counts, sqrt_counts };
inline constexpr std::array<InfoGainVariant, 4> kInfoGainVariants = {
    InfoGainVariant::dirichlet_counts, InfoGainVariant::dirichlet_unique, InfoGainVariant::log_counts,
    InfoGainVariant::sqrt_counts};

inline std::string_view variant_name(InfoGainVariant v) {
  switch (v) {
    case InfoGainVariant::dirichlet_counts: return "dirichlet_counts";
    case InfoGainVariant::dirichlet_unique: return "dirichlet_unique";
    case InfoGainVariant::log_counts: return "log_counts";
    case InfoGainVariant::sqrt_counts: return "sqrt_counts";
  }
  return "";
}

inline InfoGainVariant parse_info_gain_variant(std::string_view s) {
  for (auto v : kInfoGainVariants) {
    if (variant_name(v) == s) return v;
  }
  throw ConfigError("unknown information gain variant '" + std::string(s) + "'");
}

// Posterior pseudo-count added to the uniform prior for one successor.
inline double concentration_increment(InfoGainVariant v, std::uint64_t count) {
  const auto n = static_cast<double>(count);
  switch (v) {
    case InfoGainVariant::dirichlet_counts: return n;
    case InfoGainVariant::dirichlet_unique: return count > 0 ? 1.0 : 0.0;
    case InfoGainVariant::log_counts: return std::log1p(n);
    case InfoGainVariant::sqrt_counts: return std::sqrt(n);
  }
  return 0.0;
}

// Sum over visited (input, action) pairs of H[Dir(1)] - H[Dir(1 + f(N_ij.))],
// each Dirichlet over all |X| successors. Unvisited successors keep alpha = 1
// and drop out of every sum, so the cost is linear in the sparse entries.
inline double information_gain(const CountTensor& counts, InfoGainVariant variant = InfoGainVariant::dirichlet_unique) {
  const std::uint32_t categories = counts.dims().inputs;
  if (categories < 2) throw DomainError("information_gain: need |X| >= 2 successor categories");
  const double k = categories;
  const double lgamma_k = std::lgamma(k);
  const auto& es = counts.entries();
  double gain = 0.0;
  std::size_t e = 0;
  while (e < es.size()) {
    const auto i = es[e].key.input;
    const auto j = es[e].key.action;
    double added = 0.0;
    double sum_lgamma = 0.0;
    double sum_weighted_digamma = 0.0;
    for (; e < es.size() && es[e].key.input == i && es[e].key.action == j; ++e) {
      const double inc = concentration_increment(variant, es[e].count);
      const double a = 1.0 + inc;
      added += inc;
      sum_lgamma += std::lgamma(a);
      sum_weighted_digamma += inc * boost::math::digamma(a);
    }
    const double alpha0 = k + added;
    gain += std::lgamma(alpha0) - lgamma_k - sum_lgamma + sum_weighted_digamma -
            added * boost::math::digamma(alpha0);
  }
  return gain;
}

// ---------------------------------------------------------------------------
// Empowerment

inline constexpr double kEmpowermentSlack = 1e-12;

// Realized one-step empowerment I[x'; a | x] = H[a|x] - H[a|x,x'], computed as
// sum_ijk P_ijk [ln p(j|i,k) - ln p(j|i)].
inline double empowerment(const ProbTensor& p) {
  const Conditionals cond(p);
  double e = 0.0;
  for (const auto& [key, pijk] : p.entries()) {
    const auto after = cond.action_given_input_successor(key.input, key.action, key.successor);
    const auto before = cond.action_given_input(key.input, key.action);
    if (!after || !before) continue;
    e += pijk * (std::log(*after) - std::log(*before));
  }
  if (e < -kEmpowermentSlack) {
    throw std::logic_error("empowerment evaluated to " + std::to_string(e) + " nats; conditional MI cannot be negative");
  }
  return e < 0.0 ? 0.0 : e;
}

// ---------------------------------------------------------------------------
// Per-dataset summary

struct ObjectiveVector {
  std::string environment_id;
  std::string agent_id;
  std::uint64_t steps = 0;
  double reward_rate = 0.0;
  std::optional<double> human_similarity;
  double input_entropy = 0.0;
  double information_gain = 0.0;
  double empowerment = 0.0;
  // "<objective>/<variant>" -> value for every computed variant.
  std::map<std::string, double> variants;
};

struct ObjectiveOptions {
  InfoGainVariant info_gain = InfoGainVariant::dirichlet_unique;
  bool jsd_similarity = false;  // default similarity is Jaccard
};

inline constexpr std::string_view kDefaultVariant[kObjectiveCount] = {"per_step", "jaccard", "nats",
                                                                       "dirichlet_unique", "nats"};

// Everything for one (agent, environment) dataset. `human` may be null when
// no reference dataset exists.
inline ObjectiveVector compute_objectives(const CountTensor& counts, double reward_sum, std::uint64_t steps,
                                          const CountTensor* human, const ObjectiveOptions& options = {}) {
  ObjectiveVector v;
  v.steps = steps;
  v.reward_rate = task_reward_rate(reward_sum, steps);
  const ProbTensor p(counts);
  v.input_entropy = input_entropy(p);
  v.empowerment = empowerment(p);
  for (auto variant : kInfoGainVariants) {
    const double gain = information_gain(counts, variant);
    v.variants["information_gain/" + std::string(variant_name(variant))] = gain;
    v.variants["information_gain/" + std::string(variant_name(variant)) + "_per_step"] =
        gain / static_cast<double>(steps);
    if (variant == options.info_gain) v.information_gain = gain;
  }
  v.variants["task_reward/per_step"] = v.reward_rate;
  v.variants["input_entropy/nats"] = v.input_entropy;
  v.variants["empowerment/nats"] = v.empowerment;
  if (human != nullptr) {
    const ProbTensor ph(*human);
    const double jac = human_similarity_jaccard(p, ph);
    const double jsd = human_similarity_jsd(p, ph);
    v.variants["human_similarity/jaccard"] = jac;
    v.variants["human_similarity/jsd"] = jsd;
    v.human_similarity = options.jsd_similarity ? jsd : jac;
  }
  return v;
}

// ---------------------------------------------------------------------------
// Long-format objective rows: environment,agent,objective,variant,value,steps

struct ObjectiveRow {
  std::string environment;
  std::string agent;
  Objective objective = Objective::task_reward;
  std::string variant;
  std::optional<double> value;  // nullopt = explicitly missing ("NA")
  std::uint64_t steps = 0;

  bool operator==(const ObjectiveRow&) const = default;
};

inline constexpr std::string_view kObjectiveCsvHeader = "environment,agent,objective,variant,value,steps";

inline std::vector<ObjectiveRow> to_rows(const ObjectiveVector& v) {
  std::vector<ObjectiveRow> rows;
  for (const auto& [key, value] : v.variants) {
    const auto slash = key.find('/');
    rows.push_back({v.environment_id, v.agent_id, parse_objective(key.substr(0, slash)), key.substr(slash + 1),
                    value, v.steps});
  }
  return rows;
}

inline void write_objective_csv(std::ostream& out, const std::vector<ObjectiveRow>& rows) {
  out << kObjectiveCsvHeader << '\n';
  for (const auto& r : rows) {
    out << r.environment << ',' << r.agent << ',' << objective_name(r.objective) << ',' << r.variant << ','
        << (r.value ? fixed6(*r.value) : std::string("NA")) << ',' << r.steps << '\n';
  }
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  for (auto& c : cells) {
    while (!c.empty() && (c.back() == '\r' || c.back() == ' ')) c.pop_back();
  }
  return cells;
}

// Lines starting with '#' are comments (used for provenance tags).
inline std::vector<ObjectiveRow> read_objective_csv(std::istream& in) {
  std::vector<ObjectiveRow> rows;
  std::string line;
  bool header = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#' || line == "\r") continue;
    if (!header) {
      if (line.rfind(kObjectiveCsvHeader, 0) != 0) {
        throw FormatError("objective table: expected header '" + std::string(kObjectiveCsvHeader) + "'");
      }
      header = true;
      continue;
    }
    const auto cells = split_csv_line(line);
    if (cells.size() != 6) throw FormatError("objective table line " + std::to_string(line_no) + ": expected 6 cells");
    ObjectiveRow r;
    r.environment = cells[0];
    r.agent = cells[1];
    r.objective = parse_objective(cells[2]);
    r.variant = cells[3];
    if (cells[4] != "NA") {
      r.value = parse_number(cells[4]);
      if (!r.value) throw FormatError("objective table line " + std::to_string(line_no) + ": bad value");
    }
    const auto steps = parse_number(cells[5]);
    if (!steps || *steps < 0) throw FormatError("objective table line " + std::to_string(line_no) + ": bad steps");
    r.steps = static_cast<std::uint64_t>(*steps);
    rows.push_back(std::move(r));
  }
  if (!header) throw FormatError("objective table: missing header");
  return rows;
}

inline std::vector<ObjectiveRow> read_objective_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open objective table " + path.string());
  return read_objective_csv(in);
}

}  // namespace objscope
