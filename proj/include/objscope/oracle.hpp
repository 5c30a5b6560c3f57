#pragma once

// Dense, definitional re-computation of every objective. Used only as a
// reference in tests; it shares the decoding front end (file reader, gray
// conversion, resize) with the fast path but none of the estimator code:
// its own input indexing, explicit joint tables, direct entropy sums.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <boost/math/special_functions/digamma.hpp>

#include "objscope/dataset_io.hpp"
#include "objscope/error.hpp"
#include "objscope/objectives.hpp"
#include "objscope/preprocess.hpp"
#include "objscope/transition_tensor.hpp"

namespace objscope::synth {

// Joint table cells the oracle is willing to allocate (|X| * |A| * |X|).
inline constexpr std::uint64_t kOracleMaxCells = 1ULL << 24;

class OracleScaleError : public Error {
 public:
  using Error::Error;
};

struct OracleEnvironment {
  // Every dataset of the environment (agents and human). Their distinct
  // discretized frames define the input alphabet X.
  std::vector<std::filesystem::path> files;
  std::optional<std::filesystem::path> human;
  ThresholdTable thresholds;
  ResetPolicy resets = ResetPolicy::exclude;
};

namespace oracle_detail {

using Key = std::vector<std::uint8_t>;

struct Episode {
  std::vector<Key> frames;
  std::vector<std::uint16_t> actions;
  std::vector<bool> starts;
  double reward_sum = 0.0;
  std::uint16_t action_count = 0;
};

inline Episode load(const std::filesystem::path& path, const ThresholdTable& t) {
  TrajectoryFile file(path);
  const auto& m = file.manifest();
  FrameReducer reduce(m.frame_width, m.frame_height, m.channels, t.side);
  Episode ep;
  ep.action_count = m.action_count;
  TrajectoryRecord rec;
  while (file.next(rec)) {
    const Grid& g = reduce(rec.frame);
    Key key(g.values.size());
    for (std::size_t p = 0; p < g.values.size(); ++p) {
      std::uint8_t d = 0;
      for (double cut : t.pixel(p)) {
        if (g.values[p] > cut) ++d;
      }
      key[p] = d;
    }
    ep.frames.push_back(std::move(key));
    ep.actions.push_back(rec.action);
    ep.starts.push_back(rec.episode_start);
    ep.reward_sum += rec.reward;
  }
  return ep;
}

inline double entropy_of(const std::vector<double>& p) {
  double h = 0.0;
  for (double x : p) {
    if (x > 0.0) h -= x * std::log(x);
  }
  return h;
}

struct Dense {
  std::size_t inputs = 0;
  std::size_t actions = 0;
  std::vector<double> joint;  // [i][j][k]
  std::vector<double> counts;

  [[nodiscard]] std::size_t at(std::size_t i, std::size_t j, std::size_t k) const {
    return (i * actions + j) * inputs + k;
  }
};

inline Dense tabulate(const Episode& ep, const std::map<Key, std::size_t>& index, std::size_t actions,
                      ResetPolicy resets) {
  Dense d;
  d.inputs = index.size();
  d.actions = actions;
  d.counts.assign(d.inputs * d.actions * d.inputs, 0.0);
  double total = 0.0;
  for (std::size_t t = 0; t + 1 < ep.frames.size(); ++t) {
    if (ep.starts[t + 1] && resets == ResetPolicy::exclude) continue;
    d.counts[d.at(index.at(ep.frames[t]), ep.actions[t], index.at(ep.frames[t + 1]))] += 1.0;
    total += 1.0;
  }
  if (total == 0.0) throw EmptyDatasetError("oracle: dataset has no transitions");
  d.joint = d.counts;
  for (double& x : d.joint) x /= total;
  return d;
}

inline std::vector<double> input_marginal(const Dense& d) {
  std::vector<double> x(d.inputs, 0.0);
  for (std::size_t i = 0; i < d.inputs; ++i) {
    for (std::size_t j = 0; j < d.actions; ++j) {
      for (std::size_t k = 0; k < d.inputs; ++k) x[i] += d.joint[d.at(i, j, k)];
    }
  }
  return x;
}

}  // namespace oracle_detail

// Entropy of Dir(alpha) evaluated term by term over every category.
inline double dense_dirichlet_entropy(const std::vector<double>& alpha) {
  double a0 = 0.0;
  double log_beta = 0.0;
  double tail = 0.0;
  for (double a : alpha) {
    a0 += a;
    log_beta += std::lgamma(a);
    tail -= (a - 1.0) * boost::math::digamma(a);
  }
  log_beta -= std::lgamma(a0);
  const double k = static_cast<double>(alpha.size());
  return log_beta + tail + (a0 - k) * boost::math::digamma(a0);
}

inline ObjectiveVector oracle_objectives(const std::filesystem::path& agent, const OracleEnvironment& env) {
  using namespace oracle_detail;
  std::map<std::filesystem::path, Episode> episodes;
  std::map<Key, std::size_t> index;
  std::size_t actions = 0;
  auto take = [&](const std::filesystem::path& p) {
    if (episodes.count(p) != 0) return;
    Episode ep = load(p, env.thresholds);
    for (const auto& f : ep.frames) index.emplace(f, index.size());
    actions = std::max<std::size_t>(actions, ep.action_count);
    episodes.emplace(p, std::move(ep));
  };
  for (const auto& f : env.files) take(f);
  take(agent);
  if (env.human) take(*env.human);

  const std::uint64_t cells = static_cast<std::uint64_t>(index.size()) * actions * index.size();
  if (cells > kOracleMaxCells) {
    throw OracleScaleError("oracle: " + std::to_string(index.size()) + " inputs x " + std::to_string(actions) +
                           " actions exceeds the dense-table budget");
  }

  const Episode& ep = episodes.at(agent);
  const Dense d = tabulate(ep, index, actions, env.resets);
  const std::size_t nx = d.inputs;
  const std::size_t na = d.actions;

  ObjectiveVector v;
  v.steps = ep.frames.size();
  v.reward_rate = ep.reward_sum / static_cast<double>(v.steps);
  v.variants["task_reward/per_step"] = v.reward_rate;

  const auto px = input_marginal(d);
  v.input_entropy = entropy_of(px);
  v.variants["input_entropy/nats"] = v.input_entropy;

  // H[a|x] - H[a|x,x'] from the (i,j) and (i,k) marginals.
  std::vector<double> pij(nx * na, 0.0);
  std::vector<double> pik(nx * nx, 0.0);
  for (std::size_t i = 0; i < nx; ++i) {
    for (std::size_t j = 0; j < na; ++j) {
      for (std::size_t k = 0; k < nx; ++k) {
        const double p = d.joint[d.at(i, j, k)];
        pij[i * na + j] += p;
        pik[i * nx + k] += p;
      }
    }
  }
  double h_a_x = 0.0;
  for (std::size_t i = 0; i < nx; ++i) {
    for (std::size_t j = 0; j < na; ++j) {
      const double p = pij[i * na + j];
      if (p > 0.0) h_a_x -= p * std::log(p / px[i]);
    }
  }
  double h_a_xx = 0.0;
  for (std::size_t i = 0; i < nx; ++i) {
    for (std::size_t j = 0; j < na; ++j) {
      for (std::size_t k = 0; k < nx; ++k) {
        const double p = d.joint[d.at(i, j, k)];
        if (p > 0.0) h_a_xx -= p * std::log(p / pik[i * nx + k]);
      }
    }
  }
  v.empowerment = h_a_x - h_a_xx;
  v.variants["empowerment/nats"] = v.empowerment;

  const std::vector<double> prior(nx, 1.0);
  const double h_prior = dense_dirichlet_entropy(prior);
  for (auto variant : kInfoGainVariants) {
    double gain = 0.0;
    std::vector<double> alpha(nx);
    for (std::size_t i = 0; i < nx; ++i) {
      for (std::size_t j = 0; j < na; ++j) {
        bool visited = false;
        for (std::size_t k = 0; k < nx; ++k) {
          const double n = d.counts[d.at(i, j, k)];
          visited = visited || n > 0.0;
          double inc = 0.0;
          switch (variant) {
            case InfoGainVariant::dirichlet_counts: inc = n; break;
            case InfoGainVariant::dirichlet_unique: inc = n > 0.0 ? 1.0 : 0.0; break;
            case InfoGainVariant::log_counts: inc = std::log(1.0 + n); break;
            case InfoGainVariant::sqrt_counts: inc = std::sqrt(n); break;
          }
          alpha[k] = 1.0 + inc;
        }
        if (visited) gain += h_prior - dense_dirichlet_entropy(alpha);
      }
    }
    const std::string name(variant_name(variant));
    v.variants["information_gain/" + name] = gain;
    v.variants["information_gain/" + name + "_per_step"] = gain / static_cast<double>(v.steps);
    if (variant == InfoGainVariant::dirichlet_unique) v.information_gain = gain;
  }

  if (env.human) {
    const Dense h = tabulate(episodes.at(*env.human), index, actions, env.resets);
    const auto qx = input_marginal(h);
    double both = 0.0;
    double either = 0.0;
    std::vector<double> mix(nx);
    for (std::size_t i = 0; i < nx; ++i) {
      both += (px[i] > 0.0 && qx[i] > 0.0) ? 1.0 : 0.0;
      either += (px[i] > 0.0 || qx[i] > 0.0) ? 1.0 : 0.0;
      mix[i] = 0.5 * (px[i] + qx[i]);
    }
    const double jsd = entropy_of(mix) - 0.5 * entropy_of(px) - 0.5 * entropy_of(qx);
    v.variants["human_similarity/jaccard"] = both / either;
    v.variants["human_similarity/jsd"] = 1.0 - jsd / std::log(2.0);
    v.human_similarity = both / either;
  }
  return v;
}

}  // namespace objscope::synth
