#include <gtest/gtest.h>

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <cmath>
#include <random>
#include <sstream>

#include "objscope/objectives.hpp"
#include "support.hpp"

using namespace objscope;
using objscope::testing::random_tensor;

namespace {

const double kLn2 = std::log(2.0);

CountTensor tensor_of(TensorDims dims, std::vector<std::pair<Transition, std::uint64_t>> entries) {
  CountAccumulator acc(dims);
  for (const auto& [t, n] : entries) acc.add(t, n);
  return acc.finish();
}

// Tensor whose input marginal is `weights` (integer counts), one self-loop each.
CountTensor with_marginal(const std::vector<std::uint64_t>& weights, std::uint32_t inputs) {
  std::vector<std::pair<Transition, std::uint64_t>> es;
  for (std::uint32_t i = 0; i < weights.size(); ++i) {
    if (weights[i] > 0) es.push_back({{i, 0, i}, weights[i]});
  }
  return tensor_of({inputs, 1}, es);
}

double log_beta(const std::vector<double>& a) {
  double s = 0.0;
  double a0 = 0.0;
  for (double x : a) {
    s += std::lgamma(x);
    a0 += x;
  }
  return s - std::lgamma(a0);
}

// -E[ln f] for a Beta(a, b) density by tanh-sinh quadrature.
double beta_entropy_quadrature(double a, double b) {
  boost::math::quadrature::tanh_sinh<double> integrator;
  const double lb = log_beta({a, b});
  auto f = [&](double x) {
    const double lf = (a - 1) * std::log(x) + (b - 1) * std::log1p(-x) - lb;
    return -std::exp(lf) * lf;
  };
  return integrator.integrate(f, 0.0, 1.0, 1e-13);
}

// Same over the 2-simplex for a 3-category Dirichlet (nested quadrature).
double dirichlet3_entropy_quadrature(double a, double b, double c) {
  boost::math::quadrature::tanh_sinh<double> outer;
  const double lb = log_beta({a, b, c});
  auto inner_at = [&](double x) {
    boost::math::quadrature::tanh_sinh<double> inner;
    const double rest = 1.0 - x;
    auto g = [&](double u) {
      const double y = u * rest;
      const double z = rest - y;
      if (x <= 0 || y <= 0 || z <= 0) return 0.0;
      const double lf = (a - 1) * std::log(x) + (b - 1) * std::log(y) + (c - 1) * std::log(z) - lb;
      return -std::exp(lf) * lf * rest;
    };
    return inner.integrate(g, 0.0, 1.0, 1e-12);
  };
  return outer.integrate(inner_at, 0.0, 1.0, 1e-11);
}

}  // namespace

TEST(TaskReward, Examples) {
  EXPECT_EQ(task_reward_rate(std::vector<double>{0, 0, 1, 0}), 0.25);
  EXPECT_EQ(task_reward_rate(std::vector<double>{0, 0, 0}), 0.0);
  EXPECT_DOUBLE_EQ(task_reward_rate(std::vector<double>(10, 0.3)), 0.3);
  EXPECT_THROW(task_reward_rate(std::vector<double>{}), EmptyDatasetError);
}

TEST(InputEntropy, Examples) {
  EXPECT_EQ(input_entropy(normalize(with_marginal({5}, 3))), 0.0);
  EXPECT_NEAR(input_entropy(normalize(with_marginal({1, 1, 1, 1}, 4))), std::log(4.0), 1e-12);
  EXPECT_NEAR(input_entropy(normalize(with_marginal({2, 1, 1}, 3))), 1.039721, 1e-6);
  // Direct summation oracle.
  EXPECT_NEAR(input_entropy(normalize(with_marginal({2, 1, 1}, 3))), -(0.5 * std::log(0.5) + 0.5 * std::log(0.25)),
              1e-15);
}

TEST(InputEntropy, BoundedByLogAlphabet) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const TensorDims dims{static_cast<std::uint32_t>(1 + rng() % 40), static_cast<std::uint16_t>(1 + rng() % 5)};
    const double h = input_entropy(normalize(random_tensor(rng, dims, 1 + rng() % 80)));
    ASSERT_GE(h, -1e-12);
    ASSERT_LE(h, std::log(double(dims.inputs)) + 1e-9);
  }
}

TEST(Jaccard, Examples) {
  const auto a = normalize(with_marginal({0, 1, 1, 1, 0}, 5));
  const auto b = normalize(with_marginal({0, 0, 1, 1, 1}, 5));
  const auto c = normalize(with_marginal({1, 0, 0, 0, 0}, 5));
  EXPECT_EQ(human_similarity_jaccard(a, a), 1.0);
  EXPECT_EQ(human_similarity_jaccard(a, b), 0.5);
  EXPECT_EQ(human_similarity_jaccard(a, c), 0.0);
  EXPECT_THROW(human_similarity_jaccard(a, normalize(with_marginal({1}, 2))), FormatError);
}

TEST(Jsd, Examples) {
  const std::vector<double> x = {0.5, 0.5, 0.0};
  const std::vector<double> y = {0.0, 0.5, 0.5};
  EXPECT_NEAR(jsd_similarity(x, x), 1.0, 1e-15);
  EXPECT_NEAR(jsd_similarity(std::vector<double>{1, 0}, std::vector<double>{0, 1}), 0.0, 1e-15);
  EXPECT_NEAR(jsd_similarity(x, y), 0.5, 1e-12);
  // H[M] = 1.039721, mean H = ln 2, JSD = 0.346574.
  EXPECT_NEAR(1.0 - jsd_similarity(x, y), 0.346574 / kLn2, 1e-6);
  EXPECT_THROW(jsd_similarity(std::vector<double>{0, 0}, std::vector<double>{0, 0}), DegenerateInputError);
}

TEST(Similarity, Symmetry) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const TensorDims dims{static_cast<std::uint32_t>(2 + rng() % 20), 2};
    const auto p = normalize(random_tensor(rng, dims, 1 + rng() % 20));
    const auto q = normalize(random_tensor(rng, dims, 1 + rng() % 20));
    ASSERT_EQ(human_similarity_jaccard(p, q), human_similarity_jaccard(q, p));
    ASSERT_NEAR(human_similarity_jsd(p, q), human_similarity_jsd(q, p), 1e-15);
    const double s = human_similarity_jsd(p, q);
    ASSERT_GE(s, 0.0);
    ASSERT_LE(s, 1.0);
  }
}

TEST(Dirichlet, Examples) {
  EXPECT_NEAR(dirichlet_entropy(std::vector<double>{1, 1}), 0.0, 1e-15);
  EXPECT_NEAR(dirichlet_entropy(std::vector<double>{1, 1, 1}), -kLn2, 1e-12);
  EXPECT_NEAR(dirichlet_entropy(std::vector<double>{2, 1}), 0.5 - kLn2, 1e-12);
  EXPECT_NEAR(dirichlet_entropy(std::vector<double>{2, 1}), -0.193147, 1e-6);
}

TEST(Dirichlet, FlatPriorIsMinusLogGammaK) {
  for (int k = 2; k <= 50; ++k) {
    const std::vector<double> ones(static_cast<std::size_t>(k), 1.0);
    ASSERT_NEAR(dirichlet_entropy(ones), -std::lgamma(double(k)), 1e-10) << k;
  }
}

TEST(Dirichlet, DomainErrors) {
  EXPECT_THROW(dirichlet_entropy(std::vector<double>{1}), DomainError);
  EXPECT_THROW(dirichlet_entropy(std::vector<double>{1, 0}), DomainError);
  EXPECT_THROW(dirichlet_entropy(std::vector<double>{1, -2}), DomainError);
}

TEST(Dirichlet, MatchesBetaQuadrature) {
  for (auto [a, b] : std::vector<std::pair<double, double>>{{2, 1}, {1, 1}, {3, 5}, {1.5, 2.7}, {10, 2}, {1 + std::log(4.0), 1}}) {
    EXPECT_NEAR(dirichlet_entropy(std::vector<double>{a, b}), beta_entropy_quadrature(a, b), 1e-9) << a << "," << b;
  }
}

TEST(Dirichlet, MatchesSimplexQuadrature) {
  for (auto a : std::vector<std::array<double, 3>>{{1, 1, 1}, {2, 1, 1}, {2, 3, 4}, {1 + std::sqrt(3.0), 1, 2}}) {
    EXPECT_NEAR(dirichlet_entropy(std::vector<double>(a.begin(), a.end())),
                dirichlet3_entropy_quadrature(a[0], a[1], a[2]), 1e-8)
        << a[0] << "," << a[1] << "," << a[2];
  }
}

TEST(InfoGain, EmptyTensorIsZero) { EXPECT_EQ(information_gain(CountTensor({4, 2})), 0.0); }

TEST(InfoGain, SingleObservedSuccessor) {
  const auto t = tensor_of({2, 1}, {{{0, 0, 1}, 1}});
  const double expected = -std::lgamma(2.0) + std::lgamma(3.0) + boost::math::digamma(2.0) - boost::math::digamma(3.0);
  EXPECT_NEAR(information_gain(t), expected, 1e-12);
  EXPECT_NEAR(information_gain(t), 0.193147, 1e-6);
  EXPECT_NEAR(information_gain(t), dirichlet_entropy(std::vector<double>{1, 1}) -
                                       dirichlet_entropy(std::vector<double>{2, 1}), 1e-12);
}

TEST(InfoGain, UniqueVariantIgnoresRepeats) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const TensorDims dims{static_cast<std::uint32_t>(2 + rng() % 30), static_cast<std::uint16_t>(1 + rng() % 4)};
    const auto t = random_tensor(rng, dims, rng() % 60);
    const auto doubled = merge(t, t);
    ASSERT_EQ(information_gain(t, InfoGainVariant::dirichlet_unique),
              information_gain(doubled, InfoGainVariant::dirichlet_unique));
  }
}

TEST(InfoGain, NonNegativeForAllVariants) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const TensorDims dims{static_cast<std::uint32_t>(2 + rng() % 30), static_cast<std::uint16_t>(1 + rng() % 4)};
    const auto t = random_tensor(rng, dims, rng() % 60);
    for (auto v : kInfoGainVariants) ASSERT_GE(information_gain(t, v), -1e-12) << variant_name(v);
  }
}

TEST(InfoGain, MonotoneWhenDistinctTransitionOpensNewPair) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const TensorDims dims{static_cast<std::uint32_t>(2 + rng() % 10), static_cast<std::uint16_t>(1 + rng() % 3)};
    CountTensor t(dims);
    double last = 0.0;
    for (int step = 0; step < 40; ++step) {
      const auto add = random_tensor(rng, dims, 1);
      const auto& key = add.entries().front().key;
      bool pair_seen = false;
      for (const auto& e : t.entries()) pair_seen = pair_seen || (e.key.input == key.input && e.key.action == key.action);
      t = merge(t, add);
      const double g = information_gain(t, InfoGainVariant::dirichlet_unique);
      if (!pair_seen) {
        ASSERT_GT(g, last);
      }
      last = g;
    }
  }
}

// A second distinct successor for an already visited pair lowers the gain
// when |X| = 2: H[Dir(2,2)] = -0.1251 lies above H[Dir(2,1)] = -0.1931.
TEST(InfoGain, SecondSuccessorOfAPairCanLowerGain) {
  const auto one = tensor_of({2, 1}, {{{0, 0, 0}, 1}});
  const auto two = tensor_of({2, 1}, {{{0, 0, 0}, 1}, {{0, 0, 1}, 1}});
  EXPECT_NEAR(information_gain(one), 0.193147, 1e-6);
  EXPECT_NEAR(information_gain(two), 0.125093, 1e-6);
  EXPECT_NEAR(information_gain(two), -dirichlet_entropy(std::vector<double>{2, 2}), 1e-12);
  EXPECT_LT(information_gain(two), information_gain(one));
}

TEST(InfoGain, MatchesPerPairDirichletDifference) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 60; ++trial) {
    const TensorDims dims{static_cast<std::uint32_t>(2 + rng() % 12), static_cast<std::uint16_t>(1 + rng() % 3)};
    const auto t = random_tensor(rng, dims, rng() % 30);
    for (auto v : kInfoGainVariants) {
      double expect = 0.0;
      const std::vector<double> prior(dims.inputs, 1.0);
      for (std::uint32_t i = 0; i < dims.inputs; ++i) {
        for (std::uint16_t j = 0; j < dims.actions; ++j) {
          std::vector<double> alpha(dims.inputs, 1.0);
          bool seen = false;
          for (std::uint32_t k = 0; k < dims.inputs; ++k) {
            const auto n = t.count({i, j, k});
            seen = seen || n > 0;
            alpha[k] += concentration_increment(v, n);
          }
          if (seen) expect += dirichlet_entropy(prior) - dirichlet_entropy(alpha);
        }
      }
      ASSERT_NEAR(information_gain(t, v), expect, 1e-9 * std::max(1.0, std::abs(expect))) << variant_name(v);
    }
  }
}

TEST(InfoGain, SingleCategoryIsDomainError) {
  EXPECT_THROW(information_gain(tensor_of({1, 1}, {{{0, 0, 0}, 3}})), DomainError);
}

TEST(Empowerment, ActionsWithoutEffectGiveZero) {
  const auto t = tensor_of({2, 3}, {{{0, 0, 1}, 2}, {{0, 1, 1}, 5}, {{0, 2, 1}, 1}, {{1, 0, 0}, 3}, {{1, 2, 0}, 3}});
  EXPECT_EQ(empowerment(normalize(t)), 0.0);
}

TEST(Empowerment, InjectiveDynamicsUniformPolicy) {
  std::vector<std::pair<Transition, std::uint64_t>> es;
  for (std::uint32_t i = 0; i < 4; ++i) {
    for (std::uint16_t j = 0; j < 4; ++j) es.push_back({{i, j, (i + j) % 4}, 7});
  }
  EXPECT_NEAR(empowerment(normalize(tensor_of({4, 4}, es))), std::log(4.0), 1e-12);
}

TEST(Empowerment, NoisyBinaryChannel) {
  // One state, two equiprobable actions, successor matches the action w.p. 0.75.
  const auto t = tensor_of({2, 2}, {{{0, 0, 0}, 3}, {{0, 0, 1}, 1}, {{0, 1, 1}, 3}, {{0, 1, 0}, 1}});
  const double h = -(0.75 * std::log(0.75) + 0.25 * std::log(0.25));
  EXPECT_NEAR(empowerment(normalize(t)), kLn2 - h, 1e-12);
  EXPECT_NEAR(empowerment(normalize(t)), 0.130812, 1e-6);
}

TEST(Empowerment, BoundsProperty) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 300; ++trial) {
    const TensorDims dims{static_cast<std::uint32_t>(1 + rng() % 10), static_cast<std::uint16_t>(1 + rng() % 5)};
    const auto t = random_tensor(rng, dims, 1 + rng() % 60);
    const auto p = normalize(t);
    const double e = empowerment(p);
    // H[a|x] from the conditionals view.
    const Conditionals c(p);
    double h_ax = 0.0;
    for (std::uint32_t i = 0; i < dims.inputs; ++i) {
      for (std::uint16_t j = 0; j < dims.actions; ++j) {
        const double pij = c.p_input_action(i, j);
        if (pij > 0) h_ax -= pij * std::log(*c.action_given_input(i, j));
      }
    }
    ASSERT_GE(e, 0.0);
    ASSERT_LE(e, std::min(h_ax, std::log(double(dims.actions))) + 1e-9);
  }
}

TEST(Objectives, ShardOrderInvariance) {
  std::mt19937_64 rng(8);
  const TensorDims dims{20, 4};
  std::vector<CountTensor> shards;
  for (int s = 0; s < 6; ++s) shards.push_back(random_tensor(rng, dims, 30));
  auto fold = [&](const std::vector<CountTensor>& parts) {
    CountTensor acc(dims);
    for (const auto& p : parts) acc = merge(acc, p);
    return compute_objectives(acc, 3.0, 200, &shards[0]);
  };
  const auto base = fold(shards);
  for (int trial = 0; trial < 10; ++trial) {
    auto perm = shards;
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto v = fold(perm);
    EXPECT_EQ(v.variants, base.variants);
  }
}

TEST(Objectives, CsvRoundtrip) {
  std::mt19937_64 rng(9);
  auto v = compute_objectives(random_tensor(rng, {10, 3}, 40), 2.0, 100, nullptr);
  v.environment_id = "env";
  v.agent_id = "a";
  auto rows = to_rows(v);
  rows.push_back({"env", "a", Objective::human_similarity, "jaccard", std::nullopt, 100});
  std::stringstream buf;
  write_objective_csv(buf, rows);
  const auto back = read_objective_csv(buf);
  ASSERT_EQ(back.size(), rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    EXPECT_EQ(back[r].agent, rows[r].agent);
    EXPECT_EQ(back[r].variant, rows[r].variant);
    EXPECT_EQ(back[r].value.has_value(), rows[r].value.has_value());
    if (rows[r].value) {
      EXPECT_NEAR(*back[r].value, *rows[r].value, 5e-7);
    }
  }
}

TEST(Objectives, CsvRejectsGarbage) {
  std::stringstream bad("environment,agent,objective,variant,value,steps\nenv,a,input_entropy,nats,abc,3\n");
  EXPECT_THROW(read_objective_csv(bad), FormatError);
  std::stringstream unknown("environment,agent,objective,variant,value,steps\nenv,a,curiosity,nats,1,3\n");
  EXPECT_THROW(read_objective_csv(unknown), FormatError);
}
