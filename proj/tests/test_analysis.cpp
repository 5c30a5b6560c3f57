#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "objscope/analysis.hpp"
#include "support.hpp"

using namespace objscope;
using namespace objscope::analysis;

namespace {

const std::filesystem::path kData = OBJSCOPE_DATA_DIR;

ObjectiveTable fixture() { return build_table(read_objective_csv(kData / "appendix_a.csv")); }

std::size_t idx(Objective o) { return static_cast<std::size_t>(o); }

Column col(std::initializer_list<double> v) { return Column(v.begin(), v.end()); }

// Two-tailed permutation p-value for the sample correlation of (x, y).
double permutation_p(const std::vector<double>& x, std::vector<double> y, std::size_t samples, std::uint64_t seed) {
  const double observed = std::abs(pearson(std::span<const double>(x), std::span<const double>(y)).r);
  std::mt19937_64 rng(seed);
  std::size_t hits = 0;
  for (std::size_t s = 0; s < samples; ++s) {
    std::shuffle(y.begin(), y.end(), rng);
    if (std::abs(pearson(std::span<const double>(x), std::span<const double>(y)).r) >= observed - 1e-12) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(samples);
}

}  // namespace

TEST(Pearson, Examples) {
  EXPECT_NEAR(pearson(col({1, 2, 3}), col({2, 4, 6})).r, 1.0, 1e-15);
  EXPECT_NEAR(pearson(col({1, 2, 3}), col({3, 2, 1})).r, -1.0, 1e-15);
}

TEST(Pearson, HandComputed) {
  // x = 1..4, y = (2, 1, 4, 3): sxy = 3, sxx = 5, syy = 5.
  EXPECT_NEAR(pearson(col({1, 2, 3, 4}), col({2, 1, 4, 3})).r, 0.6, 1e-15);
}

TEST(Pearson, DropsMissingPairs) {
  const Column x = {1.0, std::nullopt, 3.0, 4.0, 5.0};
  const Column y = {2.0, 9.0, std::nullopt, 8.0, 10.0};
  const auto res = pearson(x, y);
  EXPECT_EQ(res.n, 3U);
  EXPECT_NEAR(res.r, 1.0, 1e-12);
}

TEST(Pearson, Errors) {
  EXPECT_THROW(pearson(col({1, 2}), col({1, 2})), InsufficientDataError);
  const Column x = {1.0, 2.0, std::nullopt, 4.0};
  const Column y = {1.0, std::nullopt, 3.0, 4.0};
  EXPECT_THROW(pearson(x, y), InsufficientDataError);
  EXPECT_THROW(pearson(col({1, 1, 1}), col({1, 2, 3})), DegenerateInputError);
  EXPECT_THROW(pearson(col({1, 2, 3}), col({1, 2})), FormatError);
}

TEST(Pearson, AffineInvarianceProperty) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> scale(0.01, 100.0);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 3 + rng() % 30;
    std::vector<double> x(n);
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = g(rng);
      y[i] = 0.5 * x[i] + g(rng);
    }
    const double r = pearson(std::span<const double>(x), std::span<const double>(y)).r;
    const double a = scale(rng);
    const double b = g(rng) * 10;
    auto x2 = x;
    for (auto& v : x2) v = a * v + b;
    const double r2 = pearson(std::span<const double>(x2), std::span<const double>(y)).r;
    ASSERT_NEAR(r, r2, 1e-12);
    ASSERT_LE(std::abs(r), 1.0);
    for (auto& v : x2) v = -v;
    ASSERT_NEAR(pearson(std::span<const double>(x2), std::span<const double>(y)).r, -r, 1e-12);
  }
}

TEST(PearsonP, Examples) {
  EXPECT_EQ(pearson_p(0.0, 10), 1.0);
  EXPECT_EQ(pearson_p(0.0, 3), 1.0);
  EXPECT_EQ(pearson_p(1.0, 5), 0.0);
  EXPECT_EQ(pearson_p(-1.0, 5), 0.0);
  EXPECT_NEAR(pearson_p(0.41, 26), 0.0374, 5e-4);
  EXPECT_LT(pearson_p(0.41, 26), 0.05);
  EXPECT_EQ(pearson_p(0.3, 12), pearson_p(-0.3, 12));
  EXPECT_THROW(pearson_p(0.5, 2), InsufficientDataError);
  EXPECT_THROW(pearson_p(1.5, 10), DomainError);
}

TEST(PearsonP, ThreePointsClosedForm) {
  // With one degree of freedom the t CDF is Cauchy: p = 1 - (2/pi) atan(t).
  for (double r : {0.1, 0.5, 0.9, 0.99}) {
    const double t = r / std::sqrt(1 - r * r);
    EXPECT_NEAR(pearson_p(r, 3), 1.0 - 2.0 / M_PI * std::atan(t), 1e-12) << r;
  }
}

TEST(PearsonP, MonotoneInAbsR) {
  double last = 1.0;
  for (int k = 1; k < 100; ++k) {
    const double p = pearson_p(k / 100.0, 20);
    ASSERT_LE(p, last);
    last = p;
  }
}

TEST(PearsonP, AgreesWithPermutationOracle) {
  // Normal scores on both axes, y rotated so that the sample r is exactly 0.41.
  const std::size_t n = 26;
  std::vector<double> x(n);
  std::vector<double> z(n);
  std::mt19937_64 rng(12);
  std::normal_distribution<double> g;
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = g(rng);
    z[i] = g(rng);
  }
  auto standardize = [](std::vector<double>& v) {
    double m = 0;
    for (double a : v) m += a;
    m /= static_cast<double>(v.size());
    double s = 0;
    for (auto& a : v) {
      a -= m;
      s += a * a;
    }
    for (auto& a : v) a /= std::sqrt(s);
  };
  standardize(x);
  standardize(z);
  double dot = 0;
  for (std::size_t i = 0; i < n; ++i) dot += x[i] * z[i];
  for (std::size_t i = 0; i < n; ++i) z[i] -= dot * x[i];
  standardize(z);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = 0.41 * x[i] + std::sqrt(1 - 0.41 * 0.41) * z[i];
  ASSERT_NEAR(pearson(std::span<const double>(x), std::span<const double>(y)).r, 0.41, 1e-12);
  EXPECT_NEAR(permutation_p(x, y, 200000, 13), pearson_p(0.41, n), 0.01);
}

TEST(Normalize, MinMaxExample) {
  ObjectiveTable t;
  t.environments = {"e"};
  for (double v : {0.0, 5.0, 10.0}) {
    TableRow r{"e", "a" + std::to_string(int(v)), {}};
    for (auto& x : r.values) x = v;
    t.rows.push_back(r);
  }
  const auto m = normalize_per_environment(t, Scheme::minmax);
  EXPECT_EQ(*m.rows[0].values[0], 0.0);
  EXPECT_EQ(*m.rows[1].values[0], 0.5);
  EXPECT_EQ(*m.rows[2].values[0], 1.0);
  const auto z = normalize_per_environment(t, Scheme::zscore);
  EXPECT_NEAR(*z.rows[0].values[0], -std::sqrt(1.5), 1e-12);
  EXPECT_NEAR(*z.rows[1].values[0], 0.0, 1e-12);
  const auto raw = normalize_per_environment(t, Scheme::raw);
  EXPECT_EQ(raw.rows[2].values, t.rows[2].values);
}

TEST(Normalize, ConstantColumnNamesIt) {
  ObjectiveTable t;
  t.environments = {"e"};
  for (double v : {1.0, 2.0}) {
    TableRow r{"e", "a", {}};
    for (auto& x : r.values) x = v;
    r.values[idx(Objective::empowerment)] = 0.0;
    t.rows.push_back(r);
  }
  try {
    (void)normalize_per_environment(t, Scheme::zscore);
    FAIL() << "expected DegenerateInputError";
  } catch (const DegenerateInputError& e) {
    EXPECT_NE(std::string(e.what()).find("e/empowerment"), std::string::npos);
  }
  EXPECT_NO_THROW((void)normalize_per_environment(t, Scheme::raw));
}

TEST(Normalize, NoopMapsToZeroOnFixture) {
  const auto m = normalize_per_environment(fixture(), Scheme::minmax);
  std::size_t seen = 0;
  for (const auto& r : m.rows) {
    if (r.agent != "noop") continue;
    ++seen;
    for (auto o : kObjectives) {
      ASSERT_TRUE(r.values[idx(o)].has_value());
      EXPECT_EQ(*r.values[idx(o)], 0.0) << r.environment << " " << objective_name(o);
    }
  }
  EXPECT_EQ(seen, 4U);
}

TEST(Fixture, ShapeAndMissingCells) {
  const auto t = fixture();
  EXPECT_EQ(t.environments.size(), 4U);
  std::size_t complete = 0;
  for (const auto& r : t.rows) complete += r.values[idx(Objective::task_reward)] ? 1 : 0;
  EXPECT_EQ(complete, 26U);
  const auto rep = correlation_report(t, Scheme::zscore);
  EXPECT_EQ(rep.combined.n[idx(Objective::task_reward)][idx(Objective::empowerment)], 26U);
  for (const auto& b : rep.per_environment) {
    const std::size_t expect = b.name == "Minecraft" ? 5 : 7;
    EXPECT_EQ(b.n[0][1], expect) << b.name;
  }
}

TEST(Fixture, BreakoutRewardSimilarity) {
  const auto rep = correlation_report(fixture());
  EXPECT_NEAR(rep.per_environment[0].r[idx(Objective::task_reward)][idx(Objective::human_similarity)], 0.74, 0.01);
}

TEST(Fixture, RankAgreement) {
  const auto rep = correlation_report(fixture(), Scheme::zscore);
  const std::array<Objective, 3> intrinsic = {Objective::input_entropy, Objective::information_gain,
                                              Objective::empowerment};
  auto order_by = [&](Objective target) {
    auto v = intrinsic;
    std::sort(v.begin(), v.end(),
              [&](Objective a, Objective b) { return rep.combined.r[idx(a)][idx(target)] > rep.combined.r[idx(b)][idx(target)]; });
    return v;
  };
  EXPECT_EQ(order_by(Objective::task_reward), order_by(Objective::human_similarity));
  EXPECT_EQ(order_by(Objective::task_reward), intrinsic);
}

TEST(Correlation, SingleEnvironmentRawCombinedEqualsPerEnvironment) {
  std::mt19937_64 rng(14);
  std::normal_distribution<double> g;
  ObjectiveTable t;
  t.environments = {"only"};
  for (int a = 0; a < 9; ++a) {
    TableRow r{"only", "agent" + std::to_string(a), {}};
    for (auto& x : r.values) x = g(rng);
    if (a == 3) r.values[idx(Objective::human_similarity)].reset();
    t.rows.push_back(r);
  }
  const auto rep = correlation_report(t, Scheme::raw);
  EXPECT_EQ(rep.combined.r, rep.per_environment[0].r);
  EXPECT_EQ(rep.combined.n, rep.per_environment[0].n);
  EXPECT_EQ(rep.combined.n[0][1], 8U);
}

TEST(Correlation, MatrixInvariants) {
  const auto rep = correlation_report(fixture(), Scheme::zscore);
  auto check = [](const CorrelationBlock& b) {
    for (std::size_t a = 0; a < kObjectiveCount; ++a) {
      EXPECT_EQ(b.r[a][a], 1.0);
      for (std::size_t c = 0; c < kObjectiveCount; ++c) {
        EXPECT_EQ(b.r[a][c], b.r[c][a]);
        EXPECT_LE(std::abs(b.r[a][c]), 1.0);
        EXPECT_LE(b.n[a][c], 26U);
      }
    }
  };
  for (const auto& b : rep.per_environment) check(b);
  check(rep.combined);
}

TEST(Correlation, FewerThanTwoAgentsIsError) {
  ObjectiveTable t;
  t.environments = {"e"};
  t.rows.push_back({"e", "a", {}});
  EXPECT_THROW(correlation_report(t), InsufficientDataError);
}

TEST(SchemeSelection, PicksZscoreOnFixture) {
  const auto refs = read_reference_matrices(kData / "table_b1.csv");
  const auto sel = select_scheme(fixture(), refs.at("combined"));
  EXPECT_EQ(sel.best, Scheme::zscore);
  EXPECT_LT(sel.max_residual.at(Scheme::zscore), 0.05);
  EXPECT_EQ(sel.max_residual.size(), 3U);
}

TEST(Reference, RejectsIncompleteMatrix) {
  std::stringstream in("environment,row,column,value\nx,task_reward,task_reward,1\n");
  EXPECT_THROW(read_reference_matrices(in), FormatError);
}

TEST(Report, DeterministicBytes) {
  objscope::testing::TempDir a;
  objscope::testing::TempDir b;
  const auto t = fixture();
  for (const auto* dir : {&a, &b}) {
    write_report_files(dir->path(), correlation_report(t), t, {{"scheme", "zscore"}});
  }
  for (const auto* name : {"report.json", "combined.csv", "scatter.csv", "corr_Breakout.csv", "corr_Minecraft.csv"}) {
    std::ifstream fa(a / name, std::ios::binary);
    std::ifstream fb(b / name, std::ios::binary);
    ASSERT_TRUE(fa && fb) << name;
    const std::string sa((std::istreambuf_iterator<char>(fa)), {});
    const std::string sb((std::istreambuf_iterator<char>(fb)), {});
    EXPECT_FALSE(sa.empty());
    EXPECT_EQ(sa, sb) << name;
  }
}

TEST(Report, JsonShape) {
  const auto t = fixture();
  const auto j = report_json(correlation_report(t), {{"scheme", "zscore"}});
  EXPECT_EQ(j["objectives"].size(), 5U);
  EXPECT_EQ(j["per_environment"].size(), 4U);
  EXPECT_EQ(j["combined"]["r"][0][0], 1.0);
  EXPECT_EQ(j["normalization"], "zscore");
  EXPECT_EQ(j["pairs"], 28U);
}
