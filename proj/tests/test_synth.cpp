#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "objscope/gridworld.hpp"
#include "objscope/oracle.hpp"
#include "objscope/pipeline.hpp"
#include "oracle_harness.hpp"
#include "support.hpp"

using namespace objscope;
using namespace objscope::synth;
using objscope::testing::TempDir;

namespace {

GridworldConfig open_room(int inner) {
  std::vector<std::string> rows;
  const int n = inner + 2;
  for (int y = 0; y < n; ++y) {
    std::string r(static_cast<std::size_t>(n), '.');
    for (int x = 0; x < n; ++x) {
      if (x == 0 || y == 0 || x == n - 1 || y == n - 1) r[static_cast<std::size_t>(x)] = '#';
    }
    rows.push_back(r);
  }
  rows[1][1] = 'S';
  auto c = GridworldConfig::from_ascii(rows);
  c.sticky_prob = 0.0;
  return c;
}

std::vector<Cell> standable_cells(const GridworldConfig& c) {
  std::vector<Cell> out;
  for (int y = 0; y < c.grid_size; ++y) {
    for (int x = 0; x < c.grid_size; ++x) {
      if (c.standable({x, y})) out.push_back({x, y});
    }
  }
  return out;
}

// Thresholds pooled over a render of every standable cell.
ThresholdTable layout_thresholds(const GridworldConfig& c) {
  PixelValuePool pool;
  FrameReducer reduce(static_cast<std::size_t>(c.render_size), static_cast<std::size_t>(c.render_size), 3);
  for (const auto& cell : standable_cells(c)) pool.add(reduce(render({cell, Move::noop}, c)));
  return compute_thresholds(pool);
}

std::set<std::pair<std::uint64_t, std::uint64_t>> simulated_digests(const GridworldConfig& c, const DatasetSpec& spec,
                                                                     const ThresholdTable& t) {
  FrameReducer reduce(static_cast<std::size_t>(c.render_size), static_cast<std::size_t>(c.render_size), 3);
  std::set<std::pair<std::uint64_t, std::uint64_t>> seen;
  simulate(c, spec, [&](const TrajectoryRecord& r) {
    const auto d = digest_of(reduce(r.frame), t);
    seen.insert({d.lo, d.hi});
  });
  return seen;
}

}  // namespace

TEST(Gridworld, DefaultLayoutValidates) {
  const auto c = GridworldConfig::default_layout();
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.grid_size, 12);
  EXPECT_EQ(c.render_size, 48);
  EXPECT_EQ(c.start, (Cell{1, 1}));
  ASSERT_TRUE(c.goal.has_value());
  EXPECT_EQ(*c.goal, (Cell{10, 1}));
  EXPECT_EQ(standable_cells(c).size(), 54U);
}

TEST(Gridworld, ConfigErrors) {
  auto c = GridworldConfig::default_layout();
  c.sticky_prob = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = GridworldConfig::default_layout();
  c.start = {0, 0};
  EXPECT_THROW(c.validate(), ConfigError);
  c = GridworldConfig::default_layout();
  c.render_size = 50;
  EXPECT_THROW(c.validate(), ConfigError);
  const std::vector<std::string> ragged = {"###", "#S", "###"};
  EXPECT_THROW(GridworldConfig::from_ascii(ragged), ConfigError);
  EXPECT_THROW(parse_policy("teleport"), ConfigError);
}

TEST(Gridworld, StepExamples) {
  auto c = GridworldConfig::default_layout();
  c.sticky_prob = 0.0;
  std::mt19937_64 rng(1);
  // Wall above the start: stay put.
  auto r = gridworld_step(c, {{1, 1}, Move::noop}, Move::up, rng);
  EXPECT_EQ(r.state.position, (Cell{1, 1}));
  EXPECT_FALSE(r.episode_end);
  r = gridworld_step(c, {{1, 1}, Move::noop}, Move::right, rng);
  EXPECT_EQ(r.state.position, (Cell{2, 1}));
  EXPECT_EQ(r.state.previous, Move::right);
  // Hazard at (4,4): episode ends without reward, back at start.
  r = gridworld_step(c, {{4, 5}, Move::noop}, Move::up, rng);
  EXPECT_TRUE(r.episode_end);
  EXPECT_EQ(r.reward, 0.0F);
  EXPECT_EQ(r.state.position, c.start);
  // Goal at (10,1).
  r = gridworld_step(c, {{10, 2}, Move::noop}, Move::up, rng);
  EXPECT_TRUE(r.episode_end);
  EXPECT_EQ(r.reward, 1.0F);
  EXPECT_EQ(r.state.position, c.start);
}

TEST(Gridworld, StickyRepeatsPreviousAction) {
  auto c = GridworldConfig::default_layout();
  c.sticky_prob = 1.0;
  std::mt19937_64 rng(2);
  const auto r = gridworld_step(c, {{2, 2}, Move::down}, Move::right, rng);
  EXPECT_EQ(r.state.position, (Cell{2, 3}));
  EXPECT_EQ(r.state.previous, Move::down);
}

TEST(Gridworld, Uniform01Range) {
  std::mt19937_64 rng(3);
  double lo = 1.0;
  double hi = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double u = uniform01(rng);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  EXPECT_GE(lo, 0.0);
  EXPECT_LT(hi, 1.0);
  EXPECT_LT(lo, 1e-3);
  EXPECT_GT(hi, 1 - 1e-3);
}

TEST(Render, DeterministicAndSized) {
  const auto c = GridworldConfig::default_layout();
  const auto a = render({{3, 3}, Move::noop}, c);
  EXPECT_EQ(a.size(), 48U * 48U * 3U);
  EXPECT_EQ(a, render({{3, 3}, Move::noop}, c));
  EXPECT_NE(a, render({{3, 4}, Move::noop}, c));
}

TEST(Render, ColorsAndGlow) {
  const auto c = GridworldConfig::default_layout();
  const auto f = render({{10, 10}, Move::up}, c);
  auto px = [&](int x, int y) {
    const auto* p = &f[static_cast<std::size_t>((y * 48 + x) * 3)];
    return std::array<std::uint8_t, 3>{p[0], p[1], p[2]};
  };
  EXPECT_EQ(px(0, 0), kWallRgb);          // border, far from the agent
  EXPECT_EQ(px(6, 6), kFloorRgb);         // interior floor of the left room
  EXPECT_EQ(px(18, 18), kHazardRgb);      // lava at (4,4)
  EXPECT_EQ(px(42, 6), kGoalRgb);         // goal cell (10,1)
  // Agent center: glow close to white and brighter than any floor pixel.
  const auto centre = px(42, 42);
  EXPECT_GT(centre[0], 200);
  EXPECT_GT(centre[1], 200);
  EXPECT_GT(centre[0], px(36, 42)[0]);
}

TEST(Render, EveryStandableCellHasItsOwnDigest) {
  for (const auto& c : {GridworldConfig::default_layout(), open_room(2), open_room(5)}) {
    const auto t = layout_thresholds(c);
    FrameReducer reduce(static_cast<std::size_t>(c.render_size), static_cast<std::size_t>(c.render_size), 3);
    std::set<std::pair<std::uint64_t, std::uint64_t>> seen;
    const auto cells = standable_cells(c);
    for (const auto& cell : cells) {
      const auto d = digest_of(reduce(render({cell, Move::noop}, c)), t);
      seen.insert({d.lo, d.hi});
    }
    EXPECT_EQ(seen.size(), cells.size()) << "grid " << c.grid_size;
  }
}

TEST(Policies, SweepOrderIsColumnBoustrophedon) {
  const auto c = open_room(2);
  const auto order = sweep_order(c);
  const std::vector<Cell> expect = {{1, 1}, {1, 2}, {2, 2}, {2, 1}};
  EXPECT_EQ(order, expect);
}

TEST(Policies, DistanceFieldAvoidsHazards) {
  const auto c = GridworldConfig::default_layout();
  const auto d = distance_field(c, *c.goal);
  // Only route between the rooms is the bridge on row 5.
  EXPECT_EQ(d[c.index(c.start)], 9 + 4 + 4);
  EXPECT_EQ(d[c.index({4, 4})], std::numeric_limits<int>::max());
}

TEST(Policies, NoopSeesOneInput) {
  const auto c = GridworldConfig::default_layout();
  DatasetSpec spec{PolicyKind::noop, 500};
  EXPECT_EQ(simulated_digests(c, spec, layout_thresholds(c)).size(), 1U);
}

TEST(Policies, SweeperCoversEveryReachableCell) {
  for (double sticky : {0.0, 0.25}) {
    auto c = GridworldConfig::default_layout();
    c.sticky_prob = sticky;
    c.seed = 5;
    DatasetSpec spec{PolicyKind::sweeper, 3000};
    EXPECT_EQ(simulated_digests(c, spec, layout_thresholds(c)).size(), sweep_order(c).size()) << sticky;
  }
}

TEST(Policies, SeekerCollectsReward) {
  auto c = GridworldConfig::default_layout();
  c.sticky_prob = 0.0;
  DatasetSpec spec{PolicyKind::reward_seeker, 200};
  double reward = 0.0;
  std::uint64_t starts = 0;
  simulate(c, spec, [&](const TrajectoryRecord& r) {
    reward += r.reward;
    starts += r.episode_start ? 1 : 0;
  });
  // Shortest path is 17 steps; each episode ends on the goal.
  EXPECT_EQ(reward, std::floor(200.0 / 17.0));
  EXPECT_EQ(starts, static_cast<std::uint64_t>(reward) + 1);
}

TEST(Datasets, SameSeedSameBytes) {
  auto c = GridworldConfig::default_layout();
  c.seed = 99;
  for (auto kind : {PolicyKind::uniform_random, PolicyKind::sweeper}) {
    DatasetSpec spec{kind, 400};
    std::stringstream a;
    std::stringstream b;
    generate_dataset(c, spec, a);
    generate_dataset(c, spec, b);
    EXPECT_EQ(a.str(), b.str());
    c.seed = 100;
    std::stringstream other;
    generate_dataset(c, spec, other);
    EXPECT_NE(a.str(), other.str());
    c.seed = 99;
  }
}

TEST(Datasets, FileAndSidecar) {
  TempDir dir;
  auto c = GridworldConfig::default_layout();
  DatasetSpec spec{PolicyKind::uniform_random, 64, "grid", "walker", DatasetRole::human};
  const auto m = generate_dataset(c, spec, dir / "walker.traj");
  TrajectoryFile f(dir / "walker.traj");
  EXPECT_EQ(f.manifest().frame_count, 64U);
  EXPECT_EQ(f.manifest().agent_id, "walker");
  EXPECT_EQ(f.manifest().environment_id, "grid");
  EXPECT_EQ(f.manifest().role, DatasetRole::human);
  EXPECT_EQ(f.manifest().action_count, kActionCount);
  EXPECT_EQ(m.frame_width, 48);
  TrajectoryRecord rec;
  ASSERT_TRUE(f.next(rec));
  EXPECT_TRUE(rec.episode_start);
}

TEST(Oracle, NoopIsDegenerate) {
  TempDir dir;
  auto c = GridworldConfig::default_layout();
  generate_dataset(c, {PolicyKind::noop, 300}, dir / "noop.traj");
  generate_dataset(c, {PolicyKind::uniform_random, 300}, dir / "random.traj");
  OracleEnvironment env;
  env.files = {dir / "noop.traj", dir / "random.traj"};
  env.thresholds = compute_thresholds(pipeline::pool_files(env.files, kDefaultGridSide));
  const auto v = oracle_objectives(dir / "noop.traj", env);
  EXPECT_EQ(v.input_entropy, 0.0);
  EXPECT_EQ(v.empowerment, 0.0);
  EXPECT_EQ(v.reward_rate, 0.0);
  // One (input, action) pair with one successor: repeats add information only
  // under the count-weighted variant.
  EXPECT_GT(v.information_gain, 0.0);
  EXPECT_GT(v.variants.at("information_gain/dirichlet_counts"), v.variants.at("information_gain/dirichlet_unique"));
}

TEST(Oracle, OpenRoomEmpowermentLimit) {
  // Uniform policy in a 2x2 room: three actions leave the agent in place and
  // two move it to distinct neighbours, so I = ln 5 - (3/5) ln 3.
  TempDir dir;
  auto c = open_room(2);
  c.seed = 7;
  c.render_size = 8;
  generate_dataset(c, {PolicyKind::uniform_random, 100000}, dir / "r.traj");
  OracleEnvironment env;
  env.files = {dir / "r.traj"};
  env.thresholds = layout_thresholds(c);
  const auto v = oracle_objectives(dir / "r.traj", env);
  EXPECT_NEAR(v.empowerment, std::log(5.0) - 0.6 * std::log(3.0), 5e-3);
  EXPECT_NEAR(v.empowerment, 0.950271, 5e-3);
  EXPECT_NEAR(v.input_entropy, std::log(4.0), 1e-3);
}

TEST(Oracle, MatchesFastPath) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 12; ++trial) {
    TempDir dir;
    const auto t = objscope::testing::random_trial(rng);
    const auto cmp = objscope::testing::compare_with_oracle(t, dir.path());
    EXPECT_EQ(cmp.keys, 13U);
    EXPECT_LE(cmp.worst_relative, 1e-9) << "trial " << trial << " key " << cmp.worst_key;
  }
}

TEST(Oracle, RefusesOversizedTables) {
  TempDir dir;
  std::mt19937_64 rng(8);
  const auto m = objscope::testing::make_manifest(8, 8, 1, 5, 2500);
  {
    std::ofstream out(dir / "noise.traj", std::ios::binary);
    TrajectoryWriter w(out, m);
    for (const auto& r : objscope::testing::random_records(m, rng)) w.write(r);
    w.finish();
  }
  write_manifest_sidecar(dir / "noise.traj", m);
  OracleEnvironment env;
  env.files = {dir / "noise.traj"};
  env.thresholds = compute_thresholds(pipeline::pool_files(env.files, kDefaultGridSide));
  EXPECT_THROW(oracle_objectives(dir / "noise.traj", env), OracleScaleError);
}
