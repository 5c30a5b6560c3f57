#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "objscope/dataset_io.hpp"
#include "objscope/error.hpp"

namespace objscope::synth {

struct Cell {
  int x = 0;
  int y = 0;
  bool operator==(const Cell&) const = default;
};

enum class Move : std::uint16_t { up = 0, down = 1, left = 2, right = 3, noop = 4 };
inline constexpr std::uint16_t kActionCount = 5;

inline constexpr std::string_view kDefaultLayout[] = {
    "############",  //
    "#S..#####.G#",  //
    "#...#####..#",  //
    "#...#####..#",  //
    "#...LLLLL..#",  //
    "#..........#",  //
    "#...LLLLL..#",  //
    "#...#####..#",  //
    "#...#####..#",  //
    "#...#####..#",  //
    "#...#####..#",  //
    "############",
};

// Square gridworld. Walls block movement; stepping on a hazard ends the
// episode without reward; stepping on the goal pays 1 and ends the episode.
// Either way the agent respawns at `start`.
struct GridworldConfig {
  int grid_size = 12;
  std::vector<bool> walls;    // row-major, grid_size^2
  std::vector<bool> hazards;  // row-major, grid_size^2
  std::optional<Cell> goal;
  Cell start{1, 1};
  int render_size = 48;
  double sticky_prob = 0.25;
  std::uint64_t seed = 0;

  [[nodiscard]] std::size_t index(Cell c) const { return static_cast<std::size_t>(c.y * grid_size + c.x); }
  [[nodiscard]] bool inside(Cell c) const { return c.x >= 0 && c.y >= 0 && c.x < grid_size && c.y < grid_size; }
  [[nodiscard]] bool wall(Cell c) const { return !inside(c) || walls[index(c)]; }
  [[nodiscard]] bool hazard(Cell c) const { return inside(c) && hazards[index(c)]; }
  [[nodiscard]] bool is_goal(Cell c) const { return goal && *goal == c; }
  [[nodiscard]] int cell_pixels() const { return render_size / grid_size; }

  // '#' wall, 'L' hazard, 'G' goal, 'S' start, anything else floor.
  template <typename Rows>
  static GridworldConfig from_ascii(const Rows& rows) {
    GridworldConfig c;
    c.grid_size = static_cast<int>(std::size(rows));
    c.walls.assign(static_cast<std::size_t>(c.grid_size * c.grid_size), false);
    c.hazards = c.walls;
    int y = 0;
    for (std::string_view row : rows) {
      if (static_cast<int>(row.size()) != c.grid_size) throw ConfigError("gridworld layout must be square");
      for (int x = 0; x < c.grid_size; ++x) {
        const Cell cell{x, y};
        switch (row[static_cast<std::size_t>(x)]) {
          case '#': c.walls[c.index(cell)] = true; break;
          case 'L': c.hazards[c.index(cell)] = true; break;
          case 'G': c.goal = cell; break;
          case 'S': c.start = cell; break;
          default: break;
        }
      }
      ++y;
    }
    c.render_size = c.grid_size * 4;
    return c;
  }

  static GridworldConfig default_layout() { return from_ascii(kDefaultLayout); }

  void validate() const {
    if (grid_size < 2) throw ConfigError("gridworld: grid_size must be at least 2");
    const auto cells = static_cast<std::size_t>(grid_size * grid_size);
    if (walls.size() != cells || hazards.size() != cells) throw ConfigError("gridworld: layout size mismatch");
    if (render_size < grid_size || render_size % grid_size != 0) {
      throw ConfigError("gridworld: render_size must be a positive multiple of grid_size");
    }
    if (render_size > 65535) throw ConfigError("gridworld: render_size too large");
    if (!(sticky_prob >= 0.0 && sticky_prob <= 1.0)) throw ConfigError("gridworld: sticky_prob must lie in [0,1]");
    if (goal && (wall(*goal) || hazard(*goal))) throw ConfigError("gridworld: goal cell must be open floor");
    if (wall(start) || hazard(start) || is_goal(start)) throw ConfigError("gridworld: start cell must be open floor");
  }

  // Cells an agent can occupy when observed: open, not hazard, not goal.
  [[nodiscard]] bool standable(Cell c) const { return !wall(c) && !hazard(c) && !is_goal(c); }
};

struct GridworldState {
  Cell position;
  Move previous = Move::noop;  // last executed action, repeated by sticky steps
};

struct StepResult {
  GridworldState state;
  float reward = 0.0F;
  bool episode_end = false;
};

inline Cell moved(Cell c, Move m) {
  switch (m) {
    case Move::up: return {c.x, c.y - 1};
    case Move::down: return {c.x, c.y + 1};
    case Move::left: return {c.x - 1, c.y};
    case Move::right: return {c.x + 1, c.y};
    case Move::noop: return c;
  }
  return c;
}

// 53-bit uniform in [0,1); independent of the standard library's distributions
// so datasets are identical across toolchains.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline GridworldState initial_state(const GridworldConfig& config) { return {config.start, Move::noop}; }

// Sticky rule first, then movement; walls and borders leave the agent in place.
inline StepResult gridworld_step(const GridworldConfig& config, const GridworldState& state, Move action,
                                 std::mt19937_64& rng) {
  Move executed = action;
  if (config.sticky_prob > 0.0 && uniform01(rng) < config.sticky_prob) executed = state.previous;
  StepResult r;
  r.state.previous = executed;
  const Cell target = moved(state.position, executed);
  r.state.position = config.wall(target) ? state.position : target;
  if (config.is_goal(r.state.position)) {
    r.reward = 1.0F;
    r.episode_end = true;
  } else if (config.hazard(r.state.position)) {
    r.episode_end = true;
  }
  if (r.episode_end) r.state = initial_state(config);
  return r;
}

// ---------------------------------------------------------------------------
// Rendering

inline constexpr std::array<std::uint8_t, 3> kFloorRgb = {110, 110, 110};
inline constexpr std::array<std::uint8_t, 3> kWallRgb = {30, 30, 30};
inline constexpr std::array<std::uint8_t, 3> kHazardRgb = {200, 40, 20};
inline constexpr std::array<std::uint8_t, 3> kGoalRgb = {60, 220, 60};

// RGB frame: static map colors plus a bright agent "glow" that blends toward
// white with a separable tent of half-width 1.5 cells around the agent center.
// The glow spreads position information over the whole neighbourhood so it
// survives an 8x8 bilinear reduction.
inline std::vector<std::uint8_t> render(const GridworldState& state, const GridworldConfig& config) {
  const int n = config.render_size;
  const int cp = config.cell_pixels();
  const double radius = 1.5 * cp;
  const double cx = (state.position.x + 0.5) * cp;
  const double cy = (state.position.y + 0.5) * cp;
  std::vector<std::uint8_t> frame(static_cast<std::size_t>(n * n * 3));
  for (int py = 0; py < n; ++py) {
    const double fy = std::max(0.0, 1.0 - std::abs(py + 0.5 - cy) / radius);
    for (int px = 0; px < n; ++px) {
      const Cell cell{px / cp, py / cp};
      const auto& base = config.wall(cell)       ? kWallRgb
                         : config.hazard(cell)   ? kHazardRgb
                         : config.is_goal(cell)  ? kGoalRgb
                                                 : kFloorRgb;
      const double fx = std::max(0.0, 1.0 - std::abs(px + 0.5 - cx) / radius);
      const double glow = fx * fy;
      auto* out = &frame[static_cast<std::size_t>((py * n + px) * 3)];
      for (int ch = 0; ch < 3; ++ch) {
        out[ch] = static_cast<std::uint8_t>(std::lround(base[ch] + (255.0 - base[ch]) * glow));
      }
    }
  }
  return frame;
}

// ---------------------------------------------------------------------------
// Scripted agents

enum class PolicyKind { noop, uniform_random, sweeper, reward_seeker };

inline std::string_view policy_name(PolicyKind k) {
  switch (k) {
    case PolicyKind::noop: return "noop";
    case PolicyKind::uniform_random: return "random";
    case PolicyKind::sweeper: return "sweeper";
    case PolicyKind::reward_seeker: return "reward_seeker";
  }
  return "";
}

inline PolicyKind parse_policy(std::string_view s) {
  if (s == "noop") return PolicyKind::noop;
  if (s == "random" || s == "uniform_random") return PolicyKind::uniform_random;
  if (s == "sweeper") return PolicyKind::sweeper;
  if (s == "reward_seeker" || s == "seeker") return PolicyKind::reward_seeker;
  throw ConfigError("unknown policy '" + std::string(s) + "'");
}

// Breadth-first distances to `target` over safe cells. The goal is passable
// only when it is the target itself.
inline std::vector<int> distance_field(const GridworldConfig& config, Cell target) {
  constexpr int kFar = std::numeric_limits<int>::max();
  std::vector<int> dist(static_cast<std::size_t>(config.grid_size * config.grid_size), kFar);
  std::deque<Cell> queue{target};
  dist[config.index(target)] = 0;
  while (!queue.empty()) {
    const Cell c = queue.front();
    queue.pop_front();
    for (auto m : {Move::up, Move::down, Move::left, Move::right}) {
      const Cell nb = moved(c, m);
      if (config.wall(nb) || config.hazard(nb) || config.is_goal(nb)) continue;
      if (dist[config.index(nb)] != kFar) continue;
      dist[config.index(nb)] = dist[config.index(c)] + 1;
      queue.push_back(nb);
    }
  }
  return dist;
}

// Greedy step down a distance field; ties resolve in up/down/left/right order.
inline Move descend(const GridworldConfig& config, const std::vector<int>& dist, Cell from) {
  Move best = Move::noop;
  int best_d = dist[config.index(from)];
  for (auto m : {Move::up, Move::down, Move::left, Move::right}) {
    const Cell nb = moved(from, m);
    if (!config.inside(nb) || config.wall(nb)) continue;
    const int d = dist[config.index(nb)];
    if (d < best_d) {
      best_d = d;
      best = m;
    }
  }
  return best;
}

// Standable cells reachable from start, in column-major boustrophedon order
// (odd columns top-down, even columns bottom-up).
inline std::vector<Cell> sweep_order(const GridworldConfig& config) {
  const auto dist = distance_field(config, config.start);
  std::vector<Cell> order;
  for (int x = 0; x < config.grid_size; ++x) {
    for (int k = 0; k < config.grid_size; ++k) {
      const int y = (x % 2 == 1) ? k : config.grid_size - 1 - k;
      const Cell c{x, y};
      if (config.standable(c) && dist[config.index(c)] != std::numeric_limits<int>::max()) order.push_back(c);
    }
  }
  return order;
}

class Policy {
 public:
  Policy(PolicyKind kind, const GridworldConfig& config, std::uint64_t seed)
      : kind_(kind), config_(config), rng_(seed ^ 0xA5A5A5A55A5A5A5AULL) {
    if (kind_ == PolicyKind::sweeper) {
      targets_ = sweep_order(config_);
      if (config_.goal) targets_.push_back(*config_.goal);
      visited_.assign(targets_.size(), false);
      for (const auto& t : targets_) fields_.push_back(distance_field(config_, t));
    } else if (kind_ == PolicyKind::reward_seeker && config_.goal) {
      fields_.push_back(distance_field(config_, *config_.goal));
    }
  }

  [[nodiscard]] PolicyKind kind() const { return kind_; }

  Move act(const GridworldState& s) {
    switch (kind_) {
      case PolicyKind::noop: return Move::noop;
      case PolicyKind::uniform_random: return static_cast<Move>(rng_() % kActionCount);
      case PolicyKind::reward_seeker:
        return fields_.empty() ? Move::noop : descend(config_, fields_.front(), s.position);
      case PolicyKind::sweeper: return sweep(s);
    }
    return Move::noop;
  }

  // Called with the post-step outcome so the sweeper can restart its period
  // after collecting the goal.
  void observe(const StepResult& r) {
    if (kind_ == PolicyKind::sweeper && r.reward > 0.0F) std::fill(visited_.begin(), visited_.end(), false);
  }

 private:
  Move sweep(const GridworldState& s) {
    for (std::size_t t = 0; t < targets_.size(); ++t) {
      if (targets_[t] == s.position) visited_[t] = true;
    }
    auto next = std::find(visited_.begin(), visited_.end(), false);
    if (next == visited_.end()) {
      std::fill(visited_.begin(), visited_.end(), false);
      for (std::size_t t = 0; t < targets_.size(); ++t) visited_[t] = targets_[t] == s.position;
      next = std::find(visited_.begin(), visited_.end(), false);
      if (next == visited_.end()) return Move::noop;
    }
    const auto t = static_cast<std::size_t>(next - visited_.begin());
    return descend(config_, fields_[t], s.position);
  }

  PolicyKind kind_;
  const GridworldConfig& config_;
  std::mt19937_64 rng_;
  std::vector<Cell> targets_;
  std::vector<bool> visited_;
  std::vector<std::vector<int>> fields_;
};

// ---------------------------------------------------------------------------
// Dataset generation

struct DatasetSpec {
  PolicyKind policy = PolicyKind::uniform_random;
  std::uint64_t steps = 1000;
  std::string environment_id = "gridworld";
  std::string agent_id;  // defaults to the policy name
  DatasetRole role = DatasetRole::agent;
};

inline Manifest dataset_manifest(const GridworldConfig& config, const DatasetSpec& spec) {
  Manifest m;
  m.environment_id = spec.environment_id;
  m.agent_id = spec.agent_id.empty() ? std::string(policy_name(spec.policy)) : spec.agent_id;
  m.role = spec.role;
  m.frame_width = static_cast<std::uint16_t>(config.render_size);
  m.frame_height = static_cast<std::uint16_t>(config.render_size);
  m.channels = 3;
  m.action_count = kActionCount;
  m.frame_count = spec.steps;
  m.sticky_action_prob = static_cast<float>(config.sticky_prob);
  return m;
}

// Runs the policy and hands each record to `sink`. Record t holds the
// observation before action t, the action, and the reward it earned; the
// record after a goal or hazard starts a new episode.
template <typename Sink>
void simulate(const GridworldConfig& config, const DatasetSpec& spec, Sink&& sink) {
  config.validate();
  if (spec.steps == 0) throw ConfigError("generate_dataset: steps must be at least 1");
  std::mt19937_64 env_rng(config.seed);
  Policy policy(spec.policy, config, config.seed);
  GridworldState state = initial_state(config);
  bool episode_start = true;
  TrajectoryRecord rec;
  // Frames depend only on the agent cell.
  std::vector<std::vector<std::uint8_t>> frames(static_cast<std::size_t>(config.grid_size * config.grid_size));
  for (std::uint64_t t = 0; t < spec.steps; ++t) {
    const Move action = policy.act(state);
    const StepResult r = gridworld_step(config, state, action, env_rng);
    policy.observe(r);
    auto& frame = frames[config.index(state.position)];
    if (frame.empty()) frame = render(state, config);
    rec.frame = frame;
    rec.action = static_cast<std::uint16_t>(action);
    rec.reward = r.reward;
    rec.episode_start = episode_start;
    sink(static_cast<const TrajectoryRecord&>(rec));
    episode_start = r.episode_end;
    state = r.state;
  }
}

inline Manifest generate_dataset(const GridworldConfig& config, const DatasetSpec& spec, std::ostream& out) {
  config.validate();
  const Manifest m = dataset_manifest(config, spec);
  TrajectoryWriter writer(out, m);
  simulate(config, spec, [&](const TrajectoryRecord& rec) { writer.write(rec); });
  writer.finish();
  return m;
}

inline Manifest generate_dataset(const GridworldConfig& config, const DatasetSpec& spec,
                                 const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot create " + path.string());
  Manifest m = generate_dataset(config, spec, out);
  out.close();
  if (!out) throw IoError("failed writing " + path.string());
  write_manifest_sidecar(path, m);
  return m;
}

}  // namespace objscope::synth
