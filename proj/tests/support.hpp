#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "objscope/dataset_io.hpp"
#include "objscope/transition_tensor.hpp"

namespace objscope::testing {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("objscope-test-" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  [[nodiscard]] const fs::path& path() const { return path_; }
  [[nodiscard]] fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline Manifest make_manifest(std::uint16_t w, std::uint16_t h, std::uint8_t channels, std::uint16_t actions,
                              std::uint64_t frames) {
  Manifest m;
  m.environment_id = "env";
  m.agent_id = "agent";
  m.frame_width = w;
  m.frame_height = h;
  m.channels = channels;
  m.action_count = actions;
  m.frame_count = frames;
  m.sticky_action_prob = 0.25F;
  return m;
}

inline std::vector<TrajectoryRecord> random_records(const Manifest& m, std::mt19937_64& rng) {
  std::vector<TrajectoryRecord> out(m.frame_count);
  for (std::size_t t = 0; t < out.size(); ++t) {
    auto& r = out[t];
    r.frame.resize(m.frame_bytes());
    for (auto& b : r.frame) b = static_cast<std::uint8_t>(rng());
    r.action = static_cast<std::uint16_t>(rng() % m.action_count);
    r.reward = static_cast<float>(static_cast<int>(rng() % 7) - 3) * 0.5F;
    r.episode_start = t == 0 || rng() % 5 == 0;
  }
  return out;
}

// Random sparse count tensor: `n` draws of (i, j, k) with small multiplicities.
inline CountTensor random_tensor(std::mt19937_64& rng, TensorDims dims, std::size_t n) {
  CountAccumulator acc(dims);
  for (std::size_t e = 0; e < n; ++e) {
    acc.add({static_cast<std::uint32_t>(rng() % dims.inputs), static_cast<std::uint16_t>(rng() % dims.actions),
             static_cast<std::uint32_t>(rng() % dims.inputs)},
            1 + rng() % 4);
  }
  return acc.finish();
}

}  // namespace objscope::testing
