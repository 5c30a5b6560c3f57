// Behaviour spectrum on the default gridworld, fully in memory: simulate the
// scripted agents, discretize with thresholds pooled over the agents, and
// print all five objectives per agent.
//
//   objscope_spectrum [steps]

#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "objscope/gridworld.hpp"
#include "objscope/objectives.hpp"
#include "objscope/preprocess.hpp"
#include "objscope/transition_tensor.hpp"

using namespace objscope;

int main(int argc, char** argv) {
  const std::uint64_t steps = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 20000;
  auto config = synth::GridworldConfig::default_layout();
  const auto side = static_cast<std::size_t>(config.render_size);

  struct Run {
    synth::PolicyKind kind;
    std::uint64_t seed;
  };
  const std::vector<Run> runs = {{synth::PolicyKind::noop, 1},
                                 {synth::PolicyKind::uniform_random, 2},
                                 {synth::PolicyKind::reward_seeker, 3},
                                 {synth::PolicyKind::sweeper, 4},
                                 {synth::PolicyKind::sweeper, 5}};  // last one is the human stand-in
  auto simulate = [&](const Run& r, auto&& sink) {
    auto c = config;
    c.seed = r.seed;
    synth::DatasetSpec spec;
    spec.policy = r.kind;
    spec.steps = steps;
    synth::simulate(c, spec, sink);
  };

  PixelValuePool pool;
  for (std::size_t a = 0; a + 1 < runs.size(); ++a) {
    FrameReducer reduce(side, side, 3);
    simulate(runs[a], [&](const TrajectoryRecord& rec) { pool.add(reduce(rec.frame)); });
  }
  const ThresholdTable thresholds = compute_thresholds(pool);

  std::vector<DigestTransitionCounter> counters(runs.size());
  std::vector<double> rewards(runs.size(), 0.0);
  CodebookBuilder seen;
  for (std::size_t a = 0; a < runs.size(); ++a) {
    FrameReducer reduce(side, side, 3);
    simulate(runs[a], [&](const TrajectoryRecord& rec) {
      counters[a].push(digest_of(reduce(rec.frame), thresholds), rec.action, rec.episode_start);
      rewards[a] += rec.reward;
    });
    seen.merge(counters[a].digests());
  }
  const Codebook codebook = seen.build();
  std::vector<CountTensor> tensors;
  for (const auto& c : counters) tensors.push_back(c.to_tensor(codebook, synth::kActionCount));

  std::printf("%llu steps per agent, %zu distinct inputs\n\n", static_cast<unsigned long long>(steps),
              codebook.size());
  std::printf("%-14s %10s %10s %10s %12s %10s\n", "agent", "reward", "jaccard", "entropy", "info_gain",
              "empower");
  for (std::size_t a = 0; a + 1 < runs.size(); ++a) {
    const auto v = compute_objectives(tensors[a], rewards[a], steps, &tensors.back());
    std::printf("%-14s %10.6f %10.6f %10.6f %12.6f %10.6f\n", std::string(synth::policy_name(runs[a].kind)).c_str(),
                v.reward_rate, *v.human_similarity, v.input_entropy, v.information_gain, v.empowerment);
  }
  return 0;
}
