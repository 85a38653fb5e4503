// Builds a small track from the bundled bank, flies the oracle and a random
// policy through it, and saves the first stage's spawn view as a PPM.

#include <cstdio>
#include <iostream>

#include "cogdrone/cogdrone.hpp"

using namespace cogdrone;

int main(int argc, char** argv) {
  const std::uint64_t seed = argc > 1 ? std::stoull(argv[1]) : 0;
  const TaskBank bank = sample_task_bank();
  const Track track = build_track(bank, 2, seed);
  const WorldConfig world;
  const LabelAtlas atlas;

  std::cout << track.track_id << ": " << track.stages.size() << " stages\n";
  auto random = random_gate_policy(seed);
  for (const auto& stage : track.stages) {
    const Pose spawn = stage_spawn(track, stage);
    OracleController oracle(stage);
    const DualRateConfig rates;
    const auto a = run_dual_rate(stage, spawn, oracle, nullptr, rates, world, atlas);
    const auto b = run_dual_rate(stage, spawn, *random, nullptr, rates, world, atlas);
    std::printf("stage %zu [%s] %s\n  oracle: %s in %.1f s\n  random: %s", stage.stage_index,
                std::string(to_string(stage.task.category)).c_str(), stage.task.prompt.c_str(),
                std::string(to_string(a.run.outcome.kind)).c_str(), a.run.outcome.elapsed,
                std::string(to_string(b.run.outcome.kind)).c_str());
    if (b.run.outcome.gate_id) std::printf(" (%s)", b.run.outcome.gate_id->c_str());
    std::printf("\n");
  }

  const auto& first = track.stages.front();
  write_ppm("spawn_view.ppm", render_fpv(stage_spawn(track, first), first, world.camera, atlas));
  std::cout << "wrote spawn_view.ppm\n";
  return 0;
}
