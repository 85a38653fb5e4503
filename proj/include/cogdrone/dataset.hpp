#pragma once

// Step-structured episode datasets on disk.
//
//   out_dir/manifest.json
//   out_dir/episodes/ep_000000/episode.json    header: task, stage, spawn, outcome
//                              steps.jsonl     one canonical record per tick
//                              frames/step_0000.ppm
//                              COMPLETE

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cogdrone/atlas.hpp"
#include "cogdrone/canonical.hpp"
#include "cogdrone/harness.hpp"
#include "cogdrone/image.hpp"
#include "cogdrone/oracle_planner.hpp"
#include "cogdrone/task_engine.hpp"

namespace cogdrone {

namespace fs = std::filesystem;

inline constexpr int kDatasetFormatVersion = 1;
inline constexpr double kReplayTolerance = 1e-6;

inline std::string episode_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "ep_%06zu", index);
  return buf;
}

inline std::string frame_name(std::int64_t tick) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "step_%04lld.ppm", static_cast<long long>(tick));
  return buf;
}

inline Json world_json(const WorldConfig& w) {
  return Json{{"dt", w.dt},
              {"arena", Json{{"min", w.arena.min}, {"max", w.arena.max}}},
              {"hfov", w.camera.hfov},
              {"response_tau", w.response_tau},
              {"limits", Json{{"v_max", w.limits.v_max}, {"omega_max", w.limits.omega_max}}},
              {"command_frame", std::string(to_string(w.command_frame))},
              {"passage_margin", w.passage_margin}};
}

inline WorldConfig world_from_json(const Json& j) {
  WorldConfig w;
  w.dt = j.at("dt").get<double>();
  w.arena.min = j.at("arena").at("min").get<Vec3>();
  w.arena.max = j.at("arena").at("max").get<Vec3>();
  w.camera.hfov = j.at("hfov").get<double>();
  w.response_tau = j.at("response_tau").get<double>();
  w.limits.v_max = j.at("limits").at("v_max").get<double>();
  w.limits.omega_max = j.at("limits").at("omega_max").get<double>();
  w.command_frame = command_frame_from_string(j.at("command_frame").get<std::string>());
  w.passage_margin = j.at("passage_margin").get<double>();
  return w;
}

inline Json stage_json(const TrackStage& s) {
  return Json{{"stage_index", s.stage_index},
              {"gates", s.gates},
              {"slots", s.slots},
              {"spawn_region", s.spawn_region},
              {"time_limit", s.time_limit}};
}

inline TrackStage stage_from_json(const Json& header) {
  TrackStage s;
  s.task = parse_task(header.at("task"), BankParseOptions{});
  const auto& j = header.at("stage");
  s.stage_index = j.at("stage_index").get<std::size_t>();
  s.gates = j.at("gates").get<std::vector<GateSpec>>();
  s.slots = j.at("slots").get<std::vector<std::size_t>>();
  s.spawn_region = j.at("spawn_region").get<SpawnRegion>();
  s.time_limit = j.at("time_limit").get<double>();
  return s;
}

// ---------------------------------------------------------------------------
// Episodes

struct RecordOptions {
  bool frames = true;
  std::string episode_id = "ep_000000";
  std::uint64_t seed = 0;
};

struct EpisodeRecord {
  std::string episode_id;
  Json header;
  std::vector<Json> steps;
};

inline Json step_json(const StepRecord& s, bool last, bool terminal, bool success, bool frames) {
  Json obs{{"instruction", s.observation.instruction}, {"visible_gates", s.observation.visible_gates}};
  if (s.observation.directive) obs["directive"] = *s.observation.directive;
  if (frames) obs["frame"] = "frames/" + frame_name(s.observation.tick);
  return Json{{"tick", s.observation.tick},
              {"sim_time", s.observation.sim_time},
              {"pose", s.pose},
              {"action", s.command},
              {"observation", obs},
              {"is_first", s.observation.tick == 0},
              {"is_last", last},
              {"is_terminal", terminal},
              {"reward", last && success ? 1.0 : 0.0}};
}

/// Flies `controller` through `stage` and writes the episode directory
/// atomically: contents go to a temporary sibling that is renamed into place
/// only after the COMPLETE marker is written.
inline EpisodeRecord record_episode(const TrackStage& stage, const Pose& spawn, Controller& controller,
                                    WorldConfig world, const LabelAtlas& atlas, const fs::path& episode_dir,
                                    const RecordOptions& opts = {}) {
  const fs::path tmp = episode_dir.parent_path() / (".tmp_" + episode_dir.filename().string());
  std::error_code ec;
  fs::remove_all(tmp, ec);
  if (fs::exists(episode_dir)) throw IoError("episode directory already exists: " + episode_dir.string());
  try {
    fs::create_directories(tmp / "frames");
    world.render_frames = opts.frames;
    RunOptions run_opts;
    if (opts.frames)
      run_opts.sink = [&](const StepRecord& s) { write_ppm(tmp / "frames" / frame_name(s.observation.tick), *s.observation.frame); };
    const DualRateConfig rates{static_cast<int>(std::lround(1.0 / world.dt)), 2, ExecutionMode::lockstep, false};
    const auto dual = run_dual_rate(stage, spawn, controller, nullptr, rates, world, atlas, run_opts);
    const auto& run = dual.run;

    EpisodeRecord rec;
    rec.episode_id = opts.episode_id;
    const bool terminal = run.outcome.kind != OutcomeKind::timeout && run.outcome.kind != OutcomeKind::harness_error;
    std::string body;
    for (std::size_t k = 0; k < run.steps.size(); ++k) {
      const bool last = k + 1 == run.steps.size();
      rec.steps.push_back(step_json(run.steps[k], last, last && terminal, run.outcome.success(), opts.frames));
      body += canonical(rec.steps.back());
      body += '\n';
    }
    write_text_file(tmp / "steps.jsonl", body);
    rec.header = Json{{"format_version", kDatasetFormatVersion},
                      {"episode_id", opts.episode_id},
                      {"seed", opts.seed},
                      {"category", std::string(to_string(stage.task.category))},
                      {"task", stage.task},
                      {"stage", stage_json(stage)},
                      {"spawn", spawn},
                      {"final_pose", run.final_pose},
                      {"outcome", run.outcome},
                      {"num_steps", run.steps.size()},
                      {"frames", opts.frames},
                      {"world", world_json(world)},
                      {"events", run.events}};
    write_text_file(tmp / "episode.json", canonical(rec.header) + "\n");
    write_text_file(tmp / "COMPLETE", "");
    fs::rename(tmp, episode_dir);
    return rec;
  } catch (...) {
    fs::remove_all(tmp, ec);
    throw;
  }
}

inline EpisodeRecord read_episode(const fs::path& dir) {
  EpisodeRecord rec;
  rec.header = parse_json(read_text_file(dir / "episode.json"));
  rec.episode_id = rec.header.at("episode_id").get<std::string>();
  std::istringstream in(read_text_file(dir / "steps.jsonl"));
  std::string line;
  while (std::getline(in, line)) rec.steps.push_back(parse_json(line));
  return rec;
}

inline std::string steps_text(const EpisodeRecord& rec) {
  std::string out;
  for (const auto& s : rec.steps) out += canonical(s) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Dataset generation

struct DatasetConfig {
  std::size_t episodes_per_category = 10;
  std::uint64_t seed = 0;
  double split_fraction = 0.9;
  bool frames = true;
  bool force = false;  // allow a non-empty out_dir (its contents are replaced)
  int max_retries = 10;
  WorldConfig world;
  LayoutParams layout;
  PlannerParams planner;
};

inline Json layout_json(const LayoutParams& l) {
  Json j{{"gate_distance", l.gate_distance},
         {"lateral_spacing", l.lateral_spacing},
         {"arrangement", l.arrangement == Arrangement::arc ? "arc" : "line_abreast"},
         {"placement_jitter", l.placement_jitter},
         {"spawn_center", l.spawn_center},
         {"spawn_radius", l.spawn_radius},
         {"spawn_yaw_jitter", l.spawn_yaw_jitter},
         {"time_limit", l.time_limit}};
  if (l.gate_count) j["gate_count"] = *l.gate_count;
  return j;
}

inline Json planner_json(const PlannerParams& p) {
  return Json{{"nominal_speed", p.nominal_speed},
              {"exit_overshoot", p.exit_overshoot},
              {"tangent_scale", p.tangent_scale},
              {"arc_table_samples", p.arc_table_samples},
              {"verify_samples", p.verify_samples}};
}

inline Json dataset_config_json(const TaskBank& bank, const DatasetConfig& c) {
  return Json{{"bank", task_bank_json(bank)},
              {"episodes_per_category", c.episodes_per_category},
              {"seed", c.seed},
              {"split_fraction", c.split_fraction},
              {"frames", c.frames},
              {"max_retries", c.max_retries},
              {"world", world_json(c.world)},
              {"layout", layout_json(c.layout)},
              {"planner", planner_json(c.planner)}};
}

struct DatasetManifest {
  Json json;
  std::array<std::size_t, 3> counts{};
  std::vector<std::string> train;
  std::vector<std::string> test;
  [[nodiscard]] std::size_t total() const { return counts[0] + counts[1] + counts[2]; }
};

/// Per category: round(n * fraction) train episodes, chosen by a seeded shuffle.
inline std::size_t train_count(std::size_t n, double fraction) {
  return std::min(n, static_cast<std::size_t>(std::llround(static_cast<double>(n) * fraction)));
}

/// Episodes alternate categories (ep i has category i mod 3). Each episode
/// is a function of (bank, config, i); a failed attempt is resampled with a
/// derived sub-seed.
inline DatasetManifest generate_dataset(const TaskBank& bank, const DatasetConfig& cfg, const fs::path& out_dir,
                                        const LabelAtlas& atlas = {}) {
  if (cfg.episodes_per_category < 1) throw ValidationError("dataset: episodes_per_category must be >= 1");
  if (!(cfg.split_fraction >= 0.0 && cfg.split_fraction <= 1.0))
    throw ValidationError("dataset: split_fraction must be in [0, 1]");
  cfg.world.validate();
  if (fs::exists(out_dir) && !fs::is_empty(out_dir)) {
    if (!cfg.force) throw IoError("output directory is not empty: " + out_dir.string());
    fs::remove_all(out_dir);
  }
  fs::create_directories(out_dir / "episodes");

  const auto picks = select_tasks(bank, cfg.episodes_per_category, cfg.seed);
  const std::size_t total = 3 * cfg.episodes_per_category;
  std::array<std::vector<std::string>, 3> ids_by_cat;
  Json entries = Json::array();

  for (std::size_t i = 0; i < total; ++i) {
    const TaskSpec& task = *picks[i % 3][i / 3];
    const auto name = episode_name(i);
    const std::uint64_t ep_seed = derive_seed(cfg.seed, "episode", i);
    std::string last_error;
    bool done = false;
    for (int attempt = 0; attempt <= cfg.max_retries && !done; ++attempt) {
      const std::uint64_t attempt_seed = derive_seed(ep_seed, "attempt", static_cast<std::uint64_t>(attempt));
      try {
        Rng rng(attempt_seed);
        const TrackStage stage = instantiate_stage(task, cfg.layout, rng, i);
        const Pose spawn = randomize_spawn(stage.spawn_region, rng);
        plan_spline(spawn, stage.correct_gate(), cfg.planner);
        OracleController oracle(stage, cfg.world, cfg.planner);
        const auto rec = record_episode(stage, spawn, oracle, cfg.world, atlas, out_dir / "episodes" / name,
                                        RecordOptions{cfg.frames, name, attempt_seed});
        if (rec.header.at("outcome").at("kind") != "passed_correct") {
          fs::remove_all(out_dir / "episodes" / name);
          throw PlanningError("oracle episode ended in " + rec.header.at("outcome").at("kind").get<std::string>());
        }
        done = true;
      } catch (const PlanningError& e) {
        last_error = e.what();
      }
    }
    if (!done)
      throw PlanningError("episode " + name + ": no feasible stage after " + std::to_string(cfg.max_retries) +
                          " retries: " + last_error);
    ids_by_cat[i % 3].push_back(name);
    entries.push_back(Json{{"episode_id", name}, {"category", std::string(to_string(task.category))},
                           {"task_id", task.task_id}});
  }

  DatasetManifest m;
  Json counts = Json::object();
  for (Category c : kCategories) {
    const auto ci = category_index(c);
    auto ids = ids_by_cat[ci];
    m.counts[ci] = ids.size();
    counts[std::string(to_string(c))] = ids.size();
    Rng rng(derive_seed(cfg.seed, "split", ci));
    rng.shuffle(ids);
    const std::size_t n_train = train_count(ids.size(), cfg.split_fraction);
    m.train.insert(m.train.end(), ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
    m.test.insert(m.test.end(), ids.begin() + static_cast<std::ptrdiff_t>(n_train), ids.end());
  }
  std::sort(m.train.begin(), m.train.end());
  std::sort(m.test.begin(), m.test.end());
  m.json = Json{{"format_version", kDatasetFormatVersion},
                {"config_hash", sha256_hex(canonical(dataset_config_json(bank, cfg)))},
                {"seed", cfg.seed},
                {"total_episodes", total},
                {"category_counts", counts},
                {"split_fraction", cfg.split_fraction},
                {"split", Json{{"train", m.train}, {"test", m.test}}},
                {"frames", cfg.frames},
                {"episodes", entries}};
  write_text_file(out_dir / "manifest.json", canonical(m.json) + "\n");
  return m;
}

/// SHA-256 over every regular file's relative path and contents, in path order.
inline std::string tree_hash(const fs::path& root) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), root));
  std::sort(files.begin(), files.end());
  Sha256 h;
  for (const auto& f : files) {
    const auto rel = f.generic_string();
    h.update(rel);
    h.update(std::string_view("\0", 1));
    h.update(sha256_hex(read_text_file(root / f)));
  }
  return h.hex();
}

// ---------------------------------------------------------------------------
// Verification

struct VerifyReport {
  bool readable = true;
  std::size_t episodes_checked = 0;
  std::vector<std::string> violations;

  [[nodiscard]] bool clean() const { return readable && violations.empty(); }
  /// 0 clean, 1 violations, 2 unreadable.
  [[nodiscard]] int exit_code() const { return !readable ? 2 : violations.empty() ? 0 : 1; }
};

namespace detail {

inline void verify_episode(const fs::path& dir, const std::string& id, VerifyReport& report) {
  auto flag = [&](const std::string& what) { report.violations.push_back(id + ": " + what); };
  if (!fs::exists(dir / "COMPLETE")) return flag("missing COMPLETE marker");
  EpisodeRecord rec;
  TrackStage stage;
  WorldConfig world;
  StageOutcome outcome;
  Pose final_pose;
  try {
    rec = read_episode(dir);
    stage = stage_from_json(rec.header);
    world = world_from_json(rec.header.at("world"));
    outcome = rec.header.at("outcome").get<StageOutcome>();
    final_pose = rec.header.at("final_pose").get<Pose>();
  } catch (const std::exception& e) {
    return flag(std::string("unreadable episode: ") + e.what());
  }
  if (rec.episode_id != id) flag("episode_id " + rec.episode_id + " differs from directory name");
  const auto num_steps = rec.header.value("num_steps", std::size_t{0});
  if (rec.steps.size() != num_steps)
    return flag("steps file has " + std::to_string(rec.steps.size()) + " records, header says " +
                std::to_string(num_steps));
  if (rec.steps.empty()) return flag("episode has no steps");
  const bool frames = rec.header.value("frames", false);

  std::vector<Pose> poses;
  std::vector<VelocityCommand> commands;
  for (std::size_t k = 0; k < rec.steps.size(); ++k) {
    const auto& s = rec.steps[k];
    try {
      if (s.at("tick").get<std::int64_t>() != static_cast<std::int64_t>(k))
        return flag("step " + std::to_string(k) + ": tick " + s.at("tick").dump() + " breaks the monotone sequence");
      if (s.at("is_first").get<bool>() != (k == 0)) flag("step " + std::to_string(k) + ": bad is_first");
      if (s.at("is_last").get<bool>() != (k + 1 == rec.steps.size())) flag("step " + std::to_string(k) + ": bad is_last");
      poses.push_back(s.at("pose").get<Pose>());
      commands.push_back(s.at("action").get<VelocityCommand>());
      if (frames) {
        const auto rel = s.at("observation").at("frame").get<std::string>();
        try {
          read_frame_ppm(dir / rel);
        } catch (const std::exception& e) {
          flag("step " + std::to_string(k) + ": bad frame: " + e.what());
        }
      }
    } catch (const Json::exception& e) {
      return flag("step " + std::to_string(k) + ": malformed record: " + e.what());
    }
  }
  if (frames) {
    std::size_t n = 0;
    for (const auto& e : fs::directory_iterator(dir / "frames"))
      if (e.is_regular_file()) ++n;
    if (n != rec.steps.size()) flag("frames directory holds " + std::to_string(n) + " files for " +
                                    std::to_string(rec.steps.size()) + " steps");
  }

  // Replay: stored commands reproduce stored poses, and the outcome follows
  // from the trajectory.
  if (distance(poses.front().position, rec.header.at("spawn").get<Pose>().position) > kReplayTolerance)
    flag("first pose differs from spawn");
  poses.push_back(final_pose);
  VelocityCommand effective{};
  const double lag = world.response_tau > 0.0 ? 1.0 - std::exp(-world.dt / world.response_tau) : 1.0;
  std::optional<std::pair<std::size_t, std::size_t>> crossing;  // (step, gate)
  for (std::size_t k = 0; k < commands.size(); ++k) {
    if (lag < 1.0) {
      effective.vx += (commands[k].vx - effective.vx) * lag;
      effective.vy += (commands[k].vy - effective.vy) * lag;
      effective.vz += (commands[k].vz - effective.vz) * lag;
      effective.omega += (commands[k].omega - effective.omega) * lag;
    } else {
      effective = commands[k];
    }
    const Pose next = step_kinematics(poses[k], effective, world.dt, world.command_frame);
    if (distance(next.position, poses[k + 1].position) > kReplayTolerance ||
        std::abs(normalize_yaw(next.yaw - poses[k + 1].yaw)) > kReplayTolerance) {
      flag("step " + std::to_string(k) + ": replayed pose differs from stored pose");
      return;
    }
    if (auto hit = first_forward_crossing(poses[k].position, poses[k + 1].position, stage, world.passage_margin)) {
      if (!crossing) crossing.emplace(k, hit->first);
    }
  }
  const std::size_t n = commands.size();
  switch (outcome.kind) {
    case OutcomeKind::passed_correct:
    case OutcomeKind::passed_wrong: {
      if (!crossing || crossing->first + 1 != n) {
        flag("outcome " + std::string(to_string(outcome.kind)) + " not re-derivable: no crossing on the final step");
        break;
      }
      const auto& gate = stage.gates[crossing->second];
      const bool correct = crossing->second == stage.task.correct_option;
      if (outcome.gate_id != gate.gate_id || correct != (outcome.kind == OutcomeKind::passed_correct))
        flag("outcome disagrees with replayed crossing of " + gate.gate_id);
      break;
    }
    case OutcomeKind::timeout:
      if (crossing) flag("timeout outcome but the trajectory crosses a gate");
      if (static_cast<std::int64_t>(n) != max_ticks_for(stage.time_limit, world.dt)) flag("timeout before the time limit");
      break;
    case OutcomeKind::out_of_bounds:
      if (crossing) flag("out_of_bounds outcome but the trajectory crosses a gate");
      if (world.arena.contains(final_pose.position)) flag("out_of_bounds outcome but final pose is inside the arena");
      break;
    case OutcomeKind::harness_error:
      break;
  }
  if (outcome.ticks != static_cast<std::int64_t>(n)) flag("outcome ticks differ from step count");
}

}  // namespace detail

/// Checks manifest/episode consistency, frames, tick order, and re-derives
/// every outcome by replaying the stored commands.
inline VerifyReport verify_dataset(const fs::path& dir) {
  VerifyReport report;
  Json manifest;
  try {
    manifest = parse_json(read_text_file(dir / "manifest.json"));
    if (manifest.at("format_version").get<int>() != kDatasetFormatVersion)
      throw ValidationError("unsupported format_version");
  } catch (const std::exception& e) {
    report.readable = false;
    report.violations.push_back(std::string("manifest: ") + e.what());
    return report;
  }
  auto flag = [&](const std::string& what) { report.violations.push_back("manifest: " + what); };
  try {
    std::array<std::size_t, 3> counted{};
    std::set<std::string> listed;
    const auto& episodes = manifest.at("episodes");
    for (const auto& e : episodes) {
      const auto id = e.at("episode_id").get<std::string>();
      if (!listed.insert(id).second) flag("duplicate episode " + id);
      const auto cat = category_from_string(e.at("category").get<std::string>());
      if (!cat) {
        flag(id + ": unknown category");
        continue;
      }
      ++counted[category_index(*cat)];
      const fs::path ep_dir = dir / "episodes" / id;
      if (!fs::is_directory(ep_dir)) {
        report.violations.push_back(id + ": listed in manifest but missing");
        continue;
      }
      detail::verify_episode(ep_dir, id, report);
      ++report.episodes_checked;
      try {
        const auto header = parse_json(read_text_file(ep_dir / "episode.json"));
        if (header.at("category") != e.at("category")) report.violations.push_back(id + ": category differs from manifest");
      } catch (const std::exception&) {
      }
    }
    if (fs::is_directory(dir / "episodes"))
      for (const auto& e : fs::directory_iterator(dir / "episodes"))
        if (!listed.contains(e.path().filename().string()))
          flag("unlisted entry episodes/" + e.path().filename().string());

    std::size_t sum = 0;
    for (Category c : kCategories) {
      const auto n = manifest.at("category_counts").at(std::string(to_string(c))).get<std::size_t>();
      sum += n;
      if (n != counted[category_index(c)])
        flag("category_counts." + std::string(to_string(c)) + " = " + std::to_string(n) + " but " +
             std::to_string(counted[category_index(c)]) + " episodes listed");
    }
    if (sum != manifest.at("total_episodes").get<std::size_t>()) flag("category counts do not sum to total_episodes");
    if (sum != episodes.size()) flag("total_episodes differs from the episode list");

    std::set<std::string> seen;
    for (const char* part : {"train", "test"})
      for (const auto& id : manifest.at("split").at(part)) {
        const auto s = id.get<std::string>();
        if (!seen.insert(s).second) flag("episode " + s + " appears in more than one split entry");
        if (!listed.contains(s)) flag("split entry " + s + " is not a listed episode");
      }
    if (seen.size() != listed.size()) flag("splits do not cover every episode");
  } catch (const Json::exception& e) {
    flag(std::string("malformed: ") + e.what());
  }
  return report;
}

}  // namespace cogdrone
