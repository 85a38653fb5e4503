#pragma once

// Scored benchmark runs, reports and episode replay.

#include <array>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cogdrone/atlas.hpp"
#include "cogdrone/canonical.hpp"
#include "cogdrone/dataset.hpp"
#include "cogdrone/harness.hpp"
#include "cogdrone/image.hpp"
#include "cogdrone/oracle_planner.hpp"
#include "cogdrone/task_engine.hpp"

namespace cogdrone {

struct CategoryScore {
  std::int64_t attempts = 0;
  std::int64_t successes = 0;

  bool operator==(const CategoryScore&) const = default;
  /// Absent when there were no attempts.
  [[nodiscard]] std::optional<double> rate() const {
    if (attempts <= 0) return std::nullopt;
    return static_cast<double>(successes) / static_cast<double>(attempts);
  }
};

/// Sample-weighted success rate: total successes over total attempts.
inline std::optional<double> compute_overall(std::span<const CategoryScore> per_category) {
  std::int64_t a = 0;
  std::int64_t s = 0;
  for (const auto& c : per_category) {
    if (c.attempts < 0 || c.successes < 0 || c.successes > c.attempts)
      throw ValidationError("compute_overall: need 0 <= successes <= attempts");
    a += c.attempts;
    s += c.successes;
  }
  if (a == 0) return std::nullopt;
  return static_cast<double>(s) / static_cast<double>(a);
}

struct StageLogEntry {
  std::size_t stage_index = 0;
  Category category = Category::reasoning;
  std::string task_id;
  StageOutcome outcome;
  std::int64_t controller_calls = 0;
  std::int64_t reasoner_calls = 0;

  bool operator==(const StageLogEntry&) const = default;
};

struct BenchReport {
  std::string policy;
  std::string reasoner;
  std::string track_id;
  std::uint64_t seed = 0;
  std::array<CategoryScore, 3> categories{};  // by category_index
  std::optional<double> overall;
  std::vector<StageLogEntry> stages;
  Json config = Json::object();
  bool aborted = false;
  std::string abort_reason;

  bool operator==(const BenchReport&) const = default;

  /// With strict scoring a harness error counts as a failed attempt; otherwise
  /// it is logged but left out of the denominator.
  void add(const StageLogEntry& e, bool strict = true) {
    auto& c = categories[category_index(e.category)];
    if (strict || e.outcome.kind != OutcomeKind::harness_error) ++c.attempts;
    if (e.outcome.success()) ++c.successes;
    stages.push_back(e);
    overall = compute_overall(categories);
  }
};

/// Thrown when a policy connection fails mid-run; carries the stages scored so far.
class BenchAborted : public Error {
 public:
  BenchAborted(const std::string& what, BenchReport partial) : Error(what), report_(std::move(partial)) {}
  [[nodiscard]] const BenchReport& report() const { return report_; }

 private:
  BenchReport report_;
};

// ---------------------------------------------------------------------------
// Policies

/// Supplies the controller for each stage.
class PolicySource {
 public:
  virtual ~PolicySource() = default;
  virtual Controller& controller_for(const TrackStage& stage) = 0;
  [[nodiscard]] virtual std::string name() const = 0;
};

class OraclePolicySource final : public PolicySource {
 public:
  explicit OraclePolicySource(WorldConfig world = {}, PlannerParams params = {}) : world_(world), params_(params) {}
  Controller& controller_for(const TrackStage& stage) override {
    current_ = oracle_policy(stage, world_, params_);
    return *current_;
  }
  [[nodiscard]] std::string name() const override { return "oracle"; }

 private:
  WorldConfig world_;
  PlannerParams params_;
  std::unique_ptr<Controller> current_;
};

/// One controller shared across every stage (stateful policies, remote peers).
class SharedPolicySource final : public PolicySource {
 public:
  SharedPolicySource(std::string name, Controller& c) : name_(std::move(name)), controller_(&c) {}
  SharedPolicySource(std::string name, std::unique_ptr<Controller> c)
      : name_(std::move(name)), owned_(std::move(c)), controller_(owned_.get()) {}
  Controller& controller_for(const TrackStage&) override { return *controller_; }
  [[nodiscard]] std::string name() const override { return name_; }

 private:
  std::string name_;
  std::unique_ptr<Controller> owned_;
  Controller* controller_;
};

/// Seed of the built-in random policy for a benchmark seed.
inline std::uint64_t random_policy_seed(std::uint64_t bench_seed) { return derive_seed(bench_seed, "random_policy", 0); }

// ---------------------------------------------------------------------------
// Runs

struct BenchConfig {
  std::size_t stages_per_category = 30;
  std::uint64_t seed = 0;
  TaskSampling sampling = TaskSampling::cycle;
  WorldConfig world;
  LayoutParams layout;
  PlannerParams planner;
  DualRateConfig rates;
  bool strict = true;
};

inline std::string_view to_string(TaskSampling s) {
  switch (s) {
    case TaskSampling::cycle: return "cycle";
    case TaskSampling::without_replacement: return "without_replacement";
    case TaskSampling::with_replacement: return "with_replacement";
  }
  return "?";
}

inline Json bench_config_json(const BenchConfig& c) {
  return Json{{"stages_per_category", c.stages_per_category},
              {"seed", c.seed},
              {"sampling", std::string(to_string(c.sampling))},
              {"world", world_json(c.world)},
              {"render_frames", c.world.render_frames},
              {"layout", layout_json(c.layout)},
              {"planner", planner_json(c.planner)},
              {"control_hz", c.rates.control_hz},
              {"reason_hz", c.rates.reason_hz},
              {"mode", c.rates.mode == ExecutionMode::lockstep ? "lockstep" : "free_running"},
              {"strict", c.strict}};
}

/// Spawn pose of stage i; depends only on the track seed and i.
inline Pose stage_spawn(const Track& track, const TrackStage& stage) {
  Rng rng(derive_seed(track.rng_seed, "spawn", stage.stage_index));
  return randomize_spawn(stage.spawn_region, rng);
}

/// Runs every stage of a freshly built track. A lost policy connection
/// throws BenchAborted with the partial report.
inline BenchReport run_benchmark(const TaskBank& bank, const BenchConfig& cfg, PolicySource& policy,
                                 Reasoner* reasoner = nullptr, const std::string& reasoner_name = "none",
                                 const LabelAtlas& atlas = {}) {
  cfg.world.validate();
  cfg.rates.validate(cfg.world);
  const Track track = build_track(bank, cfg.stages_per_category, cfg.seed, cfg.layout, cfg.sampling);
  BenchReport report;
  report.policy = policy.name();
  report.reasoner = reasoner_name;
  report.track_id = track.track_id;
  report.seed = cfg.seed;
  report.config = bench_config_json(cfg);
  for (const auto& stage : track.stages) {
    const Pose spawn = stage_spawn(track, stage);
    try {
      Controller& controller = policy.controller_for(stage);
      const auto r = run_dual_rate(stage, spawn, controller, reasoner, cfg.rates, cfg.world, atlas);
      report.add({stage.stage_index, stage.task.category, stage.task.task_id, r.run.outcome, r.controller_calls,
                  static_cast<std::int64_t>(r.reasoner_calls.size())},
                 cfg.strict);
    } catch (const TransportError& e) {
      report.aborted = true;
      report.abort_reason = "stage " + std::to_string(stage.stage_index) + ": " + e.what();
      throw BenchAborted(report.abort_reason, report);
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Reports

inline void to_json(Json& j, const CategoryScore& c) {
  j = Json{{"attempts", c.attempts}, {"successes", c.successes}};
  if (auto r = c.rate()) j["rate"] = *r;
}

inline Json report_json(const BenchReport& r) {
  Json cats = Json::object();
  for (Category c : kCategories) cats[std::string(to_string(c))] = r.categories[category_index(c)];
  Json stages = Json::array();
  for (const auto& s : r.stages)
    stages.push_back(Json{{"stage_index", s.stage_index},
                          {"category", std::string(to_string(s.category))},
                          {"task_id", s.task_id},
                          {"outcome", s.outcome},
                          {"elapsed", s.outcome.elapsed},
                          {"controller_calls", s.controller_calls},
                          {"reasoner_calls", s.reasoner_calls}});
  Json j{{"format_version", 1},  {"policy", r.policy}, {"reasoner", r.reasoner}, {"track_id", r.track_id},
         {"seed", r.seed},       {"categories", cats}, {"stages", stages},       {"config", r.config},
         {"aborted", r.aborted}};
  j["overall"] = r.overall ? Json(*r.overall) : Json(nullptr);
  if (r.aborted) j["abort_reason"] = r.abort_reason;
  return j;
}

inline BenchReport report_from_json(const Json& j) {
  BenchReport r;
  try {
    r.policy = j.at("policy").get<std::string>();
    r.reasoner = j.at("reasoner").get<std::string>();
    r.track_id = j.at("track_id").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.config = j.at("config");
    r.aborted = j.at("aborted").get<bool>();
    r.abort_reason = j.value("abort_reason", std::string{});
    for (Category c : kCategories) {
      const auto& cj = j.at("categories").at(std::string(to_string(c)));
      r.categories[category_index(c)] = {cj.at("attempts").get<std::int64_t>(), cj.at("successes").get<std::int64_t>()};
    }
    if (!j.at("overall").is_null()) r.overall = j.at("overall").get<double>();
    for (const auto& s : j.at("stages")) {
      StageLogEntry e;
      e.stage_index = s.at("stage_index").get<std::size_t>();
      const auto cat = category_from_string(s.at("category").get<std::string>());
      if (!cat) throw ValidationError("report: unknown category");
      e.category = *cat;
      e.task_id = s.at("task_id").get<std::string>();
      e.outcome = s.at("outcome").get<StageOutcome>();
      e.controller_calls = s.at("controller_calls").get<std::int64_t>();
      e.reasoner_calls = s.at("reasoner_calls").get<std::int64_t>();
      r.stages.push_back(std::move(e));
    }
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("report: ") + e.what());
  }
  return r;
}

/// Percentage with one decimal, or an em dash for an absent rate.
inline std::string percent_cell(std::optional<double> rate) {
  if (!rate) return "—";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", *rate * 100.0);
  return buf;
}

inline std::string report_table_row(const BenchReport& r) {
  const auto& c = r.categories;
  return percent_cell(c[category_index(Category::reasoning)].rate()) + " | " +
         percent_cell(c[category_index(Category::human_recognition)].rate()) + " | " +
         percent_cell(c[category_index(Category::symbol_understanding)].rate()) + " | " + percent_cell(r.overall);
}

inline std::string report_markdown(const BenchReport& r) {
  std::string out = "# Benchmark report\n\n";
  out += "policy: " + r.policy + ", reasoner: " + r.reasoner + ", track: " + r.track_id +
         ", seed: " + std::to_string(r.seed) + "\n\n";
  out += "| Policy | Reasoning | Human Recognition | Symbol Understanding | Average |\n";
  out += "|---|---|---|---|---|\n";
  out += "| " + r.policy + " | " + report_table_row(r) + " |\n";
  if (r.aborted) out += "\nRun aborted: " + r.abort_reason + "\n";
  return out;
}

/// Writes report.json (canonical) and report.md into out_dir.
inline void emit_report(const BenchReport& r, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  write_text_file(out_dir / "report.json", canonical(report_json(r)) + "\n");
  write_text_file(out_dir / "report.md", report_markdown(r));
}

inline BenchReport read_report(const std::filesystem::path& path) {
  return report_from_json(parse_json(read_text_file(path)));
}

// ---------------------------------------------------------------------------
// Replay

struct ReplayMismatch {
  std::int64_t step = 0;
  std::string stored_hash;
  std::string rendered_hash;
};

struct ReplayResult {
  std::string episode_id;
  std::size_t steps = 0;
  std::size_t frames_compared = 0;
  std::vector<ReplayMismatch> mismatches;
  std::vector<std::string> errors;
  std::string trajectory;  // "tick sim_time x y z yaw vx vy vz omega" per line

  [[nodiscard]] bool ok() const { return mismatches.empty() && errors.empty(); }
};

/// Re-renders every stored pose and compares against stored frames (when the
/// episode has them). Writes trajectory.txt and, if requested, the rendered
/// frames into out_dir.
inline ReplayResult replay_episode(const std::filesystem::path& dir, const std::optional<std::filesystem::path>& out_dir = std::nullopt,
                                   bool write_frames = false, const LabelAtlas& atlas = {}) {
  ReplayResult res;
  EpisodeRecord rec;
  TrackStage stage;
  WorldConfig world;
  try {
    rec = read_episode(dir);
    stage = stage_from_json(rec.header);
    world = world_from_json(rec.header.at("world"));
  } catch (const std::exception& e) {
    res.errors.push_back(std::string("unreadable episode: ") + e.what());
    return res;
  }
  res.episode_id = rec.episode_id;
  const bool has_frames = rec.header.value("frames", false);
  if (out_dir) std::filesystem::create_directories(write_frames ? *out_dir / "frames" : *out_dir);
  for (std::size_t k = 0; k < rec.steps.size(); ++k) {
    const auto& s = rec.steps[k];
    Pose pose;
    VelocityCommand cmd;
    std::int64_t tick = 0;
    double t = 0.0;
    try {
      pose = s.at("pose").get<Pose>();
      cmd = s.at("action").get<VelocityCommand>();
      tick = s.at("tick").get<std::int64_t>();
      t = s.at("sim_time").get<double>();
    } catch (const Json::exception& e) {
      res.errors.push_back("step " + std::to_string(k) + ": malformed record: " + e.what());
      continue;
    }
    char line[256];
    std::snprintf(line, sizeof(line), "%lld %.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g\n",
                  static_cast<long long>(tick), t, pose.position.x, pose.position.y, pose.position.z, pose.yaw,
                  cmd.vx, cmd.vy, cmd.vz, cmd.omega);
    res.trajectory += line;
    ++res.steps;
    if (!has_frames && !write_frames) continue;
    const Frame rendered = render_fpv(pose, stage, world.camera, atlas);
    if (write_frames && out_dir) write_ppm(*out_dir / "frames" / frame_name(tick), rendered);
    if (!has_frames) continue;
    try {
      const Frame stored = read_frame_ppm(dir / s.at("observation").at("frame").get<std::string>());
      ++res.frames_compared;
      const auto a = sha256_hex(stored.rgb);
      const auto b = sha256_hex(rendered.rgb);
      if (a != b) res.mismatches.push_back({static_cast<std::int64_t>(k), a, b});
    } catch (const std::exception& e) {
      res.errors.push_back("step " + std::to_string(k) + ": " + e.what());
    }
  }
  if (out_dir) write_text_file(*out_dir / "trajectory.txt", res.trajectory);
  return res;
}

}  // namespace cogdrone
