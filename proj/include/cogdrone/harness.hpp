#pragma once

// Dual-rate policy execution: a controller called every tick (10 Hz) and an
// optional reasoner called every reason_interval_ticks (2 Hz) whose latest
// text output reaches the controller as Observation::directive.

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "cogdrone/camera.hpp"
#include "cogdrone/core.hpp"
#include "cogdrone/oracle_planner.hpp"
#include "cogdrone/rng.hpp"
#include "cogdrone/sim_world.hpp"

namespace cogdrone {

/// What a policy learns at reset. Carries the task without its answer.
struct StageMeta {
  std::size_t stage_index = 0;
  TaskBrief task;
  std::vector<GateSpec> gates;
  Pose spawn;
  double time_limit = 30.0;
  double dt = 0.1;
  CommandFrame command_frame = CommandFrame::body_yaw;
};

inline StageMeta stage_meta_for(const TrackStage& stage, const Pose& spawn, const WorldConfig& world) {
  return {stage.stage_index, brief_of(stage.task), stage.gates, spawn, stage.time_limit, world.dt,
          world.command_frame};
}

/// Fast channel: Observation -> VelocityCommand every tick.
class Controller {
 public:
  virtual ~Controller() = default;
  virtual void reset(const StageMeta& meta) = 0;
  virtual VelocityCommand act(const Observation& obs) = 0;
  virtual void episode_end(const StageOutcome&) {}
  /// Forces frame rendering for this controller's observations.
  [[nodiscard]] virtual bool wants_frames() const { return false; }
};

inline constexpr std::size_t kMaxDirectiveBytes = 512;

/// Slow channel: (instruction, keyframe) -> directive text.
class Reasoner {
 public:
  virtual ~Reasoner() = default;
  virtual std::string reason(const std::string& instruction, const Frame& keyframe) = 0;
};

// ---------------------------------------------------------------------------
// Built-in controllers

class ZeroController final : public Controller {
 public:
  void reset(const StageMeta&) override {}
  VelocityCommand act(const Observation&) override { return {}; }
};

class FixedCommandController final : public Controller {
 public:
  explicit FixedCommandController(VelocityCommand cmd) : cmd_(cmd) {}
  void reset(const StageMeta&) override {}
  VelocityCommand act(const Observation&) override { return cmd_; }

 private:
  VelocityCommand cmd_;
};

/// Flies a planned spline open-loop, dead-reckoning its own clamped commands
/// through the world model, and replans when the estimate strays more than
/// `replan_threshold` from the plan.
class SplineFollower {
 public:
  explicit SplineFollower(WorldConfig world = {}, PlannerParams params = {}, double replan_threshold = 0.5)
      : world_(world), params_(params), replan_threshold_(replan_threshold) {}

  void start(const StageMeta& meta) {
    world_.dt = meta.dt;
    world_.command_frame = meta.command_frame;
    estimate_ = meta.spawn;
    plan_.reset();
    target_.reset();
    replans_ = 0;
  }

  void set_target(const GateSpec& gate, std::int64_t tick) {
    target_ = gate;
    replan(tick);
  }

  [[nodiscard]] bool has_target() const { return target_.has_value(); }
  [[nodiscard]] const std::optional<GateSpec>& target() const { return target_; }
  [[nodiscard]] int replans() const { return replans_; }
  [[nodiscard]] const Pose& estimate() const { return estimate_; }

  VelocityCommand next(std::int64_t tick) {
    VelocityCommand cmd{};
    if (plan_) {
      auto idx = static_cast<std::size_t>(tick - plan_start_);
      if (idx < plan_->commands.size() &&
          distance(estimate_.position, plan_->poses[idx].position) > replan_threshold_) {
        ++replans_;
        replan(tick);
        idx = 0;
      }
      if (idx < plan_->commands.size()) cmd = plan_->commands[idx];
    }
    estimate_ = step_kinematics(estimate_, clamp_command(cmd, world_.limits), world_.dt, world_.command_frame);
    return cmd;
  }

 private:
  void replan(std::int64_t tick) {
    const auto path = plan_spline(estimate_, *target_, params_);
    plan_ = sample_commands(path, world_, estimate_.yaw, params_);
    plan_start_ = tick;
  }

  WorldConfig world_;
  PlannerParams params_;
  double replan_threshold_;
  Pose estimate_;
  std::optional<GateSpec> target_;
  std::optional<CommandPlan> plan_;
  std::int64_t plan_start_ = 0;
  int replans_ = 0;
};

/// Ground-truth upper bound: flies the expert spline to the correct gate.
class OracleController final : public Controller {
 public:
  explicit OracleController(const TrackStage& stage, WorldConfig world = {}, PlannerParams params = {})
      : correct_gate_id_(stage.correct_gate().gate_id), follower_(world, params) {}

  void reset(const StageMeta& meta) override {
    follower_.start(meta);
    for (const auto& g : meta.gates)
      if (g.gate_id == correct_gate_id_) follower_.set_target(g, 0);
    if (!follower_.has_target()) throw PlanningError("oracle: correct gate missing from stage");
  }
  VelocityCommand act(const Observation& obs) override { return follower_.next(obs.tick); }

 private:
  std::string correct_gate_id_;
  SplineFollower follower_;
};

inline std::unique_ptr<Controller> oracle_policy(const TrackStage& stage, const WorldConfig& world = {},
                                                 const PlannerParams& params = {}) {
  return std::make_unique<OracleController>(stage, world, params);
}

/// Near-random floor: picks one gate uniformly at reset and flies the expert
/// spline to it. One draw per reset, so a fixed seed fixes every choice.
class RandomGateController final : public Controller {
 public:
  explicit RandomGateController(std::uint64_t seed, WorldConfig world = {}, PlannerParams params = {})
      : rng_(seed), follower_(world, params) {}

  void reset(const StageMeta& meta) override {
    if (meta.gates.empty()) throw PlanningError("random policy: stage has no gates");
    follower_.start(meta);
    last_choice_ = static_cast<std::size_t>(rng_.below(meta.gates.size()));
    follower_.set_target(meta.gates[last_choice_], 0);
  }
  VelocityCommand act(const Observation& obs) override { return follower_.next(obs.tick); }
  [[nodiscard]] std::size_t last_choice() const { return last_choice_; }

 private:
  Rng rng_;
  SplineFollower follower_;
  std::size_t last_choice_ = 0;
};

inline std::unique_ptr<Controller> random_gate_policy(std::uint64_t seed, const WorldConfig& world = {},
                                                      const PlannerParams& params = {}) {
  return std::make_unique<RandomGateController>(seed, world, params);
}

// Directives naming a label asset: "fly through the gate with label_asset X".
inline std::string label_directive(std::string_view asset) {
  return "fly through the gate with label_asset " + std::string(asset);
}

inline std::optional<std::string> parse_label_directive(std::string_view text) {
  static constexpr std::string_view kKey = "label_asset ";
  const auto pos = text.find(kKey);
  if (pos == std::string_view::npos) return std::nullopt;
  auto rest = text.substr(pos + kKey.size());
  std::size_t n = 0;
  while (n < rest.size() && valid_asset_id(rest.substr(n, 1))) ++n;
  if (n == 0) return std::nullopt;
  return std::string(rest.substr(0, n));
}

/// Hovers until a directive names a gate label, then flies to that gate;
/// retargets whenever the named label changes.
class DirectiveFollower final : public Controller {
 public:
  explicit DirectiveFollower(WorldConfig world = {}, PlannerParams params = {}) : follower_(world, params) {}

  void reset(const StageMeta& meta) override {
    gates_ = meta.gates;
    follower_.start(meta);
    current_.reset();
  }
  VelocityCommand act(const Observation& obs) override {
    if (obs.directive) {
      auto label = parse_label_directive(*obs.directive);
      if (label && label != current_) {
        for (const auto& g : gates_)
          if (g.label_asset == *label) {
            follower_.set_target(g, obs.tick);
            current_ = label;
          }
      }
    }
    return follower_.next(obs.tick);
  }

 private:
  std::vector<GateSpec> gates_;
  SplineFollower follower_;
  std::optional<std::string> current_;
};

// ---------------------------------------------------------------------------
// Built-in reasoners

class IdentityReasoner final : public Reasoner {
 public:
  std::string reason(const std::string& instruction, const Frame&) override { return instruction; }
};

/// Exact-match instruction rewrite table; unknown instructions pass through.
class ScriptedReasoner final : public Reasoner {
 public:
  explicit ScriptedReasoner(std::vector<std::pair<std::string, std::string>> table) : table_(std::move(table)) {}
  std::string reason(const std::string& instruction, const Frame&) override {
    for (const auto& [from, to] : table_)
      if (from == instruction) return to;
    return instruction;
  }

 private:
  std::vector<std::pair<std::string, std::string>> table_;
};

// ---------------------------------------------------------------------------
// Dual-rate runner

enum class ExecutionMode { lockstep, free_running };

struct DualRateConfig {
  int control_hz = 10;
  int reason_hz = 2;
  ExecutionMode mode = ExecutionMode::lockstep;
  bool pace_wall_clock = true;  // free_running only: tick at control_hz in real time

  /// control_hz / reason_hz, floored when not divisible.
  [[nodiscard]] std::int64_t reason_interval_ticks() const {
    return std::max<std::int64_t>(1, control_hz / std::max(1, reason_hz));
  }
  void validate(const WorldConfig& world) const {
    if (control_hz <= 0 || reason_hz <= 0) throw ValidationError("dual-rate: rates must be positive");
    if (reason_hz > control_hz) throw ValidationError("dual-rate: reason_hz exceeds control_hz");
    if (std::abs(1.0 / world.dt - control_hz) > 1e-6 * control_hz)
      throw ValidationError("dual-rate: control_hz does not match world dt");
  }
};

struct ReasonerCall {
  std::int64_t tick = 0;          // tick the call was issued
  std::int64_t applied_tick = 0;  // tick its directive first reached the controller; -1 if never
  double latency_ms = 0.0;
  std::string directive;
  bool ok = true;
  std::string error;
};

struct DualRateRun {
  StageRun run;
  std::int64_t controller_calls = 0;
  std::vector<ReasonerCall> reasoner_calls;
  std::vector<std::int64_t> directive_age;  // per tick; -1 before the first directive
};

namespace detail {

inline bool valid_directive(const std::string& d) { return !d.empty() && d.size() <= kMaxDirectiveBytes; }

/// Single-slot latest-directive mailbox with one background worker.
class ReasonerWorker {
 public:
  explicit ReasonerWorker(Reasoner& reasoner) : reasoner_(reasoner), thread_([this] { loop(); }) {}
  ~ReasonerWorker() {
    {
      std::lock_guard lk(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    thread_.join();
  }
  ReasonerWorker(const ReasonerWorker&) = delete;
  ReasonerWorker& operator=(const ReasonerWorker&) = delete;

  /// False when a call is still in flight.
  bool submit(std::int64_t tick, std::string instruction, Frame frame) {
    std::lock_guard lk(mu_);
    if (busy_) return false;
    busy_ = true;
    request_ = Request{tick, std::move(instruction), std::move(frame)};
    cv_.notify_all();
    return true;
  }

  std::optional<ReasonerCall> take_result() {
    std::lock_guard lk(mu_);
    auto r = std::move(result_);
    result_.reset();
    return r;
  }

  void wait_idle() {
    std::unique_lock lk(mu_);
    cv_.wait(lk, [&] { return !busy_; });
  }

 private:
  struct Request {
    std::int64_t tick;
    std::string instruction;
    Frame frame;
  };

  void loop() {
    for (;;) {
      Request req;
      {
        std::unique_lock lk(mu_);
        cv_.wait(lk, [&] { return stop_ || request_.has_value(); });
        if (stop_) return;
        req = std::move(*request_);
        request_.reset();
      }
      ReasonerCall call;
      call.tick = req.tick;
      call.applied_tick = -1;
      const auto t0 = std::chrono::steady_clock::now();
      try {
        call.directive = reasoner_.reason(req.instruction, req.frame);
        if (!valid_directive(call.directive)) {
          call.ok = false;
          call.error = "directive empty or longer than 512 bytes";
        }
      } catch (const std::exception& e) {
        call.ok = false;
        call.error = e.what();
      }
      call.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      {
        std::lock_guard lk(mu_);
        result_ = std::move(call);  // replace-on-write
        busy_ = false;
      }
      cv_.notify_all();
    }
  }

  Reasoner& reasoner_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::optional<Request> request_;
  std::optional<ReasonerCall> result_;
  bool busy_ = false;
  bool stop_ = false;
  std::thread thread_;
};

}  // namespace detail

/// Runs one stage with the controller every tick and the reasoner (if any)
/// on ticks k = 0 (mod reason_interval_ticks).
///
/// Lockstep: the reasoner runs synchronously on its tick, so its directive
/// is visible to the controller on that same tick and the run is fully
/// deterministic. Free-running: the reasoner runs on a worker thread and a
/// finished directive is applied at the next tick boundary; a call still in
/// flight on a reasoning tick skips that slot.
inline DualRateRun run_dual_rate(const TrackStage& stage, const Pose& start, Controller& controller,
                                 Reasoner* reasoner, const DualRateConfig& rates, WorldConfig world,
                                 const LabelAtlas& atlas, const RunOptions& options = {}) {
  rates.validate(world);
  if (controller.wants_frames()) world.render_frames = true;
  const std::int64_t interval = rates.reason_interval_ticks();

  DualRateRun out;
  try {
    controller.reset(stage_meta_for(stage, start, world));
  } catch (const TransportError&) {
    throw;
  } catch (const std::exception& e) {
    out.run.outcome.kind = OutcomeKind::harness_error;
    out.run.outcome.error = e.what();
    out.run.events.push_back(std::string("reset failed: ") + e.what());
    out.run.final_pose = start;
    controller.episode_end(out.run.outcome);
    return out;
  }

  std::optional<std::string> directive;
  std::int64_t directive_tick = -1;
  std::vector<std::string> events;
  std::unique_ptr<detail::ReasonerWorker> worker;
  if (reasoner && rates.mode == ExecutionMode::free_running) worker = std::make_unique<detail::ReasonerWorker>(*reasoner);
  const auto wall_start = std::chrono::steady_clock::now();

  auto keyframe = [&](const Observation& obs, const Pose& pose) {
    return obs.frame ? *obs.frame : render_fpv(pose, stage, world.camera, atlas);
  };

  TickController tick_fn = [&](Observation& obs, const Pose& pose) -> VelocityCommand {
    if (worker && rates.pace_wall_clock) {
      std::this_thread::sleep_until(wall_start + std::chrono::duration<double>(obs.sim_time));
    }
    if (worker) {
      if (auto done = worker->take_result()) {
        if (done->ok) {
          directive = done->directive;
          directive_tick = obs.tick;
          done->applied_tick = obs.tick;
        } else {
          events.push_back("tick " + std::to_string(obs.tick) + ": reasoner failed: " + done->error);
        }
        out.reasoner_calls.push_back(std::move(*done));
      }
      if (obs.tick % interval == 0 && !worker->submit(obs.tick, obs.instruction, keyframe(obs, pose)))
        events.push_back("tick " + std::to_string(obs.tick) + ": reasoner busy, slot skipped");
    } else if (reasoner && obs.tick % interval == 0) {
      ReasonerCall call;
      call.tick = obs.tick;
      call.applied_tick = -1;
      const auto t0 = std::chrono::steady_clock::now();
      try {
        call.directive = reasoner->reason(obs.instruction, keyframe(obs, pose));
        if (!detail::valid_directive(call.directive)) {
          call.ok = false;
          call.error = "directive empty or longer than 512 bytes";
        }
      } catch (const TransportError&) {
        throw;
      } catch (const std::exception& e) {
        call.ok = false;
        call.error = e.what();
      }
      call.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      if (call.ok) {
        directive = call.directive;
        directive_tick = obs.tick;
        call.applied_tick = obs.tick;
      } else {
        events.push_back("tick " + std::to_string(obs.tick) + ": reasoner failed, directive stale: " +
                                 call.error);
      }
      out.reasoner_calls.push_back(std::move(call));
    }
    obs.directive = directive;
    out.directive_age.push_back(directive ? obs.tick - directive_tick : -1);
    ++out.controller_calls;
    return controller.act(obs);
  };

  try {
    out.run = run_stage(stage, start, tick_fn, world, atlas, options);
    out.run.events.insert(out.run.events.end(), events.begin(), events.end());
  } catch (...) {
    worker.reset();
    throw;
  }
  if (worker) {
    worker->wait_idle();
    if (auto done = worker->take_result()) out.reasoner_calls.push_back(std::move(*done));
    worker.reset();
  }
  controller.episode_end(out.run.outcome);
  return out;
}

}  // namespace cogdrone
