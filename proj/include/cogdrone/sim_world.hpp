#pragma once

// Fixed-timestep kinematic world: command integration, gate passage, bounds
// and the per-stage tick loop.

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cogdrone/atlas.hpp"
#include "cogdrone/camera.hpp"
#include "cogdrone/core.hpp"

namespace cogdrone {

enum class CommandFrame { body_yaw, world };

inline std::string_view to_string(CommandFrame f) { return f == CommandFrame::world ? "world" : "body_yaw"; }

inline CommandFrame command_frame_from_string(std::string_view s) {
  if (s == "body_yaw") return CommandFrame::body_yaw;
  if (s == "world") return CommandFrame::world;
  throw ValidationError("unknown command frame '" + std::string(s) + "'");
}

struct ArenaBounds {
  Vec3 min{-10.0, -25.0, 0.0};
  Vec3 max{40.0, 25.0, 15.0};

  [[nodiscard]] bool contains(const Vec3& p) const {
    return p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y && p.z >= min.z &&
           p.z <= max.z;
  }
};

struct WorldConfig {
  double dt = 0.1;  // 10 Hz control
  ArenaBounds arena;
  CameraConfig camera;
  double response_tau = 0.0;  // first-order velocity lag; 0 tracks setpoints instantly
  CommandLimits limits;
  CommandFrame command_frame = CommandFrame::body_yaw;
  double passage_margin = 0.0;  // drone radius; shrinks the effective aperture
  bool render_frames = false;

  void validate() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ValidationError("world: dt must be positive");
    if (!(response_tau >= 0.0)) throw ValidationError("world: response_tau must be >= 0");
    if (!(passage_margin >= 0.0)) throw ValidationError("world: passage_margin must be >= 0");
    camera.validate();
  }
};

/// One tick of yaw-only kinematics. Translation uses the pre-step yaw:
///   yaw' = normalize(yaw + omega*dt)
///   p'   = p + Rz(yaw)*(vx, vy, 0)*dt + (0, 0, vz)*dt
inline Pose step_kinematics(const Pose& pose, const VelocityCommand& cmd, double dt,
                            CommandFrame frame = CommandFrame::body_yaw) {
  if (!pose.position.finite() || !std::isfinite(pose.yaw) || !cmd.finite() || !std::isfinite(dt))
    throw ValidationError("step_kinematics: non-finite input");
  if (!(dt > 0.0)) throw ValidationError("step_kinematics: dt must be positive");
  Pose next = pose;
  if (frame == CommandFrame::body_yaw) {
    const double c = std::cos(pose.yaw);
    const double s = std::sin(pose.yaw);
    next.position.x = pose.position.x + (c * cmd.vx - s * cmd.vy) * dt;
    next.position.y = pose.position.y + (s * cmd.vx + c * cmd.vy) * dt;
  } else {
    next.position.x = pose.position.x + cmd.vx * dt;
    next.position.y = pose.position.y + cmd.vy * dt;
  }
  next.position.z = pose.position.z + cmd.vz * dt;
  next.yaw = normalize_yaw(pose.yaw + cmd.omega * dt);
  return next;
}

enum class CrossingDirection { forward, backward };

struct GateCrossing {
  Vec3 point;
  CrossingDirection direction = CrossingDirection::forward;
  double fraction = 0.0;  // position along the segment, [0, 1]
};

/// Signed distance of p in front of the gate plane (along its normal).
inline double signed_plane_distance(const Vec3& p, const GateSpec& gate) {
  return (p - gate.center).dot(gate.normal());
}

/// Whether a point on the gate plane, given by in-plane (lateral, vertical)
/// offsets from the centre, lies inside the aperture.
inline bool inside_aperture(double u, double v, const GateSpec& gate, double margin = 0.0) {
  if (gate.shape == GateShape::circle) {
    const double r = gate.width / 2.0 - margin;
    return r >= 0.0 && u * u + v * v <= r * r;
  }
  return std::abs(u) <= gate.width / 2.0 - margin && std::abs(v) <= gate.height / 2.0 - margin;
}

/// Segment p0->p1 against the gate aperture. Points on the plane count as
/// the front side, so consecutive segments never report the same crossing
/// twice and segments lying in the plane report nothing.
inline std::optional<GateCrossing> detect_gate_passage(const Vec3& p0, const Vec3& p1,
                                                       const GateSpec& gate, double margin = 0.0) {
  if (!p0.finite() || !p1.finite()) throw ValidationError("detect_gate_passage: non-finite point");
  const double d0 = signed_plane_distance(p0, gate);
  const double d1 = signed_plane_distance(p1, gate);
  const bool front0 = d0 >= 0.0;
  const bool front1 = d1 >= 0.0;
  if (front0 == front1) return std::nullopt;
  const double t = d0 / (d0 - d1);
  const Vec3 point = p0 + (p1 - p0) * t;
  const Vec3 rel = point - gate.center;
  if (!inside_aperture(rel.dot(gate.lateral_axis()), rel.z, gate, margin)) return std::nullopt;
  return GateCrossing{point, front1 ? CrossingDirection::forward : CrossingDirection::backward, t};
}

// ---------------------------------------------------------------------------
// Stage loop

struct StepRecord {
  Observation observation;  // frame dropped unless RunOptions::keep_frames
  VelocityCommand command;  // as applied (after clamping)
  Pose pose;                // pose at observation time
};

struct StageRun {
  StageOutcome outcome;
  std::vector<StepRecord> steps;
  std::vector<std::string> events;
  Pose final_pose;
};

/// Called once per tick with a mutable observation (the dual-rate layer sets
/// the directive on it). Exceptions abort the stage as harness_error.
/// The true pose is passed for harness-side use (keyframe rendering); it is
/// not part of what a policy observes.
using TickController = std::function<VelocityCommand(Observation&, const Pose&)>;

/// Sees every step, frame included, before it is appended to the log.
using StepSink = std::function<void(const StepRecord&)>;

struct RunOptions {
  bool keep_frames = false;
  StepSink sink;
};

inline std::int64_t max_ticks_for(double time_limit, double dt) {
  return static_cast<std::int64_t>(std::ceil(time_limit / dt - 1e-9));
}

inline Observation make_observation(std::int64_t tick, const Pose& pose, const TrackStage& stage,
                                    const WorldConfig& config, const LabelAtlas& atlas) {
  Observation obs;
  obs.tick = tick;
  obs.sim_time = static_cast<double>(tick) * config.dt;
  obs.instruction = stage.task.prompt;
  for (const auto& g : stage.gates)
    if (auto vg = project_gate(pose, g, config.camera)) obs.visible_gates.push_back(*vg);
  if (config.render_frames) obs.frame = render_fpv(pose, stage, config.camera, atlas);
  return obs;
}

/// Earliest forward crossing of any stage gate along p0->p1.
inline std::optional<std::pair<std::size_t, GateCrossing>> first_forward_crossing(
    const Vec3& p0, const Vec3& p1, const TrackStage& stage, double margin) {
  std::optional<std::pair<std::size_t, GateCrossing>> best;
  for (std::size_t i = 0; i < stage.gates.size(); ++i) {
    auto c = detect_gate_passage(p0, p1, stage.gates[i], margin);
    if (!c || c->direction != CrossingDirection::forward) continue;
    if (!best || c->fraction < best->second.fraction) best.emplace(i, *c);
  }
  return best;
}

/// Flies one stage from `start` until a forward gate crossing, leaving the
/// arena, or the time limit.
inline StageRun run_stage(const TrackStage& stage, const Pose& start, const TickController& controller,
                          const WorldConfig& config, const LabelAtlas& atlas,
                          const RunOptions& options = {}) {
  config.validate();
  StageRun run;
  const std::int64_t max_ticks = max_ticks_for(stage.time_limit, config.dt);
  Pose pose = start;
  VelocityCommand effective{};  // lagged velocity when response_tau > 0
  const double lag = config.response_tau > 0.0 ? 1.0 - std::exp(-config.dt / config.response_tau) : 1.0;

  auto finish = [&](OutcomeKind kind, std::int64_t ticks) {
    run.outcome.kind = kind;
    run.outcome.ticks = ticks;
    run.outcome.elapsed = static_cast<double>(ticks) * config.dt;
    run.final_pose = pose;
  };

  for (std::int64_t tick = 0; tick < max_ticks; ++tick) {
    StepRecord step{make_observation(tick, pose, stage, config, atlas), {}, pose};
    VelocityCommand raw;
    try {
      raw = controller(step.observation, pose);
      step.command = clamp_command(raw, config.limits);
    } catch (const TransportError&) {
      throw;
    } catch (const std::exception& e) {
      run.outcome.error = e.what();
      run.events.push_back("tick " + std::to_string(tick) + ": controller failed: " + e.what());
      finish(OutcomeKind::harness_error, tick);
      return run;
    }
    if (!(raw == step.command))
      run.events.push_back("tick " + std::to_string(tick) + ": command clamped");

    if (lag < 1.0) {
      effective.vx += (step.command.vx - effective.vx) * lag;
      effective.vy += (step.command.vy - effective.vy) * lag;
      effective.vz += (step.command.vz - effective.vz) * lag;
      effective.omega += (step.command.omega - effective.omega) * lag;
    } else {
      effective = step.command;
    }
    const Pose next = step_kinematics(pose, effective, config.dt, config.command_frame);

    if (options.sink) options.sink(step);
    if (!options.keep_frames) step.observation.frame.reset();
    run.steps.push_back(std::move(step));

    const std::int64_t ticks = tick + 1;
    if (auto hit = first_forward_crossing(pose.position, next.position, stage, config.passage_margin)) {
      pose = next;
      const auto& gate = stage.gates[hit->first];
      run.outcome.gate_id = gate.gate_id;
      finish(hit->first == stage.task.correct_option ? OutcomeKind::passed_correct
                                                     : OutcomeKind::passed_wrong,
             ticks);
      return run;
    }
    pose = next;
    if (!config.arena.contains(pose.position)) {
      finish(OutcomeKind::out_of_bounds, ticks);
      return run;
    }
  }
  finish(OutcomeKind::timeout, max_ticks);
  return run;
}

}  // namespace cogdrone
