#pragma once

// Expert trajectories: a cubic Hermite curve from the spawn pose through the
// target gate, resampled at constant speed and converted to per-tick
// velocity commands that the kinematic integrator replays exactly.

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "cogdrone/core.hpp"
#include "cogdrone/rng.hpp"
#include "cogdrone/sim_world.hpp"

namespace cogdrone {

/// Uniform position in the horizontal disc, yaw toward look_at plus jitter.
inline Pose randomize_spawn(const SpawnRegion& region, Rng& rng) {
  const double r = region.radius * std::sqrt(rng.uniform());
  const double th = kTwoPi * rng.uniform();
  const double jitter = rng.uniform(-region.yaw_jitter, region.yaw_jitter);
  const Vec3 pos = region.center + Vec3{r * std::cos(th), r * std::sin(th), 0.0};
  const Vec3 to = region.look_at - pos;
  const double heading = to.horizontal_norm() > 0.0 ? std::atan2(to.y, to.x) : 0.0;
  return Pose{pos, normalize_yaw(heading + jitter)};
}

struct PlannerParams {
  double nominal_speed = 1.2;  // m/s
  double exit_overshoot = 1.0;  // m past the gate centre along its normal
  double tangent_scale = 1.0;
  int arc_table_samples = 4096;
  int verify_samples = 2000;
};

class SplinePath {
 public:
  SplinePath(const Vec3& p0, const Vec3& t0, const Vec3& p1, const Vec3& t1, double nominal_speed,
             double exit_overshoot)
      : p0_(p0), t0_(t0), p1_(p1), t1_(t1), nominal_speed_(nominal_speed), exit_overshoot_(exit_overshoot) {}

  [[nodiscard]] Vec3 eval(double s) const {
    const double s2 = s * s;
    const double s3 = s2 * s;
    const double h00 = 2 * s3 - 3 * s2 + 1;
    const double h10 = s3 - 2 * s2 + s;
    const double h01 = -2 * s3 + 3 * s2;
    const double h11 = s3 - s2;
    return p0_ * h00 + t0_ * h10 + p1_ * h01 + t1_ * h11;
  }

  [[nodiscard]] Vec3 derivative(double s) const {
    const double s2 = s * s;
    return p0_ * (6 * s2 - 6 * s) + t0_ * (3 * s2 - 4 * s + 1) + p1_ * (-6 * s2 + 6 * s) +
           t1_ * (3 * s2 - 2 * s);
  }

  [[nodiscard]] const Vec3& start() const { return p0_; }
  [[nodiscard]] const Vec3& end() const { return p1_; }
  [[nodiscard]] const Vec3& start_tangent() const { return t0_; }
  [[nodiscard]] const Vec3& end_tangent() const { return t1_; }
  [[nodiscard]] double nominal_speed() const { return nominal_speed_; }
  [[nodiscard]] double exit_overshoot() const { return exit_overshoot_; }

  /// Chord-sum arc length over `samples` uniform parameter steps.
  [[nodiscard]] double arc_length(int samples = 4096) const {
    double len = 0.0;
    Vec3 prev = eval(0.0);
    for (int i = 1; i <= samples; ++i) {
      const Vec3 p = eval(static_cast<double>(i) / samples);
      len += distance(prev, p);
      prev = p;
    }
    return len;
  }

 private:
  Vec3 p0_, t0_, p1_, t1_;
  double nominal_speed_;
  double exit_overshoot_;
};

/// Plans from `start` through `gate`: launches along the start heading and
/// leaves perpendicular to the gate plane, ending exit_overshoot past it.
/// Throws PlanningError when the gate is not ahead or the sampled curve does
/// not cross the plane exactly once inside the aperture.
inline SplinePath plan_spline(const Pose& start, const GateSpec& gate, const PlannerParams& params = {}) {
  const Vec3 heading = heading_vector(start.yaw);
  const Vec3 to_gate = gate.center - start.position;
  if (to_gate.dot(heading) <= 0.0) throw PlanningError("plan_spline: gate " + gate.gate_id + " is behind the start pose");
  const double side = signed_plane_distance(start.position, gate);
  if (std::abs(side) < 1e-6) throw PlanningError("plan_spline: start lies on the gate plane");
  const Vec3 normal = side < 0.0 ? gate.normal() : -gate.normal();  // away from start
  const Vec3 p1 = gate.center + normal * params.exit_overshoot;
  const double scale = params.tangent_scale * distance(p1, start.position);
  SplinePath path(start.position, heading * scale, p1, normal * scale, params.nominal_speed,
                  params.exit_overshoot);

  const double len = path.arc_length(params.verify_samples);
  if (!std::isfinite(len) || !(len > 0.0)) throw PlanningError("plan_spline: degenerate path");

  int crossings = 0;
  bool inside = false;
  Vec3 prev = path.eval(0.0);
  for (int i = 1; i <= params.verify_samples; ++i) {
    const Vec3 p = path.eval(static_cast<double>(i) / params.verify_samples);
    if ((signed_plane_distance(prev, gate) >= 0.0) != (signed_plane_distance(p, gate) >= 0.0)) {
      ++crossings;
      inside = detect_gate_passage(prev, p, gate).has_value();
    }
    prev = p;
  }
  if (crossings != 1) throw PlanningError("plan_spline: path crosses the gate plane " + std::to_string(crossings) + " times");
  if (!inside) throw PlanningError("plan_spline: path crosses the gate plane outside the aperture");
  return path;
}

struct CommandPlan {
  std::vector<Pose> poses;                // poses[0] = start, one more than commands
  std::vector<VelocityCommand> commands;  // commands[k] moves poses[k] to poses[k+1]
};

/// Inverse kinematics for one tick: the command that step_kinematics turns
/// `from` into `to`.
inline VelocityCommand command_between(const Pose& from, const Pose& to, double dt,
                                       CommandFrame frame = CommandFrame::body_yaw) {
  const Vec3 d = to.position - from.position;
  VelocityCommand cmd;
  if (frame == CommandFrame::body_yaw) {
    const double c = std::cos(from.yaw);
    const double s = std::sin(from.yaw);
    cmd.vx = (c * d.x + s * d.y) / dt;
    cmd.vy = (-s * d.x + c * d.y) / dt;
  } else {
    cmd.vx = d.x / dt;
    cmd.vy = d.y / dt;
  }
  cmd.vz = d.z / dt;
  cmd.omega = normalize_yaw(to.yaw - from.yaw) / dt;
  return cmd;
}

/// Resamples the path at nominal_speed * dt arc-length steps (last step
/// partial), yaw along the horizontal tangent, and derives the commands.
/// `start_yaw` pins the first pose's yaw (the spawn heading).
inline CommandPlan sample_commands(const SplinePath& path, const WorldConfig& config,
                                   std::optional<double> start_yaw = std::nullopt,
                                   const PlannerParams& params = {}) {
  const int m = std::max(1000, params.arc_table_samples);
  std::vector<double> cumulative(static_cast<std::size_t>(m) + 1, 0.0);
  Vec3 prev = path.eval(0.0);
  for (int i = 1; i <= m; ++i) {
    const Vec3 p = path.eval(static_cast<double>(i) / m);
    cumulative[i] = cumulative[i - 1] + distance(prev, p);
    prev = p;
  }
  const double total = cumulative.back();
  const double step = path.nominal_speed() * config.dt;
  if (!(step > 0.0) || !(total > 0.0)) throw PlanningError("sample_commands: degenerate path or speed");
  const auto n = static_cast<std::size_t>(std::ceil(total / step - 1e-9));

  auto param_at = [&](double arc) {
    if (arc >= total) return 1.0;
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), arc);
    const auto hi = static_cast<std::size_t>(it - cumulative.begin());
    const std::size_t lo = hi - 1;
    const double span = cumulative[hi] - cumulative[lo];
    const double frac = span > 0.0 ? (arc - cumulative[lo]) / span : 0.0;
    return (static_cast<double>(lo) + frac) / m;
  };
  auto yaw_at = [&](double s, double fallback) {
    const Vec3 d = path.derivative(s);
    return d.horizontal_norm() > 1e-12 ? std::atan2(d.y, d.x) : fallback;
  };

  CommandPlan plan;
  plan.poses.reserve(n + 1);
  const double yaw0 = start_yaw ? normalize_yaw(*start_yaw) : yaw_at(0.0, 0.0);
  plan.poses.push_back(Pose{path.start(), yaw0});
  for (std::size_t k = 1; k <= n; ++k) {
    const double s = k == n ? 1.0 : param_at(static_cast<double>(k) * step);
    plan.poses.push_back(Pose{k == n ? path.end() : path.eval(s), yaw_at(s, plan.poses.back().yaw)});
  }
  plan.commands.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const auto cmd = command_between(plan.poses[k], plan.poses[k + 1], config.dt, config.command_frame);
    if (!within_limits(cmd, config.limits))
      throw PlanningError("sample_commands: command at tick " + std::to_string(k) + " exceeds limits");
    plan.commands.push_back(cmd);
  }
  return plan;
}

}  // namespace cogdrone
