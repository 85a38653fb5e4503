#pragma once

// Independent reference computations used by the unit and acceptance tests.
// None of these call into the code under test except for plain value types.

#include <algorithm>
#include <cmath>
#include <optional>

#include "cogdrone/core.hpp"
#include "cogdrone/rng.hpp"

namespace oracle {

using cogdrone::GateShape;
using cogdrone::GateSpec;
using cogdrone::Vec3;

struct DenseResult {
  bool crossing = false;
  bool forward = false;
  bool near_boundary = false;  // inside the exclusion band; verdict not meaningful
  Vec3 point;
};

inline double side(const Vec3& p, const GateSpec& g) {
  return (p.x - g.center.x) * std::cos(g.yaw) + (p.y - g.center.y) * std::sin(g.yaw);
}

/// In-plane coordinates by rotating the world offset by -yaw.
inline void plane_coords(const Vec3& p, const GateSpec& g, double& u, double& v) {
  const double dx = p.x - g.center.x;
  const double dy = p.y - g.center.y;
  u = -std::sin(g.yaw) * dx + std::cos(g.yaw) * dy;
  v = p.z - g.center.z;
}

/// Signed distance to the aperture boundary: positive inside.
inline double aperture_margin(double u, double v, const GateSpec& g) {
  if (g.shape == GateShape::circle) return g.width / 2.0 - std::hypot(u, v);
  return std::min(g.width / 2.0 - std::abs(u), g.height / 2.0 - std::abs(v));
}

/// Samples the segment at n+1 points, finds the side-of-plane transition,
/// refines the crossing by bisection inside that bracket and tests the
/// aperture. Cases within `band` of the plane at an endpoint or of the
/// aperture edge are flagged.
inline DenseResult dense_passage(const Vec3& p0, const Vec3& p1, const GateSpec& g, int n = 10000,
                                 double band = 1e-9) {
  DenseResult r;
  auto at = [&](double t) { return Vec3{p0.x + (p1.x - p0.x) * t, p0.y + (p1.y - p0.y) * t, p0.z + (p1.z - p0.z) * t}; };
  const double s0 = side(p0, g);
  const double s1 = side(p1, g);
  if (std::abs(s0) < band || std::abs(s1) < band) r.near_boundary = true;
  bool prev_front = s0 >= 0.0;
  for (int i = 1; i <= n; ++i) {
    const double t1 = static_cast<double>(i) / n;
    const bool front = side(at(t1), g) >= 0.0;
    if (front == prev_front) continue;
    double lo = static_cast<double>(i - 1) / n;
    double hi = t1;
    for (int k = 0; k < 80; ++k) {
      const double mid = 0.5 * (lo + hi);
      if ((side(at(mid), g) >= 0.0) == prev_front) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    r.point = at(0.5 * (lo + hi));
    double u, v;
    plane_coords(r.point, g, u, v);
    const double m = aperture_margin(u, v, g);
    if (std::abs(m) < band) r.near_boundary = true;
    r.crossing = m >= 0.0;
    r.forward = front;
    return r;
  }
  return r;
}

/// Fine-step reference for yaw-rate kinematics with zero-order-hold commands.
inline cogdrone::Pose fine_integrate(cogdrone::Pose p, const cogdrone::VelocityCommand& c, double duration,
                                     double h = 1e-4) {
  const auto steps = static_cast<long>(std::llround(duration / h));
  for (long i = 0; i < steps; ++i) {
    const double mid_yaw = p.yaw + 0.5 * c.omega * h;
    p.position.x += (std::cos(mid_yaw) * c.vx - std::sin(mid_yaw) * c.vy) * h;
    p.position.y += (std::sin(mid_yaw) * c.vx + std::cos(mid_yaw) * c.vy) * h;
    p.position.z += c.vz * h;
    p.yaw += c.omega * h;
  }
  return p;
}

/// Angular-model horizontal pixel width of a centred, facing gate.
inline double expected_width_px(double width, double depth, double hfov = cogdrone::kPi / 2.0) {
  return 2.0 * std::atan((width / 2.0) / depth) / hfov * 256.0;
}

/// A random gate posed in a box, for property tests.
inline GateSpec random_gate(cogdrone::Rng& rng) {
  GateSpec g;
  g.gate_id = "rg";
  g.center = {rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(0.5, 4)};
  g.yaw = rng.uniform(-cogdrone::kPi, cogdrone::kPi);
  g.width = rng.uniform(0.5, 3.0);
  g.height = rng.uniform(0.5, 3.0);
  g.shape = rng.below(4) == 0 ? GateShape::circle : GateShape::rectangle;
  g.label_asset = "rg_logo";
  return g;
}

/// Segments aimed at stress regions: through corners, near edges, parallel
/// to the plane, and arbitrary.
inline std::pair<Vec3, Vec3> random_segment(const GateSpec& g, cogdrone::Rng& rng) {
  const Vec3 n{std::cos(g.yaw), std::sin(g.yaw), 0.0};
  const Vec3 lat{-std::sin(g.yaw), std::cos(g.yaw), 0.0};
  const Vec3 up{0, 0, 1};
  const double hw = g.width / 2.0;
  const double hh = g.shape == GateShape::circle ? hw : g.height / 2.0;
  Vec3 target;
  switch (rng.below(4)) {
    case 0: {  // near a corner (or the circle rim)
      const double su = rng.below(2) ? 1.0 : -1.0;
      const double sv = rng.below(2) ? 1.0 : -1.0;
      if (g.shape == GateShape::circle) {
        const double a = rng.uniform(0, cogdrone::kTwoPi);
        const double rr = hw * (1.0 + rng.uniform(-1e-3, 1e-3));
        target = g.center + lat * (rr * std::cos(a)) + up * (rr * std::sin(a));
      } else {
        target = g.center + lat * (su * hw * (1.0 + rng.uniform(-1e-3, 1e-3))) +
                 up * (sv * hh * (1.0 + rng.uniform(-1e-3, 1e-3)));
      }
      break;
    }
    case 1:  // inside or just outside along an edge
      target = g.center + lat * rng.uniform(-1.2 * hw, 1.2 * hw) + up * rng.uniform(-1.2 * hh, 1.2 * hh);
      break;
    case 2: {  // parallel to the plane
      const Vec3 base = g.center + n * rng.uniform(-1, 1) + lat * rng.uniform(-2, 2);
      const Vec3 dir = lat * rng.uniform(-1, 1) + up * rng.uniform(-1, 1);
      return {base, base + dir};
    }
    default:
      target = g.center + Vec3{rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3)};
      break;
  }
  const double len0 = rng.uniform(0.01, 2.0);
  const double len1 = rng.uniform(0.01, 2.0);
  Vec3 dir = n * rng.uniform(-1, 1) + lat * rng.uniform(-0.7, 0.7) + up * rng.uniform(-0.7, 0.7);
  const double norm = dir.norm();
  if (norm < 1e-6) dir = n;
  dir = dir * (1.0 / std::max(norm, 1e-6));
  return {target - dir * len0, target + dir * len1};
}

}  // namespace oracle
