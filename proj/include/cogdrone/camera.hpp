#pragma once

// Forward FPV camera: projection of gates to pixel quads and a small
// ray-cast renderer producing 256x256 RGB24 frames.
//
// The camera sits at the drone position, looks along body +x with a level
// horizon, and maps view angles linearly to pixels: a ray at azimuth `az`
// (left positive) and elevation `el` lands at
//
//   u = W/2 - az * W / hfov,   v = H/2 - el * H / vfov
//
// so an object subtending angle a horizontally spans a * W / hfov pixels.
// The square image gives vfov = hfov.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "cogdrone/atlas.hpp"
#include "cogdrone/core.hpp"

namespace cogdrone {

struct CameraConfig {
  double hfov = kPi / 2.0;
  double near_depth = 0.05;  // corners closer than this along the view axis count as behind

  [[nodiscard]] double vfov() const { return hfov; }
  [[nodiscard]] double pixels_per_radian() const { return kImageSize / hfov; }

  void validate() const {
    if (!(hfov > 0.0 && hfov < kPi)) throw ValidationError("camera: hfov must lie in (0, pi)");
    if (!(near_depth > 0.0)) throw ValidationError("camera: near_depth must be positive");
  }
  bool operator==(const CameraConfig&) const = default;
};

inline constexpr Rgb kSkyColor{135, 190, 235};
inline constexpr Rgb kGroundColor{96, 128, 72};

/// Camera-frame coordinates of a world point: depth along the view axis,
/// left offset, up offset.
inline Vec3 to_camera_frame(const Pose& camera, const Vec3& p) {
  const Vec3 rel = p - camera.position;
  const double c = std::cos(camera.yaw);
  const double s = std::sin(camera.yaw);
  return {c * rel.x + s * rel.y, -s * rel.x + c * rel.y, rel.z};
}

/// Pixel position of a camera-frame point; the point need not be in view.
inline PixelPoint project_camera_point(const Vec3& cam, const CameraConfig& cfg) {
  const double az = std::atan2(cam.y, cam.x);
  const double el = std::atan2(cam.z, std::hypot(cam.x, cam.y));
  const double k = cfg.pixels_per_radian();
  return {kImageSize / 2.0 - az * k, kImageSize / 2.0 - el * k};
}

/// Aperture corners in gate-plane coordinates (lateral, vertical), ordered
/// top-left, top-right, bottom-right, bottom-left as seen by a viewer looking
/// along the gate normal. Circles use their bounding square.
inline std::array<Vec3, 4> gate_corners(const GateSpec& g) {
  const double hw = g.width / 2.0;
  const double hh = g.shape == GateShape::circle ? g.width / 2.0 : g.height / 2.0;
  const Vec3 lat = g.lateral_axis();  // viewer's left
  const Vec3 up{0, 0, 1};
  return {g.center + lat * hw + up * hh, g.center - lat * hw + up * hh,
          g.center - lat * hw - up * hh, g.center + lat * hw - up * hh};
}

/// Projected aperture quad clipped to [0,256) x [0,256), plus centre
/// distance. Absent when every corner is behind the near plane or the quad
/// misses the image entirely.
inline std::optional<VisibleGate> project_gate(const Pose& pose, const GateSpec& gate,
                                               const CameraConfig& cfg) {
  const auto corners = gate_corners(gate);
  std::array<PixelPoint, 4> quad{};
  int behind = 0;
  double umin = std::numeric_limits<double>::infinity(), umax = -umin;
  double vmin = umin, vmax = -umin;
  for (std::size_t i = 0; i < 4; ++i) {
    Vec3 c = to_camera_frame(pose, corners[i]);
    if (c.x < cfg.near_depth) {
      ++behind;
      c.x = cfg.near_depth;
    }
    quad[i] = project_camera_point(c, cfg);
    umin = std::min(umin, quad[i].u);
    umax = std::max(umax, quad[i].u);
    vmin = std::min(vmin, quad[i].v);
    vmax = std::max(vmax, quad[i].v);
  }
  if (behind == 4) return std::nullopt;
  if (umax < 0.0 || vmax < 0.0 || umin >= kImageSize || vmin >= kImageSize) return std::nullopt;
  const double hi = std::nextafter(static_cast<double>(kImageSize), 0.0);
  for (auto& p : quad) {
    p.u = std::clamp(p.u, 0.0, hi);
    p.v = std::clamp(p.v, 0.0, hi);
  }
  return VisibleGate{gate.gate_id, quad, distance(pose.position, gate.center)};
}

namespace detail {

/// Unit view rays in the camera frame for every pixel centre.
struct RayTable {
  CameraConfig config;
  std::vector<Vec3> rays;

  explicit RayTable(const CameraConfig& cfg) : config(cfg), rays(kImageSize * kImageSize) {
    const double k = cfg.pixels_per_radian();
    for (int r = 0; r < kImageSize; ++r) {
      const double el = (kImageSize / 2.0 - (r + 0.5)) / k;
      for (int c = 0; c < kImageSize; ++c) {
        const double az = (kImageSize / 2.0 - (c + 0.5)) / k;
        rays[r * kImageSize + c] = {std::cos(el) * std::cos(az), std::cos(el) * std::sin(az),
                                    std::sin(el)};
      }
    }
  }
};

inline const RayTable& ray_table(const CameraConfig& cfg) {
  thread_local std::optional<RayTable> cache;
  if (!cache || !(cache->config == cfg)) cache.emplace(cfg);
  return *cache;
}

inline void put(Frame& f, int r, int c, const Rgb& color) {
  auto* px = f.pixel(r, c);
  px[0] = color[0];
  px[1] = color[1];
  px[2] = color[2];
}

}  // namespace detail

/// Frame band width as a fraction of the smaller aperture extent.
inline constexpr double kFrameBandFraction = 0.1;
/// Header tile side relative to gate width, and its gap above the aperture.
inline constexpr double kTileFraction = 0.6;
inline constexpr double kTileGap = 0.1;

/// Renders the FPV frame: sky/ground split at the horizon, then every gate
/// far to near as an outline band in its colour with its label tile above.
inline Frame render_fpv(const Pose& pose, std::span<const GateSpec> gates, const CameraConfig& cfg,
                        const LabelAtlas& atlas) {
  const auto& table = detail::ray_table(cfg);
  Frame frame;
  for (int r = 0; r < kImageSize; ++r) {
    const Rgb& bg = r < kImageSize / 2 ? kSkyColor : kGroundColor;
    for (int c = 0; c < kImageSize; ++c) detail::put(frame, r, c, bg);
  }

  std::vector<const GateSpec*> order;
  for (const auto& g : gates) order.push_back(&g);
  std::stable_sort(order.begin(), order.end(), [&](const GateSpec* a, const GateSpec* b) {
    return distance(pose.position, a->center) > distance(pose.position, b->center);
  });

  const double cy = std::cos(pose.yaw);
  const double sy = std::sin(pose.yaw);
  for (const GateSpec* g : order) {
    const Vec3 n = g->normal();
    const Vec3 lat = g->lateral_axis();
    const Vec3 rel = g->center - pose.position;
    const double plane_offset = rel.dot(n);
    const bool circle = g->shape == GateShape::circle;
    const double hw = g->width / 2.0;
    const double hh = circle ? hw : g->height / 2.0;
    const double band = kFrameBandFraction * std::min(g->width, circle ? g->width : g->height);
    const double tile_side = kTileFraction * g->width;
    const double tile_bottom = hh + kTileGap;
    const double tile_top = tile_bottom + tile_side;
    const Tile tile = atlas.tile(g->label_asset);

    for (int r = 0; r < kImageSize; ++r) {
      for (int c = 0; c < kImageSize; ++c) {
        const Vec3& d_cam = table.rays[r * kImageSize + c];
        const Vec3 d{cy * d_cam.x - sy * d_cam.y, sy * d_cam.x + cy * d_cam.y, d_cam.z};
        const double denom = d.dot(n);
        if (std::abs(denom) < 1e-12) continue;
        const double t = plane_offset / denom;
        if (t <= 0.0) continue;
        const Vec3 hit = d * t - rel;  // relative to gate centre
        const double u = hit.dot(lat);
        const double v = hit.z;
        bool on_frame = false;
        if (circle) {
          const double rr = std::hypot(u, v);
          on_frame = rr <= hw && rr >= hw - band;
        } else if (std::abs(u) <= hw && std::abs(v) <= hh) {
          on_frame = std::abs(u) >= hw - band || std::abs(v) >= hh - band;
        }
        if (on_frame) {
          detail::put(frame, r, c, g->color);
          continue;
        }
        if (std::abs(u) <= tile_side / 2.0 && v >= tile_bottom && v <= tile_top) {
          // Viewer's left edge is +lateral; top row first.
          const int tx = std::min(kTileSize - 1, static_cast<int>((tile_side / 2.0 - u) / tile_side * kTileSize));
          const int ty = std::min(kTileSize - 1, static_cast<int>((tile_top - v) / tile_side * kTileSize));
          const auto* px = tile.data() + (ty * kTileSize + tx) * 3;
          detail::put(frame, r, c, Rgb{px[0], px[1], px[2]});
        }
      }
    }
  }
  return frame;
}

inline Frame render_fpv(const Pose& pose, const TrackStage& stage, const CameraConfig& cfg,
                        const LabelAtlas& atlas) {
  return render_fpv(pose, std::span<const GateSpec>(stage.gates), cfg, atlas);
}

}  // namespace cogdrone
