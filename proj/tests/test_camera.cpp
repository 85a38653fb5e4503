#include <gtest/gtest.h>

#include <cmath>

#include "cogdrone/camera.hpp"
#include "cogdrone/canonical.hpp"
#include "oracles.hpp"

using namespace cogdrone;

namespace {

GateSpec gate_at(Vec3 c, double yaw = 0.0, double w = 1.5, double h = 1.5) {
  GateSpec g;
  g.gate_id = "g";
  g.center = c;
  g.yaw = yaw;
  g.width = w;
  g.height = h;
  g.label_asset = "soda_logo";
  return g;
}

bool is_color(const Frame& f, int r, int c, const Rgb& rgb) {
  const auto* p = f.pixel(r, c);
  return p[0] == rgb[0] && p[1] == rgb[1] && p[2] == rgb[2];
}

/// Leftmost and rightmost columns of `rgb` on a row, or {-1,-1}.
std::pair<int, int> color_extent(const Frame& f, int row, const Rgb& rgb) {
  int lo = -1, hi = -1;
  for (int c = 0; c < kImageSize; ++c)
    if (is_color(f, row, c, rgb)) {
      if (lo < 0) lo = c;
      hi = c;
    }
  return {lo, hi};
}

std::string frame_hash(const Frame& f) { return sha256_hex(std::span<const std::uint8_t>(f.rgb)); }

}  // namespace

TEST(Camera, EmptyStageIsPureBackground) {
  const Frame f = render_fpv(Pose{{0, 0, 2}, 0.3}, std::span<const GateSpec>{}, CameraConfig{}, LabelAtlas{});
  for (int r = 0; r < kImageSize; ++r)
    for (int c = 0; c < kImageSize; ++c)
      ASSERT_TRUE(is_color(f, r, c, r < kImageSize / 2 ? kSkyColor : kGroundColor)) << r << "," << c;
}

TEST(Camera, ProjectedWidthAtFiveMetres) {
  const auto g = gate_at({5, 0, 2});
  const auto vg = project_gate(Pose{{0, 0, 2}, 0}, g, CameraConfig{});
  ASSERT_TRUE(vg);
  const double width = vg->quad[1].u - vg->quad[0].u;
  EXPECT_NEAR(std::abs(width), oracle::expected_width_px(1.5, 5.0), 1e-9);
  EXPECT_NEAR(std::abs(width), 48.6, 2.0);
  EXPECT_NEAR(vg->distance, 5.0, 1e-12);
}

TEST(Camera, RenderedWidthAtFiveMetres) {
  const GateSpec gates[] = {gate_at({5, 0, 2})};
  const Frame f = render_fpv(Pose{{0, 0, 2}, 0}, gates, CameraConfig{}, LabelAtlas{});
  const auto [lo, hi] = color_extent(f, 128, gates[0].color);
  ASSERT_GE(lo, 0);
  EXPECT_NEAR(hi - lo + 1, 48.6, 2.0);
  // Aperture interior stays open.
  EXPECT_TRUE(is_color(f, 126, 128, kSkyColor));
  EXPECT_TRUE(is_color(f, 130, 128, kGroundColor));
}

TEST(Camera, OnAxisGateIsSymmetric) {
  const GateSpec gates[] = {gate_at({6, 0, 2}, 0.0, 2.0, 1.2)};
  const Frame f = render_fpv(Pose{{0, 0, 2}, 0}, gates, CameraConfig{}, LabelAtlas{});
  const auto [lo, hi] = color_extent(f, 128, gates[0].color);
  ASSERT_GE(lo, 0);
  EXPECT_LE(std::abs((lo - 0) - (kImageSize - 1 - hi)), 1);
}

TEST(Camera, RenderIsByteDeterministic) {
  GateSpec gates[] = {gate_at({7, -1, 2.3}, 0.2), gate_at({9, 2.5, 1.8}, -0.1)};
  gates[1].gate_id = "g2";
  gates[1].label_asset = "water_logo";
  gates[1].shape = GateShape::circle;
  const Pose pose{{0.3, 0.1, 2.0}, 0.05};
  const Frame a = render_fpv(pose, gates, CameraConfig{}, LabelAtlas{});
  const Frame b = render_fpv(pose, gates, CameraConfig{}, LabelAtlas{});
  EXPECT_EQ(a, b);
  EXPECT_EQ(frame_hash(a), frame_hash(b));
  // Different pose, different bytes.
  EXPECT_NE(frame_hash(a), frame_hash(render_fpv(Pose{{0.3, 0.1, 2.0}, 0.1}, gates, CameraConfig{}, LabelAtlas{})));
}

TEST(Camera, LabelTileAboveAperture) {
  const GateSpec gates[] = {gate_at({4, 0, 2})};
  const Frame f = render_fpv(Pose{{0, 0, 2}, 0}, gates, CameraConfig{}, LabelAtlas{});
  const auto tile = procedural_tile("soda_logo");
  const double ppr = 256.0 / (kPi / 2);
  // Tile spans 0.9 m square, bottom edge 0.85 m above the gate centre.
  const double side = 0.9, top = 0.75 + 0.1 + side;
  int checked = 0;
  for (int row = 0; row < 128; ++row) {
    for (int col = 110; col < 146; ++col) {
      const double el = (128 - (row + 0.5)) / ppr;
      const double az = (128 - (col + 0.5)) / ppr;
      const double u = 4.0 * std::tan(az);
      const double v = 4.0 * std::tan(el) / std::cos(az);
      if (std::abs(u) > side / 2 - 1e-6 || v < top - side + 1e-6 || v > top - 1e-6) continue;
      const int tx = static_cast<int>((side / 2 - u) / side * kTileSize);
      const int ty = static_cast<int>((top - v) / side * kTileSize);
      const auto* t = tile.data() + (ty * kTileSize + tx) * 3;
      const double fx = (side / 2 - u) / side * kTileSize, fy = (top - v) / side * kTileSize;
      if (std::abs(fx - std::round(fx)) < 1e-6 || std::abs(fy - std::round(fy)) < 1e-6) continue;
      ASSERT_TRUE(is_color(f, row, col, Rgb{t[0], t[1], t[2]})) << row << "," << col;
      ++checked;
    }
  }
  EXPECT_GT(checked, 200);
}

TEST(Camera, NinetyDegreesOffAxisIsAbsent) {
  const auto g = gate_at({0, 5, 2}, kPi / 2);
  const Pose pose{{0, 0, 2}, 0};
  EXPECT_FALSE(project_gate(pose, g, CameraConfig{}));
  const GateSpec gates[] = {g};
  const Frame f = render_fpv(pose, gates, CameraConfig{}, LabelAtlas{});
  EXPECT_EQ(f, render_fpv(pose, std::span<const GateSpec>{}, CameraConfig{}, LabelAtlas{}));
}

TEST(Camera, BehindIsAbsent) {
  EXPECT_FALSE(project_gate(Pose{{0, 0, 2}, 0}, gate_at({-5, 0, 2}), CameraConfig{}));
}

TEST(Camera, ObliqueCornersMatchIndependentProjection) {
  const auto g = gate_at({6, 2, 2.5}, 0.4, 1.8, 1.1);
  const Pose pose{{0.5, -0.5, 2.0}, 0.2};
  const auto vg = project_gate(pose, g, CameraConfig{});
  ASSERT_TRUE(vg);
  const double ppr = 256.0 / (kPi / 2);
  const double lat_x = -std::sin(g.yaw), lat_y = std::cos(g.yaw);
  const double su[] = {1, -1, -1, 1};
  const double sv[] = {1, 1, -1, -1};
  for (int i = 0; i < 4; ++i) {
    const double wx = g.center.x + su[i] * 0.9 * lat_x - pose.position.x;
    const double wy = g.center.y + su[i] * 0.9 * lat_y - pose.position.y;
    const double wz = g.center.z + sv[i] * 0.55 - pose.position.z;
    const double fwd = wx * std::cos(pose.yaw) + wy * std::sin(pose.yaw);
    const double left = -wx * std::sin(pose.yaw) + wy * std::cos(pose.yaw);
    const double u = 128 - std::atan2(left, fwd) * ppr;
    const double v = 128 - std::atan2(wz, std::hypot(fwd, left)) * ppr;
    EXPECT_NEAR(vg->quad[i].u, u, 1e-9) << i;
    EXPECT_NEAR(vg->quad[i].v, v, 1e-9) << i;
  }
}

TEST(Camera, QuadsStayWithinImageBounds) {
  Rng rng(99);
  int visible = 0;
  for (int i = 0; i < 20000; ++i) {
    const auto g = oracle::random_gate(rng);
    const Pose pose{{rng.uniform(-8, 8), rng.uniform(-8, 8), rng.uniform(0, 5)}, normalize_yaw(rng.uniform(-4, 4))};
    const auto vg = project_gate(pose, g, CameraConfig{});
    if (!vg) continue;
    ++visible;
    for (const auto& p : vg->quad) {
      ASSERT_GE(p.u, 0.0);
      ASSERT_LT(p.u, 256.0);
      ASSERT_GE(p.v, 0.0);
      ASSERT_LT(p.v, 256.0);
    }
  }
  EXPECT_GT(visible, 1000);
}

TEST(Camera, RejectsBadFov) {
  CameraConfig c;
  c.hfov = 0.0;
  EXPECT_THROW(c.validate(), ValidationError);
}
