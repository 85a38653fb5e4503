#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>

#include "cogdrone/atlas.hpp"
#include "cogdrone/canonical.hpp"
#include "cogdrone/core.hpp"
#include "cogdrone/image.hpp"
#include "cogdrone/rng.hpp"

using namespace cogdrone;

namespace {

std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("cogdrone_core_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST(NormalizeYaw, Examples) {
  EXPECT_EQ(normalize_yaw(0.0), 0.0);
  EXPECT_DOUBLE_EQ(normalize_yaw(3.0 * kPi), kPi);
  EXPECT_EQ(normalize_yaw(-kPi), kPi);
  EXPECT_EQ(normalize_yaw(kPi), kPi);
}

TEST(NormalizeYaw, RejectsNonFinite) {
  EXPECT_THROW(normalize_yaw(std::numeric_limits<double>::infinity()), ValidationError);
  EXPECT_THROW(normalize_yaw(std::numeric_limits<double>::quiet_NaN()), ValidationError);
}

TEST(NormalizeYaw, RangeEquivalenceAndIdempotence) {
  Rng rng(11);
  for (int i = 0; i < 100000; ++i) {
    const double scale = i % 3 == 0 ? 1e3 : (i % 3 == 1 ? 10.0 : 4.0);
    const double a = rng.uniform(-scale, scale);
    const double n = normalize_yaw(a);
    ASSERT_GT(n, -kPi) << a;
    ASSERT_LE(n, kPi) << a;
    ASSERT_EQ(normalize_yaw(n), n) << a;
    // Same direction on the unit circle.
    ASSERT_NEAR(std::cos(n), std::cos(a), 1e-9);
    ASSERT_NEAR(std::sin(n), std::sin(a), 1e-9);
  }
}

TEST(VelocityCommand, ClampedPerAxisNeverRejected) {
  const CommandLimits lim;
  const auto c = clamp_command({5.0, -3.0, 0.5, 9.9}, lim);
  EXPECT_EQ(c, (VelocityCommand{2.0, -2.0, 0.5, 1.5}));
  EXPECT_TRUE(within_limits(c, lim));
  EXPECT_FALSE(within_limits({0, 0, 0, 1.6}, lim));
  EXPECT_THROW(clamp_command({std::nan(""), 0, 0, 0}, lim), ValidationError);
}

TEST(Pose, MakeNormalizesAndRejectsNonFinite) {
  EXPECT_EQ(Pose::make({1, 2, 3}, -kPi).yaw, kPi);
  EXPECT_THROW(Pose::make({std::numeric_limits<double>::infinity(), 0, 0}, 0), ValidationError);
}

TEST(GateSpec, Validation) {
  GateSpec g;
  g.gate_id = "g";
  g.label_asset = "soda_logo";
  EXPECT_NO_THROW(g.validate());
  g.width = 0.0;
  EXPECT_THROW(g.validate(), ValidationError);
  g.width = 1.5;
  g.label_asset = "bad asset";
  EXPECT_THROW(g.validate(), ValidationError);
}

TEST(GateSpec, NormalAndLateralAreOrthonormal) {
  GateSpec g;
  g.yaw = 0.7;
  EXPECT_NEAR(g.normal().norm(), 1.0, 1e-15);
  EXPECT_NEAR(g.lateral_axis().norm(), 1.0, 1e-15);
  EXPECT_NEAR(g.normal().dot(g.lateral_axis()), 0.0, 1e-15);
}

TEST(TaskSpec, ValidationNamesTheField) {
  TaskSpec t;
  t.task_id = "t";
  t.prompt = "p";
  t.options = {{"a", "a_logo"}, {"b", "b_logo"}};
  EXPECT_NO_THROW(t.validate());
  t.correct_option = 2;
  try {
    t.validate();
    FAIL() << "expected rejection";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("correct_option"), std::string::npos);
  }
  t.correct_option = 0;
  t.options[1].label_asset = "a_logo";
  EXPECT_THROW(t.validate(), ValidationError);
  t.options.resize(1);
  EXPECT_THROW(t.validate(), ValidationError);
}

TEST(Rng, DeterministicAndForkIndependent) {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
  Rng c(42);
  const auto child = c.fork("x", 1);
  Rng d(42);
  EXPECT_EQ(c.next_u64(), d.next_u64());
  EXPECT_NE(child.seed(), Rng(42).fork("x", 2).seed());
  EXPECT_NE(derive_seed(1, "stage", 0), derive_seed(1, "spawn", 0));
}

TEST(Rng, UniformInHalfOpenUnitInterval) {
  Rng r(3);
  for (int i = 0; i < 100000; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(Rng, BelowCoversRangeUniformly) {
  Rng r(5);
  std::array<int, 7> counts{};
  const int n = 70000;
  for (int i = 0; i < n; ++i) ++counts[r.below(7)];
  // chi-square with 6 dof; 16.81 is the 0.99 quantile
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - n / 7.0) * (c - n / 7.0) / (n / 7.0);
  EXPECT_LT(chi2, 16.81);
}

TEST(Rng, ShuffleIsAPermutation) {
  Rng r(9);
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[i] = i;
  r.shuffle(v);
  std::set<int> s(v.begin(), v.end());
  EXPECT_EQ(s.size(), 50u);
}

TEST(Canonical, SortedCompactShortestDoubles) {
  const Json j{{"b", 0.1}, {"a", 1}, {"c", Json{{"z", true}, {"y", nullptr}}}};
  EXPECT_EQ(canonical(j), R"({"a":1,"b":0.1,"c":{"y":null,"z":true}})");
  Rng r(1);
  for (int i = 0; i < 10000; ++i) {
    const double x = r.uniform(-1e6, 1e6) * std::pow(10.0, r.uniform(-20, 5));
    const Json back = parse_json(canonical(Json(x)));
    ASSERT_EQ(back.get<double>(), x);
  }
}

TEST(Canonical, MalformedJsonIsAValidationError) {
  EXPECT_THROW(parse_json("{\"a\":"), ValidationError);
}

TEST(Canonical, Sha256KnownVectors) {
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Canonical, Base64KnownVectorsAndRoundTrip) {
  auto enc = [](std::string_view s) {
    return base64_encode(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
  };
  EXPECT_EQ(enc(""), "");
  EXPECT_EQ(enc("f"), "Zg==");
  EXPECT_EQ(enc("fo"), "Zm8=");
  EXPECT_EQ(enc("foo"), "Zm9v");
  EXPECT_EQ(enc("foobar"), "Zm9vYmFy");
  Rng r(2);
  for (std::size_t n = 0; n < 40; ++n) {
    std::vector<std::uint8_t> bytes(n);
    for (auto& b : bytes) b = static_cast<std::uint8_t>(r.below(256));
    EXPECT_EQ(base64_decode(base64_encode(bytes)), bytes);
  }
}

TEST(Canonical, DomainRoundTrips) {
  GateSpec g{"g1", {1.25, -3.5, 2.0}, 0.3, 1.5, 1.2, GateShape::circle, {1, 2, 3}, "logo"};
  EXPECT_EQ(Json(g).get<GateSpec>(), g);
  StageOutcome o{OutcomeKind::passed_wrong, "s0_g2", 4.2, 42, ""};
  EXPECT_EQ(Json(o).get<StageOutcome>(), o);
  VisibleGate vg{"g", {{{1, 2}, {3, 4}, {5, 6}, {7, 8}}}, 5.5};
  EXPECT_EQ(Json(vg).get<VisibleGate>(), vg);
}

TEST(Ppm, RoundTripAndTruncationDetected) {
  const auto dir = scratch_dir("ppm");
  Frame f;
  for (std::size_t i = 0; i < f.rgb.size(); ++i) f.rgb[i] = static_cast<std::uint8_t>(i * 7);
  write_ppm(dir / "a.ppm", f);
  EXPECT_EQ(read_frame_ppm(dir / "a.ppm"), f);
  EXPECT_EQ(std::filesystem::file_size(dir / "a.ppm"), ppm_header(256, 256).size() + kFrameBytes);
  std::filesystem::resize_file(dir / "a.ppm", 1000);
  EXPECT_THROW(read_frame_ppm(dir / "a.ppm"), IoError);
  std::vector<std::uint8_t> small(8 * 8 * 3, 9);
  write_ppm(dir / "b.ppm", 8, 8, small);
  EXPECT_THROW(read_frame_ppm(dir / "b.ppm"), IoError);
}

TEST(Atlas, ProceduralTilesArePureAndDistinct) {
  EXPECT_EQ(procedural_tile("soda_logo"), procedural_tile("soda_logo"));
  EXPECT_NE(procedural_tile("soda_logo"), procedural_tile("water_logo"));
  const auto t = procedural_tile("soda_logo");
  // Mirror-symmetric across the vertical axis.
  for (int y = 0; y < kTileSize; ++y)
    for (int x = 0; x < kTileSize; ++x)
      for (int ch = 0; ch < 3; ++ch)
        ASSERT_EQ(t[(y * kTileSize + x) * 3 + ch], t[(y * kTileSize + kTileSize - 1 - x) * 3 + ch]);
}

TEST(Atlas, DirectoryOverride) {
  const auto dir = scratch_dir("atlas");
  std::vector<std::uint8_t> px(kTileSize * kTileSize * 3, 200);
  write_ppm(dir / "custom_logo.ppm", kTileSize, kTileSize, px);
  const auto atlas = LabelAtlas::from_directory(dir);
  EXPECT_EQ(atlas.override_count(), 1u);
  EXPECT_EQ(atlas.tile("custom_logo")[0], 200);
  EXPECT_EQ(atlas.tile("other"), procedural_tile("other"));
  write_ppm(dir / "wrong_size.ppm", 4, 4, std::vector<std::uint8_t>(48, 0));
  EXPECT_THROW(LabelAtlas::from_directory(dir), IoError);
}
