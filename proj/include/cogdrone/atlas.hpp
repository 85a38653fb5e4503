#pragma once

// Label atlas: the 32x32 tiles drawn on gate headers (symbols, logos,
// portraits). Unknown ids get a procedural identicon-style tile derived only
// from the id string; an image directory can override individual tiles.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "cogdrone/core.hpp"
#include "cogdrone/image.hpp"
#include "cogdrone/rng.hpp"

namespace cogdrone {

inline constexpr int kTileSize = 32;

using Tile = std::array<std::uint8_t, kTileSize * kTileSize * 3>;

/// Pure function of the asset id.
inline Tile procedural_tile(std::string_view asset_id) {
  Rng rng(splitmix64(fnv1a64(asset_id)));
  auto channel = [&](int lo, int hi) {
    return static_cast<std::uint8_t>(lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1))));
  };
  const Rgb bg{channel(200, 255), channel(200, 255), channel(200, 255)};
  const Rgb fg{channel(0, 150), channel(0, 150), channel(0, 150)};
  const Rgb accent{channel(0, 255), channel(0, 255), channel(0, 255)};

  // 8x8 cells of 4x4 pixels; left half random, mirrored onto the right half.
  std::array<std::uint8_t, 64> cells{};
  for (int r = 0; r < 8; ++r) {
    for (int c = 0; c < 4; ++c) {
      const auto v = static_cast<std::uint8_t>(rng.below(3));
      cells[r * 8 + c] = v;
      cells[r * 8 + 7 - c] = v;
    }
  }
  Tile tile{};
  for (int y = 0; y < kTileSize; ++y) {
    for (int x = 0; x < kTileSize; ++x) {
      const bool border = x == 0 || y == 0 || x == kTileSize - 1 || y == kTileSize - 1;
      const std::uint8_t cell = cells[(y / 4) * 8 + x / 4];
      const Rgb& c = border ? fg : (cell == 0 ? bg : (cell == 1 ? fg : accent));
      auto* px = tile.data() + (y * kTileSize + x) * 3;
      px[0] = c[0];
      px[1] = c[1];
      px[2] = c[2];
    }
  }
  return tile;
}

class LabelAtlas {
 public:
  LabelAtlas() = default;

  /// Loads every `<asset_id>.ppm` (32x32, P6) in dir as an override.
  static LabelAtlas from_directory(const std::filesystem::path& dir) {
    LabelAtlas atlas;
    if (!std::filesystem::is_directory(dir)) throw IoError("atlas directory not found: " + dir.string());
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
      if (!entry.is_regular_file() || entry.path().extension() != ".ppm") continue;
      const auto id = entry.path().stem().string();
      if (!valid_asset_id(id)) continue;
      const auto img = read_ppm(entry.path());
      if (img.width != kTileSize || img.height != kTileSize)
        throw IoError(entry.path().string() + ": atlas tiles must be 32x32");
      Tile t{};
      std::copy(img.rgb.begin(), img.rgb.end(), t.begin());
      atlas.overrides_[id] = t;
    }
    return atlas;
  }

  void set_override(const std::string& id, const Tile& tile) { overrides_[id] = tile; }

  [[nodiscard]] bool resolvable(std::string_view id) const { return valid_asset_id(id); }

  [[nodiscard]] Tile tile(std::string_view id) const {
    if (auto it = overrides_.find(std::string(id)); it != overrides_.end()) return it->second;
    return procedural_tile(id);
  }

  [[nodiscard]] std::size_t override_count() const { return overrides_.size(); }

 private:
  std::map<std::string, Tile, std::less<>> overrides_;
};

}  // namespace cogdrone
