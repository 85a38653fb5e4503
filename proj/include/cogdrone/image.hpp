#pragma once

// Binary PPM (P6, maxval 255) reading and writing.

#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "cogdrone/core.hpp"

namespace cogdrone {

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;
};

inline std::string ppm_header(int width, int height) {
  return "P6\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
}

inline void write_ppm(const std::filesystem::path& path, int width, int height,
                      std::span<const std::uint8_t> rgb) {
  if (rgb.size() != static_cast<std::size_t>(width) * height * 3)
    throw ValidationError("write_ppm: buffer size does not match dimensions");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  const auto header = ppm_header(width, height);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

inline void write_ppm(const std::filesystem::path& path, const Frame& frame) {
  write_ppm(path, kImageSize, kImageSize, frame.rgb);
}

/// Parses a P6 image with maxval 255. Throws IoError on truncation or any
/// other malformation.
inline RgbImage read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&]() -> long {
    skip_space();
    long v = 0;
    const std::size_t start = pos;
    while (pos < bytes.size() && std::isdigit(bytes[pos]) && pos - start < 9)
      v = v * 10 + (bytes[pos++] - '0');
    if (pos == start) throw IoError(path.string() + ": malformed PPM header");
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6')
    throw IoError(path.string() + ": not a binary PPM (P6)");
  pos = 2;
  const long w = read_int();
  const long h = read_int();
  const long maxval = read_int();
  if (w <= 0 || h <= 0 || maxval != 255) throw IoError(path.string() + ": unsupported PPM header");
  if (pos >= bytes.size() || !std::isspace(bytes[pos]))
    throw IoError(path.string() + ": malformed PPM header");
  ++pos;
  const std::size_t need = static_cast<std::size_t>(w) * h * 3;
  if (bytes.size() - pos != need)
    throw IoError(path.string() + ": pixel data has " + std::to_string(bytes.size() - pos) +
                  " bytes, expected " + std::to_string(need));
  RgbImage img;
  img.width = static_cast<int>(w);
  img.height = static_cast<int>(h);
  img.rgb.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
  return img;
}

inline Frame read_frame_ppm(const std::filesystem::path& path) {
  auto img = read_ppm(path);
  if (img.width != kImageSize || img.height != kImageSize)
    throw IoError(path.string() + ": frame must be 256x256, got " + std::to_string(img.width) +
                  "x" + std::to_string(img.height));
  Frame f;
  f.rgb = std::move(img.rgb);
  return f;
}

}  // namespace cogdrone
