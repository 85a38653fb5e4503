#pragma once

// Canonical text form shared by dataset files, reports and the wire protocol:
// compact JSON, UTF-8, keys sorted (nlohmann::json objects are std::map
// backed), doubles printed as the shortest decimal that round-trips.

#include <openssl/evp.h>

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cogdrone/core.hpp"

namespace cogdrone {

using Json = nlohmann::json;

inline std::string canonical(const Json& j) { return j.dump(-1, ' ', false, Json::error_handler_t::strict); }

inline Json parse_json(std::string_view text) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ValidationError(std::string("malformed JSON: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Hashing and base64 (OpenSSL libcrypto)

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (ctx_ == nullptr || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1)
      throw Error("sha256: init failed");
  }
  ~Sha256() { EVP_MD_CTX_free(ctx_); }
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  Sha256& update(std::span<const std::uint8_t> bytes) {
    EVP_DigestUpdate(ctx_, bytes.data(), bytes.size());
    return *this;
  }
  Sha256& update(std::string_view s) {
    EVP_DigestUpdate(ctx_, s.data(), s.size());
    return *this;
  }
  std::string hex() {
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx_, digest.data(), &len);
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
      out.push_back(kHex[digest[i] >> 4]);
      out.push_back(kHex[digest[i] & 0xF]);
    }
    return out;
  }

 private:
  EVP_MD_CTX* ctx_;
};

inline std::string sha256_hex(std::string_view s) { return Sha256().update(s).hex(); }
inline std::string sha256_hex(std::span<const std::uint8_t> b) { return Sha256().update(b).hex(); }

inline std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

inline std::vector<std::uint8_t> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw ValidationError("base64: length not a multiple of 4");
  std::vector<std::uint8_t> out(3 * (text.size() / 4));
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) throw ValidationError("base64: invalid input");
  // EVP_DecodeBlock keeps the padding bytes as zeros.
  std::size_t pad = 0;
  if (!text.empty() && text.back() == '=') ++pad;
  if (text.size() > 1 && text[text.size() - 2] == '=') ++pad;
  out.resize(static_cast<std::size_t>(n) - pad);
  return out;
}

// ---------------------------------------------------------------------------
// File helpers

inline std::string read_text_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::filesystem::path& p, std::string_view content) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + p.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError("write failed: " + p.string());
}

// ---------------------------------------------------------------------------
// JSON mappings for core types

inline void to_json(Json& j, const Vec3& v) { j = Json{{"x", v.x}, {"y", v.y}, {"z", v.z}}; }
inline void from_json(const Json& j, Vec3& v) {
  v = {j.at("x").get<double>(), j.at("y").get<double>(), j.at("z").get<double>()};
}

inline void to_json(Json& j, const Pose& p) {
  j = Json{{"x", p.position.x}, {"y", p.position.y}, {"z", p.position.z}, {"yaw", p.yaw}};
}
inline void from_json(const Json& j, Pose& p) {
  p.position = {j.at("x").get<double>(), j.at("y").get<double>(), j.at("z").get<double>()};
  p.yaw = j.at("yaw").get<double>();
}

inline void to_json(Json& j, const VelocityCommand& c) {
  j = Json{{"vx", c.vx}, {"vy", c.vy}, {"vz", c.vz}, {"omega", c.omega}};
}
inline void from_json(const Json& j, VelocityCommand& c) {
  c = {j.at("vx").get<double>(), j.at("vy").get<double>(), j.at("vz").get<double>(),
       j.at("omega").get<double>()};
}

inline Json rgb_json(const Rgb& c) { return Json::array({c[0], c[1], c[2]}); }
inline Rgb rgb_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 3) throw ValidationError("color must be [r, g, b]");
  Rgb c{};
  for (std::size_t i = 0; i < 3; ++i) {
    const auto v = j.at(i).get<std::int64_t>();
    if (v < 0 || v > 255) throw ValidationError("color component out of range 0-255");
    c[i] = static_cast<std::uint8_t>(v);
  }
  return c;
}

inline void to_json(Json& j, const GateSpec& g) {
  j = Json{{"gate_id", g.gate_id},     {"center", g.center},
           {"yaw", g.yaw},             {"width", g.width},
           {"height", g.height},       {"shape", std::string(to_string(g.shape))},
           {"color", rgb_json(g.color)}, {"label_asset", g.label_asset}};
}
inline void from_json(const Json& j, GateSpec& g) {
  g.gate_id = j.at("gate_id").get<std::string>();
  g.center = j.at("center").get<Vec3>();
  g.yaw = j.at("yaw").get<double>();
  g.width = j.at("width").get<double>();
  g.height = j.at("height").get<double>();
  g.shape = gate_shape_from_string(j.at("shape").get<std::string>());
  g.color = rgb_from_json(j.at("color"));
  g.label_asset = j.at("label_asset").get<std::string>();
}

inline void to_json(Json& j, const TaskOption& o) {
  j = Json{{"text", o.text}, {"label_asset", o.label_asset}};
}
inline void from_json(const Json& j, TaskOption& o) {
  o.text = j.at("text").get<std::string>();
  o.label_asset = j.at("label_asset").get<std::string>();
}

inline Json gate_style_json(const GateStyle& s) {
  Json j{{"width", s.width}, {"height", s.height}, {"shape", std::string(to_string(s.shape))}};
  if (s.colors.size() == 1) {
    j["color"] = rgb_json(s.colors.front());
  } else if (!s.colors.empty()) {
    Json arr = Json::array();
    for (const auto& c : s.colors) arr.push_back(rgb_json(c));
    j["color"] = arr;
  }
  return j;
}

inline void to_json(Json& j, const TaskSpec& t) {
  j = Json{{"task_id", t.task_id},
           {"category", std::string(to_string(t.category))},
           {"prompt", t.prompt},
           {"options", t.options},
           {"correct_option", t.correct_option},
           {"gate", gate_style_json(t.gate)}};
}

inline void to_json(Json& j, const TaskBrief& t) {
  j = Json{{"task_id", t.task_id},
           {"category", std::string(to_string(t.category))},
           {"prompt", t.prompt},
           {"options", t.options}};
}
inline void from_json(const Json& j, TaskBrief& t) {
  t.task_id = j.at("task_id").get<std::string>();
  const auto cat = category_from_string(j.at("category").get<std::string>());
  if (!cat) throw ValidationError("unknown category");
  t.category = *cat;
  t.prompt = j.at("prompt").get<std::string>();
  t.options = j.at("options").get<std::vector<TaskOption>>();
}

inline void to_json(Json& j, const SpawnRegion& r) {
  j = Json{{"center", r.center},
           {"radius", r.radius},
           {"yaw_jitter", r.yaw_jitter},
           {"look_at", r.look_at}};
}
inline void from_json(const Json& j, SpawnRegion& r) {
  r.center = j.at("center").get<Vec3>();
  r.radius = j.at("radius").get<double>();
  r.yaw_jitter = j.at("yaw_jitter").get<double>();
  r.look_at = j.at("look_at").get<Vec3>();
}

inline void to_json(Json& j, const VisibleGate& g) {
  Json quad = Json::array();
  for (const auto& p : g.quad) quad.push_back(Json::array({p.u, p.v}));
  j = Json{{"gate_id", g.gate_id}, {"quad", quad}, {"distance", g.distance}};
}
inline void from_json(const Json& j, VisibleGate& g) {
  g.gate_id = j.at("gate_id").get<std::string>();
  const auto& quad = j.at("quad");
  if (!quad.is_array() || quad.size() != 4) throw ValidationError("quad must have 4 corners");
  for (std::size_t i = 0; i < 4; ++i)
    g.quad[i] = {quad.at(i).at(0).get<double>(), quad.at(i).at(1).get<double>()};
  g.distance = j.at("distance").get<double>();
}

inline void to_json(Json& j, const StageOutcome& o) {
  j = Json{{"kind", std::string(to_string(o.kind))}, {"elapsed", o.elapsed}, {"ticks", o.ticks}};
  if (o.gate_id) j["gate_id"] = *o.gate_id;
  if (!o.error.empty()) j["error"] = o.error;
}
inline void from_json(const Json& j, StageOutcome& o) {
  const auto kind = outcome_kind_from_string(j.at("kind").get<std::string>());
  if (!kind) throw ValidationError("unknown outcome kind");
  o.kind = *kind;
  o.elapsed = j.at("elapsed").get<double>();
  o.ticks = j.at("ticks").get<std::int64_t>();
  o.gate_id.reset();
  if (j.contains("gate_id")) o.gate_id = j.at("gate_id").get<std::string>();
  o.error = j.value("error", std::string{});
}

}  // namespace cogdrone
