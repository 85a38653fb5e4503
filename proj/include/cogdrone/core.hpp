#pragma once

// Shared domain types for the cognitive gate-track benchmark.
//
// World frame is East-North-Up with z up. Attitude is yaw only; the drone is
// commanded with 4-DoF velocity setpoints (vx, vy, vz, omega).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cogdrone {

// ---------------------------------------------------------------------------
// Errors

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Violated invariant on a domain value (bad yaw, degenerate gate, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Geometry the planner or layout engine cannot satisfy.
class PlanningError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Lost or refused connection to a remote policy. Aborts a benchmark run
/// instead of scoring the stage.
class TransportError : public Error {
 public:
  using Error::Error;
};

/// A remote peer did not answer within its deadline.
class TimeoutError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Geometry

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  constexpr Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  constexpr Vec3 operator-() const { return {-x, -y, -z}; }
  constexpr Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  constexpr bool operator==(const Vec3&) const = default;

  [[nodiscard]] constexpr double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  [[nodiscard]] double norm() const { return std::sqrt(dot(*this)); }
  [[nodiscard]] double horizontal_norm() const { return std::hypot(x, y); }
  [[nodiscard]] bool finite() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(z);
  }
};

inline constexpr Vec3 operator*(double s, const Vec3& v) { return v * s; }

inline double distance(const Vec3& a, const Vec3& b) { return (a - b).norm(); }

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Maps any finite angle into (-pi, pi]. Idempotent on that interval.
inline double normalize_yaw(double angle) {
  if (!std::isfinite(angle)) throw ValidationError("normalize_yaw: non-finite angle");
  double a = std::fmod(angle, kTwoPi);
  if (a <= -kPi) {
    a += kTwoPi;
  } else if (a > kPi) {
    a -= kTwoPi;
  }
  return a;
}

/// Unit vector of a heading in the horizontal plane.
inline Vec3 heading_vector(double yaw) { return {std::cos(yaw), std::sin(yaw), 0.0}; }

struct Pose {
  Vec3 position;
  double yaw = 0.0;  // (-pi, pi]

  bool operator==(const Pose&) const = default;

  static Pose make(const Vec3& position, double yaw) {
    if (!position.finite()) throw ValidationError("Pose: non-finite position");
    return Pose{position, normalize_yaw(yaw)};
  }
};

// ---------------------------------------------------------------------------
// Commands

/// Velocity setpoint. vx/vy/vz are in the body-yaw frame unless the world is
/// configured for world-frame commands; omega is CCW yaw rate seen from above.
struct VelocityCommand {
  double vx = 0.0;
  double vy = 0.0;
  double vz = 0.0;
  double omega = 0.0;

  bool operator==(const VelocityCommand&) const = default;
  [[nodiscard]] bool finite() const {
    return std::isfinite(vx) && std::isfinite(vy) && std::isfinite(vz) && std::isfinite(omega);
  }
};

struct CommandLimits {
  double v_max = 2.0;      // m/s per axis
  double omega_max = 1.5;  // rad/s
};

[[nodiscard]] inline bool within_limits(const VelocityCommand& c, const CommandLimits& lim) {
  return std::abs(c.vx) <= lim.v_max && std::abs(c.vy) <= lim.v_max &&
         std::abs(c.vz) <= lim.v_max && std::abs(c.omega) <= lim.omega_max;
}

/// Commands are clamped per axis, never rejected. Non-finite input throws.
inline VelocityCommand clamp_command(const VelocityCommand& c, const CommandLimits& lim) {
  if (!c.finite()) throw ValidationError("VelocityCommand: non-finite component");
  return {std::clamp(c.vx, -lim.v_max, lim.v_max), std::clamp(c.vy, -lim.v_max, lim.v_max),
          std::clamp(c.vz, -lim.v_max, lim.v_max),
          std::clamp(c.omega, -lim.omega_max, lim.omega_max)};
}

// ---------------------------------------------------------------------------
// Gates, tasks and stages

using Rgb = std::array<std::uint8_t, 3>;

enum class GateShape { rectangle, circle };

inline std::string_view to_string(GateShape s) {
  return s == GateShape::rectangle ? "rectangle" : "circle";
}

inline GateShape gate_shape_from_string(std::string_view s) {
  if (s == "rectangle") return GateShape::rectangle;
  if (s == "circle") return GateShape::circle;
  throw ValidationError("unknown gate shape '" + std::string(s) + "'");
}

/// Label assets are identifiers: [A-Za-z0-9_-]+.
inline bool valid_asset_id(std::string_view id) {
  if (id.empty() || id.size() > 128) return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
           c == '_' || c == '-';
  });
}

struct GateSpec {
  std::string gate_id;
  Vec3 center;
  double yaw = 0.0;  // plane normal = heading_vector(yaw)
  double width = 1.5;
  double height = 1.5;
  GateShape shape = GateShape::rectangle;
  Rgb color{255, 140, 0};
  std::string label_asset;

  bool operator==(const GateSpec&) const = default;

  [[nodiscard]] Vec3 normal() const { return heading_vector(yaw); }
  /// In-plane horizontal axis (left when looking along the normal).
  [[nodiscard]] Vec3 lateral_axis() const { return {-std::sin(yaw), std::cos(yaw), 0.0}; }

  void validate() const {
    if (!center.finite() || !std::isfinite(yaw))
      throw ValidationError("gate '" + gate_id + "': non-finite pose");
    if (!(width > 0.0) || !(height > 0.0) || !std::isfinite(width) || !std::isfinite(height))
      throw ValidationError("gate '" + gate_id + "': width and height must be positive");
    if (!valid_asset_id(label_asset))
      throw ValidationError("gate '" + gate_id + "': unresolvable label_asset '" + label_asset + "'");
  }
};

enum class Category { human_recognition, symbol_understanding, reasoning };

inline constexpr std::array<Category, 3> kCategories{
    Category::human_recognition, Category::symbol_understanding, Category::reasoning};

inline std::string_view to_string(Category c) {
  switch (c) {
    case Category::human_recognition: return "human_recognition";
    case Category::symbol_understanding: return "symbol_understanding";
    case Category::reasoning: return "reasoning";
  }
  return "?";
}

inline std::optional<Category> category_from_string(std::string_view s) {
  for (Category c : kCategories)
    if (to_string(c) == s) return c;
  return std::nullopt;
}

inline std::size_t category_index(Category c) { return static_cast<std::size_t>(c); }

struct TaskOption {
  std::string text;
  std::string label_asset;
  bool operator==(const TaskOption&) const = default;
};

/// Per-task gate appearance. colors is empty (slot palette), one triple (all
/// gates) or one triple per option.
struct GateStyle {
  double width = 1.5;
  double height = 1.5;
  GateShape shape = GateShape::rectangle;
  std::vector<Rgb> colors;
  bool operator==(const GateStyle&) const = default;
};

struct TaskSpec {
  std::string task_id;
  Category category = Category::reasoning;
  std::string prompt;
  std::vector<TaskOption> options;
  std::size_t correct_option = 0;
  GateStyle gate;

  bool operator==(const TaskSpec&) const = default;

  /// Throws ValidationError naming the offending field.
  void validate() const {
    auto fail = [&](const std::string& field, const std::string& msg) {
      throw ValidationError("task '" + task_id + "': " + field + ": " + msg);
    };
    if (task_id.empty()) fail("task_id", "must be non-empty");
    if (prompt.empty()) fail("prompt", "must be non-empty");
    if (options.size() < 2) fail("options", "needs at least 2 options");
    if (correct_option >= options.size())
      fail("correct_option", "index " + std::to_string(correct_option) + " out of range [0, " +
                                 std::to_string(options.size()) + ")");
    for (std::size_t i = 0; i < options.size(); ++i) {
      const auto path = "options[" + std::to_string(i) + "]";
      if (options[i].text.empty()) fail(path + ".text", "must be non-empty");
      if (!valid_asset_id(options[i].label_asset))
        fail(path + ".label_asset", "must be a non-empty identifier");
      for (std::size_t j = 0; j < i; ++j)
        if (options[j].label_asset == options[i].label_asset)
          fail(path + ".label_asset", "duplicates options[" + std::to_string(j) + "]");
    }
    if (!(gate.width > 0.0) || !(gate.height > 0.0)) fail("gate", "width/height must be positive");
    if (gate.colors.size() > 1 && gate.colors.size() != options.size())
      fail("gate.color", "per-option color list must have one entry per option");
  }
};

/// The task as shown to a policy: everything except the answer.
struct TaskBrief {
  std::string task_id;
  Category category = Category::reasoning;
  std::string prompt;
  std::vector<TaskOption> options;
  bool operator==(const TaskBrief&) const = default;
};

inline TaskBrief brief_of(const TaskSpec& t) {
  return {t.task_id, t.category, t.prompt, t.options};
}

struct SpawnRegion {
  Vec3 center;
  double radius = 1.0;
  double yaw_jitter = 0.2;
  Vec3 look_at;  // spawn heading points here (stage gate centroid)
  bool operator==(const SpawnRegion&) const = default;
};

struct TrackStage {
  std::size_t stage_index = 0;
  TaskSpec task;
  std::vector<GateSpec> gates;     // gates[i] carries task.options[i]
  std::vector<std::size_t> slots;  // physical slot of gates[i] (left-to-right index)
  SpawnRegion spawn_region;
  double time_limit = 30.0;

  bool operator==(const TrackStage&) const = default;

  [[nodiscard]] const GateSpec& correct_gate() const { return gates.at(task.correct_option); }

  void validate() const {
    task.validate();
    if (gates.size() != task.options.size())
      throw ValidationError("stage " + std::to_string(stage_index) +
                            ": gate count differs from option count");
    if (!(time_limit > 0.0)) throw ValidationError("stage: time_limit must be positive");
    const Vec3 heading_target = spawn_region.look_at - spawn_region.center;
    for (std::size_t i = 0; i < gates.size(); ++i) {
      gates[i].validate();
      if (gates[i].label_asset != task.options[i].label_asset)
        throw ValidationError("stage: gate " + gates[i].gate_id + " label differs from option");
      if ((gates[i].center - spawn_region.center).dot(heading_target) <= 0.0)
        throw ValidationError("stage: gate " + gates[i].gate_id + " is not ahead of the spawn");
      for (std::size_t j = 0; j < i; ++j) {
        const Vec3 d = gates[i].center - gates[j].center;
        const double min_sep = 0.5 * (std::max(gates[i].width, gates[i].height) +
                                      std::max(gates[j].width, gates[j].height));
        if (d.norm() <= min_sep)
          throw ValidationError("stage: gates " + gates[j].gate_id + " and " + gates[i].gate_id +
                                " overlap");
      }
    }
  }
};

struct Track {
  std::string track_id;
  std::vector<TrackStage> stages;
  std::uint64_t rng_seed = 0;
};

// ---------------------------------------------------------------------------
// Observations and outcomes

inline constexpr int kImageSize = 256;
inline constexpr std::size_t kFrameBytes = std::size_t{kImageSize} * kImageSize * 3;

/// 256x256 RGB24, row-major, top row first.
struct Frame {
  std::vector<std::uint8_t> rgb = std::vector<std::uint8_t>(kFrameBytes, 0);

  std::uint8_t* pixel(int row, int col) {
    return rgb.data() + (static_cast<std::size_t>(row) * kImageSize + col) * 3;
  }
  [[nodiscard]] const std::uint8_t* pixel(int row, int col) const {
    return rgb.data() + (static_cast<std::size_t>(row) * kImageSize + col) * 3;
  }
  bool operator==(const Frame&) const = default;
};

struct PixelPoint {
  double u = 0.0;  // column
  double v = 0.0;  // row
  bool operator==(const PixelPoint&) const = default;
};

struct VisibleGate {
  std::string gate_id;
  std::array<PixelPoint, 4> quad;  // top-left, top-right, bottom-right, bottom-left as seen
  double distance = 0.0;
  bool operator==(const VisibleGate&) const = default;
};

struct Observation {
  double sim_time = 0.0;
  std::int64_t tick = 0;
  std::optional<Frame> frame;
  std::vector<VisibleGate> visible_gates;
  std::string instruction;
  std::optional<std::string> directive;
};

enum class OutcomeKind { passed_correct, passed_wrong, timeout, out_of_bounds, harness_error };

inline std::string_view to_string(OutcomeKind k) {
  switch (k) {
    case OutcomeKind::passed_correct: return "passed_correct";
    case OutcomeKind::passed_wrong: return "passed_wrong";
    case OutcomeKind::timeout: return "timeout";
    case OutcomeKind::out_of_bounds: return "out_of_bounds";
    case OutcomeKind::harness_error: return "harness_error";
  }
  return "?";
}

inline std::optional<OutcomeKind> outcome_kind_from_string(std::string_view s) {
  for (auto k : {OutcomeKind::passed_correct, OutcomeKind::passed_wrong, OutcomeKind::timeout,
                 OutcomeKind::out_of_bounds, OutcomeKind::harness_error})
    if (to_string(k) == s) return k;
  return std::nullopt;
}

struct StageOutcome {
  OutcomeKind kind = OutcomeKind::timeout;
  std::optional<std::string> gate_id;  // set for passed_wrong (and passed_correct)
  double elapsed = 0.0;
  std::int64_t ticks = 0;
  std::string error;  // harness_error detail

  bool operator==(const StageOutcome&) const = default;
  [[nodiscard]] bool success() const { return kind == OutcomeKind::passed_correct; }
};

}  // namespace cogdrone
