#pragma once

// Framed request/response protocol between the harness and an external
// policy process. Each frame is a 4-byte big-endian length followed by one
// canonical JSON object with a "type" field.
//
//   hello{format_version, roles, send_frames}      -> hello_ack
//   reset{task, stage_meta}                        -> reset_ack
//   observe{tick, sim_time, instruction, directive?, visible_gates, frame_b64?} -> act{vx, vy, vz, omega}
//   reason{instruction, frame_b64}                 -> reason_reply{directive}
//   episode_end{outcome}, bye                      (no reply)
//   error{message}                                 either direction

#include <array>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "cogdrone/canonical.hpp"
#include "cogdrone/core.hpp"
#include "cogdrone/harness.hpp"
#include "cogdrone/transport.hpp"

namespace cogdrone {

inline constexpr int kProtocolVersion = 1;
inline constexpr std::uint32_t kMaxFrameBytes = 16u << 20;
inline constexpr const char* kPolicyAddrEnv = "COGDRONE_POLICY_ADDR";

/// Malformed frame or handshake refusal. The connection is unusable afterwards.
class ProtocolError : public TransportError {
 public:
  using TransportError::TransportError;
};

/// The peer answered a request with an error message.
class PeerError : public Error {
 public:
  using Error::Error;
};

inline void write_frame(ByteStream& s, const Json& msg) {
  const std::string body = canonical(msg);
  if (body.size() > kMaxFrameBytes) throw ProtocolError("frame exceeds maximum size");
  const auto n = static_cast<std::uint32_t>(body.size());
  const std::array<std::uint8_t, 4> header{static_cast<std::uint8_t>(n >> 24), static_cast<std::uint8_t>(n >> 16),
                                           static_cast<std::uint8_t>(n >> 8), static_cast<std::uint8_t>(n)};
  std::string buf(header.begin(), header.end());
  buf += body;
  s.write_all(buf.data(), buf.size());
}

/// Blocks up to `timeout` for the first byte; the rest of the frame is then
/// read without a deadline on the first byte's clock.
inline Json read_frame(ByteStream& s, std::optional<Millis> timeout = std::nullopt) {
  std::array<std::uint8_t, 4> header{};
  s.read_exact(header.data(), 1, timeout);
  s.read_exact(header.data() + 1, 3, std::nullopt);
  const std::uint32_t n = (std::uint32_t{header[0]} << 24) | (std::uint32_t{header[1]} << 16) |
                          (std::uint32_t{header[2]} << 8) | std::uint32_t{header[3]};
  if (n == 0 || n > kMaxFrameBytes) throw ProtocolError("bad frame length " + std::to_string(n));
  std::string body(n, '\0');
  s.read_exact(body.data(), n, std::nullopt);
  Json msg;
  try {
    msg = Json::parse(body);
  } catch (const Json::parse_error& e) {
    throw ProtocolError(std::string("malformed frame: ") + e.what());
  }
  if (!msg.is_object() || !msg.contains("type") || !msg["type"].is_string())
    throw ProtocolError("frame is not a typed message object");
  return msg;
}

inline Json make_message(const char* type, Json fields = Json::object()) {
  fields["type"] = type;
  return fields;
}

inline Json error_message(const std::string& text) { return make_message("error", Json{{"message", text}}); }

// ---------------------------------------------------------------------------
// Message bodies

inline Json stage_meta_json(const StageMeta& m) {
  return Json{{"stage_index", m.stage_index}, {"time_limit", m.time_limit},
              {"dt", m.dt},                   {"command_frame", std::string(to_string(m.command_frame))},
              {"spawn", m.spawn},             {"gates", m.gates}};
}

inline Json reset_message(const StageMeta& m) {
  return make_message("reset", Json{{"task", m.task}, {"stage_meta", stage_meta_json(m)}});
}

inline StageMeta stage_meta_from_reset(const Json& msg) {
  const auto& sm = msg.at("stage_meta");
  StageMeta m;
  m.task = msg.at("task").get<TaskBrief>();
  m.stage_index = sm.at("stage_index").get<std::size_t>();
  m.time_limit = sm.at("time_limit").get<double>();
  m.dt = sm.at("dt").get<double>();
  m.command_frame = command_frame_from_string(sm.at("command_frame").get<std::string>());
  m.spawn = sm.at("spawn").get<Pose>();
  m.gates = sm.at("gates").get<std::vector<GateSpec>>();
  return m;
}

inline Json observe_message(const Observation& obs, bool send_frames) {
  Json j{{"tick", obs.tick},
         {"sim_time", obs.sim_time},
         {"instruction", obs.instruction},
         {"visible_gates", obs.visible_gates}};
  if (obs.directive) j["directive"] = *obs.directive;
  if (send_frames && obs.frame) j["frame_b64"] = base64_encode(obs.frame->rgb);
  return make_message("observe", std::move(j));
}

inline Frame decode_frame_b64(const std::string& text) {
  Frame f;
  f.rgb = base64_decode(text);
  if (f.rgb.size() != kFrameBytes)
    throw ValidationError("frame_b64 decodes to " + std::to_string(f.rgb.size()) + " bytes, expected 196608");
  return f;
}

inline Observation observation_from_message(const Json& msg) {
  Observation obs;
  obs.tick = msg.at("tick").get<std::int64_t>();
  obs.sim_time = msg.at("sim_time").get<double>();
  obs.instruction = msg.at("instruction").get<std::string>();
  obs.visible_gates = msg.at("visible_gates").get<std::vector<VisibleGate>>();
  if (msg.contains("directive")) obs.directive = msg.at("directive").get<std::string>();
  if (msg.contains("frame_b64")) obs.frame = decode_frame_b64(msg.at("frame_b64").get<std::string>());
  return obs;
}

// ---------------------------------------------------------------------------
// Policy side

struct PolicyHandlers {
  std::unique_ptr<Controller> controller;
  std::unique_ptr<Reasoner> reasoner;
};

using PolicyFactory = std::function<PolicyHandlers()>;

struct SessionStats {
  std::int64_t resets = 0;
  std::int64_t observes = 0;
  std::int64_t reasons = 0;
  std::int64_t episodes = 0;
  bool clean_exit = false;  // ended with bye
  std::string error;
};

/// Serves one connection until bye, EOF or a protocol violation. Handler
/// exceptions are reported to the harness as error replies.
inline SessionStats serve_policy_session(ByteStream& stream, PolicyHandlers& handlers) {
  SessionStats stats;
  bool send_frames = false;
  auto refuse = [&](const std::string& why) {
    stats.error = why;
    try {
      write_frame(stream, error_message(why));
    } catch (const TransportError&) {
    }
  };
  try {
    const Json hello = read_frame(stream);
    if (hello["type"] != "hello") {
      refuse("expected hello");
      return stats;
    }
    if (hello.value("format_version", -1) != kProtocolVersion) {
      refuse("unsupported format_version " + hello.value("format_version", Json(nullptr)).dump() + ", expected 1");
      return stats;
    }
    Json roles = Json::array();
    for (const auto& r : hello.value("roles", Json::array())) {
      if (r == "controller" && !handlers.controller) return refuse("controller role not served"), stats;
      if (r == "reasoner" && !handlers.reasoner) return refuse("reasoner role not served"), stats;
      if (r != "controller" && r != "reasoner") return refuse("unknown role " + r.dump()), stats;
      roles.push_back(r);
    }
    send_frames = hello.value("send_frames", false);
    write_frame(stream, make_message("hello_ack", Json{{"format_version", kProtocolVersion},
                                                       {"roles", roles},
                                                       {"send_frames", send_frames}}));
    for (;;) {
      const Json msg = read_frame(stream);
      const auto type = msg["type"].get<std::string>();
      try {
        if (type == "reset") {
          ++stats.resets;
          if (!handlers.controller) throw ValidationError("no controller");
          handlers.controller->reset(stage_meta_from_reset(msg));
          write_frame(stream, make_message("reset_ack"));
        } else if (type == "observe") {
          ++stats.observes;
          if (!handlers.controller) throw ValidationError("no controller");
          const auto cmd = handlers.controller->act(observation_from_message(msg));
          Json reply = cmd;
          write_frame(stream, make_message("act", std::move(reply)));
        } else if (type == "reason") {
          ++stats.reasons;
          if (!handlers.reasoner) throw ValidationError("no reasoner");
          const Frame frame = decode_frame_b64(msg.at("frame_b64").get<std::string>());
          const auto d = handlers.reasoner->reason(msg.at("instruction").get<std::string>(), frame);
          write_frame(stream, make_message("reason_reply", Json{{"directive", d}}));
        } else if (type == "episode_end") {
          ++stats.episodes;
          if (handlers.controller) handlers.controller->episode_end(msg.at("outcome").get<StageOutcome>());
        } else if (type == "bye") {
          stats.clean_exit = true;
          return stats;
        } else {
          refuse("unexpected message type '" + type + "'");
          return stats;
        }
      } catch (const TransportError&) {
        throw;
      } catch (const std::exception& e) {
        if (type == "episode_end") continue;
        write_frame(stream, error_message(e.what()));
      }
    }
  } catch (const ProtocolError& e) {
    refuse(e.what());
  } catch (const TransportError& e) {
    stats.error = e.what();
  } catch (const std::exception& e) {
    refuse(std::string("malformed message: ") + e.what());
  }
  return stats;
}

/// Accepts connections and serves each on its own thread with fresh handlers.
/// Returns after `max_sessions` sessions have finished (0 = forever).
inline std::vector<SessionStats> serve_policy_endpoint(Listener& listener, const PolicyFactory& factory,
                                                       std::size_t max_sessions = 0) {
  std::vector<std::thread> threads;
  std::vector<SessionStats> stats;
  std::mutex mu;
  for (std::size_t n = 0; max_sessions == 0 || n < max_sessions; ++n) {
    std::shared_ptr<ByteStream> conn = listener.accept();
    threads.emplace_back([conn, &factory, &stats, &mu] {
      auto handlers = factory();
      auto s = serve_policy_session(*conn, handlers);
      std::lock_guard lk(mu);
      stats.push_back(std::move(s));
    });
  }
  for (auto& t : threads) t.join();
  return stats;
}

// ---------------------------------------------------------------------------
// Harness side

struct RemoteOptions {
  bool controller = true;
  bool reasoner = false;
  bool send_frames = false;
  Millis timeout{1000};
  CommandLimits limits;       // for clamp warnings
  int format_version = kProtocolVersion;  // overridable for handshake tests
};

/// One connection shared by the remote controller and reasoner. Requests are
/// serialized; replies to requests that timed out are discarded when they
/// eventually arrive.
class RemoteSession {
 public:
  RemoteSession(std::unique_ptr<ByteStream> stream, RemoteOptions opts) : stream_(std::move(stream)), opts_(opts) {
    Json roles = Json::array();
    if (opts_.controller) roles.push_back("controller");
    if (opts_.reasoner) roles.push_back("reasoner");
    const Json ack = request(make_message("hello", Json{{"format_version", opts_.format_version},
                                                        {"roles", roles},
                                                        {"send_frames", opts_.send_frames}}),
                             "hello_ack", true);
    if (ack.value("format_version", -1) != kProtocolVersion) throw ProtocolError("peer acknowledged a different format_version");
  }
  ~RemoteSession() { close(); }
  RemoteSession(const RemoteSession&) = delete;
  RemoteSession& operator=(const RemoteSession&) = delete;

  [[nodiscard]] const RemoteOptions& options() const { return opts_; }

  /// Sends `msg` and waits for a reply of type `expect`.
  Json request(const Json& msg, const char* expect, bool handshake = false) {
    std::lock_guard lk(mu_);
    if (closed_) throw TransportError("remote session closed");
    write_frame(*stream_, msg);
    for (;;) {
      Json reply;
      try {
        reply = read_frame(*stream_, opts_.timeout);
      } catch (const TimeoutError&) {
        ++stale_;
        throw;
      }
      if (stale_ > 0) {
        --stale_;
        continue;
      }
      if (reply["type"] == "error") {
        const auto text = reply.value("message", std::string("unspecified peer error"));
        if (handshake) throw ProtocolError("handshake refused: " + text);
        throw PeerError("peer error: " + text);
      }
      if (reply["type"] != expect)
        throw ProtocolError("expected " + std::string(expect) + ", got " + reply["type"].get<std::string>());
      return reply;
    }
  }

  void notify(const Json& msg) {
    std::lock_guard lk(mu_);
    if (closed_) return;
    write_frame(*stream_, msg);
  }

  void warn(std::string text) {
    std::lock_guard lk(warn_mu_);
    warnings_.push_back(std::move(text));
  }
  [[nodiscard]] std::vector<std::string> warnings() const {
    std::lock_guard lk(warn_mu_);
    return warnings_;
  }

  void close() {
    std::lock_guard lk(mu_);
    if (closed_) return;
    closed_ = true;
    try {
      write_frame(*stream_, make_message("bye"));
    } catch (const TransportError&) {
    }
    stream_->close();
  }

 private:
  std::unique_ptr<ByteStream> stream_;
  RemoteOptions opts_;
  std::mutex mu_;
  mutable std::mutex warn_mu_;
  std::vector<std::string> warnings_;
  int stale_ = 0;
  bool closed_ = false;
};

class RemoteController final : public Controller {
 public:
  explicit RemoteController(std::shared_ptr<RemoteSession> s) : session_(std::move(s)) {}

  void reset(const StageMeta& meta) override { session_->request(reset_message(meta), "reset_ack"); }

  VelocityCommand act(const Observation& obs) override {
    const Json reply = session_->request(observe_message(obs, session_->options().send_frames), "act");
    VelocityCommand cmd;
    try {
      cmd = reply.get<VelocityCommand>();
    } catch (const Json::exception& e) {
      throw PeerError(std::string("bad act message: ") + e.what());
    }
    if (!cmd.finite()) throw PeerError("act contains a non-finite component");
    if (!within_limits(cmd, session_->options().limits))
      session_->warn("tick " + std::to_string(obs.tick) + ": remote command " + canonical(Json(cmd)) +
                     " clamped to limits");
    return cmd;
  }

  void episode_end(const StageOutcome& outcome) override {
    session_->notify(make_message("episode_end", Json{{"outcome", outcome}}));
  }

  [[nodiscard]] bool wants_frames() const override { return session_->options().send_frames; }

 private:
  std::shared_ptr<RemoteSession> session_;
};

class RemoteReasoner final : public Reasoner {
 public:
  explicit RemoteReasoner(std::shared_ptr<RemoteSession> s) : session_(std::move(s)) {}

  std::string reason(const std::string& instruction, const Frame& keyframe) override {
    const Json reply = session_->request(
        make_message("reason", Json{{"instruction", instruction}, {"frame_b64", base64_encode(keyframe.rgb)}}),
        "reason_reply");
    if (!reply.contains("directive") || !reply["directive"].is_string()) throw PeerError("reason_reply without directive");
    return reply["directive"].get<std::string>();
  }

 private:
  std::shared_ptr<RemoteSession> session_;
};

struct RemotePolicy {
  std::shared_ptr<RemoteSession> session;
  std::unique_ptr<RemoteController> controller;  // null unless the controller role was requested
  std::unique_ptr<RemoteReasoner> reasoner;      // null unless the reasoner role was requested
};

inline RemotePolicy connect_remote_policy(std::unique_ptr<ByteStream> stream, const RemoteOptions& opts = {}) {
  RemotePolicy p;
  p.session = std::make_shared<RemoteSession>(std::move(stream), opts);
  if (opts.controller) p.controller = std::make_unique<RemoteController>(p.session);
  if (opts.reasoner) p.reasoner = std::make_unique<RemoteReasoner>(p.session);
  return p;
}

/// Empty address falls back to $COGDRONE_POLICY_ADDR.
inline RemotePolicy connect_remote_policy(std::string address, const RemoteOptions& opts = {}) {
  if (address.empty()) {
    const char* env = std::getenv(kPolicyAddrEnv);
    if (!env || !*env) throw ValidationError("no policy address given and COGDRONE_POLICY_ADDR is unset");
    address = env;
  }
  return connect_remote_policy(connect_endpoint(address), opts);
}

/// Runs serve_policy_session on a background thread over a loopback pair.
class LoopbackPeer {
 public:
  explicit LoopbackPeer(PolicyHandlers handlers) : handlers_(std::move(handlers)) {
    auto [harness_end, policy_end] = loopback_pair();
    harness_end_ = std::move(harness_end);
    policy_end_ = std::move(policy_end);
    thread_ = std::thread([this] { stats_ = serve_policy_session(*policy_end_, handlers_); });
  }
  ~LoopbackPeer() { join(); }
  LoopbackPeer(const LoopbackPeer&) = delete;
  LoopbackPeer& operator=(const LoopbackPeer&) = delete;

  /// The harness-side stream; can be taken once.
  std::unique_ptr<ByteStream> take_stream() { return std::move(harness_end_); }

  /// Waits for the session to end (the harness must have closed or said bye).
  const SessionStats& join() {
    if (harness_end_) harness_end_->close();
    if (thread_.joinable()) thread_.join();
    return stats_;
  }

  PolicyHandlers& handlers() { return handlers_; }

 private:
  PolicyHandlers handlers_;
  std::unique_ptr<ByteStream> harness_end_;
  std::unique_ptr<ByteStream> policy_end_;
  std::thread thread_;
  SessionStats stats_;
};

}  // namespace cogdrone
