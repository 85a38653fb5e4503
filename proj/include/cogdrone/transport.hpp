#pragma once

// Reliable ordered byte streams for the policy protocol (POSIX).
//
// Address forms:
//   HOST:PORT or tcp:HOST:PORT   TCP
//   unix:PATH                    Unix domain socket
//   exec:COMMAND                 spawn COMMAND via /bin/sh, talk over its stdin/stdout (connect only)

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/un.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <utility>

#include "cogdrone/core.hpp"

namespace cogdrone {

using Millis = std::chrono::milliseconds;

class ByteStream {
 public:
  virtual ~ByteStream() = default;
  virtual void write_all(const void* data, std::size_t size) = 0;
  /// Throws TimeoutError when no byte arrives within `timeout`, TransportError on EOF.
  virtual void read_exact(void* data, std::size_t size, std::optional<Millis> timeout) = 0;
  virtual void close() = 0;
};

/// Stream over a read fd and a write fd (equal for sockets).
class FdStream : public ByteStream {
 public:
  FdStream(int read_fd, int write_fd, bool owns) : read_fd_(read_fd), write_fd_(write_fd), owns_(owns) {}
  ~FdStream() override { close(); }
  FdStream(const FdStream&) = delete;
  FdStream& operator=(const FdStream&) = delete;

  void write_all(const void* data, std::size_t size) override {
    const auto* p = static_cast<const char*>(data);
    while (size > 0) {
      const ssize_t n = send_or_write(write_fd_, p, size, is_socket_);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw TransportError(std::string("write failed: ") + std::strerror(errno));
      }
      p += n;
      size -= static_cast<std::size_t>(n);
    }
  }

  void read_exact(void* data, std::size_t size, std::optional<Millis> timeout) override {
    auto* p = static_cast<char*>(data);
    const auto deadline = timeout ? std::optional(std::chrono::steady_clock::now() + *timeout) : std::nullopt;
    while (size > 0) {
      if (deadline) {
        const auto left = std::chrono::duration_cast<Millis>(*deadline - std::chrono::steady_clock::now());
        pollfd pfd{read_fd_, POLLIN, 0};
        const int r = ::poll(&pfd, 1, static_cast<int>(std::max<long long>(0, left.count())));
        if (r < 0) {
          if (errno == EINTR) continue;
          throw TransportError(std::string("poll failed: ") + std::strerror(errno));
        }
        if (r == 0) throw TimeoutError("peer did not respond within " + std::to_string(timeout->count()) + " ms");
      }
      const ssize_t n = ::read(read_fd_, p, size);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw TransportError(std::string("read failed: ") + std::strerror(errno));
      }
      if (n == 0) throw TransportError("connection closed by peer");
      p += n;
      size -= static_cast<std::size_t>(n);
    }
  }

  void close() override {
    if (!owns_) return;
    if (read_fd_ >= 0) ::close(read_fd_);
    if (write_fd_ >= 0 && write_fd_ != read_fd_) ::close(write_fd_);
    read_fd_ = write_fd_ = -1;
  }

  void mark_socket() { is_socket_ = true; }

 private:
  static ssize_t send_or_write(int fd, const char* p, std::size_t n, bool socket) {
    return socket ? ::send(fd, p, n, MSG_NOSIGNAL) : ::write(fd, p, n);
  }

  int read_fd_;
  int write_fd_;
  bool owns_;
  bool is_socket_ = false;
};

/// Stream to a spawned child process; the child is reaped on close.
class ProcessStream final : public ByteStream {
 public:
  explicit ProcessStream(const std::string& command) {
    int to_child[2];
    int from_child[2];
    if (::pipe(to_child) != 0 || ::pipe(from_child) != 0)
      throw TransportError(std::string("pipe failed: ") + std::strerror(errno));
    pid_ = ::fork();
    if (pid_ < 0) throw TransportError(std::string("fork failed: ") + std::strerror(errno));
    if (pid_ == 0) {
      ::dup2(to_child[0], STDIN_FILENO);
      ::dup2(from_child[1], STDOUT_FILENO);
      ::close(to_child[0]);
      ::close(to_child[1]);
      ::close(from_child[0]);
      ::close(from_child[1]);
      ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    ::signal(SIGPIPE, SIG_IGN);
    stream_ = std::make_unique<FdStream>(from_child[0], to_child[1], true);
  }
  ~ProcessStream() override { close(); }

  void write_all(const void* d, std::size_t n) override { stream_->write_all(d, n); }
  void read_exact(void* d, std::size_t n, std::optional<Millis> t) override { stream_->read_exact(d, n, t); }

  void close() override {
    if (stream_) stream_->close();
    if (pid_ > 0) {
      int status = 0;
      for (int i = 0; i < 50; ++i) {
        if (::waitpid(pid_, &status, WNOHANG) == pid_) {
          pid_ = -1;
          return;
        }
        std::this_thread::sleep_for(Millis(10));
      }
      ::kill(pid_, SIGKILL);
      ::waitpid(pid_, &status, 0);
      pid_ = -1;
    }
  }

 private:
  pid_t pid_ = -1;
  std::unique_ptr<FdStream> stream_;
};

struct Endpoint {
  enum class Kind { tcp, unix_socket, exec } kind = Kind::tcp;
  std::string host;  // tcp
  int port = 0;      // tcp
  std::string path;  // unix socket path or exec command
};

inline Endpoint parse_endpoint(std::string_view address) {
  Endpoint ep;
  if (address.starts_with("unix:")) {
    ep.kind = Endpoint::Kind::unix_socket;
    ep.path = std::string(address.substr(5));
    if (ep.path.empty()) throw ValidationError("endpoint: empty unix socket path");
    return ep;
  }
  if (address.starts_with("exec:")) {
    ep.kind = Endpoint::Kind::exec;
    ep.path = std::string(address.substr(5));
    if (ep.path.empty()) throw ValidationError("endpoint: empty exec command");
    return ep;
  }
  if (address.starts_with("tcp:")) address.remove_prefix(4);
  const auto colon = address.rfind(':');
  if (colon == std::string_view::npos) throw ValidationError("endpoint: expected HOST:PORT, got '" + std::string(address) + "'");
  ep.host = std::string(address.substr(0, colon));
  if (ep.host.empty()) ep.host = "127.0.0.1";
  const auto port = std::string(address.substr(colon + 1));
  try {
    std::size_t used = 0;
    ep.port = std::stoi(port, &used);
    if (used != port.size() || ep.port < 0 || ep.port > 65535) throw std::out_of_range("port");
  } catch (const std::exception&) {
    throw ValidationError("endpoint: bad port '" + port + "'");
  }
  return ep;
}

namespace detail {

inline int tcp_socket_for(const Endpoint& ep, bool passive, sockaddr_storage& addr, socklen_t& len) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  if (passive) hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  const auto port = std::to_string(ep.port);
  if (const int rc = ::getaddrinfo(ep.host.c_str(), port.c_str(), &hints, &res); rc != 0)
    throw TransportError("cannot resolve " + ep.host + ": " + ::gai_strerror(rc));
  const int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  std::memcpy(&addr, res->ai_addr, res->ai_addrlen);
  len = res->ai_addrlen;
  ::freeaddrinfo(res);
  if (fd < 0) throw TransportError(std::string("socket failed: ") + std::strerror(errno));
  return fd;
}

inline std::unique_ptr<ByteStream> socket_stream(int fd) {
  auto s = std::make_unique<FdStream>(fd, fd, true);
  s->mark_socket();
  return s;
}

}  // namespace detail

inline std::unique_ptr<ByteStream> connect_endpoint(const Endpoint& ep) {
  if (ep.kind == Endpoint::Kind::exec) return std::make_unique<ProcessStream>(ep.path);
  if (ep.kind == Endpoint::Kind::unix_socket) {
    const int fd = ::socket(AF_UNIX, SOCK_STREAM, 0);
    if (fd < 0) throw TransportError(std::string("socket failed: ") + std::strerror(errno));
    sockaddr_un addr{};
    addr.sun_family = AF_UNIX;
    std::strncpy(addr.sun_path, ep.path.c_str(), sizeof(addr.sun_path) - 1);
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
      ::close(fd);
      throw TransportError("cannot connect to unix:" + ep.path + ": " + std::strerror(errno));
    }
    return detail::socket_stream(fd);
  }
  sockaddr_storage addr{};
  socklen_t len = 0;
  const int fd = detail::tcp_socket_for(ep, false, addr, len);
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), len) != 0) {
    const auto err = errno;
    ::close(fd);
    throw TransportError("cannot connect to " + ep.host + ":" + std::to_string(ep.port) + ": " + std::strerror(err));
  }
  const int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  return detail::socket_stream(fd);
}

inline std::unique_ptr<ByteStream> connect_endpoint(std::string_view address) {
  return connect_endpoint(parse_endpoint(address));
}

class Listener {
 public:
  explicit Listener(const Endpoint& ep) : endpoint_(ep) {
    if (ep.kind == Endpoint::Kind::exec) throw ValidationError("cannot listen on an exec: endpoint");
    if (ep.kind == Endpoint::Kind::unix_socket) {
      fd_ = ::socket(AF_UNIX, SOCK_STREAM, 0);
      sockaddr_un addr{};
      addr.sun_family = AF_UNIX;
      std::strncpy(addr.sun_path, ep.path.c_str(), sizeof(addr.sun_path) - 1);
      ::unlink(ep.path.c_str());
      if (fd_ < 0 || ::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0)
        fail("bind unix:" + ep.path);
    } else {
      sockaddr_storage addr{};
      socklen_t len = 0;
      fd_ = detail::tcp_socket_for(ep, true, addr, len);
      const int one = 1;
      ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
      if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), len) != 0) fail("bind " + ep.host + ":" + std::to_string(ep.port));
      sockaddr_storage bound{};
      socklen_t blen = sizeof(bound);
      ::getsockname(fd_, reinterpret_cast<sockaddr*>(&bound), &blen);
      port_ = bound.ss_family == AF_INET6 ? ntohs(reinterpret_cast<sockaddr_in6*>(&bound)->sin6_port)
                                          : ntohs(reinterpret_cast<sockaddr_in*>(&bound)->sin_port);
    }
    if (::listen(fd_, 8) != 0) fail("listen");
  }
  explicit Listener(std::string_view address) : Listener(parse_endpoint(address)) {}
  ~Listener() {
    if (fd_ >= 0) ::close(fd_);
    if (endpoint_.kind == Endpoint::Kind::unix_socket) ::unlink(endpoint_.path.c_str());
  }
  Listener(const Listener&) = delete;
  Listener& operator=(const Listener&) = delete;

  /// Bound TCP port (useful after binding port 0).
  [[nodiscard]] int port() const { return port_; }

  std::unique_ptr<ByteStream> accept() {
    for (;;) {
      const int fd = ::accept(fd_, nullptr, nullptr);
      if (fd >= 0) return detail::socket_stream(fd);
      if (errno != EINTR) throw TransportError(std::string("accept failed: ") + std::strerror(errno));
    }
  }

 private:
  [[noreturn]] void fail(const std::string& what) {
    const auto err = errno;
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
    throw TransportError(what + ": " + std::strerror(err));
  }

  Endpoint endpoint_;
  int fd_ = -1;
  int port_ = 0;
};

/// Connected in-process pair (AF_UNIX socketpair).
inline std::pair<std::unique_ptr<ByteStream>, std::unique_ptr<ByteStream>> loopback_pair() {
  int fds[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM, 0, fds) != 0)
    throw TransportError(std::string("socketpair failed: ") + std::strerror(errno));
  return {detail::socket_stream(fds[0]), detail::socket_stream(fds[1])};
}

inline std::unique_ptr<ByteStream> stdio_stream() {
  return std::make_unique<FdStream>(STDIN_FILENO, STDOUT_FILENO, false);
}

}  // namespace cogdrone
