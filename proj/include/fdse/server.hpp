#ifndef FDSE_SERVER_HPP
#define FDSE_SERVER_HPP

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <cerrno>
#include <cstring>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "fdse/bounded_queue.hpp"
#include "fdse/codec.hpp"
#include "fdse/runtime.hpp"
#include "fdse/wire.hpp"

namespace fdse {

class SocketError : public std::runtime_error {
 public:
  explicit SocketError(const std::string& what) : std::runtime_error(what + ": " + std::strerror(errno)) {}
};

/// Owning file descriptor.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Socket& operator=(Socket&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket() { reset(); }

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

  void set_timeouts(std::chrono::milliseconds recv, std::chrono::milliseconds send) const {
    auto tv = [](std::chrono::milliseconds ms) {
      timeval t{};
      t.tv_sec = static_cast<time_t>(ms.count() / 1000);
      t.tv_usec = static_cast<suseconds_t>((ms.count() % 1000) * 1000);
      return t;
    };
    const timeval r = tv(recv), s = tv(send);
    ::setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &r, sizeof r);
    ::setsockopt(fd_, SOL_SOCKET, SO_SNDTIMEO, &s, sizeof s);
  }

  /// False when the peer is gone or the send timed out.
  bool send_all(std::span<const std::uint8_t> bytes) const {
    std::size_t off = 0;
    while (off < bytes.size()) {
      const ssize_t n = ::send(fd_, bytes.data() + off, bytes.size() - off, MSG_NOSIGNAL);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) return false;
      off += static_cast<std::size_t>(n);
    }
    return true;
  }

 private:
  int fd_ = -1;
};

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;

  /// "host:port" or ":port".
  static Endpoint parse(const std::string& s) {
    const auto colon = s.rfind(':');
    if (colon == std::string::npos) throw std::invalid_argument("endpoint must be host:port, got '" + s + "'");
    Endpoint e;
    if (colon > 0) e.host = s.substr(0, colon);
    const long p = std::stol(s.substr(colon + 1));
    if (p < 0 || p > 65535) throw std::invalid_argument("port out of range in '" + s + "'");
    e.port = static_cast<std::uint16_t>(p);
    return e;
  }
};

inline sockaddr_in to_sockaddr(const Endpoint& e) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(e.port);
  if (::inet_pton(AF_INET, e.host.c_str(), &addr.sin_addr) != 1)
    throw std::invalid_argument("not an IPv4 address: " + e.host);
  return addr;
}

inline Socket connect_to(const Endpoint& e) {
  Socket s(::socket(AF_INET, SOCK_STREAM, 0));
  if (!s.valid()) throw SocketError("socket");
  const sockaddr_in addr = to_sockaddr(e);
  if (::connect(s.fd(), reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0) throw SocketError("connect");
  const int one = 1;
  ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return s;
}

/// Reads one whole message; nullopt on orderly EOF.
inline std::optional<wire::Message> read_message(const Socket& s, wire::Decoder& dec) {
  std::uint8_t buf[4096];
  for (;;) {
    if (auto m = dec.next()) return m;
    const ssize_t n = ::recv(s.fd(), buf, sizeof buf, 0);
    if (n < 0 && errno == EINTR) continue;
    if (n < 0) throw SocketError("recv");
    if (n == 0) {
      if (dec.buffered() != 0) throw wire::WireError(wire::Errc::BadLength, "stream ended inside a message");
      return std::nullopt;
    }
    dec.feed(std::span<const std::uint8_t>(buf, static_cast<std::size_t>(n)));
  }
}

struct SessionStats {
  std::uint64_t frames_in = 0;
  std::uint64_t frames_out = 0;
  std::optional<wire::Errc> error;
  std::string error_text;
};

using ModelFactory = std::function<std::unique_ptr<DuplexModel>()>;

/// Single-client duplex service. Each session runs a reader thread feeding a
/// 25-frame input queue, the step loop, and a writer thread draining a
/// 25-frame output queue. A client that stalls for more than `stall_timeout`
/// in either direction is disconnected.
class DuplexServer {
 public:
  static constexpr std::size_t kQueueFrames = 25;

  DuplexServer(StreamConfig cfg, ModelFactory factory, RuntimePolicy policy = {},
               std::chrono::milliseconds stall_timeout = std::chrono::seconds(1))
      : cfg_(cfg), factory_(std::move(factory)), policy_(std::move(policy)), codec_(cfg), stall_(stall_timeout) {
    policy_.realtime = false;  // paced by the client's frames
  }

  /// Binds and listens; returns the bound port (useful with port 0).
  std::uint16_t bind(const Endpoint& e) {
    listener_ = Socket(::socket(AF_INET, SOCK_STREAM, 0));
    if (!listener_.valid()) throw SocketError("socket");
    const int one = 1;
    ::setsockopt(listener_.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    const sockaddr_in addr = to_sockaddr(e);
    if (::bind(listener_.fd(), reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0) throw SocketError("bind");
    if (::listen(listener_.fd(), 4) != 0) throw SocketError("listen");
    sockaddr_in bound{};
    socklen_t len = sizeof bound;
    ::getsockname(listener_.fd(), reinterpret_cast<sockaddr*>(&bound), &len);
    port_ = ntohs(bound.sin_port);
    return port_;
  }

  std::uint16_t port() const { return port_; }

  /// Accepts and serves one client; nullopt if stop() was called first.
  std::optional<SessionStats> serve_one() {
    for (;;) {
      if (stopping_) return std::nullopt;
      pollfd p{listener_.fd(), POLLIN, 0};
      const int rc = ::poll(&p, 1, 100);
      if (rc < 0 && errno != EINTR) throw SocketError("poll");
      if (rc <= 0) continue;
      Socket client(::accept(listener_.fd(), nullptr, nullptr));
      if (!client.valid()) continue;
      return session(std::move(client));
    }
  }

  /// Service loop; returns only after stop().
  void serve(const std::function<void(const SessionStats&)>& on_session = {}) {
    while (auto stats = serve_one())
      if (on_session) on_session(*stats);
  }

  void stop() { stopping_ = true; }

 private:
  SessionStats session(Socket client) {
    const int one = 1;
    ::setsockopt(client.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    client.set_timeouts(stall_, stall_);

    SessionStats stats;
    std::mutex stats_mu;
    BoundedQueue<InputFrame> in_q(kQueueFrames);
    BoundedQueue<wire::Message> out_q(kQueueFrames * 4);
    std::atomic<bool> dead{false};

    auto fail = [&](wire::Errc code, const std::string& text) {
      std::lock_guard lock(stats_mu);
      if (!stats.error) {
        stats.error = code;
        stats.error_text = text;
        out_q.push_for(wire::error_message(code, text), stall_);
      }
    };

    std::thread writer([&] {
      while (auto m = out_q.pop()) {
        if (!client.send_all(wire::encode(*m))) {
          dead = true;
          in_q.close();
          break;
        }
      }
    });

    std::thread reader([&] {
      wire::Decoder dec;
      try {
        while (!dead) {
          auto m = read_message(client, dec);
          if (!m) break;
          switch (m->type) {
            case wire::MsgType::Config:
              if (!(wire::decode_config(*m) == cfg_))
                throw wire::WireError(wire::Errc::ConfigMismatch, "client config differs from server config");
              break;
            case wire::MsgType::ListenFrame: {
              auto f = wire::decode_frame(*m, cfg_);
              const bool voiced = !detail::all_empty(cfg_, f.codes);
              if (!in_q.push_for(InputFrame{std::move(f.codes), voiced}, stall_)) throw std::runtime_error("input stalled");
              break;
            }
            case wire::MsgType::PcmChunk: {
              auto pcm = wire::decode_pcm(*m);
              if (pcm.size() != cfg_.hop_samples)
                throw wire::WireError(wire::Errc::BadLength, "pcm chunk must hold exactly one hop");
              InputFrame in{codec_.encode_hop(pcm), rms_db(pcm) > -40.0};
              if (!in_q.push_for(std::move(in), stall_)) throw std::runtime_error("input stalled");
              break;
            }
            default:
              throw wire::WireError(wire::Errc::UnknownType, "clients may send config, listen-frame or pcm-chunk");
          }
          std::lock_guard lock(stats_mu);
          ++stats.frames_in;
        }
      } catch (const wire::WireError& e) {
        fail(e.code(), e.what());
      } catch (const SocketError& e) {
        fail(wire::Errc::Stalled, e.what());
      } catch (const std::exception& e) {
        fail(wire::Errc::Internal, e.what());
      }
      in_q.close();
    });

    try {
      auto model = factory_();
      QueueListenSource source(in_q);
      run(*model, source, cfg_, policy_, [&](std::uint64_t step, const Frame& f, const StepEvents& ev) {
        auto send = [&](wire::Message m) {
          if (!out_q.push_for(std::move(m), stall_)) throw std::runtime_error("client stopped reading");
        };
        send(wire::frame_message(wire::MsgType::SpeakFrame, f.speak, step));
        send(wire::text_message(f.text, step));
        if (ev.cutoff) send(wire::marker_message(step, MarkerKind::Cutoff));
        std::lock_guard lock(stats_mu);
        ++stats.frames_out;
      });
    } catch (const ProtocolError& e) {
      fail(wire::Errc::Internal, e.what());
    } catch (const std::exception& e) {
      fail(wire::Errc::Stalled, e.what());
    }
    in_q.close();
    out_q.close();
    writer.join();
    ::shutdown(client.fd(), SHUT_RDWR);
    reader.join();
    return stats;
  }

  StreamConfig cfg_;
  ModelFactory factory_;
  RuntimePolicy policy_;
  PseudoCodec codec_;
  std::chrono::milliseconds stall_;
  Socket listener_;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
};

}  // namespace fdse

#endif  // FDSE_SERVER_HPP
