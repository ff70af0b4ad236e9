#pragma once

// TCP transport: each wire message travels as a u64 little-endian byte count
// followed by the encoded message. Per round every client sends one update per
// job, the server answers with the aggregate, and a final "done" message ends
// the session.

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <exception>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "fedreview/federation.hpp"

namespace fedreview {

inline constexpr int kDefaultTimeoutMs = 300'000;
inline constexpr std::uint64_t kMaxFrameBytes = 1ULL << 32;

struct Address {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;

  // "host:port", ":port" or "port".
  static Address parse(std::string_view text) {
    Address a;
    const auto colon = text.rfind(':');
    std::string_view port_text = text;
    if (colon != std::string_view::npos) {
      if (colon > 0) a.host = std::string(text.substr(0, colon));
      port_text = text.substr(colon + 1);
    }
    unsigned long port = 0;
    try {
      std::size_t used = 0;
      port = std::stoul(std::string(port_text), &used);
      if (used != port_text.size()) throw std::invalid_argument("port");
    } catch (const std::exception&) {
      throw ConfigError("bad address '" + std::string(text) + "'");
    }
    if (port > 65535) throw ConfigError("port out of range in '" + std::string(text) + "'");
    a.port = static_cast<std::uint16_t>(port);
    return a;
  }

  std::string str() const { return host + ":" + std::to_string(port); }
};

class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  Socket(Socket&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Socket& operator=(Socket&& o) noexcept {
    if (this != &o) {
      close();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  ~Socket() { close(); }

  int fd() const noexcept { return fd_; }
  bool valid() const noexcept { return fd_ >= 0; }
  void close() noexcept {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

  void send_all(const std::uint8_t* data, std::size_t n) {
    while (n > 0) {
      const ssize_t k = ::send(fd_, data, n, MSG_NOSIGNAL);
      if (k < 0) {
        if (errno == EINTR) continue;
        throw TransportError(std::string("send failed: ") + std::strerror(errno));
      }
      data += k;
      n -= static_cast<std::size_t>(k);
    }
  }

  void recv_exact(std::uint8_t* data, std::size_t n, int timeout_ms) {
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
    while (n > 0) {
      wait_readable(deadline);
      const ssize_t k = ::recv(fd_, data, n, 0);
      if (k < 0) {
        if (errno == EINTR) continue;
        throw TransportError(std::string("recv failed: ") + std::strerror(errno));
      }
      if (k == 0) throw TransportError("connection closed by peer");
      data += k;
      n -= static_cast<std::size_t>(k);
    }
  }

 private:
  void wait_readable(std::chrono::steady_clock::time_point deadline) const {
    for (;;) {
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) throw TransportError("timed out waiting for data");
      pollfd p{fd_, POLLIN, 0};
      const int r = ::poll(&p, 1, static_cast<int>(std::min<long long>(left.count(), INT32_MAX)));
      if (r > 0) return;
      if (r < 0 && errno != EINTR) throw TransportError(std::string("poll failed: ") + std::strerror(errno));
    }
  }

  int fd_ = -1;
};

inline void send_frame(Socket& s, const std::vector<std::uint8_t>& payload) {
  std::uint8_t len[8];
  const std::uint64_t n = payload.size();
  for (int i = 0; i < 8; ++i) len[i] = static_cast<std::uint8_t>(n >> (8 * i));
  s.send_all(len, 8);
  s.send_all(payload.data(), payload.size());
}

inline std::vector<std::uint8_t> recv_frame(Socket& s, int timeout_ms) {
  std::uint8_t len[8];
  s.recv_exact(len, 8, timeout_ms);
  std::uint64_t n = 0;
  for (int i = 0; i < 8; ++i) n |= static_cast<std::uint64_t>(len[i]) << (8 * i);
  if (n > kMaxFrameBytes) throw ProtocolError("frame length " + std::to_string(n) + " exceeds limit");
  std::vector<std::uint8_t> payload(n);
  s.recv_exact(payload.data(), payload.size(), timeout_ms);
  return payload;
}

namespace detail {

inline sockaddr_in resolve(const Address& a) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const int rc = ::getaddrinfo(a.host.c_str(), nullptr, &hints, &res);
  if (rc != 0 || !res) throw TransportError("cannot resolve '" + a.host + "': " + ::gai_strerror(rc));
  sockaddr_in sa{};
  std::memcpy(&sa, res->ai_addr, sizeof sa);
  ::freeaddrinfo(res);
  sa.sin_port = htons(a.port);
  return sa;
}

}  // namespace detail

class TcpListener {
 public:
  // Port 0 binds an ephemeral port; see port().
  explicit TcpListener(const Address& addr) {
    sock_ = Socket(::socket(AF_INET, SOCK_STREAM, 0));
    if (!sock_.valid()) throw TransportError(std::string("socket failed: ") + std::strerror(errno));
    int one = 1;
    ::setsockopt(sock_.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in sa = detail::resolve(addr);
    if (::bind(sock_.fd(), reinterpret_cast<sockaddr*>(&sa), sizeof sa) != 0) {
      throw TransportError("cannot bind " + addr.str() + ": " + std::strerror(errno));
    }
    if (::listen(sock_.fd(), 16) != 0) throw TransportError(std::string("listen failed: ") + std::strerror(errno));
    socklen_t len = sizeof sa;
    ::getsockname(sock_.fd(), reinterpret_cast<sockaddr*>(&sa), &len);
    port_ = ntohs(sa.sin_port);
  }

  std::uint16_t port() const noexcept { return port_; }

  Socket accept(int timeout_ms) {
    pollfd p{sock_.fd(), POLLIN, 0};
    int r;
    do {
      r = ::poll(&p, 1, timeout_ms);
    } while (r < 0 && errno == EINTR);
    if (r == 0) throw TransportError("timed out waiting for clients to connect");
    if (r < 0) throw TransportError(std::string("poll failed: ") + std::strerror(errno));
    Socket s(::accept(sock_.fd(), nullptr, nullptr));
    if (!s.valid()) throw TransportError(std::string("accept failed: ") + std::strerror(errno));
    int one = 1;
    ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    return s;
  }

 private:
  Socket sock_;
  std::uint16_t port_ = 0;
};

// Retries until the server accepts or the timeout passes.
inline Socket connect_to(const Address& addr, int timeout_ms) {
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
  const sockaddr_in sa = detail::resolve(addr);
  for (;;) {
    Socket s(::socket(AF_INET, SOCK_STREAM, 0));
    if (!s.valid()) throw TransportError(std::string("socket failed: ") + std::strerror(errno));
    if (::connect(s.fd(), reinterpret_cast<const sockaddr*>(&sa), sizeof sa) == 0) {
      int one = 1;
      ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
      return s;
    }
    const int err = errno;
    if (std::chrono::steady_clock::now() >= deadline) {
      throw TransportError("cannot connect to " + addr.str() + ": " + std::strerror(err));
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
}

// Server side of a federation: waits for `expected_clients` distinct client
// ids, then acts as a barrier each round. A connection announcing an id that
// is already registered is closed.
class TcpServerTransport : public RoundTransport {
 public:
  TcpServerTransport(TcpListener& listener, std::size_t expected_clients, std::size_t updates_per_client = 1,
                     int timeout_ms = kDefaultTimeoutMs)
      : listener_(listener), expected_(expected_clients), per_client_(updates_per_client), timeout_ms_(timeout_ms) {
    if (expected_ < 1) throw ConfigError("server needs at least one expected client");
    if (per_client_ < 1) throw ConfigError("updates per client must be >= 1");
  }

  std::size_t rejected() const noexcept { return rejected_; }

  std::vector<AdapterUpdate> collect(std::uint32_t round, const GlobalModel&) override {
    std::vector<AdapterUpdate> out;
    std::map<std::uint32_t, AdapterUpdate> first;
    if (clients_.empty()) {
      while (clients_.size() < expected_) {
        Socket s = listener_.accept(timeout_ms_);
        AdapterUpdate u = decode_update(recv_frame(s, timeout_ms_));
        if (clients_.count(u.client_id)) {
          ++rejected_;
          continue;  // duplicate id: the socket closes on scope exit
        }
        check_round(u, round);
        const std::uint32_t id = u.client_id;
        first.emplace(id, std::move(u));
        clients_.emplace(id, std::move(s));
      }
    }
    for (auto& [id, sock] : clients_) {
      std::size_t need = per_client_;
      if (auto it = first.find(id); it != first.end()) {
        out.push_back(std::move(it->second));
        --need;
      }
      for (std::size_t k = 0; k < need; ++k) {
        AdapterUpdate u = decode_update(recv_frame(sock, timeout_ms_));
        if (u.client_id != id) {
          throw ProtocolError("connection of client " + std::to_string(id) + " sent client_id " +
                              std::to_string(u.client_id));
        }
        check_round(u, round);
        out.push_back(std::move(u));
      }
    }
    return out;
  }

  void broadcast(std::uint32_t round, const std::vector<NamedEntry>& aggregate) override {
    const auto bytes = encode_message({MessageType::aggregate, round, 0, 0, aggregate});
    for (auto& [id, sock] : clients_) send_frame(sock, bytes);
  }

  void finish(std::uint32_t round) override {
    const auto bytes = encode_message({MessageType::done, round, 0, 0, {}});
    for (auto& [id, sock] : clients_) send_frame(sock, bytes);
  }

 private:
  static void check_round(const AdapterUpdate& u, std::uint32_t round) {
    if (u.round != round) {
      throw ProtocolError("client " + std::to_string(u.client_id) + " sent an update for round " +
                          std::to_string(u.round) + " during round " + std::to_string(round) + " (stale round)");
    }
  }

  TcpListener& listener_;
  std::size_t expected_;
  std::size_t per_client_;
  int timeout_ms_;
  std::map<std::uint32_t, Socket> clients_;
  std::size_t rejected_ = 0;
};

// Client side: trains each round on a local replica of the global model,
// sends its updates and applies the aggregate the server returns. Returns the
// number of completed rounds; received aggregates are appended to
// `aggregates_out` when given.
inline std::uint32_t participate_tcp(const Address& server, const TransformerWeights& vanilla,
                                     const ClientSpec& client, const LoraConfig& config, const TrainHyper& hyper,
                                     const FedConfig& fc, int timeout_ms = kDefaultTimeoutMs,
                                     std::vector<std::vector<NamedEntry>>* aggregates_out = nullptr) {
  Socket sock = connect_to(server, timeout_ms);
  GlobalModel global(vanilla, config, fc.continue_adapters);
  FedConfig local = fc;
  local.jobs = 1;
  for (std::uint32_t t = 1;; ++t) {
    std::vector<AdapterUpdate> updates(client.jobs.size());
    parallel_for(client.jobs.size(), fc.jobs,
                 [&](std::size_t j) { updates[j] = client_train_round(global, client, j, hyper, local, t); });
    for (const auto& u : updates) send_frame(sock, encode_update(u));
    WireMessage reply = decode_message(recv_frame(sock, timeout_ms));
    if (reply.type == MessageType::done) return t - 1;
    if (reply.type != MessageType::aggregate || reply.round != t) {
      throw ProtocolError("expected aggregate for round " + std::to_string(t) + ", got " + to_string(reply.type) +
                          " for round " + std::to_string(reply.round));
    }
    global.advance(reply.entries);
    if (aggregates_out) aggregates_out->push_back(std::move(reply.entries));
    if (t >= fc.rounds) {
      WireMessage done = decode_message(recv_frame(sock, timeout_ms));
      if (done.type != MessageType::done) throw ProtocolError("expected done after the final round");
      return t;
    }
  }
}

// Rebuilds a federation's round models and history from its aggregates, as a
// client sees them.
inline FederationResult replay_federation(const TransformerWeights& vanilla, const LoraConfig& config,
                                          const FedConfig& fc, std::vector<std::vector<NamedEntry>> aggregates,
                                          const Evaluator& evaluate) {
  GlobalModel global(vanilla, config, fc.continue_adapters);
  FederationResult out;
  out.models.push_back(vanilla);
  out.records.push_back({0, evaluate(vanilla, 0), ""});
  for (std::uint32_t t = 1; t <= aggregates.size(); ++t) {
    global.advance(aggregates[t - 1]);
    out.records.push_back({t, evaluate(global.current(), t), ""});
    out.models.push_back(global.current());
  }
  out.aggregates = std::move(aggregates);
  return out;
}

inline std::size_t updates_per_client(const std::vector<ClientSpec>& clients) {
  if (clients.empty()) throw InputError("federation has no clients");
  const std::size_t n = clients.front().jobs.size();
  for (const auto& c : clients) {
    if (c.jobs.size() != n) throw ConfigError("socket federation needs the same job count on every client");
  }
  return n;
}

// Server over a listener; the clients are remote.
inline FederationResult serve_federation(TcpListener& listener, const TransformerWeights& vanilla,
                                         std::size_t n_clients, std::size_t per_client, const LoraConfig& config,
                                         const FedConfig& fc, const Evaluator& evaluate,
                                         int timeout_ms = kDefaultTimeoutMs) {
  TcpServerTransport transport(listener, n_clients, per_client, timeout_ms);
  return run_federation(vanilla, config, fc, transport, evaluate);
}

// Server plus one thread per client over loopback sockets.
inline FederationResult run_federation_loopback(const TransformerWeights& vanilla,
                                                const std::vector<ClientSpec>& clients, const LoraConfig& config,
                                                const TrainHyper& hyper, const FedConfig& fc,
                                                const Evaluator& evaluate, int timeout_ms = kDefaultTimeoutMs) {
  const std::size_t per_client = updates_per_client(clients);
  TcpListener listener(Address{"127.0.0.1", 0});
  const Address addr{"127.0.0.1", listener.port()};
  std::vector<std::exception_ptr> errors(clients.size());
  std::vector<std::thread> threads;
  FedConfig client_fc = fc;
  client_fc.jobs = 1;
  for (std::size_t i = 0; i < clients.size(); ++i) {
    threads.emplace_back([&, i] {
      try {
        participate_tcp(addr, vanilla, clients[i], config, hyper, client_fc, timeout_ms);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    });
  }
  FederationResult result;
  std::exception_ptr server_error;
  try {
    result = serve_federation(listener, vanilla, clients.size(), per_client, config, fc, evaluate, timeout_ms);
  } catch (...) {
    server_error = std::current_exception();
  }
  for (auto& t : threads) t.join();
  if (server_error) std::rethrow_exception(server_error);
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return result;
}

}  // namespace fedreview
